#pragma once

#include "dress/common.hpp"
#include "dress/model.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

namespace dress {

struct TabularDataset {
    Matrix features;  // n_total x d
    Eigen::VectorXi labels;
    std::vector<std::string> feature_names;
    int rejected_rows = 0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        // trim surrounding whitespace and quotes
        auto b = cell.find_first_not_of(" \t\r\"");
        auto e = cell.find_last_not_of(" \t\r\"");
        cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    return cells;
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

}  // namespace detail

/// Load a numeric CSV with a binary label column. label_column < 0 means the
/// last column. Labels equal to positive_label (string compare, or numeric
/// equality for numeric labels) map to 1, everything else must equal one
/// other value which maps to 0. An optional header row is detected by
/// non-numeric feature cells in the first line.
inline TabularDataset load_csv(const std::string& path, int label_column = -1,
                               const std::string& positive_label = "1") {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open file: " + path);

    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos)
            lines.push_back(line);
    }
    if (lines.empty()) throw IngestError("empty file: " + path);

    auto first = detail::split_csv_line(lines.front());
    const int ncols = static_cast<int>(first.size());
    if (ncols < 2) throw IngestError("need at least one feature column and a label column");
    const int lcol = label_column < 0 ? ncols - 1 : label_column;
    if (lcol >= ncols) throw IngestError("label column out of range");

    TabularDataset ds;
    std::size_t start = 0;
    bool header = true;
    for (int c = 0; c < ncols; ++c) {
        double v;
        if (c != lcol && detail::parse_double(first[c], v)) header = false;
    }
    if (header) {
        for (int c = 0; c < ncols; ++c)
            if (c != lcol) ds.feature_names.push_back(first[c]);
        start = 1;
    } else {
        for (int c = 0; c < ncols; ++c)
            if (c != lcol) ds.feature_names.push_back("f" + std::to_string(c));
    }

    std::vector<Vector> rows;
    std::vector<int> labels;
    std::string negative_label;
    for (std::size_t li = start; li < lines.size(); ++li) {
        const auto cells = detail::split_csv_line(lines[li]);
        if (static_cast<int>(cells.size()) != ncols) {
            ++ds.rejected_rows;
            continue;
        }
        Vector row(ncols - 1);
        int k = 0;
        bool bad = false;
        for (int c = 0; c < ncols && !bad; ++c) {
            if (c == lcol) continue;
            double v;
            if (!detail::parse_double(cells[c], v)) {
                std::ostringstream msg;
                msg << "non-numeric cell at line " << (li + 1) << ", column " << (c + 1)
                    << ": '" << cells[c] << "'";
                throw IngestError(msg.str());
            }
            row[k++] = v;
        }
        const std::string& lab = cells[lcol];
        int y;
        double lv, pv;
        const bool numeric = detail::parse_double(lab, lv) &&
                             detail::parse_double(positive_label, pv);
        if ((numeric && lv == pv) || lab == positive_label) {
            y = 1;
        } else {
            if (negative_label.empty()) negative_label = lab;
            if (lab != negative_label) {
                std::ostringstream msg;
                msg << "unknown label value '" << lab << "' at line " << (li + 1)
                    << " (expected '" << positive_label << "' or '" << negative_label << "')";
                throw IngestError(msg.str());
            }
            y = 0;
        }
        rows.push_back(std::move(row));
        labels.push_back(y);
    }
    if (rows.empty()) throw IngestError("no data rows in " + path);

    ds.features.resize(static_cast<Eigen::Index>(rows.size()), ncols - 1);
    ds.labels.resize(static_cast<Eigen::Index>(labels.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        ds.features.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
        ds.labels[static_cast<Eigen::Index>(i)] = labels[i];
    }
    return ds;
}

struct SslSplit {
    Dataset labeled;
    std::vector<Vector> unlabeled_x;
    Dataset test;
    Vector feature_mean;  // standardization fit on labeled + unlabeled covariates
    Vector feature_sd;
};

/// Disjoint uniform random split into n labeled, nprime unlabeled (labels
/// discarded) and the remainder as test. Features are truncated to the first
/// D columns and standardized with moments from the labeled + unlabeled
/// covariates only.
inline SslSplit split_ssl(const TabularDataset& ds, int n, int nprime, int D,
                          std::uint64_t seed) {
    const int total = static_cast<int>(ds.features.rows());
    const int d = static_cast<int>(ds.features.cols());
    if (n < 1 || nprime < 1) throw ContractViolation("n and nprime must be >= 1");
    if (n + nprime > total) throw ContractViolation("n + nprime exceeds dataset size");
    if (D < 1 || D > d) throw ContractViolation("feature prefix D out of range");

    std::vector<int> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng.engine());

    SslSplit split;
    Matrix train_x(n + nprime, D);
    for (int i = 0; i < n + nprime; ++i)
        train_x.row(i) = ds.features.row(idx[i]).head(D);
    split.feature_mean = train_x.colwise().mean().transpose();
    Vector var = (train_x.rowwise() - split.feature_mean.transpose())
                     .array()
                     .square()
                     .colwise()
                     .mean()
                     .transpose();
    split.feature_sd = var.array().sqrt();
    for (int c = 0; c < D; ++c)
        if (split.feature_sd[c] <= 0.0) split.feature_sd[c] = 1.0;  // constant column

    auto standardize = [&split, &ds, D](int row) -> Vector {
        Vector x = ds.features.row(row).head(D).transpose();
        return ((x - split.feature_mean).array() / split.feature_sd.array()).matrix();
    };

    for (int i = 0; i < n; ++i)
        split.labeled.samples.push_back(
            {standardize(idx[i]), static_cast<double>(ds.labels[idx[i]])});
    for (int i = n; i < n + nprime; ++i)
        split.unlabeled_x.push_back(standardize(idx[i]));
    for (int i = n + nprime; i < total; ++i)
        split.test.samples.push_back(
            {standardize(idx[i]), static_cast<double>(ds.labels[idx[i]])});
    return split;
}

}  // namespace dress
