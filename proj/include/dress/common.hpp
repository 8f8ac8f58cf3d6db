#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dress {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Error taxonomy
// ---------------------------------------------------------------------------

/// Precondition or argument-contract violation.
struct ContractViolation : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A linear system required by an estimator is numerically singular.
struct SingularSystem : std::runtime_error {
    double condition;
    explicit SingularSystem(const std::string& what, double cond = 0.0)
        : std::runtime_error(what), condition(cond) {}
};

/// An iterative solver did not reach tolerance within its iteration budget.
struct NonConvergence : std::runtime_error {
    double last_residual;
    explicit NonConvergence(const std::string& what, double resid)
        : std::runtime_error(what), last_residual(resid) {}
};

/// Iterates escaped to infinity (e.g. separable logistic data).
struct Divergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A matrix that must be row full rank is rank deficient.
struct RankDeficient : std::runtime_error {
    int numerical_rank;
    explicit RankDeficient(const std::string& what, int rank)
        : std::runtime_error(what), numerical_rank(rank) {}
};

/// A statistical test cannot be computed (zero variance etc.).
struct DegenerateTest : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Input data could not be ingested.
struct IngestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Too many Monte Carlo replications failed.
struct ExperimentUnstable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// RNG
// ---------------------------------------------------------------------------

/// splitmix64 finalizer; used to derive independent per-task seeds from a
/// (run seed, task index) pair so replications are order-insensitive.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic random stream. Normal draws use Box-Muller on top of
/// mt19937_64 so the byte-level output stream does not depend on the
/// standard library's distribution internals.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t seed, std::uint64_t index) : engine_(mix_seed(seed, index)) {}

    /// Uniform on [0, 1).
    double uniform() {
        return (engine_() >> 11) * 0x1.0p-53;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    Vector normal_vector(Eigen::Index n) {
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return engine_() % n;
    }

    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace dress
