#pragma once

#include <cyqlone/batch_matrix.hpp>

#include <vector>

namespace cyqlone::qpalm {

using batla::index_t;
using batla::real_t;

/// One stored breakpoint of the piecewise-linear derivative: position t and
/// weight w = delta * |delta| (the sign of w encodes the slope direction).
struct Breakpoint {
    real_t t;
    real_t w;
};

/// Piecewise-quadratic merit derivative
///   psi'(tau) = eta tau + beta + <delta, [delta tau - alpha]_+>
/// after preprocessing: non-finite breakpoints are removed, negative ones
/// are folded into (eta, beta), so all stored t are positive.
struct LineSearchData {
    real_t eta  = 0;
    real_t beta = 0;
    std::vector<Breakpoint> pts;
    index_t fence_lo = 0; ///< current bracket segment [fence_lo, fence_hi)
    index_t fence_hi = 0;

    /// Registers one constraint term with raw (alpha, delta) of Eq-style
    /// psi' += delta [delta tau - alpha]_+.
    void add_term(real_t alpha, real_t delta);
    /// Call once after all add_term calls: folds w<0 contributions active at
    /// tau = 0 into (eta, beta) and resets the fences.
    void finalize();
};

/// Direct full-sum evaluation of psi'(t) over the stored breakpoints.
real_t psi_prime_at(const LineSearchData &ls, real_t t);
/// psi(t) - psi(0), for optimality checks on a grid.
real_t psi_delta_at(const LineSearchData &ls, real_t t);

/// Amortized evaluator: keeps the running (eta(t), beta(t)) coefficients and
/// updates them with the breakpoints crossed since the previous query.
class PsiPrimeIncremental {
  public:
    explicit PsiPrimeIncremental(const LineSearchData &ls);
    real_t operator()(real_t t);

  private:
    std::vector<Breakpoint> sorted_;
    real_t eta_, beta_, ref_ = 0;
    index_t pos_ = 0; ///< breakpoints with index < pos_ are folded in
};

struct PartitionSums {
    index_t mid  = 0; ///< first index of the >= pivot part
    real_t sum_w = 0; ///< sum of w over the moved (< pivot) part
    real_t sum_tw = 0;
};

/// Partitions the bracket segment [fence_lo, fence_hi) by t < pivot and
/// returns the partial sums needed for the incremental coefficient update.
PartitionSums partition_breakpoints(LineSearchData &ls, real_t pivot);

struct LineSearchResult {
    real_t tau       = 0;
    index_t iterations = 0; ///< bisection pivots examined
};

/// Exact minimizer of the piecewise-quadratic merit function along the
/// direction: the root of psi'. Requires psi'(0) < 0 (descent direction);
/// psi'(0) == 0 returns tau = 0. Throws std::invalid_argument otherwise.
LineSearchResult line_search_exact(LineSearchData &ls);

} // namespace cyqlone::qpalm
