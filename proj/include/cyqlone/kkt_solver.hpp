#pragma once

#include <cyqlone/block_tridiag.hpp>
#include <cyqlone/kernels.hpp>
#include <cyqlone/ocp.hpp>

#include <optional>

namespace cyqlone::kkt {

using batla::BatchMatrix;
using batla::index_t;
using batla::real_t;
using ocp::EqOCP;
using ocp::EqRhs;
using ocp::EqSolution;
using ocp::Mat;
using ocp::Vec;

/// 2-adic valuation with the wrap convention nu2(0, P) = nu2(P).
index_t nu2(index_t i, index_t P);

/// Rounds the horizon up to the next multiple of P; padding stages get
/// identity costs and zero dynamics, so the restriction of the padded
/// solution to the original stages solves the original problem.
EqOCP pad_problem(const EqOCP &p, index_t P);

/// Partition of the (padded) horizon into P intervals of n_per stages.
/// Column c owns stages {n_per (c-1) + 1, ..., n_per c} reduced modulo
/// N_pad, traversed in reverse by position s = 0 .. n_per-1.
struct Partition {
    index_t P = 1, n_per = 0, N_pad = 0;

    index_t stage_of(index_t c, index_t s) const {
        index_t j = n_per * c - s;
        return ((j % N_pad) + N_pad) % N_pad;
    }
    /// Index of the state variable bundled with stage j (x^N for j = 0).
    index_t x_index_of(index_t c, index_t s) const {
        index_t j = stage_of(c, s);
        return j == 0 ? N_pad : j;
    }
};

enum class Tail { cr1, pcr, pcg };

struct FactorOptions {
    index_t P       = 1;
    index_t vlen    = 4;
    index_t workers = 1;
    Tail tail       = Tail::cr1;
    real_t pcg_tol  = 1e-12;
    index_t pcg_max_iter = 50;
    /// update-vs-refactor threshold: refactor when the accumulated update
    /// rank reaches rho * nx
    real_t rho = 0.5;
};

/// Per-phase multiply-add counts of one factorization, critical-path
/// semantics (max over parallel work items per phase).
struct FlopTrace {
    std::uint64_t riccati = 0, schur = 0, cr = 0;
    std::uint64_t total() const { return riccati + schur + cr; }
};

/// All blocks of the block Cholesky factor of the permuted KKT matrix:
/// per-interval Riccati blocks, coupling blocks, and the cyclic-reduction
/// factor of the Schur complement with the selected tail.
struct Factor {
    FactorOptions opts;
    Partition part;
    index_t nx = 0, nu = 0, N_orig = 0;

    // packed problem data, batched over columns (lane c = column c);
    // index s = stage position within the interval
    std::vector<BatchMatrix> H;   ///< stage Hessians [[R,S],[S',Q]], nux^2
    std::vector<BatchMatrix> BA;  ///< [B A], nx-by-nux
    std::vector<BatchMatrix> BAt; ///< [B' ; A'], nux-by-nx

    // Riccati factor blocks (views into LH give L_R, L_S, L_Q)
    std::vector<BatchMatrix> LH;  ///< lower Cholesky of the updated Hessians
    std::vector<BatchMatrix> LB;  ///< nx-by-nu coupling blocks
    std::vector<BatchMatrix> Acl; ///< stabilized dynamics
    BatchMatrix LA;               ///< first-stage coupling block, per column
    BatchMatrix T;                ///< L_Q(first stage)^{-T}, upper triangular

    // per-column Schur complement contributions (kept for reassembly after
    // column refactors during updates)
    BatchMatrix sc_Mfwd; ///< sum L_B L_B' + L_A L_A'
    BatchMatrix sc_Mbwd; ///< T T'
    BatchMatrix sc_W;    ///< T L_A'

    // Schur complement and its cyclic-reduction factor
    blocktri::BlockTridiag schur;  ///< assembled level-0 system
    blocktri::CRFactor schur_cr;   ///< CR levels above the tail
    index_t tail_size = 1;         ///< remaining blocks at the tail handoff
    blocktri::BlockTridiag tail_sys;
    std::optional<blocktri::PCRFactor> tail_pcr;
    std::optional<blocktri::Preconditioner> tail_prec;
    mutable std::optional<blocktri::CRFactor> tail_cr1; ///< pcg fallback

    // solve-time bookkeeping
    mutable index_t pcg_tail_iterations = 0;
    mutable index_t pcg_tail_fallbacks  = 0;

    // lane-level accessors used by the per-column code
    batla::View lr(index_t s, index_t c) {
        return LH[static_cast<std::size_t>(s)].lane(c).block(0, 0, nu, nu);
    }
    batla::View ls(index_t s, index_t c) {
        return LH[static_cast<std::size_t>(s)].lane(c).block(nu, 0, nx, nu);
    }
    batla::View lq(index_t s, index_t c) {
        return LH[static_cast<std::size_t>(s)].lane(c).block(nu, nu, nx, nx);
    }
};

/// Factorizes the KKT system of the (padded) problem. A_0 and S_0 do not
/// enter the factorization (the initial state is eliminated).
Factor factor(const EqOCP &p, const FactorOptions &opts,
              FlopTrace *trace = nullptr);

/// Solves with the given right-hand side (EqRhs convention); rhs entries for
/// padding stages are treated as zero.
EqSolution solve(const Factor &f, const EqOCP &p, const EqRhs &rhs);
/// Factor + solve of the problem's own optimality system.
EqSolution solve_problem(const EqOCP &p, const FactorOptions &opts,
                         Factor *factor_out = nullptr);

/// Diagonal penalty change per stage; entries of known sign, zero where the
/// active set did not change. `terminal` applies to the terminal constraint
/// rows C_N.
struct SigmaDelta {
    std::vector<Vec> stage; ///< size N, length ny each
    Vec terminal;           ///< length ny_term

    index_t total_rank() const;
};

/// Per-stage active-set bookkeeping helper:
/// delta[i] = +sigma_i for newly active rows, -sigma_i for newly inactive.
Vec active_set_delta(const std::vector<bool> &prev,
                     const std::vector<bool> &now, const Vec &sigma);

struct UpdateReport {
    index_t columns_updated    = 0;
    index_t columns_refactored = 0;
    bool schur_refactored      = false;
    index_t schur_levels_updated = 0;
};

/// Low-rank factorization update: the factor afterwards equals (up to
/// roundoff) a fresh factorization of the problem with stage Hessians
///   H_j + (D_j | C_j)' dSigma_j (D_j | C_j),
/// using hyperbolic Householder transformations level by level. Columns or
/// levels whose accumulated rank reaches rho*nx, and any hyperbolic
/// breakdown, fall back to refactorization. `p_new` must carry the updated
/// Hessians (it is consulted on the fallback paths).
UpdateReport update(Factor &f, const EqOCP &p_new, const std::vector<Mat> &C,
                    const std::vector<Mat> &D, const Mat &C_term,
                    const SigmaDelta &ds);

/// Critical-path FLOP model of the factorization and the serial
/// factorized-Riccati baseline.
struct FlopModel {
    real_t riccati = 0; ///< per-interval Riccati recursion term
    real_t schur   = 0; ///< Schur complement evaluation term
    real_t cr      = 0; ///< cyclic reduction term
    real_t total   = 0;
    real_t serial  = 0; ///< serial factorized Riccati recursion
    real_t speedup = 0; ///< serial / total
};

/// Evaluates the model; P must be a power of two dividing N.
FlopModel flops_critical_path(index_t nx, index_t nu, index_t N, index_t P);

} // namespace cyqlone::kkt
