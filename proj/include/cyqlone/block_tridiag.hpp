#pragma once

#include <cyqlone/batch_matrix.hpp>
#include <cyqlone/kernels.hpp>

#include <memory>
#include <span>

namespace cyqlone::blocktri {

using batla::BatchMatrix;
using batla::index_t;
using batla::real_t;

/// Symmetric block-tridiagonal matrix with N diagonal blocks M_k (n-by-n,
/// symmetric, lower triangle authoritative) and subdiagonal blocks K_k
/// coupling block rows k and k+1. With the circular flag, K_{N-1} couples
/// block rows N-1 and 0.
struct BlockTridiag {
    index_t n_blocks = 0;
    index_t block_dim = 0;
    bool circular = false;
    BatchMatrix diag;    ///< batch of N blocks
    BatchMatrix subdiag; ///< batch of N blocks; entry N-1 used only if circular

    BlockTridiag() = default;
    BlockTridiag(index_t N, index_t n, index_t vlen = 1, bool circ = false)
        : n_blocks(N), block_dim(n), circular(circ),
          diag(n, n, N, vlen, batla::MatKind::symmetric_lower),
          subdiag(n, n, N, vlen, batla::MatKind::general) {}

    index_t dim() const { return n_blocks * block_dim; }

    /// y = M x on stacked vectors of length N*n.
    void multiply(std::span<const real_t> x, std::span<real_t> y) const;
};

/// Factor of the serial block Cholesky (no fill-in).
struct SerialCholFactor {
    index_t n_blocks = 0, block_dim = 0;
    BatchMatrix diag;    ///< L_k, lower triangular
    BatchMatrix subdiag; ///< L_{k+1,k}

    void solve(std::span<real_t> x) const;
};

/// M = L Lᵀ with block-bidiagonal L. Throws batla::factorize_error with the
/// failing block index on pivot failure. Requires circular == false.
SerialCholFactor chol_factor_serial(const BlockTridiag &m,
                                    index_t workers = 1);

/// Cyclic-reduction factor: the block Cholesky factor of the matrix permuted
/// by increasing 2-adic valuation. Level l eliminates the odd block rows of
/// the level-l reduced system; each elimination creates one block of
/// fill-in. Intermediate reduced systems are kept for reuse.
struct CRFactor {
    index_t n_blocks = 0, block_dim = 0;
    bool circular = false;
    index_t n_levels = 0; ///< ceil(log2 N) + 1 (last level = base case)
    /// Per level l < n_levels-1: blocks indexed by the level-l odd slot
    /// m = 0..size_l/2-1, original index 2^l (2m+1).
    std::vector<BatchMatrix> L;   ///< chol of eliminated diagonal blocks
    std::vector<BatchMatrix> U;   ///< K^(l)ᵀ_{k-2^l} L_k⁻ᵀ
    std::vector<BatchMatrix> Y;   ///< K^(l)_{k} L_k⁻ᵀ (zero at the boundary)
    /// Reduced systems: level 0 is a copy of the input; level l has
    /// N/2^l blocks. Kept for resolves and factorization updates.
    std::vector<BatchMatrix> M_lvl;
    std::vector<BatchMatrix> K_lvl;
    BatchMatrix L_base; ///< chol of the final reduced system (1 block, or
                        ///< 2n-by-2n dense when circular)

    index_t level_size(index_t l) const { return n_blocks >> l; }
    void resolve(std::span<real_t> x, index_t workers = 1) const;
    /// Forward substitution only (x <- L⁻¹ P x in the permuted ordering,
    /// stored back in natural block positions).
    void forward(std::span<real_t> x, index_t workers = 1) const;
    /// Back substitution only.
    void backward(std::span<real_t> x, index_t workers = 1) const;
};

/// Factorizes by cyclic reduction and solves M x = b. N must be a power of
/// two. `levels` limits the recursion (factor down to N/2^levels blocks);
/// by default runs to the base case.
CRFactor cr_factor(const BlockTridiag &m, index_t workers = 1,
                   index_t max_levels = -1);

/// Recomputes the factor from level `from` onward, starting from the stored
/// reduced system M_lvl[from], K_lvl[from] (which the caller may have
/// modified in place).
void cr_refactor_from(CRFactor &f, index_t from, index_t workers = 1);
std::vector<real_t> cr_factor_solve(const BlockTridiag &m,
                                    std::span<const real_t> b,
                                    CRFactor &factor_out,
                                    index_t workers = 1);
std::vector<real_t> cr_resolve(const CRFactor &f, std::span<const real_t> b,
                               index_t workers = 1);

/// Parallel cyclic reduction: every level processes all N block rows,
/// keeping full width; no back substitution is needed.
struct PCRFactor {
    index_t n_blocks = 0, block_dim = 0, n_levels = 0;
    std::vector<BatchMatrix> L; ///< per level, all N blocks
    std::vector<BatchMatrix> U;
    std::vector<BatchMatrix> Y;
    void resolve(std::span<real_t> x, index_t workers = 1) const;
};

PCRFactor pcr_factor(const BlockTridiag &m, index_t workers = 1);
std::vector<real_t> pcr_solve(const BlockTridiag &m, std::span<const real_t> b,
                              PCRFactor *factor_out = nullptr,
                              index_t workers = 1);

/// Preconditioner handle for PCG.
struct Preconditioner {
    enum class Kind { jacobi, stair };
    Kind kind = Kind::jacobi;
    index_t n_blocks = 0, block_dim = 0;
    BatchMatrix L; ///< chol of the diagonal blocks
    const BlockTridiag *coupling = nullptr; ///< for stair: off-diagonal part

    void apply(std::span<const real_t> r, std::span<real_t> z) const;
};

/// Block-Jacobi: z = (L Lᵀ)⁻¹ r with block-diagonal L.
Preconditioner jacobi_precond_build(const BlockTridiag &m);
/// Symmetric stair preconditioner: z = J (r - K J r) with J = L⁻ᵀ L⁻¹.
/// The handle keeps a reference to m for the coupling blocks.
Preconditioner stair_precond_build(const BlockTridiag &m);
/// Default choice: block-Jacobi when the off-diagonal Frobenius mass is
/// below 0.1 of the diagonal mass, stair otherwise.
Preconditioner auto_precond_build(const BlockTridiag &m);

struct PcgResult {
    std::vector<real_t> x;
    index_t iterations = 0;
    bool converged = false;
    real_t rel_residual = 0;
};

/// Preconditioned conjugate gradients on M x = b, relative residual
/// tolerance. Throws on curvature breakdown (pᵀ M p <= 0).
PcgResult pcg_solve(const BlockTridiag &m, std::span<const real_t> b,
                    const Preconditioner &prec, real_t tol, index_t max_iter);

} // namespace cyqlone::blocktri
