#pragma once

#include <cyqlone/batch_matrix.hpp>

#include <optional>
#include <span>

namespace cyqlone::batla {

/// Thrown when a factorization pivot falls below the pivot floor.
struct factorize_error : std::runtime_error {
    index_t batch_index;
    index_t pivot;
    factorize_error(const std::string &what, index_t j, index_t k)
        : std::runtime_error(what), batch_index(j), pivot(k) {}
};

/// Thrown when a hyperbolic rotation would flip the sign of a pivot norm.
/// Callers treat this as "updated matrix not factorizable with the same
/// signature" and fall back to refactorization.
struct hyh_breakdown : std::runtime_error {
    index_t batch_index;
    index_t column;
    hyh_breakdown(const std::string &what, index_t j, index_t k)
        : std::runtime_error(what), batch_index(j), column(k) {}
};

namespace flops {
/// Multiply-add count of all kernel work since the last reset (FMA = 1).
std::uint64_t total();
void reset();
void add(std::uint64_t n);
} // namespace flops

// ---------------------------------------------------------------------------
// View kernels. All operate lane-wise: lane l of every operand belongs to the
// same logical matrix, and no information flows between lanes. Triangular
// operands are read only in their declared triangle.
// ---------------------------------------------------------------------------

/// In-place Cholesky of the lower triangle: A = L Lᵀ. The strict upper
/// triangle is not referenced. Fails when a pivot magnitude drops below
/// 1e-14 times the largest diagonal magnitude of that lane.
/// `lane0` offsets the batch index reported by factorize_error.
void potrf(View a, index_t lane0 = 0);

/// Signed variant: A = L D Lᵀ with D = diag(±1) and diag(L) > 0.
/// One signature per lane is written to `sig[l]`.
void potrf_signed(View a, Signature *sig, index_t lane0 = 0);

enum class TrsmMode {
    right_lower_trans, ///< solve X Lᵀ = B
    left_lower,        ///< solve L X = B
    left_lower_trans,  ///< solve Lᵀ X = B
};

/// In-place triangular solve against lower-triangular l.
void trsm(View b, CView l, TrsmMode mode, index_t lane0 = 0);

/// C += alpha * A Aᵀ, lower triangle only. C must be square.
void syrk(View c, CView a, int alpha);

/// C += alpha * op(A) op(B).
void gemm(View c, CView a, bool trans_a, CView b, bool trans_b, int alpha);

enum class TrmmMode {
    right_lower,      ///< X = A L
    left_upper,       ///< X = U A
    left_upper_trans, ///< X = Uᵀ A
    left_lower,       ///< X = L A
    left_lower_trans, ///< X = Lᵀ A
};

/// Out-of-place triangular multiply, X = alpha * (triangular product).
/// The triangular operand is `t`; `a` is the general operand.
void trmm(View x, CView a, CView t, TrmmMode mode, int alpha = 1);

/// In-place inverse of a lower-triangular matrix.
void trtri(View l, index_t lane0 = 0);

/// C = lower triangle of T Tᵀ for upper-triangular T.
void trsyrk(View c, CView t);

/// X = Aᵀ (out of place).
void transpose(View x, CView a);

void copy(View dst, CView src);
void set_zero(View a);
void set_identity(View a);
/// dst += alpha * src
void add_scaled(View dst, CView src, real_t alpha = 1);

// ---------------------------------------------------------------------------
// Hyperbolic Householder transform, built from rank-1 (hyperbolic) rotations.
// Given a pair (F | G) where the np leading rows of F are a triangular pivot
// block with metric d = ±1 per column batch, and G carries signed update
// columns, computes (F̃ | 0) with
//     F̃ d F̃ᵀ = F d Fᵀ + G S Gᵀ     (S = diag(signs))
// on the annihilated rows, and records a handle that applies the same
// column mixing to trailing row blocks.
// ---------------------------------------------------------------------------

struct HyhHandle {
    index_t n_pivots = 0; ///< columns of F touched (= rows annihilated)
    index_t n_update = 0; ///< columns of G
    index_t lanes    = 0;
    // rotation r (pivot p, update column k) stored at r = k*n_pivots + p:
    // hyperbolic (ch, sh) when kind=1, Givens (c, s) when kind=0.
    std::vector<real_t> c, s;
    std::vector<std::int8_t> kind;
    real_t &cc(index_t rot, index_t l) { return c[rot * lanes + l]; }
    real_t &ss(index_t rot, index_t l) { return s[rot * lanes + l]; }
    real_t cc(index_t rot, index_t l) const { return c[rot * lanes + l]; }
    real_t ss(index_t rot, index_t l) const { return s[rot * lanes + l]; }
};

/// One row block of the transformed pair (F | G). All pairs of a transform
/// share column counts; rows may differ per pair.
struct HyhPair {
    View f;
    View g;
};

/// Annihilates rows 0..np-1 of G against the triangular pivot block in the
/// leading np columns/rows of F, where (F | G) is stacked from the given row
/// blocks (pivots live in pairs[0]). `df` holds the signature of F's pivot
/// columns, `signs` that of G's columns; the transform preserves
/// F diag(df) Fᵀ + G diag(signs) Gᵀ. Throws hyh_breakdown when a rotation
/// cannot preserve the metric (the caller then refactorizes).
void hyh_transform(std::span<const HyhPair> pairs, const Signature &df,
                   const Signature &signs, index_t np,
                   HyhHandle *handle = nullptr, index_t lane0 = 0);

/// Re-applies a recorded transform to other row blocks.
void hyh_apply(const HyhHandle &h, std::span<const HyhPair> pairs);

/// Whole-batch convenience: transforms (F | G) in place, one handle per
/// storage group. G's annihilated rows are zeroed exactly.
std::vector<HyhHandle> hyh_transform_batch(BatchMatrix &f, BatchMatrix &g,
                                           const Signature &df,
                                           const Signature &sg, index_t np);

// ---------------------------------------------------------------------------
// Whole-batch convenience wrappers (the spec-level operation surface).
// These iterate storage groups and run the view kernels on active lanes.
// ---------------------------------------------------------------------------

BatchMatrix potrf_batch(const BatchMatrix &a);
BatchMatrix potrf_batch_signed(const BatchMatrix &a,
                               std::vector<Signature> &sig_out);
BatchMatrix trsm_batch(const BatchMatrix &b, const BatchMatrix &l,
                       TrsmMode mode);
BatchMatrix syrk_batch(const BatchMatrix &c, const BatchMatrix &a, int alpha,
                       bool fuse_potrf = false);
BatchMatrix gemm_batch(const BatchMatrix &c, const BatchMatrix &a,
                       const BatchMatrix &b, bool trans_a, bool trans_b,
                       int alpha);
BatchMatrix trmm_batch(const BatchMatrix &a, const BatchMatrix &t,
                       TrmmMode mode = TrmmMode::right_lower, int alpha = 1);
BatchMatrix trtri_batch(const BatchMatrix &l);
BatchMatrix trsyrk_batch(const BatchMatrix &u);

} // namespace cyqlone::batla
