#include <cyqlone/kernels.hpp>

#include <atomic>
#include <cmath>

namespace cyqlone::batla {

namespace flops {
namespace {
std::atomic<std::uint64_t> counter{0};
}
std::uint64_t total() { return counter.load(std::memory_order_relaxed); }
void reset() { counter.store(0, std::memory_order_relaxed); }
void add(std::uint64_t n) { counter.fetch_add(n, std::memory_order_relaxed); }
} // namespace flops

namespace {
constexpr real_t pivot_floor_rel = 1e-14;

// Largest diagonal magnitude per lane, used for the relative pivot floor.
void diag_max(CView a, std::vector<real_t> &out) {
    out.assign(static_cast<std::size_t>(a.lanes), real_t{0});
    index_t nd = std::min(a.rows, a.cols);
    for (index_t d = 0; d < nd; ++d)
        for (index_t l = 0; l < a.lanes; ++l)
            out[static_cast<std::size_t>(l)] =
                std::max(out[static_cast<std::size_t>(l)],
                         std::abs(a(l, d, d)));
}
} // namespace

void potrf(View a, index_t lane0) {
    assert(a.rows == a.cols);
    const index_t n = a.rows;
    std::vector<real_t> dmax;
    diag_max(a, dmax);
    for (index_t k = 0; k < n; ++k) {
        for (index_t l = 0; l < a.lanes; ++l) {
            real_t p = a(l, k, k);
            if (!(p > pivot_floor_rel * dmax[static_cast<std::size_t>(l)]) ||
                !std::isfinite(p))
                throw factorize_error("potrf: pivot failure at batch " +
                                          std::to_string(lane0 + l) +
                                          ", pivot " + std::to_string(k),
                                      lane0 + l, k);
            a(l, k, k) = std::sqrt(p);
        }
        for (index_t i = k + 1; i < n; ++i)
            for (index_t l = 0; l < a.lanes; ++l)
                a(l, i, k) /= a(l, k, k);
        for (index_t j = k + 1; j < n; ++j)
            for (index_t i = j; i < n; ++i)
                for (index_t l = 0; l < a.lanes; ++l)
                    a(l, i, j) -= a(l, i, k) * a(l, j, k);
    }
    flops::add(static_cast<std::uint64_t>(a.lanes) *
               static_cast<std::uint64_t>(n * (n + 1) * (n + 2) / 6));
}

void potrf_signed(View a, Signature *sig, index_t lane0) {
    assert(a.rows == a.cols);
    const index_t n = a.rows;
    std::vector<real_t> dmax;
    diag_max(a, dmax);
    for (index_t l = 0; l < a.lanes; ++l)
        sig[l] = Signature(n);
    // Column k of the running matrix holds l_ik * d_k * l_kk scale; we keep
    // the scaled L directly and track d separately.
    for (index_t k = 0; k < n; ++k) {
        for (index_t l = 0; l < a.lanes; ++l) {
            real_t p = a(l, k, k);
            if (!(std::abs(p) >
                  pivot_floor_rel * dmax[static_cast<std::size_t>(l)]) ||
                !std::isfinite(p))
                throw factorize_error("potrf_signed: pivot failure at batch " +
                                          std::to_string(lane0 + l) +
                                          ", pivot " + std::to_string(k),
                                      lane0 + l, k);
            sig[l][k]  = p > 0 ? +1 : -1;
            a(l, k, k) = std::sqrt(std::abs(p));
        }
        for (index_t i = k + 1; i < n; ++i)
            for (index_t l = 0; l < a.lanes; ++l)
                a(l, i, k) /= sig[l][k] * a(l, k, k);
        for (index_t j = k + 1; j < n; ++j)
            for (index_t i = j; i < n; ++i)
                for (index_t l = 0; l < a.lanes; ++l)
                    a(l, i, j) -=
                        sig[l][k] * a(l, i, k) * a(l, j, k);
    }
    flops::add(static_cast<std::uint64_t>(a.lanes) *
               static_cast<std::uint64_t>(n * (n + 1) * (n + 2) / 6));
}

void trsm(View b, CView l, TrsmMode mode, index_t lane0) {
    assert(l.rows == l.cols);
    assert(l.lanes == b.lanes);
    const index_t n = l.rows;
    for (index_t k = 0; k < n; ++k)
        for (index_t ll = 0; ll < l.lanes; ++ll)
            if (l(ll, k, k) == real_t{0})
                throw factorize_error("trsm: zero diagonal at batch " +
                                          std::to_string(lane0 + ll) +
                                          ", entry " + std::to_string(k),
                                      lane0 + ll, k);
    switch (mode) {
    case TrsmMode::right_lower_trans: {
        // X Lᵀ = B: columns of X resolved left to right.
        assert(b.cols == n);
        for (index_t c = 0; c < n; ++c) {
            for (index_t k = 0; k < c; ++k)
                for (index_t r = 0; r < b.rows; ++r)
                    for (index_t l2 = 0; l2 < b.lanes; ++l2)
                        b(l2, r, c) -= b(l2, r, k) * l(l2, c, k);
            for (index_t r = 0; r < b.rows; ++r)
                for (index_t l2 = 0; l2 < b.lanes; ++l2)
                    b(l2, r, c) /= l(l2, c, c);
        }
        break;
    }
    case TrsmMode::left_lower: {
        // L X = B: forward substitution.
        assert(b.rows == n);
        for (index_t r = 0; r < n; ++r) {
            for (index_t k = 0; k < r; ++k)
                for (index_t c = 0; c < b.cols; ++c)
                    for (index_t l2 = 0; l2 < b.lanes; ++l2)
                        b(l2, r, c) -= l(l2, r, k) * b(l2, k, c);
            for (index_t c = 0; c < b.cols; ++c)
                for (index_t l2 = 0; l2 < b.lanes; ++l2)
                    b(l2, r, c) /= l(l2, r, r);
        }
        break;
    }
    case TrsmMode::left_lower_trans: {
        // Lᵀ X = B: back substitution.
        assert(b.rows == n);
        for (index_t r = n; r-- > 0;) {
            for (index_t k = r + 1; k < n; ++k)
                for (index_t c = 0; c < b.cols; ++c)
                    for (index_t l2 = 0; l2 < b.lanes; ++l2)
                        b(l2, r, c) -= l(l2, k, r) * b(l2, k, c);
            for (index_t c = 0; c < b.cols; ++c)
                for (index_t l2 = 0; l2 < b.lanes; ++l2)
                    b(l2, r, c) /= l(l2, r, r);
        }
        break;
    }
    }
    std::uint64_t other =
        static_cast<std::uint64_t>(mode == TrsmMode::right_lower_trans
                                       ? b.rows
                                       : b.cols);
    flops::add(static_cast<std::uint64_t>(b.lanes) * other *
               static_cast<std::uint64_t>(n * (n + 1) / 2));
}

void syrk(View c, CView a, int alpha) {
    assert(c.rows == c.cols && c.rows == a.rows && c.lanes == a.lanes);
    const real_t al = static_cast<real_t>(alpha);
    for (index_t k = 0; k < a.cols; ++k)
        for (index_t j = 0; j < c.cols; ++j)
            for (index_t i = j; i < c.rows; ++i)
                for (index_t l = 0; l < c.lanes; ++l)
                    c(l, i, j) += al * a(l, i, k) * a(l, j, k);
    flops::add(static_cast<std::uint64_t>(c.lanes) *
               static_cast<std::uint64_t>(a.cols * c.rows * (c.rows + 1) / 2));
}

void gemm(View c, CView a, bool trans_a, CView b, bool trans_b, int alpha) {
    const index_t m = c.rows, n = c.cols;
    const index_t ka = trans_a ? a.rows : a.cols;
    assert((trans_a ? a.cols : a.rows) == m);
    assert((trans_b ? b.rows : b.cols) == n);
    assert((trans_b ? b.cols : b.rows) == ka);
    assert(a.lanes == c.lanes && b.lanes == c.lanes);
    const real_t al = static_cast<real_t>(alpha);
    for (index_t k = 0; k < ka; ++k)
        for (index_t j = 0; j < n; ++j)
            for (index_t i = 0; i < m; ++i)
                for (index_t l = 0; l < c.lanes; ++l) {
                    real_t av = trans_a ? a(l, k, i) : a(l, i, k);
                    real_t bv = trans_b ? b(l, j, k) : b(l, k, j);
                    c(l, i, j) += al * av * bv;
                }
    flops::add(static_cast<std::uint64_t>(c.lanes) *
               static_cast<std::uint64_t>(m * n * ka));
}

void trmm(View x, CView a, CView t, TrmmMode mode, int alpha) {
    assert(t.rows == t.cols);
    const index_t n = t.rows;
    const real_t al = static_cast<real_t>(alpha);
    set_zero(x);
    std::uint64_t cnt = 0;
    switch (mode) {
    case TrmmMode::right_lower: // X = A L, L lower
        assert(a.cols == n && x.rows == a.rows && x.cols == n);
        for (index_t j = 0; j < n; ++j)
            for (index_t k = j; k < n; ++k)
                for (index_t i = 0; i < a.rows; ++i)
                    for (index_t l = 0; l < x.lanes; ++l)
                        x(l, i, j) += al * a(l, i, k) * t(l, k, j);
        cnt = static_cast<std::uint64_t>(a.rows * n * (n + 1) / 2);
        break;
    case TrmmMode::left_upper: // X = U A, U upper
        assert(a.rows == n && x.rows == n && x.cols == a.cols);
        for (index_t i = 0; i < n; ++i)
            for (index_t k = i; k < n; ++k)
                for (index_t j = 0; j < a.cols; ++j)
                    for (index_t l = 0; l < x.lanes; ++l)
                        x(l, i, j) += al * t(l, i, k) * a(l, k, j);
        cnt = static_cast<std::uint64_t>(a.cols * n * (n + 1) / 2);
        break;
    case TrmmMode::left_upper_trans: // X = Uᵀ A
        assert(a.rows == n && x.rows == n && x.cols == a.cols);
        for (index_t i = 0; i < n; ++i)
            for (index_t k = 0; k <= i; ++k)
                for (index_t j = 0; j < a.cols; ++j)
                    for (index_t l = 0; l < x.lanes; ++l)
                        x(l, i, j) += al * t(l, k, i) * a(l, k, j);
        cnt = static_cast<std::uint64_t>(a.cols * n * (n + 1) / 2);
        break;
    case TrmmMode::left_lower: // X = L A
        assert(a.rows == n && x.rows == n && x.cols == a.cols);
        for (index_t i = 0; i < n; ++i)
            for (index_t k = 0; k <= i; ++k)
                for (index_t j = 0; j < a.cols; ++j)
                    for (index_t l = 0; l < x.lanes; ++l)
                        x(l, i, j) += al * t(l, i, k) * a(l, k, j);
        cnt = static_cast<std::uint64_t>(a.cols * n * (n + 1) / 2);
        break;
    case TrmmMode::left_lower_trans: // X = Lᵀ A
        assert(a.rows == n && x.rows == n && x.cols == a.cols);
        for (index_t i = 0; i < n; ++i)
            for (index_t k = i; k < n; ++k)
                for (index_t j = 0; j < a.cols; ++j)
                    for (index_t l = 0; l < x.lanes; ++l)
                        x(l, i, j) += al * t(l, k, i) * a(l, k, j);
        cnt = static_cast<std::uint64_t>(a.cols * n * (n + 1) / 2);
        break;
    }
    flops::add(static_cast<std::uint64_t>(x.lanes) * cnt);
}

void trtri(View l, index_t lane0) {
    assert(l.rows == l.cols);
    const index_t n = l.rows;
    for (index_t k = 0; k < n; ++k)
        for (index_t ll = 0; ll < l.lanes; ++ll)
            if (l(ll, k, k) == real_t{0})
                throw factorize_error("trtri: zero diagonal at batch " +
                                          std::to_string(lane0 + ll) +
                                          ", entry " + std::to_string(k),
                                      lane0 + ll, k);
    // Column-by-column forward substitution: L X = I.
    for (index_t j = 0; j < n; ++j) {
        for (index_t l2 = 0; l2 < l.lanes; ++l2)
            l(l2, j, j) = real_t{1} / l(l2, j, j);
        for (index_t i = j + 1; i < n; ++i) {
            for (index_t l2 = 0; l2 < l.lanes; ++l2) {
                real_t s = real_t{0};
                for (index_t k = j; k < i; ++k)
                    s += l(l2, i, k) * l(l2, k, j);
                l(l2, i, j) = -s / l(l2, i, i);
            }
        }
    }
    flops::add(static_cast<std::uint64_t>(l.lanes) *
               static_cast<std::uint64_t>(n * (n + 1) * (n + 2) / 6));
}

void trsyrk(View c, CView t) {
    assert(c.rows == c.cols && t.rows == t.cols && c.rows == t.rows);
    assert(c.lanes == t.lanes);
    const index_t n = t.rows;
    // C = T Tᵀ, T upper: C(i,j) = sum_{k >= max(i,j)} T(i,k) T(j,k).
    std::uint64_t cnt = 0;
    for (index_t j = 0; j < n; ++j)
        for (index_t i = j; i < n; ++i) {
            for (index_t l = 0; l < c.lanes; ++l)
                c(l, i, j) = real_t{0};
            for (index_t k = i; k < n; ++k)
                for (index_t l = 0; l < c.lanes; ++l)
                    c(l, i, j) += t(l, i, k) * t(l, j, k);
            cnt += static_cast<std::uint64_t>(n - i);
        }
    flops::add(static_cast<std::uint64_t>(c.lanes) * cnt);
}

void transpose(View x, CView a) {
    assert(x.rows == a.cols && x.cols == a.rows && x.lanes == a.lanes);
    for (index_t c = 0; c < x.cols; ++c)
        for (index_t r = 0; r < x.rows; ++r)
            for (index_t l = 0; l < x.lanes; ++l)
                x(l, r, c) = a(l, c, r);
}

void copy(View dst, CView src) {
    assert(dst.rows == src.rows && dst.cols == src.cols &&
           dst.lanes == src.lanes);
    for (index_t c = 0; c < dst.cols; ++c)
        for (index_t r = 0; r < dst.rows; ++r)
            for (index_t l = 0; l < dst.lanes; ++l)
                dst(l, r, c) = src(l, r, c);
}

void set_zero(View a) {
    for (index_t c = 0; c < a.cols; ++c)
        for (index_t r = 0; r < a.rows; ++r)
            for (index_t l = 0; l < a.lanes; ++l)
                a(l, r, c) = real_t{0};
}

void set_identity(View a) {
    set_zero(a);
    for (index_t d = 0; d < std::min(a.rows, a.cols); ++d)
        for (index_t l = 0; l < a.lanes; ++l)
            a(l, d, d) = real_t{1};
}

void add_scaled(View dst, CView src, real_t alpha) {
    assert(dst.rows == src.rows && dst.cols == src.cols &&
           dst.lanes == src.lanes);
    for (index_t c = 0; c < dst.cols; ++c)
        for (index_t r = 0; r < dst.rows; ++r)
            for (index_t l = 0; l < dst.lanes; ++l)
                dst(l, r, c) += alpha * src(l, r, c);
    flops::add(static_cast<std::uint64_t>(dst.lanes) *
               static_cast<std::uint64_t>(dst.rows * dst.cols));
}

// ---------------------------------------------------------------------------
// Hyperbolic Householder
// ---------------------------------------------------------------------------

namespace {
// Applies rotation (p, k) with coefficients (cc, ss) to rows [r0, rows) of
// one lane of a pair. Hyperbolic mixes as [u v][ch -sh; -sh ch], Givens as
// [u v][c -s; s c].
inline void rotate_pair(View f, View g, index_t l, index_t p, index_t k,
                        index_t r0, real_t cc, real_t ss, bool hyper) {
    const index_t rows = f.rows;
    if (hyper) {
        for (index_t r = r0; r < rows; ++r) {
            real_t fu = f(l, r, p), gv = g(l, r, k);
            f(l, r, p) = cc * fu - ss * gv;
            g(l, r, k) = -ss * fu + cc * gv;
        }
    } else {
        for (index_t r = r0; r < rows; ++r) {
            real_t fu = f(l, r, p), gv = g(l, r, k);
            f(l, r, p) = cc * fu + ss * gv;
            g(l, r, k) = -ss * fu + cc * gv;
        }
    }
}
} // namespace

void hyh_transform(std::span<const HyhPair> pairs, const Signature &df,
                   const Signature &signs, index_t np, HyhHandle *handle,
                   index_t lane0) {
    assert(!pairs.empty());
    const View fp = pairs[0].f, gp = pairs[0].g;
    assert(np <= fp.cols && np <= fp.rows && df.size() >= np);
    const index_t m = gp.cols, lanes = fp.lanes;
    for ([[maybe_unused]] const HyhPair &pr : pairs) {
        assert(pr.f.rows == pr.g.rows && pr.f.lanes == lanes);
        assert(pr.f.cols >= np && pr.g.cols == m);
    }
    HyhHandle local;
    HyhHandle &h = handle ? *handle : local;
    h.n_pivots   = np;
    h.n_update   = m;
    h.lanes      = lanes;
    h.c.assign(static_cast<std::size_t>(np * m * lanes), real_t{0});
    h.s.assign(static_cast<std::size_t>(np * m * lanes), real_t{0});
    h.kind.assign(static_cast<std::size_t>(np * m), 0);

    std::uint64_t total_rows = 0;
    for (const HyhPair &pr : pairs)
        total_rows += static_cast<std::uint64_t>(pr.f.rows);

    for (index_t k = 0; k < m; ++k)
        for (index_t p = 0; p < np; ++p) {
            const index_t rot     = k * np + p;
            const bool hyperbolic = df[p] * signs[k] < 0;
            h.kind[static_cast<std::size_t>(rot)] = hyperbolic ? 1 : 0;
            for (index_t l = 0; l < lanes; ++l) {
                real_t u = fp(l, p, p);
                real_t v = gp(l, p, k);
                real_t cc, ss;
                if (hyperbolic) {
                    real_t rho2 = u * u - v * v;
                    if (!(rho2 > 0) || !std::isfinite(rho2))
                        throw hyh_breakdown(
                            "hyh: pivot norm sign flip at batch " +
                                std::to_string(lane0 + l) + ", column " +
                                std::to_string(k),
                            lane0 + l, k);
                    real_t rho = std::sqrt(rho2);
                    cc         = u / rho;
                    ss         = v / rho;
                } else {
                    real_t rho = std::hypot(u, v);
                    if (rho == real_t{0}) {
                        cc = 1;
                        ss = 0;
                    } else {
                        // c u + s v = rho > 0: the new pivot stays positive
                        cc = u / rho;
                        ss = v / rho;
                    }
                }
                h.cc(rot, l) = cc;
                h.ss(rot, l) = ss;
                if (cc == real_t{1} && ss == real_t{0})
                    continue;
                rotate_pair(fp, gp, l, p, k, p, cc, ss, hyperbolic);
                for (std::size_t b = 1; b < pairs.size(); ++b)
                    rotate_pair(pairs[b].f, pairs[b].g, l, p, k, 0, cc, ss,
                                hyperbolic);
            }
            flops::add(static_cast<std::uint64_t>(lanes) * 2 * total_rows);
        }
    // the annihilated entries are exact zeros by construction
    for (index_t k = 0; k < m; ++k)
        for (index_t p = 0; p < np; ++p)
            for (index_t l = 0; l < lanes; ++l)
                gp(l, p, k) = real_t{0};
}

void hyh_apply(const HyhHandle &h, std::span<const HyhPair> pairs) {
    std::uint64_t total_rows = 0;
    for (const HyhPair &pr : pairs) {
        assert(pr.f.rows == pr.g.rows && pr.f.lanes == h.lanes);
        assert(pr.f.cols >= h.n_pivots && pr.g.cols == h.n_update);
        total_rows += static_cast<std::uint64_t>(pr.f.rows);
    }
    for (index_t k = 0; k < h.n_update; ++k)
        for (index_t p = 0; p < h.n_pivots; ++p) {
            const index_t rot = k * h.n_pivots + p;
            const bool hyper  = h.kind[static_cast<std::size_t>(rot)] != 0;
            for (index_t l = 0; l < h.lanes; ++l) {
                real_t cc = h.cc(rot, l), ss = h.ss(rot, l);
                if (cc == real_t{1} && ss == real_t{0})
                    continue;
                for (const HyhPair &pr : pairs)
                    rotate_pair(pr.f, pr.g, l, p, k, 0, cc, ss, hyper);
            }
            flops::add(static_cast<std::uint64_t>(h.lanes) * 2 * total_rows);
        }
}

std::vector<HyhHandle> hyh_transform_batch(BatchMatrix &f, BatchMatrix &g,
                                           const Signature &df,
                                           const Signature &sg, index_t np) {
    assert(f.batch() == g.batch() && f.vlen() == g.vlen());
    std::vector<HyhHandle> handles(static_cast<std::size_t>(f.num_groups()));
    for (index_t gr = 0; gr < f.num_groups(); ++gr) {
        HyhPair pair{f.group_active(gr), g.group_active(gr)};
        hyh_transform({&pair, 1}, df, sg, np,
                      &handles[static_cast<std::size_t>(gr)], gr * f.vlen());
    }
    return handles;
}

// ---------------------------------------------------------------------------
// Whole-batch wrappers
// ---------------------------------------------------------------------------

namespace {
template <class Fn> void for_groups(const BatchMatrix &a, Fn &&fn) {
    for (index_t g = 0; g < a.num_groups(); ++g)
        fn(g);
}
} // namespace

BatchMatrix potrf_batch(const BatchMatrix &a) {
    assert(a.kind() == MatKind::symmetric_lower ||
           a.kind() == MatKind::general);
    BatchMatrix r(a.rows(), a.cols(), a.batch(), a.vlen(),
                  MatKind::lower_triangular);
    for_groups(a, [&](index_t g) {
        View dst = r.group_active(g);
        copy(dst, a.group_active(g));
        potrf(dst, g * a.vlen());
        // zero the strict upper triangle of the result
        for (index_t c = 0; c < dst.cols; ++c)
            for (index_t rr = 0; rr < c; ++rr)
                for (index_t l = 0; l < dst.lanes; ++l)
                    dst(l, rr, c) = real_t{0};
    });
    return r;
}

BatchMatrix potrf_batch_signed(const BatchMatrix &a,
                               std::vector<Signature> &sig_out) {
    BatchMatrix r(a.rows(), a.cols(), a.batch(), a.vlen(),
                  MatKind::lower_triangular);
    sig_out.assign(static_cast<std::size_t>(a.batch()),
                   Signature(a.rows()));
    for_groups(a, [&](index_t g) {
        View dst = r.group_active(g);
        copy(dst, a.group_active(g));
        potrf_signed(dst, sig_out.data() + g * a.vlen(), g * a.vlen());
        for (index_t c = 0; c < dst.cols; ++c)
            for (index_t rr = 0; rr < c; ++rr)
                for (index_t l = 0; l < dst.lanes; ++l)
                    dst(l, rr, c) = real_t{0};
    });
    return r;
}

BatchMatrix trsm_batch(const BatchMatrix &b, const BatchMatrix &l,
                       TrsmMode mode) {
    assert(b.batch() == l.batch() && b.vlen() == l.vlen());
    BatchMatrix r(b.rows(), b.cols(), b.batch(), b.vlen(), b.kind());
    for_groups(b, [&](index_t g) {
        View dst = r.group_active(g);
        copy(dst, b.group_active(g));
        trsm(dst, l.group_active(g), mode, g * b.vlen());
    });
    return r;
}

BatchMatrix syrk_batch(const BatchMatrix &c, const BatchMatrix &a, int alpha,
                       bool fuse_potrf) {
    assert(c.batch() == a.batch() && c.vlen() == a.vlen());
    BatchMatrix r(c.rows(), c.cols(), c.batch(), c.vlen(),
                  fuse_potrf ? MatKind::lower_triangular
                             : MatKind::symmetric_lower);
    for_groups(c, [&](index_t g) {
        View dst = r.group_active(g);
        copy(dst, c.group_active(g));
        syrk(dst, a.group_active(g), alpha);
        if (fuse_potrf) {
            potrf(dst, g * c.vlen());
            for (index_t cc = 0; cc < dst.cols; ++cc)
                for (index_t rr = 0; rr < cc; ++rr)
                    for (index_t l = 0; l < dst.lanes; ++l)
                        dst(l, rr, cc) = real_t{0};
        }
    });
    return r;
}

BatchMatrix gemm_batch(const BatchMatrix &c, const BatchMatrix &a,
                       const BatchMatrix &b, bool trans_a, bool trans_b,
                       int alpha) {
    BatchMatrix r(c.rows(), c.cols(), c.batch(), c.vlen(), c.kind());
    for_groups(c, [&](index_t g) {
        View dst = r.group_active(g);
        copy(dst, c.group_active(g));
        gemm(dst, a.group_active(g), trans_a, b.group_active(g), trans_b,
             alpha);
    });
    return r;
}

BatchMatrix trmm_batch(const BatchMatrix &a, const BatchMatrix &t,
                       TrmmMode mode, int alpha) {
    index_t rows, cols;
    switch (mode) {
    case TrmmMode::right_lower:
        rows = a.rows();
        cols = t.cols();
        break;
    default:
        rows = t.rows();
        cols = a.cols();
        break;
    }
    BatchMatrix r(rows, cols, a.batch(), a.vlen());
    for_groups(a, [&](index_t g) {
        trmm(r.group_active(g), a.group_active(g), t.group_active(g), mode,
             alpha);
    });
    return r;
}

BatchMatrix trtri_batch(const BatchMatrix &l) {
    BatchMatrix r(l.rows(), l.cols(), l.batch(), l.vlen(),
                  MatKind::lower_triangular);
    for_groups(l, [&](index_t g) {
        View dst = r.group_active(g);
        copy(dst, l.group_active(g));
        trtri(dst, g * l.vlen());
    });
    return r;
}

BatchMatrix trsyrk_batch(const BatchMatrix &u) {
    BatchMatrix r(u.rows(), u.cols(), u.batch(), u.vlen(),
                  MatKind::symmetric_lower);
    for_groups(u, [&](index_t g) {
        trsyrk(r.group_active(g), u.group_active(g));
    });
    return r;
}

// ---------------------------------------------------------------------------
// pack / unpack / lane_rotate
// ---------------------------------------------------------------------------

BatchMatrix pack(const std::vector<DenseMatrix> &mats, index_t vlen,
                 MatKind kind) {
    if (mats.empty())
        return BatchMatrix(0, 0, 0, vlen, kind);
    const index_t m = mats.front().rows, n = mats.front().cols;
    for (const auto &x : mats)
        if (x.rows != m || x.cols != n)
            throw std::invalid_argument("pack: shape mismatch among inputs");
    BatchMatrix b(m, n, static_cast<index_t>(mats.size()), vlen, kind);
    for (index_t j = 0; j < b.batch(); ++j)
        for (index_t r = 0; r < m; ++r)
            for (index_t c = 0; c < n; ++c)
                b(j, r, c) = mats[static_cast<std::size_t>(j)](r, c);
    return b;
}

std::vector<DenseMatrix> unpack(const BatchMatrix &b) {
    std::vector<DenseMatrix> out(static_cast<std::size_t>(b.batch()),
                                 DenseMatrix(b.rows(), b.cols()));
    for (index_t j = 0; j < b.batch(); ++j)
        for (index_t r = 0; r < b.rows(); ++r)
            for (index_t c = 0; c < b.cols(); ++c)
                out[static_cast<std::size_t>(j)](r, c) = b(j, r, c);
    return out;
}

BatchMatrix lane_rotate(const BatchMatrix &b, index_t shift) {
    const index_t v = b.vlen();
    assert(shift > -v && shift < v);
    BatchMatrix r(b.rows(), b.cols(), b.batch(), v, b.kind());
    const index_t sh = ((shift % v) + v) % v;
    for (index_t g = 0; g < b.num_groups(); ++g) {
        CView src = b.group(g);
        View dst  = r.group(g);
        for (index_t l = 0; l < v; ++l) {
            index_t l2 = (l + sh) % v;
            for (index_t c = 0; c < b.cols(); ++c)
                for (index_t rr = 0; rr < b.rows(); ++rr)
                    dst(l2, rr, c) = src(l, rr, c);
        }
    }
    return r;
}

} // namespace cyqlone::batla
