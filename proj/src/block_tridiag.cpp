#include <cyqlone/block_tridiag.hpp>
#include <cyqlone/worker_pool.hpp>

#include <cmath>

namespace cyqlone::blocktri {

using batla::CView;
using batla::MatKind;
using batla::View;

namespace {

View vec_view(real_t *p, index_t n) { return {p, n, 1, 1, 1, n}; }
CView vec_view(const real_t *p, index_t n) { return {p, n, 1, 1, 1, n}; }

// y += alpha * op(A) x for a single-lane matrix view
void mv(CView a, bool trans, const real_t *x, real_t *y, real_t alpha) {
    index_t m = trans ? a.cols : a.rows;
    index_t n = trans ? a.rows : a.cols;
    for (index_t i = 0; i < m; ++i) {
        real_t s = 0;
        for (index_t k = 0; k < n; ++k)
            s += (trans ? a(0, k, i) : a(0, i, k)) * x[k];
        y[i] += alpha * s;
    }
}

// y += M x with M symmetric, lower triangle stored
void symv(CView a, const real_t *x, real_t *y) {
    const index_t n = a.rows;
    for (index_t i = 0; i < n; ++i) {
        real_t s = 0;
        for (index_t k = 0; k <= i; ++k)
            s += a(0, i, k) * x[k];
        for (index_t k = i + 1; k < n; ++k)
            s += a(0, k, i) * x[k];
        y[i] += s;
    }
}

void check_power_of_two(index_t N) {
    if (N <= 0 || (N & (N - 1)) != 0)
        throw std::invalid_argument(
            "cyclic reduction requires a power-of-two block count, got " +
            std::to_string(N));
}

} // namespace

void BlockTridiag::multiply(std::span<const real_t> x,
                            std::span<real_t> y) const {
    const index_t n = block_dim, N = n_blocks;
    assert(static_cast<index_t>(x.size()) == dim() &&
           static_cast<index_t>(y.size()) == dim());
    std::fill(y.begin(), y.end(), real_t{0});
    for (index_t k = 0; k < N; ++k) {
        symv(diag.lane(k), x.data() + k * n, y.data() + k * n);
        index_t last = circular ? N : N - 1;
        if (k < last) {
            index_t k1 = (k + 1) % N;
            mv(subdiag.lane(k), false, x.data() + k * n, y.data() + k1 * n, 1);
            mv(subdiag.lane(k), true, x.data() + k1 * n, y.data() + k * n, 1);
        }
    }
}

// ---------------------------------------------------------------------------
// Serial block Cholesky
// ---------------------------------------------------------------------------

SerialCholFactor chol_factor_serial(const BlockTridiag &m, index_t) {
    if (m.circular)
        throw std::invalid_argument(
            "chol_factor_serial: circular coupling not supported");
    const index_t N = m.n_blocks, n = m.block_dim;
    SerialCholFactor f;
    f.n_blocks  = N;
    f.block_dim = n;
    f.diag    = BatchMatrix(n, n, N, m.diag.vlen(), MatKind::lower_triangular);
    f.subdiag = BatchMatrix(n, n, std::max<index_t>(N - 1, 0), m.diag.vlen());
    BatchMatrix work(n, n, 1, 1, MatKind::symmetric_lower);
    for (index_t k = 0; k < N; ++k) {
        View w = work.lane(0);
        batla::copy(w, m.diag.lane(k));
        if (k > 0)
            batla::syrk(w, CView(f.subdiag.lane(k - 1)), -1);
        View lk = f.diag.lane(k);
        batla::copy(lk, CView(w));
        batla::potrf(lk, k);
        if (k + 1 < N) {
            View sk = f.subdiag.lane(k);
            batla::copy(sk, m.subdiag.lane(k));
            batla::trsm(sk, CView(lk), batla::TrsmMode::right_lower_trans, k);
        }
    }
    return f;
}

void SerialCholFactor::solve(std::span<real_t> x) const {
    const index_t n = block_dim, N = n_blocks;
    for (index_t k = 0; k < N; ++k) {
        if (k > 0)
            mv(subdiag.lane(k - 1), false, x.data() + (k - 1) * n,
               x.data() + k * n, -1);
        View xk = vec_view(x.data() + k * n, n);
        batla::trsm(xk, diag.lane(k), batla::TrsmMode::left_lower);
    }
    for (index_t k = N; k-- > 0;) {
        if (k + 1 < N)
            mv(subdiag.lane(k), true, x.data() + (k + 1) * n,
               x.data() + k * n, -1);
        View xk = vec_view(x.data() + k * n, n);
        batla::trsm(xk, diag.lane(k), batla::TrsmMode::left_lower_trans);
    }
}

// ---------------------------------------------------------------------------
// Cyclic reduction
// ---------------------------------------------------------------------------

namespace {

// One CR elimination level: factors the odd rows of (Ml, Kl) and produces
// the reduced system (M2, K2).
void cr_level(const BatchMatrix &Ml, const BatchMatrix &Kl, index_t s,
              bool circular, index_t workers, index_t level, BatchMatrix &Ll,
              BatchMatrix &Ul, BatchMatrix &Yl, BatchMatrix &M2,
              BatchMatrix &K2) {
    const index_t half = s / 2, n = Ml.rows(), v = Ml.vlen();
    Ll = BatchMatrix(n, n, half, v, MatKind::lower_triangular);
    Ul = BatchMatrix(n, n, half, v);
    Yl = BatchMatrix(n, n, half, v);
    M2 = BatchMatrix(n, n, half, v, MatKind::symmetric_lower);
    K2 = BatchMatrix(n, n, half, v);
    parallel_for(half, workers, [&](index_t mm) {
        index_t k = 2 * mm + 1; // level index of the eliminated row
        View L    = Ll.lane(mm);
        batla::copy(L, Ml.lane(k));
        try {
            batla::potrf(L);
        } catch (const batla::factorize_error &e) {
            throw batla::factorize_error(
                "cyclic reduction: pivot failure at level " +
                    std::to_string(level) + ", index " + std::to_string(k),
                k, e.pivot);
        }
        View U = Ul.lane(mm);
        batla::transpose(U, Kl.lane(k - 1));
        batla::trsm(U, CView(L), batla::TrsmMode::right_lower_trans);
        View Y = Yl.lane(mm);
        if (k < s - 1 || circular) {
            batla::copy(Y, Kl.lane(k));
            batla::trsm(Y, CView(L), batla::TrsmMode::right_lower_trans);
        } // else Y stays zero (no coupling past the boundary)
    });
    parallel_for(half, workers, [&](index_t mm) {
        View Md = M2.lane(mm);
        batla::copy(Md, Ml.lane(2 * mm));
        batla::syrk(Md, CView(Ul.lane(mm)), -1);
        if (mm > 0)
            batla::syrk(Md, CView(Yl.lane(mm - 1)), -1);
        else if (circular)
            batla::syrk(Md, CView(Yl.lane(half - 1)), -1);
        if (mm < half - 1 || circular) {
            View Kd = K2.lane(mm);
            batla::gemm(Kd, CView(Yl.lane(mm)), false, CView(Ul.lane(mm)),
                        true, -1);
        }
    });
}

void cr_factor_base(CRFactor &f) {
    const index_t n = f.block_dim;
    if (!f.circular) {
        f.L_base = BatchMatrix(n, n, 1, 1, MatKind::lower_triangular);
        View L   = f.L_base.lane(0);
        batla::copy(L, f.M_lvl.back().lane(0));
        batla::potrf(L);
    } else {
        // Dense 2x2 block system with both couplings.
        f.L_base = BatchMatrix(2 * n, 2 * n, 1, 1, MatKind::lower_triangular);
        View L   = f.L_base.lane(0);
        batla::set_zero(L);
        const BatchMatrix &Ml = f.M_lvl.back();
        const BatchMatrix &Kl = f.K_lvl.back();
        for (index_t r = 0; r < n; ++r)
            for (index_t c = 0; c <= r; ++c) {
                L(0, r, c)         = Ml.lane(0)(0, r, c);
                L(0, n + r, n + c) = Ml.lane(1)(0, r, c);
            }
        for (index_t r = 0; r < n; ++r)
            for (index_t c = 0; c < n; ++c)
                L(0, n + r, c) = Kl.lane(0)(0, r, c) + Kl.lane(1)(0, c, r);
        batla::potrf(L);
    }
}

} // namespace

CRFactor cr_factor(const BlockTridiag &m, index_t workers,
                   index_t max_levels) {
    check_power_of_two(m.n_blocks);
    const index_t N = m.n_blocks;
    assert(!m.circular || N >= 2);
    CRFactor f;
    f.n_blocks  = N;
    f.block_dim = m.block_dim;
    f.circular  = m.circular;
    index_t full_levels;
    {
        index_t lg = 0;
        while ((index_t{1} << lg) < N)
            ++lg;
        full_levels = m.circular ? std::max<index_t>(lg - 1, 0) : lg;
        if (max_levels >= 0)
            full_levels = std::min(full_levels, max_levels);
    }
    f.M_lvl.push_back(m.diag);
    f.K_lvl.push_back(m.subdiag);
    f.L.resize(static_cast<std::size_t>(full_levels));
    f.U.resize(static_cast<std::size_t>(full_levels));
    f.Y.resize(static_cast<std::size_t>(full_levels));
    f.M_lvl.resize(static_cast<std::size_t>(full_levels + 1));
    f.K_lvl.resize(static_cast<std::size_t>(full_levels + 1));
    f.n_levels = full_levels + 1;

    index_t s = N;
    for (index_t l = 0; l < full_levels; ++l, s /= 2) {
        auto lu = static_cast<std::size_t>(l);
        cr_level(f.M_lvl[lu], f.K_lvl[lu], s, m.circular, workers, l, f.L[lu],
                 f.U[lu], f.Y[lu], f.M_lvl[lu + 1], f.K_lvl[lu + 1]);
    }
    const bool stopped_early = max_levels >= 0 && s > (m.circular ? 2 : 1);
    if (!stopped_early)
        cr_factor_base(f);
    return f;
}

void cr_refactor_from(CRFactor &f, index_t from, index_t workers) {
    const index_t full_levels = f.n_levels - 1;
    index_t s                 = f.n_blocks >> from;
    for (index_t l = from; l < full_levels; ++l, s /= 2) {
        auto lu = static_cast<std::size_t>(l);
        cr_level(f.M_lvl[lu], f.K_lvl[lu], s, f.circular, workers, l, f.L[lu],
                 f.U[lu], f.Y[lu], f.M_lvl[lu + 1], f.K_lvl[lu + 1]);
    }
    if (f.L_base.batch() > 0)
        cr_factor_base(f);
}

void CRFactor::forward(std::span<real_t> x, index_t workers) const {
    const index_t n = block_dim;
    index_t s       = n_blocks;
    for (index_t l = 0; l + 1 < n_levels; ++l, s /= 2) {
        const index_t half    = s / 2;
        const index_t stride  = n_blocks / s; // original stride at level l
        const BatchMatrix &Ll = L[static_cast<std::size_t>(l)];
        const BatchMatrix &Ul = U[static_cast<std::size_t>(l)];
        const BatchMatrix &Yl = Y[static_cast<std::size_t>(l)];
        parallel_for(half, workers, [&](index_t mm) {
            index_t o = (2 * mm + 1) * stride;
            View xo   = vec_view(x.data() + o * n, n);
            batla::trsm(xo, Ll.lane(mm), batla::TrsmMode::left_lower);
        });
        parallel_for(half, workers, [&](index_t mm) {
            index_t oe = (2 * mm) * stride;
            real_t *ye = x.data() + oe * n;
            mv(Ul.lane(mm), false, x.data() + (2 * mm + 1) * stride * n, ye,
               -1);
            index_t mprev = mm > 0 ? mm - 1 : half - 1;
            if (mm > 0 || circular)
                mv(Yl.lane(mprev), false,
                   x.data() + (((2 * mprev + 1) * stride) % n_blocks) * n, ye,
                   -1);
        });
    }
    if (L_base.batch() > 0) {
        if (!circular) {
            View x0 = vec_view(x.data(), n);
            batla::trsm(x0, L_base.lane(0), batla::TrsmMode::left_lower);
        } else {
            // Gather the two remaining blocks (original 0 and n_blocks/2).
            std::vector<real_t> xb(static_cast<std::size_t>(2 * n));
            index_t o1 = n_blocks / 2;
            std::copy_n(x.data(), n, xb.data());
            std::copy_n(x.data() + o1 * n, n, xb.data() + n);
            View xv = vec_view(xb.data(), 2 * n);
            batla::trsm(xv, L_base.lane(0), batla::TrsmMode::left_lower);
            std::copy_n(xb.data(), n, x.data());
            std::copy_n(xb.data() + n, n, x.data() + o1 * n);
        }
    }
}

void CRFactor::backward(std::span<real_t> x, index_t workers) const {
    const index_t n = block_dim;
    if (L_base.batch() > 0) {
        if (!circular) {
            View x0 = vec_view(x.data(), n);
            batla::trsm(x0, L_base.lane(0), batla::TrsmMode::left_lower_trans);
        } else {
            std::vector<real_t> xb(static_cast<std::size_t>(2 * n));
            index_t o1 = n_blocks / 2;
            std::copy_n(x.data(), n, xb.data());
            std::copy_n(x.data() + o1 * n, n, xb.data() + n);
            View xv = vec_view(xb.data(), 2 * n);
            batla::trsm(xv, L_base.lane(0), batla::TrsmMode::left_lower_trans);
            std::copy_n(xb.data(), n, x.data());
            std::copy_n(xb.data() + n, n, x.data() + o1 * n);
        }
    }
    index_t s = n_blocks >> (n_levels - 1);
    for (index_t l = n_levels - 1; l-- > 0; s *= 2) {
        // note: entering iteration for level l, s is the size of level l+1
        const index_t sl      = 2 * s;
        const index_t half    = sl / 2;
        const index_t stride  = n_blocks / sl;
        const BatchMatrix &Ll = L[static_cast<std::size_t>(l)];
        const BatchMatrix &Ul = U[static_cast<std::size_t>(l)];
        const BatchMatrix &Yl = Y[static_cast<std::size_t>(l)];
        parallel_for(half, workers, [&](index_t mm) {
            index_t o = (2 * mm + 1) * stride;
            real_t *xo = x.data() + o * n;
            mv(Ul.lane(mm), true, x.data() + 2 * mm * stride * n, xo, -1);
            index_t onext = ((2 * mm + 2) * stride) % n_blocks;
            if (2 * mm + 2 < sl || circular)
                mv(Yl.lane(mm), true, x.data() + onext * n, xo, -1);
            View xv = vec_view(xo, n);
            batla::trsm(xv, Ll.lane(mm), batla::TrsmMode::left_lower_trans);
        });
    }
}

void CRFactor::resolve(std::span<real_t> x, index_t workers) const {
    if (L_base.batch() == 0)
        throw std::logic_error("CRFactor::resolve: factor has no base level");
    forward(x, workers);
    backward(x, workers);
}

std::vector<real_t> cr_factor_solve(const BlockTridiag &m,
                                    std::span<const real_t> b,
                                    CRFactor &factor_out, index_t workers) {
    factor_out = cr_factor(m, workers);
    return cr_resolve(factor_out, b, workers);
}

std::vector<real_t> cr_resolve(const CRFactor &f, std::span<const real_t> b,
                               index_t workers) {
    std::vector<real_t> x(b.begin(), b.end());
    f.resolve(x, workers);
    return x;
}

// ---------------------------------------------------------------------------
// Parallel cyclic reduction
// ---------------------------------------------------------------------------

namespace {

// Batched fast path for one storage group (N == vlen): shifted operands are
// gathered with lane rotations, all kernels run full width.
void pcr_level_batched(const BatchMatrix &Ml, const BatchMatrix &Kl,
                       index_t stride, BatchMatrix &Ll, BatchMatrix &Ul,
                       BatchMatrix &Yl, BatchMatrix &M2, BatchMatrix &K2) {
    using namespace batla;
    const index_t N = Ml.batch();
    Ll = potrf_batch(Ml);
    Yl = trsm_batch(Kl, Ll, TrsmMode::right_lower_trans);
    BatchMatrix Kshift = lane_rotate(Kl, +static_cast<index_t>(stride));
    BatchMatrix Kt(Kl.rows(), Kl.cols(), N, Kl.vlen());
    transpose(Kt.group(0), Kshift.group(0));
    Ul = trsm_batch(Kt, Ll, TrsmMode::right_lower_trans);
    BatchMatrix Yprev = lane_rotate(Yl, +stride);
    BatchMatrix Unext = lane_rotate(Ul, -stride);
    M2                = Ml;
    syrk(M2.group(0), Yprev.group(0), -1);
    syrk(M2.group(0), Unext.group(0), -1);
    K2 = BatchMatrix(Kl.rows(), Kl.cols(), N, Kl.vlen());
    gemm(K2.group(0), CView(lane_rotate(Yl, -stride).group(0)), false,
         CView(Unext.group(0)), true, -1);
}

} // namespace

PCRFactor pcr_factor(const BlockTridiag &m, index_t workers) {
    check_power_of_two(m.n_blocks);
    if (m.circular)
        throw std::invalid_argument(
            "pcr_factor: circular coupling is only supported by cr_factor");
    const index_t N = m.n_blocks, n = m.block_dim, v = m.diag.vlen();
    PCRFactor f;
    f.n_blocks  = N;
    f.block_dim = n;
    index_t lg = 0;
    while ((index_t{1} << lg) < N)
        ++lg;
    f.n_levels = lg + 1;

    BatchMatrix Ml = m.diag, Kl = m.subdiag;
    for (index_t l = 0; l <= lg; ++l) {
        const index_t stride = index_t{1} << l;
        BatchMatrix Ll(n, n, N, v, MatKind::lower_triangular);
        BatchMatrix Ul(n, n, N, v), Yl(n, n, N, v);
        BatchMatrix M2(n, n, N, v, MatKind::symmetric_lower);
        BatchMatrix K2(n, n, N, v);
        if (l == lg) {
            parallel_for(N, workers, [&](index_t k) {
                View L = Ll.lane(k);
                batla::copy(L, Ml.lane(k));
                batla::potrf(L);
            });
            f.L.push_back(std::move(Ll));
            break;
        }
        if (N == v && N > 1) {
            pcr_level_batched(Ml, Kl, stride, Ll, Ul, Yl, M2, K2);
        } else {
            parallel_for(N, workers, [&](index_t k) {
                View L = Ll.lane(k);
                batla::copy(L, Ml.lane(k));
                try {
                    batla::potrf(L);
                } catch (const batla::factorize_error &e) {
                    throw batla::factorize_error(
                        "pcr: pivot failure at level " + std::to_string(l) +
                            ", index " + std::to_string(k),
                        k, e.pivot);
                }
                View Yk = Yl.lane(k);
                batla::copy(Yk, Kl.lane(k));
                batla::trsm(Yk, CView(L), batla::TrsmMode::right_lower_trans);
                View Uk = Ul.lane(k);
                batla::transpose(Uk, Kl.lane((k - stride + N) % N));
                batla::trsm(Uk, CView(L), batla::TrsmMode::right_lower_trans);
            });
            parallel_for(N, workers, [&](index_t k) {
                View Md = M2.lane(k);
                batla::copy(Md, Ml.lane(k));
                batla::syrk(Md, CView(Yl.lane((k - stride + N) % N)), -1);
                batla::syrk(Md, CView(Ul.lane((k + stride) % N)), -1);
                View Kd = K2.lane(k);
                batla::gemm(Kd, CView(Yl.lane((k + stride) % N)), false,
                            CView(Ul.lane((k + stride) % N)), true, -1);
            });
        }
        f.L.push_back(std::move(Ll));
        f.U.push_back(std::move(Ul));
        f.Y.push_back(std::move(Yl));
        Ml = std::move(M2);
        Kl = std::move(K2);
    }
    return f;
}

void PCRFactor::resolve(std::span<real_t> x, index_t workers) const {
    const index_t n = block_dim, N = n_blocks;
    std::vector<real_t> bt(x.size());
    for (index_t l = 0; l + 1 < n_levels; ++l) {
        const index_t stride  = index_t{1} << l;
        const BatchMatrix &Ll = L[static_cast<std::size_t>(l)];
        const BatchMatrix &Ul = U[static_cast<std::size_t>(l)];
        const BatchMatrix &Yl = Y[static_cast<std::size_t>(l)];
        parallel_for(N, workers, [&](index_t k) {
            std::copy_n(x.data() + k * n, n, bt.data() + k * n);
            View bv = vec_view(bt.data() + k * n, n);
            batla::trsm(bv, Ll.lane(k), batla::TrsmMode::left_lower);
        });
        std::vector<real_t> x2(x.begin(), x.end());
        parallel_for(N, workers, [&](index_t k) {
            real_t *xk = x2.data() + k * n;
            mv(Yl.lane((k - stride + N) % N), false,
               bt.data() + ((k - stride + N) % N) * n, xk, -1);
            mv(Ul.lane((k + stride) % N), false,
               bt.data() + ((k + stride) % N) * n, xk, -1);
        });
        std::copy(x2.begin(), x2.end(), x.begin());
    }
    const BatchMatrix &Lb = L.back();
    parallel_for(N, workers, [&](index_t k) {
        View xk = vec_view(x.data() + k * n, n);
        batla::trsm(xk, Lb.lane(k), batla::TrsmMode::left_lower);
        batla::trsm(xk, Lb.lane(k), batla::TrsmMode::left_lower_trans);
    });
}

std::vector<real_t> pcr_solve(const BlockTridiag &m, std::span<const real_t> b,
                              PCRFactor *factor_out, index_t workers) {
    PCRFactor local;
    PCRFactor &f = factor_out ? *factor_out : local;
    f            = pcr_factor(m, workers);
    std::vector<real_t> x(b.begin(), b.end());
    f.resolve(x, workers);
    return x;
}

// ---------------------------------------------------------------------------
// Preconditioners and PCG
// ---------------------------------------------------------------------------

namespace {
BatchMatrix chol_of_diagonal(const BlockTridiag &m) {
    BatchMatrix L(m.block_dim, m.block_dim, m.n_blocks, m.diag.vlen(),
                  MatKind::lower_triangular);
    for (index_t g = 0; g < m.diag.num_groups(); ++g) {
        View dst = L.group_active(g);
        batla::copy(dst, m.diag.group_active(g));
        batla::potrf(dst, g * m.diag.vlen());
    }
    return L;
}
} // namespace

Preconditioner jacobi_precond_build(const BlockTridiag &m) {
    Preconditioner p;
    p.kind      = Preconditioner::Kind::jacobi;
    p.n_blocks  = m.n_blocks;
    p.block_dim = m.block_dim;
    p.L         = chol_of_diagonal(m);
    return p;
}

Preconditioner stair_precond_build(const BlockTridiag &m) {
    Preconditioner p = jacobi_precond_build(m);
    p.kind           = Preconditioner::Kind::stair;
    p.coupling       = &m;
    return p;
}

Preconditioner auto_precond_build(const BlockTridiag &m) {
    real_t diag_mass = 0, off_mass = 0;
    for (index_t k = 0; k < m.n_blocks; ++k) {
        CView d = m.diag.lane(k);
        for (index_t i = 0; i < m.block_dim; ++i)
            for (index_t j = 0; j <= i; ++j)
                diag_mass += d(0, i, j) * d(0, i, j) * (i == j ? 1 : 2);
    }
    index_t last = m.circular ? m.n_blocks : m.n_blocks - 1;
    for (index_t k = 0; k < last; ++k) {
        CView s = m.subdiag.lane(k);
        for (index_t i = 0; i < m.block_dim; ++i)
            for (index_t j = 0; j < m.block_dim; ++j)
                off_mass += 2 * s(0, i, j) * s(0, i, j);
    }
    if (off_mass < 0.01 * diag_mass) // Frobenius mass ratio 0.1, squared
        return jacobi_precond_build(m);
    return stair_precond_build(m);
}

void Preconditioner::apply(std::span<const real_t> r,
                           std::span<real_t> z) const {
    const index_t n = block_dim, N = n_blocks;
    auto solve_jacobi = [&](std::span<const real_t> in, real_t *out) {
        std::copy(in.begin(), in.end(), out);
        for (index_t k = 0; k < N; ++k) {
            View xk = vec_view(out + k * n, n);
            batla::trsm(xk, L.lane(k), batla::TrsmMode::left_lower);
            batla::trsm(xk, L.lane(k), batla::TrsmMode::left_lower_trans);
        }
    };
    if (kind == Kind::jacobi) {
        solve_jacobi(r, z.data());
        return;
    }
    // stair: z = J (r - K J r), J = (L Lᵀ)⁻¹, K the off-diagonal part
    std::vector<real_t> w(r.size()), kw(r.size(), real_t{0});
    solve_jacobi(r, w.data());
    const BlockTridiag &m = *coupling;
    index_t last          = m.circular ? N : N - 1;
    for (index_t k = 0; k < last; ++k) {
        index_t k1 = (k + 1) % N;
        mv(m.subdiag.lane(k), false, w.data() + k * n, kw.data() + k1 * n, 1);
        mv(m.subdiag.lane(k), true, w.data() + k1 * n, kw.data() + k * n, 1);
    }
    std::vector<real_t> jkw(r.size());
    solve_jacobi(kw, jkw.data());
    for (std::size_t i = 0; i < z.size(); ++i)
        z[i] = w[i] - jkw[i];
}

PcgResult pcg_solve(const BlockTridiag &m, std::span<const real_t> b,
                    const Preconditioner &prec, real_t tol,
                    index_t max_iter) {
    const index_t dim = m.dim();
    PcgResult res;
    res.x.assign(static_cast<std::size_t>(dim), real_t{0});
    std::vector<real_t> r(b.begin(), b.end()), z(r.size()), p(r.size()),
        mp(r.size());
    real_t bnorm = 0;
    for (real_t v : b)
        bnorm += v * v;
    bnorm = std::sqrt(bnorm);
    if (bnorm == real_t{0}) {
        res.converged = true;
        return res;
    }
    prec.apply(r, z);
    std::copy(z.begin(), z.end(), p.begin());
    real_t rz = 0;
    for (index_t i = 0; i < dim; ++i)
        rz += r[static_cast<std::size_t>(i)] * z[static_cast<std::size_t>(i)];
    for (index_t it = 0; it < max_iter; ++it) {
        m.multiply(p, mp);
        real_t pmp = 0;
        for (index_t i = 0; i < dim; ++i)
            pmp += p[static_cast<std::size_t>(i)] *
                   mp[static_cast<std::size_t>(i)];
        if (!(pmp > 0))
            throw std::runtime_error("pcg: curvature breakdown (p' M p <= 0)");
        real_t alpha = rz / pmp;
        real_t rnorm = 0;
        for (index_t i = 0; i < dim; ++i) {
            auto u = static_cast<std::size_t>(i);
            res.x[u] += alpha * p[u];
            r[u] -= alpha * mp[u];
            rnorm += r[u] * r[u];
        }
        res.iterations = it + 1;
        res.rel_residual = std::sqrt(rnorm) / bnorm;
        if (res.rel_residual <= tol) {
            res.converged = true;
            break;
        }
        prec.apply(r, z);
        real_t rz2 = 0;
        for (index_t i = 0; i < dim; ++i)
            rz2 += r[static_cast<std::size_t>(i)] *
                   z[static_cast<std::size_t>(i)];
        real_t beta = rz2 / rz;
        rz          = rz2;
        for (index_t i = 0; i < dim; ++i) {
            auto u = static_cast<std::size_t>(i);
            p[u]   = z[u] + beta * p[u];
        }
    }
    return res;
}

} // namespace cyqlone::blocktri
