#include <cyqlone/kkt_solver.hpp>
#include <cyqlone/worker_pool.hpp>

#include "kkt_internal.hpp"

#include <cmath>

namespace cyqlone::kkt {

using batla::CView;
using batla::MatKind;
using batla::View;
using blocktri::BlockTridiag;

index_t nu2(index_t i, index_t P) {
    assert(i >= 0 && i < P);
    if (i == 0)
        i = P;
    index_t v = 0;
    while ((i & 1) == 0) {
        i >>= 1;
        ++v;
    }
    return v;
}

EqOCP pad_problem(const EqOCP &p, index_t P) {
    if ((P & (P - 1)) != 0 || P <= 0)
        throw std::invalid_argument("P must be a power of two");
    const index_t N_pad = P * ((p.N + P - 1) / P);
    if (N_pad == p.N)
        return p;
    EqOCP out = p;
    out.N     = N_pad;
    out.A.resize(static_cast<std::size_t>(N_pad), Mat(p.nx, p.nx));
    out.B.resize(static_cast<std::size_t>(N_pad), Mat(p.nx, p.nu));
    out.f.resize(static_cast<std::size_t>(N_pad),
                 Vec(static_cast<std::size_t>(p.nx), 0));
    out.R.resize(static_cast<std::size_t>(N_pad), Mat::identity(p.nu));
    out.S.resize(static_cast<std::size_t>(N_pad), Mat(p.nu, p.nx));
    out.Q.resize(static_cast<std::size_t>(N_pad + 1), Mat::identity(p.nx));
    out.q.resize(static_cast<std::size_t>(N_pad + 1),
                 Vec(static_cast<std::size_t>(p.nx), 0));
    out.r.resize(static_cast<std::size_t>(N_pad),
                 Vec(static_cast<std::size_t>(p.nu), 0));
    return out;
}

namespace detail {

// Gathers the padded stage data into column-batched storage. Stage 0 bundles
// u^0 with the terminal state: its Hessian is blkdiag(R_0, Q_N) and its
// dynamics blocks are (B_0, 0); S_0 and A_0 never enter the factorization.
void pack_columns(const EqOCP &p, const Partition &part, Factor &f) {
    const index_t nx = p.nx, nu = p.nu, nux = nx + nu;
    const index_t n = part.n_per, P = part.P, v = f.opts.vlen;
    f.H.clear();
    f.BA.clear();
    f.BAt.clear();
    for (index_t s = 0; s < n; ++s) {
        BatchMatrix H(nux, nux, P, v, MatKind::symmetric_lower);
        BatchMatrix BA(nx, nux, P, v);
        BatchMatrix BAt(nux, nx, P, v);
        for (index_t c = 0; c < P; ++c) {
            const index_t j  = part.stage_of(c, s);
            const index_t xi = part.x_index_of(c, s);
            auto ju          = static_cast<std::size_t>(j);
            const Mat &R     = p.R[ju];
            const Mat &Q     = p.Q[static_cast<std::size_t>(xi)];
            const Mat &B     = p.B[ju];
            for (index_t a = 0; a < nu; ++a)
                for (index_t b = 0; b <= a; ++b)
                    H(c, a, b) = R(a, b);
            for (index_t a = 0; a < nx; ++a)
                for (index_t b = 0; b <= a; ++b)
                    H(c, nu + a, nu + b) = Q(a, b);
            if (j != 0) {
                const Mat &S = p.S[ju];
                for (index_t a = 0; a < nx; ++a)
                    for (index_t b = 0; b < nu; ++b)
                        H(c, nu + a, b) = S(b, a); // S' block
            }
            for (index_t a = 0; a < nx; ++a)
                for (index_t b = 0; b < nu; ++b) {
                    BA(c, a, b)  = B(a, b);
                    BAt(c, b, a) = B(a, b);
                }
            if (j != 0) {
                const Mat &A = p.A[ju];
                for (index_t a = 0; a < nx; ++a)
                    for (index_t b = 0; b < nx; ++b) {
                        BA(c, a, nu + b)  = A(a, b);
                        BAt(c, nu + b, a) = A(a, b);
                    }
            }
        }
        // padding lanes: identity Hessians so the batch factorizes full-width
        index_t g_last = H.num_groups() - 1;
        for (index_t l = H.active_lanes(g_last); l < v; ++l) {
            View hv = H.group(g_last).lane(l);
            batla::set_identity(hv);
        }
        f.H.push_back(std::move(H));
        f.BA.push_back(std::move(BA));
        f.BAt.push_back(std::move(BAt));
    }
}

void factor_lanes(Factor &f, index_t g, index_t l0, index_t lc,
                  std::uint64_t *riccati_flops, std::uint64_t *schur_flops) {
    const index_t nx = f.nx, nu = f.nu, nux = nx + nu, n = f.part.n_per;
    const index_t v = f.opts.vlen;
    assert(lc == 1 || lc == v);
    BatchMatrix hatBA(nx, nux, lc, lc == 1 ? 1 : v);
    BatchMatrix hatBA2(nx, nux, lc, lc == 1 ? 1 : v);
    BatchMatrix Vwork(nux, nx, lc, lc == 1 ? 1 : v);
    auto slice = [&](const BatchMatrix &m) {
        return lane_range(const_cast<BatchMatrix &>(m).group(g), l0, lc);
    };
    batla::copy(hatBA.group(0), slice(f.BA[0]));
    const index_t lane0  = g * v + l0;
    const bool trace     = riccati_flops != nullptr;
    std::uint64_t f0     = trace ? batla::flops::total() : 0;

    for (index_t s = 0; s < n; ++s) {
        View lh = slice(f.LH[static_cast<std::size_t>(s)]);
        batla::copy(lh, slice(f.H[static_cast<std::size_t>(s)]));
        if (s > 0)
            batla::syrk(lh, Vwork.group(0), +1);
        batla::potrf(lh, lane0);
        View l_r = lh.block(0, 0, nu, nu);
        View l_s = lh.block(nu, 0, nx, nu);
        View l_q = lh.block(nu, nu, nx, nx);

        View lb = slice(f.LB[static_cast<std::size_t>(s)]);
        batla::copy(lb, CView(hatBA.group(0).block(0, 0, nx, nu)));
        batla::trsm(lb, CView(l_r), batla::TrsmMode::right_lower_trans,
                    lane0);
        View acl = slice(f.Acl[static_cast<std::size_t>(s)]);
        batla::copy(acl, CView(hatBA.group(0).block(0, nu, nx, nx)));
        batla::gemm(acl, CView(lb), false, CView(l_s), true, -1);
        if (s + 1 < n) {
            View nxt = hatBA2.group(0);
            batla::set_zero(nxt);
            batla::gemm(nxt, CView(acl), false,
                        CView(slice(f.BA[static_cast<std::size_t>(s + 1)])),
                        false, +1);
            std::swap(hatBA, hatBA2);
            batla::trmm(Vwork.group(0),
                        CView(slice(f.BAt[static_cast<std::size_t>(s + 1)])),
                        CView(l_q), batla::TrmmMode::right_lower);
        } else {
            View la = slice(f.LA);
            batla::copy(la, CView(acl));
            batla::trsm(la, CView(l_q), batla::TrsmMode::right_lower_trans,
                        lane0);
        }
    }
    if (trace) {
        *riccati_flops = batla::flops::total() - f0;
        f0             = batla::flops::total();
    }
    // Schur contributions: T = L_Q(first stage)^{-T}, Mbwd = T T',
    // W = T L_A', Mfwd = sum L_B L_B' + L_A L_A'
    {
        BatchMatrix linv(nx, nx, lc, lc == 1 ? 1 : v,
                         MatKind::lower_triangular);
        View li = linv.group(0);
        batla::copy(li, CView(slice(f.LH[static_cast<std::size_t>(n - 1)])
                                  .block(nu, nu, nx, nx)));
        batla::trtri(li, lane0);
        View t = slice(f.T);
        batla::transpose(t, CView(li));
        batla::trsyrk(slice(f.sc_Mbwd), CView(t));
        BatchMatrix lat(nx, nx, lc, lc == 1 ? 1 : v);
        batla::transpose(lat.group(0), CView(slice(f.LA)));
        batla::trmm(slice(f.sc_W), CView(lat.group(0)), CView(t),
                    batla::TrmmMode::left_upper);
        View mf = slice(f.sc_Mfwd);
        batla::set_zero(mf);
        for (index_t s = 0; s < n; ++s)
            batla::syrk(mf, CView(slice(f.LB[static_cast<std::size_t>(s)])),
                        +1);
        batla::syrk(mf, CView(slice(f.LA)), +1);
    }
    if (trace)
        *schur_flops = batla::flops::total() - f0;
}

// Column c adds Mfwd to diagonal c, Mbwd to diagonal c-1, and the coupling
// block between rows c-1 and c; the nu2 direction rule only decides the
// label under which the paper's threads store it, not its value (both
// branches place -L_A T' at block (c, c-1)).
void assemble_schur(Factor &f) {
    const index_t P = f.part.P, nx = f.nx;
    f.schur = BlockTridiag(P, nx, f.opts.vlen);
    for (index_t c = 0; c < P; ++c) {
        index_t prev = (c - 1 + P) % P;
        View md      = f.schur.diag.lane(c);
        batla::add_scaled(md, f.sc_Mfwd.lane(c), 1);
        View mp = f.schur.diag.lane(prev);
        batla::add_scaled(mp, f.sc_Mbwd.lane(c), 1);
        if (c > 0) {
            View kp = f.schur.subdiag.lane(prev);
            CView w = f.sc_W.lane(c);
            for (index_t a = 0; a < nx; ++a)
                for (index_t b = 0; b < nx; ++b)
                    kp(0, a, b) = -w(0, b, a);
        }
        // c == 0 would be the circular coupling block, zero by construction
    }
}

void refresh_tail(Factor &f, index_t workers) {
    f.tail_sys         = BlockTridiag(f.tail_size, f.nx, f.opts.vlen);
    f.tail_sys.diag    = f.schur_cr.M_lvl.back();
    f.tail_sys.subdiag = f.schur_cr.K_lvl.back();
    f.tail_pcr.reset();
    f.tail_prec.reset();
    f.tail_cr1.reset();
    if (f.opts.tail == Tail::pcr)
        f.tail_pcr = blocktri::pcr_factor(f.tail_sys, workers);
    else if (f.opts.tail == Tail::pcg)
        f.tail_prec = blocktri::auto_precond_build(f.tail_sys);
}

void factor_schur(Factor &f, index_t workers) {
    const index_t P = f.part.P;
    index_t lgP     = 0;
    while ((index_t{1} << lgP) < P)
        ++lgP;
    f.tail_size =
        f.opts.tail == Tail::cr1 ? 1 : std::min(P, f.opts.vlen);
    if (f.tail_size <= 1) {
        f.tail_size = 1;
        f.schur_cr  = blocktri::cr_factor(f.schur, workers);
        f.tail_pcr.reset();
        f.tail_prec.reset();
        f.tail_cr1.reset();
    } else {
        index_t lg_tail = 0;
        while ((index_t{1} << lg_tail) < f.tail_size)
            ++lg_tail;
        f.schur_cr = blocktri::cr_factor(f.schur, workers, lgP - lg_tail);
        refresh_tail(f, workers);
    }
}

} // namespace detail

Factor factor(const EqOCP &p_in, const FactorOptions &opts,
              FlopTrace *trace) {
    if ((opts.P & (opts.P - 1)) != 0 || opts.P <= 0)
        throw std::invalid_argument("P must be a power of two");
    if (opts.vlen < 1 || (opts.vlen & (opts.vlen - 1)) != 0)
        throw std::invalid_argument("vlen must be a power of two");
    const EqOCP p = pad_problem(p_in, opts.P);
    Factor f;
    f.opts   = opts;
    f.N_orig = p_in.N;
    f.nx     = p.nx;
    f.nu     = p.nu;
    f.part   = Partition{opts.P, p.N / opts.P, p.N};
    // tracing snapshots a global counter, so run single-threaded
    const index_t workers = trace ? 1 : std::max<index_t>(1, opts.workers);

    detail::pack_columns(p, f.part, f);

    const index_t nx = f.nx, nu = f.nu, nux = nx + nu;
    for (index_t s = 0; s < f.part.n_per; ++s) {
        f.LH.emplace_back(nux, nux, opts.P, opts.vlen,
                          MatKind::lower_triangular);
        f.LB.emplace_back(nx, nu, opts.P, opts.vlen);
        f.Acl.emplace_back(nx, nx, opts.P, opts.vlen);
    }
    f.LA      = BatchMatrix(nx, nx, opts.P, opts.vlen);
    f.T       = BatchMatrix(nx, nx, opts.P, opts.vlen,
                            MatKind::upper_triangular);
    f.sc_Mfwd = BatchMatrix(nx, nx, opts.P, opts.vlen,
                            MatKind::symmetric_lower);
    f.sc_Mbwd = BatchMatrix(nx, nx, opts.P, opts.vlen,
                            MatKind::symmetric_lower);
    f.sc_W    = BatchMatrix(nx, nx, opts.P, opts.vlen);

    const index_t groups = f.H[0].num_groups();
    std::vector<std::uint64_t> rfl(static_cast<std::size_t>(groups), 0),
        sfl(static_cast<std::size_t>(groups), 0);
    parallel_for(groups, workers, [&](index_t g) {
        detail::factor_lanes(f, g, 0, f.opts.vlen,
                             trace ? &rfl[static_cast<std::size_t>(g)]
                                   : nullptr,
                             trace ? &sfl[static_cast<std::size_t>(g)]
                                   : nullptr);
    });
    if (trace) {
        // the per-interval phases are embarrassingly parallel: the critical
        // path is the maximum over work items (use vlen = 1 for per-column
        // attribution)
        for (index_t g = 0; g < groups; ++g) {
            trace->riccati =
                std::max(trace->riccati, rfl[static_cast<std::size_t>(g)]);
            trace->schur =
                std::max(trace->schur, sfl[static_cast<std::size_t>(g)]);
        }
    }

    detail::assemble_schur(f);
    std::uint64_t cr_f0 = trace ? batla::flops::total() : 0;
    detail::factor_schur(f, workers);
    if (trace)
        trace->cr = batla::flops::total() - cr_f0;
    return f;
}

// ---------------------------------------------------------------------------
// FLOP model
// ---------------------------------------------------------------------------

FlopModel flops_critical_path(index_t nx, index_t nu, index_t N, index_t P) {
    if (P <= 0 || (P & (P - 1)) != 0 || N % P != 0)
        throw std::invalid_argument(
            "flops_critical_path: P must be a power of two dividing N");
    const real_t x = static_cast<real_t>(nx), u = static_cast<real_t>(nu);
    const real_t m  = x + u;
    const real_t nP = static_cast<real_t>(N) / static_cast<real_t>(P);
    const real_t lg = std::log2(static_cast<real_t>(P));
    FlopModel fm;
    fm.riccati = nP * (m * m * m / 6 + x * u * u / 2 + x * x * u) +
                 (nP - 1) * (1.5 * m * x * x + 0.5 * m * m * x) +
                 0.5 * x * x * x;
    fm.schur   = 4.0 / 3.0 * x * x * x + nP * 0.5 * u * x * x;
    fm.cr      = x * x * x / 6 + lg * 5.0 / 3.0 * x * x * x;
    fm.total   = fm.riccati + fm.schur + fm.cr;
    fm.serial  = x * x * x / 6 +
                static_cast<real_t>(N) *
                    (0.5 * m * x * x + 0.5 * m * m * x + m * m * m / 6);
    fm.speedup = fm.serial / fm.total;
    return fm;
}

} // namespace cyqlone::kkt
