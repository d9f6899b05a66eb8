#include <cyqlone/kkt_solver.hpp>
#include <cyqlone/worker_pool.hpp>

namespace cyqlone::kkt {

using batla::CView;
using batla::MatKind;
using batla::View;

namespace {

struct SolveWork {
    // per stage position: (u, x) slots and interior multiplier slots,
    // batched over columns
    std::vector<BatchMatrix> wu, wx; ///< n entries, nu/nx by 1
    std::vector<BatchMatrix> wl;     ///< n-1 entries
    BatchMatrix fwd;     ///< per column: forward coupling-row contribution
    BatchMatrix bwd_neg; ///< per column: T wx(first stage)
};

} // namespace

EqSolution solve(const Factor &f, const EqOCP &p, const EqRhs &rhs) {
    const index_t nx = f.nx, nu = f.nu;
    const index_t P = f.part.P, n = f.part.n_per, v = f.opts.vlen;
    const index_t N = f.N_orig;
    const index_t workers = std::max<index_t>(1, f.opts.workers);
    assert(p.nx == nx && p.nu == nu && p.N == N);

    SolveWork w;
    for (index_t s = 0; s < n; ++s) {
        w.wu.emplace_back(nu, 1, P, v);
        w.wx.emplace_back(nx, 1, P, v);
        if (s + 1 < n)
            w.wl.emplace_back(nx, 1, P, v);
    }
    w.fwd     = BatchMatrix(nx, 1, P, v);
    w.bwd_neg = BatchMatrix(nx, 1, P, v);

    // scatter the right-hand side into column positions (zero on padding)
    for (index_t c = 0; c < P; ++c)
        for (index_t s = 0; s < n; ++s) {
            index_t j  = f.part.stage_of(c, s);
            index_t xi = f.part.x_index_of(c, s);
            if (j < N)
                for (index_t i = 0; i < nu; ++i)
                    w.wu[static_cast<std::size_t>(s)](c, i, 0) =
                        rhs.ru[static_cast<std::size_t>(j)]
                              [static_cast<std::size_t>(i)];
            if (xi <= N)
                for (index_t i = 0; i < nx; ++i)
                    w.wx[static_cast<std::size_t>(s)](c, i, 0) =
                        rhs.qx[static_cast<std::size_t>(xi)]
                              [static_cast<std::size_t>(i)];
            if (s + 1 < n) {
                index_t j2 = f.part.stage_of(c, s + 1);
                if (j2 < N)
                    for (index_t i = 0; i < nx; ++i)
                        w.wl[static_cast<std::size_t>(s)](c, i, 0) =
                            rhs.fd[static_cast<std::size_t>(j2)]
                                  [static_cast<std::size_t>(i)];
            }
        }

    auto LH = [&](index_t s) -> const BatchMatrix & {
        return f.LH[static_cast<std::size_t>(s)];
    };

    // ---- forward substitution through the block columns -------------------
    const index_t groups = w.wu[0].num_groups();
    BatchMatrix t1(nx, 1, P, v), t2(nx, 1, P, v);
    parallel_for(groups, workers, [&](index_t g) {
        for (index_t s = 0; s < n; ++s) {
            CView lh = LH(s).group(g);
            CView lr = lh.block(0, 0, nu, nu);
            CView ls = lh.block(nu, 0, nx, nu);
            CView lq = lh.block(nu, nu, nx, nx);
            View u   = w.wu[static_cast<std::size_t>(s)].group(g);
            View x   = w.wx[static_cast<std::size_t>(s)].group(g);
            batla::trsm(u, lr, batla::TrsmMode::left_lower);
            batla::gemm(x, ls, false, CView(u), false, -1);
            batla::trsm(x, lq, batla::TrsmMode::left_lower);
            if (s + 1 < n) {
                // interior multiplier row: w_l = -L_Q' r_l - w_x
                View wl = w.wl[static_cast<std::size_t>(s)].group(g);
                View tt = t1.group(g);
                batla::trmm(tt, CView(wl), lq,
                            batla::TrmmMode::left_lower_trans, -1);
                batla::copy(wl, CView(tt));
                batla::add_scaled(wl, CView(x), -1);
                // propagate to the next stage: [ru; rx] -= BAt (L_Q w_l)
                View t = t2.group(g);
                batla::trmm(t, CView(wl), lq, batla::TrmmMode::left_lower);
                CView bat = f.BAt[static_cast<std::size_t>(s + 1)].group(g);
                View un   = w.wu[static_cast<std::size_t>(s + 1)].group(g);
                View xn   = w.wx[static_cast<std::size_t>(s + 1)].group(g);
                batla::gemm(un, bat.block(0, 0, nu, nx), false, CView(t),
                            false, -1);
                batla::gemm(xn, bat.block(nu, 0, nx, nx), false, CView(t),
                            false, -1);
            }
        }
        // coupling-row contributions of this group's columns
        View fv = w.fwd.group(g);
        batla::set_zero(fv);
        for (index_t s = 0; s < n; ++s) {
            batla::gemm(fv, CView(f.LB[static_cast<std::size_t>(s)].group(g)),
                        false,
                        CView(w.wu[static_cast<std::size_t>(s)].group(g)),
                        false, +1);
            CView lq = LH(s).group(g).block(nu, nu, nx, nx);
            if (s + 1 < n) {
                // star blocks: Acl L_Q^{-T} (w_x + w_l)
                View t = t1.group(g);
                batla::copy(t, CView(w.wx[static_cast<std::size_t>(s)]
                                         .group(g)));
                batla::add_scaled(t, CView(w.wl[static_cast<std::size_t>(s)]
                                               .group(g)),
                                  +1);
                batla::trsm(t, lq, batla::TrsmMode::left_lower_trans);
                batla::gemm(fv,
                            CView(f.Acl[static_cast<std::size_t>(s)].group(g)),
                            false, CView(t), false, +1);
            } else {
                batla::gemm(fv, CView(f.LA.group(g)), false,
                            CView(w.wx[static_cast<std::size_t>(s)].group(g)),
                            false, +1);
                View bn = w.bwd_neg.group(g);
                batla::trmm(bn,
                            CView(w.wx[static_cast<std::size_t>(s)].group(g)),
                            CView(f.T.group(g)), batla::TrmmMode::left_upper);
            }
        }
    });

    // ---- Schur system for the coupling multipliers ------------------------
    std::vector<real_t> lam_c(static_cast<std::size_t>(P * nx), 0);
    for (index_t i = 0; i < P; ++i) {
        index_t j = f.part.n_per * i;
        for (index_t a = 0; a < nx; ++a) {
            real_t val = j < N ? rhs.fd[static_cast<std::size_t>(j)]
                                       [static_cast<std::size_t>(a)]
                               : 0;
            val -= w.fwd(i, a, 0);
            val += w.bwd_neg((i + 1) % P, a, 0);
            lam_c[static_cast<std::size_t>(i * nx + a)] = val;
        }
    }
    f.schur_cr.forward(lam_c, workers);
    if (f.tail_size > 1) {
        const index_t stride = P / f.tail_size;
        std::vector<real_t> tb(static_cast<std::size_t>(f.tail_size * nx));
        for (index_t k = 0; k < f.tail_size; ++k)
            std::copy_n(lam_c.data() + k * stride * nx, nx,
                        tb.data() + k * nx);
        std::vector<real_t> tx;
        if (f.tail_pcr) {
            tx = tb;
            f.tail_pcr->resolve(tx, workers);
        } else {
            assert(f.tail_prec);
            auto r = blocktri::pcg_solve(f.tail_sys, tb, *f.tail_prec,
                                         f.opts.pcg_tol,
                                         f.opts.pcg_max_iter);
            f.pcg_tail_iterations += r.iterations;
            if (r.converged) {
                tx = std::move(r.x);
            } else {
                // non-convergence: fall back to a direct CR solve of the tail
                ++f.pcg_tail_fallbacks;
                if (!f.tail_cr1)
                    f.tail_cr1 = blocktri::cr_factor(f.tail_sys, workers);
                tx = blocktri::cr_resolve(*f.tail_cr1, tb, workers);
            }
        }
        for (index_t k = 0; k < f.tail_size; ++k)
            std::copy_n(tx.data() + k * nx, nx,
                        lam_c.data() + k * stride * nx);
    }
    f.schur_cr.backward(lam_c, workers);
    for (auto &x : lam_c)
        x = -x;

    // ---- back substitution through the block columns ----------------------
    BatchMatrix lam_f(nx, 1, P, v), lam_b(nx, 1, P, v);
    for (index_t c = 0; c < P; ++c) {
        index_t cb = (c - 1 + P) % P;
        for (index_t a = 0; a < nx; ++a) {
            lam_f(c, a, 0) = lam_c[static_cast<std::size_t>(c * nx + a)];
            lam_b(c, a, 0) = lam_c[static_cast<std::size_t>(cb * nx + a)];
        }
    }
    parallel_for(groups, workers, [&](index_t g) {
        CView lf = lam_f.group(g);
        CView lb = lam_b.group(g);
        // y = D w - LA' lam (per slot), then solve L_R' z = y bottom-up
        for (index_t s = 0; s < n; ++s) {
            View u = w.wu[static_cast<std::size_t>(s)].group(g);
            View x = w.wx[static_cast<std::size_t>(s)].group(g);
            batla::gemm(u, CView(f.LB[static_cast<std::size_t>(s)].group(g)),
                        true, lf, false, -1);
            if (s + 1 < n) {
                // z* = L_Q^{-1} Acl' lam_f hits both the x and lambda slots
                View zs = t1.group(g);
                batla::set_zero(zs);
                batla::gemm(zs,
                            CView(f.Acl[static_cast<std::size_t>(s)].group(g)),
                            true, lf, false, +1);
                batla::trsm(zs, LH(s).group(g).block(nu, nu, nx, nx),
                            batla::TrsmMode::left_lower);
                batla::add_scaled(x, CView(zs), -1);
                View wl = w.wl[static_cast<std::size_t>(s)].group(g);
                // interior multiplier slots carry signature -1
                for (index_t a = 0; a < nx; ++a)
                    for (index_t l2 = 0; l2 < v; ++l2)
                        wl(l2, a, 0) = -wl(l2, a, 0) - zs(l2, a, 0);
            } else {
                batla::gemm(x, CView(f.LA.group(g)), true, lf, false, -1);
                // +T' lam_b from the backward coupling row
                View t = t1.group(g);
                batla::trmm(t, lb, CView(f.T.group(g)),
                            batla::TrmmMode::left_upper_trans);
                batla::add_scaled(x, CView(t), +1);
            }
        }
        // bottom-up solve with L_R'
        for (index_t s = n; s-- > 0;) {
            CView lh = LH(s).group(g);
            CView lr = lh.block(0, 0, nu, nu);
            CView ls = lh.block(nu, 0, nx, nu);
            CView lq = lh.block(nu, nu, nx, nx);
            View u   = w.wu[static_cast<std::size_t>(s)].group(g);
            View x   = w.wx[static_cast<std::size_t>(s)].group(g);
            if (s + 1 < n) {
                // lambda slot between s and s+1, then fold into x
                View wl = w.wl[static_cast<std::size_t>(s)].group(g);
                View t  = t1.group(g);
                CView bat = f.BAt[static_cast<std::size_t>(s + 1)].group(g);
                View zn(t2.group(g));
                batla::set_zero(zn);
                batla::gemm(zn, bat.block(0, 0, nu, nx), true,
                            CView(w.wu[static_cast<std::size_t>(s + 1)]
                                      .group(g)),
                            false, +1);
                batla::gemm(zn, bat.block(nu, 0, nx, nx), true,
                            CView(w.wx[static_cast<std::size_t>(s + 1)]
                                      .group(g)),
                            false, +1);
                // y_l' = y_l - L_Q' (BAt' z_next); z_l = -L_Q y_l'
                batla::trmm(t, CView(zn), lq,
                            batla::TrmmMode::left_lower_trans);
                batla::add_scaled(wl, CView(t), -1);
                batla::trmm(t, CView(wl), lq, batla::TrmmMode::left_lower);
                for (index_t a = 0; a < nx; ++a)
                    for (index_t l2 = 0; l2 < v; ++l2)
                        wl(l2, a, 0) = -t(l2, a, 0);
                // x slot: y_x' = y_x + L_Q^{-1} z_l
                batla::copy(t, CView(wl));
                batla::trsm(t, lq, batla::TrsmMode::left_lower);
                batla::add_scaled(x, CView(t), +1);
            }
            batla::trsm(x, lq, batla::TrsmMode::left_lower_trans);
            batla::gemm(u, ls, true, CView(x), false, -1);
            batla::trsm(u, lr, batla::TrsmMode::left_lower_trans);
        }
    });

    // ---- gather the solution in stage-major layout -------------------------
    EqSolution out;
    out.u.assign(static_cast<std::size_t>(N),
                 Vec(static_cast<std::size_t>(nu)));
    out.x.assign(static_cast<std::size_t>(N + 1),
                 Vec(static_cast<std::size_t>(nx)));
    out.lam.assign(static_cast<std::size_t>(N),
                   Vec(static_cast<std::size_t>(nx)));
    out.x[0] = p.x_init;
    for (index_t c = 0; c < P; ++c)
        for (index_t s = 0; s < n; ++s) {
            index_t j  = f.part.stage_of(c, s);
            index_t xi = f.part.x_index_of(c, s);
            if (j < N)
                for (index_t i = 0; i < nu; ++i)
                    out.u[static_cast<std::size_t>(j)]
                         [static_cast<std::size_t>(i)] =
                        w.wu[static_cast<std::size_t>(s)](c, i, 0);
            if (xi <= N)
                for (index_t i = 0; i < nx; ++i)
                    out.x[static_cast<std::size_t>(xi)]
                         [static_cast<std::size_t>(i)] =
                        w.wx[static_cast<std::size_t>(s)](c, i, 0);
            if (s + 1 < n) {
                index_t j2 = f.part.stage_of(c, s + 1);
                if (j2 < N)
                    for (index_t i = 0; i < nx; ++i)
                        out.lam[static_cast<std::size_t>(j2)]
                               [static_cast<std::size_t>(i)] =
                            w.wl[static_cast<std::size_t>(s)](c, i, 0);
            }
        }
    for (index_t i = 0; i < P; ++i) {
        index_t j = f.part.n_per * i;
        if (j < N)
            for (index_t a = 0; a < nx; ++a)
                out.lam[static_cast<std::size_t>(j)]
                       [static_cast<std::size_t>(a)] =
                    lam_c[static_cast<std::size_t>(i * nx + a)];
    }
    return out;
}

EqSolution solve_problem(const EqOCP &p, const FactorOptions &opts,
                         Factor *factor_out) {
    Factor local;
    Factor &f = factor_out ? *factor_out : local;
    f         = factor(p, opts);
    return solve(f, p, EqRhs::of_problem(p));
}

} // namespace cyqlone::kkt
