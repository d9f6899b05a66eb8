#include <cyqlone/qpalm.hpp>
#include <cyqlone/worker_pool.hpp>

#include <algorithm>
#include <cmath>

namespace cyqlone::qpalm {

namespace {

void axpy(Vec &y, const Mat &a, const Vec &x, real_t alpha = 1,
          bool trans = false) {
    index_t m = trans ? a.cols : a.rows;
    index_t n = trans ? a.rows : a.cols;
    assert(static_cast<index_t>(x.size()) == n &&
           static_cast<index_t>(y.size()) == m);
    for (index_t i = 0; i < m; ++i) {
        real_t s = 0;
        for (index_t k = 0; k < n; ++k)
            s += (trans ? a(k, i) : a(i, k)) * x[static_cast<std::size_t>(k)];
        y[static_cast<std::size_t>(i)] += alpha * s;
    }
}

real_t dot(const Vec &a, const Vec &b) {
    real_t s = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

real_t inf_norm(const Vec &v) {
    real_t m = 0;
    for (real_t x : v)
        m = std::max(m, std::abs(x));
    return m;
}

// constraint value g = C x + D u (terminal: C_term x)
Vec stage_constraint(const OCPProblem &p, index_t j,
                     const std::vector<Vec> &u, const std::vector<Vec> &x) {
    if (j == p.N) {
        Vec g(static_cast<std::size_t>(p.ny_term), 0);
        axpy(g, p.C_term, x[static_cast<std::size_t>(j)]);
        return g;
    }
    Vec g(static_cast<std::size_t>(p.ny), 0);
    axpy(g, p.C[static_cast<std::size_t>(j)], x[static_cast<std::size_t>(j)]);
    axpy(g, p.D[static_cast<std::size_t>(j)], u[static_cast<std::size_t>(j)]);
    return g;
}

} // namespace

ALMState ALMState::init(const OCPProblem &p, const QPALMSettings &s) {
    ALMState st;
    st.u.assign(static_cast<std::size_t>(p.N),
                Vec(static_cast<std::size_t>(p.nu), 0));
    st.x.assign(static_cast<std::size_t>(p.N + 1),
                Vec(static_cast<std::size_t>(p.nx), 0));
    st.x[0] = p.x_init;
    st.y.assign(static_cast<std::size_t>(p.N + 1), Vec());
    st.sigma.assign(static_cast<std::size_t>(p.N + 1), Vec());
    for (index_t j = 0; j <= p.N; ++j) {
        index_t ny = j == p.N ? p.ny_term : p.ny;
        st.y[static_cast<std::size_t>(j)].assign(
            static_cast<std::size_t>(ny), 0);
        st.sigma[static_cast<std::size_t>(j)].assign(
            static_cast<std::size_t>(ny), s.sigma_init);
    }
    st.lam.assign(static_cast<std::size_t>(p.N),
                  Vec(static_cast<std::size_t>(p.nx), 0));
    st.ubar = st.u;
    st.xbar = st.x;
    return st;
}

void ALMState::rollout(const OCPProblem &p) {
    for (index_t j = 0; j < p.N; ++j) {
        auto ju    = static_cast<std::size_t>(j);
        Vec next   = p.f[ju];
        axpy(next, p.A[ju], x[ju]);
        axpy(next, p.B[ju], u[ju]);
        x[ju + 1] = std::move(next);
    }
}

std::vector<std::vector<bool>> active_sets(const OCPProblem &p,
                                           const ALMState &st) {
    std::vector<std::vector<bool>> act(static_cast<std::size_t>(p.N + 1));
    for (index_t j = 0; j <= p.N; ++j) {
        auto ju    = static_cast<std::size_t>(j);
        index_t ny = j == p.N ? p.ny_term : p.ny;
        act[ju].assign(static_cast<std::size_t>(ny), false);
        Vec g = stage_constraint(p, j, st.u, st.x);
        for (index_t i = 0; i < ny; ++i) {
            auto iu  = static_cast<std::size_t>(i);
            real_t w = g[iu] + st.y[ju][iu] / st.sigma[ju][iu];
            act[ju][iu] =
                w < p.bl[ju][iu] || w > p.bu[ju][iu];
        }
    }
    return act;
}

AlGradients eval_al_gradients(const OCPProblem &p, const ALMState &st,
                              const QPALMSettings &s) {
    AlGradients g;
    g.ru.assign(static_cast<std::size_t>(p.N),
                Vec(static_cast<std::size_t>(p.nu), 0));
    g.qx.assign(static_cast<std::size_t>(p.N + 1),
                Vec(static_cast<std::size_t>(p.nx), 0));
    g.yhat.assign(static_cast<std::size_t>(p.N + 1), Vec());
    g.cres.assign(static_cast<std::size_t>(p.N),
                  Vec(static_cast<std::size_t>(p.nx), 0));
    const real_t gamma_inv = 1 / s.gamma;
    parallel_for(p.N + 1, s.kkt.workers, [&](index_t j) {
        auto ju    = static_cast<std::size_t>(j);
        index_t ny = j == p.N ? p.ny_term : p.ny;
        // yhat = y + Sigma (g - proj(g + y/Sigma))
        Vec gc = stage_constraint(p, j, st.u, st.x);
        Vec yh(static_cast<std::size_t>(ny), 0);
        for (index_t i = 0; i < ny; ++i) {
            auto iu  = static_cast<std::size_t>(i);
            real_t w = gc[iu] + st.y[ju][iu] / st.sigma[ju][iu];
            real_t pr = std::min(std::max(w, p.bl[ju][iu]), p.bu[ju][iu]);
            yh[iu] = st.y[ju][iu] + st.sigma[ju][iu] * (gc[iu] - pr);
        }
        g.yhat[ju] = std::move(yh);
        if (j < p.N) {
            Vec ru = p.r[ju];
            axpy(ru, p.R[ju], st.u[ju]);
            axpy(ru, p.S[ju], st.x[ju]);
            axpy(ru, p.D[ju], g.yhat[ju], 1, true);
            for (index_t i = 0; i < p.nu; ++i)
                ru[static_cast<std::size_t>(i)] +=
                    gamma_inv * (st.u[ju][static_cast<std::size_t>(i)] -
                                 st.ubar[ju][static_cast<std::size_t>(i)]);
            g.ru[ju] = std::move(ru);
            Vec c    = p.f[ju];
            axpy(c, p.A[ju], st.x[ju]);
            axpy(c, p.B[ju], st.u[ju]);
            for (index_t i = 0; i < p.nx; ++i)
                c[static_cast<std::size_t>(i)] -=
                    st.x[ju + 1][static_cast<std::size_t>(i)];
            g.cres[ju] = std::move(c);
        }
        if (j >= 1) {
            Vec qx = p.q[ju];
            axpy(qx, p.Q[ju], st.x[ju]);
            if (j < p.N) {
                axpy(qx, p.S[ju], st.u[ju], 1, true);
                axpy(qx, p.C[ju], g.yhat[ju], 1, true);
            } else {
                axpy(qx, p.C_term, g.yhat[ju], 1, true);
            }
            for (index_t i = 0; i < p.nx; ++i)
                qx[static_cast<std::size_t>(i)] +=
                    gamma_inv * (st.x[ju][static_cast<std::size_t>(i)] -
                                 st.xbar[ju][static_cast<std::size_t>(i)]);
            g.qx[ju] = std::move(qx);
        }
    });
    return g;
}

EqOCP assemble_newton(const OCPProblem &p, const ALMState &st,
                      const QPALMSettings &s,
                      const std::vector<std::vector<bool>> &active) {
    EqOCP e;
    e.N  = p.N;
    e.nx = p.nx;
    e.nu = p.nu;
    e.resize();
    e.A      = p.A;
    e.B      = p.B;
    e.f      = p.f;
    const real_t gamma_inv = 1 / s.gamma;
    // the Newton system solves for steps: dx^0 = 0, so A_0 and S_0 vanish
    e.A[0] = Mat(p.nx, p.nx);
    parallel_for(p.N + 1, s.kkt.workers, [&](index_t j) {
        auto ju = static_cast<std::size_t>(j);
        if (j < p.N) {
            Mat R = p.R[ju];
            Mat S = j == 0 ? Mat(p.nu, p.nx) : p.S[ju];
            for (index_t i = 0; i < p.ny; ++i) {
                if (!active[ju][static_cast<std::size_t>(i)])
                    continue;
                real_t sg = st.sigma[ju][static_cast<std::size_t>(i)];
                for (index_t a = 0; a < p.nu; ++a) {
                    for (index_t b = 0; b <= a; ++b) {
                        real_t v = sg * p.D[ju](i, a) * p.D[ju](i, b);
                        R(a, b) += v;
                        if (a != b)
                            R(b, a) += v;
                    }
                    if (j > 0)
                        for (index_t b = 0; b < p.nx; ++b)
                            S(a, b) += sg * p.D[ju](i, a) * p.C[ju](i, b);
                }
            }
            for (index_t a = 0; a < p.nu; ++a)
                R(a, a) += gamma_inv;
            e.R[ju] = std::move(R);
            e.S[ju] = std::move(S);
        }
        if (j >= 1) {
            Mat Q = p.Q[ju];
            const Mat &Cj = j == p.N ? p.C_term : p.C[ju];
            index_t ny    = j == p.N ? p.ny_term : p.ny;
            for (index_t i = 0; i < ny; ++i) {
                if (!active[ju][static_cast<std::size_t>(i)])
                    continue;
                real_t sg = st.sigma[ju][static_cast<std::size_t>(i)];
                for (index_t a = 0; a < p.nx; ++a)
                    for (index_t b = 0; b < p.nx; ++b)
                        Q(a, b) += sg * Cj(i, a) * Cj(i, b);
            }
            for (index_t a = 0; a < p.nx; ++a)
                Q(a, a) += gamma_inv;
            e.Q[ju] = std::move(Q);
        }
    });
    return e;
}

LineSearchData build_line_search(const OCPProblem &p, const ALMState &st,
                                 const QPALMSettings &s,
                                 const std::vector<Vec> &du,
                                 const std::vector<Vec> &dx) {
    LineSearchData ls;
    const real_t gamma_inv = 1 / s.gamma;
    // smooth part: eta = d' (H + Gamma^{-1}) d, beta = d' (grad + prox)
    std::vector<real_t> etas(static_cast<std::size_t>(p.N + 1), 0),
        betas(static_cast<std::size_t>(p.N + 1), 0);
    std::vector<std::vector<Breakpoint>> stage_pts(
        static_cast<std::size_t>(p.N + 1));
    std::vector<real_t> eta_fold(static_cast<std::size_t>(p.N + 1), 0),
        beta_fold(static_cast<std::size_t>(p.N + 1), 0);
    parallel_for(p.N + 1, s.kkt.workers, [&](index_t j) {
        auto ju = static_cast<std::size_t>(j);
        real_t eta = 0, beta = 0;
        if (j < p.N) {
            Vec hu(static_cast<std::size_t>(p.nu), 0);
            axpy(hu, p.R[ju], du[ju]);
            axpy(hu, p.S[ju], dx[ju]);
            eta += dot(du[ju], hu);
            Vec gu = p.r[ju];
            axpy(gu, p.R[ju], st.u[ju]);
            axpy(gu, p.S[ju], st.x[ju]);
            for (index_t i = 0; i < p.nu; ++i) {
                auto iu = static_cast<std::size_t>(i);
                gu[iu] += gamma_inv * (st.u[ju][iu] - st.ubar[ju][iu]);
                eta += gamma_inv * du[ju][iu] * du[ju][iu];
            }
            beta += dot(du[ju], gu);
        }
        if (j >= 1) {
            Vec hx(static_cast<std::size_t>(p.nx), 0);
            axpy(hx, p.Q[ju], dx[ju]);
            if (j < p.N)
                axpy(hx, p.S[ju], du[ju], 1, true);
            eta += dot(dx[ju], hx);
            Vec gx = p.q[ju];
            axpy(gx, p.Q[ju], st.x[ju]);
            if (j < p.N)
                axpy(gx, p.S[ju], st.u[ju], 1, true);
            for (index_t i = 0; i < p.nx; ++i) {
                auto iu = static_cast<std::size_t>(i);
                gx[iu] += gamma_inv * (st.x[ju][iu] - st.xbar[ju][iu]);
                eta += gamma_inv * dx[ju][iu] * dx[ju][iu];
            }
            beta += dot(dx[ju], gx);
        }
        etas[ju]  = eta;
        betas[ju] = beta;
        // breakpoints of this stage's constraint rows
        index_t ny = j == p.N ? p.ny_term : p.ny;
        Vec g  = stage_constraint(p, j, st.u, st.x);
        Vec gd = stage_constraint(p, j, du, dx);
        LineSearchData local;
        for (index_t i = 0; i < ny; ++i) {
            auto iu   = static_cast<std::size_t>(i);
            real_t sg = st.sigma[ju][iu], sq = std::sqrt(sg);
            real_t yv = st.y[ju][iu];
            // lower side: alpha = (y + sg (g - bl)) / sq, delta = -sq gd
            real_t al = std::isinf(p.bl[ju][iu])
                            ? ocp::inf
                            : (yv + sg * (g[iu] - p.bl[ju][iu])) / sq;
            local.add_term(al, -sq * gd[iu]);
            // upper side: alpha = -(y + sg (g - bu)) / sq, delta = +sq gd
            real_t au = std::isinf(p.bu[ju][iu])
                            ? ocp::inf
                            : -(yv + sg * (g[iu] - p.bu[ju][iu])) / sq;
            local.add_term(au, sq * gd[iu]);
        }
        eta_fold[ju]  = local.eta;
        beta_fold[ju] = local.beta;
        stage_pts[ju] = std::move(local.pts);
    });
    for (index_t j = 0; j <= p.N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        ls.eta += etas[ju] + eta_fold[ju];
        ls.beta += betas[ju] + beta_fold[ju];
        ls.pts.insert(ls.pts.end(), stage_pts[ju].begin(),
                      stage_pts[ju].end());
    }
    ls.finalize();
    return ls;
}

namespace {

real_t inner_stationarity(const OCPProblem &p, const ALMState &st,
                          const AlGradients &g) {
    real_t res = 0;
    for (index_t j = 0; j < p.N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        Vec su  = g.ru[ju];
        axpy(su, p.B[ju], st.lam[ju], 1, true);
        res = std::max(res, inf_norm(su));
        res = std::max(res, inf_norm(g.cres[ju]));
    }
    for (index_t j = 1; j <= p.N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        Vec sx  = g.qx[ju];
        if (j < p.N)
            axpy(sx, p.A[ju], st.lam[ju], 1, true);
        for (index_t i = 0; i < p.nx; ++i)
            sx[static_cast<std::size_t>(i)] -=
                st.lam[ju - 1][static_cast<std::size_t>(i)];
        res = std::max(res, inf_norm(sx));
    }
    return res;
}

} // namespace

InnerStats inner_newton_loop(const OCPProblem &p, ALMState &st,
                             const QPALMSettings &s, real_t tol) {
    InnerStats stats;
    kkt::Factor factor;
    bool have_factor = false;
    std::vector<std::vector<bool>> factored_active;
    real_t best_stat = ocp::inf;
    index_t stalled  = 0;

    for (index_t it = 0; it < s.max_inner; ++it) {
        AlGradients g     = eval_al_gradients(p, st, s);
        stats.stationarity = inner_stationarity(p, st, g);
        if (stats.stationarity <= tol) {
            stats.converged = true;
            st.active       = active_sets(p, st);
            return stats;
        }
        // bail out when no further progress is being made (the requested
        // tolerance is below the attainable accuracy)
        if (stats.stationarity < 0.9 * best_stat) {
            best_stat = stats.stationarity;
            stalled   = 0;
        } else if (++stalled >= 8) {
            break;
        }
        ++stats.iterations;
        auto act   = active_sets(p, st);
        EqOCP newt = assemble_newton(p, st, s, act);
        if (!have_factor) {
            factor = kkt::factor(newt, s.kkt);
            ++stats.factorizations;
            have_factor     = true;
            factored_active = act;
        } else if (act != factored_active) {
            if (s.use_updates) {
                kkt::SigmaDelta ds;
                ds.stage.resize(static_cast<std::size_t>(p.N));
                for (index_t j = 0; j < p.N; ++j) {
                    auto ju = static_cast<std::size_t>(j);
                    ds.stage[ju] = kkt::active_set_delta(
                        factored_active[ju], act[ju], st.sigma[ju]);
                }
                ds.terminal = kkt::active_set_delta(
                    factored_active[static_cast<std::size_t>(p.N)],
                    act[static_cast<std::size_t>(p.N)],
                    st.sigma[static_cast<std::size_t>(p.N)]);
                auto rep = kkt::update(factor, newt, p.C, p.D, p.C_term, ds);
                if (rep.columns_refactored > 0 || rep.schur_refactored)
                    ++stats.factorizations;
                if (rep.columns_updated > 0)
                    ++stats.factor_updates;
            } else {
                factor = kkt::factor(newt, s.kkt);
                ++stats.factorizations;
            }
            factored_active = act;
        }
        // Newton step: rhs is the negated gradients/residuals
        EqRhs rhs = EqRhs::zero(newt);
        for (index_t j = 0; j < p.N; ++j) {
            auto ju = static_cast<std::size_t>(j);
            for (index_t i = 0; i < p.nu; ++i)
                rhs.ru[ju][static_cast<std::size_t>(i)] =
                    -g.ru[ju][static_cast<std::size_t>(i)];
            for (index_t i = 0; i < p.nx; ++i)
                rhs.fd[ju][static_cast<std::size_t>(i)] =
                    -g.cres[ju][static_cast<std::size_t>(i)];
        }
        for (index_t j = 1; j <= p.N; ++j)
            for (index_t i = 0; i < p.nx; ++i)
                rhs.qx[static_cast<std::size_t>(j)]
                      [static_cast<std::size_t>(i)] =
                    -g.qx[static_cast<std::size_t>(j)]
                         [static_cast<std::size_t>(i)];
        ocp::EqSolution step = kkt::solve(factor, newt, rhs);

        LineSearchData ls = build_line_search(p, st, s, step.u, step.x);
        real_t tau        = 1;
        real_t slope      = psi_prime_at(ls, 0);
        if (slope >= 0)
            break; // descent lost to roundoff: no further progress possible
        {
            auto lr = line_search_exact(ls);
            tau     = lr.tau;
            stats.line_search_iterations += lr.iterations;
        }
        for (index_t j = 0; j < p.N; ++j) {
            auto ju = static_cast<std::size_t>(j);
            for (index_t i = 0; i < p.nu; ++i)
                st.u[ju][static_cast<std::size_t>(i)] +=
                    tau * step.u[ju][static_cast<std::size_t>(i)];
        }
        for (index_t j = 1; j <= p.N; ++j) {
            auto ju = static_cast<std::size_t>(j);
            for (index_t i = 0; i < p.nx; ++i)
                st.x[ju][static_cast<std::size_t>(i)] +=
                    tau * step.x[ju][static_cast<std::size_t>(i)];
        }
        // dynamics multipliers move with the same step size as the primal
        // iterate: the Newton multiplier belongs to the full step, and the
        // interpolation keeps the stationarity residual contracting by
        // (1 - tau) within the active quadratic region
        for (index_t j = 0; j < p.N; ++j) {
            auto ju = static_cast<std::size_t>(j);
            for (index_t i = 0; i < p.nx; ++i)
                st.lam[ju][static_cast<std::size_t>(i)] =
                    (1 - tau) * st.lam[ju][static_cast<std::size_t>(i)] +
                    tau * step.lam[ju][static_cast<std::size_t>(i)];
        }
    }
    st.active = active_sets(p, st);
    return stats;
}

Solution alm_outer_loop(const OCPProblem &p, const QPALMSettings &s,
                        const Solution *warm) {
    ALMState st = ALMState::init(p, s);
    if (warm) {
        st.u = warm->u;
        if (!warm->y.empty())
            st.y = warm->y;
        if (!warm->lam.empty())
            st.lam = warm->lam;
    }
    st.rollout(p);
    st.ubar = st.u;
    st.xbar = st.x;

    Solution sol;
    sol.status = "max_outer_iterations";
    std::vector<real_t> prev_viol(static_cast<std::size_t>(p.N + 1),
                                  ocp::inf);
    real_t inner_tol = s.inner_tol_init;
    for (index_t outer = 1; outer <= s.max_outer; ++outer) {
        InnerStats is = inner_newton_loop(p, st, s, inner_tol);
        sol.outer_iterations = outer;
        sol.inner_iterations += is.iterations;
        sol.line_search_iterations += is.line_search_iterations;
        sol.factorizations += is.factorizations;
        sol.factor_updates += is.factor_updates;

        AlGradients g = eval_al_gradients(p, st, s);
        // convergence of the original problem with candidate multipliers
        Solution cand;
        cand.u   = st.u;
        cand.x   = st.x;
        cand.y   = g.yhat;
        cand.lam = st.lam;
        cand.residuals = ocp::kkt_residual_qp(p, cand);
        if (cand.residuals.primal <= s.eps_abs &&
            cand.residuals.dual <= s.eps_abs) {
            sol.u         = std::move(cand.u);
            sol.x         = std::move(cand.x);
            sol.y         = std::move(cand.y);
            sol.lam       = std::move(cand.lam);
            sol.residuals = cand.residuals;
            sol.status    = "solved";
            sol.objective = p.objective(sol.u, sol.x);
            return sol;
        }
        // multiplier and anchor updates, penalty growth on stalled stages
        st.y    = g.yhat;
        st.ubar = st.u;
        st.xbar = st.x;
        for (index_t j = 0; j <= p.N; ++j) {
            auto ju    = static_cast<std::size_t>(j);
            index_t ny = j == p.N ? p.ny_term : p.ny;
            Vec gc     = stage_constraint(p, j, st.u, st.x);
            real_t v   = 0;
            for (index_t i = 0; i < ny; ++i) {
                auto iu   = static_cast<std::size_t>(i);
                real_t pr = std::min(std::max(gc[iu], p.bl[ju][iu]),
                                     p.bu[ju][iu]);
                v         = std::max(v, std::abs(gc[iu] - pr));
            }
            // grow the penalty only while this stage is actually infeasible
            if (v > s.eps_abs && v > 0.25 * prev_viol[ju]) {
                for (index_t i = 0; i < ny; ++i) {
                    auto iu = static_cast<std::size_t>(i);
                    st.sigma[ju][iu] = std::min(
                        st.sigma[ju][iu] * s.sigma_growth, s.sigma_max);
                }
            }
            prev_viol[ju] = v;
        }
        inner_tol = std::max(inner_tol * s.inner_tol_factor,
                             s.inner_tol_min);
    }
    sol.u   = st.u;
    sol.x   = st.x;
    sol.y   = eval_al_gradients(p, st, s).yhat;
    sol.lam = st.lam;
    sol.residuals = ocp::kkt_residual_qp(p, sol);
    sol.objective = p.objective(sol.u, sol.x);
    return sol;
}

} // namespace cyqlone::qpalm
