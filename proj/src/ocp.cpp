#include <cyqlone/ocp.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace cyqlone::ocp {

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

real_t inf_norm(const Vec &v) {
    real_t m = 0;
    for (real_t x : v)
        m = std::max(m, std::abs(x));
    return m;
}

// Small dense LU solve with partial pivoting (for normalize_E).
void lu_solve_inplace(Mat a, std::vector<Vec *> rhs_cols) {
    const index_t n = a.rows;
    std::vector<index_t> piv(static_cast<std::size_t>(n));
    for (index_t k = 0; k < n; ++k) {
        index_t p = k;
        for (index_t i = k + 1; i < n; ++i)
            if (std::abs(a(i, k)) > std::abs(a(p, k)))
                p = i;
        if (a(p, k) == real_t{0})
            throw std::runtime_error("normalize_E: singular E matrix");
        piv[static_cast<std::size_t>(k)] = p;
        if (p != k)
            for (index_t c = 0; c < n; ++c)
                std::swap(a(k, c), a(p, c));
        for (index_t i = k + 1; i < n; ++i) {
            a(i, k) /= a(k, k);
            for (index_t c = k + 1; c < n; ++c)
                a(i, c) -= a(i, k) * a(k, c);
        }
    }
    auto solve_vec = [&](Vec &b) {
        for (index_t k = 0; k < n; ++k) {
            index_t p = piv[static_cast<std::size_t>(k)];
            if (p != k)
                std::swap(b[static_cast<std::size_t>(k)],
                          b[static_cast<std::size_t>(p)]);
            for (index_t i = k + 1; i < n; ++i)
                b[static_cast<std::size_t>(i)] -=
                    a(i, k) * b[static_cast<std::size_t>(k)];
        }
        for (index_t k = n; k-- > 0;) {
            for (index_t c = k + 1; c < n; ++c)
                b[static_cast<std::size_t>(k)] -=
                    a(k, c) * b[static_cast<std::size_t>(c)];
            b[static_cast<std::size_t>(k)] /= a(k, k);
        }
    };
    for (Vec *b : rhs_cols)
        solve_vec(*b);
}

Mat lu_solve_mat(const Mat &e, const Mat &b) {
    Mat x = b;
    std::vector<Vec> cols(static_cast<std::size_t>(b.cols),
                          Vec(static_cast<std::size_t>(b.rows)));
    for (index_t c = 0; c < b.cols; ++c)
        for (index_t r = 0; r < b.rows; ++r)
            cols[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)] =
                b(r, c);
    std::vector<Vec *> ptrs;
    for (auto &v : cols)
        ptrs.push_back(&v);
    lu_solve_inplace(e, ptrs);
    for (index_t c = 0; c < b.cols; ++c)
        for (index_t r = 0; r < b.rows; ++r)
            x(r, c) = cols[static_cast<std::size_t>(c)]
                          [static_cast<std::size_t>(r)];
    return x;
}

} // namespace

void EqOCP::resize() {
    A.assign(static_cast<std::size_t>(N), Mat(nx, nx));
    B.assign(static_cast<std::size_t>(N), Mat(nx, nu));
    f.assign(static_cast<std::size_t>(N), Vec(static_cast<std::size_t>(nx)));
    R.assign(static_cast<std::size_t>(N), Mat(nu, nu));
    S.assign(static_cast<std::size_t>(N), Mat(nu, nx));
    Q.assign(static_cast<std::size_t>(N + 1), Mat(nx, nx));
    q.assign(static_cast<std::size_t>(N + 1),
             Vec(static_cast<std::size_t>(nx)));
    r.assign(static_cast<std::size_t>(N), Vec(static_cast<std::size_t>(nu)));
    x_init.assign(static_cast<std::size_t>(nx), 0);
}

real_t EqOCP::objective(const std::vector<Vec> &u,
                        const std::vector<Vec> &x) const {
    real_t obj = 0;
    for (index_t j = 0; j < N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        Vec hu(static_cast<std::size_t>(nu), 0),
            hx(static_cast<std::size_t>(nx), 0);
        axpy(hu, R[ju], u[ju]);
        axpy(hu, S[ju], x[ju]);
        axpy(hx, Q[ju], x[ju]); // Q[0] weighs the fixed x_init
        for (index_t i = 0; i < nu; ++i)
            obj += (real_t{0.5} * hu[static_cast<std::size_t>(i)] +
                    r[ju][static_cast<std::size_t>(i)]) *
                   u[ju][static_cast<std::size_t>(i)];
        for (index_t i = 0; i < nx; ++i)
            obj += (real_t{0.5} * hx[static_cast<std::size_t>(i)] +
                    q[ju][static_cast<std::size_t>(i)]) *
                   x[ju][static_cast<std::size_t>(i)];
        Vec su(static_cast<std::size_t>(nx), 0);
        axpy(su, S[ju], u[ju], 1, true);
        for (index_t i = 0; i < nx; ++i)
            obj += real_t{0.5} * su[static_cast<std::size_t>(i)] *
                   x[ju][static_cast<std::size_t>(i)];
    }
    auto jN = static_cast<std::size_t>(N);
    Vec hx(static_cast<std::size_t>(nx), 0);
    axpy(hx, Q[jN], x[jN]);
    for (index_t i = 0; i < nx; ++i)
        obj += (real_t{0.5} * hx[static_cast<std::size_t>(i)] +
                q[jN][static_cast<std::size_t>(i)]) *
               x[jN][static_cast<std::size_t>(i)];
    return obj;
}

EqRhs EqRhs::zero(const EqOCP &p) {
    EqRhs rhs;
    rhs.ru.assign(static_cast<std::size_t>(p.N),
                  Vec(static_cast<std::size_t>(p.nu), 0));
    rhs.qx.assign(static_cast<std::size_t>(p.N + 1),
                  Vec(static_cast<std::size_t>(p.nx), 0));
    rhs.fd.assign(static_cast<std::size_t>(p.N),
                  Vec(static_cast<std::size_t>(p.nx), 0));
    return rhs;
}

EqRhs EqRhs::of_problem(const EqOCP &p) {
    EqRhs rhs = zero(p);
    for (index_t j = 0; j < p.N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        for (index_t i = 0; i < p.nu; ++i)
            rhs.ru[ju][static_cast<std::size_t>(i)] =
                -p.r[ju][static_cast<std::size_t>(i)];
        for (index_t i = 0; i < p.nx; ++i)
            rhs.fd[ju][static_cast<std::size_t>(i)] =
                -p.f[ju][static_cast<std::size_t>(i)];
    }
    for (index_t j = 1; j <= p.N; ++j)
        for (index_t i = 0; i < p.nx; ++i)
            rhs.qx[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] =
                -p.q[static_cast<std::size_t>(j)]
                    [static_cast<std::size_t>(i)];
    // eliminated initial state: ru[0] -= S_0 x_init, fd[0] -= A_0 x_init
    axpy(rhs.ru[0], p.S[0], p.x_init, -1);
    axpy(rhs.fd[0], p.A[0], p.x_init, -1);
    return rhs;
}

real_t EqResiduals::max() const {
    return std::max(std::max(stat_u, stat_x), std::max(dynamics, terminal));
}

EqResiduals kkt_residual_eq(const EqOCP &p, const EqRhs &rhs,
                            const EqSolution &s) {
    EqResiduals res;
    for (index_t j = 0; j < p.N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        Vec g = rhs.ru[ju];
        for (auto &v : g)
            v = -v;
        axpy(g, p.R[ju], s.u[ju]);
        if (j > 0)
            axpy(g, p.S[ju], s.x[ju]);
        axpy(g, p.B[ju], s.lam[ju], 1, true);
        res.stat_u = std::max(res.stat_u, inf_norm(g));

        Vec c = rhs.fd[ju];
        for (auto &v : c)
            v = -v;
        axpy(c, p.B[ju], s.u[ju]);
        if (j > 0)
            axpy(c, p.A[ju], s.x[ju]);
        for (index_t i = 0; i < p.nx; ++i)
            c[static_cast<std::size_t>(i)] -=
                s.x[ju + 1][static_cast<std::size_t>(i)];
        res.dynamics = std::max(res.dynamics, inf_norm(c));
    }
    for (index_t j = 1; j < p.N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        Vec g = rhs.qx[ju];
        for (auto &v : g)
            v = -v;
        axpy(g, p.S[ju], s.u[ju], 1, true);
        axpy(g, p.Q[ju], s.x[ju]);
        axpy(g, p.A[ju], s.lam[ju], 1, true);
        for (index_t i = 0; i < p.nx; ++i)
            g[static_cast<std::size_t>(i)] -=
                s.lam[ju - 1][static_cast<std::size_t>(i)];
        res.stat_x = std::max(res.stat_x, inf_norm(g));
    }
    {
        auto jN = static_cast<std::size_t>(p.N);
        Vec g = rhs.qx[jN];
        for (auto &v : g)
            v = -v;
        axpy(g, p.Q[jN], s.x[jN]);
        for (index_t i = 0; i < p.nx; ++i)
            g[static_cast<std::size_t>(i)] -=
                s.lam[jN - 1][static_cast<std::size_t>(i)];
        res.terminal = inf_norm(g);
    }
    return res;
}

void OCPProblem::resize() {
    A.assign(static_cast<std::size_t>(N), Mat(nx, nx));
    B.assign(static_cast<std::size_t>(N), Mat(nx, nu));
    f.assign(static_cast<std::size_t>(N), Vec(static_cast<std::size_t>(nx)));
    R.assign(static_cast<std::size_t>(N), Mat(nu, nu));
    S.assign(static_cast<std::size_t>(N), Mat(nu, nx));
    Q.assign(static_cast<std::size_t>(N + 1), Mat(nx, nx));
    q.assign(static_cast<std::size_t>(N + 1),
             Vec(static_cast<std::size_t>(nx)));
    r.assign(static_cast<std::size_t>(N), Vec(static_cast<std::size_t>(nu)));
    C.assign(static_cast<std::size_t>(N), Mat(ny, nx));
    D.assign(static_cast<std::size_t>(N), Mat(ny, nu));
    bl.assign(static_cast<std::size_t>(N), Vec(static_cast<std::size_t>(ny),
                                               -inf));
    bu.assign(static_cast<std::size_t>(N), Vec(static_cast<std::size_t>(ny),
                                               inf));
    bl.push_back(Vec(static_cast<std::size_t>(ny_term), -inf));
    bu.push_back(Vec(static_cast<std::size_t>(ny_term), inf));
    C_term = Mat(ny_term, nx);
    x_init.assign(static_cast<std::size_t>(nx), 0);
}

real_t OCPProblem::objective(const std::vector<Vec> &u,
                             const std::vector<Vec> &x) const {
    return equality_part().objective(u, x);
}

EqOCP OCPProblem::equality_part() const {
    EqOCP e;
    e.N  = N;
    e.nx = nx;
    e.nu = nu;
    e.A  = A;
    e.B  = B;
    e.f  = f;
    e.R  = R;
    e.S  = S;
    e.Q  = Q;
    e.q  = q;
    e.r  = r;
    e.x_init = x_init;
    return e;
}

ResidualReport kkt_residual_qp(const OCPProblem &p, const Solution &s) {
    ResidualReport rep;
    const index_t N = p.N;
    // primal: dynamics, initial state, bound violations
    for (index_t i = 0; i < p.nx; ++i)
        rep.primal = std::max(
            rep.primal, std::abs(s.x[0][static_cast<std::size_t>(i)] -
                                 p.x_init[static_cast<std::size_t>(i)]));
    for (index_t j = 0; j < N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        Vec c   = p.f[ju];
        axpy(c, p.A[ju], s.x[ju]);
        axpy(c, p.B[ju], s.u[ju]);
        for (index_t i = 0; i < p.nx; ++i)
            c[static_cast<std::size_t>(i)] -=
                s.x[ju + 1][static_cast<std::size_t>(i)];
        rep.primal = std::max(rep.primal, inf_norm(c));
    }
    auto bound_terms = [&](const Vec &g, const Vec &lo, const Vec &hi,
                           const Vec &y) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            real_t v = std::max(g[i] - hi[i], lo[i] - g[i]);
            rep.primal = std::max(rep.primal, std::max(v, real_t{0}));
            real_t gap_lo = std::isinf(lo[i]) ? inf : g[i] - lo[i];
            real_t gap_hi = std::isinf(hi[i]) ? inf : hi[i] - g[i];
            real_t gap    = std::min(std::abs(gap_lo), std::abs(gap_hi));
            if (!std::isinf(gap))
                rep.complementarity =
                    std::max(rep.complementarity, std::abs(y[i]) * gap);
        }
    };
    for (index_t j = 0; j < N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        Vec g(static_cast<std::size_t>(p.ny), 0);
        axpy(g, p.C[ju], s.x[ju]);
        axpy(g, p.D[ju], s.u[ju]);
        bound_terms(g, p.bl[ju], p.bu[ju], s.y[ju]);
    }
    {
        Vec g(static_cast<std::size_t>(p.ny_term), 0);
        axpy(g, p.C_term, s.x[static_cast<std::size_t>(N)]);
        bound_terms(g, p.bl[static_cast<std::size_t>(N)],
                    p.bu[static_cast<std::size_t>(N)],
                    s.y[static_cast<std::size_t>(N)]);
    }
    // dual: stationarity with multipliers (y, lam); x^0 is fixed
    for (index_t j = 0; j < N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        Vec g   = p.r[ju];
        axpy(g, p.R[ju], s.u[ju]);
        axpy(g, p.S[ju], s.x[ju]);
        axpy(g, p.D[ju], s.y[ju], 1, true);
        axpy(g, p.B[ju], s.lam[ju], 1, true);
        rep.dual = std::max(rep.dual, inf_norm(g));
    }
    for (index_t j = 1; j < N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        Vec g   = p.q[ju];
        axpy(g, p.S[ju], s.u[ju], 1, true);
        axpy(g, p.Q[ju], s.x[ju]);
        axpy(g, p.C[ju], s.y[ju], 1, true);
        axpy(g, p.A[ju], s.lam[ju], 1, true);
        for (index_t i = 0; i < p.nx; ++i)
            g[static_cast<std::size_t>(i)] -=
                s.lam[ju - 1][static_cast<std::size_t>(i)];
        rep.dual = std::max(rep.dual, inf_norm(g));
    }
    {
        auto jN = static_cast<std::size_t>(N);
        Vec g   = p.q[jN];
        axpy(g, p.Q[jN], s.x[jN]);
        axpy(g, p.C_term, s.y[jN], 1, true);
        for (index_t i = 0; i < p.nx; ++i)
            g[static_cast<std::size_t>(i)] -=
                s.lam[jN - 1][static_cast<std::size_t>(i)];
        rep.dual = std::max(rep.dual, inf_norm(g));
    }
    return rep;
}

OCPProblem normalize_E(const OCPProblem &p) {
    OCPProblem out = p;
    if (p.E.empty())
        return out;
    assert(static_cast<index_t>(p.E.size()) == p.N + 1);
    Vec xi = p.x_init;
    std::vector<Vec *> xptr{&xi};
    lu_solve_inplace(p.E[0], xptr);
    out.x_init = xi;
    for (index_t j = 0; j < p.N; ++j) {
        auto ju      = static_cast<std::size_t>(j);
        const Mat &e = p.E[ju + 1];
        out.A[ju]    = lu_solve_mat(e, p.A[ju]);
        out.B[ju]    = lu_solve_mat(e, p.B[ju]);
        Vec fj       = p.f[ju];
        std::vector<Vec *> fptr{&fj};
        lu_solve_inplace(e, fptr);
        out.f[ju] = fj;
    }
    out.E.clear();
    return out;
}

OCPProblem mass_spring_generate(const MassSpringConfig &cfg) {
    const index_t M = cfg.masses;
    if (M % 2 != 0 || M <= 0)
        throw std::invalid_argument(
            "mass_spring_generate: mass count must be even and positive");
    const index_t nx = 2 * M, nu = M / 2;
    const real_t k = cfg.k, m = cfg.m;

    Mat Ac(nx, nx);
    for (index_t i = 0; i < M; ++i)
        Ac(i, M + i) = 1;
    for (index_t i = 0; i < M; ++i) {
        Ac(M + i, i) = -2 * k / m;
        if (i > 0)
            Ac(M + i, i - 1) = k / m;
        if (i + 1 < M)
            Ac(M + i, i + 1) = k / m;
        Ac(M + i, M + i) = -cfg.mu;
    }
    // actuator pattern W (6 masses, 3 actuators), block-repeated
    Mat Bc(nx, nu);
    for (index_t blk = 0; blk * 6 < M; ++blk) {
        index_t r0 = blk * 6, c0 = blk * 3;
        auto set = [&](index_t r, index_t c, real_t v) {
            if (r0 + r < M && c0 + c < nu)
                Bc(M + r0 + r, c0 + c) = v / m;
        };
        set(0, 0, 1);
        set(1, 0, -1);
        set(2, 1, 1);
        set(3, 2, 1);
        set(4, 1, -1);
        set(5, 2, -1);
    }
    Vec bc(static_cast<std::size_t>(nx), 0);
    bc[static_cast<std::size_t>(nx - 1)] = k * cfg.w / m;

    const real_t Ts = real_t{15} / static_cast<real_t>(cfg.horizon);
    Mat Ad, Bd;
    Vec bd;
    zoh_discretize(Ac, Bc, bc, Ts, Ad, Bd, bd);

    OCPProblem p;
    p.N       = cfg.horizon;
    p.nx      = nx;
    p.nu      = nu;
    p.ny      = M + nu; // position rows then control rows
    p.ny_term = M;
    p.resize();

    // steady state under zero input: x_inf = (I - A)^{-1} b
    Vec x_inf(static_cast<std::size_t>(nx), 0);
    {
        Mat ImA(nx, nx);
        for (index_t i = 0; i < nx; ++i)
            for (index_t jj = 0; jj < nx; ++jj)
                ImA(i, jj) = (i == jj ? 1.0 : 0.0) - Ad(i, jj);
        x_inf = bd;
        std::vector<Vec *> ptr{&x_inf};
        lu_solve_inplace(ImA, ptr);
    }

    for (index_t j = 0; j < p.N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        p.A[ju] = Ad;
        p.B[ju] = Bd;
        p.f[ju] = bd;
        p.R[ju] = Mat::identity(nu);
        for (index_t i = 0; i < M; ++i) {
            p.C[ju](i, i) = 1;
            p.bl[ju][static_cast<std::size_t>(i)] =
                x_inf[static_cast<std::size_t>(i)] - 4;
            p.bu[ju][static_cast<std::size_t>(i)] =
                x_inf[static_cast<std::size_t>(i)] + 4;
        }
        for (index_t i = 0; i < nu; ++i) {
            p.D[ju](M + i, i) = 1;
            p.bl[ju][static_cast<std::size_t>(M + i)] = -0.5;
            p.bu[ju][static_cast<std::size_t>(M + i)] = 0.5;
        }
    }
    for (index_t j = 0; j <= p.N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        p.Q[ju] = Mat::identity(nx);
        for (index_t i = 0; i < nx; ++i)
            p.q[ju][static_cast<std::size_t>(i)] =
                -x_inf[static_cast<std::size_t>(i)];
    }
    for (index_t i = 0; i < M; ++i) {
        p.C_term(i, i) = 1;
        p.bl[static_cast<std::size_t>(p.N)][static_cast<std::size_t>(i)] =
            x_inf[static_cast<std::size_t>(i)] - 4;
        p.bu[static_cast<std::size_t>(p.N)][static_cast<std::size_t>(i)] =
            x_inf[static_cast<std::size_t>(i)] + 4;
    }
    p.x_init = x_inf;
    return p;
}

Vec mass_spring_initial_state(const MassSpringConfig &cfg, index_t instance) {
    // counter-based: one PRNG stream per (seed, instance)
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed),
                      static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(instance)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<real_t> uni(-3, 3);
    OCPProblem p = mass_spring_generate(cfg);
    Vec x0       = p.x_init; // steady state, zero velocity
    for (index_t i = 0; i < cfg.masses; ++i)
        x0[static_cast<std::size_t>(i)] += uni(rng);
    return x0;
}

namespace {

// Random SPD matrix with eigenvalues log-uniform in [1/cond, 1]: Q D Q' with
// Q a product of Householder reflections.
Mat random_spd(index_t n, std::mt19937_64 &rng, real_t cond) {
    std::uniform_real_distribution<real_t> uni(0, 1);
    Mat a(n, n);
    for (index_t i = 0; i < n; ++i)
        a(i, i) = std::exp(-uni(rng) * std::log(cond));
    std::normal_distribution<real_t> gauss(0, 1);
    for (int rep = 0; rep < 2; ++rep) {
        Vec v(static_cast<std::size_t>(n));
        real_t nrm = 0;
        for (auto &x : v) {
            x = gauss(rng);
            nrm += x * x;
        }
        nrm = std::sqrt(nrm);
        for (auto &x : v)
            x /= nrm;
        // a <- H a H with H = I - 2 v v'
        auto reflect = [&](bool left) {
            Mat b(n, n);
            for (index_t i = 0; i < n; ++i)
                for (index_t j = 0; j < n; ++j) {
                    real_t s = 0;
                    for (index_t kk = 0; kk < n; ++kk) {
                        real_t h = (left ? (i == kk ? 1.0 : 0.0) -
                                               2 * v[static_cast<std::size_t>(
                                                       i)] *
                                                   v[static_cast<std::size_t>(
                                                       kk)]
                                         : (kk == j ? 1.0 : 0.0) -
                                               2 * v[static_cast<std::size_t>(
                                                       kk)] *
                                                   v[static_cast<std::size_t>(
                                                       j)]);
                        s += left ? h * a(kk, j) : a(i, kk) * h;
                    }
                    b(i, j) = s;
                }
            a = b;
        };
        reflect(true);
        reflect(false);
    }
    // re-symmetrize
    for (index_t i = 0; i < n; ++i)
        for (index_t j = 0; j < i; ++j) {
            real_t m = (a(i, j) + a(j, i)) / 2;
            a(i, j) = a(j, i) = m;
        }
    return a;
}

Mat random_mat(index_t m, index_t n, std::mt19937_64 &rng, real_t scale) {
    std::normal_distribution<real_t> gauss(0, scale);
    Mat a(m, n);
    for (index_t i = 0; i < m; ++i)
        for (index_t j = 0; j < n; ++j)
            a(i, j) = gauss(rng);
    return a;
}

Vec random_vec(index_t n, std::mt19937_64 &rng, real_t scale) {
    std::normal_distribution<real_t> gauss(0, scale);
    Vec v(static_cast<std::size_t>(n));
    for (auto &x : v)
        x = gauss(rng);
    return v;
}

} // namespace

EqOCP random_eq_ocp(index_t N, index_t nx, index_t nu, std::uint64_t seed,
                    real_t conditioning) {
    std::mt19937_64 rng(seed);
    EqOCP p;
    p.N  = N;
    p.nx = nx;
    p.nu = nu;
    p.resize();
    const index_t nux = nx + nu;
    for (index_t j = 0; j < N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        // SPD stage Hessian [[R, S], [S', Q]]
        Mat h = random_spd(nux, rng, conditioning);
        for (index_t a = 0; a < nu; ++a)
            for (index_t b = 0; b < nu; ++b)
                p.R[ju](a, b) = h(a, b);
        for (index_t a = 0; a < nu; ++a)
            for (index_t b = 0; b < nx; ++b)
                p.S[ju](a, b) = h(a, nu + b);
        for (index_t a = 0; a < nx; ++a)
            for (index_t b = 0; b < nx; ++b)
                p.Q[ju](a, b) = h(nu + a, nu + b);
        // mildly contractive dynamics keep the horizon well conditioned
        p.A[ju] = random_mat(nx, nx, rng, 0.5 / std::sqrt(real_t(nx)));
        p.B[ju] = random_mat(nx, nu, rng, 0.7 / std::sqrt(real_t(nu)));
        p.f[ju] = random_vec(nx, rng, 0.3);
        p.r[ju] = random_vec(nu, rng, 1);
    }
    // stage-N cost: only Q and q are used at index N (terminal)
    {
        Mat h = random_spd(nx, rng, conditioning);
        p.Q[static_cast<std::size_t>(N)] = h;
    }
    for (index_t j = 1; j <= N; ++j)
        p.q[static_cast<std::size_t>(j)] = random_vec(nx, rng, 1);
    p.x_init = random_vec(nx, rng, 1);
    return p;
}

OCPProblem random_ocp(index_t N, index_t nx, index_t nu, index_t ny,
                      std::uint64_t seed, real_t conditioning) {
    EqOCP e = random_eq_ocp(N, nx, nu, seed, conditioning);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    OCPProblem p;
    p.N       = N;
    p.nx      = nx;
    p.nu      = nu;
    p.ny      = ny;
    p.ny_term = ny;
    p.resize();
    p.A      = e.A;
    p.B      = e.B;
    p.f      = e.f;
    p.R      = e.R;
    p.S      = e.S;
    p.Q      = e.Q;
    p.q      = e.q;
    p.r      = e.r;
    p.x_init = e.x_init;
    std::uniform_real_distribution<real_t> width(0.2, 2.0);
    for (index_t j = 0; j < N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        p.C[ju] = random_mat(ny, nx, rng, 1 / std::sqrt(real_t(nx)));
        p.D[ju] = random_mat(ny, nu, rng, 1 / std::sqrt(real_t(nu)));
        for (index_t i = 0; i < ny; ++i) {
            real_t c = width(rng) - 1, w = width(rng);
            p.bl[ju][static_cast<std::size_t>(i)] = c - w;
            p.bu[ju][static_cast<std::size_t>(i)] = c + w;
        }
    }
    p.C_term = random_mat(ny, nx, rng, 1 / std::sqrt(real_t(nx)));
    for (index_t i = 0; i < ny; ++i) {
        real_t c = width(rng) - 1, w = width(rng);
        p.bl[static_cast<std::size_t>(N)][static_cast<std::size_t>(i)] = c - w;
        p.bu[static_cast<std::size_t>(N)][static_cast<std::size_t>(i)] = c + w;
    }
    return p;
}

} // namespace cyqlone::ocp
