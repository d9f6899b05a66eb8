#include <cyqlone/dense_oracle.hpp>

#include <Eigen/Dense>

#include <cmath>

namespace cyqlone::ocp {

namespace {

// variable ordering: u0, x1, u1, x2, ..., u_{N-1}, x_N
index_t pos_u(const EqOCP &p, index_t j) { return j * (p.nu + p.nx); }
index_t pos_x(const EqOCP &p, index_t j) {
    assert(j >= 1);
    return (j - 1) * (p.nu + p.nx) + p.nu;
}

} // namespace

EqSolution dense_kkt_oracle(const EqOCP &p, const EqRhs &rhs) {
    const index_t nz = p.N * (p.nu + p.nx);
    const index_t nc = p.N * p.nx;
    const index_t n  = nz + nc;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);

    // cost Hessian
    for (index_t j = 0; j < p.N; ++j) {
        auto ju      = static_cast<std::size_t>(j);
        index_t ou   = pos_u(p, j);
        for (index_t a = 0; a < p.nu; ++a)
            for (index_t c = 0; c < p.nu; ++c)
                K(ou + a, ou + c) = p.R[ju](a, c);
        if (j >= 1) {
            index_t ox = pos_x(p, j);
            for (index_t a = 0; a < p.nu; ++a)
                for (index_t c = 0; c < p.nx; ++c) {
                    K(ou + a, ox + c) = p.S[ju](a, c);
                    K(ox + c, ou + a) = p.S[ju](a, c);
                }
            for (index_t a = 0; a < p.nx; ++a)
                for (index_t c = 0; c < p.nx; ++c)
                    K(ox + a, ox + c) = p.Q[ju](a, c);
        }
    }
    {
        index_t ox = pos_x(p, p.N);
        auto jN    = static_cast<std::size_t>(p.N);
        for (index_t a = 0; a < p.nx; ++a)
            for (index_t c = 0; c < p.nx; ++c)
                K(ox + a, ox + c) = p.Q[jN](a, c);
    }
    // dynamics rows
    for (index_t j = 0; j < p.N; ++j) {
        auto ju    = static_cast<std::size_t>(j);
        index_t oc = nz + j * p.nx;
        index_t ou = pos_u(p, j);
        for (index_t a = 0; a < p.nx; ++a)
            for (index_t c = 0; c < p.nu; ++c) {
                K(oc + a, ou + c) = p.B[ju](a, c);
                K(ou + c, oc + a) = p.B[ju](a, c);
            }
        if (j >= 1) {
            index_t ox = pos_x(p, j);
            for (index_t a = 0; a < p.nx; ++a)
                for (index_t c = 0; c < p.nx; ++c) {
                    K(oc + a, ox + c) = p.A[ju](a, c);
                    K(ox + c, oc + a) = p.A[ju](a, c);
                }
        }
        index_t oxn = pos_x(p, j + 1);
        for (index_t a = 0; a < p.nx; ++a) {
            K(oc + a, oxn + a) = -1;
            K(oxn + a, oc + a) = -1;
        }
    }
    // right-hand side
    for (index_t j = 0; j < p.N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        for (index_t a = 0; a < p.nu; ++a)
            b(pos_u(p, j) + a) = rhs.ru[ju][static_cast<std::size_t>(a)];
        for (index_t a = 0; a < p.nx; ++a)
            b(nz + j * p.nx + a) = rhs.fd[ju][static_cast<std::size_t>(a)];
    }
    for (index_t j = 1; j <= p.N; ++j)
        for (index_t a = 0; a < p.nx; ++a)
            b(pos_x(p, j) + a) =
                rhs.qx[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)];

    Eigen::VectorXd z = Eigen::PartialPivLU<Eigen::MatrixXd>(K).solve(b);

    EqSolution s;
    s.u.assign(static_cast<std::size_t>(p.N),
               Vec(static_cast<std::size_t>(p.nu)));
    s.x.assign(static_cast<std::size_t>(p.N + 1),
               Vec(static_cast<std::size_t>(p.nx)));
    s.lam.assign(static_cast<std::size_t>(p.N),
                 Vec(static_cast<std::size_t>(p.nx)));
    s.x[0] = p.x_init;
    for (index_t j = 0; j < p.N; ++j) {
        for (index_t a = 0; a < p.nu; ++a)
            s.u[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)] =
                z(pos_u(p, j) + a);
        for (index_t a = 0; a < p.nx; ++a)
            s.lam[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)] =
                z(nz + j * p.nx + a);
    }
    for (index_t j = 1; j <= p.N; ++j)
        for (index_t a = 0; a < p.nx; ++a)
            s.x[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)] =
                z(pos_x(p, j) + a);
    return s;
}

EqSolution dense_kkt_oracle(const EqOCP &p) {
    return dense_kkt_oracle(p, EqRhs::of_problem(p));
}

// ---------------------------------------------------------------------------
// Dense interior-point QP reference
// ---------------------------------------------------------------------------

Solution dense_qp_oracle(const OCPProblem &prob, const DenseQpSettings &st) {
    const EqOCP p = prob.equality_part();
    const index_t nz = p.N * (p.nu + p.nx);
    const index_t nc = p.N * p.nx;

    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nz, nz);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(nz);
    for (index_t j = 0; j < p.N; ++j) {
        auto ju    = static_cast<std::size_t>(j);
        index_t ou = pos_u(p, j);
        for (index_t a = 0; a < p.nu; ++a)
            for (index_t c = 0; c < p.nu; ++c)
                H(ou + a, ou + c) = p.R[ju](a, c);
        for (index_t a = 0; a < p.nu; ++a)
            g(ou + a) = p.r[ju][static_cast<std::size_t>(a)];
        if (j >= 1) {
            index_t ox = pos_x(p, j);
            for (index_t a = 0; a < p.nu; ++a)
                for (index_t c = 0; c < p.nx; ++c) {
                    H(ou + a, ox + c) = p.S[ju](a, c);
                    H(ox + c, ou + a) = p.S[ju](a, c);
                }
            for (index_t a = 0; a < p.nx; ++a)
                for (index_t c = 0; c < p.nx; ++c)
                    H(ox + a, ox + c) = p.Q[ju](a, c);
            for (index_t a = 0; a < p.nx; ++a)
                g(ox + a) = p.q[ju][static_cast<std::size_t>(a)];
        } else {
            // S_0 x_init folds into the u0 gradient
            for (index_t a = 0; a < p.nu; ++a)
                for (index_t c = 0; c < p.nx; ++c)
                    g(ou + a) +=
                        p.S[ju](a, c) * p.x_init[static_cast<std::size_t>(c)];
        }
    }
    {
        index_t ox = pos_x(p, p.N);
        auto jN    = static_cast<std::size_t>(p.N);
        for (index_t a = 0; a < p.nx; ++a)
            for (index_t c = 0; c < p.nx; ++c)
                H(ox + a, ox + c) = p.Q[jN](a, c);
        for (index_t a = 0; a < p.nx; ++a)
            g(ox + a) = p.q[jN][static_cast<std::size_t>(a)];
    }
    Eigen::MatrixXd M  = Eigen::MatrixXd::Zero(nc, nz);
    Eigen::VectorXd mc = Eigen::VectorXd::Zero(nc);
    for (index_t j = 0; j < p.N; ++j) {
        auto ju    = static_cast<std::size_t>(j);
        index_t oc = j * p.nx;
        index_t ou = pos_u(p, j);
        for (index_t a = 0; a < p.nx; ++a)
            for (index_t c = 0; c < p.nu; ++c)
                M(oc + a, ou + c) = p.B[ju](a, c);
        if (j >= 1) {
            index_t ox = pos_x(p, j);
            for (index_t a = 0; a < p.nx; ++a)
                for (index_t c = 0; c < p.nx; ++c)
                    M(oc + a, ox + c) = p.A[ju](a, c);
        }
        index_t oxn = pos_x(p, j + 1);
        for (index_t a = 0; a < p.nx; ++a)
            M(oc + a, oxn + a) = -1;
        for (index_t a = 0; a < p.nx; ++a)
            mc(oc + a) = -p.f[ju][static_cast<std::size_t>(a)];
        if (j == 0)
            for (index_t a = 0; a < p.nx; ++a)
                for (index_t c = 0; c < p.nx; ++c)
                    mc(a) -= prob.A[0](a, c) *
                             p.x_init[static_cast<std::size_t>(c)];
    }

    // one-sided inequality rows G z <= h (two-sided rows split)
    struct IneqRow {
        index_t stage;  // 0..N (N = terminal)
        index_t row;    // constraint row within the stage
        int side;       // +1 upper, -1 lower
    };
    std::vector<IneqRow> rows;
    std::vector<Eigen::VectorXd> grows;
    std::vector<real_t> hvals;
    auto add_row = [&](index_t j, index_t i, int side) {
        const bool term = j == prob.N;
        real_t bound    = side > 0
                              ? prob.bu[static_cast<std::size_t>(j)]
                                       [static_cast<std::size_t>(i)]
                              : prob.bl[static_cast<std::size_t>(j)]
                                       [static_cast<std::size_t>(i)];
        if (std::isinf(bound))
            return;
        Eigen::VectorXd gr = Eigen::VectorXd::Zero(nz);
        const Mat &Cj      = term ? prob.C_term
                                  : prob.C[static_cast<std::size_t>(j)];
        real_t shift       = 0;
        if (j == 0) {
            for (index_t c = 0; c < p.nx; ++c)
                shift += Cj(i, c) * p.x_init[static_cast<std::size_t>(c)];
        } else {
            index_t ox = pos_x(p, j);
            for (index_t c = 0; c < p.nx; ++c)
                gr(ox + c) = side * Cj(i, c);
        }
        if (!term) {
            const Mat &Dj = prob.D[static_cast<std::size_t>(j)];
            index_t ou    = pos_u(p, j);
            for (index_t c = 0; c < p.nu; ++c)
                gr(ou + c) = side * Dj(i, c);
        }
        rows.push_back({j, i, side});
        grows.push_back(std::move(gr));
        hvals.push_back(side > 0 ? bound - shift : shift - bound);
    };
    for (index_t j = 0; j < prob.N; ++j)
        for (index_t i = 0; i < prob.ny; ++i) {
            add_row(j, i, +1);
            add_row(j, i, -1);
        }
    for (index_t i = 0; i < prob.ny_term; ++i) {
        add_row(prob.N, i, +1);
        add_row(prob.N, i, -1);
    }
    const index_t ni = static_cast<index_t>(rows.size());
    Eigen::MatrixXd G(ni, nz);
    Eigen::VectorXd h(ni);
    for (index_t i = 0; i < ni; ++i) {
        G.row(i) = grows[static_cast<std::size_t>(i)];
        h(i)     = hvals[static_cast<std::size_t>(i)];
    }

    // primal-dual path following on: H z + g + M'lam + G'y = 0, M z = mc,
    // G z + s = h, s >= 0, y >= 0, S Y = mu.
    Eigen::VectorXd z = Eigen::VectorXd::Zero(nz);
    Eigen::VectorXd lam = Eigen::VectorXd::Zero(nc);
    Eigen::VectorXd s = Eigen::VectorXd::Constant(ni, 1.0);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(ni, 1.0);
    if (ni > 0) {
        Eigen::VectorXd gz = G * z;
        for (index_t i = 0; i < ni; ++i)
            s(i) = std::max(1.0, h(i) - gz(i));
    }

    Solution sol;
    sol.status = "max_iterations";
    for (index_t it = 0; it < st.max_iter; ++it) {
        Eigen::VectorXd r_dual = H * z + g + M.transpose() * lam;
        if (ni > 0)
            r_dual += G.transpose() * y;
        Eigen::VectorXd r_eq   = M * z - mc;
        Eigen::VectorXd r_ineq = ni > 0 ? (G * z + s - h).eval()
                                        : Eigen::VectorXd::Zero(0);
        real_t mu = ni > 0 ? s.dot(y) / static_cast<real_t>(ni) : 0;
        real_t res = std::max({r_dual.lpNorm<Eigen::Infinity>(),
                               r_eq.lpNorm<Eigen::Infinity>(),
                               ni > 0 ? r_ineq.lpNorm<Eigen::Infinity>()
                                      : 0.0});
        sol.outer_iterations = it;
        if (res <= st.tol && mu <= st.tol) {
            sol.status = "solved";
            break;
        }
        real_t sigma = 0.2;
        // reduced KKT: [[H + G' (Y/S) G, M'], [M, 0]]
        Eigen::MatrixXd K(nz + nc, nz + nc);
        K.setZero();
        K.topLeftCorner(nz, nz) = H;
        if (ni > 0)
            K.topLeftCorner(nz, nz) +=
                G.transpose() * (y.cwiseQuotient(s)).asDiagonal() * G;
        K.topRightCorner(nz, nc)   = M.transpose();
        K.bottomLeftCorner(nc, nz) = M;
        Eigen::VectorXd rhs(nz + nc);
        rhs.head(nz) = -r_dual;
        if (ni > 0) {
            // eliminate ds and dy: dy = (Y/S)(G dz + r_ineq) - (mu sigma - SY)/S
            Eigen::VectorXd corr =
                (Eigen::VectorXd::Constant(ni, sigma * mu) -
                 s.cwiseProduct(y))
                    .cwiseQuotient(s);
            rhs.head(nz) -= G.transpose() *
                            (y.cwiseQuotient(s).cwiseProduct(r_ineq) + corr);
        }
        rhs.tail(nc) = -r_eq;
        Eigen::VectorXd d =
            Eigen::PartialPivLU<Eigen::MatrixXd>(K).solve(rhs);
        Eigen::VectorXd dz   = d.head(nz);
        Eigen::VectorXd dlam = d.tail(nc);
        real_t alpha = 1.0;
        Eigen::VectorXd dy, ds;
        if (ni > 0) {
            ds = -(G * dz + r_ineq);
            dy = (Eigen::VectorXd::Constant(ni, sigma * mu) -
                  s.cwiseProduct(y) - y.cwiseProduct(ds))
                     .cwiseQuotient(s);
            for (index_t i = 0; i < ni; ++i) {
                if (ds(i) < 0)
                    alpha = std::min(alpha, -0.995 * s(i) / ds(i));
                if (dy(i) < 0)
                    alpha = std::min(alpha, -0.995 * y(i) / dy(i));
            }
        }
        z += alpha * dz;
        lam += alpha * dlam;
        if (ni > 0) {
            s += alpha * ds;
            y += alpha * dy;
        }
    }

    // unpack
    sol.u.assign(static_cast<std::size_t>(p.N),
                 Vec(static_cast<std::size_t>(p.nu)));
    sol.x.assign(static_cast<std::size_t>(p.N + 1),
                 Vec(static_cast<std::size_t>(p.nx)));
    sol.lam.assign(static_cast<std::size_t>(p.N),
                   Vec(static_cast<std::size_t>(p.nx)));
    sol.y.assign(static_cast<std::size_t>(p.N + 1), Vec());
    for (index_t j = 0; j < prob.N; ++j)
        sol.y[static_cast<std::size_t>(j)].assign(
            static_cast<std::size_t>(prob.ny), 0);
    sol.y[static_cast<std::size_t>(prob.N)].assign(
        static_cast<std::size_t>(prob.ny_term), 0);
    sol.x[0] = p.x_init;
    for (index_t j = 0; j < p.N; ++j) {
        for (index_t a = 0; a < p.nu; ++a)
            sol.u[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)] =
                z(pos_u(p, j) + a);
        for (index_t a = 0; a < p.nx; ++a)
            sol.lam[static_cast<std::size_t>(j)]
                   [static_cast<std::size_t>(a)] = lam(j * p.nx + a);
    }
    for (index_t j = 1; j <= p.N; ++j)
        for (index_t a = 0; a < p.nx; ++a)
            sol.x[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)] =
                z(pos_x(p, j) + a);
    for (index_t i = 0; i < ni; ++i) {
        const IneqRow &rr = rows[static_cast<std::size_t>(i)];
        sol.y[static_cast<std::size_t>(rr.stage)]
             [static_cast<std::size_t>(rr.row)] +=
            static_cast<real_t>(rr.side) * y(i);
    }
    sol.objective = prob.objective(sol.u, sol.x);
    sol.residuals = kkt_residual_qp(prob, sol);
    return sol;
}

} // namespace cyqlone::ocp
