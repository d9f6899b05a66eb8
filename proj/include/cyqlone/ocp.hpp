#pragma once

#include <cyqlone/batch_matrix.hpp>

#include <limits>
#include <string>
#include <vector>

namespace cyqlone::ocp {

using batla::DenseMatrix;
using batla::index_t;
using batla::real_t;
using Mat = DenseMatrix;
using Vec = std::vector<real_t>;

constexpr real_t inf = std::numeric_limits<real_t>::infinity();

/// Equality-constrained LQ optimal control problem with E normalized to
/// identity. Stage costs (u, x)' [[R, S], [S', Q]] (u, x) / 2 + r'u + q'x,
/// dynamics x^{j+1} = A_j x^j + B_j u^j + f^j, fixed initial state.
/// Q[j], q[j] are indexed by the state they weigh (1..N); Q[0]/q[0] refer to
/// the eliminated x^0 and only contribute the S_0 x^0 cross term.
struct EqOCP {
    index_t N = 0, nx = 0, nu = 0;
    std::vector<Mat> A, B;  ///< size N (A[0] folds into the rhs)
    std::vector<Vec> f;     ///< size N
    std::vector<Mat> R, S;  ///< size N (S is nu-by-nx)
    std::vector<Mat> Q;     ///< size N+1, Q[N] terminal
    std::vector<Vec> q;     ///< size N+1
    std::vector<Vec> r;     ///< size N
    Vec x_init;

    void resize();
    /// Objective value for a (u, x) trajectory with x[0] = x_init.
    real_t objective(const std::vector<Vec> &u,
                     const std::vector<Vec> &x) const;
};

/// Right-hand side of the optimality system in the convention
///   R u + S x + B' lam            = ru
///   S'u + Q x + A' lam - lam_prev = qx
///   B u + A x - x_next            = fd,
/// with ru[0] and fd[0] already carrying the eliminated-x^0 terms.
struct EqRhs {
    std::vector<Vec> ru; ///< size N
    std::vector<Vec> qx; ///< size N+1, qx[0] unused
    std::vector<Vec> fd; ///< size N

    static EqRhs zero(const EqOCP &p);
    /// rhs of the optimality conditions of p itself (negated gradients).
    static EqRhs of_problem(const EqOCP &p);
};

struct EqSolution {
    std::vector<Vec> u;   ///< size N
    std::vector<Vec> x;   ///< size N+1, x[0] = x_init
    std::vector<Vec> lam; ///< size N
};

struct EqResiduals {
    real_t stat_u = 0, stat_x = 0, dynamics = 0, terminal = 0;
    real_t max() const;
};

/// Infinity norms of the residual groups of the optimality system at
/// (u, x, lam) for the given right-hand side.
EqResiduals kkt_residual_eq(const EqOCP &p, const EqRhs &rhs,
                            const EqSolution &s);

/// Inequality-constrained LQ optimal control problem.
struct OCPProblem {
    index_t N = 0, nx = 0, nu = 0, ny = 0, ny_term = 0;
    std::vector<Mat> E;     ///< empty, or size N+1 (E[0] scales x_init)
    std::vector<Mat> A, B;  ///< size N
    std::vector<Vec> f;     ///< size N
    std::vector<Mat> R, S;  ///< size N
    std::vector<Mat> Q;     ///< size N+1
    std::vector<Vec> q;     ///< size N+1
    std::vector<Vec> r;     ///< size N
    std::vector<Mat> C, D;  ///< size N (ny rows)
    std::vector<Vec> bl, bu;///< size N+1; index N holds terminal bounds
    Mat C_term;             ///< ny_term-by-nx
    Vec x_init;

    void resize();
    real_t objective(const std::vector<Vec> &u,
                     const std::vector<Vec> &x) const;
    /// The equality-constrained part (costs and dynamics only).
    EqOCP equality_part() const;
};

struct ResidualReport {
    real_t primal = 0, dual = 0, complementarity = 0;
};

struct Solution {
    std::vector<Vec> u, x; ///< N, N+1
    std::vector<Vec> y;    ///< N+1 inequality multipliers (index N terminal)
    std::vector<Vec> lam;  ///< N dynamics multipliers
    std::string status = "unsolved";
    index_t outer_iterations = 0;
    index_t inner_iterations = 0;
    index_t line_search_iterations = 0;
    index_t factorizations = 0;
    index_t factor_updates = 0;
    ResidualReport residuals;
    real_t objective = 0;
};

/// KKT residuals of the inequality-constrained problem at a candidate
/// solution: primal feasibility (dynamics, x^0 and bound violations), dual
/// stationarity, and complementarity.
ResidualReport kkt_residual_qp(const OCPProblem &p, const Solution &s);

/// Transforms implicit state equations E x^{j+1} = ... to E = I by solving
/// with each E_j. Throws on singular E_j.
OCPProblem normalize_E(const OCPProblem &p);

/// Zero-order-hold discretization of dx/dt = Ac x + Bc u + bc:
/// A = exp(Ac Ts), B = int_0^Ts exp(Ac s) ds Bc, b likewise, computed via
/// the exponential of the augmented block matrix.
void zoh_discretize(const Mat &Ac, const Mat &Bc, const Vec &bc, real_t Ts,
                    Mat &A, Mat &B, Vec &b);

/// Chain of M masses and springs between two walls with M/2 actuators,
/// position and control bounds, quadratic cost about the steady state.
struct MassSpringConfig {
    index_t masses  = 2;  ///< M (even)
    index_t horizon = 30; ///< N
    real_t k = 1, m = 1, mu = 0, w = 0;
    std::uint64_t seed = 0;
};

OCPProblem mass_spring_generate(const MassSpringConfig &cfg);
/// Initial state with zero velocities and positions uniform in [-3, 3]
/// around the steady state, reproducible from (cfg.seed, instance).
Vec mass_spring_initial_state(const MassSpringConfig &cfg, index_t instance);

/// Reproducible random equality-constrained problem; cost blocks are SPD
/// with eigenvalues in [1/conditioning, 1].
EqOCP random_eq_ocp(index_t N, index_t nx, index_t nu, std::uint64_t seed,
                    real_t conditioning = 10);
/// Same, with ny random two-sided inequality rows per stage.
OCPProblem random_ocp(index_t N, index_t nx, index_t nu, index_t ny,
                      std::uint64_t seed, real_t conditioning = 10);

// JSON problem serialization, schema "ocp-v1" (see README for field names).
std::string to_json(const OCPProblem &p);
OCPProblem from_json(const std::string &text);
void save_json(const OCPProblem &p, const std::string &path);
OCPProblem load_json(const std::string &path);

} // namespace cyqlone::ocp
