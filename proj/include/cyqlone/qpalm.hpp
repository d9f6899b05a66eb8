#pragma once

#include <cyqlone/kkt_solver.hpp>
#include <cyqlone/line_search.hpp>
#include <cyqlone/ocp.hpp>

namespace cyqlone::qpalm {

using kkt::FactorOptions;
using ocp::EqOCP;
using ocp::EqRhs;
using ocp::Mat;
using ocp::OCPProblem;
using ocp::Solution;
using ocp::Vec;

struct QPALMSettings {
    real_t eps_abs          = 1e-8; ///< primal and dual infinity-norm target
    real_t sigma_init       = 1e1;
    real_t sigma_growth     = 10;
    real_t sigma_max        = 1e4; ///< beyond this the inner Newton systems
                                   ///< lose more accuracy than the penalty
                                   ///< buys; multiplier updates take over
    real_t gamma            = 1e7; ///< proximal weight, prox term is 1/gamma
    real_t inner_tol_init   = 1e-2;
    real_t inner_tol_factor = 0.1;
    real_t inner_tol_min    = 1e-9; ///< kept above the attainable accuracy
                                    ///< of ill-conditioned inner systems
    index_t max_outer       = 50;
    index_t max_inner       = 100;
    bool use_updates        = true; ///< factorization updates on/off
    FactorOptions kkt;              ///< linear solver configuration
};

/// Iterates, multipliers, penalties, proximal anchors and active sets of the
/// augmented-Lagrangian outer loop. x[0] stays fixed at the initial state.
struct ALMState {
    std::vector<Vec> u, x;            ///< N, N+1
    std::vector<Vec> y;               ///< N+1 (terminal at index N)
    std::vector<Vec> lam;             ///< N
    std::vector<Vec> sigma;           ///< N+1 diagonal penalties
    std::vector<Vec> ubar, xbar;      ///< proximal anchors
    std::vector<std::vector<bool>> active; ///< N+1 active sets

    static ALMState init(const OCPProblem &p, const QPALMSettings &s);
    /// Re-rolls the state trajectory from x[0] under the current controls,
    /// making the iterate feasible for the dynamics.
    void rollout(const OCPProblem &p);
};

/// Per-stage pieces of the augmented-Lagrangian gradient and residuals:
/// candidate multipliers yhat, the stationarity gradients (ru, qx), and the
/// dynamics residuals.
struct AlGradients {
    std::vector<Vec> ru;   ///< N
    std::vector<Vec> qx;   ///< N+1, qx[0] unused
    std::vector<Vec> yhat; ///< N+1
    std::vector<Vec> cres; ///< N
};

AlGradients eval_al_gradients(const OCPProblem &p, const ALMState &st,
                              const QPALMSettings &s);

/// Active-set membership test per constraint row.
std::vector<std::vector<bool>> active_sets(const OCPProblem &p,
                                           const ALMState &st);

/// Generalized-Hessian Newton system of the inner problem as an
/// equality-constrained problem (x^0 eliminated).
EqOCP assemble_newton(const OCPProblem &p, const ALMState &st,
                      const QPALMSettings &s,
                      const std::vector<std::vector<bool>> &active);

/// Exact line search data along direction (du, dx) at the current iterate.
LineSearchData build_line_search(const OCPProblem &p, const ALMState &st,
                                 const QPALMSettings &s,
                                 const std::vector<Vec> &du,
                                 const std::vector<Vec> &dx);

struct InnerStats {
    index_t iterations   = 0;
    index_t line_search_iterations = 0;
    index_t factorizations = 0;
    index_t factor_updates = 0;
    bool converged       = false;
    real_t stationarity  = 0;
};

/// Semismooth Newton loop on the inner problem; terminates when the
/// Lagrangian stationarity of the inner problem drops below `tol`.
InnerStats inner_newton_loop(const OCPProblem &p, ALMState &st,
                             const QPALMSettings &s, real_t tol);

/// Proximal augmented-Lagrangian solver (the full method). `warm` seeds the
/// iterate and multipliers; the state trajectory is re-rolled from the
/// problem's initial state either way.
Solution alm_outer_loop(const OCPProblem &p, const QPALMSettings &s,
                        const Solution *warm = nullptr);

} // namespace cyqlone::qpalm
