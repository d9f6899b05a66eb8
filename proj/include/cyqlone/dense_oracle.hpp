#pragma once

#include <cyqlone/ocp.hpp>

namespace cyqlone::ocp {

/// Assembles the full optimality system of an equality-constrained problem
/// densely and solves it with a general dense LU. Reference implementation
/// for small problems; not structure-exploiting by design.
EqSolution dense_kkt_oracle(const EqOCP &p, const EqRhs &rhs);
/// Same with the problem's own right-hand side.
EqSolution dense_kkt_oracle(const EqOCP &p);

struct DenseQpSettings {
    real_t tol        = 1e-10;
    index_t max_iter  = 100;
};

/// Dense primal-dual interior-point reference solver for the
/// inequality-constrained problem. Desk-scale only.
Solution dense_qp_oracle(const OCPProblem &p,
                         const DenseQpSettings &settings = {});

} // namespace cyqlone::ocp
