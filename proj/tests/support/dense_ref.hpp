#pragma once

// Dense reference helpers shared by the test suites: Eigen adapters, a
// serial factorized Riccati oracle, and the assembled permuted KKT matrix.

#include <cyqlone/dense_oracle.hpp>
#include <cyqlone/kkt_solver.hpp>
#include <cyqlone/ocp.hpp>
#include <cyqlone/qpalm.hpp>

#include <Eigen/Dense>

#include <random>

namespace cyqtest {

using cyqlone::batla::DenseMatrix;
using cyqlone::batla::index_t;
using cyqlone::batla::real_t;
using cyqlone::ocp::EqOCP;
using cyqlone::ocp::EqRhs;
using cyqlone::ocp::EqSolution;
using cyqlone::ocp::Mat;
using cyqlone::ocp::Vec;
using EMat = Eigen::MatrixXd;
using EVec = Eigen::VectorXd;

EMat to_eigen(const DenseMatrix &m);
DenseMatrix from_eigen(const EMat &m);
EVec to_eigen(const Vec &v);

/// Random SPD block-tridiagonal system (diagonally dominant).
cyqlone::blocktri::BlockTridiag random_block_tridiag(index_t N, index_t n,
                                                     std::uint64_t seed,
                                                     index_t vlen = 1,
                                                     bool circular = false);
EMat assemble_dense(const cyqlone::blocktri::BlockTridiag &m);

/// Serial factorized Riccati recursion (backward factorization, forward
/// rollout, multiplier recursion). Independent of the kkt solver path.
EqSolution serial_riccati_solve(const EqOCP &p, const EqRhs &rhs);

/// Assembles the permuted KKT matrix of the partitioned ordering and the
/// block Cholesky factor stored in a kkt::Factor, for reconstruction tests.
/// Returns the relative Frobenius error || L D L' - K || / || K ||.
real_t factor_reconstruction_error(const cyqlone::kkt::Factor &f,
                                   const EqOCP &padded);

real_t rel_err(const EMat &a, const EMat &b);

/// Value of the proximal augmented Lagrangian at a state, treating the
/// whole (u, x) trajectory as free variables. Reference for gradient checks.
real_t al_value(const cyqlone::ocp::OCPProblem &p,
                const cyqlone::qpalm::ALMState &st, real_t gamma);

} // namespace cyqtest
