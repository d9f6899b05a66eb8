#include <cyqlone/ocp.hpp>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

namespace cyqlone::ocp {

void zoh_discretize(const Mat &Ac, const Mat &Bc, const Vec &bc, real_t Ts,
                    Mat &A, Mat &B, Vec &b) {
    const index_t nx = Ac.rows, nu = Bc.cols;
    assert(Ac.cols == nx && Bc.rows == nx &&
           static_cast<index_t>(bc.size()) == nx);
    // exp of the augmented matrix [[Ac, Bc, bc], [0, 0, 0]] * Ts gives
    // [[A, B, b], [0, I, .]] in one shot.
    const index_t n = nx + nu + 1;
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n, n);
    for (index_t i = 0; i < nx; ++i)
        for (index_t j = 0; j < nx; ++j)
            aug(i, j) = Ac(i, j) * Ts;
    for (index_t i = 0; i < nx; ++i)
        for (index_t j = 0; j < nu; ++j)
            aug(i, nx + j) = Bc(i, j) * Ts;
    for (index_t i = 0; i < nx; ++i)
        aug(i, nx + nu) = bc[static_cast<std::size_t>(i)] * Ts;
    Eigen::MatrixXd e = aug.exp();
    A = Mat(nx, nx);
    B = Mat(nx, nu);
    b.assign(static_cast<std::size_t>(nx), 0);
    for (index_t i = 0; i < nx; ++i) {
        for (index_t j = 0; j < nx; ++j)
            A(i, j) = e(i, j);
        for (index_t j = 0; j < nu; ++j)
            B(i, j) = e(i, nx + j);
        b[static_cast<std::size_t>(i)] = e(i, nx + nu);
    }
}

} // namespace cyqlone::ocp
