#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cyqlone/kkt_solver.hpp>

#include "dense_ref.hpp"

using namespace cyqlone;
using namespace cyqlone::kkt;
using cyqlone::ocp::EqOCP;
using cyqlone::ocp::EqRhs;
using cyqlone::ocp::EqSolution;
using cyqlone::ocp::random_eq_ocp;
using cyqtest::serial_riccati_solve;

namespace {

real_t sol_diff(const EqSolution &a, const EqSolution &b) {
    real_t m = 0;
    for (std::size_t j = 0; j < a.u.size(); ++j)
        for (std::size_t i = 0; i < a.u[j].size(); ++i)
            m = std::max(m, std::abs(a.u[j][i] - b.u[j][i]));
    for (std::size_t j = 0; j < a.x.size(); ++j)
        for (std::size_t i = 0; i < a.x[j].size(); ++i)
            m = std::max(m, std::abs(a.x[j][i] - b.x[j][i]));
    for (std::size_t j = 0; j < a.lam.size(); ++j)
        for (std::size_t i = 0; i < a.lam[j].size(); ++i)
            m = std::max(m, std::abs(a.lam[j][i] - b.lam[j][i]));
    return m;
}

} // namespace

TEST_CASE("nu2 with the wrap convention") {
    CHECK(nu2(1, 8) == 0);
    CHECK(nu2(4, 8) == 2);
    CHECK(nu2(0, 8) == 3); // nu2 of P itself
    CHECK(nu2(6, 8) == 1);
}

TEST_CASE("pad_problem") {
    EqOCP p = random_eq_ocp(12, 2, 1, 3);
    CHECK(pad_problem(p, 4).N == 12); // already a multiple
    EqOCP q  = random_eq_ocp(5, 2, 1, 4);
    EqOCP qp = pad_problem(q, 4);
    CHECK(qp.N == 8);
    for (index_t j = 5; j < 8; ++j) {
        auto ju = static_cast<std::size_t>(j);
        CHECK(qp.R[ju](0, 0) == 1.0);
        CHECK(qp.A[ju](0, 0) == 0.0);
        CHECK(qp.Q[ju + 1](0, 0) == 1.0);
        CHECK(qp.Q[ju + 1](0, 1) == 0.0);
    }
    // padded solve restricted to the original stages matches the original
    auto sp = solve_problem(qp, FactorOptions{4, 2, 1, Tail::cr1});
    auto so = cyqlone::ocp::dense_kkt_oracle(q);
    for (index_t j = 0; j < q.N; ++j)
        for (index_t i = 0; i < q.nu; ++i)
            CHECK(sp.u[static_cast<std::size_t>(j)]
                      [static_cast<std::size_t>(i)] ==
                  doctest::Approx(so.u[static_cast<std::size_t>(j)]
                                      [static_cast<std::size_t>(i)])
                      .epsilon(1e-9));
}

TEST_CASE("factor reconstructs the permuted KKT matrix") {
    // identity problem: factor blocks are identity/zero
    {
        EqOCP p;
        p.N  = 4;
        p.nx = 2;
        p.nu = 1;
        p.resize();
        for (index_t j = 0; j < 4; ++j) {
            p.R[static_cast<std::size_t>(j)] = ocp::Mat::identity(1);
            p.Q[static_cast<std::size_t>(j) + 1] = ocp::Mat::identity(2);
        }
        p.Q[0]  = ocp::Mat::identity(2);
        Factor f = factor(p, FactorOptions{1, 1, 1, Tail::cr1});
        for (index_t s = 0; s < 4; ++s) {
            CHECK(f.LH[static_cast<std::size_t>(s)](0, 0, 0) == 1.0);
            CHECK(f.LB[static_cast<std::size_t>(s)](0, 0, 0) == 0.0);
        }
        CHECK(cyqtest::factor_reconstruction_error(f, pad_problem(p, 1)) <
              1e-14);
    }
    for (index_t P : {1, 2, 4, 8}) {
        for (index_t vlen : {1, 4}) {
            EqOCP p = random_eq_ocp(16, 3, 2, 100 + P);
            Factor f =
                factor(p, FactorOptions{P, vlen, 1, Tail::cr1});
            CHECK(cyqtest::factor_reconstruction_error(f, pad_problem(p, P)) <
                  1e-10);
        }
    }
    // N = 12, P = 4 with padding off the power grid
    {
        EqOCP p  = random_eq_ocp(13, 3, 2, 7);
        Factor f = factor(p, FactorOptions{4, 4, 1, Tail::cr1});
        CHECK(cyqtest::factor_reconstruction_error(f, pad_problem(p, 4)) <
              1e-10);
    }
}

TEST_CASE("solve: residuals, dense oracle, zero rhs") {
    EqOCP p = random_eq_ocp(8, 3, 2, 42);
    for (index_t P : {1, 2, 4}) {
        Factor f;
        auto s = solve_problem(p, FactorOptions{P, 2, 1, Tail::cr1}, &f);
        auto res = ocp::kkt_residual_eq(p, EqRhs::of_problem(p), s);
        CHECK(res.max() < 1e-9);
        auto so = ocp::dense_kkt_oracle(p);
        CHECK(sol_diff(s, so) < 1e-8);
        // zero rhs gives the zero solution
        auto sz = solve(f, p, EqRhs::zero(p));
        for (auto &uj : sz.u)
            for (auto v : uj)
                CHECK(v == 0.0);
        for (std::size_t j = 1; j < sz.x.size(); ++j)
            for (auto v : sz.x[j])
                CHECK(v == 0.0);
    }
}

TEST_CASE("cross-P consistency and determinism") {
    EqOCP p = random_eq_ocp(16, 4, 2, 11);
    std::vector<EqSolution> sols;
    for (index_t P : {1, 2, 4, 8})
        sols.push_back(solve_problem(p, FactorOptions{P, 4, 1, Tail::cr1}));
    for (std::size_t i = 1; i < sols.size(); ++i)
        CHECK(sol_diff(sols[i], sols[0]) < 1e-8);
    // repeated runs are bit-identical; worker counts do not change values
    auto a = solve_problem(p, FactorOptions{4, 4, 2, Tail::cr1});
    auto b = solve_problem(p, FactorOptions{4, 4, 2, Tail::cr1});
    CHECK(sol_diff(a, b) == 0.0);
    auto c1 = solve_problem(p, FactorOptions{4, 4, 1, Tail::cr1});
    auto c3 = solve_problem(p, FactorOptions{4, 4, 3, Tail::cr1});
    CHECK(sol_diff(c1, c3) <= 1e-13);
}

TEST_CASE("P = 1 equals the serial factorized Riccati recursion") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        EqOCP p  = random_eq_ocp(8, 3, 2, seed);
        EqRhs r  = EqRhs::of_problem(p);
        auto ref = serial_riccati_solve(p, r);
        Factor f = factor(p, FactorOptions{1, 1, 1, Tail::cr1});
        auto s   = solve(f, p, r);
        CHECK(sol_diff(s, ref) < 1e-10);
    }
}

TEST_CASE("tail strategies agree") {
    EqOCP p = random_eq_ocp(32, 3, 2, 99);
    auto s_cr  = solve_problem(p, FactorOptions{8, 4, 1, Tail::cr1});
    auto s_pcr = solve_problem(p, FactorOptions{8, 4, 1, Tail::pcr});
    CHECK(sol_diff(s_pcr, s_cr) < 1e-10);
    FactorOptions fo{8, 4, 1, Tail::pcg};
    auto s_pcg = solve_problem(p, fo);
    CHECK(sol_diff(s_pcg, s_cr) < 1e-8);
    // P smaller than the vector length still works
    auto s_small = solve_problem(p, FactorOptions{2, 8, 1, Tail::pcr});
    CHECK(sol_diff(s_small, s_cr) < 1e-8);
}

TEST_CASE("schur factor block pattern at P = 4") {
    // the boundary Y blocks are absent (no circular coupling)
    EqOCP p  = random_eq_ocp(12, 2, 1, 5);
    Factor f = factor(p, FactorOptions{4, 1, 1, Tail::cr1});
    const auto &cr = f.schur_cr;
    REQUIRE(cr.n_levels == 3);
    // level 0 eliminates columns 1 and 3: L1, L3, U1, U3, Y1 set, Y3 zero
    auto y3 = cr.Y[0].lane(1);
    for (index_t r = 0; r < 2; ++r)
        for (index_t c = 0; c < 2; ++c)
            CHECK(y3(0, r, c) == 0.0);
    bool y1_nonzero = false;
    for (index_t r = 0; r < 2; ++r)
        for (index_t c = 0; c < 2; ++c)
            y1_nonzero = y1_nonzero || cr.Y[0].lane(0)(0, r, c) != 0.0;
    CHECK(y1_nonzero);
    // level 1 eliminates column 2; its Y would wrap to column 0
    auto y2 = cr.Y[1].lane(0);
    for (index_t r = 0; r < 2; ++r)
        for (index_t c = 0; c < 2; ++c)
            CHECK(y2(0, r, c) == 0.0);
    CHECK(cr.L_base.batch() == 1);
}

TEST_CASE("FLOP model terms and speedup") {
    // frozen values from an independent evaluation of the model
    auto fm = flops_critical_path(2, 1, 4, 1);
    CHECK(fm.riccati == doctest::Approx(123.0));
    CHECK(fm.schur == doctest::Approx(56.0 / 3));
    CHECK(fm.cr == doctest::Approx(4.0 / 3));
    CHECK(fm.serial == doctest::Approx(238.0 / 3));
    auto fm2 = flops_critical_path(3, 2, 16, 4);
    CHECK(fm2.riccati == doctest::Approx(3047.0 / 6));
    CHECK(fm2.schur == doctest::Approx(72.0));
    CHECK(fm2.cr == doctest::Approx(94.5));
    CHECK(fm2.total == doctest::Approx(2023.0 / 3));
    // P = N: the (N/P - 1) group vanishes
    auto fm3 = flops_critical_path(3, 2, 8, 8);
    real_t m = 5, x = 3, u = 2;
    CHECK(fm3.riccati ==
          doctest::Approx(m * m * m / 6 + x * u * u / 2 + x * x * u +
                          0.5 * x * x * x));
    CHECK_THROWS_AS(flops_critical_path(2, 1, 6, 4), std::invalid_argument);
}

TEST_CASE("instrumented flops track the model") {
    EqOCP p = random_eq_ocp(64, 16, 8, 2);
    FlopTrace trace;
    Factor f = factor(p, FactorOptions{4, 1, 1, Tail::cr1}, &trace);
    auto fm  = flops_critical_path(16, 8, 64, 4);
    real_t ratio = static_cast<real_t>(trace.total()) / fm.total;
    CHECK(ratio > 0.8);
    CHECK(ratio < 1.2);
}
