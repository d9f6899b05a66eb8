#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cyqlone/kkt_solver.hpp>

#include "dense_ref.hpp"

#include <random>

using namespace cyqlone;
using namespace cyqlone::kkt;
using cyqlone::ocp::EqOCP;
using cyqlone::ocp::EqRhs;
using cyqlone::ocp::EqSolution;
using cyqlone::ocp::Mat;
using cyqlone::ocp::OCPProblem;
using cyqlone::ocp::Vec;

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

// Hessians of p modified by (D|C)' dSigma (D|C); stage 0 takes only the D
// part, the terminal rows act on Q_N.
EqOCP apply_sigma(const EqOCP &p, const OCPProblem &ineq,
                  const SigmaDelta &ds) {
    EqOCP out = p;
    for (index_t j = 0; j < p.N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        for (index_t i = 0; i < ineq.ny; ++i) {
            real_t dv = ds.stage[ju][static_cast<std::size_t>(i)];
            if (dv == 0)
                continue;
            const Mat &D = ineq.D[ju];
            const Mat &C = ineq.C[ju];
            for (index_t a = 0; a < p.nu; ++a)
                for (index_t b = 0; b < p.nu; ++b)
                    out.R[ju](a, b) += dv * D(i, a) * D(i, b);
            if (j > 0) {
                for (index_t a = 0; a < p.nu; ++a)
                    for (index_t b = 0; b < p.nx; ++b)
                        out.S[ju](a, b) += dv * D(i, a) * C(i, b);
                for (index_t a = 0; a < p.nx; ++a)
                    for (index_t b = 0; b < p.nx; ++b)
                        out.Q[ju](a, b) += dv * C(i, a) * C(i, b);
            }
        }
    }
    for (index_t i = 0; i < ineq.ny_term; ++i) {
        real_t dv = ds.terminal[static_cast<std::size_t>(i)];
        if (dv == 0)
            continue;
        auto jN = static_cast<std::size_t>(p.N);
        for (index_t a = 0; a < p.nx; ++a)
            for (index_t b = 0; b < p.nx; ++b)
                out.Q[jN](a, b) += dv * ineq.C_term(i, a) * ineq.C_term(i, b);
    }
    return out;
}

struct Setup {
    EqOCP base;
    OCPProblem ineq; ///< provides C, D, C_term and dimensions
};

Setup make_setup(index_t N, index_t nx, index_t nu, index_t ny,
                 std::uint64_t seed) {
    Setup s;
    s.ineq = ocp::random_ocp(N, nx, nu, ny, seed);
    s.base = s.ineq.equality_part();
    // regularize so that sigma changes keep the Hessians well conditioned
    for (index_t j = 0; j < N; ++j) {
        auto ju = static_cast<std::size_t>(j);
        for (index_t a = 0; a < nu; ++a)
            s.base.R[ju](a, a) += 2;
    }
    for (index_t j = 1; j <= N; ++j)
        for (index_t a = 0; a < nx; ++a)
            s.base.Q[static_cast<std::size_t>(j)](a, a) += 2;
    return s;
}

SigmaDelta zero_delta(const Setup &s) {
    SigmaDelta ds;
    ds.stage.assign(static_cast<std::size_t>(s.base.N),
                    Vec(static_cast<std::size_t>(s.ineq.ny), 0));
    ds.terminal.assign(static_cast<std::size_t>(s.ineq.ny_term), 0);
    return ds;
}

} // namespace

TEST_CASE("active_set_delta") {
    Vec sigma{2, 3, 4};
    std::vector<bool> prev{false, true, true}, now{true, true, false};
    Vec d = active_set_delta(prev, now, sigma);
    CHECK(d[0] == 2.0);
    CHECK(d[1] == 0.0);
    CHECK(d[2] == -4.0);
}

TEST_CASE("zero delta leaves the factor unchanged") {
    Setup s  = make_setup(8, 3, 2, 2, 31);
    Factor f = factor(s.base, FactorOptions{4, 2, 1, Tail::cr1});
    EqRhs r  = EqRhs::of_problem(s.base);
    auto before = solve(f, s.base, r);
    auto ds     = zero_delta(s);
    auto rep = update(f, s.base, s.ineq.C, s.ineq.D, s.ineq.C_term, ds);
    CHECK(rep.columns_updated == 0);
    CHECK(rep.columns_refactored == 0);
    auto after = solve(f, s.base, r);
    CHECK(sol_diff(before, after) == 0.0);
}

TEST_CASE("rank-1 update equals refactorization") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        Setup s  = make_setup(8, 3, 2, 2, 100 + seed);
        FactorOptions fo{4, 2, 1, Tail::cr1};
        Factor f = factor(s.base, fo);
        auto ds  = zero_delta(s);
        index_t stage = static_cast<index_t>(seed) % 8;
        ds.stage[static_cast<std::size_t>(stage)][0] = 5.0; // activation
        EqOCP pnew = apply_sigma(s.base, s.ineq, ds);
        auto rep = update(f, pnew, s.ineq.C, s.ineq.D, s.ineq.C_term, ds);
        CHECK(rep.columns_updated + rep.columns_refactored >= 1);
        EqRhs r    = EqRhs::of_problem(pnew);
        auto su    = solve(f, pnew, r);
        auto sref  = solve_problem(pnew, fo);
        CHECK(sol_diff(su, sref) < 1e-8);
        // activation then deactivation returns to the original factor
        auto ds2 = ds;
        ds2.stage[static_cast<std::size_t>(stage)][0] = -5.0;
        update(f, s.base, s.ineq.C, s.ineq.D, s.ineq.C_term, ds2);
        auto sback = solve(f, s.base, EqRhs::of_problem(s.base));
        auto sorig = solve_problem(s.base, fo);
        CHECK(sol_diff(sback, sorig) < 1e-9);
    }
}

TEST_CASE("stage-0 and terminal updates (first block column)") {
    Setup s  = make_setup(8, 3, 2, 2, 55);
    FactorOptions fo{4, 1, 1, Tail::cr1};
    Factor f = factor(s.base, fo);
    auto ds  = zero_delta(s);
    ds.stage[0][1]  = 3.0; // u^0 stage rows
    ds.terminal[0]  = 4.0; // terminal C_N rows
    EqOCP pnew = apply_sigma(s.base, s.ineq, ds);
    update(f, pnew, s.ineq.C, s.ineq.D, s.ineq.C_term, ds);
    auto su   = solve(f, pnew, EqRhs::of_problem(pnew));
    auto sref = solve_problem(pnew, fo);
    CHECK(sol_diff(su, sref) < 1e-8);
}

TEST_CASE("random activation sequences across P and tails") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<real_t> uni(0.5, 4.0);
    for (index_t P : {2, 4, 8})
        for (Tail tail : {Tail::cr1, Tail::pcr, Tail::pcg}) {
            Setup s  = make_setup(16, 3, 2, 3, 200 + P);
            FactorOptions fo{P, 4, 1, tail};
            Factor f = factor(s.base, fo);
            EqOCP cur = s.base;
            std::vector<std::vector<bool>> active(
                static_cast<std::size_t>(17),
                std::vector<bool>(3, false));
            std::vector<Vec> sigma(static_cast<std::size_t>(17),
                                   Vec(3, 0));
            for (int step = 0; step < 4; ++step) {
                auto ds = zero_delta(s);
                for (index_t j = 0; j < 16; ++j)
                    for (index_t i = 0; i < 3; ++i)
                        if (rng() % 4 == 0) {
                            auto ju = static_cast<std::size_t>(j);
                            auto iu = static_cast<std::size_t>(i);
                            bool was = active[ju][iu];
                            if (was) { // remove exactly what was added
                                ds.stage[ju][iu] = -sigma[ju][iu];
                            } else {
                                sigma[ju][iu]    = uni(rng);
                                ds.stage[ju][iu] = sigma[ju][iu];
                            }
                            active[ju][iu] = !was;
                        }
                EqOCP pnew = apply_sigma(cur, s.ineq, ds);
                update(f, pnew, s.ineq.C, s.ineq.D, s.ineq.C_term, ds);
                cur       = pnew;
                auto su   = solve(f, cur, EqRhs::of_problem(cur));
                auto sref = solve_problem(cur, fo);
                CHECK(sol_diff(su, sref) < 1e-8);
            }
        }
}

TEST_CASE("large ranks trigger refactorization and still match") {
    Setup s  = make_setup(8, 3, 2, 3, 77);
    FactorOptions fo{4, 2, 1, Tail::cr1};
    Factor f = factor(s.base, fo);
    auto ds  = zero_delta(s);
    for (index_t j = 0; j < 8; ++j)
        for (index_t i = 0; i < 3; ++i)
            ds.stage[static_cast<std::size_t>(j)]
                    [static_cast<std::size_t>(i)] = 2.0;
    EqOCP pnew = apply_sigma(s.base, s.ineq, ds);
    auto rep   = update(f, pnew, s.ineq.C, s.ineq.D, s.ineq.C_term, ds);
    CHECK(rep.columns_refactored == 4); // rank >= nx/2 everywhere
    auto su   = solve(f, pnew, EqRhs::of_problem(pnew));
    auto sref = solve_problem(pnew, fo);
    CHECK(sol_diff(su, sref) < 1e-10);
}

TEST_CASE("two sequential updates equal one combined update") {
    Setup s  = make_setup(8, 4, 2, 3, 13);
    FactorOptions fo{4, 2, 1, Tail::cr1};
    Factor f = factor(s.base, fo);
    auto ds1 = zero_delta(s), ds2 = zero_delta(s), dsc = zero_delta(s);
    ds1.stage[2][0] = 2.0;
    ds2.stage[5][1] = 3.0;
    dsc.stage[2][0] = 2.0;
    dsc.stage[5][1] = 3.0;
    EqOCP p1 = apply_sigma(s.base, s.ineq, ds1);
    EqOCP pc = apply_sigma(s.base, s.ineq, dsc);
    update(f, p1, s.ineq.C, s.ineq.D, s.ineq.C_term, ds1);
    update(f, pc, s.ineq.C, s.ineq.D, s.ineq.C_term, ds2);
    auto s_seq = solve(f, pc, EqRhs::of_problem(pc));
    Factor g = factor(s.base, fo);
    update(g, pc, s.ineq.C, s.ineq.D, s.ineq.C_term, dsc);
    auto s_comb = solve(g, pc, EqRhs::of_problem(pc));
    CHECK(sol_diff(s_seq, s_comb) < 1e-8);
}
