#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cyqlone/block_tridiag.hpp>

#include "dense_ref.hpp"

#include <Eigen/Cholesky>
#include <random>

using namespace cyqlone::blocktri;
using cyqlone::batla::index_t;
using cyqlone::batla::real_t;
using cyqtest::assemble_dense;
using cyqtest::random_block_tridiag;
using EMat = cyqtest::EMat;
using EVec = cyqtest::EVec;

namespace {

EVec random_vec(index_t n, std::mt19937_64 &rng) {
    std::normal_distribution<real_t> g(0, 1);
    EVec v(n);
    for (index_t i = 0; i < n; ++i)
        v(i) = g(rng);
    return v;
}

real_t solve_residual(const BlockTridiag &m, const std::vector<real_t> &x,
                      const EVec &b) {
    std::vector<real_t> y(x.size());
    m.multiply(x, y);
    real_t num = 0, den = 1e-300;
    for (index_t i = 0; i < static_cast<index_t>(x.size()); ++i) {
        num += (y[static_cast<std::size_t>(i)] - b(i)) *
               (y[static_cast<std::size_t>(i)] - b(i));
        den += b(i) * b(i);
    }
    return std::sqrt(num / den);
}

index_t nu2_of(index_t i) {
    index_t v = 0;
    while ((i & 1) == 0) {
        i >>= 1;
        ++v;
    }
    return v;
}

} // namespace

TEST_CASE("serial block Cholesky") {
    {
        BlockTridiag m(1, 1);
        m.diag.lane(0)(0, 0, 0) = 4;
        auto f = chol_factor_serial(m);
        CHECK(f.diag(0, 0, 0) == doctest::Approx(2.0));
    }
    {
        // N=2, 1x1 blocks M=[2,2], K=[1]
        BlockTridiag m(2, 1);
        m.diag.lane(0)(0, 0, 0)    = 2;
        m.diag.lane(1)(0, 0, 0)    = 2;
        m.subdiag.lane(0)(0, 0, 0) = 1;
        auto f = chol_factor_serial(m);
        CHECK(f.diag(0, 0, 0) == doctest::Approx(std::sqrt(2.0)));
        CHECK(f.diag(1, 0, 0) == doctest::Approx(std::sqrt(1.5)));
        CHECK(f.subdiag(0, 0, 0) == doctest::Approx(1 / std::sqrt(2.0)));
    }
    {
        std::mt19937_64 rng(1);
        auto m   = random_block_tridiag(8, 3, 77);
        auto f   = chol_factor_serial(m);
        EMat ref = assemble_dense(m);
        // reconstruct L L' densely
        index_t dim = 24;
        EMat L = EMat::Zero(dim, dim);
        for (index_t k = 0; k < 8; ++k)
            for (index_t r = 0; r < 3; ++r)
                for (index_t c = 0; c < 3; ++c) {
                    L(k * 3 + r, k * 3 + c) = f.diag(k, r, c);
                    if (k < 7)
                        L((k + 1) * 3 + r, k * 3 + c) = f.subdiag(k, r, c);
                }
        CHECK(cyqtest::rel_err(L * L.transpose(), ref) < 1e-12);
        // and solve
        EVec b = random_vec(dim, rng);
        std::vector<real_t> x(b.data(), b.data() + dim);
        f.solve(x);
        CHECK(solve_residual(m, x, b) < 1e-12);
    }
}

TEST_CASE("cyclic reduction: spec examples and oracle equivalence") {
    {
        // N=2 scalar example: x = [1, 1]
        BlockTridiag m(2, 1);
        m.diag.lane(0)(0, 0, 0)    = 2;
        m.diag.lane(1)(0, 0, 0)    = 2;
        m.subdiag.lane(0)(0, 0, 0) = 1;
        std::vector<real_t> b{3, 3};
        CRFactor f;
        auto x = cr_factor_solve(m, b, f);
        CHECK(x[0] == doctest::Approx(1.0));
        CHECK(x[1] == doctest::Approx(1.0));
    }
    {
        // identity blocks: x = b
        BlockTridiag m(4, 2);
        for (index_t k = 0; k < 4; ++k)
            for (index_t d = 0; d < 2; ++d)
                m.diag.lane(k)(0, d, d) = 1;
        std::vector<real_t> b{1, 2, 3, 4, 5, 6, 7, 8};
        CRFactor f;
        auto x = cr_factor_solve(m, b, f);
        for (std::size_t i = 0; i < 8; ++i)
            CHECK(x[i] == doctest::Approx(b[i]));
    }
    {
        // random N=16 n=4 vs serial factorization solve
        std::mt19937_64 rng(5);
        auto m = random_block_tridiag(16, 4, 123);
        EVec b = random_vec(64, rng);
        std::vector<real_t> bv(b.data(), b.data() + 64);
        CRFactor f;
        auto x  = cr_factor_solve(m, bv, f);
        auto fs = chol_factor_serial(m);
        std::vector<real_t> xs = bv;
        fs.solve(xs);
        for (index_t i = 0; i < 64; ++i)
            CHECK(x[static_cast<std::size_t>(i)] ==
                  doctest::Approx(xs[static_cast<std::size_t>(i)])
                      .epsilon(1e-10));
        // resolve matches fresh solve; zero rhs gives zero
        auto x2 = cr_resolve(f, bv);
        for (std::size_t i = 0; i < 64; ++i)
            CHECK(x2[i] == x[i]);
        std::vector<real_t> z(64, 0);
        auto xz = cr_resolve(f, z);
        for (auto v : xz)
            CHECK(v == 0.0);
    }
    CHECK_THROWS_AS(cr_factor(random_block_tridiag(6, 2, 1)),
                    std::invalid_argument);
}

TEST_CASE("CR factor equals the dense Cholesky of the nu2-permuted matrix") {
    for (index_t N : {4, 8, 16}) {
        auto m = random_block_tridiag(N, 2, 1000 + N);
        auto f = cr_factor(m);
        // permutation: odd first, then increasing valuation, 0 last
        index_t lg = 0;
        while ((index_t{1} << lg) < N)
            ++lg;
        std::vector<index_t> pos(static_cast<std::size_t>(N));
        index_t at = 0;
        for (index_t l = 0; l < lg; ++l)
            for (index_t i = 1; i < N; ++i)
                if (nu2_of(i) == l)
                    pos[static_cast<std::size_t>(i)] = at++;
        pos[0]   = at++;
        EMat K   = assemble_dense(m);
        index_t n = 2;
        EMat Kp   = EMat::Zero(N * n, N * n);
        for (index_t i = 0; i < N; ++i)
            for (index_t j = 0; j < N; ++j)
                Kp.block(pos[static_cast<std::size_t>(i)] * n,
                         pos[static_cast<std::size_t>(j)] * n, n, n) =
                    K.block(i * n, j * n, n, n);
        EMat Ld = Eigen::LLT<EMat>(Kp).matrixL();
        // compare the stored factor blocks
        for (index_t l = 0; l + 1 < f.n_levels; ++l) {
            index_t half = (N >> l) / 2;
            for (index_t mm = 0; mm < half; ++mm) {
                index_t i = (2 * mm + 1) << l;
                index_t a = i - (index_t{1} << l);
                index_t b = i + (index_t{1} << l);
                auto Lb   = f.L[static_cast<std::size_t>(l)].lane(mm);
                auto Ub   = f.U[static_cast<std::size_t>(l)].lane(mm);
                for (index_t r = 0; r < n; ++r)
                    for (index_t c = 0; c < n; ++c) {
                        if (c <= r)
                            CHECK(Lb(0, r, c) ==
                                  doctest::Approx(
                                      Ld(pos[static_cast<std::size_t>(i)] *
                                                 n + r,
                                         pos[static_cast<std::size_t>(i)] *
                                                 n + c))
                                      .epsilon(1e-12));
                        CHECK(Ub(0, r, c) ==
                              doctest::Approx(
                                  Ld(pos[static_cast<std::size_t>(a)] * n + r,
                                     pos[static_cast<std::size_t>(i)] * n +
                                         c))
                                  .epsilon(1e-12));
                        if (b < N)
                            CHECK(f.Y[static_cast<std::size_t>(l)].lane(
                                      mm)(0, r, c) ==
                                  doctest::Approx(
                                      Ld(pos[static_cast<std::size_t>(b)] *
                                                 n + r,
                                         pos[static_cast<std::size_t>(i)] *
                                                 n + c))
                                      .epsilon(1e-12));
                    }
            }
        }
        // fill-in count: one block per eliminated interior row
        index_t fills = 0, interior = 0;
        for (index_t l = 0; l + 1 < f.n_levels; ++l) {
            index_t half = (N >> l) / 2;
            for (index_t mm = 0; mm < half; ++mm) {
                if (mm < half - 1)
                    ++interior; // eliminated row with both neighbors
                auto Kd = f.K_lvl[static_cast<std::size_t>(l) + 1].lane(mm);
                bool nz = false;
                for (index_t r = 0; r < n; ++r)
                    for (index_t c = 0; c < n; ++c)
                        nz = nz || Kd(0, r, c) != 0;
                if (mm < half - 1)
                    CHECK(nz); // fill-in created
                fills += nz ? 1 : 0;
            }
        }
        CHECK(fills == interior);
    }
}

TEST_CASE("circular coupling via the wrap extension") {
    std::mt19937_64 rng(3);
    auto m = random_block_tridiag(8, 2, 321, 1, true);
    EMat K = assemble_dense(m);
    EVec b = random_vec(16, rng);
    std::vector<real_t> bv(b.data(), b.data() + 16);
    CRFactor f;
    auto x   = cr_factor_solve(m, bv, f);
    EVec ref = K.ldlt().solve(b);
    for (index_t i = 0; i < 16; ++i)
        CHECK(x[static_cast<std::size_t>(i)] ==
              doctest::Approx(ref(i)).epsilon(1e-10));
    // PCR is derived for the open-chain case only
    CHECK_THROWS_AS(pcr_solve(m, bv), std::invalid_argument);
}

TEST_CASE("PCR: full width per level, matches CR") {
    {
        BlockTridiag m(1, 3);
        for (index_t d = 0; d < 3; ++d)
            m.diag.lane(0)(0, d, d) = 2;
        std::vector<real_t> b{2, 4, 6};
        auto x = pcr_solve(m, b);
        CHECK(x[0] == doctest::Approx(1.0));
        CHECK(x[2] == doctest::Approx(3.0));
    }
    std::mt19937_64 rng(17);
    for (index_t N : {4, 8}) {
        auto m = random_block_tridiag(N, 2, 55 + N);
        EVec b = random_vec(N * 2, rng);
        std::vector<real_t> bv(b.data(), b.data() + N * 2);
        CRFactor fc;
        auto xc = cr_factor_solve(m, bv, fc);
        PCRFactor fp;
        auto xp = pcr_solve(m, bv, &fp);
        for (std::size_t i = 0; i < bv.size(); ++i)
            CHECK(xp[i] == doctest::Approx(xc[i]).epsilon(1e-11));
        // every level factorizes all N blocks
        for (index_t l = 0; l < fp.n_levels; ++l)
            CHECK(fp.L[static_cast<std::size_t>(l)].batch() == N);
        // identical solution with batched storage (vlen = N)
        auto mv = random_block_tridiag(N, 2, 55 + N, N);
        auto xv = pcr_solve(mv, bv);
        for (std::size_t i = 0; i < bv.size(); ++i)
            CHECK(xv[i] == doctest::Approx(xc[i]).epsilon(1e-11));
    }
}

TEST_CASE("preconditioners and PCG") {
    {
        // stair on the 2x2 scalar example
        BlockTridiag m(2, 1);
        m.diag.lane(0)(0, 0, 0)    = 2;
        m.diag.lane(1)(0, 0, 0)    = 2;
        m.subdiag.lane(0)(0, 0, 0) = 1;
        auto pre = stair_precond_build(m);
        std::vector<real_t> r{1, 0}, z(2);
        pre.apply(r, z);
        // Phi^{-1} = [[.5, -.25], [-.25, .5]]
        CHECK(z[0] == doctest::Approx(0.5));
        CHECK(z[1] == doctest::Approx(-0.25));
    }
    {
        // K = 0: stair equals the exact block-diagonal inverse
        auto m = random_block_tridiag(4, 3, 99);
        for (index_t k = 0; k < 3; ++k) {
            auto s = m.subdiag.lane(k);
            for (index_t r = 0; r < 3; ++r)
                for (index_t c = 0; c < 3; ++c)
                    s(0, r, c) = 0;
        }
        auto pre = stair_precond_build(m);
        std::mt19937_64 rng(2);
        EVec b = random_vec(12, rng);
        std::vector<real_t> bv(b.data(), b.data() + 12), z(12);
        pre.apply(bv, z);
        EMat K = assemble_dense(m);
        EVec ref = K.ldlt().solve(b);
        for (index_t i = 0; i < 12; ++i)
            CHECK(z[static_cast<std::size_t>(i)] ==
                  doctest::Approx(ref(i)).epsilon(1e-12));
    }
    {
        // stair matches the dense formula on a random instance
        auto m  = random_block_tridiag(4, 2, 7);
        auto pre = stair_precond_build(m);
        EMat K   = assemble_dense(m);
        EMat Dm  = EMat::Zero(8, 8), Km = K;
        for (index_t k = 0; k < 4; ++k)
            Dm.block(k * 2, k * 2, 2, 2) = K.block(k * 2, k * 2, 2, 2);
        Km -= Dm;
        EMat J   = Dm.inverse();
        EMat ref = J * (EMat::Identity(8, 8) - Km * J);
        for (index_t col = 0; col < 8; ++col) {
            std::vector<real_t> e(8, 0), z(8);
            e[static_cast<std::size_t>(col)] = 1;
            pre.apply(e, z);
            for (index_t r = 0; r < 8; ++r)
                CHECK(z[static_cast<std::size_t>(r)] ==
                      doctest::Approx(ref(r, col)).epsilon(1e-12));
        }
    }
    {
        // jacobi: identity on identity, exact on block-diagonal
        BlockTridiag m(2, 2);
        for (index_t k = 0; k < 2; ++k)
            for (index_t d = 0; d < 2; ++d)
                m.diag.lane(k)(0, d, d) = 1;
        auto pre = jacobi_precond_build(m);
        std::vector<real_t> r{1, 2, 3, 4}, z(4);
        pre.apply(r, z);
        for (std::size_t i = 0; i < 4; ++i)
            CHECK(z[i] == doctest::Approx(r[i]));
    }
    {
        // PCG: identity converges immediately; block-diagonal with jacobi in
        // one iteration; random diagonally dominant with stair to 1e-10
        std::mt19937_64 rng(12);
        BlockTridiag id(4, 2);
        for (index_t k = 0; k < 4; ++k)
            for (index_t d = 0; d < 2; ++d)
                id.diag.lane(k)(0, d, d) = 1;
        EVec b = random_vec(8, rng);
        std::vector<real_t> bv(b.data(), b.data() + 8);
        auto r1 = pcg_solve(id, bv, jacobi_precond_build(id), 1e-12, 10);
        CHECK(r1.converged);
        CHECK(r1.iterations == 1);

        auto m = random_block_tridiag(4, 4, 31);
        EVec b2 = random_vec(16, rng);
        std::vector<real_t> bv2(b2.data(), b2.data() + 16);
        auto r2 = pcg_solve(m, bv2, stair_precond_build(m), 1e-10, 100);
        CHECK(r2.converged);
        CHECK(solve_residual(m, r2.x, b2) < 1e-10);
        CHECK(r2.iterations > 0);
    }
}

TEST_CASE("oracle equivalence across N and n") {
    std::mt19937_64 rng(99);
    for (index_t N : {2, 4, 8, 16, 32})
        for (index_t n : {1, 2, 3, 5}) {
            auto m = random_block_tridiag(N, n, 10 * N + n);
            EMat K = assemble_dense(m);
            EVec b = random_vec(N * n, rng);
            std::vector<real_t> bv(b.data(), b.data() + N * n);
            EVec ref = K.ldlt().solve(b);
            CRFactor fc;
            auto xc = cr_factor_solve(m, bv, fc);
            auto xp = pcr_solve(m, bv);
            auto fs = chol_factor_serial(m);
            std::vector<real_t> xs = bv;
            fs.solve(xs);
            for (index_t i = 0; i < N * n; ++i) {
                auto iu = static_cast<std::size_t>(i);
                CHECK(std::abs(xc[iu] - ref(i)) <
                      1e-9 * (1 + std::abs(ref(i))));
                CHECK(std::abs(xp[iu] - ref(i)) <
                      1e-9 * (1 + std::abs(ref(i))));
                CHECK(std::abs(xs[iu] - ref(i)) <
                      1e-9 * (1 + std::abs(ref(i))));
            }
        }
}

TEST_CASE("worker count does not change results") {
    auto m = random_block_tridiag(16, 3, 2024);
    std::mt19937_64 rng(0);
    EVec b = random_vec(48, rng);
    std::vector<real_t> bv(b.data(), b.data() + 48);
    CRFactor f1, f4;
    auto x1 = cr_factor_solve(m, bv, f1, 1);
    auto x4 = cr_factor_solve(m, bv, f4, 4);
    for (std::size_t i = 0; i < bv.size(); ++i)
        CHECK(x1[i] == x4[i]); // bit-identical: items are independent
}
