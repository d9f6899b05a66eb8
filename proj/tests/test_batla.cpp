#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cyqlone/kernels.hpp>

#include <cmath>
#include <random>

using namespace cyqlone::batla;

namespace {

DenseMatrix random_mat(index_t m, index_t n, std::mt19937_64 &rng,
                       real_t scale = 1) {
    std::normal_distribution<real_t> g(0, scale);
    DenseMatrix a(m, n);
    for (index_t r = 0; r < m; ++r)
        for (index_t c = 0; c < n; ++c)
            a(r, c) = g(rng);
    return a;
}

DenseMatrix random_spd(index_t n, std::mt19937_64 &rng) {
    DenseMatrix g = random_mat(n, n, rng);
    DenseMatrix a(n, n);
    for (index_t r = 0; r < n; ++r)
        for (index_t c = 0; c < n; ++c) {
            real_t s = 0;
            for (index_t k = 0; k < n; ++k)
                s += g(r, k) * g(c, k);
            a(r, c) = s + (r == c ? n : real_t{0});
        }
    return a;
}

DenseMatrix matmul(const DenseMatrix &a, bool ta, const DenseMatrix &b,
                   bool tb) {
    index_t m = ta ? a.cols : a.rows;
    index_t k = ta ? a.rows : a.cols;
    index_t n = tb ? b.rows : b.cols;
    DenseMatrix c(m, n);
    for (index_t i = 0; i < m; ++i)
        for (index_t j = 0; j < n; ++j) {
            real_t s = 0;
            for (index_t l = 0; l < k; ++l)
                s += (ta ? a(l, i) : a(i, l)) * (tb ? b(j, l) : b(l, j));
            c(i, j) = s;
        }
    return c;
}

real_t rel_diff(const DenseMatrix &a, const DenseMatrix &b) {
    real_t num = 0, den = 1e-300;
    for (index_t r = 0; r < a.rows; ++r)
        for (index_t c = 0; c < a.cols; ++c) {
            num += (a(r, c) - b(r, c)) * (a(r, c) - b(r, c));
            den += b(r, c) * b(r, c);
        }
    return std::sqrt(num / den);
}

DenseMatrix lower_of(const DenseMatrix &a) {
    DenseMatrix l = a;
    for (index_t r = 0; r < a.rows; ++r)
        for (index_t c = r + 1; c < a.cols; ++c)
            l(r, c) = 0;
    return l;
}

} // namespace

TEST_CASE("compact layout: offset formula and pack round-trip") {
    // single 1x1 [[7]] with v=4 packs as [7, 0, 0, 0]
    BatchMatrix b = pack({DenseMatrix{[&] {
                        DenseMatrix m(1, 1);
                        m(0, 0) = 7;
                        return m;
                    }()}},
                         4);
    REQUIRE(b.buffer_length() == 4);
    CHECK(b.data()[0] == 7.0);
    CHECK(b.data()[1] == 0.0);
    CHECK(b.data()[2] == 0.0);
    CHECK(b.data()[3] == 0.0);

    // element (1,0) of matrix j=5 with m=n=3, v=4 sits at offset 41
    BatchMatrix c(3, 3, 8, 4);
    CHECK(c.offset(5, 1, 0) == 41);

    // identity round trip
    std::vector<DenseMatrix> ids(4, DenseMatrix::identity(2));
    auto out = unpack(pack(ids, 4));
    REQUIRE(out.size() == 4);
    for (auto &m : out)
        CHECK(rel_diff(m, DenseMatrix::identity(2)) == 0.0);

    // random round trip is bit-exact, all v, batch sizes incl. non-multiples
    std::mt19937_64 rng(7);
    for (index_t v : {1, 2, 4, 8})
        for (index_t nb : {1, 3, 5, 8, 9}) {
            std::vector<DenseMatrix> ms;
            for (index_t j = 0; j < nb; ++j)
                ms.push_back(random_mat(3, 2, rng));
            auto rt = unpack(pack(ms, v));
            for (index_t j = 0; j < nb; ++j)
                for (index_t r = 0; r < 3; ++r)
                    for (index_t cc = 0; cc < 2; ++cc)
                        CHECK(rt[static_cast<std::size_t>(j)](r, cc) ==
                              ms[static_cast<std::size_t>(j)](r, cc));
        }

    CHECK(unpack(BatchMatrix(2, 2, 0, 4)).empty());
    CHECK_THROWS_AS(pack({DenseMatrix(2, 2), DenseMatrix(3, 2)}, 4),
                    std::invalid_argument);
}

TEST_CASE("potrf_batch: examples, signed variant, pivot failure") {
    {
        DenseMatrix a(1, 1);
        a(0, 0) = 4;
        auto l  = potrf_batch(pack({a}, 2, MatKind::symmetric_lower));
        CHECK(l(0, 0, 0) == doctest::Approx(2.0).epsilon(1e-15));
    }
    {
        DenseMatrix a(2, 2);
        a(0, 0) = 4;
        a(1, 0) = 2;
        a(1, 1) = 5;
        auto l  = potrf_batch(pack({a}, 1, MatKind::symmetric_lower));
        CHECK(l(0, 0, 0) == doctest::Approx(2.0));
        CHECK(l(0, 1, 0) == doctest::Approx(1.0));
        CHECK(l(0, 1, 1) == doctest::Approx(2.0));
    }
    {
        DenseMatrix a(1, 1);
        a(0, 0) = -1;
        std::vector<Signature> sig;
        auto l = potrf_batch_signed(pack({a}, 1, MatKind::symmetric_lower),
                                    sig);
        CHECK(l(0, 0, 0) == doctest::Approx(1.0));
        CHECK(sig[0][0] == -1);
    }
    {
        // reconstruction with mixed signature
        std::mt19937_64 rng(3);
        DenseMatrix a = random_mat(4, 4, rng);
        for (index_t r = 0; r < 4; ++r)
            for (index_t c = 0; c < r; ++c)
                a(c, r) = a(r, c);
        for (index_t r = 0; r < 4; ++r)
            a(r, r) = (r % 2 ? 5.0 : -5.0);
        std::vector<Signature> sig;
        auto l = potrf_batch_signed(pack({a}, 1, MatKind::symmetric_lower),
                                    sig);
        DenseMatrix ld = unpack(l)[0];
        DenseMatrix lds = ld;
        for (index_t c = 0; c < 4; ++c) {
            CHECK(ld(c, c) > 0);
            for (index_t r = 0; r < 4; ++r)
                lds(r, c) *= sig[0][c];
        }
        CHECK(rel_diff(matmul(lds, false, ld, true), a) < 1e-12);
    }
    {
        DenseMatrix a(2, 2); // zero pivot
        a(0, 0) = 1;
        CHECK_THROWS_AS(
            (void)potrf_batch(pack({DenseMatrix(2, 2), a}, 4,
                                   MatKind::symmetric_lower)),
            factorize_error);
        try {
            (void)potrf_batch(
                pack({DenseMatrix::identity(2), a}, 4,
                     MatKind::symmetric_lower));
        } catch (const factorize_error &e) {
            CHECK(e.batch_index == 1);
            CHECK(e.pivot == 1);
        }
    }
}

TEST_CASE("trsm_batch: all modes against multiply-back") {
    {
        auto i2 = DenseMatrix::identity(2);
        auto x  = trsm_batch(pack({i2}, 1), pack({i2}, 1),
                             TrsmMode::right_lower_trans);
        CHECK(rel_diff(unpack(x)[0], i2) == 0.0);
    }
    {
        DenseMatrix b(2, 2), l(2, 2);
        b(0, 0) = 2;
        b(1, 1) = 2;
        l(0, 0) = 2;
        l(1, 0) = 1;
        l(1, 1) = 1;
        auto x = trsm_batch(pack({b}, 1), pack({l}, 1),
                            TrsmMode::right_lower_trans);
        CHECK(x(0, 0, 0) == doctest::Approx(1.0));
        CHECK(x(0, 0, 1) == doctest::Approx(-1.0));
        CHECK(x(0, 1, 0) == doctest::Approx(0.0));
        CHECK(x(0, 1, 1) == doctest::Approx(2.0));
    }
    std::mt19937_64 rng(11);
    for (index_t v : {1, 2, 4}) {
        std::vector<DenseMatrix> bs, ls;
        for (index_t j = 0; j < 5; ++j) {
            bs.push_back(random_mat(3, 3, rng));
            ls.push_back(lower_of(random_spd(3, rng)));
        }
        auto B = pack(bs, v);
        auto L = pack(ls, v, MatKind::lower_triangular);
        auto X = trsm_batch(B, L, TrsmMode::right_lower_trans);
        auto xs = unpack(X);
        for (index_t j = 0; j < 5; ++j)
            CHECK(rel_diff(matmul(xs[static_cast<std::size_t>(j)], false,
                                  ls[static_cast<std::size_t>(j)], true),
                           bs[static_cast<std::size_t>(j)]) < 1e-13);
        auto X2 = trsm_batch(B, L, TrsmMode::left_lower);
        auto x2 = unpack(X2);
        for (index_t j = 0; j < 5; ++j)
            CHECK(rel_diff(matmul(ls[static_cast<std::size_t>(j)], false,
                                  x2[static_cast<std::size_t>(j)], false),
                           bs[static_cast<std::size_t>(j)]) < 1e-13);
        auto X3 = trsm_batch(B, L, TrsmMode::left_lower_trans);
        auto x3 = unpack(X3);
        for (index_t j = 0; j < 5; ++j)
            CHECK(rel_diff(matmul(ls[static_cast<std::size_t>(j)], true,
                                  x3[static_cast<std::size_t>(j)], false),
                           bs[static_cast<std::size_t>(j)]) < 1e-13);
    }
}

TEST_CASE("syrk, gemm, trmm, trtri, trsyrk against naive references") {
    std::mt19937_64 rng(23);
    {
        // syrk spec examples
        auto c0 = pack({DenseMatrix(1, 1)}, 1, MatKind::symmetric_lower);
        auto a  = pack({DenseMatrix::identity(1)}, 1);
        auto r  = syrk_batch(c0, a, +1);
        CHECK(r(0, 0, 0) == doctest::Approx(1.0));
        DenseMatrix c1 = DenseMatrix::identity(2), a1(2, 1);
        a1(0, 0) = 1;
        a1(1, 0) = 1;
        auto r1  = syrk_batch(pack({c1}, 1, MatKind::symmetric_lower),
                              pack({a1}, 1), +1);
        CHECK(r1(0, 0, 0) == doctest::Approx(2.0));
        CHECK(r1(0, 1, 0) == doctest::Approx(1.0));
        CHECK(r1(0, 1, 1) == doctest::Approx(2.0));
        auto fused = syrk_batch(pack({DenseMatrix::identity(2)}, 1,
                                     MatKind::symmetric_lower),
                                pack({DenseMatrix(2, 1)}, 1), +1, true);
        CHECK(rel_diff(unpack(fused)[0], DenseMatrix::identity(2)) < 1e-15);
    }
    for (index_t v : {1, 4})
        for (index_t nb : {1, 3, 9}) {
            std::vector<DenseMatrix> as, bs, cs;
            for (index_t j = 0; j < nb; ++j) {
                as.push_back(random_mat(4, 3, rng));
                bs.push_back(random_mat(3, 4, rng));
                cs.push_back(random_mat(4, 4, rng));
            }
            auto r = gemm_batch(pack(cs, v), pack(as, v), pack(bs, v), false,
                                false, -1);
            auto rs = unpack(r);
            for (index_t j = 0; j < nb; ++j) {
                auto ju  = static_cast<std::size_t>(j);
                auto ref = cs[ju];
                auto ab  = matmul(as[ju], false, bs[ju], false);
                for (index_t x = 0; x < 4; ++x)
                    for (index_t y = 0; y < 4; ++y)
                        ref(x, y) -= ab(x, y);
                CHECK(rel_diff(rs[ju], ref) < 1e-14);
            }
        }
    {
        // trmm right_lower matches gemm with the zero-filled triangle
        std::vector<DenseMatrix> as, ls;
        for (index_t j = 0; j < 4; ++j) {
            as.push_back(random_mat(2, 3, rng));
            ls.push_back(lower_of(random_mat(3, 3, rng)));
        }
        auto r  = trmm_batch(pack(as, 2), pack(ls, 2,
                                               MatKind::lower_triangular),
                             TrmmMode::right_lower);
        auto rs = unpack(r);
        for (index_t j = 0; j < 4; ++j)
            CHECK(rel_diff(rs[static_cast<std::size_t>(j)],
                           matmul(as[static_cast<std::size_t>(j)], false,
                                  ls[static_cast<std::size_t>(j)], false)) <
                  1e-14);
        // identity operand
        auto id = trmm_batch(pack({random_mat(3, 3, rng)}, 1),
                             pack({DenseMatrix::identity(3)}, 1,
                                  MatKind::lower_triangular),
                             TrmmMode::right_lower);
        (void)id;
    }
    {
        // trtri: diagonal example and residual
        DenseMatrix d(2, 2);
        d(0, 0) = 2;
        d(1, 1) = 4;
        auto r = trtri_batch(pack({d}, 1, MatKind::lower_triangular));
        CHECK(r(0, 0, 0) == doctest::Approx(0.5));
        CHECK(r(0, 1, 1) == doctest::Approx(0.25));
    }
}

TEST_CASE("trtri residual and trsyrk") {
    std::mt19937_64 rng(5);
    std::vector<DenseMatrix> ls;
    for (index_t j = 0; j < 3; ++j)
        ls.push_back(lower_of(random_spd(4, rng)));
    auto inv = trtri_batch(pack(ls, 2, MatKind::lower_triangular));
    auto is  = unpack(inv);
    for (index_t j = 0; j < 3; ++j)
        CHECK(rel_diff(matmul(ls[static_cast<std::size_t>(j)], false,
                              is[static_cast<std::size_t>(j)], false),
                       DenseMatrix::identity(4)) < 1e-12);

    DenseMatrix u(2, 2);
    u(0, 0) = 1;
    u(0, 1) = 1;
    u(1, 1) = 1;
    auto t = trsyrk_batch(pack({u}, 1, MatKind::upper_triangular));
    CHECK(t(0, 0, 0) == doctest::Approx(2.0));
    CHECK(t(0, 1, 0) == doctest::Approx(1.0));
    CHECK(t(0, 1, 1) == doctest::Approx(1.0));
    // random: equals gemm(T, T') lower triangle
    std::vector<DenseMatrix> us;
    for (index_t j = 0; j < 4; ++j) {
        DenseMatrix m = random_mat(4, 4, rng);
        for (index_t r = 1; r < 4; ++r)
            for (index_t c = 0; c < r; ++c)
                m(r, c) = 0;
        us.push_back(m);
    }
    auto tt = unpack(trsyrk_batch(pack(us, 4, MatKind::upper_triangular)));
    for (index_t j = 0; j < 4; ++j) {
        auto ref = matmul(us[static_cast<std::size_t>(j)], false,
                          us[static_cast<std::size_t>(j)], true);
        for (index_t r = 0; r < 4; ++r)
            for (index_t c = 0; c <= r; ++c)
                CHECK(tt[static_cast<std::size_t>(j)](r, c) ==
                      doctest::Approx(ref(r, c)).epsilon(1e-13));
    }
}

TEST_CASE("lane_rotate") {
    std::mt19937_64 rng(9);
    std::vector<DenseMatrix> ms{random_mat(2, 2, rng), random_mat(2, 2, rng)};
    auto b = pack(ms, 2);
    auto r = lane_rotate(b, 1);
    CHECK(rel_diff(unpack(r)[0], ms[1]) == 0.0);
    CHECK(rel_diff(unpack(r)[1], ms[0]) == 0.0);
    auto id = lane_rotate(lane_rotate(b, 1), -1);
    CHECK(rel_diff(unpack(id)[0], ms[0]) == 0.0);
    auto same = lane_rotate(b, 0);
    CHECK(rel_diff(unpack(same)[1], ms[1]) == 0.0);
}

TEST_CASE("hyh_transform: identity, downdate, update, metric identity") {
    {
        // G = 0: F unchanged
        DenseMatrix f0(1, 1);
        f0(0, 0)      = 2;
        BatchMatrix F = pack({f0}, 1, MatKind::lower_triangular);
        BatchMatrix G = pack({DenseMatrix(1, 1)}, 1);
        auto h = hyh_transform_batch(F, G, Signature(1, +1),
                                     Signature(1, -1), 1);
        CHECK(F(0, 0, 0) == doctest::Approx(2.0));
        (void)h;
    }
    {
        // rank-1 downdate: chol(5) with -1-signed [1] gives chol(4) = 2
        DenseMatrix f0(1, 1), g0(1, 1);
        f0(0, 0)      = std::sqrt(5.0);
        g0(0, 0)      = 1;
        BatchMatrix F = pack({f0}, 1, MatKind::lower_triangular);
        BatchMatrix G = pack({g0}, 1);
        hyh_transform_batch(F, G, Signature(1, +1), Signature(1, -1), 1);
        CHECK(F(0, 0, 0) == doctest::Approx(2.0).epsilon(1e-14));
        CHECK(G(0, 0, 0) == 0.0);
    }
    {
        // rank-1 update: chol(4) with +1-signed [3] gives sqrt(13)
        DenseMatrix f0(1, 1), g0(1, 1);
        f0(0, 0)      = 2;
        g0(0, 0)      = 3;
        BatchMatrix F = pack({f0}, 1, MatKind::lower_triangular);
        BatchMatrix G = pack({g0}, 1);
        hyh_transform_batch(F, G, Signature(1, +1), Signature(1, +1), 1);
        CHECK(F(0, 0, 0) == doctest::Approx(std::sqrt(13.0)));
    }
    {
        // metric identity on random data: F~ F~' = F F' + G S G'
        std::mt19937_64 rng(31);
        for (int rep = 0; rep < 20; ++rep) {
            index_t n = 4, m = 3;
            DenseMatrix l = lower_of(random_spd(n, rng));
            DenseMatrix g = random_mat(n, m, rng, 0.2);
            Signature s(m);
            for (index_t k = 0; k < m; ++k)
                s[k] = (rep + k) % 2 ? +1 : -1;
            auto ref = matmul(l, false, l, true);
            for (index_t k = 0; k < m; ++k)
                for (index_t a = 0; a < n; ++a)
                    for (index_t b = 0; b < n; ++b)
                        ref(a, b) += s[k] * g(a, k) * g(b, k);
            BatchMatrix F = pack({l}, 1, MatKind::lower_triangular);
            BatchMatrix G = pack({g}, 1);
            hyh_transform_batch(F, G, Signature(n, +1), s, n);
            auto lf = unpack(F)[0];
            CHECK(rel_diff(matmul(lf, false, lf, true), ref) < 1e-10);
            for (index_t a = 0; a < n; ++a)
                for (index_t k = 0; k < m; ++k)
                    CHECK(G(0, a, k) == 0.0);
        }
    }
    {
        // breakdown carries the column index
        DenseMatrix f0(1, 1), g0(1, 1);
        f0(0, 0)      = 1;
        g0(0, 0)      = 2; // downdate below zero
        BatchMatrix F = pack({f0}, 1, MatKind::lower_triangular);
        BatchMatrix G = pack({g0}, 1);
        CHECK_THROWS_AS(hyh_transform_batch(F, G, Signature(1, +1),
                                            Signature(1, -1), 1),
                        hyh_breakdown);
    }
}

TEST_CASE("kernel results are independent of vlen") {
    std::mt19937_64 rng(42);
    std::vector<DenseMatrix> as, cs;
    for (index_t j = 0; j < 9; ++j) {
        as.push_back(random_mat(5, 5, rng));
        cs.push_back(random_spd(5, rng));
    }
    std::vector<std::vector<DenseMatrix>> results;
    for (index_t v : {1, 2, 4, 8}) {
        auto C = pack(cs, v, MatKind::symmetric_lower);
        auto A = pack(as, v);
        auto L = potrf_batch(syrk_batch(C, A, +1));
        results.push_back(unpack(L));
    }
    for (std::size_t v = 1; v < results.size(); ++v)
        for (std::size_t j = 0; j < 9; ++j)
            CHECK(rel_diff(results[v][j], results[0][j]) < 1e-13);
}
