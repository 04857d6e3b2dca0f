#include <doctest.h>

#include <cmath>
#include <limits>

#include "convfeat/tensor.hpp"
#include "oracles.hpp"

using namespace convfeat;

TEST_CASE("tensor layout is row-major, last axis fastest") {
    Tensor t({2, 3, 4});
    CHECK(t.size() == 24);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
    CHECK(t(0, 0, 0) == 0.0);
    CHECK(t(0, 0, 3) == 3.0);
    CHECK(t(0, 1, 0) == 4.0);
    CHECK(t(1, 0, 0) == 12.0);
    CHECK(t(1, 2, 3) == 23.0);

    Tensor q({2, 2, 2, 2});
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = static_cast<double>(i);
    CHECK(q(1, 0, 1, 0) == 10.0);
    CHECK(q(0, 1, 1, 1) == 7.0);
}

TEST_CASE("tensor constructors validate shape against data") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeMismatch);
    Tensor t = Tensor::full({3, 2}, 2.5);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 2.5);
    CHECK(shape_volume({2, 3, 4}) == 24);
    CHECK(shape_volume({}) == 1);
    CHECK(shape_string({2, 3}) == "(2,3)");
}

TEST_CASE("reshape keeps data and rejects volume changes") {
    Tensor t({2, 6}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
    Tensor r = reshape(t, {3, 4});
    CHECK(r.extent(0) == 3);
    CHECK(r(2, 3) == 11.0);
    CHECK_THROWS_AS(reshape(t, {5, 2}), ShapeMismatch);
}

TEST_CASE("matmul agrees with naive triple loop") {
    Rng rng(11);
    for (auto [n, k, m] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 1},
                           {3, 5, 4},
                           {7, 2, 9},
                           {16, 17, 8}}) {
        Tensor a = oracles::random_tensor({n, k}, rng);
        Tensor b = oracles::random_tensor({k, m}, rng);
        Tensor got = matmul(a, b);
        Tensor want = oracles::naive_matmul(a, b);
        CHECK(got.shape() == want.shape());
        CHECK(oracles::max_abs_diff(got, want) < 1e-12);
    }
    Tensor a({2, 3});
    Tensor b({4, 2});
    CHECK_THROWS_AS(matmul(a, b), ShapeMismatch);
    CHECK_THROWS_AS(matmul(a, Tensor({3})), ShapeMismatch);
}

TEST_CASE("matmul_nt multiplies by the transpose of b") {
    Rng rng(12);
    Tensor a = oracles::random_tensor({5, 7}, rng);
    Tensor b = oracles::random_tensor({4, 7}, rng);
    Tensor bt({7, 4});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 7; ++j) bt(j, i) = b(i, j);
    CHECK(oracles::max_abs_diff(matmul_nt(a, b), oracles::naive_matmul(a, bt)) < 1e-12);
    CHECK_THROWS_AS(matmul_nt(a, Tensor({4, 6})), ShapeMismatch);
}

TEST_CASE("matmul_tn multiplies by the transpose of a") {
    Rng rng(13);
    Tensor a = oracles::random_tensor({7, 5}, rng);
    Tensor b = oracles::random_tensor({7, 4}, rng);
    Tensor at({5, 7});
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 5; ++j) at(j, i) = a(i, j);
    CHECK(oracles::max_abs_diff(matmul_tn(a, b), oracles::naive_matmul(at, b)) < 1e-12);
    CHECK_THROWS_AS(matmul_tn(a, Tensor({6, 4})), ShapeMismatch);
}

TEST_CASE("euclidean distance") {
    Tensor a({3}, {1.0, 2.0, 3.0});
    Tensor b({3}, {4.0, 6.0, 3.0});
    CHECK(euclidean_distance(a, b) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(euclidean_distance(a, a) == 0.0);
    std::vector<double> s{1.0, 2.0};
    CHECK_THROWS_AS(euclidean_distance(std::span<const double>(s), a.values()), ShapeMismatch);
}

TEST_CASE("require_finite flags NaN and Inf with the caller's context") {
    Tensor t({2, 2}, {1.0, 2.0, 3.0, 4.0});
    CHECK_NOTHROW(require_finite(t, "ok"));
    t(1, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(require_finite(t, "stage7"),
                         doctest::Contains("stage7"), NonFiniteActivation);
    t(1, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(require_finite(t, "stage7"), NonFiniteActivation);
}
