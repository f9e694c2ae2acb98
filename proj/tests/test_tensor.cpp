#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "digitnet/tensor.hpp"
#include "support/testutil.hpp"

using namespace digitnet;

TEST_CASE("matmul identity") {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  const Tensor c = matmul(a, eye);
  CHECK(c[0] == 1);
  CHECK(c[1] == 2);
  CHECK(c[2] == 3);
  CHECK(c[3] == 4);
}

TEST_CASE("matmul hand case") {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor b({2, 2}, {5, 6, 7, 8});
  const Tensor c = matmul(a, b);
  CHECK(c.at2(0, 0) == 19);
  CHECK(c.at2(0, 1) == 22);
  CHECK(c.at2(1, 0) == 43);
  CHECK(c.at2(1, 1) == 50);
}

TEST_CASE("matmul shape error names both shapes") {
  const Tensor a({1, 3});
  const Tensor b({2, 2});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[1x3]"), ShapeError);
  try {
    matmul(a, b);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("[2x2]") != std::string::npos);
  }
}

TEST_CASE("matmul associativity within 1e-9") {
  SeededRng rng(11);
  for (int iter = 0; iter < 20; ++iter) {
    const auto rand_tensor = [&](std::size_t r, std::size_t c) {
      Tensor t({r, c});
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = 2.0 * rng.uniform() - 1.0;
      return t;
    };
    const Tensor a = rand_tensor(3, 4), b = rand_tensor(4, 5), c = rand_tensor(5, 2);
    const Tensor left = matmul(matmul(a, b), c);
    const Tensor right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      CHECK(std::fabs(left[i] - right[i]) < 1e-9);
    }
  }
}

TEST_CASE("transpose of product equals product of transposes within 1e-12") {
  SeededRng rng(12);
  Tensor a({4, 3}), b({3, 5});
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.normal();
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = rng.normal();
  const Tensor left = transpose(matmul(a, b));
  const Tensor right = matmul(transpose(b), transpose(a));
  REQUIRE(left.same_shape(right));
  for (std::size_t i = 0; i < left.size(); ++i) CHECK(std::fabs(left[i] - right[i]) < 1e-12);
}

TEST_CASE("elementwise ops") {
  CHECK(add(Tensor({2}, {1, 2}), Tensor({2}, {0, 0}))[1] == 2);
  const Tensor m = mul(Tensor({3}, {1, 2, 3}), Tensor({3}, {2, 2, 2}));
  CHECK(m[0] == 2);
  CHECK(m[1] == 4);
  CHECK(m[2] == 6);
  const Tensor s = scale(Tensor({2}, {1, 2}), 0.0);
  CHECK(s[0] == 0);
  CHECK(s[1] == 0);
  const Tensor d = sub(Tensor({2}, {5, 7}), Tensor({2}, {2, 3}));
  CHECK(d[0] == 3);
  CHECK(d[1] == 4);
  CHECK_THROWS_AS(add(Tensor({2}), Tensor({3})), ShapeError);
}

TEST_CASE("argmax picks smallest index on ties") {
  CHECK(argmax(Tensor({3}, {0.1, 0.7, 0.2})) == 1);
  CHECK(argmax(Tensor({2}, {0.5, 0.5})) == 0);
  CHECK(argmax(Tensor({10}, std::vector<double>(10, 0.3))) == 0);
  CHECK_THROWS_AS(argmax(Tensor({2, 2})), ShapeError);
}

TEST_CASE("reshape preserves data and checks element count") {
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor r = t.reshaped({3, 2});
  CHECK(r.dim(0) == 3);
  CHECK(r[4] == 5);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
}

TEST_CASE("equal seeds give equal streams for 1e4 draws") {
  SeededRng a(123456), b(123456);
  for (int i = 0; i < 10000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
  SeededRng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += a.next_u64() == b.next_u64();
  CHECK(same == 0);
}

TEST_CASE("uniform lies in [0,1), normal has sane moments") {
  SeededRng rng(99);
  double sum = 0.0, sum2 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::fabs(sum / n - 0.5) < 0.01);
  sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum2 += z * z;
  }
  CHECK(std::fabs(sum / n) < 0.02);
  CHECK(std::fabs(sum2 / n - 1.0) < 0.03);
}

TEST_CASE("rng state round-trips through restore") {
  SeededRng a(7);
  for (int i = 0; i < 17; ++i) a.normal();
  const SeededRng::State snapshot = a.state();
  SeededRng b(0);
  b.restore(snapshot);
  for (int i = 0; i < 100; ++i) REQUIRE(a.normal() == b.normal());
}

TEST_CASE("permutation covers every index") {
  SeededRng rng(5);
  const auto p = rng.permutation(257);
  std::vector<bool> seen(257, false);
  for (std::size_t i : p) {
    REQUIRE(i < 257);
    REQUIRE(!seen[i]);
    seen[i] = true;
  }
}

TEST_CASE("derive_seed separates purposes and indices") {
  const auto a = derive_seed(42, "shuffle", 1);
  const auto b = derive_seed(42, "shuffle", 2);
  const auto c = derive_seed(42, "dropout", 1);
  CHECK(a != b);
  CHECK(a != c);
  CHECK(derive_seed(42, "shuffle", 1) == a);
}
