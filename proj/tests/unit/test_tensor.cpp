// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"

#include "pg/parallel.hpp"
#include "pg/tensor.hpp"

#include <doctest.h>

#include <atomic>

using namespace pg;

TEST_CASE("tensor shape invariants") {
  CHECK_THROWS_AS(Tensor(Shape{}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  const Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK_THROWS_AS(t.dim(2), ShapeError);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
}

TEST_CASE("elementwise add and identity multiply") {
  const Tensor a({2}, std::vector<float>{1, 2}), b({2}, std::vector<float>{3, 4});
  CHECK(elementwise(BinaryOp::add, a, b).values() == std::vector<float>{4, 6});

  std::mt19937_64 rng(3);
  const Tensor x = oracle::random_tensor({4, 5}, rng);
  CHECK(elementwise(BinaryOp::mul, x, Tensor({4, 5}, 1.0f)) == x);
}

TEST_CASE("elementwise matches scalar loops") {
  std::mt19937_64 rng(11);
  const Tensor a = oracle::random_tensor({3, 3}, rng), b = oracle::random_tensor({3, 3}, rng, 0.5f, 2.0f);
  const auto check = [&](BinaryOp op, auto f) {
    const Tensor r = elementwise(op, a, b);
    for (std::size_t i = 0; i < a.numel(); ++i)
      CHECK(r[i] == f(a[i], b[i]));
  };
  check(BinaryOp::mul, [](float x, float y) { return x * y; });
  check(BinaryOp::add, [](float x, float y) { return x + y; });
  check(BinaryOp::sub, [](float x, float y) { return x - y; });
  check(BinaryOp::div, [](float x, float y) { return x / y; });
  check(BinaryOp::max, [](float x, float y) { return x > y ? x : y; });
  check(BinaryOp::min, [](float x, float y) { return x < y ? x : y; });

  const IntTensor ia = oracle::random_codes({4, 4}, 6, rng), ib = oracle::random_codes({4, 4}, 6, rng);
  const IntTensor ir = elementwise(BinaryOp::mul, ia, ib);
  for (std::size_t i = 0; i < ia.numel(); ++i)
    CHECK(ir[i] == ia[i] * ib[i]);
}

TEST_CASE("elementwise shape mismatch names both shapes") {
  try {
    elementwise(BinaryOp::add, Tensor({2, 3}), Tensor({3, 2}));
    FAIL("expected ShapeError");
  } catch (const ShapeError &e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[3, 2]") != std::string::npos);
  }
}

TEST_CASE("per-channel broadcast") {
  std::mt19937_64 rng(5);
  const Tensor a = oracle::random_tensor({2, 3, 2, 2}, rng);
  const std::vector<float> v{1.0f, -2.0f, 0.5f};
  const Tensor r = elementwise_per_channel(BinaryOp::sub, a, v, 1);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < 4; ++p) {
        const std::size_t i = (n * 3 + c) * 4 + p;
        CHECK(r[i] == a[i] - v[c]);
      }
  CHECK_THROWS_AS(elementwise_per_channel(BinaryOp::sub, a, v, 0), ShapeError);
  CHECK_THROWS_AS(elementwise_per_channel(BinaryOp::sub, a, v, 4), ShapeError);
}

TEST_CASE("reductions") {
  const Tensor t({2, 2}, std::vector<float>{1, 2, 3, 4});
  CHECK(reduce(ReduceOp::sum, t, 0).values() == std::vector<float>{4, 6});
  CHECK(reduce(ReduceOp::sum, t, 1).values() == std::vector<float>{3, 7});
  CHECK(reduce(ReduceOp::mean, Tensor({3, 5}, 2.5f), 1).values() ==
        std::vector<float>{2.5f, 2.5f, 2.5f});
  CHECK_THROWS_AS(reduce(ReduceOp::sum, t, 2), ShapeError);

  std::mt19937_64 rng(9);
  const Tensor x = oracle::random_tensor({4, 7, 3}, rng);
  const Tensor m = reduce(ReduceOp::max, x, 1);
  REQUIRE(m.shape() == Shape{4, 3});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      float best = x[(i * 7) * 3 + k];
      for (std::size_t j = 1; j < 7; ++j)
        best = std::max(best, x[(i * 7 + j) * 3 + k]);
      CHECK(m[i * 3 + k] == best);
    }
  float best = x[0];
  for (float v : x.data())
    best = std::max(best, v);
  CHECK(max_all(x) == best);
}

TEST_CASE("real sums agree with an index-order scalar loop within 1 ulp") {
  std::mt19937_64 rng(21);
  const Tensor x = oracle::random_tensor({6, 50}, rng);
  const Tensor s = reduce(ReduceOp::sum, x, 1);
  for (std::size_t i = 0; i < 6; ++i) {
    float acc = 0.0f;
    for (std::size_t j = 0; j < 50; ++j)
      acc += x[i * 50 + j];
    CHECK(oracle::ulp_distance(s[i], acc) <= 1);
  }
  float acc = 0.0f;
  for (float v : x.data())
    acc += v;
  CHECK(oracle::ulp_distance(sum_all(x), acc) <= 1);
}

TEST_CASE("parallel_for covers every index exactly once") {
  for (unsigned threads : {1u, 3u}) {
    set_num_threads(threads);
    std::vector<std::atomic<int>> hits(1001);
    parallel_for(hits.size(), [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i)
        ++hits[i];
    });
    for (auto &h : hits)
      CHECK(h.load() == 1);
  }
  set_num_threads(1);
}
