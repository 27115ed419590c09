// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"

#include "pg/quantizer.hpp"

#include <doctest.h>

using namespace pg;

TEST_CASE("quant params") {
  const QuantParams p(4, 1.5f);
  CHECK(p.max_code() == 15);
  CHECK(p.scale() == doctest::Approx(0.1));
  CHECK_THROWS_AS(QuantParams(1, 1.0f), std::invalid_argument);
  CHECK_THROWS_AS(QuantParams(4, 0.0f), std::invalid_argument);
  CHECK_THROWS_AS(QuantParams(4, -1.0f), std::invalid_argument);
}

TEST_CASE("pact clip forward") {
  const Tensor x({3}, std::vector<float>{-1.0f, 0.5f, 3.0f});
  CHECK(pact_clip_forward(x, 2.0f).values() == std::vector<float>{0.0f, 0.5f, 2.0f});
  const Tensor inside({2}, std::vector<float>{0.25f, 1.75f});
  CHECK(pact_clip_forward(inside, 2.0f) == inside);
  CHECK_THROWS_AS(pact_clip_forward(x, 0.0f), std::invalid_argument);

  std::mt19937_64 rng(1);
  const Tensor r = oracle::random_tensor({5, 9}, rng, -3.0f, 3.0f);
  const Tensor y = pact_clip_forward(r, 1.3f);
  for (std::size_t i = 0; i < r.numel(); ++i) {
    float want = r[i];
    if (want < 0.0f)
      want = 0.0f;
    if (want > 1.3f)
      want = 1.3f;
    CHECK(y[i] == want);
    CHECK(y[i] >= 0.0f);
    CHECK(y[i] <= 1.3f);
  }
}

TEST_CASE("pact clip backward") {
  auto g = pact_clip_backward(Tensor({1}, 3.0f), 2.0f, Tensor({1}, 1.0f));
  CHECK(g.dx[0] == 0.0f);
  CHECK(g.dclip == 1.0f);
  g = pact_clip_backward(Tensor({1}, 1.0f), 2.0f, Tensor({1}, 1.0f));
  CHECK(g.dx[0] == 1.0f);
  CHECK(g.dclip == 0.0f);
  CHECK_THROWS_AS(pact_clip_backward(Tensor({2}), 1.0f, Tensor({3})), ShapeError);
}

TEST_CASE("dclip matches a central difference away from the kinks") {
  std::mt19937_64 rng(7);
  Tensor x = oracle::random_tensor({64}, rng, -2.0f, 4.0f);
  const float clip = 1.7f;
  const double h = 1e-3;
  for (float &v : x.data()) // keep every element away from 0 and clip
    if (std::abs(v - clip) < 0.01f || std::abs(v) < 0.01f)
      v += 0.05f;
  const Tensor up = oracle::random_tensor({64}, rng);
  const auto objective = [&](double c) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const double y = std::min(std::max(static_cast<double>(x[i]), 0.0), c);
      s += up[i] * y;
    }
    return s;
  };
  const double fd = (objective(clip + h) - objective(clip - h)) / (2 * h);
  const auto g = pact_clip_backward(x, clip, up);
  CHECK(oracle::rel_err(g.dclip, fd) <= 1e-3);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    Tensor xp = x, xm = x;
    xp[i] += static_cast<float>(h);
    xm[i] -= static_cast<float>(h);
    const auto obj = [&](const Tensor &t) {
      double s = 0.0;
      for (std::size_t k = 0; k < t.numel(); ++k)
        s += up[k] * std::min(std::max(static_cast<double>(t[k]), 0.0), static_cast<double>(clip));
      return s;
    };
    const double fdx = (obj(xp) - obj(xm)) / (static_cast<double>(xp[i]) - xm[i]);
    CHECK(oracle::rel_err(g.dx[i], fdx) <= 1e-3);
  }
}

TEST_CASE("quantize") {
  const QuantParams p(4, 1.5f);
  CHECK(quantize(Tensor({1}, 0.0f), p).codes[0] == 0);
  CHECK(quantize(Tensor({1}, 1.5f), p).codes[0] == 15);
  CHECK(quantize(Tensor({1}, 0.5f), p).codes[0] == 5);
  for (int bits = 2; bits <= 8; ++bits) {
    const QuantParams q(bits, 2.0f);
    CHECK(quantize(Tensor({1}, 2.0f), q).codes[0] == q.max_code());
  }
}

TEST_CASE("quantize is monotone and idempotent on grid points") {
  const QuantParams p(5, 1.3f);
  Tensor ramp({2001});
  for (std::size_t i = 0; i < ramp.numel(); ++i)
    ramp[i] = 1.3f * static_cast<float>(i) / 2000.0f;
  const auto q = quantize(ramp, p);
  for (std::size_t i = 1; i < ramp.numel(); ++i)
    CHECK(q.codes[i] >= q.codes[i - 1]);
  const Tensor grid = dequantize(q);
  CHECK(quantize(grid, p).codes == q.codes);
}

TEST_CASE("ste passes in-range gradients only") {
  const QuantParams p(4, 2.0f);
  const Tensor up({2}, std::vector<float>{1.0f, 2.0f});
  CHECK(quantize_ste_backward(Tensor({2}, std::vector<float>{0.5f, 1.5f}), p, up).values() ==
        std::vector<float>{1.0f, 2.0f});
  CHECK(quantize_ste_backward(Tensor({2}, std::vector<float>{3.0f, -1.0f}), p, up).values() ==
        std::vector<float>{0.0f, 0.0f});
}

TEST_CASE("clip then quantize gradient matches the clip's finite difference") {
  std::mt19937_64 rng(13);
  const float clip = 1.1f;
  const QuantParams p(4, clip);
  Tensor x = oracle::random_tensor({40}, rng, -1.0f, 2.0f);
  for (float &v : x.data())
    if (std::abs(v - clip) < 0.01f || std::abs(v) < 0.01f)
      v += 0.05f;
  const Tensor up = oracle::random_tensor({40}, rng);
  const Tensor clipped = pact_clip_forward(x, clip);
  const Tensor d = quantize_ste_backward(clipped, p, up);
  const auto g = pact_clip_backward(x, clip, d);
  const double h = 1e-3;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const auto y = [&](double v) { return std::min(std::max(v, 0.0), static_cast<double>(clip)); };
    const double fd = up[i] * (y(x[i] + h) - y(x[i] - h)) / (2 * h);
    CHECK(oracle::rel_err(g.dx[i], fd) <= 1e-3);
  }
  double fdc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const auto y = [&](double c) { return std::min(std::max(static_cast<double>(x[i]), 0.0), c); };
    fdc += up[i] * (y(clip + h) - y(clip - h)) / (2 * h);
  }
  CHECK(oracle::rel_err(g.dclip, fdc) <= 1e-3);
}

TEST_CASE("split bits hand example") {
  const QuantParams p(4, 1.5f);
  const QuantizedActivation q{IntTensor({2}, std::vector<std::int32_t>{13, 0}), p};
  const auto s = split_bits(q, 2);
  CHECK(s.msb[0] == 3);
  CHECK(s.lsb[0] == 1);
  CHECK(s.msb[1] == 0);
  CHECK(s.lsb[1] == 0);
  CHECK(s.lsb_bits == 2);
  CHECK(merge_bits(s) == q.codes);
  CHECK_THROWS_AS(split_bits(q, 0), std::invalid_argument);
  CHECK_THROWS_AS(split_bits(q, 4), std::invalid_argument);
}

TEST_CASE("split bits exhaustive reconstruction for B <= 8") {
  for (int bits = 2; bits <= 8; ++bits)
    for (int hb = 1; hb < bits; ++hb) {
      const std::size_t n = std::size_t{1} << bits;
      IntTensor codes({n});
      for (std::size_t c = 0; c < n; ++c)
        codes[c] = static_cast<std::int32_t>(c);
      const auto s = split_bits({codes, QuantParams(bits, 1.0f)}, hb);
      const int lb = bits - hb;
      for (std::size_t c = 0; c < n; ++c) {
        CHECK(s.msb[c] >= 0);
        CHECK(s.msb[c] < (1 << hb));
        CHECK(s.lsb[c] >= 0);
        CHECK(s.lsb[c] < (1 << lb));
        CHECK(s.msb[c] * (1 << lb) + s.lsb[c] == codes[c]);
      }
    }
}

TEST_CASE("dequantized planes") {
  const QuantParams p(4, 1.5f); // scale 0.1
  const QuantizedActivation q{IntTensor({1}, std::vector<std::int32_t>{13}), p};
  const auto s = split_bits(q, 2);
  CHECK(dequantize_msb(s)[0] == doctest::Approx(1.2));
  CHECK(dequantize_lsb(s)[0] == doctest::Approx(0.1));
  CHECK(dequantize_msb(s)[0] + dequantize_lsb(s)[0] == doctest::Approx(1.3));

  const QuantizedActivation zero{IntTensor({3}), p};
  const auto z = split_bits(zero, 1);
  CHECK(dequantize_msb(z).values() == std::vector<float>(3, 0.0f));
  CHECK(dequantize_lsb(z).values() == std::vector<float>(3, 0.0f));

  for (int bits = 2; bits <= 8; ++bits)
    for (int hb = 1; hb < bits; ++hb) {
      const std::size_t n = std::size_t{1} << bits;
      IntTensor codes({n});
      for (std::size_t c = 0; c < n; ++c)
        codes[c] = static_cast<std::int32_t>(c);
      const QuantizedActivation qa{codes, QuantParams(bits, 0.7f)};
      const auto sa = split_bits(qa, hb);
      const Tensor full = dequantize(qa), hi = dequantize_msb(sa), lo = dequantize_lsb(sa);
      for (std::size_t c = 0; c < n; ++c) {
        CHECK(oracle::ulp_distance(hi[c] + lo[c], full[c]) <= 1);
        // exact in double
        CHECK(static_cast<double>(sa.msb[c] << sa.lsb_bits) * qa.params.scale() +
                  static_cast<double>(sa.lsb[c]) * qa.params.scale() ==
              static_cast<double>(c) * qa.params.scale());
      }
    }
}
