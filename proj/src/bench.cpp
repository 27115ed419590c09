// SPDX-License-Identifier: Apache-2.0
#include "pg/bench.hpp"

#include "pg/kernels.hpp"
#include "pg/parallel.hpp"
#include "pg/report.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>
#include <stdexcept>

namespace pg {

std::vector<ProductDims> resnet20_layer_dims() {
  return {{16, 144, 1024}, {32, 288, 256}, {64, 576, 64}};
}

std::string to_string(KernelKind k) {
  return k == KernelKind::gemm ? "gemm" : "sddmm";
}

namespace {

using Clock = std::chrono::steady_clock;

template <typename F> double median_ms(F &&run, int repeats) {
  run(); // warm-up
  // Batch short kernels so each sample spans at least ~2 ms.
  const auto t0 = Clock::now();
  run();
  const double once =
      std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  const int iters = std::clamp(static_cast<int>(2.0 / std::max(once, 1e-6)), 1, 10000);

  std::vector<double> samples;
  for (int r = 0; r < repeats; ++r) {
    const auto start = Clock::now();
    for (int i = 0; i < iters; ++i)
      run();
    samples.push_back(
        std::chrono::duration<double, std::milli>(Clock::now() - start).count() /
        iters);
  }
  std::sort(samples.begin(), samples.end());
  return samples[samples.size() / 2];
}

std::vector<std::int32_t> random_mask(std::size_t size, double sparsity,
                                      std::mt19937_64 &rng) {
  const auto ones = static_cast<std::size_t>(
      std::llround((1.0 - sparsity) * static_cast<double>(size)));
  std::vector<std::int32_t> mask(size, 0);
  std::fill(mask.begin(), mask.begin() + ones, 1);
  std::shuffle(mask.begin(), mask.end(), rng);
  return mask;
}

} // namespace

std::vector<BenchResult> bench_kernels(const BenchOptions &opts) {
  if (opts.repeats < 3)
    throw std::invalid_argument("bench_kernels needs at least 3 repeats");
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<BenchResult> rows;

  for (const ProductDims &d : opts.dims) {
    std::vector<float> a(d.m * d.k), b(d.k * d.n), bt(d.n * d.k);
    for (auto &x : a)
      x = normal(rng);
    for (auto &x : b)
      x = normal(rng);
    for (std::size_t i = 0; i < d.k; ++i)
      for (std::size_t j = 0; j < d.n; ++j)
        bt[j * d.k + i] = b[i * d.n + j];
    std::vector<double> out(d.m * d.n);

    const double gemm_ms = median_ms(
        [&] { kernels::gemm(a.data(), b.data(), d.m, d.k, d.n, out.data()); },
        opts.repeats);
    rows.push_back({KernelKind::gemm, d, 0.0, num_threads(), gemm_ms,
                    d.m * d.n * d.k, 1.0});

    for (double sp : opts.sparsities) {
      const auto mask = random_mask(d.m * d.n, sp, rng);
      const MaskCoords coords = MaskCoords::from_mask(mask, d.m, d.n);
      const double ms = median_ms(
          [&] { kernels::sddmm(a.data(), bt.data(), d.k, coords, out.data()); },
          opts.repeats);
      rows.push_back({KernelKind::sddmm, d, sp, num_threads(), ms,
                      coords.nnz() * d.k, gemm_ms / std::max(ms, 1e-9)});
    }
  }
  return rows;
}

void write_bench_csv(std::ostream &os, const std::vector<BenchResult> &rows) {
  os << kBenchCsvHeader << '\n';
  for (const BenchResult &r : rows)
    os << to_string(r.kernel) << ',' << r.dims.m << ',' << r.dims.k << ','
       << r.dims.n << ',' << format_real(r.sparsity) << ',' << r.threads << ','
       << format_real(r.time_ms) << ',' << format_real(r.speedup) << '\n';
}

} // namespace pg
