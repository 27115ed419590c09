// SPDX-License-Identifier: Apache-2.0
/**
 * @file  bench.hpp
 * @brief Wall-clock comparison of the dense GEMM baseline against SDDMM at a
 *        grid of output sparsities.
 */
#ifndef PG_BENCH_HPP
#define PG_BENCH_HPP

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace pg {

enum class KernelKind { gemm, sddmm };

struct ProductDims {
  std::size_t m, k, n;
  bool operator==(const ProductDims &) const = default;
};

struct BenchResult {
  KernelKind kernel;
  ProductDims dims;
  double sparsity;
  unsigned threads;
  double time_ms;     // median over repeats
  std::uint64_t mac_count;
  double speedup;     // gemm time / this kernel's time, same dims
};

/// Product shapes of the 3x3 convolutions of a ResNet-20 on 32x32 inputs,
/// one per stage: (Cout, Cin*9, OH*OW).
std::vector<ProductDims> resnet20_layer_dims();

struct BenchOptions {
  std::vector<ProductDims> dims = resnet20_layer_dims();
  std::vector<double> sparsities{0.0, 0.5, 0.76, 0.9, 0.99, 1.0};
  int repeats = 5;
  std::uint64_t seed = 1;
};

/// One gemm row per dims (sparsity 0, speedup 1) followed by one sddmm row
/// per sparsity. Each timing discards a warm-up call and reports the median.
/// Throws std::invalid_argument if repeats < 3.
std::vector<BenchResult> bench_kernels(const BenchOptions &opts);

inline constexpr const char *kBenchCsvHeader =
    "kernel,M,K,N,sparsity,threads,time_ms,speedup";

void write_bench_csv(std::ostream &os, const std::vector<BenchResult> &rows);

std::string to_string(KernelKind k);

} // namespace pg

#endif // PG_BENCH_HPP
