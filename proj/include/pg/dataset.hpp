// SPDX-License-Identifier: Apache-2.0
/**
 * @file  dataset.hpp
 * @brief IDX (MNIST-format) image/label loading.
 */
#ifndef PG_DATASET_HPP
#define PG_DATASET_HPP

#include "pg/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pg {

class IdxError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  Tensor images;           // (N, C, H, W), pixels scaled to [0, 1]
  std::vector<int> labels; // N entries

  std::size_t size() const { return labels.size(); }
  /// Copies examples [begin, begin + count) in the given order.
  Dataset subset(std::span<const std::size_t> order, std::size_t begin,
                 std::size_t count) const;
  Dataset head(std::size_t count) const;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxImages {
  std::size_t count = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;
};

IdxImages read_idx_images(const std::filesystem::path &path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path &path);

void write_idx_images(const std::filesystem::path &path, const IdxImages &img);
void write_idx_labels(const std::filesystem::path &path,
                      const std::vector<std::uint8_t> &labels);

/// Loads `<dir>/<prefix>-images-idx3-ubyte` and `<dir>/<prefix>-labels-idx1-ubyte`
/// (prefix "train" or "t10k"). Pixels map 0 -> 0.0 and 255 -> 1.0.
Dataset load_idx_dataset(const std::filesystem::path &dir,
                         const std::string &prefix);

/// Pairs explicit image and label files.
Dataset load_idx_files(const std::filesystem::path &images,
                       const std::filesystem::path &labels);

} // namespace pg

#endif // PG_DATASET_HPP
