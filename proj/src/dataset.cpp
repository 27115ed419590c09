// SPDX-License-Identifier: Apache-2.0
#include "pg/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>

namespace pg {

namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> slurp(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IdxError("cannot open IDX file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t> &b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

void put_be32(std::ofstream &out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

void check_header(const std::vector<std::uint8_t> &b, std::size_t header,
                  std::uint32_t magic, const fs::path &path) {
  if (b.size() < header)
    throw IdxError(path.string() + ": truncated header, expected " +
                   std::to_string(header) + " bytes, got " +
                   std::to_string(b.size()));
  const std::uint32_t got = be32(b, 0);
  if (got != magic) {
    char msg[64];
    std::snprintf(msg, sizeof msg, "bad magic 0x%08x (expected 0x%08x)", got,
                  magic);
    throw IdxError(path.string() + ": " + msg);
  }
}

void check_size(const std::vector<std::uint8_t> &b, std::size_t expected,
                const fs::path &path) {
  if (b.size() != expected)
    throw IdxError(path.string() + ": expected " + std::to_string(expected) +
                   " bytes from header, got " + std::to_string(b.size()) +
                   (b.size() < expected ? " (truncated)" : " (trailing data)"));
}

} // namespace

IdxImages read_idx_images(const fs::path &path) {
  const auto b = slurp(path);
  check_header(b, 16, kIdxImageMagic, path);
  IdxImages img{be32(b, 4), be32(b, 8), be32(b, 12), {}};
  check_size(b, 16 + img.count * img.rows * img.cols, path);
  img.pixels.assign(b.begin() + 16, b.end());
  return img;
}

std::vector<std::uint8_t> read_idx_labels(const fs::path &path) {
  const auto b = slurp(path);
  check_header(b, 8, kIdxLabelMagic, path);
  const std::size_t count = be32(b, 4);
  check_size(b, 8 + count, path);
  return {b.begin() + 8, b.end()};
}

void write_idx_images(const fs::path &path, const IdxImages &img) {
  std::ofstream out(path, std::ios::binary);
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(img.count));
  put_be32(out, static_cast<std::uint32_t>(img.rows));
  put_be32(out, static_cast<std::uint32_t>(img.cols));
  out.write(reinterpret_cast<const char *>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out)
    throw IdxError("failed writing " + path.string());
}

void write_idx_labels(const fs::path &path,
                      const std::vector<std::uint8_t> &labels) {
  std::ofstream out(path, std::ios::binary);
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char *>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
  if (!out)
    throw IdxError("failed writing " + path.string());
}

Dataset load_idx_files(const fs::path &images, const fs::path &labels) {
  const IdxImages img = read_idx_images(images);
  const auto lab = read_idx_labels(labels);
  if (lab.size() != img.count)
    throw IdxError("image/label count mismatch: " + images.string() + " has " +
                   std::to_string(img.count) + " images, " + labels.string() +
                   " has " + std::to_string(lab.size()) + " labels");
  if (img.count == 0)
    throw IdxError(images.string() + " contains no examples");
  Dataset d{Tensor({img.count, 1, img.rows, img.cols}), {}};
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    d.images[i] = static_cast<float>(img.pixels[i]) / 255.0f;
  d.labels.assign(lab.begin(), lab.end());
  return d;
}

Dataset load_idx_dataset(const fs::path &dir, const std::string &prefix) {
  return load_idx_files(dir / (prefix + "-images-idx3-ubyte"),
                        dir / (prefix + "-labels-idx1-ubyte"));
}

Dataset Dataset::subset(std::span<const std::size_t> order, std::size_t begin,
                        std::size_t count) const {
  Shape shape = images.shape();
  const std::size_t per = images.numel() / shape[0];
  shape[0] = count;
  Dataset d{Tensor(shape), std::vector<int>(count)};
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t src = order[begin + i];
    std::copy_n(images.data().begin() + src * per, per,
                d.images.data().begin() + i * per);
    d.labels[i] = labels[src];
  }
  return d;
}

Dataset Dataset::head(std::size_t count) const {
  count = std::min(count, size());
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  return subset(order, 0, count);
}

} // namespace pg
