/*
 * Copyright 2026 CIGN Contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cign/common.hpp"
#include "cign/rng.hpp"
#include "cign/tensor.hpp"

// Dataset ingestion: IDX containers (raw or gzip, detected by magic bytes),
// pixel scaling to [0,1], seeded epoch shuffling, and a procedural synthetic
// dataset for offline smoke runs.
namespace cign::data {

inline constexpr std::uint32_t kImageMagic = 0x00000803;
inline constexpr std::uint32_t kLabelMagic = 0x00000801;

// Images are kept as raw bytes; scaling by 1/255 happens when a minibatch
// tensor is assembled. Serializing back to IDX is therefore byte-exact.
struct LabeledDataset {
  int count = 0;
  int height = 28, width = 28;
  std::vector<std::uint8_t> pixels;  // count * height * width
  std::vector<int> labels;           // count, in [0, 10)
  std::string split;                 // "train" or "test"

  const std::uint8_t* image(int i) const {
    return pixels.data() + static_cast<std::size_t>(i) * height * width;
  }

  std::vector<int> class_counts(int classes = 10) const {
    std::vector<int> c(static_cast<std::size_t>(classes), 0);
    for (int y : labels) ++c[static_cast<std::size_t>(y)];
    return c;
  }
};

inline const std::array<const char*, 10>& fashion_class_names() {
  static const std::array<const char*, 10> names = {
      "T-shirt", "Trouser", "Pullover", "Dress", "Coat",
      "Sandal",  "Shirt",   "Sneaker",  "Bag",  "Ankle Boot"};
  return names;
}

namespace detail {

inline std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

inline void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline bool is_gzip(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

inline std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& bytes) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw DataError("gzip: inflateInit failed");
  std::vector<std::uint8_t> out;
  out.reserve(bytes.size() * 4);
  std::array<std::uint8_t, 1 << 16> buf;
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  int rc = Z_OK;
  do {
    zs.next_out = buf.data();
    zs.avail_out = static_cast<uInt>(buf.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw DataError("gzip: corrupt stream (zlib rc " + std::to_string(rc) + ")");
    }
    out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
  } while (rc != Z_STREAM_END);
  inflateEnd(&zs);
  return out;
}

}  // namespace detail

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

// Parses an IDX image/label pair. Big-endian headers are validated:
// images need magic 0x00000803 with dims (N, 28, 28), labels magic
// 0x00000801 with dim (N). Gzip inputs are decompressed first.
inline LabeledDataset parse_idx(std::vector<std::uint8_t> image_bytes,
                                std::vector<std::uint8_t> label_bytes,
                                const std::string& split = "train") {
  using namespace detail;
  if (is_gzip(image_bytes)) image_bytes = gunzip(image_bytes);
  if (is_gzip(label_bytes)) label_bytes = gunzip(label_bytes);

  if (image_bytes.size() < 4) throw DataError("idx: image header truncated");
  const std::uint32_t image_magic = read_be32(image_bytes.data());
  if (image_magic == kLabelMagic) throw DataError("idx: label file passed as images");
  if (image_magic != kImageMagic) {
    throw DataError("idx: bad image magic 0x" + std::to_string(image_magic));
  }
  if (image_bytes.size() < 16) throw DataError("idx: image header truncated");
  const std::uint32_t n = read_be32(image_bytes.data() + 4);
  const std::uint32_t rows = read_be32(image_bytes.data() + 8);
  const std::uint32_t cols = read_be32(image_bytes.data() + 12);
  if (rows != 28 || cols != 28) {
    throw DataError("idx: expected 28x28 images, got " + std::to_string(rows) + "x" +
                    std::to_string(cols));
  }
  const std::size_t expect_pixels = std::size_t(n) * rows * cols;
  if (image_bytes.size() != 16 + expect_pixels) {
    throw DataError("idx: image payload truncated (want " + std::to_string(expect_pixels) +
                    " pixels, have " + std::to_string(image_bytes.size() - 16) + ")");
  }

  if (label_bytes.size() < 4) throw DataError("idx: label header truncated");
  const std::uint32_t label_magic = read_be32(label_bytes.data());
  if (label_magic == kImageMagic) throw DataError("idx: image file passed as labels");
  if (label_magic != kLabelMagic) {
    throw DataError("idx: bad label magic 0x" + std::to_string(label_magic));
  }
  if (label_bytes.size() < 8) throw DataError("idx: label header truncated");
  const std::uint32_t ln = read_be32(label_bytes.data() + 4);
  if (ln != n) {
    throw DataError("idx: image count " + std::to_string(n) + " does not match label count " +
                    std::to_string(ln));
  }
  if (label_bytes.size() != 8 + ln) throw DataError("idx: label payload truncated");

  LabeledDataset d;
  d.count = static_cast<int>(n);
  d.split = split;
  d.pixels.assign(image_bytes.begin() + 16, image_bytes.end());
  d.labels.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const int y = label_bytes[8 + i];
    if (y < 0 || y > 9) throw DataError("idx: label out of range at index " + std::to_string(i));
    d.labels[i] = y;
  }
  return d;
}

// Inverse of parse_idx; reproduces the uncompressed input bytes exactly.
inline std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> serialize_idx(
    const LabeledDataset& d) {
  using namespace detail;
  std::vector<std::uint8_t> images;
  images.reserve(16 + d.pixels.size());
  write_be32(images, kImageMagic);
  write_be32(images, static_cast<std::uint32_t>(d.count));
  write_be32(images, static_cast<std::uint32_t>(d.height));
  write_be32(images, static_cast<std::uint32_t>(d.width));
  images.insert(images.end(), d.pixels.begin(), d.pixels.end());

  std::vector<std::uint8_t> labels;
  labels.reserve(8 + d.labels.size());
  write_be32(labels, kLabelMagic);
  write_be32(labels, static_cast<std::uint32_t>(d.count));
  for (int y : d.labels) labels.push_back(static_cast<std::uint8_t>(y));
  return {std::move(images), std::move(labels)};
}

inline LabeledDataset load_idx_files(const std::filesystem::path& images,
                                     const std::filesystem::path& labels,
                                     const std::string& split) {
  return parse_idx(read_file(images), read_file(labels), split);
}

// Locates the standard MNIST/Fashion file names (optionally .gz) under root.
inline LabeledDataset load_named(const std::filesystem::path& root, const std::string& split) {
  const std::string img_base = split == "train" ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte";
  const std::string lab_base = split == "train" ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte";
  for (const char* ext : {"", ".gz"}) {
    const auto img = root / (img_base + ext);
    const auto lab = root / (lab_base + ext);
    if (std::filesystem::exists(img) && std::filesystem::exists(lab)) {
      return load_idx_files(img, lab, split);
    }
  }
  throw DataError("no IDX files for split '" + split + "' under " + root.string());
}

// Minibatch of scaled images + labels.
template <typename T>
struct Batch {
  Tensor<T> images;  // [n, 28, 28, 1], values in [0, 1]
  std::vector<int> labels;
};

template <typename T>
Batch<T> make_batch(const LabeledDataset& d, std::span<const int> indices) {
  Batch<T> b;
  b.images = Tensor<T>({static_cast<int>(indices.size()), d.height, d.width, 1});
  b.labels.resize(indices.size());
  T* out = b.images.data();
  const std::size_t img_sz = static_cast<std::size_t>(d.height) * d.width;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::uint8_t* src = d.image(indices[i]);
    for (std::size_t p = 0; p < img_sz; ++p) {
      out[i * img_sz + p] = static_cast<T>(src[p]) / T(255);
    }
    b.labels[i] = d.labels[static_cast<std::size_t>(indices[i])];
  }
  return b;
}

inline int batch_count(int samples, int batch_size) {
  return (samples + batch_size - 1) / batch_size;
}

// Epoch-seeded full permutation, chunked into minibatches; the final short
// batch is kept.
class BatchPlan {
 public:
  BatchPlan(int samples, int batch_size, std::uint64_t seed, int epoch) : batch_size_(batch_size) {
    if (batch_size < 1) throw ConfigError("batches: batch_size must be at least 1");
    order_.resize(static_cast<std::size_t>(samples));
    std::iota(order_.begin(), order_.end(), 0);
    std::mt19937_64 gen(mix_seed(seed, static_cast<std::uint64_t>(epoch) + 0x517cc1b7ULL));
    std::shuffle(order_.begin(), order_.end(), gen);
  }

  int count() const { return batch_count(static_cast<int>(order_.size()), batch_size_); }

  std::span<const int> indices(int batch) const {
    const std::size_t begin = static_cast<std::size_t>(batch) * batch_size_;
    const std::size_t end = std::min(order_.size(), begin + static_cast<std::size_t>(batch_size_));
    return {order_.data() + begin, end - begin};
  }

  const std::vector<int>& order() const { return order_; }

 private:
  int batch_size_;
  std::vector<int> order_;
};

// Procedural 10-class dataset for offline smoke tests: each class gets a
// characteristic bright patch position plus stripe orientation, with
// per-sample jitter and noise. Learnable by a small CNN within an epoch or
// two, and position-separable for the routers.
inline LabeledDataset synthetic_dataset(int count, std::uint64_t seed,
                                        const std::string& split = "train") {
  LabeledDataset d;
  d.count = count;
  d.split = split;
  d.pixels.resize(static_cast<std::size_t>(count) * 28 * 28);
  d.labels.resize(static_cast<std::size_t>(count));
  Rng rng(mix_seed(seed, split == "train" ? 0xa11ceULL : 0xb0bULL));
  for (int i = 0; i < count; ++i) {
    const int y = static_cast<int>(rng.below(10));
    d.labels[static_cast<std::size_t>(i)] = y;
    std::uint8_t* img = d.pixels.data() + static_cast<std::size_t>(i) * 28 * 28;
    const int cx = 5 + (y % 5) * 4 + static_cast<int>(rng.below(3));
    const int cy = 7 + (y / 5) * 10 + static_cast<int>(rng.below(3));
    const int stripe = 2 + y % 3;
    for (int r = 0; r < 28; ++r) {
      for (int c = 0; c < 28; ++c) {
        double v = rng.uniform() * 30.0;  // background noise
        const int dx = c - cx, dy = r - cy;
        if (dx * dx + dy * dy <= 16) {
          v = 180.0 + rng.uniform() * 40.0;
          if (((y < 5 ? c : r) / stripe) % 2 == 0) v -= 90.0;
        }
        img[r * 28 + c] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
  }
  return d;
}

}  // namespace cign::data
