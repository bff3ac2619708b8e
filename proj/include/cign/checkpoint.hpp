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

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "cign/common.hpp"
#include "cign/network.hpp"
#include "cign/serialize.hpp"

// Versioned named-parameter archive with a tree-topology JSON header.
// Layout (little-endian):
//   magic "CIGNCKP\0" | u32 version | u64 header_len | header json |
//   u32 param_count | per parameter:
//     u16 name_len | name | u8 tag | u8 decay | u8 rank | i32 dims[rank] |
//     f64 values[numel]
namespace cign::ckpt {

inline constexpr char kMagic[8] = {'C', 'I', 'G', 'N', 'C', 'K', 'P', '\0'};
inline constexpr std::uint32_t kVersion = 1;

namespace detail {

template <typename V>
void write_pod(std::ofstream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::ifstream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw DataError("checkpoint: truncated file");
  return v;
}

}  // namespace detail

struct Meta {
  std::uint64_t seed = 0;
  long iteration = 0;
  int epoch = 0;
};

template <typename T>
void save(const std::filesystem::path& path, const CignNetwork<T>& net, const Meta& meta) {
  json header;
  header["tree"] = tree_to_json(net.spec());
  header["seed"] = meta.seed;
  header["iteration"] = meta.iteration;
  header["epoch"] = meta.epoch;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint: cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  detail::write_pod(out, kVersion);
  detail::write_pod(out, static_cast<std::uint64_t>(header_str.size()));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));

  const auto& params = net.params();
  detail::write_pod(out, static_cast<std::uint32_t>(params.count()));
  for (std::size_t i = 0; i < params.count(); ++i) {
    const auto& p = params.at(i);
    detail::write_pod(out, static_cast<std::uint16_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::write_pod(out, static_cast<std::uint8_t>(p.tag == ParamTag::weights_h ? 1 : 0));
    detail::write_pod(out, static_cast<std::uint8_t>(p.decay ? 1 : 0));
    detail::write_pod(out, static_cast<std::uint8_t>(p.value.rank()));
    for (int d = 0; d < p.value.rank(); ++d) detail::write_pod(out, static_cast<std::int32_t>(p.value.dim(d)));
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      detail::write_pod(out, static_cast<double>(p.value[k]));
    }
  }
  if (!out) throw DataError("checkpoint: write failed for " + path.string());
}

template <typename T>
struct Loaded {
  CignNetwork<T> network;
  Meta meta;
};

template <typename T>
Loaded<T> load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("checkpoint: bad magic in " + path.string());
  }
  const auto version = detail::read_pod<std::uint32_t>(in);
  if (version != kVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto header_len = detail::read_pod<std::uint64_t>(in);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError("checkpoint: truncated header");
  json header = json::parse(header_str, nullptr, false);
  if (header.is_discarded()) throw DataError("checkpoint: corrupt header json");

  Loaded<T> result{CignNetwork<T>(tree_from_json(header.at("tree"))), Meta{}};
  result.meta.seed = header.value("seed", std::uint64_t(0));
  result.meta.iteration = header.value("iteration", 0L);
  result.meta.epoch = header.value("epoch", 0);

  const auto count = detail::read_pod<std::uint32_t>(in);
  auto& params = result.network.params();
  if (count != params.count()) {
    throw DataError("checkpoint: parameter count mismatch vs topology");
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = detail::read_pod<std::uint16_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw DataError("checkpoint: truncated parameter name");
    auto* p = params.find(name);
    if (p == nullptr) throw DataError("checkpoint: unknown parameter '" + name + "'");
    const auto tag = detail::read_pod<std::uint8_t>(in);
    const auto decay = detail::read_pod<std::uint8_t>(in);
    if ((tag == 1) != (p->tag == ParamTag::weights_h) || (decay == 1) != p->decay) {
      throw DataError("checkpoint: parameter attributes mismatch for '" + name + "'");
    }
    const auto rank = detail::read_pod<std::uint8_t>(in);
    if (rank != p->value.rank()) throw DataError("checkpoint: rank mismatch for '" + name + "'");
    for (int d = 0; d < rank; ++d) {
      const auto dim = detail::read_pod<std::int32_t>(in);
      if (dim != p->value.dim(d)) throw DataError("checkpoint: shape mismatch for '" + name + "'");
    }
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      p->value[k] = static_cast<T>(detail::read_pod<double>(in));
    }
  }
  return result;
}

}  // namespace cign::ckpt
