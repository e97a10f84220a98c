// Copyright 2026 The dact-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/**
 * @file checkpoint.hpp
 * @brief Versioned binary parameter container.
 *
 * Layout, all integers little-endian:
 *
 *     "DACTCKPT"                 8 bytes
 *     version                    u32 (= 1)
 *     header length, header      u32, UTF-8 key=value lines (ModelConfig + metadata)
 *     tensor count               u32
 *     per tensor:
 *       name length, name        u32, bytes
 *       rank, dims               u32, rank x u64
 *       values                   prod(dims) x IEEE-754 binary64
 *
 * Tensors appear in Model::parameters() order.
 */

#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "dact/config.hpp"
#include "dact/model.hpp"

namespace dact {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[8] = {'D', 'A', 'C', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename U>
void put_le(std::ostream& out, U value) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw CheckpointError("checkpoint truncated");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, std::size_t limit) {
  const auto n = get_le<std::uint32_t>(in);
  if (n > limit) throw CheckpointError("checkpoint string length " + std::to_string(n) + " is implausible");
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw CheckpointError("checkpoint truncated");
  return s;
}

}  // namespace detail

struct Checkpoint {
  Model model;
  KeyValues metadata;  // header entries, including the ModelConfig keys
};

/// `metadata` keys must not collide with ModelConfig keys.
inline void write_checkpoint(std::ostream& out, const Model& model, const KeyValues& metadata = {}) {
  KeyValues header = model.config().to_key_values();
  for (const auto& [k, v] : metadata.entries()) {
    if (header.contains(k) && header.get(k) != v) {
      throw CheckpointError("metadata key '" + k + "' conflicts with the model configuration");
    }
    header.set(k, v);
  }
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_string(out, header.to_string());
  const auto params = model.parameters();
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    detail::put_string(out, name);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) detail::put_le<std::uint64_t>(out, d);
    for (double v : tensor.data()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw CheckpointError("failed writing checkpoint");
}

inline Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kCheckpointMagic)) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const auto version = detail::get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.metadata = KeyValues::parse(detail::get_string(in, 1 << 20));
  ModelConfig cfg;
  cfg.read(ckpt.metadata);
  cfg.validate();
  ckpt.model = Model::init(cfg, 0);
  auto params = ckpt.model.parameters();
  const auto count = detail::get_le<std::uint32_t>(in);
  if (count != params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                          std::to_string(params.size()));
  }
  for (auto& [name, tensor] : params) {
    const std::string stored = detail::get_string(in, 4096);
    if (stored != name) throw CheckpointError("expected tensor '" + name + "', found '" + stored + "'");
    const auto rank = detail::get_le<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = detail::get_le<std::uint64_t>(in);
    if (shape != tensor.shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + shape_string(shape) + ", expected " +
                            shape_string(tensor.shape()));
    }
    for (double& v : tensor.mutable_data()) v = std::bit_cast<double>(detail::get_le<std::uint64_t>(in));
  }
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const Model& model, const KeyValues& metadata = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  write_checkpoint(out, model, metadata);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  try {
    return read_checkpoint(in);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path + ": " + e.what());
  }
}

/// Serialized bytes, for bitwise comparisons.
inline std::string checkpoint_bytes(const Model& model, const KeyValues& metadata = {}) {
  std::ostringstream out(std::ios::binary);
  write_checkpoint(out, model, metadata);
  return out.str();
}

}  // namespace dact
