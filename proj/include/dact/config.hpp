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

#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>

namespace dact {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key=value` text. Blank lines and lines starting with '#' are ignored.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text) {
    KeyValues kv;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    for (std::string line; std::getline(in, line);) {
      ++line_no;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
      }
      kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
  }

  static KeyValues load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  [[nodiscard]] bool contains(const std::string& key) const { return values_.contains(key); }

  [[nodiscard]] const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing key '" + key + "'");
    return it->second;
  }

  template <typename T>
  [[nodiscard]] T get_as(const std::string& key) const {
    return convert<T>(key, get(key));
  }

  /// Overwrites `target` when `key` is present.
  template <typename T>
  void read(const std::string& key, T& target) const {
    if (contains(key)) target = get_as<T>(key);
  }

  [[nodiscard]] std::string to_string() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  [[nodiscard]] const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  template <typename T>
  static T convert(const std::string& key, const std::string& text) {
    if constexpr (std::is_same_v<T, std::string>) {
      return text;
    } else if constexpr (std::is_floating_point_v<T>) {
      std::size_t used = 0;
      T v{};
      try {
        v = static_cast<T>(std::stod(text, &used));
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != text.size() || text.empty()) throw ConfigError("key '" + key + "': not a number: " + text);
      return v;
    } else {
      T v{};
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw ConfigError("key '" + key + "': not an integer: " + text);
      }
      return v;
    }
  }

  std::map<std::string, std::string> values_;
};

/// Architecture hyperparameters of the encoder classifier.
struct ModelConfig {
  std::size_t num_blocks = 6;
  std::size_t hidden_dim = 32;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 64;
  std::size_t vocab_size = 64;
  std::size_t max_seq_len = 32;
  std::size_t num_classes = 2;

  void validate() const {
    if (num_blocks < 1) throw ConfigError("num_blocks must be >= 1");
    if (num_heads < 1 || hidden_dim % num_heads != 0) {
      throw ConfigError("hidden_dim " + std::to_string(hidden_dim) + " not divisible by num_heads " +
                        std::to_string(num_heads));
    }
    if (hidden_dim < 1 || ffn_dim < 1) throw ConfigError("hidden_dim and ffn_dim must be positive");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (vocab_size < 4) throw ConfigError("vocab_size must cover the 4 reserved tokens");
    if (max_seq_len < 1) throw ConfigError("max_seq_len must be >= 1");
  }

  [[nodiscard]] KeyValues to_key_values() const {
    KeyValues kv;
    kv.set("num_blocks", std::to_string(num_blocks));
    kv.set("hidden_dim", std::to_string(hidden_dim));
    kv.set("num_heads", std::to_string(num_heads));
    kv.set("ffn_dim", std::to_string(ffn_dim));
    kv.set("vocab_size", std::to_string(vocab_size));
    kv.set("max_seq_len", std::to_string(max_seq_len));
    kv.set("num_classes", std::to_string(num_classes));
    return kv;
  }

  /// Fields absent from `kv` keep their current values.
  void read(const KeyValues& kv) {
    kv.read("num_blocks", num_blocks);
    kv.read("hidden_dim", hidden_dim);
    kv.read("num_heads", num_heads);
    kv.read("ffn_dim", ffn_dim);
    kv.read("vocab_size", vocab_size);
    kv.read("max_seq_len", max_seq_len);
    kv.read("num_classes", num_classes);
  }

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace dact
