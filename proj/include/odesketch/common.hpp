// Copyright 2026 The odesketch Authors.
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

#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace odesketch {

/// Invalid configuration (unknown operator, bad interval, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operation was called outside its contract.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed expression or registry text. `position` is 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : std::runtime_error(what), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// The ground-truth system could not produce a trajectory.
class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

/// Mixes a base seed with stream tags into a fresh 64-bit seed, so that
/// independent consumers (oracle noise, decoder sampling, fit restarts)
/// never share a random stream.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  return Rng(derive_seed(base, tags));
}

/// Shortest text that parses back to exactly `value`.
std::string format_double(double value);

/// Parses a full decimal/"nan"/"inf" token; throws ParseError otherwise.
double parse_double(std::string_view text);

std::string_view trim(std::string_view text);

}  // namespace odesketch
