// Copyright 2026 The memaudit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>

namespace memaudit {

/// Counter-based generator (Philox4x32-10). Every draw is a pure function of
/// (seed, stream, index), so vectors can be filled in any order or in
/// parallel and still reproduce bit-for-bit.
class CounterRng {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : seed_(seed), stream_(stream) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  Block block(std::uint64_t counter) const noexcept;

  std::uint64_t bits(std::uint64_t index) const noexcept;
  /// Uniform in [0, 1).
  double uniform(std::uint64_t index) const noexcept;
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t index, std::uint64_t n) const noexcept;
  /// Standard normal (Box-Muller over one Philox block per index pair).
  double normal(std::uint64_t index) const noexcept;

  void fill_normal(std::span<double> out, std::uint64_t offset = 0) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

/// Mixes a base seed with any number of integer coordinates (SplitMix64
/// finalizer chain). Used for per-prompt, per-generation and per-epoch seeds.
std::uint64_t derive_seed(std::uint64_t base,
                          std::initializer_list<std::uint64_t> parts) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace memaudit
