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

#include "memaudit/hash.hpp"

#include <bit>

namespace memaudit {
namespace {
constexpr std::uint64_t kPrime = 0x100000001b3ull;
}  // namespace

Fnv1a& Fnv1a::update(std::span<const unsigned char> bytes) noexcept {
  for (unsigned char b : bytes) {
    state_ ^= b;
    state_ *= kPrime;
  }
  return *this;
}

Fnv1a& Fnv1a::update(std::string_view text) noexcept {
  for (char c : text) {
    state_ ^= static_cast<unsigned char>(c);
    state_ *= kPrime;
  }
  return *this;
}

Fnv1a& Fnv1a::update_u64(std::uint64_t value) noexcept {
  // Little-endian byte order regardless of host.
  for (int i = 0; i < 8; ++i) {
    state_ ^= static_cast<unsigned char>(value >> (8 * i));
    state_ *= kPrime;
  }
  return *this;
}

Fnv1a& Fnv1a::update_f64(double value) noexcept {
  return update_u64(std::bit_cast<std::uint64_t>(value));
}

std::uint64_t fnv1a(std::string_view text) noexcept {
  return Fnv1a().update(text).digest();
}

}  // namespace memaudit
