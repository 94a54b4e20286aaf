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

#include <cstdint>
#include <span>
#include <string_view>

namespace memaudit {

// FNV-1a, 64-bit. Used to tie weight files to the vocabulary and schedule
// they were trained with; not a cryptographic digest.
class Fnv1a {
 public:
  Fnv1a& update(std::span<const unsigned char> bytes) noexcept;
  Fnv1a& update(std::string_view text) noexcept;
  Fnv1a& update_u64(std::uint64_t value) noexcept;
  Fnv1a& update_f64(double value) noexcept;

  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ull;
};

std::uint64_t fnv1a(std::string_view text) noexcept;

}  // namespace memaudit
