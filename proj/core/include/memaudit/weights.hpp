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
#include <filesystem>
#include <optional>
#include <string>

#include "memaudit/toy_denoiser.hpp"

namespace memaudit::toylab {

// Weight file layout (all integers little-endian):
//   8 bytes   magic "MEMAUDW1"
//   u32       format version (1)
//   u32       header length in bytes
//   header    JSON: model dims, prediction target, schedule, vocab_hash,
//             schedule_hash, array table
//   payload   float32 arrays in header order, each row-major
inline constexpr char kWeightMagic[8] = {'M', 'E', 'M', 'A', 'U', 'D', 'W', '1'};
inline constexpr std::uint32_t kWeightVersion = 1;

struct WeightFileInfo {
  ToyDenoiserConfig config;
  std::uint64_t vocab_hash = 0;
  std::uint64_t schedule_hash = 0;
};

void save_weights(const ToyDenoiser& model, std::uint64_t vocab_hash,
                  std::uint64_t schedule_hash, const std::filesystem::path& path);

/// Throws MismatchError("model/vocab mismatch") or ("model/schedule
/// mismatch") when an expected hash is given and differs; IoError when the
/// file is truncated or malformed.
ToyDenoiser load_weights(const std::filesystem::path& path,
                         std::optional<std::uint64_t> expected_vocab_hash,
                         std::optional<std::uint64_t> expected_schedule_hash,
                         WeightFileInfo* info = nullptr);

std::string to_hex(std::uint64_t value);

}  // namespace memaudit::toylab
