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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "memaudit/corpus.hpp"
#include "memaudit/detector.hpp"
#include "memaudit/diffusion.hpp"
#include "memaudit/text.hpp"

namespace memaudit::attribution {

enum class Method { kLeaveOneOut };

struct TokenScore {
  std::string token;
  std::size_t index = 0;  // position in the tokenized prompt
  double score = 0.0;
  Method method = Method::kLeaveOneOut;
};

struct AttributionReport {
  std::int64_t prompt_id = 0;
  double d_mem = 0.0;
  std::size_t token_count = 0;
  /// Non-increasing by score; ties keep prompt order.
  std::vector<TokenScore> token_scores;
  std::size_t top_k = 25;

  /// The first min(top_k, token_count) entries.
  std::span<const TokenScore> top() const;
};

/// score(i) = d_mem(p) - d_mem(p without token i). Every ablation reuses the
/// prompt's generation seeds.
AttributionReport token_attribution(const corpus::PromptRecord& prompt,
                                    const diffusion::NoisePredictor& predictor,
                                    const text::PromptEncoder& encoder,
                                    const diffusion::NoiseSchedule& sched,
                                    const detector::DetectionConfig& cfg,
                                    std::size_t top_k = 25);

/// One JSON object per report and line.
void export_reports(std::span<const AttributionReport> reports,
                    const std::filesystem::path& path);

/// Rows (prompt_id, rank, token, index, score) for the top-k entries.
void export_top_k_csv(std::span<const AttributionReport> reports,
                      const std::filesystem::path& path);

}  // namespace memaudit::attribution
