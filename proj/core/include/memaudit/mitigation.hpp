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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "memaudit/corpus.hpp"
#include "memaudit/diffusion.hpp"
#include "memaudit/text.hpp"

namespace memaudit::mitigation {

enum class StrategyKind { kRandomWordAddition, kRandomNumberAddition, kRemoval };

/// "rwa", "rna", "removal" (long forms accepted).
StrategyKind parse_strategy(std::string_view name);
std::string_view strategy_name(StrategyKind kind);

/// The 256 built-in replacement words.
const std::vector<std::string>& default_wordlist();

struct MitigationStrategy {
  StrategyKind kind = StrategyKind::kRemoval;
  std::vector<std::string> wordlist = default_wordlist();
  int digits = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Rewrites every marker span of `prompt.normalized`. Text outside the spans
/// is kept verbatim except for the whitespace repair after removal (a
/// doubled space collapses to one; a space before ",:;." is dropped). The
/// returned record has the rewritten text in both text fields and freshly
/// detected spans.
corpus::PromptRecord apply_strategy(const corpus::PromptRecord& prompt,
                                    const MitigationStrategy& strategy,
                                    const corpus::MarkerPattern& pattern = {});

struct DiversityReport {
  std::int64_t prompt_id = 0;
  int n_generations = 50;
  double mean_pairwise_l2 = 0.0;
  std::vector<double> per_pair;  // (0,1), (0,2), ..., (n-2,n-1)
};

/// Mean Euclidean distance over all unordered column pairs. Needs >= 2
/// columns. Fills `per_pair` when given.
double mean_pairwise_l2(const Eigen::MatrixXd& samples,
                        std::vector<double>* per_pair = nullptr);

/// Seeds for generation g = 1..n; shared by every prompt.
std::vector<std::uint64_t> diversity_seeds(std::uint64_t base_seed, int n);

DiversityReport generation_diversity(const corpus::PromptRecord& prompt,
                                     const diffusion::NoisePredictor& predictor,
                                     const text::PromptEncoder& encoder,
                                     const diffusion::NoiseSchedule& sched, int n,
                                     std::uint64_t base_seed, int steps = 50,
                                     std::optional<double> clip_x0 = std::nullopt,
                                     bool keep_pairs = false);

struct EvaluationRow {
  std::string strategy;  // "original" for the unmodified prompt
  std::string prompt_text;
  DiversityReport report;
};

struct MitigationEvaluation {
  std::vector<EvaluationRow> rows;
  std::vector<std::string> warnings;
};

/// Original row first, then one row per strategy in order. `flagged` is the
/// detector verdict for the prompt when known.
MitigationEvaluation evaluate_mitigation(
    const corpus::PromptRecord& prompt, std::span<const MitigationStrategy> strategies,
    const diffusion::NoisePredictor& predictor, const text::PromptEncoder& encoder,
    const diffusion::NoiseSchedule& sched, int n, std::uint64_t base_seed,
    int steps = 50, std::optional<double> clip_x0 = std::nullopt,
    std::optional<bool> flagged = std::nullopt,
    const corpus::MarkerPattern& pattern = {});

/// Columns strategy,n,mean_pairwise_l2.
void export_evaluation(const MitigationEvaluation& eval,
                       const std::filesystem::path& path);

}  // namespace memaudit::mitigation
