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
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "memaudit/corpus.hpp"
#include "memaudit/diffusion.hpp"
#include "memaudit/text.hpp"

namespace memaudit::detector {

struct DetectionConfig {
  int steps = 50;
  int generations = 4;
  bool first_step_only = false;
  double percentile = 1.0;  // flag the top `percentile` percent
  std::uint64_t base_seed = 0;
  /// x0 clamp used by the sampler along the scored trajectory; images live
  /// in [-1, 1].
  std::optional<double> clip_x0 = 1.0;

  void validate() const;
};

struct MemorizationScore {
  std::int64_t prompt_id = 0;
  /// generations x visited steps; one column when first_step_only.
  Eigen::MatrixXd per_step_norms;
  double d_mem = 0.0;
};

/// Seed of generation g for a prompt; independent of processing order.
std::uint64_t generation_seed(std::uint64_t base_seed, std::int64_t prompt_id,
                              int generation);

/// Text-conditional noise score for an already-encoded prompt. Each
/// generation follows the prompt-conditioned deterministic trajectory from
/// its seeded x_T; at every visited timestep both eps(x_t, e_p) and
/// eps(x_t, e_empty) are evaluated on the same x_t. d_mem is the mean over
/// steps per generation, then over generations.
MemorizationScore dmem_score_embedding(const Eigen::VectorXd& prompt_embedding,
                                       const Eigen::VectorXd& empty_embedding,
                                       std::int64_t prompt_id,
                                       const diffusion::NoisePredictor& predictor,
                                       const diffusion::NoiseSchedule& sched,
                                       const DetectionConfig& cfg);

MemorizationScore dmem_score(const corpus::PromptRecord& prompt,
                             const diffusion::NoisePredictor& predictor,
                             const text::PromptEncoder& encoder,
                             const diffusion::NoiseSchedule& sched,
                             const DetectionConfig& cfg);

/// Called after each prompt with (completed, total).
using ProgressFn = std::function<void(std::size_t, std::size_t)>;

/// Scores every record using up to `workers` threads. Results are in input
/// order and independent of `workers`.
std::vector<MemorizationScore> score_corpus(
    std::span<const corpus::PromptRecord> records,
    const diffusion::NoisePredictor& predictor, const text::PromptEncoder& encoder,
    const diffusion::NoiseSchedule& sched, const DetectionConfig& cfg,
    unsigned workers = 1, const ProgressFn& progress = {});

struct RankedScore {
  std::int64_t prompt_id = 0;
  double d_mem = 0.0;
  bool flagged = false;
};

struct Histogram {
  std::vector<double> edges;         // bins + 1 entries over [0, max]
  std::vector<std::int64_t> counts;  // bins entries

  std::string to_json() const;
};

struct ScoreDistribution {
  std::vector<RankedScore> ranked;  // d_mem descending, ties by id ascending
  std::vector<std::int64_t> flagged_ids;
  Histogram histogram;
};

/// Number flagged for n prompts at `percentile`: ceil(percentile / 100 * n).
std::size_t flag_count(std::size_t n, double percentile);

ScoreDistribution rank_and_flag(std::span<const MemorizationScore> scores,
                                double percentile);

Histogram make_histogram(std::span<const double> values, std::size_t bins = 100);

enum class ExportFormat { kCsv, kJsonl };
ExportFormat parse_export_format(std::string_view name);

/// Writes the ranked scores (CSV columns prompt_id,text,d_mem,flagged) and a
/// histogram sidecar next to `path` (same stem, ".histogram.json"). Returns
/// the sidecar path.
std::filesystem::path export_scores(const ScoreDistribution& dist,
                                    std::span<const corpus::PromptRecord> records,
                                    const std::filesystem::path& path,
                                    ExportFormat format = ExportFormat::kCsv);

/// Flagged prompts only, JSONL {"prompt_id","text","d_mem"}.
void export_flagged(const ScoreDistribution& dist,
                    std::span<const corpus::PromptRecord> records,
                    const std::filesystem::path& path);

/// Parses a CSV written by export_scores.
std::vector<RankedScore> read_scores_csv(const std::filesystem::path& path);

}  // namespace memaudit::detector
