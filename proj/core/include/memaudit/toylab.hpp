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
#include <functional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "memaudit/corpus.hpp"
#include "memaudit/diffusion.hpp"
#include "memaudit/text.hpp"
#include "memaudit/toy_denoiser.hpp"

namespace memaudit::toylab {

inline constexpr std::string_view kMarker = "___";
inline constexpr std::string_view kSharedCaption =
    "No acute cardiopulmonary abnormality.";

struct PlantSpec {
  int n_planted = 5;
  int duplication_factor = 40;
  bool marker_in_planted = true;
};

struct SyntheticDatasetSpec {
  int n_base_prompts = 500;         // distinct captions, including plants
  int n_shared_caption_rows = 50;   // rows carrying kSharedCaption
  double marker_fraction = 0.02;    // of ordinary captions
  PlantSpec plant;
  int image_dim = 256;              // must be a perfect square
  double image_noise = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PlantManifest {
  std::vector<std::int64_t> prompt_ids;  // unique-prompt ids
  std::vector<std::string> texts;
  int duplication_factor = 0;
  std::string shared_caption;
  int shared_caption_rows = 0;
  std::uint64_t seed = 0;

  std::string to_json() const;
  static PlantManifest from_json(std::string_view json);
};

struct SyntheticCorpus {
  corpus::Corpus corpus;
  Eigen::MatrixXf images;  // D x rows, row-major on disk
  PlantManifest manifest;
};

/// Captions follow "<view>[ <comparison>]: <findings...>". Planted pairs are
/// one caption and one image repeated `duplication_factor` times; rows that
/// share kSharedCaption each get their own image.
SyntheticCorpus gen_synthetic_corpus(const SyntheticDatasetSpec& spec);

/// A grammar caption that is not in `taken`, without a marker.
std::string fresh_caption(std::uint64_t seed,
                          const std::unordered_set<std::string>& taken);

/// Writes corpus.jsonl, images.f32 and plant_manifest.json into `dir`.
struct SyntheticPaths {
  std::filesystem::path corpus;
  std::filesystem::path images;
  std::filesystem::path manifest;
};
SyntheticPaths default_synthetic_paths(const std::filesystem::path& dir);
void write_synthetic_corpus(const SyntheticCorpus& data, const SyntheticPaths& paths);

/// Little-endian float32, one D-vector per row.
void write_images(const Eigen::MatrixXf& images, const std::filesystem::path& path);
Eigen::MatrixXf read_images(const std::filesystem::path& path, std::size_t dim);

PlantManifest read_manifest(const std::filesystem::path& path);

/// Token ids per row alongside the paired images.
struct TrainingSet {
  std::vector<std::vector<int>> token_ids;
  Eigen::MatrixXf images;  // D x N

  std::size_t size() const noexcept { return token_ids.size(); }
};

TrainingSet make_training_set(const corpus::Corpus& corpus,
                              const Eigen::MatrixXf& images,
                              const text::Vocabulary& vocab,
                              std::size_t min_marker_run = 3);

enum class OptimizerKind { kSgd, kAdam };
OptimizerKind parse_optimizer(std::string_view name);
std::string_view optimizer_name(OptimizerKind kind);

struct TrainConfig {
  int epochs = 30;
  double lr = 1e-3;
  int batch = 32;
  std::uint64_t seed = 0;
  /// Probability of training a row against the empty-prompt embedding, so
  /// that eps(x, e_empty) learns the unconditional noise.
  double cond_dropout = 0.1;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  /// Independent (t, eps) draws of every row per epoch.
  int noise_draws = 8;
  /// Probability of dropping each caption token from a training row; at
  /// least one token is always kept.
  double token_dropout = 0.6;
  /// x0-prediction loss weight is sqrt(clamp(SNR(t), 1, snr_clamp)), i.e. an
  /// eps-space error whose amplification is capped. Ignored for eps models.
  double snr_clamp = 10.0;

  void validate() const;
};

struct TrainResult {
  /// Mean training loss of each epoch over its (t, eps) draws.
  std::vector<double> train_loss;
  /// Loss after each epoch on a fixed probe draw per row; identical across
  /// epochs when weights do not move.
  std::vector<double> epoch_loss;
  /// Probe loss before the first update.
  double initial_loss = 0.0;
};

using EpochCallback = std::function<void(int epoch, double train_loss,
                                         double probe_loss)>;

/// Mini-batch training of all parameters, embedding table included, on the
/// squared error of the model's prediction target. Deterministic given
/// config.seed. The model's schedule must equal `sched`.
TrainResult train(ToyDenoiser& model, const TrainingSet& data,
                  const diffusion::NoiseSchedule& sched, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Weighted squared error of `model` on one fixed (t, eps) draw per row,
/// without conditioning or token dropout.
double probe_loss(const ToyDenoiser& model, const TrainingSet& data,
                  const diffusion::NoiseSchedule& sched, std::uint64_t seed,
                  double snr_clamp = 10.0);

}  // namespace memaudit::toylab
