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
#include <string>
#include <string_view>
#include <vector>

#include "memaudit/corpus.hpp"
#include "memaudit/detector.hpp"
#include "memaudit/toy_denoiser.hpp"
#include "memaudit/toylab.hpp"

namespace memaudit::cli {

struct PathConfig {
  std::filesystem::path out_dir = "memaudit-out";
  /// Empty paths resolve inside out_dir (see RunConfig::*_path()).
  std::filesystem::path corpus;
  std::string corpus_format = "jsonl";
  std::filesystem::path images;
  std::filesystem::path weights;
};

struct ScheduleConfig {
  int timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

struct MitigationConfig {
  int generations = 50;
  std::vector<std::string> strategies = {"rwa", "rna", "removal"};
  int digits = 4;
  /// One word per line; empty uses the built-in list.
  std::filesystem::path wordlist;
};

/// Everything a command needs. Sub-seeds for data, training, detection and
/// mitigation are derived from base_seed.
struct RunConfig {
  std::uint64_t base_seed = 0;
  int workers = 1;
  PathConfig paths;
  toylab::SyntheticDatasetSpec dataset;
  ScheduleConfig schedule;
  toylab::ToyDenoiserConfig model;
  toylab::TrainConfig train;
  int vocab_min_count = 1;
  corpus::MarkerPattern marker;
  detector::DetectionConfig detection;
  std::size_t top_k = 25;
  MitigationConfig mitigation;

  std::filesystem::path corpus_path() const;
  std::filesystem::path images_path() const;
  std::filesystem::path weights_path() const;
  std::filesystem::path manifest_path() const;

  std::uint64_t dataset_seed() const;
  std::uint64_t train_seed() const;
  std::uint64_t detection_seed() const;
  std::uint64_t diversity_seed() const;
  std::uint64_t strategy_seed() const;

  /// Model config with dim, schedule and vocab size filled in.
  toylab::ToyDenoiserConfig model_config(std::size_t vocab_size) const;
  detector::DetectionConfig detection_config() const;

  void validate() const;

  std::string to_json() const;
  /// Unknown keys are rejected; missing keys keep their defaults.
  static RunConfig from_json(std::string_view json);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

}  // namespace memaudit::cli
