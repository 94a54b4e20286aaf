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
#include <iosfwd>
#include <span>

#include "memaudit_cli/run_config.hpp"

namespace memaudit::cli {

// Every command returns a process exit code: 0 success, 2 config/usage,
// 3 I/O, 4 numerical failure, 5 artifact mismatch. Results go to `out`,
// warnings and errors to `err`.

/// Writes corpus.jsonl, images.f32 and plant_manifest.json, then prints
/// corpus statistics.
int cmd_gen_corpus(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Trains the toy denoiser on the corpus and its images; writes the weight
/// file and the vocabulary next to it.
int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Scores every unique prompt. Writes scores.csv, scores.histogram.json and
/// flagged.jsonl into the output directory.
int cmd_audit(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Leave-one-out token attribution for the given unique-prompt ids. Writes
/// attribution.jsonl and attribution_top_k.csv.
int cmd_attribute(const RunConfig& cfg, std::span<const std::int64_t> prompt_ids,
                  std::ostream& out, std::ostream& err);

/// Diversity of the original prompt and each configured strategy. Writes
/// mitigation_<id>.csv.
int cmd_mitigate(const RunConfig& cfg, std::int64_t prompt_id, std::ostream& out,
                 std::ostream& err);

/// Corpus statistics as JSON; also writes stats.json and
/// unique_prompts.jsonl.
int cmd_stats(const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace memaudit::cli
