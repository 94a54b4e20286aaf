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

#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "memaudit/corpus.hpp"
#include "memaudit/text.hpp"

namespace {

using namespace memaudit;

const std::string kCaption =
    "PA and lateral chest compared to ___: Interval resolution of the left lower lobe "
    "opacity. No pleural effusion or pneumothorax (stable), heart size normal.";

void BM_Tokenize(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(text::tokenize(kCaption));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * kCaption.size()));
}
BENCHMARK(BM_Tokenize);

void BM_FindMarkers(benchmark::State& state) {
  const corpus::MarkerPattern p;
  for (auto _ : state) benchmark::DoNotOptimize(corpus::find_marker_spans(kCaption, p));
}
BENCHMARK(BM_FindMarkers);

void BM_EncodePrompt(benchmark::State& state) {
  std::vector<corpus::PromptRecord> records = {{0, kCaption, kCaption, {}, 1}};
  const text::Vocabulary vocab = text::build_vocab(records, 1);
  const auto table = text::EmbeddingTable::random(vocab.size(), 64, 1);
  const text::PromptEncoder enc(vocab, table);
  for (auto _ : state) benchmark::DoNotOptimize(enc.encode(kCaption));
}
BENCHMARK(BM_EncodePrompt);

}  // namespace
