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

#include <vector>

#include <benchmark/benchmark.h>

#include "memaudit/detector.hpp"
#include "memaudit/toy_denoiser.hpp"

namespace {

using namespace memaudit;

toylab::ToyDenoiser default_model() {
  toylab::ToyDenoiserConfig c;
  c.vocab_size = 64;
  return toylab::ToyDenoiser::initialize(c, 1);
}

void BM_PredictBatch(benchmark::State& state) {
  const auto model = default_model();
  const auto cols = static_cast<Eigen::Index>(state.range(0));
  const diffusion::Mat x = diffusion::Mat::Random(256, cols);
  const diffusion::Mat e = diffusion::Mat::Random(64, cols);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict_batch(x, e, 500));
  state.SetItemsProcessed(state.iterations() * cols);
}
BENCHMARK(BM_PredictBatch)->Arg(1)->Arg(8)->Arg(64);

void BM_DmemScore(benchmark::State& state) {
  const auto model = default_model();
  const auto sched = model.schedule();
  const Eigen::VectorXd e = model.embeddings().columns.col(5).cast<double>();
  const Eigen::VectorXd empty = model.embeddings().columns.col(0).cast<double>();
  detector::DetectionConfig cfg;
  cfg.steps = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(detector::dmem_score_embedding(e, empty, 0, model, sched, cfg));
  }
}
BENCHMARK(BM_DmemScore)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_RankAndFlag(benchmark::State& state) {
  std::vector<detector::MemorizationScore> scores(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i].prompt_id = static_cast<std::int64_t>(i);
    scores[i].d_mem = static_cast<double>((i * 2654435761u) % 1000);
  }
  for (auto _ : state) benchmark::DoNotOptimize(detector::rank_and_flag(scores, 1.0));
}
BENCHMARK(BM_RankAndFlag)->Arg(500)->Arg(100000);

}  // namespace
