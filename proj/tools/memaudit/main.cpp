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

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "memaudit/error.hpp"
#include "memaudit_cli/commands.hpp"
#include "memaudit_cli/run_config.hpp"

namespace {

using memaudit::cli::RunConfig;

struct Overrides {
  std::string config;
  std::uint64_t seed = 0;
  int steps = 0;
  int generations = 0;
  double percentile = 0.0;
  int workers = 0;
  std::string out;
  int epochs = 0;
  std::size_t top_k = 0;
  std::vector<std::string> strategies;
  bool dump_config = false;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "JSON run configuration");
  sub->add_option("--seed", o.seed, "base seed");
  sub->add_option("--steps", o.steps, "sampler steps");
  sub->add_option("--generations", o.generations,
                  "generations per prompt (diversity generations for mitigate)");
  sub->add_option("--percentile", o.percentile, "flag the top percentile");
  sub->add_option("--workers", o.workers, "scoring threads");
  sub->add_option("--out", o.out, "output directory");
  sub->add_flag("--dump-config", o.dump_config,
                "print the effective configuration and exit");
}

bool given(const CLI::App* sub, const char* name) {
  const CLI::Option* opt = sub->get_option_no_throw(name);
  return opt != nullptr && opt->count() > 0;
}

RunConfig effective_config(const CLI::App* sub, const Overrides& o, bool mitigate) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
  if (given(sub, "--seed")) cfg.base_seed = o.seed;
  if (given(sub, "--steps")) cfg.detection.steps = o.steps;
  if (given(sub, "--generations")) {
    (mitigate ? cfg.mitigation.generations : cfg.detection.generations) = o.generations;
  }
  if (given(sub, "--percentile")) cfg.detection.percentile = o.percentile;
  if (given(sub, "--workers")) cfg.workers = o.workers;
  if (given(sub, "--out")) cfg.paths.out_dir = o.out;
  if (given(sub, "--epochs")) cfg.train.epochs = o.epochs;
  if (given(sub, "--top-k")) cfg.top_k = o.top_k;
  if (given(sub, "--strategies")) cfg.mitigation.strategies = o.strategies;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memaudit: memorization audit for text-conditional diffusion models"};
  app.require_subcommand(1);
  Overrides o;

  CLI::App* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus with planted duplicates");
  CLI::App* train = app.add_subcommand("train", "train the toy denoiser");
  CLI::App* audit = app.add_subcommand("audit", "score and flag every unique prompt");
  CLI::App* attribute = app.add_subcommand("attribute", "leave-one-out token attribution");
  CLI::App* mitigate = app.add_subcommand("mitigate", "evaluate inference-time prompt edits");
  CLI::App* stats = app.add_subcommand("stats", "corpus statistics");
  for (CLI::App* sub : {gen, train, audit, attribute, mitigate, stats}) add_common(sub, o);
  train->add_option("--epochs", o.epochs, "training epochs");

  std::vector<std::int64_t> ids;
  attribute->add_option("ids", ids, "unique-prompt ids")->required();
  attribute->add_option("--top-k", o.top_k, "tokens kept per report");
  std::int64_t mitigate_id = 0;
  mitigate->add_option("id", mitigate_id, "unique-prompt id")->required();
  mitigate->add_option("--strategies", o.strategies, "rwa, rna, removal")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(memaudit::ErrorKind::kConfig);
  }

  CLI::App* sub = app.get_subcommands().front();
  RunConfig cfg;
  try {
    cfg = effective_config(sub, o, sub == mitigate);
  } catch (const memaudit::Error& e) {
    std::cerr << "memaudit: error: " << e.what() << '\n';
    return e.exit_code();
  }
  if (o.dump_config) {
    std::cout << cfg.to_json();
    return 0;
  }

  using namespace memaudit::cli;
  if (sub == gen) return cmd_gen_corpus(cfg, std::cout, std::cerr);
  if (sub == train) return cmd_train(cfg, std::cout, std::cerr);
  if (sub == audit) return cmd_audit(cfg, std::cout, std::cerr);
  if (sub == attribute) return cmd_attribute(cfg, ids, std::cout, std::cerr);
  if (sub == mitigate) return cmd_mitigate(cfg, mitigate_id, std::cout, std::cerr);
  return cmd_stats(cfg, std::cout, std::cerr);
}
