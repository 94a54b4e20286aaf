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

#include "memaudit_cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>

#include "memaudit/attribution.hpp"
#include "memaudit/corpus.hpp"
#include "memaudit/detector.hpp"
#include "memaudit/error.hpp"
#include "memaudit/mitigation.hpp"
#include "memaudit/text.hpp"
#include "memaudit/toylab.hpp"
#include "memaudit/weights.hpp"

namespace memaudit::cli {
namespace {

namespace fs = std::filesystem;

std::string fmt_double(double v, const char* spec = "%.6g") {
  char buf[32];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

int guarded(std::ostream& err, const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const Error& e) {
    err << "memaudit: error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    err << "memaudit: error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::kIo);
  }
}

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

corpus::Corpus load_rows(const RunConfig& cfg) {
  return corpus::load_corpus(cfg.corpus_path(), corpus::parse_format(cfg.paths.corpus_format));
}

std::vector<corpus::PromptRecord> unique_prompts(const RunConfig& cfg,
                                                 const corpus::Corpus& rows) {
  if (rows.empty()) throw ConfigError("corpus " + cfg.corpus_path().string() + " has no rows");
  std::vector<corpus::PromptRecord> prompts = corpus::extract_unique_prompts(rows);
  corpus::detect_markers(prompts, cfg.marker);
  return prompts;
}

void print_warnings(const corpus::Corpus& rows, std::ostream& err) {
  for (const std::string& w : corpus::validate(rows)) err << "warning: " << w << '\n';
}

fs::path vocab_path(const RunConfig& cfg) {
  fs::path p = cfg.weights_path();
  p.replace_extension(".vocab.json");
  return p;
}

// Loaded corpus, vocabulary and model, checked against each other.
struct Pipeline {
  std::vector<corpus::PromptRecord> prompts;
  text::Vocabulary vocab;
  diffusion::NoiseSchedule sched;
  std::unique_ptr<toylab::ToyDenoiser> model;

  text::PromptEncoder encoder(const RunConfig& cfg) const {
    return text::PromptEncoder(vocab, model->embeddings(), cfg.marker.min_run);
  }
};

Pipeline load_pipeline(const RunConfig& cfg, std::ostream& err) {
  Pipeline p;
  const corpus::Corpus rows = load_rows(cfg);
  print_warnings(rows, err);
  p.prompts = unique_prompts(cfg, rows);
  p.vocab = text::build_vocab(p.prompts, cfg.vocab_min_count, cfg.marker.min_run);
  p.sched = diffusion::make_schedule(cfg.schedule.timesteps, cfg.schedule.beta_start,
                                     cfg.schedule.beta_end);
  p.model = std::make_unique<toylab::ToyDenoiser>(
      toylab::load_weights(cfg.weights_path(), p.vocab.hash(), p.sched.hash()));
  return p;
}

void check_ids(std::span<const std::int64_t> ids, std::size_t n) {
  if (ids.empty()) throw ConfigError("no prompt ids given");
  std::string offenders;
  for (std::int64_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= n) {
      offenders += (offenders.empty() ? "" : ", ") + std::to_string(id);
    }
  }
  if (!offenders.empty()) {
    throw ConfigError("unknown prompt id(s): " + offenders + " (corpus has " +
                      std::to_string(n) + " unique prompts)");
  }
}

std::vector<std::string> read_wordlist(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open wordlist " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    line = corpus::normalize(line);
    if (!line.empty()) words.push_back(line);
  }
  if (words.empty()) throw ConfigError("wordlist " + path.string() + " is empty");
  return words;
}

}  // namespace

int cmd_gen_corpus(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    cfg.validate();
    toylab::SyntheticDatasetSpec spec = cfg.dataset;
    spec.seed = cfg.dataset_seed();
    const toylab::SyntheticCorpus data = toylab::gen_synthetic_corpus(spec);
    const toylab::SyntheticPaths paths{cfg.corpus_path(), cfg.images_path(),
                                       cfg.manifest_path()};
    ensure_dir(paths.corpus.parent_path());
    ensure_dir(paths.images.parent_path());
    toylab::write_synthetic_corpus(data, paths);

    std::vector<corpus::PromptRecord> prompts = corpus::extract_unique_prompts(data.corpus);
    corpus::detect_markers(prompts, cfg.marker);
    out << "wrote " << paths.corpus.string() << ", " << paths.images.string() << ", "
        << paths.manifest.string() << '\n';
    out << corpus::stats_to_json(corpus::corpus_stats(prompts, 5)) << '\n';
  });
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    cfg.validate();
    const corpus::Corpus rows = load_rows(cfg);
    print_warnings(rows, err);
    const std::vector<corpus::PromptRecord> prompts = unique_prompts(cfg, rows);
    const text::Vocabulary vocab =
        text::build_vocab(prompts, cfg.vocab_min_count, cfg.marker.min_run);
    const Eigen::MatrixXf images = toylab::read_images(
        cfg.images_path(), static_cast<std::size_t>(cfg.dataset.image_dim));
    const toylab::TrainingSet set =
        toylab::make_training_set(rows, images, vocab, cfg.marker.min_run);

    const toylab::ToyDenoiserConfig mc = cfg.model_config(vocab.size());
    toylab::ToyDenoiser model = toylab::ToyDenoiser::initialize(mc, cfg.train_seed());
    toylab::TrainConfig tc = cfg.train;
    tc.seed = cfg.train_seed();
    if (tc.epochs == 0) err << "warning: epochs=0, saving the initial weights\n";
    const toylab::TrainResult result = toylab::train(
        model, set, model.schedule(), tc, [&](int epoch, double train_loss, double probe) {
          out << "epoch " << epoch << '/' << tc.epochs << " train_loss "
              << fmt_double(train_loss) << " probe_loss " << fmt_double(probe) << '\n';
        });

    ensure_dir(cfg.weights_path().parent_path());
    toylab::save_weights(model, vocab.hash(), model.schedule().hash(), cfg.weights_path());
    vocab.save(vocab_path(cfg));
    const double final_loss =
        result.epoch_loss.empty() ? result.initial_loss : result.epoch_loss.back();
    out << "wrote " << cfg.weights_path().string() << '\n';
    out << "final loss " << fmt_double(final_loss) << '\n';
  });
}

int cmd_audit(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    cfg.validate();
    const Pipeline p = load_pipeline(cfg, err);
    const text::PromptEncoder enc = p.encoder(cfg);
    const std::vector<detector::MemorizationScore> scores = detector::score_corpus(
        p.prompts, *p.model, enc, p.sched, cfg.detection_config(),
        static_cast<unsigned>(cfg.workers));
    const detector::ScoreDistribution dist =
        detector::rank_and_flag(scores, cfg.detection.percentile);

    ensure_dir(cfg.paths.out_dir);
    const fs::path csv = cfg.paths.out_dir / "scores.csv";
    const fs::path hist = detector::export_scores(dist, p.prompts, csv);
    const fs::path flagged = cfg.paths.out_dir / "flagged.jsonl";
    detector::export_flagged(dist, p.prompts, flagged);

    std::vector<double> values;
    values.reserve(dist.ranked.size());
    for (const auto& r : dist.ranked) values.push_back(r.d_mem);
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    const double median =
        n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    out << "prompts " << n << '\n'
        << "flagged " << dist.flagged_ids.size() << '\n'
        << "max_d_mem " << fmt_double(values.back()) << '\n'
        << "median_d_mem " << fmt_double(median) << '\n'
        << "wrote " << csv.string() << ", " << hist.string() << ", " << flagged.string()
        << '\n';
  });
}

int cmd_attribute(const RunConfig& cfg, std::span<const std::int64_t> prompt_ids,
                  std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    cfg.validate();
    const Pipeline p = load_pipeline(cfg, err);
    check_ids(prompt_ids, p.prompts.size());
    const text::PromptEncoder enc = p.encoder(cfg);
    const detector::DetectionConfig det = cfg.detection_config();

    std::vector<attribution::AttributionReport> reports;
    for (std::int64_t id : prompt_ids) {
      reports.push_back(attribution::token_attribution(
          p.prompts[static_cast<std::size_t>(id)], *p.model, enc, p.sched, det, cfg.top_k));
    }
    ensure_dir(cfg.paths.out_dir);
    const fs::path jsonl = cfg.paths.out_dir / "attribution.jsonl";
    const fs::path csv = cfg.paths.out_dir / "attribution_top_k.csv";
    attribution::export_reports(reports, jsonl);
    attribution::export_top_k_csv(reports, csv);

    for (const auto& r : reports) {
      out << "prompt " << r.prompt_id << " d_mem " << fmt_double(r.d_mem) << '\n';
      std::size_t rank = 1;
      for (const auto& t : r.top()) {
        out << "  " << rank++ << ". " << t.token << " (" << t.index << ") "
            << fmt_double(t.score) << '\n';
      }
    }
    out << "wrote " << jsonl.string() << ", " << csv.string() << '\n';
  });
}

int cmd_mitigate(const RunConfig& cfg, std::int64_t prompt_id, std::ostream& out,
                 std::ostream& err) {
  return guarded(err, [&] {
    cfg.validate();
    const Pipeline p = load_pipeline(cfg, err);
    const std::int64_t ids[] = {prompt_id};
    check_ids(ids, p.prompts.size());
    const corpus::PromptRecord& prompt = p.prompts[static_cast<std::size_t>(prompt_id)];

    std::vector<std::string> words = mitigation::default_wordlist();
    if (!cfg.mitigation.wordlist.empty()) words = read_wordlist(cfg.mitigation.wordlist);
    std::vector<mitigation::MitigationStrategy> strategies;
    for (const std::string& name : cfg.mitigation.strategies) {
      mitigation::MitigationStrategy s;
      s.kind = mitigation::parse_strategy(name);
      s.wordlist = words;
      s.digits = cfg.mitigation.digits;
      s.seed = cfg.strategy_seed();
      strategies.push_back(std::move(s));
    }

    // Flag status comes from a previous audit in the same output directory.
    std::optional<bool> flagged;
    const fs::path scores = cfg.paths.out_dir / "scores.csv";
    if (fs::exists(scores)) {
      for (const auto& r : detector::read_scores_csv(scores)) {
        if (r.prompt_id == prompt_id) flagged = r.flagged;
      }
    }

    const text::PromptEncoder enc = p.encoder(cfg);
    const mitigation::MitigationEvaluation eval = mitigation::evaluate_mitigation(
        prompt, strategies, *p.model, enc, p.sched, cfg.mitigation.generations,
        cfg.diversity_seed(), cfg.detection.steps, cfg.detection.clip_x0, flagged,
        cfg.marker);
    for (const std::string& w : eval.warnings) err << "warning: " << w << '\n';

    ensure_dir(cfg.paths.out_dir);
    const fs::path csv =
        cfg.paths.out_dir / ("mitigation_" + std::to_string(prompt_id) + ".csv");
    mitigation::export_evaluation(eval, csv);
    for (const auto& row : eval.rows) {
      out << row.strategy << '\t' << fmt_double(row.report.mean_pairwise_l2) << '\t'
          << row.prompt_text << '\n';
    }
    out << "wrote " << csv.string() << '\n';
  });
}

int cmd_stats(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    cfg.validate();
    const corpus::Corpus rows = load_rows(cfg);
    print_warnings(rows, err);
    const std::vector<corpus::PromptRecord> prompts = unique_prompts(cfg, rows);
    const std::string json = corpus::stats_to_json(corpus::corpus_stats(prompts));
    ensure_dir(cfg.paths.out_dir);
    const fs::path stats = cfg.paths.out_dir / "stats.json";
    std::ofstream f(stats, std::ios::binary);
    if (!f) throw IoError("cannot write " + stats.string());
    f << json << '\n';
    if (!f) throw IoError("write failed: " + stats.string());
    corpus::write_unique_prompts(prompts, cfg.paths.out_dir / "unique_prompts.jsonl");
    out << json << '\n';
  });
}

}  // namespace memaudit::cli
