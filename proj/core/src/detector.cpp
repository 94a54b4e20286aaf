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

#include "memaudit/detector.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "memaudit/csv.hpp"
#include "memaudit/error.hpp"
#include "memaudit/rng.hpp"

namespace memaudit::detector {
namespace {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void rethrow_with_prompt(std::int64_t prompt_id, const Error& e) {
  const std::string msg = "prompt " + std::to_string(prompt_id) + ": " + e.what();
  switch (e.kind()) {
    case ErrorKind::kConfig: throw ConfigError(msg);
    case ErrorKind::kIo: throw IoError(msg);
    case ErrorKind::kNumerical: throw NumericalError(msg);
    case ErrorKind::kMismatch: throw MismatchError(msg);
  }
  throw ConfigError(msg);
}

std::unordered_map<std::int64_t, const corpus::PromptRecord*> index_by_id(
    std::span<const corpus::PromptRecord> records) {
  std::unordered_map<std::int64_t, const corpus::PromptRecord*> m;
  for (const auto& r : records) m.emplace(r.id, &r);
  return m;
}

}  // namespace

void DetectionConfig::validate() const {
  if (steps < 1) throw ConfigError("detection: steps must be >= 1");
  if (generations < 1) throw ConfigError("detection: generations must be >= 1");
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw ConfigError("detection: percentile must lie in (0, 100]");
  }
  if (clip_x0 && !(*clip_x0 > 0.0)) {
    throw ConfigError("detection: clip_x0 must be positive");
  }
}

std::uint64_t generation_seed(std::uint64_t base_seed, std::int64_t prompt_id,
                              int generation) {
  return derive_seed(base_seed, {static_cast<std::uint64_t>(prompt_id),
                                 static_cast<std::uint64_t>(generation)});
}

MemorizationScore dmem_score_embedding(const Eigen::VectorXd& prompt_embedding,
                                       const Eigen::VectorXd& empty_embedding,
                                       std::int64_t prompt_id,
                                       const diffusion::NoisePredictor& predictor,
                                       const diffusion::NoiseSchedule& sched,
                                       const DetectionConfig& cfg) {
  cfg.validate();
  if (prompt_embedding.size() != static_cast<Eigen::Index>(predictor.embed_dim()) ||
      empty_embedding.size() != prompt_embedding.size()) {
    throw ConfigError("dmem_score: embedding dimension does not match predictor");
  }
  const std::vector<int> ts = diffusion::strided_timesteps(sched.timesteps, cfg.steps);
  const int visited = cfg.first_step_only ? 1 : cfg.steps;
  const int g_count = cfg.generations;
  const auto dim = static_cast<Eigen::Index>(predictor.dim());

  // Columns [0, G) are the prompt branch, [G, 2G) the empty branch; both
  // see the same x_t.
  diffusion::Mat x(dim, g_count);
  for (int g = 0; g < g_count; ++g) {
    x.col(g) = diffusion::initial_noise(predictor.dim(),
                                        generation_seed(cfg.base_seed, prompt_id, g));
  }
  diffusion::Mat emb(prompt_embedding.size(), 2 * g_count);
  emb.leftCols(g_count) = prompt_embedding.replicate(1, g_count);
  emb.rightCols(g_count) = empty_embedding.replicate(1, g_count);

  MemorizationScore score;
  score.prompt_id = prompt_id;
  score.per_step_norms.resize(g_count, visited);
  diffusion::Mat both(dim, 2 * g_count);
  for (int k = 0; k < visited; ++k) {
    const int t = ts[static_cast<std::size_t>(k)];
    both.leftCols(g_count) = x;
    both.rightCols(g_count) = x;
    const diffusion::Mat eps = predictor.predict_batch(both, emb, t);
    if (eps.rows() != dim || eps.cols() != 2 * g_count) {
      throw ConfigError("dmem_score: predictor returned the wrong shape");
    }
    for (int g = 0; g < g_count; ++g) {
      const double norm = (eps.col(g) - eps.col(g_count + g)).norm();
      if (!std::isfinite(norm)) {
        throw NumericalError("non-finite text-conditional norm at generation " +
                             std::to_string(g) + ", t=" + std::to_string(t));
      }
      score.per_step_norms(g, k) = norm;
    }
    if (k + 1 < visited) {
      const int t_prev = ts[static_cast<std::size_t>(k + 1)];
      x = diffusion::reverse_step_batch(x, eps.leftCols(g_count), t, t_prev, sched,
                                        cfg.clip_x0);
    }
  }
  score.d_mem = score.per_step_norms.rowwise().mean().mean();
  return score;
}

MemorizationScore dmem_score(const corpus::PromptRecord& prompt,
                             const diffusion::NoisePredictor& predictor,
                             const text::PromptEncoder& encoder,
                             const diffusion::NoiseSchedule& sched,
                             const DetectionConfig& cfg) {
  const text::PromptEmbedding e = encoder.encode(prompt.normalized);
  return dmem_score_embedding(e.vector, encoder.empty(), prompt.id, predictor,
                              sched, cfg);
}

std::vector<MemorizationScore> score_corpus(
    std::span<const corpus::PromptRecord> records,
    const diffusion::NoisePredictor& predictor, const text::PromptEncoder& encoder,
    const diffusion::NoiseSchedule& sched, const DetectionConfig& cfg,
    unsigned workers, const ProgressFn& progress) {
  cfg.validate();
  std::vector<MemorizationScore> out(records.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex mu;
  std::exception_ptr first_error;
  std::size_t first_error_index = records.size();

  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= records.size()) return;
      try {
        out[i] = dmem_score(records[i], predictor, encoder, sched, cfg);
      } catch (const Error& e) {
        std::lock_guard lock(mu);
        if (i < first_error_index) {
          first_error_index = i;
          try {
            rethrow_with_prompt(records[i].id, e);
          } catch (...) {
            first_error = std::current_exception();
          }
        }
        next.store(records.size());
        return;
      }
      const std::size_t n = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard lock(mu);
        progress(n, records.size());
      }
    }
  };

  const unsigned n_threads =
      std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(records.size())));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < n_threads; ++w) pool.emplace_back(work);
  }
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

std::size_t flag_count(std::size_t n, double percentile) {
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw ConfigError("percentile must lie in (0, 100]");
  }
  // The tolerance absorbs representation error in percentile * n / 100 so
  // that, e.g., 1% of 200 is exactly 2.
  const double raw = percentile * static_cast<double>(n) / 100.0;
  const auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::min(k, n);
}

ScoreDistribution rank_and_flag(std::span<const MemorizationScore> scores,
                                double percentile) {
  if (scores.empty()) throw ConfigError("rank_and_flag: no scores");
  ScoreDistribution dist;
  dist.ranked.reserve(scores.size());
  std::vector<double> values;
  values.reserve(scores.size());
  for (const MemorizationScore& s : scores) {
    dist.ranked.push_back({s.prompt_id, s.d_mem, false});
    values.push_back(s.d_mem);
  }
  std::sort(dist.ranked.begin(), dist.ranked.end(),
            [](const RankedScore& a, const RankedScore& b) {
              if (a.d_mem != b.d_mem) return a.d_mem > b.d_mem;
              return a.prompt_id < b.prompt_id;
            });
  const std::size_t k = flag_count(scores.size(), percentile);
  for (std::size_t i = 0; i < k; ++i) {
    dist.ranked[i].flagged = true;
    dist.flagged_ids.push_back(dist.ranked[i].prompt_id);
  }
  dist.histogram = make_histogram(values);
  return dist;
}

Histogram make_histogram(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  Histogram h;
  double max = 0.0;
  for (double v : values) max = std::max(max, v);
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    h.edges[i] = max * static_cast<double>(i) / static_cast<double>(bins);
  }
  h.counts.assign(bins, 0);
  for (double v : values) {
    std::size_t b = 0;
    if (max > 0.0) {
      b = static_cast<std::size_t>(std::floor(v / max * static_cast<double>(bins)));
      b = std::min(b, bins - 1);
    }
    ++h.counts[b];
  }
  return h;
}

std::string Histogram::to_json() const {
  return json{{"edges", edges}, {"counts", counts}}.dump() + "\n";
}

ExportFormat parse_export_format(std::string_view name) {
  if (name == "csv") return ExportFormat::kCsv;
  if (name == "jsonl") return ExportFormat::kJsonl;
  throw ConfigError("unknown export format \"" + std::string(name) + "\"");
}

std::filesystem::path export_scores(const ScoreDistribution& dist,
                                    std::span<const corpus::PromptRecord> records,
                                    const std::filesystem::path& path,
                                    ExportFormat format) {
  const auto by_id = index_by_id(records);
  auto text_of = [&](std::int64_t id) -> std::string {
    auto it = by_id.find(id);
    return it == by_id.end() ? std::string() : it->second->normalized;
  };

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  if (format == ExportFormat::kCsv) {
    out << "prompt_id,text,d_mem,flagged\n";
    for (const RankedScore& s : dist.ranked) {
      out << csv::join_row({std::to_string(s.prompt_id), text_of(s.prompt_id),
                            format_double(s.d_mem), s.flagged ? "true" : "false"})
          << '\n';
    }
  } else {
    for (const RankedScore& s : dist.ranked) {
      out << json{{"prompt_id", s.prompt_id},
                  {"text", text_of(s.prompt_id)},
                  {"d_mem", s.d_mem},
                  {"flagged", s.flagged}}
                 .dump(-1, ' ', false, json::error_handler_t::replace)
          << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path.string());

  std::filesystem::path sidecar = path;
  sidecar.replace_extension(".histogram.json");
  std::ofstream h(sidecar, std::ios::binary);
  if (!h) throw IoError("cannot write " + sidecar.string());
  h << dist.histogram.to_json();
  if (!h) throw IoError("write failed: " + sidecar.string());
  return sidecar;
}

void export_flagged(const ScoreDistribution& dist,
                    std::span<const corpus::PromptRecord> records,
                    const std::filesystem::path& path) {
  const auto by_id = index_by_id(records);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const RankedScore& s : dist.ranked) {
    if (!s.flagged) continue;
    auto it = by_id.find(s.prompt_id);
    out << json{{"prompt_id", s.prompt_id},
                {"text", it == by_id.end() ? std::string() : it->second->normalized},
                {"d_mem", s.d_mem}}
               .dump(-1, ' ', false, json::error_handler_t::replace)
        << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<RankedScore> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  csv::Reader reader(in);
  std::vector<std::string> fields;
  if (!reader.next(fields) || fields.size() != 4 || fields[0] != "prompt_id") {
    throw IoError(path.string() + ": not a score CSV");
  }
  std::vector<RankedScore> out;
  while (reader.next(fields)) {
    if (fields.size() != 4) {
      throw IoError(path.string() + ": line " +
                    std::to_string(reader.record_line()) + ": expected 4 fields");
    }
    try {
      out.push_back({std::stoll(fields[0]), std::stod(fields[2]),
                     fields[3] == "true"});
    } catch (const std::exception&) {
      throw IoError(path.string() + ": line " +
                    std::to_string(reader.record_line()) + ": bad number");
    }
  }
  return out;
}

}  // namespace memaudit::detector
