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

#include "memaudit/mitigation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "memaudit/csv.hpp"
#include "memaudit/error.hpp"
#include "memaudit/rng.hpp"

namespace memaudit::mitigation {
namespace {

constexpr std::uint64_t kRwaStream = 0x57A1;
constexpr std::uint64_t kRnaStream = 0x4E41;

bool is_tight_punct(char c) {
  return c == ',' || c == ':' || c == ';' || c == '.';
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Deletes [begin, end) from `s` and repairs the whitespace at the seam.
void remove_span(std::string& s, std::size_t begin, std::size_t end) {
  s.erase(begin, end - begin);
  const bool space_before = begin > 0 && s[begin - 1] == ' ';
  const bool at_end = begin == s.size();
  const char after = at_end ? '\0' : s[begin];
  if (space_before && (after == ' ' || at_end || is_tight_punct(after))) {
    s.erase(begin - 1, 1);
  } else if (begin == 0 && after == ' ') {
    s.erase(0, 1);
  }
}

}  // namespace

StrategyKind parse_strategy(std::string_view name) {
  if (name == "rwa" || name == "random_word_addition") {
    return StrategyKind::kRandomWordAddition;
  }
  if (name == "rna" || name == "random_number_addition") {
    return StrategyKind::kRandomNumberAddition;
  }
  if (name == "removal") return StrategyKind::kRemoval;
  throw ConfigError("unknown mitigation strategy \"" + std::string(name) + "\"");
}

std::string_view strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kRandomWordAddition: return "rwa";
    case StrategyKind::kRandomNumberAddition: return "rna";
    case StrategyKind::kRemoval: return "removal";
  }
  return "unknown";
}

void MitigationStrategy::validate() const {
  if (kind == StrategyKind::kRandomWordAddition && wordlist.empty()) {
    throw ConfigError("random word addition needs a non-empty wordlist");
  }
  if (kind == StrategyKind::kRandomNumberAddition && digits < 1) {
    throw ConfigError("random number addition needs digits >= 1");
  }
}

corpus::PromptRecord apply_strategy(const corpus::PromptRecord& prompt,
                                    const MitigationStrategy& strategy,
                                    const corpus::MarkerPattern& pattern) {
  strategy.validate();
  corpus::PromptRecord out = prompt;
  if (prompt.marker_spans.empty()) return out;

  std::string s = prompt.normalized;
  const auto stream_base = static_cast<std::uint64_t>(prompt.id);
  const CounterRng words(strategy.seed, derive_seed(kRwaStream, {stream_base}));
  const CounterRng numbers(strategy.seed, derive_seed(kRnaStream, {stream_base}));

  // Right to left so earlier offsets stay valid; draws are indexed by span
  // position so the result does not depend on this order.
  for (std::size_t k = prompt.marker_spans.size(); k-- > 0;) {
    const corpus::Span span = prompt.marker_spans[k];
    if (span.end > s.size() || span.begin > span.end) {
      throw ConfigError("marker span out of range for prompt " +
                        std::to_string(prompt.id));
    }
    switch (strategy.kind) {
      case StrategyKind::kRandomWordAddition: {
        const std::string& w = strategy.wordlist[words.below(k, strategy.wordlist.size())];
        s.replace(span.begin, span.length(), w);
        break;
      }
      case StrategyKind::kRandomNumberAddition: {
        std::string digits(static_cast<std::size_t>(strategy.digits), '0');
        for (int d = 0; d < strategy.digits; ++d) {
          const std::uint64_t index =
              k * static_cast<std::uint64_t>(strategy.digits) + static_cast<std::uint64_t>(d);
          digits[static_cast<std::size_t>(d)] = static_cast<char>('0' + numbers.below(index, 10));
        }
        s.replace(span.begin, span.length(), digits);
        break;
      }
      case StrategyKind::kRemoval:
        remove_span(s, span.begin, span.end);
        break;
    }
  }
  out.text = s;
  out.normalized = std::move(s);
  out.marker_spans = corpus::find_marker_spans(out.normalized, pattern);
  return out;
}

double mean_pairwise_l2(const Eigen::MatrixXd& samples, std::vector<double>* per_pair) {
  const Eigen::Index n = samples.cols();
  if (n < 2) throw ConfigError("pairwise distance needs at least 2 generations");
  if (per_pair) per_pair->clear();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (samples.col(i) - samples.col(j)).norm();
      if (!std::isfinite(d)) {
        throw NumericalError("non-finite distance between generations " +
                             std::to_string(i) + " and " + std::to_string(j));
      }
      sum += d;
      if (per_pair) per_pair->push_back(d);
    }
  }
  return sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

std::vector<std::uint64_t> diversity_seeds(std::uint64_t base_seed, int n) {
  std::vector<std::uint64_t> seeds;
  seeds.reserve(static_cast<std::size_t>(std::max(n, 0)));
  for (int g = 1; g <= n; ++g) {
    seeds.push_back(derive_seed(base_seed, {static_cast<std::uint64_t>(g)}));
  }
  return seeds;
}

DiversityReport generation_diversity(const corpus::PromptRecord& prompt,
                                     const diffusion::NoisePredictor& predictor,
                                     const text::PromptEncoder& encoder,
                                     const diffusion::NoiseSchedule& sched, int n,
                                     std::uint64_t base_seed, int steps,
                                     std::optional<double> clip_x0, bool keep_pairs) {
  if (n < 2) throw ConfigError("generation diversity needs n >= 2");
  const std::vector<std::uint64_t> seeds = diversity_seeds(base_seed, n);
  const text::PromptEmbedding e = encoder.encode(prompt.normalized);
  const diffusion::Mat samples =
      diffusion::sample_batch(predictor, e.vector, seeds, steps, sched, clip_x0);
  DiversityReport r;
  r.prompt_id = prompt.id;
  r.n_generations = n;
  r.mean_pairwise_l2 = mean_pairwise_l2(samples, keep_pairs ? &r.per_pair : nullptr);
  return r;
}

MitigationEvaluation evaluate_mitigation(
    const corpus::PromptRecord& prompt, std::span<const MitigationStrategy> strategies,
    const diffusion::NoisePredictor& predictor, const text::PromptEncoder& encoder,
    const diffusion::NoiseSchedule& sched, int n, std::uint64_t base_seed, int steps,
    std::optional<double> clip_x0, std::optional<bool> flagged, const corpus::MarkerPattern& pattern) {
  MitigationEvaluation eval;
  if (flagged && !*flagged) {
    eval.warnings.push_back("prompt " + std::to_string(prompt.id) +
                            " is not flagged as memorized");
  }
  if (!strategies.empty() && prompt.marker_spans.empty()) {
    eval.warnings.push_back("prompt " + std::to_string(prompt.id) +
                            " has no markers; strategies leave it unchanged");
  }
  eval.rows.push_back({"original", prompt.normalized,
                       generation_diversity(prompt, predictor, encoder, sched, n,
                                            base_seed, steps, clip_x0)});
  for (const MitigationStrategy& strategy : strategies) {
    const corpus::PromptRecord edited = apply_strategy(prompt, strategy, pattern);
    eval.rows.push_back({std::string(strategy_name(strategy.kind)), edited.normalized,
                         generation_diversity(edited, predictor, encoder, sched, n,
                                              base_seed, steps, clip_x0)});
  }
  return eval;
}

void export_evaluation(const MitigationEvaluation& eval,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "strategy,n,mean_pairwise_l2\n";
  for (const EvaluationRow& row : eval.rows) {
    out << csv::join_row({row.strategy, std::to_string(row.report.n_generations),
                          format_double(row.report.mean_pairwise_l2)})
        << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace memaudit::mitigation
