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

#include "memaudit/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "memaudit/csv.hpp"
#include "memaudit/error.hpp"

namespace memaudit::attribution {
namespace {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::span<const TokenScore> AttributionReport::top() const {
  const std::size_t n = std::min(top_k, token_scores.size());
  return std::span<const TokenScore>(token_scores.data(), n);
}

AttributionReport token_attribution(const corpus::PromptRecord& prompt,
                                    const diffusion::NoisePredictor& predictor,
                                    const text::PromptEncoder& encoder,
                                    const diffusion::NoiseSchedule& sched,
                                    const detector::DetectionConfig& cfg,
                                    std::size_t top_k) {
  const std::vector<std::string> tokens = encoder.tokens(prompt.normalized);
  if (tokens.empty()) {
    throw ConfigError("attribution: prompt " + std::to_string(prompt.id) +
                      " has no tokens");
  }
  const Eigen::VectorXd empty = encoder.empty();
  const auto score_of = [&](const Eigen::VectorXd& e) {
    return detector::dmem_score_embedding(e, empty, prompt.id, predictor, sched, cfg)
        .d_mem;
  };

  AttributionReport report;
  report.prompt_id = prompt.id;
  report.token_count = tokens.size();
  report.top_k = top_k;
  report.d_mem = score_of(encoder.encode_tokens(tokens).vector);
  report.token_scores.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto ablated = text::ablate_token(tokens, i);
    const double s = report.d_mem - score_of(encoder.encode_tokens(ablated).vector);
    if (!std::isfinite(s)) {
      throw NumericalError("attribution: non-finite score for token " +
                           std::to_string(i) + " of prompt " +
                           std::to_string(prompt.id));
    }
    report.token_scores.push_back({tokens[i], i, s, Method::kLeaveOneOut});
  }
  std::stable_sort(report.token_scores.begin(), report.token_scores.end(),
                   [](const TokenScore& a, const TokenScore& b) {
                     return a.score > b.score;
                   });
  return report;
}

void export_reports(std::span<const AttributionReport> reports,
                    const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const AttributionReport& r : reports) {
    json tokens = json::array();
    std::size_t rank = 1;
    for (const TokenScore& t : r.top()) {
      tokens.push_back({{"rank", rank++},
                        {"token", t.token},
                        {"index", t.index},
                        {"score", t.score}});
    }
    out << json{{"prompt_id", r.prompt_id},
                {"d_mem", r.d_mem},
                {"token_count", r.token_count},
                {"method", "leave_one_out"},
                {"top_k", r.top_k},
                {"tokens", std::move(tokens)}}
               .dump(-1, ' ', false, json::error_handler_t::replace)
        << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void export_top_k_csv(std::span<const AttributionReport> reports,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "prompt_id,rank,token,index,score\n";
  for (const AttributionReport& r : reports) {
    std::size_t rank = 1;
    for (const TokenScore& t : r.top()) {
      out << csv::join_row({std::to_string(r.prompt_id), std::to_string(rank++),
                            t.token, std::to_string(t.index),
                            format_double(t.score)})
          << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace memaudit::attribution
