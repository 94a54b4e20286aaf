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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "linear_oracle.hpp"
#include "memaudit/csv.hpp"
#include "memaudit/error.hpp"
#include "memaudit/mitigation.hpp"
#include "property.hpp"

namespace memaudit::mitigation {
namespace {

corpus::PromptRecord record(const std::string& text, std::int64_t id = 0) {
  return corpus::detect_markers(corpus::PromptRecord{id, text, text, {}, 1},
                                corpus::MarkerPattern{});
}

MitigationStrategy strategy(StrategyKind kind, std::uint64_t seed = 1) {
  MitigationStrategy s;
  s.kind = kind;
  s.seed = seed;
  return s;
}

TEST(Strategy, ParseAndName) {
  EXPECT_EQ(parse_strategy("rwa"), StrategyKind::kRandomWordAddition);
  EXPECT_EQ(parse_strategy("random_number_addition"), StrategyKind::kRandomNumberAddition);
  EXPECT_EQ(parse_strategy("removal"), StrategyKind::kRemoval);
  EXPECT_THROW(parse_strategy("paraphrase"), ConfigError);
  EXPECT_EQ(strategy_name(StrategyKind::kRandomNumberAddition), "rna");
}

TEST(Strategy, DefaultWordlistIsDistinctAndMarkerFree) {
  const auto& words = default_wordlist();
  EXPECT_EQ(words.size(), 256u);
  EXPECT_EQ(std::set<std::string>(words.begin(), words.end()).size(), words.size());
  for (const auto& w : words) {
    EXPECT_FALSE(w.empty());
    EXPECT_EQ(w.find('_'), std::string::npos);
    EXPECT_EQ(w.find(' '), std::string::npos);
  }
}

TEST(ApplyStrategy, RemovalExamples) {
  const auto removal = strategy(StrategyKind::kRemoval);
  EXPECT_EQ(apply_strategy(record("AP chest compared to ___:"), removal).normalized,
            "AP chest compared to:");
  EXPECT_EQ(apply_strategy(record("___ and ___"), removal).normalized, "and");
  EXPECT_EQ(apply_strategy(record("seen on ___ , stable"), removal).normalized,
            "seen on , stable");
  EXPECT_EQ(apply_strategy(record("x___y"), removal).normalized, "xy");
  EXPECT_EQ(apply_strategy(record("___"), removal).normalized, "");
}

TEST(ApplyStrategy, RandomWordAdditionUsesWordlist) {
  auto rwa = strategy(StrategyKind::kRandomWordAddition, 9);
  rwa.wordlist = {"alpha", "beta"};
  const auto out = apply_strategy(record("compared to ___ and ___."), rwa);
  EXPECT_TRUE(out.marker_spans.empty());
  const auto tokens = text::tokenize(out.normalized);
  ASSERT_EQ(tokens.size(), 6u);
  for (std::size_t i : {2u, 4u}) {
    EXPECT_TRUE(tokens[i] == "alpha" || tokens[i] == "beta") << tokens[i];
  }
  EXPECT_EQ(out.text, out.normalized);
}

TEST(ApplyStrategy, RandomNumberAdditionDigits) {
  auto rna = strategy(StrategyKind::kRandomNumberAddition, 4);
  rna.digits = 6;
  const auto out = apply_strategy(record("on ___:"), rna);
  ASSERT_EQ(out.normalized.size(), std::string("on 123456:").size());
  const std::string number = out.normalized.substr(3, 6);
  EXPECT_TRUE(std::all_of(number.begin(), number.end(), [](char c) { return c >= '0' && c <= '9'; }));
  rna.digits = 0;
  EXPECT_THROW(apply_strategy(record("on ___"), rna), ConfigError);
  auto rwa = strategy(StrategyKind::kRandomWordAddition);
  rwa.wordlist.clear();
  EXPECT_THROW(apply_strategy(record("on ___"), rwa), ConfigError);
}

TEST(ApplyStrategy, SeededAndPromptSpecific) {
  const auto rwa = strategy(StrategyKind::kRandomWordAddition, 77);
  const auto a = apply_strategy(record("___ ___ ___ ___", 5), rwa);
  EXPECT_EQ(a.normalized, apply_strategy(record("___ ___ ___ ___", 5), rwa).normalized);
  std::set<std::string> variants;
  for (std::int64_t id = 0; id < 20; ++id) {
    variants.insert(apply_strategy(record("___ ___ ___ ___", id), rwa).normalized);
  }
  EXPECT_GT(variants.size(), 15u);
}

TEST(ApplyStrategy, IdentityWithoutMarkers) {
  testkit::for_all(200, 51, [](testkit::Gen& g) {
    const std::string text = corpus::normalize(g.string_of("ab_ .:", 20));
    const auto r = record(text);
    if (!r.marker_spans.empty()) return;
    for (auto kind : {StrategyKind::kRandomWordAddition, StrategyKind::kRandomNumberAddition,
                      StrategyKind::kRemoval}) {
      EXPECT_EQ(apply_strategy(r, strategy(kind)).normalized, text);
    }
  });
}

TEST(ApplyStrategy, RemovesEveryMarkerAndKeepsOtherText) {
  testkit::for_all(300, 52, [](testkit::Gen& g) {
    const std::string text = corpus::normalize(g.string_of("ab_ .:,", 30));
    const auto r = record(text);
    std::string outside;
    std::size_t at = 0;
    for (const auto& s : r.marker_spans) {
      outside += text.substr(at, s.begin - at);
      at = s.end;
    }
    outside += text.substr(at);
    auto strip = [](std::string s) {
      s.erase(std::remove(s.begin(), s.end(), ' '), s.end());
      return s;
    };
    for (auto kind : {StrategyKind::kRandomWordAddition, StrategyKind::kRandomNumberAddition,
                      StrategyKind::kRemoval}) {
      const auto out = apply_strategy(r, strategy(kind, g.next_u64()));
      EXPECT_TRUE(out.marker_spans.empty()) << text << " -> " << out.normalized;
      if (kind == StrategyKind::kRemoval) {
        EXPECT_EQ(strip(out.normalized), strip(outside));
        EXPECT_EQ(out.normalized.find("  "), std::string::npos);
        EXPECT_EQ(apply_strategy(out, strategy(kind)).normalized, out.normalized);
      }
    }
  });
}

TEST(MeanPairwiseL2, ClosedForms) {
  for (Eigen::Index d : {1, 4, 9}) {
    const double c = 0.75;
    Eigen::MatrixXd two(d, 2);
    two.col(0).setZero();
    two.col(1).setConstant(c);
    EXPECT_NEAR(mean_pairwise_l2(two), c * std::sqrt(static_cast<double>(d)), 1e-12);
    Eigen::MatrixXd three(d, 3);
    three.col(0).setZero();
    three.col(1).setConstant(c);
    three.col(2).setConstant(2 * c);
    std::vector<double> pairs;
    EXPECT_NEAR(mean_pairwise_l2(three, &pairs), 4.0 / 3.0 * c * std::sqrt(static_cast<double>(d)),
                1e-12);
    ASSERT_EQ(pairs.size(), 3u);
    EXPECT_NEAR(pairs[1], 2 * c * std::sqrt(static_cast<double>(d)), 1e-12);
  }
  EXPECT_EQ(mean_pairwise_l2(Eigen::MatrixXd::Ones(3, 5)), 0.0);
  EXPECT_THROW(mean_pairwise_l2(Eigen::MatrixXd::Zero(3, 1)), ConfigError);
}

TEST(MeanPairwiseL2, PermutationInvariant) {
  testkit::for_all(100, 53, [](testkit::Gen& g) {
    const auto n = static_cast<Eigen::Index>(g.int_in(2, 9));
    Eigen::MatrixXd m(4, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < 4; ++i) m(i, j) = g.real_in(-1.0, 1.0);
    }
    Eigen::MatrixXd p = m;
    for (Eigen::Index j = n; j > 1; --j) p.col(j - 1).swap(p.col(static_cast<Eigen::Index>(g.index(static_cast<std::size_t>(j)))));
    EXPECT_NEAR(mean_pairwise_l2(m), mean_pairwise_l2(p), 1e-12);
  });
}

class EvaluationTest : public ::testing::Test {
 protected:
  diffusion::NoiseSchedule sched = diffusion::make_schedule(100, 1e-4, 0.02);
  testkit::LinearOracle oracle{4, 5, 100, 54};
  text::Vocabulary vocab{{"chest", "___", "film"}};
  text::EmbeddingTable table = text::EmbeddingTable::random(vocab.size(), 5, 55);
  text::PromptEncoder encoder{vocab, table};
};

TEST_F(EvaluationTest, RowsInOrderWithOriginalFirst) {
  const std::vector<MitigationStrategy> strategies = {strategy(StrategyKind::kRandomWordAddition),
                                                      strategy(StrategyKind::kRemoval)};
  const auto eval = evaluate_mitigation(record("chest ___ film"), strategies, oracle, encoder,
                                        sched, 6, 3, 10, 1.0, true);
  ASSERT_EQ(eval.rows.size(), 3u);
  EXPECT_EQ(eval.rows[0].strategy, "original");
  EXPECT_EQ(eval.rows[1].strategy, "rwa");
  EXPECT_EQ(eval.rows[2].strategy, "removal");
  EXPECT_EQ(eval.rows[2].prompt_text, "chest film");
  EXPECT_TRUE(eval.warnings.empty());
  for (const auto& row : eval.rows) {
    EXPECT_EQ(row.report.n_generations, 6);
    EXPECT_GT(row.report.mean_pairwise_l2, 0.0);
  }

  const auto path = std::filesystem::temp_directory_path() / "memaudit_mitigation_test.csv";
  export_evaluation(eval, path);
  std::ifstream in(path);
  csv::Reader reader(in);
  std::vector<std::string> fields;
  ASSERT_TRUE(reader.next(fields));
  EXPECT_EQ(fields, (std::vector<std::string>{"strategy", "n", "mean_pairwise_l2"}));
  std::size_t rows = 0;
  while (reader.next(fields)) {
    EXPECT_EQ(std::stod(fields[2]), eval.rows[rows].report.mean_pairwise_l2);
    ++rows;
  }
  EXPECT_EQ(rows, 3u);
  std::filesystem::remove(path);
}

TEST_F(EvaluationTest, WarningsForUnflaggedAndMarkerFreePrompts) {
  const std::vector<MitigationStrategy> strategies = {strategy(StrategyKind::kRemoval)};
  const auto eval = evaluate_mitigation(record("chest film"), strategies, oracle, encoder, sched,
                                        4, 3, 10, std::nullopt, false);
  EXPECT_EQ(eval.warnings.size(), 2u);
  EXPECT_EQ(eval.rows[0].report.mean_pairwise_l2, eval.rows[1].report.mean_pairwise_l2);
}

TEST_F(EvaluationTest, DiversityNeedsTwoGenerations) {
  EXPECT_THROW(generation_diversity(record("chest"), oracle, encoder, sched, 1, 0, 10),
               ConfigError);
}

TEST_F(EvaluationTest, DiversityIsSeededAndKeepsPairs) {
  const auto a = generation_diversity(record("chest"), oracle, encoder, sched, 5, 8, 10,
                                      std::nullopt, true);
  const auto b = generation_diversity(record("chest"), oracle, encoder, sched, 5, 8, 10);
  EXPECT_EQ(a.mean_pairwise_l2, b.mean_pairwise_l2);
  EXPECT_EQ(a.per_pair.size(), 10u);
  EXPECT_TRUE(b.per_pair.empty());
  EXPECT_EQ(diversity_seeds(8, 3), diversity_seeds(8, 3));
  EXPECT_EQ(diversity_seeds(8, 3).size(), 3u);
}

}  // namespace
}  // namespace memaudit::mitigation
