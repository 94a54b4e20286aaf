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
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "memaudit/corpus.hpp"
#include "memaudit/error.hpp"
#include "memaudit/text.hpp"
#include "property.hpp"

namespace memaudit::text {
namespace {

using Tokens = std::vector<std::string>;

std::vector<corpus::PromptRecord> records_of(const std::vector<std::string>& texts) {
  corpus::Corpus c;
  for (const auto& t : texts) c.rows.push_back({static_cast<std::int64_t>(c.rows.size()), t});
  return corpus::extract_unique_prompts(c);
}

std::string join(const Tokens& tokens) {
  std::string s;
  for (const auto& t : tokens) s += (s.empty() ? "" : " ") + t;
  return s;
}

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize("AP chest compared to ___:"),
            (Tokens{"AP", "chest", "compared", "to", "___", ":"}));
  EXPECT_EQ(tokenize(""), Tokens{});
  EXPECT_EQ(tokenize("edema has resolved."), (Tokens{"edema", "has", "resolved", "."}));
  EXPECT_EQ(tokenize("(stable),"), (Tokens{"(", "stable", ")", ","}));
  EXPECT_EQ(tokenize("x___y"), (Tokens{"x", "___", "y"}));
  EXPECT_EQ(tokenize("snake__case"), Tokens{"snake__case"});
  EXPECT_EQ(tokenize("a__b", 2), (Tokens{"a", "__", "b"}));
  EXPECT_THROW(tokenize("x", 0), ConfigError);
}

TEST(Tokenize, JoinedTokensAreAFixedPoint) {
  testkit::for_all(500, 11, [](testkit::Gen& g) {
    const std::string text = corpus::normalize(g.string_of("ab_ .:,()", 30));
    const Tokens tokens = tokenize(text);
    EXPECT_EQ(tokenize(join(tokens)), tokens) << text;
    for (const auto& t : tokens) EXPECT_FALSE(t.empty());
  });
}

TEST(BuildVocab, MinCountAndUnk) {
  const auto records = records_of({"chest clear", "chest film", "chest"});
  const Vocabulary v = build_vocab(records, 2);
  EXPECT_EQ(v.size(), 3u);  // <empty>, <unk>, chest
  EXPECT_EQ(v.token(2), "chest");
  EXPECT_EQ(v.id("clear"), Vocabulary::kUnk);
  EXPECT_EQ(v.id("chest"), 2);
  EXPECT_EQ(v.token(Vocabulary::kEmpty), Vocabulary::kEmptyToken);
}

TEST(BuildVocab, OrderedByCountThenLexically) {
  const auto records = records_of({"b a c", "c", "c b", "d"});
  const Vocabulary v = build_vocab(records, 1);
  EXPECT_EQ(v.token(2), "c");
  EXPECT_EQ(v.token(3), "b");
  EXPECT_EQ(v.token(4), "a");
  EXPECT_EQ(v.token(5), "d");
}

TEST(BuildVocab, CountsAreRowWeighted) {
  // "rare" occurs in one unique prompt that appears in three rows.
  const auto records = records_of({"rare", "rare", "rare", "other"});
  EXPECT_EQ(build_vocab(records, 3).id("rare"), 2);
}

TEST(BuildVocab, DeterministicFiles) {
  const auto records = records_of({"x y z", "y z", "z"});
  const auto dir = std::filesystem::temp_directory_path() / "memaudit_text_test";
  std::filesystem::create_directories(dir);
  build_vocab(records, 1).save(dir / "a.json");
  build_vocab(records, 1).save(dir / "b.json");
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
  const Vocabulary back = Vocabulary::load(dir / "a.json");
  EXPECT_EQ(back, build_vocab(records, 1));
  EXPECT_EQ(back.hash(), build_vocab(records, 1).hash());
  std::filesystem::remove_all(dir);
}

TEST(BuildVocab, ContractErrors) {
  EXPECT_THROW(build_vocab({}, 1), ConfigError);
  EXPECT_THROW(Vocabulary(Tokens{"a", "a"}), ConfigError);
  EXPECT_THROW(Vocabulary(Tokens{"<unk>"}), ConfigError);
  EXPECT_THROW(Vocabulary::from_json("{}"), IoError);
  EXPECT_THROW(Vocabulary().token(5), ConfigError);
}

TEST(Vocabulary, HashDependsOnMapping) {
  EXPECT_NE(Vocabulary(Tokens{"a", "b"}).hash(), Vocabulary(Tokens{"b", "a"}).hash());
  EXPECT_EQ(Vocabulary(Tokens{"a", "b"}).hash(), Vocabulary(Tokens{"a", "b"}).hash());
}

class EncodeTest : public ::testing::Test {
 protected:
  Vocabulary vocab{Tokens{"u", "v", "w"}};
  EmbeddingTable table = EmbeddingTable::random(5, 4, 99);
};

TEST_F(EncodeTest, EmptyTokensGiveEmptyColumnVerbatim) {
  const PromptEmbedding e = encode_prompt(Tokens{}, table, vocab);
  EXPECT_EQ(e.vector, table.columns.col(Vocabulary::kEmpty).cast<double>());
}

TEST_F(EncodeTest, SingleTokenIsItsColumn) {
  EXPECT_EQ(encode_prompt(Tokens{"v"}, table, vocab).vector, table.columns.col(3).cast<double>());
}

TEST_F(EncodeTest, TwoTokensAverage) {
  const Eigen::VectorXd u = table.columns.col(2).cast<double>();
  const Eigen::VectorXd v = table.columns.col(3).cast<double>();
  const Eigen::VectorXd e = encode_prompt(Tokens{"u", "v"}, table, vocab).vector;
  for (Eigen::Index i = 0; i < e.size(); ++i) EXPECT_DOUBLE_EQ(e(i), (u(i) + v(i)) / 2.0);
}

TEST_F(EncodeTest, UnknownTokensUseUnkColumn) {
  EXPECT_EQ(encode_prompt(Tokens{"zzz"}, table, vocab).vector,
            table.columns.col(Vocabulary::kUnk).cast<double>());
}

TEST_F(EncodeTest, SameMultisetSameEmbedding) {
  testkit::for_all(200, 12, [&](testkit::Gen& g) {
    Tokens tokens(static_cast<std::size_t>(g.int_in(1, 8)));
    for (auto& t : tokens) t = g.pick(Tokens{"u", "v", "w", "q"});
    Tokens shuffled = tokens;
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[g.index(i)]);
    EXPECT_EQ(encode_prompt(tokens, table, vocab).vector,
              encode_prompt(shuffled, table, vocab).vector);
  });
}

TEST_F(EncodeTest, NormBoundedByLargestColumn) {
  const double max_norm = table.columns.cast<double>().colwise().norm().maxCoeff();
  testkit::for_all(200, 13, [&](testkit::Gen& g) {
    Tokens tokens(static_cast<std::size_t>(g.int_in(0, 8)));
    for (auto& t : tokens) t = g.pick(Tokens{"u", "v", "w", "q"});
    EXPECT_LE(encode_prompt(tokens, table, vocab).vector.norm(), max_norm + 1e-12);
  });
}

TEST_F(EncodeTest, TableVocabSizeMismatch) {
  const EmbeddingTable small = EmbeddingTable::random(3, 4, 1);
  EXPECT_THROW(encode_prompt(Tokens{"u"}, small, vocab), ConfigError);
  EXPECT_THROW(PromptEncoder(vocab, small), MismatchError);
  EXPECT_THROW(encode_ids(std::vector<int>{7}, table), ConfigError);
}

TEST_F(EncodeTest, EncoderMatchesFreeFunctions) {
  const PromptEncoder enc(vocab, table);
  EXPECT_EQ(enc.encode("u v.").vector, encode_prompt(tokenize("u v."), table, vocab).vector);
  EXPECT_EQ(enc.empty(), table.columns.col(0).cast<double>());
}

TEST(AblateToken, Examples) {
  EXPECT_EQ(ablate_token(Tokens{"a", "___", "b"}, 1), (Tokens{"a", "b"}));
  EXPECT_EQ(ablate_token(Tokens{"only"}, 0), Tokens{});
  EXPECT_THROW(ablate_token(Tokens{"a", "b"}, 2), ConfigError);
}

TEST(EmbeddingTable, SeededAndScaled) {
  const EmbeddingTable a = EmbeddingTable::random(50, 64, 3);
  EXPECT_EQ(a.columns, EmbeddingTable::random(50, 64, 3).columns);
  EXPECT_NE(a.columns, EmbeddingTable::random(50, 64, 4).columns);
  // Entries ~ N(0, 1/E): mean squared entry close to 1/64.
  EXPECT_NEAR(a.columns.cast<double>().squaredNorm() / (50.0 * 64.0), 1.0 / 64.0, 0.002);
  EXPECT_THROW(EmbeddingTable::random(2, 0, 1), ConfigError);
}

}  // namespace
}  // namespace memaudit::text
