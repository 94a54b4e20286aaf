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
#include <numeric>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "memaudit/corpus.hpp"
#include "memaudit/error.hpp"
#include "property.hpp"

namespace memaudit::corpus {
namespace {

Corpus parse(const std::string& text, Format format) {
  std::istringstream in(text);
  return parse_corpus(in, format, "fixture");
}

Corpus rows_of(const std::vector<std::string>& texts) {
  Corpus c;
  for (const auto& t : texts) c.rows.push_back({static_cast<std::int64_t>(c.rows.size()), t});
  return c;
}

// Regex-based reference for maximal marker runs.
std::vector<Span> regex_spans(const std::string& text, const MarkerPattern& p) {
  const std::regex re(std::string(1, p.symbol) + "{" + std::to_string(p.min_run) + ",}");
  std::vector<Span> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re);
       it != std::sregex_iterator(); ++it) {
    const auto begin = static_cast<std::size_t>(it->position());
    const std::size_t end = begin + static_cast<std::size_t>(it->length());
    // A run that merely continues past a shorter prefix is still one run.
    if (begin > 0 && text[begin - 1] == p.symbol) continue;
    out.push_back({begin, end});
  }
  return out;
}

TEST(LoadCorpus, JsonlRowsKeepFileOrder) {
  const Corpus c = parse("{\"text\": \"a\"}\n{\"text\": \"b\"}\n\n{\"text\": \"c\", \"x\": 1}\n",
                         Format::kJsonl);
  ASSERT_EQ(c.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(c.rows[i].id, static_cast<std::int64_t>(i));
  EXPECT_EQ(c.rows[2].text, "c");
}

TEST(LoadCorpus, PlainLinesKeepsBlankLineAndValidateFlagsIt) {
  const Corpus c = parse("one\n\ntwo\nthree\r\n", Format::kPlainLines);
  ASSERT_EQ(c.size(), 4u);
  EXPECT_EQ(c.rows[1].text, "");
  EXPECT_EQ(c.rows[3].text, "three");
  const auto issues = validate(c);
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_NE(issues[0].find("row 1"), std::string::npos);
}

TEST(LoadCorpus, CsvReadsTextColumn) {
  const Corpus c = parse("id,text\n1,\"hello, world\"\n2,bye\n", Format::kCsv);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.rows[0].text, "hello, world");
}

TEST(LoadCorpus, CsvWithoutTextColumnNamesIt) {
  try {
    parse("id,caption\n1,x\n", Format::kCsv);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("\"text\""), std::string::npos);
  }
}

TEST(LoadCorpus, ContractErrors) {
  EXPECT_THROW(parse("{\"text\": 3}\n", Format::kJsonl), IoError);
  EXPECT_THROW(parse("{\"caption\": \"x\"}\n", Format::kJsonl), IoError);
  EXPECT_THROW(parse("not json\n", Format::kJsonl), IoError);
  EXPECT_THROW(parse("text\nx,y\n", Format::kCsv), IoError);
  EXPECT_THROW(parse("\n\n", Format::kJsonl), ConfigError);
  EXPECT_THROW(load_corpus("/nonexistent/corpus.jsonl", Format::kJsonl), IoError);
  EXPECT_THROW(parse_format("xml"), ConfigError);
  EXPECT_EQ(parse_format("txt"), Format::kPlainLines);
}

TEST(Normalize, TrimsAndCollapsesWhitespaceOnly) {
  EXPECT_EQ(normalize("  a \t b\n\nc  "), "a b c");
  EXPECT_EQ(normalize("Edema"), "Edema");
  EXPECT_EQ(normalize("caf\xC3\xA9  au  lait"), "caf\xC3\xA9 au lait");
  EXPECT_EQ(normalize(" \t "), "");
}

TEST(Normalize, IdempotentAndWellFormed) {
  testkit::for_all(500, 4, [](testkit::Gen& g) {
    const std::string s = g.string_of("ab_ \t\n.:", 24);
    const std::string n = normalize(s);
    EXPECT_EQ(normalize(n), n);
    EXPECT_EQ(n.find("  "), std::string::npos);
    if (!n.empty()) {
      EXPECT_NE(n.front(), ' ');
      EXPECT_NE(n.back(), ' ');
    }
  });
}

TEST(ExtractUniquePrompts, CollapsesWhitespaceVariants) {
  const auto records = extract_unique_prompts(rows_of({"a b", "a  b ", "c"}));
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].normalized, "a b");
  EXPECT_EQ(records[0].frequency, 2);
  EXPECT_EQ(records[1].normalized, "c");
  EXPECT_EQ(records[1].frequency, 1);
}

TEST(ExtractUniquePrompts, AllIdenticalRows) {
  const auto records = extract_unique_prompts(rows_of(std::vector<std::string>(37, "same")));
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].frequency, 37);
}

TEST(ExtractUniquePrompts, FrequenciesSumToRowsAndIdsFollowFirstOccurrence) {
  testkit::for_all(200, 5, [](testkit::Gen& g) {
    std::vector<std::string> texts(static_cast<std::size_t>(g.int_in(1, 40)));
    for (auto& t : texts) t = g.string_of("ab ", 4);
    const auto records = extract_unique_prompts(rows_of(texts));
    std::int64_t total = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      EXPECT_EQ(records[i].id, static_cast<std::int64_t>(i));
      EXPECT_GE(records[i].frequency, 1);
      total += records[i].frequency;
      const auto first = std::find_if(texts.begin(), texts.end(), [&](const auto& t) {
        return normalize(t) == records[i].normalized;
      });
      ASSERT_NE(first, texts.end());
      if (i > 0) {
        const auto prev = std::find_if(texts.begin(), texts.end(), [&](const auto& t) {
          return normalize(t) == records[i - 1].normalized;
        });
        EXPECT_LT(prev, first);
      }
    }
    EXPECT_EQ(total, static_cast<std::int64_t>(texts.size()));
  });
}

TEST(DetectMarkers, Examples) {
  const MarkerPattern p;
  const auto one = find_marker_spans("AP chest compared to ___:", p);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], (Span{21, 24}));

  const auto two = find_marker_spans("_____ and ___", p);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].length(), 5u);
  EXPECT_EQ(two[1].length(), 3u);

  EXPECT_TRUE(find_marker_spans("no markers here", p).empty());
  EXPECT_TRUE(find_marker_spans("snake__case", p).empty());
}

TEST(DetectMarkers, PatternValidation) {
  EXPECT_THROW(find_marker_spans("x", MarkerPattern{0, '_'}), ConfigError);
  EXPECT_THROW(find_marker_spans("x", MarkerPattern{3, ' '}), ConfigError);
}

TEST(DetectMarkers, MatchesRegexReference) {
  testkit::for_all(500, 6, [](testkit::Gen& g) {
    MarkerPattern p;
    p.symbol = g.pick(std::vector<char>{'_', '#', '~'});
    p.min_run = static_cast<std::size_t>(g.int_in(1, 4));
    const std::string alphabet = std::string("ab :") + p.symbol + p.symbol;
    const std::string text = g.string_of(alphabet, 30);
    EXPECT_EQ(find_marker_spans(text, p), regex_spans(text, p)) << text;
  });
}

TEST(DetectMarkers, SpansReconstructText) {
  testkit::for_all(300, 7, [](testkit::Gen& g) {
    const std::string text = normalize(g.string_of("ab _:", 30));
    const PromptRecord r = detect_markers(PromptRecord{0, text, text, {}, 1}, MarkerPattern{});
    std::string rebuilt;
    std::size_t at = 0;
    for (const Span& s : r.marker_spans) {
      ASSERT_LE(at, s.begin);
      ASSERT_LT(s.begin, s.end);
      rebuilt += text.substr(at, s.begin - at);
      const std::string marker = text.substr(s.begin, s.length());
      EXPECT_EQ(marker.find_first_not_of('_'), std::string::npos);
      rebuilt += marker;
      at = s.end;
    }
    rebuilt += text.substr(at);
    EXPECT_EQ(rebuilt, text);
  });
}

TEST(CorpusStats, CountsMarkersAndDuplicates) {
  auto records = extract_unique_prompts(rows_of({"x ___ y", "plain", "plain"}));
  detect_markers(records, MarkerPattern{});
  const CorpusStats s = corpus_stats(records);
  EXPECT_EQ(s.total_rows, 3);
  EXPECT_EQ(s.unique_prompts, 2);
  EXPECT_EQ(s.marker_prompt_count, 1);
  ASSERT_EQ(s.top_duplicates.size(), 2u);
  EXPECT_EQ(s.top_duplicates[0].text, "plain");
  EXPECT_EQ(s.top_duplicates[0].frequency, 2);
}

TEST(CorpusStats, EmptyRecordListIsAnError) {
  EXPECT_THROW(corpus_stats({}), ConfigError);
}

TEST(CorpusStats, InvariantsHoldOnRandomCorpora) {
  testkit::for_all(200, 8, [](testkit::Gen& g) {
    std::vector<std::string> texts(static_cast<std::size_t>(g.int_in(1, 60)));
    for (auto& t : texts) t = g.string_of("a_ ", 5);
    auto records = extract_unique_prompts(rows_of(texts));
    detect_markers(records, MarkerPattern{});
    const CorpusStats s = corpus_stats(records, 5);
    EXPECT_LE(s.unique_prompts, s.total_rows);
    EXPECT_LE(s.marker_prompt_count, s.unique_prompts);
    for (std::size_t i = 1; i < s.top_duplicates.size(); ++i) {
      EXPECT_GE(s.top_duplicates[i - 1].frequency, s.top_duplicates[i].frequency);
    }
  });
}

TEST(WriteJsonl, RoundTripsThroughLoad) {
  const auto dir = std::filesystem::temp_directory_path() / "memaudit_corpus_test";
  std::filesystem::create_directories(dir);
  const Corpus c = rows_of({"a \"quoted\" caption", "caf\xC3\xA9", "x"});
  write_jsonl(c, dir / "c.jsonl");
  const Corpus back = load_corpus(dir / "c.jsonl", Format::kJsonl);
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(back.rows[i].text, c.rows[i].text);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace memaudit::corpus
