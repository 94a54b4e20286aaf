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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace memaudit::corpus {

enum class Format { kJsonl, kCsv, kPlainLines };

/// Accepts "jsonl", "csv", "plain-lines" (alias "plain", "txt").
Format parse_format(std::string_view name);
std::string_view format_name(Format format);

/// One dataset row as read from disk; ids follow file order.
struct Row {
  std::int64_t id = 0;
  std::string text;
};

struct Corpus {
  std::vector<Row> rows;

  std::size_t size() const noexcept { return rows.size(); }
  bool empty() const noexcept { return rows.empty(); }
};

/// Half-open byte range [begin, end) into a normalized caption.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const noexcept { return end - begin; }
  friend bool operator==(const Span&, const Span&) = default;
};

/// A maximal run of at least `min_run` copies of `symbol`.
struct MarkerPattern {
  std::size_t min_run = 3;
  char symbol = '_';

  void validate() const;
};

struct PromptRecord {
  std::int64_t id = 0;
  std::string text;
  std::string normalized;
  std::vector<Span> marker_spans;
  std::int64_t frequency = 1;
};

struct DuplicateEntry {
  std::string text;
  std::int64_t frequency = 0;
};

struct CorpusStats {
  std::int64_t total_rows = 0;
  std::int64_t unique_prompts = 0;
  std::int64_t marker_prompt_count = 0;
  std::vector<DuplicateEntry> top_duplicates;
};

/// Trims and collapses ASCII whitespace runs to one space. Bytes >= 0x80
/// pass through untouched, and case is preserved.
std::string normalize(std::string_view text);

Corpus load_corpus(const std::filesystem::path& path, Format format);
Corpus parse_corpus(std::istream& in, Format format,
                    std::string_view source_name = "<stream>");

/// Human-readable warnings for rows that load but are unusable
/// (currently: captions that normalize to the empty string).
std::vector<std::string> validate(const Corpus& corpus);

/// One record per distinct normalized text, in first-occurrence order.
/// Ids are 0..n-1 in that order.
std::vector<PromptRecord> extract_unique_prompts(const Corpus& corpus);

/// Maximal marker runs in `text`, ascending and non-overlapping.
std::vector<Span> find_marker_spans(std::string_view text,
                                    const MarkerPattern& pattern);

PromptRecord detect_markers(PromptRecord record, const MarkerPattern& pattern);
void detect_markers(std::span<PromptRecord> records,
                    const MarkerPattern& pattern);

CorpusStats corpus_stats(std::span<const PromptRecord> records,
                         std::size_t top_k = 20);

std::string stats_to_json(const CorpusStats& stats, int indent = 2);

/// JSONL with fields id, text (normalized), frequency, marker_count.
void write_unique_prompts(std::span<const PromptRecord> records,
                          const std::filesystem::path& path);

/// Writes rows as JSONL objects {"text": ...} in row order.
void write_jsonl(const Corpus& corpus, const std::filesystem::path& path);

}  // namespace memaudit::corpus
