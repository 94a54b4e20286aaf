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

#include "memaudit/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "memaudit/csv.hpp"
#include "memaudit/error.hpp"

namespace memaudit::corpus {
namespace {

using nlohmann::json;

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
         c == '\f';
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::string line_error(std::string_view source, std::size_t line,
                       std::string_view what) {
  std::ostringstream os;
  os << source << ": line " << line << ": " << what;
  return os.str();
}

Corpus parse_jsonl(std::istream& in, std::string_view source) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (std::all_of(line.begin(), line.end(), is_space)) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw IoError(line_error(source, line_no,
                               std::string("malformed JSON: ") + e.what()));
    }
    if (!obj.is_object()) {
      throw IoError(line_error(source, line_no, "row is not a JSON object"));
    }
    auto it = obj.find("text");
    if (it == obj.end()) {
      throw IoError(line_error(source, line_no, "missing \"text\" field"));
    }
    if (!it->is_string()) {
      throw IoError(line_error(source, line_no, "\"text\" is not a string"));
    }
    corpus.rows.push_back(
        {static_cast<std::int64_t>(corpus.rows.size()), it->get<std::string>()});
  }
  return corpus;
}

Corpus parse_csv(std::istream& in, std::string_view source) {
  csv::Reader reader(in);
  std::vector<std::string> fields;
  if (!reader.next(fields)) return {};
  if (!fields.empty() && fields[0].rfind("\xEF\xBB\xBF", 0) == 0) {
    fields[0].erase(0, 3);
  }
  const auto col = std::find(fields.begin(), fields.end(), "text");
  if (col == fields.end()) {
    throw IoError(std::string(source) +
                  ": CSV header has no \"text\" column");
  }
  const std::size_t text_col = static_cast<std::size_t>(col - fields.begin());
  const std::size_t width = fields.size();

  Corpus corpus;
  while (reader.next(fields)) {
    if (fields.size() == 1 && fields[0].empty() && width > 1) continue;
    if (fields.size() != width) {
      throw IoError(line_error(source, reader.record_line(),
                               "expected " + std::to_string(width) +
                                   " fields, found " +
                                   std::to_string(fields.size())));
    }
    corpus.rows.push_back({static_cast<std::int64_t>(corpus.rows.size()),
                           std::move(fields[text_col])});
  }
  return corpus;
}

Corpus parse_plain(std::istream& in) {
  Corpus corpus;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    corpus.rows.push_back(
        {static_cast<std::int64_t>(corpus.rows.size()), std::move(line)});
  }
  return corpus;
}

}  // namespace

Format parse_format(std::string_view name) {
  if (name == "jsonl") return Format::kJsonl;
  if (name == "csv") return Format::kCsv;
  if (name == "plain-lines" || name == "plain" || name == "txt") {
    return Format::kPlainLines;
  }
  throw ConfigError("unknown corpus format \"" + std::string(name) +
                    "\" (expected jsonl, csv or plain-lines)");
}

std::string_view format_name(Format format) {
  switch (format) {
    case Format::kJsonl: return "jsonl";
    case Format::kCsv: return "csv";
    case Format::kPlainLines: return "plain-lines";
  }
  return "?";
}

void MarkerPattern::validate() const {
  if (min_run < 1) throw ConfigError("marker min_run must be >= 1");
  if (is_space(symbol)) throw ConfigError("marker symbol must not be whitespace");
}

std::string normalize(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

Corpus parse_corpus(std::istream& in, Format format,
                    std::string_view source_name) {
  Corpus corpus;
  switch (format) {
    case Format::kJsonl: corpus = parse_jsonl(in, source_name); break;
    case Format::kCsv: corpus = parse_csv(in, source_name); break;
    case Format::kPlainLines: corpus = parse_plain(in); break;
  }
  if (in.bad()) throw IoError(std::string(source_name) + ": read failure");
  if (corpus.empty()) throw ConfigError("empty corpus");
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, Format format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file " + path.string());
  return parse_corpus(in, format, path.string());
}

std::vector<std::string> validate(const Corpus& corpus) {
  std::vector<std::string> issues;
  for (const Row& row : corpus.rows) {
    if (normalize(row.text).empty()) {
      issues.push_back("row " + std::to_string(row.id) + ": empty text");
    }
  }
  return issues;
}

std::vector<PromptRecord> extract_unique_prompts(const Corpus& corpus) {
  std::vector<PromptRecord> records;
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(corpus.size());
  for (const Row& row : corpus.rows) {
    std::string norm = normalize(row.text);
    auto [it, inserted] = index.try_emplace(norm, records.size());
    if (inserted) {
      PromptRecord rec;
      rec.id = static_cast<std::int64_t>(records.size());
      rec.text = row.text;
      rec.normalized = std::move(norm);
      rec.frequency = 1;
      records.push_back(std::move(rec));
    } else {
      ++records[it->second].frequency;
    }
  }
  return records;
}

std::vector<Span> find_marker_spans(std::string_view text,
                                    const MarkerPattern& pattern) {
  pattern.validate();
  std::vector<Span> spans;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != pattern.symbol) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && text[j] == pattern.symbol) ++j;
    if (j - i >= pattern.min_run) spans.push_back({i, j});
    i = j;
  }
  return spans;
}

PromptRecord detect_markers(PromptRecord record, const MarkerPattern& pattern) {
  record.marker_spans = find_marker_spans(record.normalized, pattern);
  return record;
}

void detect_markers(std::span<PromptRecord> records,
                    const MarkerPattern& pattern) {
  for (PromptRecord& r : records) {
    r.marker_spans = find_marker_spans(r.normalized, pattern);
  }
}

CorpusStats corpus_stats(std::span<const PromptRecord> records,
                         std::size_t top_k) {
  if (records.empty()) throw ConfigError("empty corpus");
  CorpusStats stats;
  stats.unique_prompts = static_cast<std::int64_t>(records.size());
  for (const PromptRecord& r : records) {
    stats.total_rows += r.frequency;
    if (!r.marker_spans.empty()) ++stats.marker_prompt_count;
  }

  std::vector<const PromptRecord*> order;
  order.reserve(records.size());
  for (const PromptRecord& r : records) order.push_back(&r);
  const std::size_t k = std::min(top_k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                    order.end(), [](const PromptRecord* a, const PromptRecord* b) {
                      if (a->frequency != b->frequency) {
                        return a->frequency > b->frequency;
                      }
                      return a->id < b->id;
                    });
  for (std::size_t i = 0; i < k; ++i) {
    stats.top_duplicates.push_back({order[i]->normalized, order[i]->frequency});
  }
  return stats;
}

std::string stats_to_json(const CorpusStats& stats, int indent) {
  json top = json::array();
  for (const auto& d : stats.top_duplicates) {
    top.push_back({{"text", d.text}, {"frequency", d.frequency}});
  }
  json j = {{"total_rows", stats.total_rows},
            {"unique_prompts", stats.unique_prompts},
            {"marker_prompt_count", stats.marker_prompt_count},
            {"top_duplicates", std::move(top)}};
  return j.dump(indent, ' ', false, json::error_handler_t::replace);
}

void write_unique_prompts(std::span<const PromptRecord> records,
                          const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const PromptRecord& r : records) {
    json j = {{"id", r.id},
              {"text", r.normalized},
              {"frequency", r.frequency},
              {"marker_count", r.marker_spans.size()}};
    out << j.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const Row& row : corpus.rows) {
    out << json{{"text", row.text}}.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace memaudit::corpus
