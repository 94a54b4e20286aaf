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

#include "memaudit/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memaudit/error.hpp"
#include "memaudit/hash.hpp"
#include "memaudit/rng.hpp"

namespace memaudit::text {
namespace {

using nlohmann::json;

bool is_split_punct(char c) {
  return c == '.' || c == ',' || c == ':' || c == ';' || c == '(' || c == ')';
}

// Splits one whitespace-free chunk around marker runs, then peels
// punctuation off the ends of every non-marker piece.
void split_chunk(std::string_view chunk, std::size_t min_run,
                 std::vector<std::string>& out) {
  auto emit_piece = [&](std::string_view piece) {
    std::size_t b = 0;
    std::size_t e = piece.size();
    while (b < e && is_split_punct(piece[b])) ++b;
    std::size_t trail = e;
    while (trail > b && is_split_punct(piece[trail - 1])) --trail;
    for (std::size_t i = 0; i < b; ++i) out.emplace_back(1, piece[i]);
    if (trail > b) out.emplace_back(piece.substr(b, trail - b));
    for (std::size_t i = trail; i < e; ++i) out.emplace_back(1, piece[i]);
  };

  std::size_t start = 0;
  std::size_t i = 0;
  while (i < chunk.size()) {
    if (chunk[i] != '_') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < chunk.size() && chunk[j] == '_') ++j;
    if (j - i >= min_run) {
      if (i > start) emit_piece(chunk.substr(start, i - start));
      out.emplace_back(chunk.substr(i, j - i));
      start = j;
    }
    i = j;
  }
  if (start < chunk.size()) emit_piece(chunk.substr(start));
}

}  // namespace

std::vector<std::string> tokenize(std::string_view normalized,
                                  std::size_t min_marker_run) {
  if (min_marker_run < 1) throw ConfigError("min_marker_run must be >= 1");
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < normalized.size()) {
    while (i < normalized.size() &&
           std::isspace(static_cast<unsigned char>(normalized[i]))) {
      ++i;
    }
    std::size_t j = i;
    while (j < normalized.size() &&
           !std::isspace(static_cast<unsigned char>(normalized[j]))) {
      ++j;
    }
    if (j > i) split_chunk(normalized.substr(i, j - i), min_marker_run, out);
    i = j;
  }
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens, int min_count)
    : min_count_(min_count) {
  tokens_.reserve(tokens.size() + 2);
  tokens_.emplace_back(kEmptyToken);
  tokens_.emplace_back(kUnkToken);
  for (std::string& t : tokens) {
    if (t == kEmptyToken || t == kUnkToken) {
      throw ConfigError("vocabulary token collides with a reserved symbol: " + t);
    }
    const int id = static_cast<int>(tokens_.size());
    if (!index_.emplace(t, id).second) {
      throw ConfigError("duplicate vocabulary token: " + t);
    }
    tokens_.push_back(std::move(t));
  }
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ConfigError("token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::ids(std::span<const std::string> tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const std::string& t : tokens) out.push_back(id(t));
  return out;
}

std::uint64_t Vocabulary::hash() const noexcept {
  Fnv1a h;
  h.update_u64(tokens_.size());
  for (const std::string& t : tokens_) {
    h.update_u64(t.size());
    h.update(t);
  }
  return h.digest();
}

std::string Vocabulary::to_json() const {
  // std::map keeps the dump byte-stable.
  json mapping = json::object();
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    mapping[tokens_[i]] = i;
  }
  json j = {{"format", "memaudit-vocab"},
            {"version", 1},
            {"min_count", min_count_},
            {"size", tokens_.size()},
            {"token_to_id", std::move(mapping)}};
  return j.dump(1, ' ', false, json::error_handler_t::replace) + "\n";
}

Vocabulary Vocabulary::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("vocabulary: malformed JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("token_to_id") ||
      !j["token_to_id"].is_object()) {
    throw IoError("vocabulary: missing token_to_id object");
  }
  const auto& mapping = j["token_to_id"];
  std::vector<std::string> by_id(mapping.size());
  std::vector<bool> seen(mapping.size(), false);
  for (auto it = mapping.begin(); it != mapping.end(); ++it) {
    if (!it.value().is_number_integer()) {
      throw IoError("vocabulary: non-integer id for token " + it.key());
    }
    const auto id = it.value().get<std::int64_t>();
    if (id < 0 || static_cast<std::size_t>(id) >= by_id.size() ||
        seen[static_cast<std::size_t>(id)]) {
      throw IoError("vocabulary: ids are not dense 0..V-1");
    }
    seen[static_cast<std::size_t>(id)] = true;
    by_id[static_cast<std::size_t>(id)] = it.key();
  }
  if (by_id.size() < 2 || by_id[kEmpty] != kEmptyToken || by_id[kUnk] != kUnkToken) {
    throw IoError("vocabulary: reserved ids 0/1 are not <empty>/<unk>");
  }
  std::vector<std::string> regular(by_id.begin() + 2, by_id.end());
  return Vocabulary(std::move(regular), j.value("min_count", 1));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json();
  if (!out) throw IoError("write failed: " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocabulary " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

Vocabulary build_vocab(std::span<const corpus::PromptRecord> records,
                       int min_count, std::size_t min_marker_run) {
  if (records.empty()) throw ConfigError("build_vocab: no records");
  std::map<std::string, std::int64_t> counts;
  for (const corpus::PromptRecord& r : records) {
    for (std::string& t : tokenize(r.normalized, min_marker_run)) {
      counts[std::move(t)] += r.frequency;
    }
  }
  if (counts.empty()) throw ConfigError("build_vocab: empty token stream");

  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_count && tok != Vocabulary::kEmptyToken &&
        tok != Vocabulary::kUnkToken) {
      kept.emplace_back(tok, n);
    }
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;  // map order already breaks ties lexically
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, n] : kept) tokens.push_back(std::move(tok));
  return Vocabulary(std::move(tokens), min_count);
}

EmbeddingTable EmbeddingTable::random(std::size_t vocab_size, std::size_t dim,
                                      std::uint64_t seed) {
  if (dim == 0) throw ConfigError("embedding dimension must be >= 1");
  EmbeddingTable table;
  table.columns.resize(static_cast<Eigen::Index>(dim),
                       static_cast<Eigen::Index>(vocab_size));
  const CounterRng rng(seed, 0xE3BEDull);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (Eigen::Index c = 0; c < table.columns.cols(); ++c) {
    for (Eigen::Index r = 0; r < table.columns.rows(); ++r) {
      const auto idx = static_cast<std::uint64_t>(c * table.columns.rows() + r);
      table.columns(r, c) = static_cast<float>(rng.normal(idx) * scale);
    }
  }
  return table;
}

PromptEmbedding encode_ids(std::span<const int> ids, const EmbeddingTable& table) {
  PromptEmbedding out;
  out.token_ids.assign(ids.begin(), ids.end());
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= table.size()) {
      throw ConfigError("token id " + std::to_string(id) +
                        " outside embedding table of size " +
                        std::to_string(table.size()));
    }
  }
  if (ids.empty()) {
    out.vector = table.columns.col(Vocabulary::kEmpty).cast<double>();
    return out;
  }
  std::vector<int> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(table.columns.rows());
  for (int id : sorted) sum += table.columns.col(id).cast<double>();
  out.vector = sum / static_cast<double>(sorted.size());
  return out;
}

PromptEmbedding encode_prompt(std::span<const std::string> tokens,
                              const EmbeddingTable& table,
                              const Vocabulary& vocab) {
  if (table.size() != vocab.size()) {
    throw ConfigError("embedding table has " + std::to_string(table.size()) +
                      " rows but vocabulary has " + std::to_string(vocab.size()));
  }
  const std::vector<int> ids = vocab.ids(tokens);
  return encode_ids(ids, table);
}

std::vector<std::string> ablate_token(std::span<const std::string> tokens,
                                      std::size_t index) {
  if (index >= tokens.size()) {
    throw ConfigError("ablate_token: index " + std::to_string(index) +
                      " out of range for " + std::to_string(tokens.size()) +
                      " tokens");
  }
  std::vector<std::string> out;
  out.reserve(tokens.size() - 1);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i != index) out.push_back(tokens[i]);
  }
  return out;
}

PromptEncoder::PromptEncoder(const Vocabulary& vocab, const EmbeddingTable& table,
                             std::size_t min_marker_run)
    : vocab_(&vocab), table_(&table), min_marker_run_(min_marker_run) {
  if (table.size() != vocab.size()) {
    throw MismatchError("embedding table has " + std::to_string(table.size()) +
                        " rows but vocabulary has " +
                        std::to_string(vocab.size()));
  }
}

PromptEmbedding PromptEncoder::encode(std::string_view normalized) const {
  return encode_tokens(tokens(normalized));
}

PromptEmbedding PromptEncoder::encode_tokens(
    std::span<const std::string> tokens) const {
  return encode_prompt(tokens, *table_, *vocab_);
}

Eigen::VectorXd PromptEncoder::empty() const {
  return table_->columns.col(Vocabulary::kEmpty).cast<double>();
}

}  // namespace memaudit::text
