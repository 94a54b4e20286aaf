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
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "memaudit/corpus.hpp"

namespace memaudit::text {

/// Whitespace split, then leading/trailing punctuation from ".,:;()" peeled
/// into single-character tokens. Runs of >= `min_marker_run` underscores
/// become standalone tokens wherever they appear.
std::vector<std::string> tokenize(std::string_view normalized,
                                  std::size_t min_marker_run = 3);

/// Dense token ids. Id 0 is the empty-prompt symbol and id 1 the
/// out-of-vocabulary symbol; regular tokens start at 2.
class Vocabulary {
 public:
  static constexpr int kEmpty = 0;
  static constexpr int kUnk = 1;
  static constexpr std::string_view kEmptyToken = "<empty>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();
  /// `tokens` are the regular tokens in id order (ids 2, 3, ...).
  explicit Vocabulary(std::vector<std::string> tokens, int min_count = 1);

  std::size_t size() const noexcept { return tokens_.size(); }
  int min_count() const noexcept { return min_count_; }

  /// Id of `token`, or kUnk when it is not a regular vocabulary entry.
  int id(std::string_view token) const;
  const std::string& token(int id) const;
  std::vector<int> ids(std::span<const std::string> tokens) const;

  /// Digest of the id -> token mapping.
  std::uint64_t hash() const noexcept;

  std::string to_json() const;
  static Vocabulary from_json(std::string_view json);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int min_count_ = 1;
};

/// Tokens whose row-weighted corpus count reaches `min_count` receive ids,
/// ordered by descending count then lexicographically.
Vocabulary build_vocab(std::span<const corpus::PromptRecord> records,
                       int min_count, std::size_t min_marker_run = 3);

/// One E-dimensional column per vocabulary id (column 0 is e_empty).
struct EmbeddingTable {
  Eigen::MatrixXf columns;  // E x V

  std::size_t dim() const noexcept { return static_cast<std::size_t>(columns.rows()); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(columns.cols()); }

  /// Seeded standard normal entries scaled by 1/sqrt(E).
  static EmbeddingTable random(std::size_t vocab_size, std::size_t dim,
                               std::uint64_t seed);
};

struct PromptEmbedding {
  Eigen::VectorXd vector;
  std::vector<int> token_ids;
};

/// Mean of the token columns; an empty token list yields the empty-prompt
/// column verbatim. Pooling sums in sorted-id order so that equal token
/// multisets give bit-identical embeddings.
PromptEmbedding encode_prompt(std::span<const std::string> tokens,
                              const EmbeddingTable& table,
                              const Vocabulary& vocab);
PromptEmbedding encode_ids(std::span<const int> ids, const EmbeddingTable& table);

std::vector<std::string> ablate_token(std::span<const std::string> tokens,
                                      std::size_t index);

/// Bundles tokenizer settings, vocabulary and table for callers that start
/// from caption text. Holds references; both must outlive the encoder.
class PromptEncoder {
 public:
  PromptEncoder(const Vocabulary& vocab, const EmbeddingTable& table,
                std::size_t min_marker_run = 3);

  std::vector<std::string> tokens(std::string_view normalized) const {
    return tokenize(normalized, min_marker_run_);
  }
  PromptEmbedding encode(std::string_view normalized) const;
  PromptEmbedding encode_tokens(std::span<const std::string> tokens) const;
  Eigen::VectorXd empty() const;

  std::size_t dim() const noexcept { return table_->dim(); }
  const Vocabulary& vocab() const noexcept { return *vocab_; }
  const EmbeddingTable& table() const noexcept { return *table_; }
  std::size_t min_marker_run() const noexcept { return min_marker_run_; }

 private:
  const Vocabulary* vocab_;
  const EmbeddingTable* table_;
  std::size_t min_marker_run_;
};

}  // namespace memaudit::text
