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

#include "memaudit/weights.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "memaudit/error.hpp"

namespace memaudit::toylab {
namespace {

using nlohmann::json;

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>(v >> (8 * b)));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
  }
  return v;
}

template <typename Matrix>
void put_array(std::string& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
    }
  }
}

std::uint64_t parse_hex(const std::string& s) {
  std::size_t pos = 0;
  const std::uint64_t v = std::stoull(s, &pos, 16);
  if (pos != s.size()) throw IoError("weights: bad hash field " + s);
  return v;
}

struct ArrayEntry {
  std::string name;
  Eigen::Index rows;
  Eigen::Index cols;
};

std::vector<ArrayEntry> array_table(const ToyDenoiserConfig& c) {
  const auto d = static_cast<Eigen::Index>(c.dim);
  const auto h = static_cast<Eigen::Index>(c.hidden);
  return {
      {"w1", h, static_cast<Eigen::Index>(c.input_dim())},
      {"b1", h, 1},
      {"w2", d, h},
      {"b2", d, 1},
      {"embeddings", static_cast<Eigen::Index>(c.embed_dim),
       static_cast<Eigen::Index>(c.vocab_size)},
  };
}

}  // namespace

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

void save_weights(const ToyDenoiser& model, std::uint64_t vocab_hash,
                  std::uint64_t schedule_hash, const std::filesystem::path& path) {
  const ToyDenoiserConfig& c = model.config();
  json arrays = json::array();
  for (const ArrayEntry& a : array_table(c)) {
    arrays.push_back({{"name", a.name}, {"rows", a.rows}, {"cols", a.cols}});
  }
  const json header = {{"model", "toy_denoiser"},
                       {"dim", c.dim},
                       {"embed_dim", c.embed_dim},
                       {"hidden", c.hidden},
                       {"time_dim", c.time_dim},
                       {"vocab_size", c.vocab_size},
                       {"prediction", prediction_name(c.prediction)},
                       {"timesteps", c.timesteps},
                       {"beta_start", c.beta_start},
                       {"beta_end", c.beta_end},
                       {"vocab_hash", to_hex(vocab_hash)},
                       {"schedule_hash", to_hex(schedule_hash)},
                       {"dtype", "float32-le"},
                       {"arrays", std::move(arrays)}};
  const std::string header_text = header.dump();

  std::string out(kWeightMagic, sizeof kWeightMagic);
  put_u32(out, kWeightVersion);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  const ToyParams& p = model.params();
  put_array(out, p.w1);
  put_array(out, p.b1);
  put_array(out, p.w2);
  put_array(out, p.b2);
  put_array(out, p.embeddings.columns);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write weights " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

ToyDenoiser load_weights(const std::filesystem::path& path,
                         std::optional<std::uint64_t> expected_vocab_hash,
                         std::optional<std::uint64_t> expected_schedule_hash,
                         WeightFileInfo* info) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open weights " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string bytes = ss.str();
  const std::string where = "weights " + path.string() + ": ";

  if (bytes.size() < 16 || std::memcmp(bytes.data(), kWeightMagic, 8) != 0) {
    throw IoError(where + "not a memaudit weight file");
  }
  if (get_u32(bytes, 8) != kWeightVersion) {
    throw IoError(where + "unsupported format version");
  }
  const std::size_t header_len = get_u32(bytes, 12);
  if (bytes.size() < 16 + header_len) throw IoError(where + "truncated header");

  WeightFileInfo meta;
  try {
    const json h = json::parse(bytes.substr(16, header_len));
    meta.config.dim = h.at("dim").get<std::size_t>();
    meta.config.embed_dim = h.at("embed_dim").get<std::size_t>();
    meta.config.hidden = h.at("hidden").get<std::size_t>();
    meta.config.time_dim = h.at("time_dim").get<std::size_t>();
    meta.config.vocab_size = h.at("vocab_size").get<std::size_t>();
    meta.config.prediction = parse_prediction(h.at("prediction").get<std::string>());
    meta.config.timesteps = h.at("timesteps").get<int>();
    meta.config.beta_start = h.at("beta_start").get<double>();
    meta.config.beta_end = h.at("beta_end").get<double>();
    meta.vocab_hash = parse_hex(h.at("vocab_hash").get<std::string>());
    meta.schedule_hash = parse_hex(h.at("schedule_hash").get<std::string>());
  } catch (const json::exception& e) {
    throw IoError(where + "malformed header: " + e.what());
  } catch (const ConfigError& e) {
    throw IoError(where + "malformed header: " + e.what());
  }
  try {
    meta.config.validate();
  } catch (const ConfigError& e) {
    throw IoError(where + "malformed header: " + e.what());
  }
  if (meta.config.schedule().hash() != meta.schedule_hash) {
    throw IoError(where + "schedule_hash does not match the stored schedule");
  }

  if (expected_vocab_hash && *expected_vocab_hash != meta.vocab_hash) {
    throw MismatchError("model/vocab mismatch: weights were trained with vocab " +
                        to_hex(meta.vocab_hash) + ", got " +
                        to_hex(*expected_vocab_hash));
  }
  if (expected_schedule_hash && *expected_schedule_hash != meta.schedule_hash) {
    throw MismatchError("model/schedule mismatch: weights were trained with schedule " +
                        to_hex(meta.schedule_hash) + ", got " +
                        to_hex(*expected_schedule_hash));
  }

  const auto table = array_table(meta.config);
  std::size_t expected = 16 + header_len;
  for (const ArrayEntry& a : table) {
    expected += static_cast<std::size_t>(a.rows * a.cols) * 4;
  }
  if (bytes.size() != expected) {
    throw IoError(where + (bytes.size() < expected ? "truncated payload"
                                                   : "trailing bytes after payload"));
  }

  std::size_t at = 16 + header_len;
  auto read = [&](Eigen::MatrixXf& m, const ArrayEntry& a) {
    m.resize(a.rows, a.cols);
    for (Eigen::Index r = 0; r < a.rows; ++r) {
      for (Eigen::Index c = 0; c < a.cols; ++c) {
        m(r, c) = std::bit_cast<float>(get_u32(bytes, at));
        at += 4;
      }
    }
  };
  ToyParams p;
  Eigen::MatrixXf tmp;
  read(p.w1, table[0]);
  read(tmp, table[1]);
  p.b1 = tmp.col(0);
  read(p.w2, table[2]);
  read(tmp, table[3]);
  p.b2 = tmp.col(0);
  read(p.embeddings.columns, table[4]);

  if (info) *info = meta;
  return ToyDenoiser(meta.config, std::move(p));
}

}  // namespace memaudit::toylab
