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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "memaudit/error.hpp"
#include "memaudit/weights.hpp"

namespace memaudit::toylab {
namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

class WeightsTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = std::filesystem::temp_directory_path() / "memaudit_weights_test";
    std::filesystem::create_directories(dir);
    cfg.dim = 16;
    cfg.embed_dim = 6;
    cfg.hidden = 10;
    cfg.time_dim = 4;
    cfg.vocab_size = 7;
  }
  void TearDown() override { std::filesystem::remove_all(dir); }

  std::filesystem::path dir;
  ToyDenoiserConfig cfg;
  std::uint64_t vocab_hash = 0x1234;
};

TEST_F(WeightsTest, SaveLoadSaveIsByteIdentical) {
  const ToyDenoiser model = ToyDenoiser::initialize(cfg, 8);
  const std::uint64_t sh = cfg.schedule().hash();
  save_weights(model, vocab_hash, sh, dir / "a.bin");
  WeightFileInfo info;
  const ToyDenoiser back = load_weights(dir / "a.bin", vocab_hash, sh, &info);
  save_weights(back, vocab_hash, sh, dir / "b.bin");
  EXPECT_EQ(slurp(dir / "a.bin"), slurp(dir / "b.bin"));
  EXPECT_EQ(slurp(dir / "a.bin").substr(0, 8), std::string(kWeightMagic, 8));
  EXPECT_EQ(back.params().w1, model.params().w1);
  EXPECT_EQ(back.params().embeddings.columns, model.params().embeddings.columns);
  EXPECT_EQ(info.vocab_hash, vocab_hash);
  EXPECT_EQ(info.config.prediction, cfg.prediction);
  EXPECT_EQ(info.config.vocab_size, 7u);
}

TEST_F(WeightsTest, HashMismatches) {
  const ToyDenoiser model = ToyDenoiser::initialize(cfg, 8);
  const std::uint64_t sh = cfg.schedule().hash();
  save_weights(model, vocab_hash, sh, dir / "w.bin");
  try {
    load_weights(dir / "w.bin", vocab_hash + 1, sh);
    FAIL() << "expected MismatchError";
  } catch (const MismatchError& e) {
    EXPECT_NE(std::string(e.what()).find("model/vocab mismatch"), std::string::npos);
  }
  EXPECT_THROW(load_weights(dir / "w.bin", vocab_hash, sh + 1), MismatchError);
  EXPECT_NO_THROW(load_weights(dir / "w.bin", std::nullopt, std::nullopt));
}

TEST_F(WeightsTest, TruncatedAndMalformedFiles) {
  const ToyDenoiser model = ToyDenoiser::initialize(cfg, 8);
  const std::uint64_t sh = cfg.schedule().hash();
  save_weights(model, vocab_hash, sh, dir / "w.bin");
  const std::string bytes = slurp(dir / "w.bin");
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{14}, bytes.size() / 2,
                          bytes.size() - 1}) {
    spit(dir / "t.bin", bytes.substr(0, cut));
    EXPECT_THROW(load_weights(dir / "t.bin", std::nullopt, std::nullopt), IoError) << cut;
  }
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  spit(dir / "m.bin", bad_magic);
  EXPECT_THROW(load_weights(dir / "m.bin", std::nullopt, std::nullopt), IoError);
  spit(dir / "x.bin", bytes + "extra");
  EXPECT_THROW(load_weights(dir / "x.bin", std::nullopt, std::nullopt), IoError);
  EXPECT_THROW(load_weights(dir / "missing.bin", std::nullopt, std::nullopt), IoError);
}

TEST(ToHex, FixedWidth) {
  EXPECT_EQ(to_hex(0), "0000000000000000");
  EXPECT_EQ(to_hex(0xabcull), "0000000000000abc");
}

}  // namespace
}  // namespace memaudit::toylab
