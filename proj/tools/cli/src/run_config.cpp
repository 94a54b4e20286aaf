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

#include "memaudit_cli/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memaudit/error.hpp"
#include "memaudit/mitigation.hpp"
#include "memaudit/rng.hpp"

namespace memaudit::cli {
namespace {

using nlohmann::json;

// Reads fields of one JSON object and remembers which keys were used, so
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config: " + name_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config: " + name_ + "." + key + " has the wrong type");
    }
  }

  void get_path(const char* key, std::filesystem::path& out) {
    std::string s = out.string();
    get(key, s);
    out = s;
  }

  Section child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    static const json kEmpty = json::object();
    return Section(it == j_.end() ? kEmpty : *it, name_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) {
        throw ConfigError("config: unknown key " + name_ + "." + key);
      }
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string, std::less<>> seen_;
};

}  // namespace

std::filesystem::path RunConfig::corpus_path() const {
  return paths.corpus.empty() ? paths.out_dir / "corpus.jsonl" : paths.corpus;
}

std::filesystem::path RunConfig::images_path() const {
  if (!paths.images.empty()) return paths.images;
  return corpus_path().parent_path() / "images.f32";
}

std::filesystem::path RunConfig::weights_path() const {
  return paths.weights.empty() ? paths.out_dir / "weights.bin" : paths.weights;
}

std::filesystem::path RunConfig::manifest_path() const {
  return corpus_path().parent_path() / "plant_manifest.json";
}

std::uint64_t RunConfig::dataset_seed() const { return derive_seed(base_seed, {0xDA7A}); }
std::uint64_t RunConfig::train_seed() const { return derive_seed(base_seed, {0x7EA1}); }
std::uint64_t RunConfig::detection_seed() const { return derive_seed(base_seed, {0xDE7E}); }
std::uint64_t RunConfig::diversity_seed() const { return derive_seed(base_seed, {0xD1FF}); }
std::uint64_t RunConfig::strategy_seed() const { return derive_seed(base_seed, {0x5EED}); }

toylab::ToyDenoiserConfig RunConfig::model_config(std::size_t vocab_size) const {
  toylab::ToyDenoiserConfig c = model;
  c.dim = static_cast<std::size_t>(dataset.image_dim);
  c.vocab_size = vocab_size;
  c.timesteps = schedule.timesteps;
  c.beta_start = schedule.beta_start;
  c.beta_end = schedule.beta_end;
  return c;
}

detector::DetectionConfig RunConfig::detection_config() const {
  detector::DetectionConfig c = detection;
  c.base_seed = detection_seed();
  return c;
}

void RunConfig::validate() const {
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (vocab_min_count < 1) throw ConfigError("vocab.min_count must be >= 1");
  if (top_k < 1) throw ConfigError("attribution.top_k must be >= 1");
  if (paths.out_dir.empty()) throw ConfigError("paths.out_dir must not be empty");
  (void)corpus::parse_format(paths.corpus_format);
  dataset.validate();
  model_config(2).validate();
  train.validate();
  marker.validate();
  detection.validate();
  if (detection.steps > schedule.timesteps) {
    throw ConfigError("detection.steps must not exceed schedule.timesteps");
  }
  if (mitigation.generations < 2) {
    throw ConfigError("mitigation.generations must be >= 2");
  }
  for (const std::string& s : mitigation.strategies) (void)mitigation::parse_strategy(s);
  if (mitigation.digits < 1) throw ConfigError("mitigation.digits must be >= 1");
}

std::string RunConfig::to_json() const {
  json j;
  j["base_seed"] = base_seed;
  j["workers"] = workers;
  j["paths"] = {{"out_dir", paths.out_dir.string()},
                {"corpus", paths.corpus.string()},
                {"corpus_format", paths.corpus_format},
                {"images", paths.images.string()},
                {"weights", paths.weights.string()}};
  j["dataset"] = {{"n_base_prompts", dataset.n_base_prompts},
                  {"n_shared_caption_rows", dataset.n_shared_caption_rows},
                  {"marker_fraction", dataset.marker_fraction},
                  {"n_planted", dataset.plant.n_planted},
                  {"duplication_factor", dataset.plant.duplication_factor},
                  {"marker_in_planted", dataset.plant.marker_in_planted},
                  {"image_dim", dataset.image_dim},
                  {"image_noise", dataset.image_noise}};
  j["schedule"] = {{"timesteps", schedule.timesteps},
                   {"beta_start", schedule.beta_start},
                   {"beta_end", schedule.beta_end}};
  j["model"] = {{"embed_dim", model.embed_dim},
                {"hidden", model.hidden},
                {"time_dim", model.time_dim},
                {"prediction", toylab::prediction_name(model.prediction)}};
  j["train"] = {{"epochs", train.epochs},
                {"lr", train.lr},
                {"batch", train.batch},
                {"optimizer", toylab::optimizer_name(train.optimizer)},
                {"cond_dropout", train.cond_dropout},
                {"noise_draws", train.noise_draws},
                {"token_dropout", train.token_dropout},
                {"snr_clamp", train.snr_clamp}};
  j["vocab"] = {{"min_count", vocab_min_count}};
  j["marker"] = {{"symbol", std::string(1, marker.symbol)}, {"min_run", marker.min_run}};
  j["detection"] = {{"steps", detection.steps},
                    {"generations", detection.generations},
                    {"first_step_only", detection.first_step_only},
                    {"percentile", detection.percentile},
                    {"clip_x0", detection.clip_x0 ? json(*detection.clip_x0) : json(nullptr)}};
  j["attribution"] = {{"top_k", top_k}};
  j["mitigation"] = {{"generations", mitigation.generations},
                     {"strategies", mitigation.strategies},
                     {"digits", mitigation.digits},
                     {"wordlist", mitigation.wordlist.string()}};
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig c;
  Section root(j, "config");
  root.get("base_seed", c.base_seed);
  root.get("workers", c.workers);
  {
    Section s = root.child("paths");
    s.get_path("out_dir", c.paths.out_dir);
    s.get_path("corpus", c.paths.corpus);
    s.get("corpus_format", c.paths.corpus_format);
    s.get_path("images", c.paths.images);
    s.get_path("weights", c.paths.weights);
    s.finish();
  }
  {
    Section s = root.child("dataset");
    s.get("n_base_prompts", c.dataset.n_base_prompts);
    s.get("n_shared_caption_rows", c.dataset.n_shared_caption_rows);
    s.get("marker_fraction", c.dataset.marker_fraction);
    s.get("n_planted", c.dataset.plant.n_planted);
    s.get("duplication_factor", c.dataset.plant.duplication_factor);
    s.get("marker_in_planted", c.dataset.plant.marker_in_planted);
    s.get("image_dim", c.dataset.image_dim);
    s.get("image_noise", c.dataset.image_noise);
    s.finish();
  }
  {
    Section s = root.child("schedule");
    s.get("timesteps", c.schedule.timesteps);
    s.get("beta_start", c.schedule.beta_start);
    s.get("beta_end", c.schedule.beta_end);
    s.finish();
  }
  {
    Section s = root.child("model");
    s.get("embed_dim", c.model.embed_dim);
    s.get("hidden", c.model.hidden);
    s.get("time_dim", c.model.time_dim);
    std::string prediction(toylab::prediction_name(c.model.prediction));
    s.get("prediction", prediction);
    c.model.prediction = toylab::parse_prediction(prediction);
    s.finish();
  }
  {
    Section s = root.child("train");
    s.get("epochs", c.train.epochs);
    s.get("lr", c.train.lr);
    s.get("batch", c.train.batch);
    std::string optimizer(toylab::optimizer_name(c.train.optimizer));
    s.get("optimizer", optimizer);
    c.train.optimizer = toylab::parse_optimizer(optimizer);
    s.get("cond_dropout", c.train.cond_dropout);
    s.get("noise_draws", c.train.noise_draws);
    s.get("token_dropout", c.train.token_dropout);
    s.get("snr_clamp", c.train.snr_clamp);
    s.finish();
  }
  {
    Section s = root.child("vocab");
    s.get("min_count", c.vocab_min_count);
    s.finish();
  }
  {
    Section s = root.child("marker");
    std::string symbol(1, c.marker.symbol);
    s.get("symbol", symbol);
    if (symbol.size() != 1) throw ConfigError("config: marker.symbol must be one character");
    c.marker.symbol = symbol[0];
    s.get("min_run", c.marker.min_run);
    s.finish();
  }
  {
    Section s = root.child("detection");
    s.get("steps", c.detection.steps);
    s.get("generations", c.detection.generations);
    s.get("first_step_only", c.detection.first_step_only);
    s.get("percentile", c.detection.percentile);
    json clip = c.detection.clip_x0 ? json(*c.detection.clip_x0) : json(nullptr);
    s.get("clip_x0", clip);
    if (clip.is_null()) {
      c.detection.clip_x0.reset();
    } else if (clip.is_number()) {
      c.detection.clip_x0 = clip.get<double>();
    } else {
      throw ConfigError("config: detection.clip_x0 must be a number or null");
    }
    s.finish();
  }
  {
    Section s = root.child("attribution");
    s.get("top_k", c.top_k);
    s.finish();
  }
  {
    Section s = root.child("mitigation");
    s.get("generations", c.mitigation.generations);
    s.get("strategies", c.mitigation.strategies);
    s.get("digits", c.mitigation.digits);
    s.get_path("wordlist", c.mitigation.wordlist);
    s.finish();
  }
  root.finish();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write config " + path.string());
  out << to_json();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace memaudit::cli
