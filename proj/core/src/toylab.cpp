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

#include "memaudit/toylab.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memaudit/error.hpp"
#include "memaudit/rng.hpp"

namespace memaudit::toylab {
namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 10> kViews = {
    "AP chest",
    "PA and lateral views of the chest",
    "Portable AP chest radiograph",
    "Frontal and lateral chest radiographs",
    "Single portable view of the chest",
    "AP upright view of the chest",
    "Supine AP chest",
    "PA chest radiograph",
    "Chest radiograph",
    "Semi-upright portable chest",
};

// Comparison clauses for captions without a marker. The marker clause is
// "compared to ___".
constexpr std::array<std::string_view, 3> kPlainComparisons = {
    "",
    " compared to the prior study",
    " compared to previous exam",
};

constexpr std::array<std::string_view, 40> kFindings = {
    "There is no pneumonia.",
    "Heart size normal.",
    "No appreciable pleural effusion.",
    "Previous mild pulmonary edema has resolved.",
    "Lungs are clear.",
    "There is no pneumothorax.",
    "Mild cardiomegaly is stable.",
    "The mediastinal contours are unremarkable.",
    "Right-sided PICC line terminates in the mid SVC.",
    "Endotracheal tube is in standard position.",
    "Nasogastric tube courses below the diaphragm.",
    "Small left pleural effusion is unchanged.",
    "Bibasilar atelectasis is present.",
    "Moderate pulmonary edema is noted.",
    "The cardiomediastinal silhouette is within normal limits.",
    "No focal consolidation.",
    "Hilar contours are normal.",
    "Degenerative changes of the thoracic spine.",
    "Sternotomy wires are intact.",
    "Left lower lobe opacity may reflect pneumonia.",
    "Right upper lobe nodule is again seen.",
    "Chest tube remains in place.",
    "Feeding tube is unchanged in position.",
    "No acute osseous abnormality.",
    "Surgical clips project over the upper abdomen.",
    "Mild vascular congestion.",
    "Lung volumes are low.",
    "Hyperinflation suggests emphysema.",
    "Calcified granuloma in the right lung.",
    "Pacemaker leads are in expected position.",
    "There is mild interstitial prominence.",
    "Aortic knob is calcified.",
    "Heart size is mildly enlarged.",
    "Small bilateral pleural effusions.",
    "Subsegmental atelectasis at the left base.",
    "No evidence of free air.",
    "Trachea is midline.",
    "Widened mediastinum is unchanged.",
    "Increased opacity at the right base.",
    "Central venous catheter tip in the right atrium.",
};

constexpr int kMinFindings = 2;
constexpr int kMaxFindings = 5;
constexpr int kMaxAttempts = 1000;

// Draws one caption from the grammar using draws [base, base + 16) of rng.
std::string draw_caption(const CounterRng& rng, std::uint64_t base,
                         bool with_marker) {
  std::uint64_t k = base;
  std::string caption(kViews[rng.below(k++, kViews.size())]);
  if (with_marker) {
    caption += " compared to ";
    caption += kMarker;
  } else {
    caption += kPlainComparisons[rng.below(k++, kPlainComparisons.size())];
  }
  caption += ':';
  const int n = kMinFindings +
                static_cast<int>(rng.below(k++, kMaxFindings - kMinFindings + 1));
  std::vector<std::size_t> idx(kFindings.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < n; ++i) {
    const std::size_t j =
        static_cast<std::size_t>(i) + rng.below(k++, idx.size() - static_cast<std::size_t>(i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
    caption += ' ';
    caption += kFindings[idx[static_cast<std::size_t>(i)]];
  }
  return caption;
}

// Smooth random pattern on a side x side grid: a few Gaussian blobs over a
// tilted background, squashed into [-1, 1].
Eigen::VectorXf draw_template(std::size_t side, std::uint64_t seed) {
  const CounterRng rng(seed, 0x7E);
  std::uint64_t k = 0;
  const double gx = rng.uniform(k++) * 2.0 - 1.0;
  const double gy = rng.uniform(k++) * 2.0 - 1.0;
  const int blobs = 3 + static_cast<int>(rng.below(k++, 3));
  struct Blob { double cx, cy, inv_w2, amp; };
  std::vector<Blob> bs;
  for (int b = 0; b < blobs; ++b) {
    const double w = 0.08 + 0.22 * rng.uniform(k++);
    const double sign = rng.uniform(k++) < 0.5 ? -1.0 : 1.0;
    const double amp = sign * (0.8 + 1.2 * rng.uniform(k++));
    bs.push_back({rng.uniform(k++), rng.uniform(k++), 1.0 / (2.0 * w * w), amp});
  }
  Eigen::VectorXf img(static_cast<Eigen::Index>(side * side));
  const double denom = side > 1 ? static_cast<double>(side - 1) : 1.0;
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      const double u = static_cast<double>(c) / denom;
      const double v = static_cast<double>(r) / denom;
      double val = 0.4 * (gx * (u - 0.5) + gy * (v - 0.5));
      for (const Blob& b : bs) {
        const double du = u - b.cx;
        const double dv = v - b.cy;
        val += b.amp * std::exp(-(du * du + dv * dv) * b.inv_w2);
      }
      img(static_cast<Eigen::Index>(r * side + c)) =
          static_cast<float>(std::tanh(val));
    }
  }
  return img;
}

Eigen::VectorXf noisy(const Eigen::VectorXf& tmpl, double sigma,
                      std::uint64_t seed) {
  const CounterRng rng(seed, 0x40);
  Eigen::VectorXf out(tmpl.size());
  for (Eigen::Index i = 0; i < tmpl.size(); ++i) {
    const double v = tmpl(i) + sigma * rng.normal(static_cast<std::uint64_t>(i));
    out(i) = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return out;
}

std::size_t checked_side(int image_dim) {
  const auto side = static_cast<std::size_t>(
      std::llround(std::sqrt(static_cast<double>(image_dim))));
  if (image_dim < 1 || side * side != static_cast<std::size_t>(image_dim)) {
    throw ConfigError("image_dim must be a positive perfect square");
  }
  return side;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void SyntheticDatasetSpec::validate() const {
  if (!(marker_fraction >= 0.0 && marker_fraction <= 1.0)) {
    throw ConfigError("marker_fraction must lie in [0, 1]");
  }
  if (plant.n_planted < 1) throw ConfigError("n_planted must be >= 1");
  if (plant.duplication_factor < 1) {
    throw ConfigError("duplication_factor must be >= 1");
  }
  if (n_shared_caption_rows < 0) {
    throw ConfigError("n_shared_caption_rows must be >= 0");
  }
  const int shared = n_shared_caption_rows > 0 ? 1 : 0;
  if (n_base_prompts < plant.n_planted + shared) {
    throw ConfigError("n_base_prompts must cover the planted and shared captions");
  }
  if (!(image_noise >= 0.0)) throw ConfigError("image_noise must be >= 0");
  checked_side(image_dim);
}

std::string PlantManifest::to_json() const {
  json j = {{"planted_prompt_ids", prompt_ids},
            {"planted_texts", texts},
            {"duplication_factor", duplication_factor},
            {"shared_caption", shared_caption},
            {"shared_caption_rows", shared_caption_rows},
            {"seed", seed}};
  return j.dump(2) + "\n";
}

PlantManifest PlantManifest::from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    PlantManifest m;
    m.prompt_ids = j.at("planted_prompt_ids").get<std::vector<std::int64_t>>();
    m.texts = j.at("planted_texts").get<std::vector<std::string>>();
    m.duplication_factor = j.at("duplication_factor").get<int>();
    m.shared_caption = j.value("shared_caption", std::string());
    m.shared_caption_rows = j.value("shared_caption_rows", 0);
    m.seed = j.value("seed", std::uint64_t{0});
    if (m.prompt_ids.size() != m.texts.size()) {
      throw IoError("plant manifest: ids and texts differ in length");
    }
    return m;
  } catch (const json::exception& e) {
    throw IoError(std::string("plant manifest: ") + e.what());
  }
}

SyntheticCorpus gen_synthetic_corpus(const SyntheticDatasetSpec& spec) {
  spec.validate();
  const std::size_t side = checked_side(spec.image_dim);
  const CounterRng caption_rng(spec.seed, 0xCA);

  std::unordered_set<std::string> taken;
  const bool has_shared = spec.n_shared_caption_rows > 0;
  if (has_shared) taken.emplace(kSharedCaption);

  std::uint64_t cursor = 0;
  auto next_caption = [&](bool with_marker) {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      std::string c = draw_caption(caption_rng, cursor, with_marker);
      cursor += 16;
      if (taken.insert(c).second) return c;
    }
    throw ConfigError("synthetic grammar exhausted; lower n_base_prompts");
  };

  std::vector<std::string> planted;
  for (int i = 0; i < spec.plant.n_planted; ++i) {
    const bool marker = spec.plant.marker_in_planted ||
                        caption_rng.uniform(1'000'000'000ull + i) < spec.marker_fraction;
    planted.push_back(next_caption(marker));
  }
  const int n_ordinary =
      spec.n_base_prompts - spec.plant.n_planted - (has_shared ? 1 : 0);
  std::vector<std::string> ordinary;
  for (int i = 0; i < n_ordinary; ++i) {
    const bool marker =
        caption_rng.uniform(2'000'000'000ull + static_cast<std::uint64_t>(i)) <
        spec.marker_fraction;
    ordinary.push_back(next_caption(marker));
  }

  // Each entry: caption text plus the seed of its image.
  struct Pending { std::string text; std::uint64_t image_seed; };
  std::vector<Pending> rows;
  std::uint64_t image_counter = 0;
  auto image_seed = [&] { return derive_seed(spec.seed, {0x1A6E, image_counter++}); };
  for (const std::string& c : ordinary) rows.push_back({c, image_seed()});
  for (int i = 0; i < spec.n_shared_caption_rows; ++i) {
    rows.push_back({std::string(kSharedCaption), image_seed()});
  }
  for (const std::string& c : planted) {
    const std::uint64_t s = image_seed();
    for (int r = 0; r < spec.plant.duplication_factor; ++r) rows.push_back({c, s});
  }

  // Deterministic Fisher-Yates shuffle of the row order.
  const CounterRng shuffle_rng(spec.seed, 0x5F);
  for (std::size_t i = rows.size(); i > 1; --i) {
    const std::size_t j = shuffle_rng.below(i, i);
    std::swap(rows[i - 1], rows[j]);
  }

  SyntheticCorpus out;
  out.images.resize(spec.image_dim, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.corpus.rows.push_back({static_cast<std::int64_t>(r), rows[r].text});
    const Eigen::VectorXf tmpl = draw_template(side, rows[r].image_seed);
    out.images.col(static_cast<Eigen::Index>(r)) =
        noisy(tmpl, spec.image_noise, splitmix64(rows[r].image_seed));
  }

  const std::vector<corpus::PromptRecord> unique =
      corpus::extract_unique_prompts(out.corpus);
  out.manifest.duplication_factor = spec.plant.duplication_factor;
  out.manifest.shared_caption = has_shared ? std::string(kSharedCaption) : "";
  out.manifest.shared_caption_rows = spec.n_shared_caption_rows;
  out.manifest.seed = spec.seed;
  for (const std::string& c : planted) {
    const auto it = std::find_if(unique.begin(), unique.end(),
                                 [&](const auto& r) { return r.normalized == c; });
    out.manifest.prompt_ids.push_back(it->id);
    out.manifest.texts.push_back(c);
  }
  return out;
}

std::string fresh_caption(std::uint64_t seed,
                          const std::unordered_set<std::string>& taken) {
  const CounterRng rng(seed, 0xF5);
  for (std::uint64_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::string c = draw_caption(rng, attempt * 16, false);
    if (!taken.contains(c)) return c;
  }
  throw ConfigError("could not find a fresh caption");
}

SyntheticPaths default_synthetic_paths(const std::filesystem::path& dir) {
  return {dir / "corpus.jsonl", dir / "images.f32", dir / "plant_manifest.json"};
}

void write_synthetic_corpus(const SyntheticCorpus& data,
                            const SyntheticPaths& paths) {
  corpus::write_jsonl(data.corpus, paths.corpus);
  write_images(data.images, paths.images);
  std::ofstream out(paths.manifest, std::ios::binary);
  if (!out) throw IoError("cannot write " + paths.manifest.string());
  out << data.manifest.to_json();
  if (!out) throw IoError("write failed: " + paths.manifest.string());
}

void write_images(const Eigen::MatrixXf& images,
                  const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  std::vector<char> buf(static_cast<std::size_t>(images.size()) * 4);
  std::size_t k = 0;
  for (Eigen::Index c = 0; c < images.cols(); ++c) {
    for (Eigen::Index r = 0; r < images.rows(); ++r) {
      const auto u = std::bit_cast<std::uint32_t>(images(r, c));
      for (int b = 0; b < 4; ++b) buf[k++] = static_cast<char>(u >> (8 * b));
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Eigen::MatrixXf read_images(const std::filesystem::path& path, std::size_t dim) {
  if (dim == 0) throw ConfigError("image dimension must be positive");
  const std::string bytes = read_file(path);
  if (bytes.size() % (4 * dim) != 0) {
    throw IoError(path.string() + ": size is not a multiple of " +
                  std::to_string(dim) + " float32 values");
  }
  const auto n = static_cast<Eigen::Index>(bytes.size() / (4 * dim));
  Eigen::MatrixXf images(static_cast<Eigen::Index>(dim), n);
  std::size_t k = 0;
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < images.rows(); ++r) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) {
        u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[k++]))
             << (8 * b);
      }
      images(r, c) = std::bit_cast<float>(u);
    }
  }
  return images;
}

PlantManifest read_manifest(const std::filesystem::path& path) {
  return PlantManifest::from_json(read_file(path));
}

TrainingSet make_training_set(const corpus::Corpus& corpus,
                              const Eigen::MatrixXf& images,
                              const text::Vocabulary& vocab,
                              std::size_t min_marker_run) {
  if (corpus.empty()) throw ConfigError("training set: empty corpus");
  if (images.cols() != static_cast<Eigen::Index>(corpus.size())) {
    throw ConfigError("training set: " + std::to_string(images.cols()) +
                      " images for " + std::to_string(corpus.size()) + " rows");
  }
  TrainingSet set;
  set.images = images;
  set.token_ids.reserve(corpus.size());
  for (const corpus::Row& row : corpus.rows) {
    set.token_ids.push_back(
        vocab.ids(text::tokenize(corpus::normalize(row.text), min_marker_run)));
  }
  return set;
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer \"" + std::string(name) + "\"");
}

std::string_view optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be >= 0");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (!(cond_dropout >= 0.0 && cond_dropout <= 1.0)) {
    throw ConfigError("cond_dropout must lie in [0, 1]");
  }
  if (noise_draws < 1) throw ConfigError("noise_draws must be >= 1");
  if (!(token_dropout >= 0.0 && token_dropout < 1.0)) {
    throw ConfigError("token_dropout must lie in [0, 1)");
  }
  if (!(snr_clamp >= 1.0) || !std::isfinite(snr_clamp)) {
    throw ConfigError("snr_clamp must be >= 1");
  }
}

namespace {

struct Draw {
  int t;
  bool drop;
};

constexpr std::uint64_t kTokenDrawBase = 1'000'000;

// One minibatch: assembles inputs, runs forward and (optionally) backward.
class BatchRunner {
 public:
  BatchRunner(const ToyDenoiser& model, const TrainingSet& data,
              const diffusion::NoiseSchedule& sched, double token_dropout,
              double snr_clamp)
      : model_(model), data_(data), sched_(sched),
        token_dropout_(token_dropout), snr_clamp_(snr_clamp) {
    const auto& c = model.config();
    d_ = static_cast<Eigen::Index>(c.dim);
    e_ = static_cast<Eigen::Index>(c.embed_dim);
    p_ = static_cast<Eigen::Index>(c.time_dim);
    x0_target_ = c.prediction == Prediction::kX0;
  }

  // Returns the batch loss and keeps what backward needs.
  double assemble(std::span<const std::size_t> rows, std::span<const Draw> draws,
                  std::span<const std::uint64_t> noise_seeds) {
    const auto b = static_cast<Eigen::Index>(rows.size());
    used_ids_.assign(rows.size(), {});
    input_.resize(d_ + e_ + p_, b);
    target_.resize(d_, b);
    weight_.resize(b);
    for (Eigen::Index j = 0; j < b; ++j) {
      const auto col = static_cast<std::size_t>(j);
      const auto row = static_cast<Eigen::Index>(rows[col]);
      const Draw& dr = draws[col];
      const double ab = sched_.alpha_bar_at(dr.t);
      const CounterRng rng(noise_seeds[col], 0xE5);
      for (Eigen::Index i = 0; i < d_; ++i) {
        const double eps = rng.normal(static_cast<std::uint64_t>(i));
        target_(i, j) = static_cast<float>(eps);
        input_(i, j) = static_cast<float>(std::sqrt(ab) * data_.images(i, row) +
                                          std::sqrt(1.0 - ab) * eps);
      }
      if (x0_target_) {
        target_.col(j) = data_.images.col(row);
        weight_(j) = static_cast<float>(
            std::sqrt(std::clamp(ab / (1.0 - ab), 1.0, snr_clamp_)));
      } else {
        weight_(j) = 1.0f;
      }

      std::vector<int>& ids = used_ids_[col];
      if (!dr.drop) {
        const std::vector<int>& all = data_.token_ids[rows[col]];
        for (std::size_t q = 0; q < all.size(); ++q) {
          if (token_dropout_ == 0.0 ||
              rng.uniform(kTokenDrawBase + q) >= token_dropout_) {
            ids.push_back(all[q]);
          }
        }
        if (ids.empty()) ids = all;
      }
      input_.block(d_, j, e_, 1) =
          text::encode_ids(ids, model_.embeddings()).vector.cast<float>();
      input_.block(d_ + e_, j, p_, 1) = model_.time_features(dr.t);
    }
    out_ = model_.forward(input_, &cache_);
    const Eigen::MatrixXf diff = (out_ - target_) * weight_.asDiagonal();
    return static_cast<double>(diff.squaredNorm()) /
           static_cast<double>(diff.size());
  }

  // Gradients of the last assembled batch's loss into `g` (same shapes as
  // the parameters; embedding columns of unused ids stay zero).
  void backward(ToyParams& g) {
    const ToyParams& p = model_.params();
    const auto b = out_.cols();
    const float scale = 2.0f / static_cast<float>(d_ * b);
    const Eigen::MatrixXf dout =
        scale * (out_ - target_) * weight_.cwiseProduct(weight_).asDiagonal();
    g.w2.noalias() = dout * cache_.hidden.transpose();
    g.b2 = dout.rowwise().sum();
    const Eigen::MatrixXf dh = p.w2.transpose() * dout;
    const Eigen::MatrixXf dpre = dh.binaryExpr(cache_.pre, [](float gr, float z) {
      const float s = 1.0f / (1.0f + std::exp(-z));
      return gr * s * (1.0f + z * (1.0f - s));
    });
    g.w1.noalias() = dpre * cache_.input.transpose();
    g.b1 = dpre.rowwise().sum();
    const Eigen::MatrixXf d_emb = (p.w1.middleCols(d_, e_)).transpose() * dpre;
    g.embeddings.columns.setZero(p.embeddings.columns.rows(),
                                 p.embeddings.columns.cols());
    for (Eigen::Index j = 0; j < b; ++j) {
      const auto& ids = used_ids_[static_cast<std::size_t>(j)];
      if (ids.empty()) {
        g.embeddings.columns.col(text::Vocabulary::kEmpty) += d_emb.col(j);
        continue;
      }
      const float share = 1.0f / static_cast<float>(ids.size());
      for (int id : ids) g.embeddings.columns.col(id) += share * d_emb.col(j);
    }
  }

 private:
  const ToyDenoiser& model_;
  const TrainingSet& data_;
  const diffusion::NoiseSchedule& sched_;
  double token_dropout_;
  double snr_clamp_;
  bool x0_target_ = false;
  Eigen::Index d_ = 0, e_ = 0, p_ = 0;
  Eigen::MatrixXf input_, target_, out_;
  Eigen::VectorXf weight_;
  std::vector<std::vector<int>> used_ids_;
  ToyDenoiser::Cache cache_;
};

// Parameter update rule. Adam keeps first/second moment estimates with the
// usual bias correction.
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const ToyParams& like) : cfg_(cfg) {
    if (cfg.optimizer == OptimizerKind::kAdam) {
      m_ = zeros_like(like);
      v_ = zeros_like(like);
    }
  }

  void step(ToyParams& p, const ToyParams& g) {
    const auto lr = static_cast<float>(cfg_.lr);
    if (cfg_.optimizer == OptimizerKind::kSgd) {
      p.w1 -= lr * g.w1;
      p.b1 -= lr * g.b1;
      p.w2 -= lr * g.w2;
      p.b2 -= lr * g.b2;
      p.embeddings.columns -= lr * g.embeddings.columns;
      return;
    }
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    const auto step_size = static_cast<float>(cfg_.lr * std::sqrt(c2) / c1);
    adam(p.w1, g.w1, m_.w1, v_.w1, step_size);
    adam(p.b1, g.b1, m_.b1, v_.b1, step_size);
    adam(p.w2, g.w2, m_.w2, v_.w2, step_size);
    adam(p.b2, g.b2, m_.b2, v_.b2, step_size);
    adam(p.embeddings.columns, g.embeddings.columns, m_.embeddings.columns,
         v_.embeddings.columns, step_size);
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr float kEps = 1e-8f;

  static ToyParams zeros_like(const ToyParams& p) {
    ToyParams z;
    z.w1 = Eigen::MatrixXf::Zero(p.w1.rows(), p.w1.cols());
    z.b1 = Eigen::VectorXf::Zero(p.b1.size());
    z.w2 = Eigen::MatrixXf::Zero(p.w2.rows(), p.w2.cols());
    z.b2 = Eigen::VectorXf::Zero(p.b2.size());
    z.embeddings.columns = Eigen::MatrixXf::Zero(p.embeddings.columns.rows(),
                                                 p.embeddings.columns.cols());
    return z;
  }

  template <typename M>
  static void adam(M& p, const M& g, M& m, M& v, float step_size) {
    m = static_cast<float>(kBeta1) * m + static_cast<float>(1.0 - kBeta1) * g;
    v = static_cast<float>(kBeta2) * v +
        static_cast<float>(1.0 - kBeta2) * g.cwiseProduct(g);
    p.array() -= step_size * m.array() / (v.array().sqrt() + kEps);
  }

  const TrainConfig& cfg_;
  ToyParams m_, v_;
  long long t_ = 0;
};

void check_data(const ToyDenoiser& model, const TrainingSet& data,
                const diffusion::NoiseSchedule& sched) {
  if (data.size() == 0) throw ConfigError("train: empty training set");
  if (sched.hash() != model.schedule().hash()) {
    throw MismatchError("model/schedule mismatch: training schedule differs from the model's");
  }
  if (data.images.rows() != static_cast<Eigen::Index>(model.dim()) ||
      data.images.cols() != static_cast<Eigen::Index>(data.size())) {
    throw ConfigError("train: image matrix shape does not match the model");
  }
  for (const auto& ids : data.token_ids) {
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= model.embeddings().size()) {
        throw MismatchError("model/vocab mismatch: token id " +
                            std::to_string(id) + " outside embedding table");
      }
    }
  }
}

}  // namespace

double probe_loss(const ToyDenoiser& model, const TrainingSet& data,
                  const diffusion::NoiseSchedule& sched, std::uint64_t seed,
                  double snr_clamp) {
  check_data(model, data, sched);
  const CounterRng rng(seed, 0x9B0BE);
  BatchRunner runner(model, data, sched, 0.0, snr_clamp);
  constexpr std::size_t kChunk = 128;
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, data.size() - start);
    std::vector<std::size_t> rows(n);
    std::vector<Draw> draws(n);
    std::vector<std::uint64_t> seeds(n);
    for (std::size_t j = 0; j < n; ++j) {
      rows[j] = start + j;
      draws[j] = {1 + static_cast<int>(rng.below(rows[j], static_cast<std::uint64_t>(sched.timesteps))),
                  false};
      seeds[j] = derive_seed(seed, {0x9B0BE, rows[j]});
    }
    total += runner.assemble(rows, draws, seeds) * static_cast<double>(n);
  }
  return total / static_cast<double>(data.size());
}

TrainResult train(ToyDenoiser& model, const TrainingSet& data,
                  const diffusion::NoiseSchedule& sched, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  check_data(model, data, sched);

  TrainResult result;
  const std::uint64_t probe_seed = derive_seed(cfg.seed, {0x9B0BE});
  result.initial_loss = probe_loss(model, data, sched, probe_seed, cfg.snr_clamp);

  // Every row appears noise_draws times per epoch, each with its own draw.
  const std::size_t n = data.size() * static_cast<std::size_t>(cfg.noise_draws);
  const auto batch = static_cast<std::size_t>(cfg.batch);
  std::vector<std::size_t> order(n);
  Optimizer optimizer(cfg, model.params());
  ToyParams grads;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::uint64_t epoch_seed =
        derive_seed(cfg.seed, {0xE90C, static_cast<std::uint64_t>(epoch)});
    const CounterRng rng(epoch_seed);
    for (std::size_t i = 0; i < n; ++i) order[i] = i % data.size();
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(3 * i, i)]);
    }

    BatchRunner runner(model, data, sched, cfg.token_dropout, cfg.snr_clamp);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t m = std::min(batch, n - start);
      const std::span<const std::size_t> rows(order.data() + start, m);
      std::vector<Draw> draws(m);
      std::vector<std::uint64_t> seeds(m);
      for (std::size_t j = 0; j < m; ++j) {
        const std::uint64_t pos = start + j;
        draws[j].t = 1 + static_cast<int>(rng.below(
                             3 * pos + 1, static_cast<std::uint64_t>(sched.timesteps)));
        draws[j].drop = rng.uniform(3 * pos + 2) < cfg.cond_dropout;
        seeds[j] = derive_seed(epoch_seed, {pos});
      }
      const double loss = runner.assemble(rows, draws, seeds);
      if (!std::isfinite(loss)) {
        throw NumericalError("training diverged in epoch " +
                             std::to_string(epoch + 1) + " (non-finite loss)");
      }
      epoch_total += loss * static_cast<double>(m);
      runner.backward(grads);
      optimizer.step(model.mutable_params(), grads);
    }
    const double train_loss = epoch_total / static_cast<double>(n);
    const double probe = probe_loss(model, data, sched, probe_seed, cfg.snr_clamp);
    if (!std::isfinite(train_loss) || !std::isfinite(probe)) {
      throw NumericalError("training diverged in epoch " +
                           std::to_string(epoch + 1) + " (non-finite loss)");
    }
    result.train_loss.push_back(train_loss);
    result.epoch_loss.push_back(probe);
    if (on_epoch) on_epoch(epoch + 1, train_loss, probe);
  }
  return result;
}

}  // namespace memaudit::toylab
