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

#include "memaudit/toy_denoiser.hpp"

#include <cmath>
#include <string>

#include "memaudit/error.hpp"
#include "memaudit/rng.hpp"

namespace memaudit::toylab {
namespace {

Eigen::MatrixXf random_matrix(Eigen::Index rows, Eigen::Index cols, double scale,
                              const CounterRng& rng) {
  Eigen::MatrixXf m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      m(r, c) = static_cast<float>(
          scale * rng.normal(static_cast<std::uint64_t>(c * rows + r)));
    }
  }
  return m;
}

Eigen::MatrixXd random_matrix_d(Eigen::Index rows, Eigen::Index cols,
                                double scale, const CounterRng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      m(r, c) = scale * rng.normal(static_cast<std::uint64_t>(c * rows + r));
    }
  }
  return m;
}

}  // namespace

Prediction parse_prediction(std::string_view name) {
  if (name == "eps") return Prediction::kEps;
  if (name == "x0") return Prediction::kX0;
  throw ConfigError("unknown prediction target \"" + std::string(name) + "\"");
}

std::string_view prediction_name(Prediction p) {
  return p == Prediction::kX0 ? "x0" : "eps";
}

diffusion::NoiseSchedule ToyDenoiserConfig::schedule() const {
  return diffusion::make_schedule(timesteps, beta_start, beta_end);
}

void ToyDenoiserConfig::validate() const {
  if (dim == 0 || embed_dim == 0 || hidden == 0) {
    throw ConfigError("toy denoiser: dimensions must be positive");
  }
  if (time_dim == 0 || time_dim % 2 != 0) {
    throw ConfigError("toy denoiser: time_dim must be a positive even number");
  }
  if (vocab_size < 2) throw ConfigError("toy denoiser: vocab_size must be >= 2");
  (void)schedule();
}

ToyDenoiser::ToyDenoiser(const ToyDenoiserConfig& config, ToyParams params)
    : config_(config), params_(std::move(params)), sched_(config.schedule()) {
  config_.validate();
  const auto h = static_cast<Eigen::Index>(config_.hidden);
  const auto d = static_cast<Eigen::Index>(config_.dim);
  const auto in = static_cast<Eigen::Index>(config_.input_dim());
  if (params_.w1.rows() != h || params_.w1.cols() != in ||
      params_.b1.size() != h || params_.w2.rows() != d ||
      params_.w2.cols() != h || params_.b2.size() != d ||
      params_.embeddings.dim() != config_.embed_dim ||
      params_.embeddings.size() != config_.vocab_size) {
    throw ConfigError("toy denoiser: parameter shapes do not match config");
  }
}

ToyDenoiser ToyDenoiser::initialize(const ToyDenoiserConfig& config,
                                    std::uint64_t seed) {
  config.validate();
  const auto h = static_cast<Eigen::Index>(config.hidden);
  const auto d = static_cast<Eigen::Index>(config.dim);
  const auto in = static_cast<Eigen::Index>(config.input_dim());
  ToyParams p;
  p.w1 = random_matrix(h, in, 1.0 / std::sqrt(static_cast<double>(in)),
                       CounterRng(seed, 0x11));
  p.b1 = Eigen::VectorXf::Zero(h);
  p.w2 = random_matrix(d, h, 1.0 / std::sqrt(static_cast<double>(h)),
                       CounterRng(seed, 0x22));
  p.b2 = Eigen::VectorXf::Zero(d);
  p.embeddings =
      text::EmbeddingTable::random(config.vocab_size, config.embed_dim, seed);
  return ToyDenoiser(config, std::move(p));
}

Eigen::VectorXf ToyDenoiser::time_features(int t) const {
  const std::size_t half = config_.time_dim / 2;
  Eigen::VectorXf f(static_cast<Eigen::Index>(config_.time_dim));
  for (std::size_t k = 0; k < half; ++k) {
    const double freq =
        std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(half));
    const double a = static_cast<double>(t) * freq;
    f(static_cast<Eigen::Index>(k)) = static_cast<float>(std::sin(a));
    f(static_cast<Eigen::Index>(k + half)) = static_cast<float>(std::cos(a));
  }
  return f;
}

Eigen::MatrixXf ToyDenoiser::forward(const Eigen::MatrixXf& input,
                                     Cache* cache) const {
  Eigen::MatrixXf pre = params_.w1 * input;
  pre.colwise() += params_.b1;
  Eigen::MatrixXf hidden =
      pre.unaryExpr([](float z) { return z / (1.0f + std::exp(-z)); });
  Eigen::MatrixXf out = params_.w2 * hidden;
  out.colwise() += params_.b2;
  if (cache) {
    cache->input = input;
    cache->pre = std::move(pre);
    cache->hidden = std::move(hidden);
  }
  return out;
}

diffusion::Vec ToyDenoiser::predict(const diffusion::Vec& x,
                                    const diffusion::Vec& e, int t) const {
  return predict_batch(x, e, t).col(0);
}

diffusion::Mat ToyDenoiser::predict_batch(const diffusion::Mat& x,
                                          const diffusion::Mat& e, int t) const {
  const auto d = static_cast<Eigen::Index>(config_.dim);
  const auto ed = static_cast<Eigen::Index>(config_.embed_dim);
  const auto p = static_cast<Eigen::Index>(config_.time_dim);
  if (x.rows() != d || e.rows() != ed || x.cols() != e.cols()) {
    throw ConfigError("toy denoiser: input shape mismatch");
  }
  Eigen::MatrixXf input(d + ed + p, x.cols());
  input.topRows(d) = x.cast<float>();
  input.middleRows(d, ed) = e.cast<float>();
  input.bottomRows(p) = time_features(t).replicate(1, x.cols());
  Eigen::MatrixXd f = forward(input, nullptr).cast<double>();
  if (config_.prediction == Prediction::kEps) return f;
  if (t < 1) throw ConfigError("toy denoiser: x0 prediction needs t >= 1");
  const double ab = sched_.alpha_bar_at(t);
  return (x - std::sqrt(ab) * f) / std::sqrt(1.0 - ab);
}

LinearOracleDenoiser::LinearOracleDenoiser(Eigen::MatrixXd w, Eigen::MatrixXd u)
    : w_(std::move(w)), u_(std::move(u)) {
  if (w_.rows() != w_.cols() || u_.rows() != w_.rows()) {
    throw ConfigError("linear oracle: W must be DxD and U must be DxE");
  }
}

LinearOracleDenoiser LinearOracleDenoiser::random(std::size_t dim,
                                                  std::size_t embed_dim,
                                                  std::uint64_t seed) {
  const auto d = static_cast<Eigen::Index>(dim);
  const auto e = static_cast<Eigen::Index>(embed_dim);
  return LinearOracleDenoiser(
      random_matrix_d(d, d, 1.0 / std::sqrt(static_cast<double>(dim)),
                      CounterRng(seed, 0x33)),
      random_matrix_d(d, e, 1.0 / std::sqrt(static_cast<double>(embed_dim)),
                      CounterRng(seed, 0x44)));
}

diffusion::Vec LinearOracleDenoiser::predict(const diffusion::Vec& x,
                                             const diffusion::Vec& e,
                                             int /*t*/) const {
  if (x.size() != w_.cols() || e.size() != u_.cols()) {
    throw ConfigError("linear oracle: input shape mismatch");
  }
  return w_ * x + u_ * e;
}

diffusion::Mat LinearOracleDenoiser::predict_batch(const diffusion::Mat& x,
                                                   const diffusion::Mat& e,
                                                   int /*t*/) const {
  if (x.rows() != w_.cols() || e.rows() != u_.cols() || x.cols() != e.cols()) {
    throw ConfigError("linear oracle: input shape mismatch");
  }
  return w_ * x + u_ * e;
}

}  // namespace memaudit::toylab
