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
#include <string_view>

#include <Eigen/Core>

#include "memaudit/diffusion.hpp"
#include "memaudit/text.hpp"

namespace memaudit::toylab {

/// What the network output represents. kX0 outputs are converted to the
/// implied noise with the model's schedule, so predict() always returns eps.
enum class Prediction { kEps, kX0 };
Prediction parse_prediction(std::string_view name);
std::string_view prediction_name(Prediction p);

struct ToyDenoiserConfig {
  std::size_t dim = 256;        // D, flattened 16x16 image
  std::size_t embed_dim = 64;   // E
  std::size_t hidden = 256;     // H
  std::size_t time_dim = 32;    // sinusoidal timestep features (even)
  std::size_t vocab_size = 2;   // rows of the jointly trained embedding table
  Prediction prediction = Prediction::kX0;
  int timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  std::size_t input_dim() const noexcept { return dim + embed_dim + time_dim; }
  diffusion::NoiseSchedule schedule() const;
  void validate() const;
};

/// Trainable parameters. Stored in float32, the on-disk precision.
struct ToyParams {
  Eigen::MatrixXf w1;  // H x (D + E + P)
  Eigen::VectorXf b1;  // H
  Eigen::MatrixXf w2;  // D x H
  Eigen::VectorXf b2;  // D
  text::EmbeddingTable embeddings;
};

/// Two-layer perceptron f(x_t, e, t) = W2 silu(W1 [x_t; e; tau(t)] + b1) + b2,
/// read as eps directly or as x0 depending on config.prediction.
class ToyDenoiser final : public diffusion::NoisePredictor {
 public:
  ToyDenoiser(const ToyDenoiserConfig& config, ToyParams params);

  /// Seeded initialization; the embedding table follows
  /// EmbeddingTable::random with the same seed.
  static ToyDenoiser initialize(const ToyDenoiserConfig& config,
                                std::uint64_t seed);

  std::size_t dim() const override { return config_.dim; }
  std::size_t embed_dim() const override { return config_.embed_dim; }
  diffusion::Vec predict(const diffusion::Vec& x, const diffusion::Vec& e,
                         int t) const override;
  diffusion::Mat predict_batch(const diffusion::Mat& x, const diffusion::Mat& e,
                               int t) const override;

  const ToyDenoiserConfig& config() const noexcept { return config_; }
  const ToyParams& params() const noexcept { return params_; }
  ToyParams& mutable_params() noexcept { return params_; }
  const text::EmbeddingTable& embeddings() const noexcept {
    return params_.embeddings;
  }

  Eigen::VectorXf time_features(int t) const;

  /// Activations kept for the backward pass.
  struct Cache {
    Eigen::MatrixXf input;
    Eigen::MatrixXf pre;
    Eigen::MatrixXf hidden;
  };
  /// Raw network output; `input` columns are [x_t; e; tau(t)].
  Eigen::MatrixXf forward(const Eigen::MatrixXf& input, Cache* cache) const;

  const diffusion::NoiseSchedule& schedule() const noexcept { return sched_; }

 private:
  ToyDenoiserConfig config_;
  ToyParams params_;
  diffusion::NoiseSchedule sched_;
};

/// eps(x, e, t) = W x + U e. Fixed seeded weights, never trained; its
/// text-conditional noise U (e_p - e_empty) is known in closed form.
class LinearOracleDenoiser final : public diffusion::NoisePredictor {
 public:
  LinearOracleDenoiser(Eigen::MatrixXd w, Eigen::MatrixXd u);
  static LinearOracleDenoiser random(std::size_t dim, std::size_t embed_dim,
                                     std::uint64_t seed);

  std::size_t dim() const override { return static_cast<std::size_t>(w_.rows()); }
  std::size_t embed_dim() const override {
    return static_cast<std::size_t>(u_.cols());
  }
  diffusion::Vec predict(const diffusion::Vec& x, const diffusion::Vec& e,
                         int t) const override;
  diffusion::Mat predict_batch(const diffusion::Mat& x, const diffusion::Mat& e,
                               int t) const override;

  const Eigen::MatrixXd& w() const noexcept { return w_; }
  const Eigen::MatrixXd& u() const noexcept { return u_; }

 private:
  Eigen::MatrixXd w_;
  Eigen::MatrixXd u_;
};

}  // namespace memaudit::toylab
