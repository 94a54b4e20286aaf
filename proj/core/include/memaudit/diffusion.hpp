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
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace memaudit::diffusion {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Linear beta schedule with its cumulative alpha products. Timesteps are
/// 1-based; alpha_bar(0) is defined as 1.
struct NoiseSchedule {
  int timesteps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> beta;       // beta[t-1] = beta_t
  std::vector<double> alpha_bar;  // alpha_bar[t-1] = prod_{i<=t} (1 - beta_i)

  double alpha_bar_at(int t) const;
  std::uint64_t hash() const noexcept;
};

NoiseSchedule make_schedule(int timesteps, double beta_start, double beta_end);

/// sqrt(ab_t) x0 + sqrt(1 - ab_t) eps
Vec forward_diffuse(const Vec& x0, int t, const Vec& eps,
                    const NoiseSchedule& sched);

/// (x_t - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t)
Vec predict_x0(const Vec& x_t, const Vec& eps_hat, int t,
               const NoiseSchedule& sched);

/// Deterministic update to `t_prev` (< t): re-noise the x0 estimate with the
/// predicted noise at level ab_{t_prev}. No fresh noise is injected. With
/// `clip_x0 = c` the x0 estimate is clamped to [-c, c] and the noise
/// re-derived from the clamped estimate before re-noising.
Vec reverse_step(const Vec& x_t, const Vec& eps_hat, int t, int t_prev,
                 const NoiseSchedule& sched,
                 std::optional<double> clip_x0 = std::nullopt);
inline Vec reverse_step(const Vec& x_t, const Vec& eps_hat, int t,
                        const NoiseSchedule& sched) {
  return reverse_step(x_t, eps_hat, t, t - 1, sched);
}

/// Column-wise reverse_step for a batch sharing one timestep.
Mat reverse_step_batch(const Mat& x_t, const Mat& eps_hat, int t, int t_prev,
                       const NoiseSchedule& sched,
                       std::optional<double> clip_x0 = std::nullopt);

/// Evenly strided inference timesteps, descending from T. With steps == T
/// this is T, T-1, ..., 1.
std::vector<int> strided_timesteps(int timesteps, int steps);

/// eps_theta(x_t, e, t). Implementations must be deterministic and safe to
/// call concurrently through a const reference.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;

  virtual std::size_t dim() const = 0;
  virtual std::size_t embed_dim() const = 0;
  virtual Vec predict(const Vec& x, const Vec& e, int t) const = 0;

  /// Column j of the result is predict(x.col(j), e.col(j), t).
  virtual Mat predict_batch(const Mat& x, const Mat& e, int t) const;
};

struct SamplerConfig {
  int steps = 50;
  std::uint64_t seed = 0;
  std::optional<double> clip_x0;
};

struct LatentState {
  Vec x;
  int t = 0;
};

struct SampleResult {
  Vec x0;
  /// (T, x_T) first, (0, x0) last.
  std::vector<LatentState> trajectory;
};

/// Seeded standard normal x_T of dimension `dim`.
Vec initial_noise(std::size_t dim, std::uint64_t seed);

SampleResult sample(const NoisePredictor& predictor, const Vec& embedding,
                    const SamplerConfig& cfg, const NoiseSchedule& sched);

/// One generation per seed, run in lockstep; column j is the x0 estimate
/// for seeds[j]. Matches sample(...).x0 column for column.
Mat sample_batch(const NoisePredictor& predictor, const Vec& embedding,
                 std::span<const std::uint64_t> seeds, int steps,
                 const NoiseSchedule& sched,
                 std::optional<double> clip_x0 = std::nullopt);

}  // namespace memaudit::diffusion
