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

#include "memaudit/diffusion.hpp"

#include <cmath>
#include <string>

#include "memaudit/error.hpp"
#include "memaudit/hash.hpp"
#include "memaudit/rng.hpp"

namespace memaudit::diffusion {
namespace {

void check_timestep(int t, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.timesteps) {
    throw ConfigError("timestep " + std::to_string(t) + " outside [1, " +
                      std::to_string(sched.timesteps) + "]");
  }
}

void check_same_size(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw ConfigError(std::string(what) + ": dimension mismatch (" +
                      std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

constexpr std::uint64_t kInitialNoiseStream = 0x5A3B1E;

}  // namespace

double NoiseSchedule::alpha_bar_at(int t) const {
  if (t == 0) return 1.0;
  check_timestep(t, *this);
  return alpha_bar[static_cast<std::size_t>(t - 1)];
}

std::uint64_t NoiseSchedule::hash() const noexcept {
  Fnv1a h;
  h.update("linear");
  h.update_u64(static_cast<std::uint64_t>(timesteps));
  h.update_f64(beta_start);
  h.update_f64(beta_end);
  return h.digest();
}

NoiseSchedule make_schedule(int timesteps, double beta_start, double beta_end) {
  if (timesteps < 1) throw ConfigError("schedule: T must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.timesteps = timesteps;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.beta.resize(static_cast<std::size_t>(timesteps));
  s.alpha_bar.resize(static_cast<std::size_t>(timesteps));
  double prod = 1.0;
  for (int i = 0; i < timesteps; ++i) {
    const double frac =
        timesteps == 1 ? 0.0 : static_cast<double>(i) / (timesteps - 1);
    const double b = beta_start + (beta_end - beta_start) * frac;
    s.beta[static_cast<std::size_t>(i)] = b;
    prod *= (1.0 - b);
    s.alpha_bar[static_cast<std::size_t>(i)] = prod;
  }
  return s;
}

Vec forward_diffuse(const Vec& x0, int t, const Vec& eps,
                    const NoiseSchedule& sched) {
  check_same_size(x0.size(), eps.size(), "forward_diffuse");
  const double ab = sched.alpha_bar_at(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Vec predict_x0(const Vec& x_t, const Vec& eps_hat, int t,
               const NoiseSchedule& sched) {
  check_same_size(x_t.size(), eps_hat.size(), "predict_x0");
  const double ab = sched.alpha_bar_at(t);
  if (!(ab > 0.0)) {
    throw NumericalError("predict_x0: alpha_bar_" + std::to_string(t) +
                         " is not positive");
  }
  return (x_t - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
}

Vec reverse_step(const Vec& x_t, const Vec& eps_hat, int t, int t_prev,
                 const NoiseSchedule& sched, std::optional<double> clip_x0) {
  check_same_size(x_t.size(), eps_hat.size(), "reverse_step");
  return reverse_step_batch(x_t, eps_hat, t, t_prev, sched, clip_x0);
}

Mat reverse_step_batch(const Mat& x_t, const Mat& eps_hat, int t, int t_prev,
                       const NoiseSchedule& sched, std::optional<double> clip_x0) {
  check_timestep(t, sched);
  check_same_size(x_t.rows(), eps_hat.rows(), "reverse_step_batch");
  check_same_size(x_t.cols(), eps_hat.cols(), "reverse_step_batch");
  if (t_prev < 0 || t_prev >= t) {
    throw ConfigError("reverse_step: t_prev must lie in [0, t)");
  }
  if (clip_x0 && !(*clip_x0 > 0.0)) {
    throw ConfigError("reverse_step: clip_x0 must be positive");
  }
  const double ab = sched.alpha_bar_at(t);
  if (!(ab > 0.0)) {
    throw NumericalError("reverse_step: alpha_bar_" + std::to_string(t) +
                         " is not positive");
  }
  const double ab_prev = sched.alpha_bar_at(t_prev);
  Mat x0_hat = (x_t - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
  if (!clip_x0) {
    if (t_prev == 0) return x0_hat;
    return std::sqrt(ab_prev) * x0_hat + std::sqrt(1.0 - ab_prev) * eps_hat;
  }
  x0_hat = x0_hat.cwiseMax(-*clip_x0).cwiseMin(*clip_x0);
  if (t_prev == 0) return x0_hat;
  const Mat eps = (x_t - std::sqrt(ab) * x0_hat) / std::sqrt(1.0 - ab);
  return std::sqrt(ab_prev) * x0_hat + std::sqrt(1.0 - ab_prev) * eps;
}

std::vector<int> strided_timesteps(int timesteps, int steps) {
  if (steps < 1 || steps > timesteps) {
    throw ConfigError("sampler: steps must lie in [1, T] (steps=" +
                      std::to_string(steps) + ", T=" + std::to_string(timesteps) +
                      ")");
  }
  std::vector<int> ts(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    const auto v = (static_cast<std::int64_t>(k) + 1) * timesteps / steps;
    ts[static_cast<std::size_t>(steps - 1 - k)] = static_cast<int>(v);
  }
  return ts;
}

Mat NoisePredictor::predict_batch(const Mat& x, const Mat& e, int t) const {
  check_same_size(x.cols(), e.cols(), "predict_batch");
  Mat out(static_cast<Eigen::Index>(dim()), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    out.col(j) = predict(x.col(j), e.col(j), t);
  }
  return out;
}

Vec initial_noise(std::size_t dim, std::uint64_t seed) {
  Vec x(static_cast<Eigen::Index>(dim));
  CounterRng(seed, kInitialNoiseStream).fill_normal({x.data(), dim});
  return x;
}

SampleResult sample(const NoisePredictor& predictor, const Vec& embedding,
                    const SamplerConfig& cfg, const NoiseSchedule& sched) {
  const std::vector<int> ts = strided_timesteps(sched.timesteps, cfg.steps);
  SampleResult result;
  Vec x = initial_noise(predictor.dim(), cfg.seed);
  result.trajectory.reserve(ts.size() + 1);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const int t = ts[k];
    const int t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
    result.trajectory.push_back({x, t});
    const Vec eps_hat = predictor.predict(x, embedding, t);
    if (eps_hat.size() != x.size()) {
      throw ConfigError("predictor returned dimension " +
                        std::to_string(eps_hat.size()) + ", expected " +
                        std::to_string(x.size()));
    }
    x = reverse_step(x, eps_hat, t, t_prev, sched, cfg.clip_x0);
  }
  result.trajectory.push_back({x, 0});
  result.x0 = std::move(x);
  return result;
}

Mat sample_batch(const NoisePredictor& predictor, const Vec& embedding,
                 std::span<const std::uint64_t> seeds, int steps,
                 const NoiseSchedule& sched, std::optional<double> clip_x0) {
  const std::vector<int> ts = strided_timesteps(sched.timesteps, steps);
  const auto n = static_cast<Eigen::Index>(seeds.size());
  Mat x(static_cast<Eigen::Index>(predictor.dim()), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    x.col(j) = initial_noise(predictor.dim(), seeds[static_cast<std::size_t>(j)]);
  }
  const Mat e = embedding.replicate(1, n);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const int t = ts[k];
    const int t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
    const Mat eps_hat = predictor.predict_batch(x, e, t);
    if (eps_hat.rows() != x.rows() || eps_hat.cols() != x.cols()) {
      throw ConfigError("predictor returned a batch of the wrong shape");
    }
    x = reverse_step_batch(x, eps_hat, t, t_prev, sched, clip_x0);
  }
  return x;
}

}  // namespace memaudit::diffusion
