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

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "memaudit/diffusion.hpp"
#include "memaudit/error.hpp"
#include "property.hpp"

namespace memaudit::diffusion {
namespace {

// Returns the exact noise that maps x_t back to a fixed x0.
class OraclePredictor : public NoisePredictor {
 public:
  OraclePredictor(Vec x0, const NoiseSchedule& sched) : x0_(std::move(x0)), sched_(sched) {}
  std::size_t dim() const override { return static_cast<std::size_t>(x0_.size()); }
  std::size_t embed_dim() const override { return 1; }
  Vec predict(const Vec& x, const Vec&, int t) const override {
    const double ab = sched_.alpha_bar_at(t);
    return (x - std::sqrt(ab) * x0_) / std::sqrt(1.0 - ab);
  }

 private:
  Vec x0_;
  const NoiseSchedule& sched_;
};

Vec random_vec(testkit::Gen& g, Eigen::Index n, double scale) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = g.real_in(-scale, scale);
  return v;
}

TEST(Schedule, ReferenceAlphaBar) {
  const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
  EXPECT_DOUBLE_EQ(s.alpha_bar_at(0), 1.0);
  EXPECT_NEAR(s.alpha_bar_at(1), 0.9999, 1e-15);
  EXPECT_NEAR(s.alpha_bar_at(500), 0.07858724288177824, 1e-14);
  EXPECT_NEAR(s.alpha_bar_at(1000), 4.035829765375676e-05, 1e-16);
  EXPECT_DOUBLE_EQ(s.beta.front(), 1e-4);
  EXPECT_DOUBLE_EQ(s.beta.back(), 0.02);
}

TEST(Schedule, StrictlyDecreasingForRandomPairs) {
  testkit::for_all(100, 21, [](testkit::Gen& g) {
    const int T = static_cast<int>(g.int_in(2, 2000));
    const double b0 = g.real_in(1e-5, 0.01);
    const double b1 = g.real_in(b0, 0.05);
    const NoiseSchedule s = make_schedule(T, b0, b1);
    const int t = static_cast<int>(g.int_in(0, T - 1));
    const int u = static_cast<int>(g.int_in(t + 1, T));
    EXPECT_GT(s.alpha_bar_at(t), s.alpha_bar_at(u)) << "T=" << T << " t=" << t << " u=" << u;
    EXPECT_GT(s.alpha_bar_at(T), 0.0);
    EXPECT_LT(s.alpha_bar_at(1), 1.0);
  });
}

TEST(Schedule, ConstantBetaGivesGeometricAlphaBar) {
  const NoiseSchedule s = make_schedule(10, 0.1, 0.1);
  for (int t = 1; t <= 10; ++t) EXPECT_NEAR(s.alpha_bar_at(t), std::pow(0.9, t), 1e-15);
}

TEST(Schedule, ContractErrors) {
  EXPECT_THROW(make_schedule(0, 1e-4, 0.02), ConfigError);
  EXPECT_THROW(make_schedule(10, 0.0, 0.02), ConfigError);
  EXPECT_THROW(make_schedule(10, 0.03, 0.02), ConfigError);
  EXPECT_THROW(make_schedule(10, 1e-4, 1.0), ConfigError);
  const NoiseSchedule s = make_schedule(10, 1e-4, 0.02);
  EXPECT_THROW(s.alpha_bar_at(11), ConfigError);
  EXPECT_THROW(s.alpha_bar_at(-1), ConfigError);
}

TEST(Schedule, HashTracksParameters) {
  EXPECT_EQ(make_schedule(1000, 1e-4, 0.02).hash(), make_schedule(1000, 1e-4, 0.02).hash());
  EXPECT_NE(make_schedule(1000, 1e-4, 0.02).hash(), make_schedule(999, 1e-4, 0.02).hash());
  EXPECT_NE(make_schedule(1000, 1e-4, 0.02).hash(), make_schedule(1000, 1e-4, 0.021).hash());
}

TEST(ForwardDiffuse, PredictX0InvertsItAtEveryTimestep) {
  const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
  testkit::Gen g(22);
  const Vec x0 = random_vec(g, 16, 1.0);
  const Vec eps = random_vec(g, 16, 3.0);
  for (int t = 1; t <= s.timesteps; ++t) {
    const Vec back = predict_x0(forward_diffuse(x0, t, eps, s), eps, t, s);
    ASSERT_LE((back - x0).cwiseAbs().maxCoeff(), 1e-6) << "t=" << t;
  }
}

TEST(ForwardDiffuse, IdentityOnRandomInputs) {
  const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
  testkit::for_all(200, 23, [&](testkit::Gen& g) {
    const auto n = static_cast<Eigen::Index>(g.int_in(1, 32));
    const Vec x0 = random_vec(g, n, 1.0);
    const Vec eps = random_vec(g, n, 4.0);
    const int t = static_cast<int>(g.int_in(1, 1000));
    const Vec back = predict_x0(forward_diffuse(x0, t, eps, s), eps, t, s);
    EXPECT_LE((back - x0).cwiseAbs().maxCoeff(), 1e-6);
  });
}

TEST(ForwardDiffuse, DimensionMismatch) {
  const NoiseSchedule s = make_schedule(10, 1e-4, 0.02);
  EXPECT_THROW(forward_diffuse(Vec::Zero(3), 1, Vec::Zero(4), s), ConfigError);
  EXPECT_THROW(predict_x0(Vec::Zero(3), Vec::Zero(2), 1, s), ConfigError);
}

TEST(ReverseStep, MatchesReferenceValue) {
  const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
  const Vec x = Vec::Constant(1, 0.3);
  const Vec eps = Vec::Constant(1, -0.7);
  EXPECT_NEAR(reverse_step(x, eps, 980, 960, s)(0), 0.5165721624010019, 1e-12);
  EXPECT_NEAR(reverse_step(x, eps, 980, 960, s, 1.0)(0), 0.30167635366638995, 1e-12);
}

TEST(ReverseStep, FinalStepReturnsX0Estimate) {
  const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
  const Vec x = Vec::Constant(2, 0.5);
  const Vec eps = Vec::Constant(2, 0.1);
  EXPECT_EQ(reverse_step(x, eps, 20, 0, s), predict_x0(x, eps, 20, s));
  EXPECT_EQ(reverse_step(x, eps, 1, s), predict_x0(x, eps, 1, s));
}

TEST(ReverseStep, ClipBoundsFinalEstimate) {
  const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
  testkit::for_all(100, 24, [&](testkit::Gen& g) {
    const Vec x = random_vec(g, 8, 5.0);
    const Vec eps = random_vec(g, 8, 5.0);
    const double c = g.real_in(0.1, 2.0);
    const int t = static_cast<int>(g.int_in(1, 1000));
    EXPECT_LE(reverse_step(x, eps, t, 0, s, c).cwiseAbs().maxCoeff(), c);
  });
}

TEST(ReverseStep, ClipIsIdentityWhenEstimateIsInside) {
  const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
  const Vec x0 = Vec::Constant(3, 0.25);
  const Vec eps = Vec::Constant(3, -0.4);
  const Vec xt = forward_diffuse(x0, 300, eps, s);
  const Vec plain = reverse_step(xt, eps, 300, 200, s);
  const Vec clipped = reverse_step(xt, eps, 300, 200, s, 1.0);
  EXPECT_LE((plain - clipped).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ReverseStep, ContractErrors) {
  const NoiseSchedule s = make_schedule(10, 1e-4, 0.02);
  const Vec v = Vec::Zero(2);
  EXPECT_THROW(reverse_step(v, v, 5, 5, s), ConfigError);
  EXPECT_THROW(reverse_step(v, v, 5, -1, s), ConfigError);
  EXPECT_THROW(reverse_step(v, v, 11, 0, s), ConfigError);
  EXPECT_THROW(reverse_step(v, v, 5, 0, s, 0.0), ConfigError);
  EXPECT_THROW(reverse_step(v, Vec::Zero(3), 5, 0, s), ConfigError);
}

TEST(StridedTimesteps, Examples) {
  EXPECT_EQ(strided_timesteps(1000, 4), (std::vector<int>{1000, 750, 500, 250}));
  EXPECT_EQ(strided_timesteps(10, 1), (std::vector<int>{10}));
  EXPECT_THROW(strided_timesteps(10, 0), ConfigError);
  EXPECT_THROW(strided_timesteps(10, 11), ConfigError);
}

TEST(StridedTimesteps, FullStepsVisitEveryTimestep) {
  const auto ts = strided_timesteps(37, 37);
  ASSERT_EQ(ts.size(), 37u);
  for (int k = 0; k < 37; ++k) EXPECT_EQ(ts[static_cast<std::size_t>(k)], 37 - k);
}

TEST(StridedTimesteps, StrictlyDescendingFromT) {
  testkit::for_all(200, 25, [](testkit::Gen& g) {
    const int T = static_cast<int>(g.int_in(1, 1000));
    const int steps = static_cast<int>(g.int_in(1, T));
    const auto ts = strided_timesteps(T, steps);
    ASSERT_EQ(ts.size(), static_cast<std::size_t>(steps));
    EXPECT_EQ(ts.front(), T);
    EXPECT_GE(ts.back(), 1);
    for (std::size_t i = 1; i < ts.size(); ++i) EXPECT_LT(ts[i], ts[i - 1]);
  });
}

TEST(Sample, OracleRecoversX0) {
  const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
  testkit::for_all(20, 26, [&](testkit::Gen& g) {
    const Vec x0 = random_vec(g, 12, 1.0);
    const OraclePredictor oracle(x0, s);
    const int steps = static_cast<int>(g.pick(std::vector<std::int64_t>{1, 10, 50, 1000}));
    SamplerConfig cfg;
    cfg.steps = steps;
    cfg.seed = g.next_u64();
    const SampleResult r = sample(oracle, Vec::Zero(1), cfg, s);
    EXPECT_LE((r.x0 - x0).cwiseAbs().maxCoeff(), 1e-6) << "steps=" << steps;
    ASSERT_EQ(r.trajectory.size(), static_cast<std::size_t>(steps) + 1);
    EXPECT_EQ(r.trajectory.front().t, 1000);
    EXPECT_EQ(r.trajectory.back().t, 0);
    EXPECT_EQ(r.trajectory.front().x, initial_noise(12, cfg.seed));
  });
}

TEST(Sample, BatchMatchesSingle) {
  const NoiseSchedule s = make_schedule(200, 1e-4, 0.02);
  testkit::Gen g(27);
  const OraclePredictor oracle(random_vec(g, 5, 1.0), s);
  const std::vector<std::uint64_t> seeds = {3, 1, 4, 1, 5};
  const Mat batch = sample_batch(oracle, Vec::Zero(1), seeds, 20, s, 0.9);
  for (std::size_t j = 0; j < seeds.size(); ++j) {
    const SampleResult r = sample(oracle, Vec::Zero(1), {20, seeds[j], 0.9}, s);
    EXPECT_EQ(batch.col(static_cast<Eigen::Index>(j)), r.x0);
  }
}

TEST(Sample, SeedDeterminesInitialNoise) {
  EXPECT_EQ(initial_noise(8, 1), initial_noise(8, 1));
  EXPECT_NE(initial_noise(8, 1), initial_noise(8, 2));
}

}  // namespace
}  // namespace memaudit::diffusion
