// Copyright 2026 The vflkdk Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"
#include "vflkdk/defenses.hpp"
#include "vflkdk/vfl.hpp"

using namespace vflkdk;

TEST(Compress, KeepsLargestMagnitudes) {
  const Matrix g{{3, -4, 1, 0}};
  EXPECT_EQ(compress(g, 0.5), (Matrix{{3, -4, 0, 0}}));
  EXPECT_EQ(compress(g, 0.3), (Matrix{{3, -4, 0, 0}}));  // ceil(1.2) = 2
  EXPECT_EQ(compress(g, 0.25), (Matrix{{0, -4, 0, 0}}));
  EXPECT_EQ(compress(g, 1.0), g);
  EXPECT_EQ(compress(Matrix{{1, -1, 1, -1}}, 0.5), (Matrix{{1, -1, 0, 0}}));
  EXPECT_THROW(compress(g, 0.0), ParameterError);
  EXPECT_THROW(compress(g, 1.5), ParameterError);
}

TEST(Ppdl, ReleaseBudgetAndValues) {
  Rng rng(3);
  const Matrix g = testutil::random_matrix(4, 5, rng);
  Rng a(1);
  const auto half = ppdl_release(g, 0.5, 0.0, 0.0, a);
  EXPECT_EQ(half.released.size(), 10u);
  EXPECT_EQ(std::set<std::size_t>(half.released.begin(), half.released.end()).size(), 10u);
  std::size_t nonzero = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double v = half.values.flat()[i];
    if (v != 0.0) {
      ++nonzero;
      EXPECT_EQ(v, g.flat()[i]);
    }
  }
  EXPECT_EQ(nonzero, 10u);
  Rng b(1);
  EXPECT_EQ(ppdl(g, 1.0, 0.0, 0.0, b), g);
  Rng c(1);
  const auto thresh = ppdl(g, 1.0, 0.8, 0.0, c);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double v = g.flat()[i];
    EXPECT_EQ(thresh.flat()[i], std::abs(v) < 0.8 ? 0.0 : v);
  }
  Rng d(1);
  EXPECT_EQ(ppdl_release(g, 0.01, 0.0, 0.0, d).released.size(), 1u);
  Rng e(1);
  EXPECT_THROW(ppdl(g, 0.0, 0.0, 0.0, e), ParameterError);
}

TEST(Discrete, EndpointsAndRounding) {
  const GradientStats s{0.0, 1.0, true};
  for (std::size_t i = 0; i <= 4; ++i) {
    EXPECT_DOUBLE_EQ(discrete_endpoint(s, 4, i), -2.0 + static_cast<double>(i));
  }
  const Matrix g{{0.4, 0.6, 5.0, -3.0, -0.5, 1.49}};
  EXPECT_EQ(discrete_sgd(g, s, 4), (Matrix{{0.0, 1.0, 2.0, -2.0, 0.0, 1.0}}));
  EXPECT_EQ(discrete_sgd(g, s, 4, OutlierPolicy::drop), (Matrix{{0.0, 1.0, 0.0, 0.0, 0.0, 1.0}}));
  const GradientStats flat{0.25, 0.0, true};
  EXPECT_EQ(discrete_sgd(g, flat, 4), Matrix(1, 6, std::vector<double>(6, 0.25)));
  EXPECT_THROW(discrete_sgd(g, GradientStats{}, 4), StateError);
  EXPECT_THROW(discrete_sgd(g, s, 0), ParameterError);
}

TEST(Discrete, Calibrate) {
  const std::vector<Matrix> packets{Matrix{{1, 2}}, Matrix{{3, 4}}};
  const auto s = calibrate(packets);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.stddev, std::sqrt(1.25));
  EXPECT_TRUE(s.calibrated);
  EXPECT_THROW(calibrate(std::vector<Matrix>{}), StateError);
  EXPECT_THROW(calibrate(std::vector<Matrix>{Matrix(0, 3)}), StateError);
}

TEST(Discrete, FirstEpochObservationThenQuantise) {
  GradientDefense d(DiscreteSgdDefense{4, Calibration::first_epoch, OutlierPolicy::clamp}, 1);
  const Matrix a{{1, 2}}, b{{3, 4}};
  EXPECT_EQ(d.apply(a), a);
  EXPECT_EQ(d.apply(b), b);
  EXPECT_FALSE(d.stats().calibrated);
  d.end_epoch(0);
  ASSERT_TRUE(d.stats().calibrated);
  EXPECT_DOUBLE_EQ(d.stats().mean, 2.5);
  const Matrix q = d.apply(Matrix{{2.6, 100.0}});
  EXPECT_DOUBLE_EQ(q(0, 0), discrete_endpoint(d.stats(), 4, 2));
  EXPECT_DOUBLE_EQ(q(0, 1), discrete_endpoint(d.stats(), 4, 4));
  d.end_epoch(1);
  EXPECT_DOUBLE_EQ(d.stats().mean, 2.5);  // frozen after the first epoch
}

TEST(Discrete, RunningCalibrationUpdatesEveryPacket) {
  GradientDefense d(DiscreteSgdDefense{4, Calibration::running, OutlierPolicy::clamp}, 1);
  d.apply(Matrix{{1, 2}});
  EXPECT_DOUBLE_EQ(d.stats().mean, 1.5);
  d.apply(Matrix{{3, 4}});
  EXPECT_DOUBLE_EQ(d.stats().mean, 2.5);
}

TEST(Noisy, LaplaceMoments) {
  Rng rng(2024);
  const double b = 0.01;
  const Matrix z(1000, 1000);
  const Matrix n = noisy(z, b, rng);
  double sum = 0.0;
  for (double v : n.flat()) sum += v;
  const double mean = sum / static_cast<double>(n.size());
  double ss = 0.0;
  for (double v : n.flat()) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n.size()));
  EXPECT_LT(std::abs(mean), 1e-4);
  EXPECT_NEAR(sd, b * std::sqrt(2.0), 0.05 * b * std::sqrt(2.0));
  Rng r2(1);
  EXPECT_EQ(noisy(z, 0.0, r2), z);
  EXPECT_THROW(noisy(z, -1.0, r2), ParameterError);
}

TEST(Noisy, RelativeScaleFollowsPacketMagnitude) {
  GradientDefense d(NoisyDefense{1.0, true}, 1);
  const Matrix zero(3, 3);
  EXPECT_EQ(d.apply(zero), zero);
  const Matrix big(3, 3, std::vector<double>(9, 100.0));
  const Matrix out = d.apply(big);
  EXPECT_GT(max_abs_difference(out, big), 1.0);
}

TEST(Defense, ValidateRejectsBadParameters) {
  EXPECT_THROW(validate(DefenseConfig{NoisyDefense{-1.0}}), ParameterError);
  EXPECT_THROW(validate(DefenseConfig{CompressDefense{0.0}}), ParameterError);
  EXPECT_THROW(validate(DefenseConfig{PpdlDefense{0.5, -1.0, 0.0}}), ParameterError);
  EXPECT_THROW(validate(DefenseConfig{DiscreteSgdDefense{0}}), ParameterError);
  EXPECT_STREQ(defense_name(DefenseConfig{DiscreteSgdDefense{}}), "discrete_sgd");
  EXPECT_STREQ(defense_name(DefenseConfig{}), "none");
}

TEST(Defense, IdentitySettingsTrainLikeNoDefense) {
  SyntheticSpec s;
  s.classes = 4;
  s.train_samples = 96;
  s.feature_dims = {3, 3};
  const auto [tr, te] = generate_synthetic(s);
  FederationConfig cfg;
  cfg.bottom_hidden = {8};
  cfg.top_hidden = {8};
  cfg.embedding_dim = 4;
  const auto targets = one_hot_labels(tr.labels, 4);
  auto run = [&](DefenseConfig d) {
    auto fed = FederationState::create(cfg, tr.feature_dims(), 4, 5, std::move(d));
    train(fed, tr, targets, 2);
    return federated_predict(fed, tr);
  };
  const Matrix base = run(NoDefense{});
  EXPECT_EQ(run(NoisyDefense{0.0}), base);
  EXPECT_EQ(run(CompressDefense{1.0}), base);
  EXPECT_EQ(run(PpdlDefense{1.0, 0.0, 0.0}), base);
  EXPECT_NE(run(NoisyDefense{0.1}), base);
}

TEST(Defense, ActivePacketUntouchedUnlessConfigured) {
  SyntheticSpec s;
  s.classes = 4;
  s.train_samples = 32;
  s.feature_dims = {2, 2};
  const auto [tr, te] = generate_synthetic(s);
  FederationConfig cfg;
  cfg.mode = SplitMode::no_split;
  std::vector<std::size_t> rows(32);
  for (std::size_t i = 0; i < 32; ++i) rows[i] = i;
  const Matrix t = one_hot_labels(tr.labels, 4).probs;
  for (bool defend : {false, true}) {
    cfg.defend_active_packet = defend;
    auto fed = FederationState::create(cfg, tr.feature_dims(), 4, 5, NoisyDefense{1.0});
    const auto f = forward_round(fed, tr, rows);
    const auto b = backward_round(fed, f, t);
    const Matrix clean = ce_softmax_grad(f.preds, t);
    EXPECT_EQ(b.packet.per_party[0] == clean, !defend);
    EXPECT_NE(b.packet.per_party[1], clean);
  }
}
