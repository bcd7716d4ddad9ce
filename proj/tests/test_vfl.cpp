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

#include <sstream>

#include "test_util.hpp"
#include "vflkdk/attacks.hpp"
#include "vflkdk/transcript_io.hpp"
#include "vflkdk/vfl.hpp"

using namespace vflkdk;

namespace {

VerticalDataset small_data(std::size_t n = 64, std::uint64_t seed = 3) {
  SyntheticSpec s;
  s.classes = 4;
  s.train_samples = n;
  s.test_samples = 8;
  s.feature_dims = {3, 2};
  s.seed = seed;
  return generate_synthetic(s).first;
}

FederationConfig small_config(SplitMode mode) {
  FederationConfig c;
  c.mode = mode;
  c.bottom_hidden = {6};
  c.embedding_dim = 4;
  c.top_hidden = {5};
  c.batch_size = 16;
  c.bottom_optimizer = {OptimizerKind::sgd, 0.1, {}, {}};
  c.top_optimizer = c.bottom_optimizer;
  return c;
}

std::vector<double> parameters(const DenseNet& net) {
  std::vector<double> v;
  for (const auto& l : net.layers()) {
    v.insert(v.end(), l.weight.values().begin(), l.weight.values().end());
    v.insert(v.end(), l.bias.begin(), l.bias.end());
  }
  return v;
}

std::vector<double> parameters(const FederationState& f) {
  std::vector<double> v;
  for (const auto& p : f.parties) {
    const auto b = parameters(p.bottom);
    v.insert(v.end(), b.begin(), b.end());
  }
  if (f.top) {
    const auto t = parameters(*f.top);
    v.insert(v.end(), t.begin(), t.end());
  }
  return v;
}

DenseNet identity_net(std::size_t n) {
  return DenseNet({DenseLayer{Matrix::identity(n), std::vector<double>(n, 0.0),
                              Activation::identity}});
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = i;
  return r;
}

}  // namespace

TEST(Federation, ShapesPerMode) {
  const auto d = small_data();
  const auto dims = d.feature_dims();
  auto split = FederationState::create(small_config(SplitMode::split), dims, 4, 1);
  EXPECT_EQ(split.parties[0].bottom.output_dim(), 4u);
  EXPECT_EQ(split.top->input_dim(), 8u);
  auto ns = FederationState::create(small_config(SplitMode::no_split), dims, 4, 1);
  EXPECT_FALSE(ns.top.has_value());
  EXPECT_EQ(ns.parties[1].bottom.output_dim(), 4u);
  EXPECT_THROW(FederationState::create(small_config(SplitMode::split), {}, 4, 1), ShapeError);
}

TEST(Federation, IdentityChainReproducesFeatures) {
  VerticalDataset d{4, {Matrix{{1, 2}, {3, 4}}, Matrix{{5, 6}, {7, 8}}}, {0, 1}, Split::train};
  auto cfg = small_config(SplitMode::split);
  cfg.embedding_dim = 2;
  const std::vector<std::size_t> dims{2, 2};
  auto fed = FederationState::create(cfg, dims, 4, 1);
  fed.parties[0].bottom = identity_net(2);
  fed.parties[1].bottom = identity_net(2);
  fed.top = identity_net(4);
  const auto f = forward_round(fed, d, all_rows(2));
  EXPECT_EQ(f.preds, d.joint_features());
  EXPECT_EQ(federated_predict(fed, d), d.joint_features());
}

TEST(Federation, NoSplitSumsBottomLogits) {
  const auto d = small_data();
  auto fed = FederationState::create(small_config(SplitMode::no_split), d.feature_dims(), 4, 2);
  const auto f = forward_round(fed, d, all_rows(d.sample_count()));
  const Matrix expect = predict(fed.parties[0].bottom, d.party_features[0]) +
                        predict(fed.parties[1].bottom, d.party_features[1]);
  EXPECT_LT(max_abs_difference(f.preds, expect), 1e-15);
}

TEST(Federation, NoSplitPacketsHaveOneNegativePerRow) {
  const auto d = small_data();
  auto fed = FederationState::create(small_config(SplitMode::no_split), d.feature_dims(), 4, 2);
  const auto rows = all_rows(d.sample_count());
  const auto f = forward_round(fed, d, rows);
  const auto b = backward_round(fed, f, one_hot_labels(d.labels, 4).probs);
  for (std::size_t p = 0; p < 2; ++p) {
    const Matrix& g = b.packet.per_party[p];
    for (std::size_t i = 0; i < g.rows(); ++i) {
      std::size_t neg = 0;
      for (double v : g.row(i)) neg += v < 0.0;
      EXPECT_EQ(neg, 1u);
      EXPECT_LT(g(i, d.labels[i]), 0.0);
    }
  }
}

TEST(Federation, SplitMatchesBlockDiagonalMonolith) {
  // Linear bottoms followed by the top model are one network whose first
  // layer is block diagonal. Forward outputs and gradients must agree.
  const auto d = small_data(32);
  auto cfg = small_config(SplitMode::split);
  cfg.bottom_hidden = {};
  auto fed = FederationState::create(cfg, d.feature_dims(), 4, 5);
  const auto& b0 = fed.parties[0].bottom.layer(0);
  const auto& b1 = fed.parties[1].bottom.layer(0);
  DenseLayer first{Matrix(8, 5), {}, Activation::identity};
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 3; ++c) first.weight(r, c) = b0.weight(r, c);
    for (std::size_t c = 0; c < 2; ++c) first.weight(4 + r, 3 + c) = b1.weight(r, c);
  }
  first.bias = b0.bias;
  first.bias.insert(first.bias.end(), b1.bias.begin(), b1.bias.end());
  std::vector<DenseLayer> layers{first};
  for (const auto& l : fed.top->layers()) layers.push_back(l);
  const DenseNet mono(layers);

  const auto rows = all_rows(d.sample_count());
  const Matrix targets = one_hot_labels(d.labels, 4).probs;
  const auto acts = forward(mono, d.joint_features());
  const auto mono_grads = backprop(mono, acts, ce_softmax_grad(acts.output(), targets));

  const DenseNet top_before = *fed.top;
  const auto f = forward_round(fed, d, rows);
  EXPECT_LT(max_abs_difference(f.preds, acts.output()), 1e-9);
  const auto b = backward_round(fed, f, targets);
  for (std::size_t p = 0; p < 2; ++p) {
    const auto g = backprop(fed.parties[p].bottom, f.bottoms[p], b.packet.per_party[p]);
    const std::size_t r0 = 4 * p, c0 = p == 0 ? 0 : 3;
    for (std::size_t r = 0; r < 4; ++r) {
      EXPECT_NEAR(g.layers[0].bias[r], mono_grads.layers[0].bias[r0 + r], 1e-9);
      for (std::size_t c = 0; c < g.layers[0].weight.cols(); ++c) {
        EXPECT_NEAR(g.layers[0].weight(r, c), mono_grads.layers[0].weight(r0 + r, c0 + c), 1e-9);
      }
    }
  }
  // The SGD step the active party applied to the top model equals the
  // monolith's gradient for its layers.
  for (std::size_t l = 0; l < top_before.depth(); ++l) {
    const Matrix step = (1.0 / 0.1) * (top_before.layer(l).weight - fed.top->layer(l).weight);
    EXPECT_LT(max_abs_difference(step, mono_grads.layers[l + 1].weight), 1e-9);
  }
}

TEST(Federation, NoDefenseAndZeroNoiseAreIdentical) {
  const auto d = small_data();
  const auto t = one_hot_labels(d.labels, 4);
  auto a = FederationState::create(small_config(SplitMode::split), d.feature_dims(), 4, 7);
  auto b = FederationState::create(small_config(SplitMode::split), d.feature_dims(), 4, 7,
                                   NoisyDefense{0.0});
  train(a, d, t, 3);
  train(b, d, t, 3);
  EXPECT_EQ(parameters(a), parameters(b));
}

TEST(Federation, ZeroPacketLeavesBottomUnchanged) {
  const auto d = small_data();
  auto fed = FederationState::create(small_config(SplitMode::split), d.feature_dims(), 4, 7);
  const auto before = parameters(fed.parties[1].bottom);
  const auto f = forward_round(fed, d, all_rows(8));
  GradientPacket zero{f.round, f.batch, {Matrix(8, 4), Matrix(8, 4)}};
  local_update(fed, 1, f, zero);
  EXPECT_EQ(parameters(fed.parties[1].bottom), before);
}

TEST(Federation, StaleOrMismatchedPacketIsRejected) {
  const auto d = small_data();
  auto fed = FederationState::create(small_config(SplitMode::split), d.feature_dims(), 4, 7);
  const auto rows = all_rows(8);
  const auto t = one_hot_labels(d.labels, 4).probs;
  const auto f1 = forward_round(fed, d, rows);
  const auto b1 = backward_round(fed, f1, gather_rows(t, rows));
  const auto f2 = forward_round(fed, d, rows);
  EXPECT_THROW(local_update(fed, 0, f2, b1.packet), ProtocolError);
  auto wrong = b1.packet;
  wrong.per_party[0] = Matrix(8, 3);
  EXPECT_THROW(local_update(fed, 0, f1, wrong), ShapeError);
  EXPECT_THROW(local_update(fed, 5, f1, b1.packet), ParameterError);
}

TEST(Federation, ZeroEpochsIsNoOp) {
  const auto d = small_data();
  auto fed = FederationState::create(small_config(SplitMode::split), d.feature_dims(), 4, 7);
  const auto before = parameters(fed);
  TranscriptRecorder rec;
  train(fed, d, one_hot_labels(d.labels, 4), 0, &rec);
  EXPECT_EQ(parameters(fed), before);
  EXPECT_EQ(fed.epoch, 0u);
  EXPECT_TRUE(rec.rounds().empty());
}

TEST(Federation, TrainingIsDeterministic) {
  const auto d = small_data();
  const auto t = one_hot_labels(d.labels, 4);
  for (auto mode : {SplitMode::split, SplitMode::no_split}) {
    auto a = FederationState::create(small_config(mode), d.feature_dims(), 4, 11);
    auto b = FederationState::create(small_config(mode), d.feature_dims(), 4, 11);
    train(a, d, t, 2);
    train(b, d, t, 2);
    EXPECT_EQ(parameters(a), parameters(b));
    auto c = FederationState::create(small_config(mode), d.feature_dims(), 4, 12);
    train(c, d, t, 2);
    EXPECT_NE(parameters(a), parameters(c));
  }
}

TEST(Federation, TrainingReducesLoss) {
  const auto d = small_data(200);
  const auto t = one_hot_labels(d.labels, 4);
  auto fed = FederationState::create(small_config(SplitMode::split), d.feature_dims(), 4, 3);
  TranscriptRecorder rec;
  train(fed, d, t, 20, &rec);
  double first = 0, last = 0;
  std::size_t nf = 0, nl = 0;
  for (const auto& r : rec.rounds()) {
    if (r.epoch == 0) first += r.loss, ++nf;
    if (r.epoch == 19) last += r.loss, ++nl;
  }
  EXPECT_LT(last / nl, first / nf);
  EXPECT_GT(evaluate(fed, d, 1).top1, 0.5);
}

TEST(Federation, TargetShapeChecked) {
  const auto d = small_data();
  auto fed = FederationState::create(small_config(SplitMode::split), d.feature_dims(), 4, 3);
  EXPECT_THROW(train(fed, d, Matrix(d.sample_count(), 3), 1), ShapeError);
  auto three = d;
  three.party_features.push_back(d.party_features[0]);
  EXPECT_THROW(forward_round(fed, three, all_rows(4)), ShapeError);
}

TEST(Evaluate, HandCases) {
  const Matrix s{{0.1, 0.9, 0.0}, {0.8, 0.15, 0.05}, {0.2, 0.3, 0.5}};
  const std::vector<std::size_t> y{1, 1, 0};
  const auto a1 = evaluate_scores(s, y, 1);
  EXPECT_DOUBLE_EQ(a1.top1, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(a1.topk, 1.0 / 3.0);
  const auto a2 = evaluate_scores(s, y, 2);
  EXPECT_DOUBLE_EQ(a2.topk, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(evaluate_scores(s, y, 3).topk, 1.0);
  EXPECT_THROW(evaluate_scores(s, y, 0), ParameterError);
  EXPECT_THROW(evaluate_scores(s, y, 4), ParameterError);
}

TEST(Transcript, RecorderFiltersEpochAndEmbeddings) {
  const auto d = small_data();
  auto fed = FederationState::create(small_config(SplitMode::split), d.feature_dims(), 4, 3);
  TranscriptRecorder only1(1, false);
  train(fed, d, one_hot_labels(d.labels, 4), 3, &only1);
  ASSERT_EQ(only1.rounds().size(), 4u);  // 64 samples / batch 16
  std::vector<std::size_t> seen;
  for (const auto& r : only1.rounds()) {
    EXPECT_EQ(r.epoch, 1u);
    EXPECT_TRUE(r.embeddings.empty());
    EXPECT_EQ(r.gradients.size(), 2u);
    seen.insert(seen.end(), r.batch.begin(), r.batch.end());
  }
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(seen, all_rows(64));  // every sample once per epoch
}

TEST(Transcript, JsonLinesRoundTrip) {
  const auto d = small_data();
  auto fed = FederationState::create(small_config(SplitMode::split), d.feature_dims(), 4, 3);
  TranscriptRecorder rec;
  train(fed, d, one_hot_labels(d.labels, 4), 2, &rec);
  std::stringstream buf;
  write_transcript(buf, rec.rounds());
  const auto back = read_transcript(buf);
  ASSERT_EQ(back.size(), rec.rounds().size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    const auto& a = rec.rounds()[i];
    const auto& b = back[i];
    EXPECT_EQ(a.epoch, b.epoch);
    EXPECT_EQ(a.batch_index, b.batch_index);
    EXPECT_EQ(a.batch, b.batch);
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(a.gradients, b.gradients);
    EXPECT_EQ(a.embeddings, b.embeddings);
  }
  std::istringstream bad("{\"epoch\": 0}\n");
  EXPECT_THROW(read_transcript(bad), DataError);
  std::istringstream junk("not json\n");
  EXPECT_THROW(read_transcript(junk), DataError);
}

TEST(PrivacyBoundary, AdversarySeesOnlyItsOwnChannel) {
  const auto d = small_data();
  auto fed = FederationState::create(small_config(SplitMode::split), d.feature_dims(), 4, 3);
  TranscriptRecorder rec;
  train(fed, d, one_hot_labels(d.labels, 4), 1, &rec);
  EXPECT_THROW(AdversaryState::observe(fed, 0, party_view(d, 0), rec.rounds()), ParameterError);
  EXPECT_THROW(AdversaryState::observe(fed, 1, party_view(d, 0), rec.rounds()), ParameterError);
  EXPECT_THROW(AdversaryState::observe(fed, 2, party_view(d, 1), rec.rounds()), ParameterError);
  const auto adv = AdversaryState::observe(fed, 1, party_view(d, 1), rec.rounds());
  ASSERT_EQ(adv.packets().size(), rec.rounds().size());
  for (std::size_t i = 0; i < adv.packets().size(); ++i) {
    EXPECT_EQ(adv.packets()[i].gradient, rec.rounds()[i].gradients[1]);
  }
  EXPECT_EQ(adv.features(), d.party_features[1]);
  EXPECT_EQ(adv.bottom().layers(), fed.parties[1].bottom.layers());
}

TEST(Malicious, MovesAdversaryBottomFurtherThanSgd) {
  const auto d = small_data(128);
  const auto t = one_hot_labels(d.labels, 4);
  auto cfg = small_config(SplitMode::split);
  cfg.bottom_optimizer = {OptimizerKind::sgd, 0.01, {}, {}};
  auto honest = FederationState::create(cfg, d.feature_dims(), 4, 9);
  const auto init = parameters(honest.parties[1].bottom);
  auto evil = honest;
  OptimizerConfig oc = cfg.bottom_optimizer;
  oc.kind = OptimizerKind::malicious;
  evil.parties[1].optimizer = OptimizerState(oc);
  train(honest, d, t, 3);
  train(evil, d, t, 3);
  auto displacement = [&](const FederationState& f) {
    const auto p = parameters(f.parties[1].bottom);
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - init[i]) * (p[i] - init[i]);
    return std::sqrt(s);
  };
  EXPECT_GT(displacement(evil), displacement(honest));
}
