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

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vflkdk/data.hpp"
#include "vflkdk/defenses.hpp"
#include "vflkdk/errors.hpp"
#include "vflkdk/kdk.hpp"
#include "vflkdk/loss.hpp"
#include "vflkdk/nn.hpp"
#include "vflkdk/optim.hpp"
#include "vflkdk/rng.hpp"
#include "vflkdk/trainer.hpp"

namespace vflkdk {

// split: the active party runs a top model over concatenated embeddings.
// no_split: every bottom model emits class logits and predictions are their sum.
enum class SplitMode { split, no_split };

inline const char* to_string(SplitMode m) { return m == SplitMode::split ? "split" : "no_split"; }

enum class LabelSource { hard, kdk };

struct FederationConfig {
  SplitMode mode = SplitMode::split;
  std::vector<std::size_t> bottom_hidden{64};
  std::size_t embedding_dim = 16;  // bottom output width in split mode
  std::vector<std::size_t> top_hidden{32};
  OptimizerConfig bottom_optimizer{OptimizerKind::adam, 0.01, {}, {}};
  OptimizerConfig top_optimizer{OptimizerKind::adam, 0.01, {}, {}};
  std::size_t batch_size = 32;
  bool defend_active_packet = false;
};

struct Party {
  DenseNet bottom;
  OptimizerState optimizer;
};

// Model state of every participant. Holds no labels: targets are passed to
// `train`/`backward_round` by the caller acting as the active party.
struct FederationState {
  std::vector<Party> parties;
  std::optional<DenseNet> top;  // split mode only
  OptimizerState top_optimizer;
  SplitMode mode = SplitMode::split;
  std::size_t batch_size = 64;
  std::size_t class_count = 0;
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  std::uint64_t round = 0;
  LabelSource label_source = LabelSource::hard;
  bool defend_active_packet = false;
  GradientDefense defense;

  static FederationState create(const FederationConfig& cfg,
                                std::span<const std::size_t> feature_dims,
                                std::size_t classes, std::uint64_t seed,
                                DefenseConfig defense = NoDefense{}) {
    if (feature_dims.empty()) throw ShapeError("federation: no parties");
    if (classes < 2) throw ParameterError("federation: need at least 2 classes");
    if (cfg.batch_size < 1) throw ParameterError("federation: batch_size must be >= 1");
    FederationState s;
    s.mode = cfg.mode;
    s.batch_size = cfg.batch_size;
    s.class_count = classes;
    s.seed = seed;
    s.defend_active_packet = cfg.defend_active_packet;
    s.label_source = std::holds_alternative<KdkDefense>(defense) ? LabelSource::kdk
                                                                 : LabelSource::hard;
    s.defense = GradientDefense(std::move(defense), derive_seed(seed, "federation.defense"));
    const std::size_t out = cfg.mode == SplitMode::split ? cfg.embedding_dim : classes;
    for (std::size_t p = 0; p < feature_dims.size(); ++p) {
      Rng init(derive_seed(seed, 1000 + p));
      s.parties.push_back({DenseNet::mlp(feature_dims[p], cfg.bottom_hidden, out, init),
                           OptimizerState(cfg.bottom_optimizer)});
    }
    if (cfg.mode == SplitMode::split) {
      Rng init(derive_seed(seed, "federation.top"));
      s.top = DenseNet::mlp(out * feature_dims.size(), cfg.top_hidden, classes, init);
      s.top_optimizer = OptimizerState(cfg.top_optimizer);
    }
    s.validate();
    return s;
  }

  void validate() const {
    if (mode == SplitMode::split) {
      if (!top) throw ShapeError("federation: split mode without a top model");
      std::size_t total = 0;
      for (const auto& p : parties) total += p.bottom.output_dim();
      if (total != top->input_dim()) {
        throw ShapeError("federation: bottom outputs sum to " + std::to_string(total) +
                         ", top expects " + std::to_string(top->input_dim()));
      }
      if (top->output_dim() != class_count) throw ShapeError("federation: top output != C");
    } else {
      for (const auto& p : parties) {
        if (p.bottom.output_dim() != class_count) {
          throw ShapeError("federation: no_split bottoms must emit class_count logits");
        }
      }
    }
  }

  std::size_t party_count() const noexcept { return parties.size(); }
};

// Partial gradients returned to the parties for one batch.
struct GradientPacket {
  std::uint64_t round = 0;
  std::vector<std::size_t> batch;
  std::vector<Matrix> per_party;  // d loss / d H_p, one per party (post-defense)
};

struct RoundForward {
  std::uint64_t round = 0;
  std::vector<std::size_t> batch;
  std::vector<Activations> bottoms;
  std::optional<Activations> top;
  Matrix preds;  // logits

  const Matrix& embedding(std::size_t p) const { return bottoms.at(p).output(); }
};

struct RoundBackward {
  GradientPacket packet;
  double loss = 0.0;
};

// One logged federation round; the adversary's observation channel.
struct RoundTranscript {
  std::size_t epoch = 0;
  std::size_t batch_index = 0;
  std::vector<std::size_t> batch;
  std::vector<Matrix> embeddings;
  std::vector<Matrix> gradients;
  double loss = 0.0;
};

class TranscriptSink {
 public:
  virtual ~TranscriptSink() = default;
  virtual bool wants_epoch(std::size_t /*epoch*/) const { return true; }
  virtual void record(const RoundTranscript& t) = 0;
};

// Keeps transcripts in memory, optionally for a single epoch only.
class TranscriptRecorder : public TranscriptSink {
 public:
  explicit TranscriptRecorder(std::optional<std::size_t> only_epoch = std::nullopt,
                              bool keep_embeddings = true)
      : only_epoch_(only_epoch), keep_embeddings_(keep_embeddings) {}

  bool wants_epoch(std::size_t epoch) const override {
    return !only_epoch_ || *only_epoch_ == epoch;
  }
  void record(const RoundTranscript& t) override {
    if (!wants_epoch(t.epoch)) return;
    rounds_.push_back(t);
    if (!keep_embeddings_) rounds_.back().embeddings.clear();
  }

  const std::vector<RoundTranscript>& rounds() const noexcept { return rounds_; }

 private:
  std::optional<std::size_t> only_epoch_;
  bool keep_embeddings_;
  std::vector<RoundTranscript> rounds_;
};

inline RoundForward forward_round(FederationState& state, const VerticalDataset& data,
                                  std::span<const std::size_t> batch) {
  if (data.party_count() != state.party_count()) {
    throw ShapeError("forward_round: dataset has " + std::to_string(data.party_count()) +
                     " parties, federation has " + std::to_string(state.party_count()));
  }
  for (std::size_t i : batch) {
    if (i >= data.sample_count()) throw ParameterError("forward_round: batch index out of range");
  }
  RoundForward f;
  f.round = ++state.round;
  f.batch.assign(batch.begin(), batch.end());
  std::vector<Matrix> embeddings;
  for (std::size_t p = 0; p < state.party_count(); ++p) {
    f.bottoms.push_back(forward(state.parties[p].bottom, gather_rows(data.party_features[p], batch)));
  }
  if (state.mode == SplitMode::split) {
    std::vector<Matrix> parts;
    for (const auto& b : f.bottoms) parts.push_back(b.output());
    f.top = forward(*state.top, hconcat(parts));
    f.preds = f.top->output();
  } else {
    f.preds = f.bottoms.front().output();
    for (std::size_t p = 1; p < f.bottoms.size(); ++p) f.preds = f.preds + f.bottoms[p].output();
  }
  return f;
}

// Active-party side of a round: loss, top-model update, partial gradients.
// Packets released to passive parties (and to party 0 when configured) go
// through the configured gradient defense.
inline RoundBackward backward_round(FederationState& state, const RoundForward& f,
                                    const Matrix& target_dist) {
  const Matrix grad_preds = ce_softmax_grad(f.preds, target_dist);
  RoundBackward out;
  out.loss = cross_entropy_soft(softmax_rows(f.preds), target_dist);
  out.packet.round = f.round;
  out.packet.batch = f.batch;
  if (state.mode == SplitMode::split) {
    auto top_grads = backprop(*state.top, *f.top, grad_preds);
    state.top_optimizer.step(*state.top, top_grads);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < state.party_count(); ++p) {
      const std::size_t width = state.parties[p].bottom.output_dim();
      out.packet.per_party.push_back(column_slice(top_grads.input, offset, width));
      offset += width;
    }
  } else {
    out.packet.per_party.assign(state.party_count(), grad_preds);
  }
  for (std::size_t p = 0; p < state.party_count(); ++p) {
    if (p == 0 && !state.defend_active_packet) continue;
    out.packet.per_party[p] = state.defense.apply(out.packet.per_party[p]);
  }
  return out;
}

// Party-side update: backprop the received partial gradient through the bottom
// model and step its optimizer.
inline void local_update(FederationState& state, std::size_t party, const RoundForward& f,
                         const GradientPacket& packet) {
  if (party >= state.party_count()) throw ParameterError("local_update: no such party");
  if (packet.round != f.round || packet.batch != f.batch) {
    throw ProtocolError("local_update: packet does not answer the party's last upload");
  }
  const Matrix& g = packet.per_party.at(party);
  if (!g.same_shape(f.embedding(party))) {
    throw ShapeError("local_update: packet shape " + shape_string(g) + " vs embedding " +
                     shape_string(f.embedding(party)));
  }
  auto& p = state.parties[party];
  p.optimizer.step(p.bottom, backprop(p.bottom, f.bottoms[party], g));
}

// Shuffled mini-batch training; the permutation of epoch e is seeded by
// (seed, e). `targets` rows are aligned with `data` samples.
inline void train(FederationState& state, const VerticalDataset& data, const Matrix& targets,
                  std::size_t epochs, TranscriptSink* sink = nullptr) {
  if (targets.rows() != data.sample_count() || targets.cols() != state.class_count) {
    throw ShapeError("train: targets " + shape_string(targets) + " do not match dataset");
  }
  const std::size_t n = data.sample_count();
  for (std::size_t e = 0; e < epochs; ++e) {
    const std::size_t epoch = state.epoch;
    Rng rng(derive_seed(derive_seed(state.seed, "federation.epoch"), epoch));
    const auto perm = rng.permutation(n);
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += state.batch_size, ++batch_index) {
      const std::size_t end = std::min(n, start + state.batch_size);
      std::span<const std::size_t> batch(perm.data() + start, end - start);
      const auto f = forward_round(state, data, batch);
      const auto b = backward_round(state, f, gather_rows(targets, batch));
      if (sink && sink->wants_epoch(epoch)) {
        RoundTranscript t{epoch, batch_index, f.batch, {}, b.packet.per_party, b.loss};
        for (std::size_t p = 0; p < state.party_count(); ++p) t.embeddings.push_back(f.embedding(p));
        sink->record(t);
      }
      for (std::size_t p = 0; p < state.party_count(); ++p) local_update(state, p, f, b.packet);
    }
    state.defense.end_epoch(epoch);
    ++state.epoch;
  }
}

inline void train(FederationState& state, const VerticalDataset& data,
                  const LabelDistributionSet& targets, std::size_t epochs,
                  TranscriptSink* sink = nullptr) {
  train(state, data, targets.probs, epochs, sink);
}

// Logits of the federated model for every sample.
inline Matrix federated_predict(const FederationState& state, const VerticalDataset& data) {
  std::vector<Matrix> outs;
  for (std::size_t p = 0; p < state.party_count(); ++p) {
    outs.push_back(predict(state.parties[p].bottom, data.party_features.at(p)));
  }
  if (state.mode == SplitMode::split) return predict(*state.top, hconcat(outs));
  Matrix sum = outs.front();
  for (std::size_t p = 1; p < outs.size(); ++p) sum = sum + outs[p];
  return sum;
}

struct Accuracy {
  double top1 = 0.0;
  double topk = 0.0;
};

inline Accuracy evaluate_scores(const Matrix& scores, std::span<const std::size_t> truth,
                                std::size_t k) {
  if (k == 0 || k > scores.cols()) {
    throw ParameterError("evaluate: k must be in [1, class_count]");
  }
  return {top1_accuracy(scores, truth), topk_accuracy(scores, truth, k)};
}

inline Accuracy evaluate(const FederationState& state, const VerticalDataset& data,
                         std::size_t k) {
  if (k == 0 || k > state.class_count) {
    throw ParameterError("evaluate: k must be in [1, class_count]");
  }
  return evaluate_scores(federated_predict(state, data), data.labels, k);
}

}  // namespace vflkdk
