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

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vflkdk/data.hpp"
#include "vflkdk/errors.hpp"
#include "vflkdk/loss.hpp"
#include "vflkdk/nn.hpp"
#include "vflkdk/optim.hpp"
#include "vflkdk/trainer.hpp"
#include "vflkdk/vfl.hpp"

namespace vflkdk {

enum class AttackKind { passive, active, direct };

inline const char* to_string(AttackKind k) {
  switch (k) {
    case AttackKind::passive: return "passive";
    case AttackKind::active: return "active";
    case AttackKind::direct: return "direct";
  }
  return "?";
}

// A partial gradient as seen by the party that received it.
struct ObservedPacket {
  std::size_t epoch = 0;
  std::vector<std::size_t> batch;
  Matrix gradient;
};

// Everything a passive party can see: its data slice, its own bottom model,
// the packets addressed to it, and (by assumption) a few auxiliary labels.
class AdversaryState {
 public:
  static AdversaryState observe(const FederationState& fed, std::size_t party,
                                PartyData train_slice,
                                std::span<const RoundTranscript> transcript,
                                AuxiliaryLabelSet aux = {}) {
    if (party == 0) throw ParameterError("adversary: party 0 is the active party");
    if (party >= fed.party_count()) throw ParameterError("adversary: no such party");
    if (train_slice.party != party) throw ParameterError("adversary: slice of another party");
    AdversaryState a;
    a.party_ = party;
    a.bottom_ = fed.parties[party].bottom;
    a.features_ = std::move(train_slice.features);
    for (const auto& round : transcript) {
      a.packets_.push_back({round.epoch, round.batch, round.gradients.at(party)});
    }
    for (std::size_t i : aux.indices) {
      if (i >= a.features_.rows()) throw ParameterError("adversary: auxiliary index out of range");
    }
    a.aux_ = std::move(aux);
    return a;
  }

  std::size_t party() const noexcept { return party_; }
  const DenseNet& bottom() const noexcept { return bottom_; }
  const Matrix& features() const noexcept { return features_; }
  const std::vector<ObservedPacket>& packets() const noexcept { return packets_; }
  const AuxiliaryLabelSet& auxiliary() const noexcept { return aux_; }

 private:
  AdversaryState() = default;

  std::size_t party_ = 1;
  DenseNet bottom_;
  Matrix features_;
  std::vector<ObservedPacket> packets_;
  AuxiliaryLabelSet aux_;
};

// Outcome of one attack on one split. `available` is false where the attack
// cannot produce predictions (the direct attack at test time).
struct AttackReport {
  AttackKind kind = AttackKind::passive;
  Split split = Split::train;
  bool available = true;
  std::vector<std::size_t> predicted;
  double top1 = 0.0;
  double topk = 0.0;
  std::size_t k = 1;
  std::size_t fallback_count = 0;  // direct attack rows decided by "most negative"
};

// Top-1 and top-k success of ranked attack scores against the truth.
inline AttackReport score_asr(AttackKind kind, Split split, const Matrix& scores,
                              std::span<const std::size_t> truth, std::size_t k) {
  if (scores.rows() != truth.size()) throw ShapeError("score_asr: length mismatch");
  AttackReport r;
  r.kind = kind;
  r.split = split;
  r.k = k;
  r.predicted = argmax_rows(scores);
  r.top1 = top1_accuracy(scores, truth);
  r.topk = topk_accuracy(scores, truth, k);
  return r;
}

struct CompletionConfig {
  std::size_t head_warmup_epochs = 30;  // body frozen, head only
  std::size_t epochs = 100;             // head and body on the auxiliary set
  std::size_t pseudo_rounds = 2;
  double confidence = 0.9;
  std::size_t pseudo_epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-2;
  std::uint64_t seed = 1;
};

struct CompletionResult {
  DenseNet model;                // bottom model plus classification head
  Matrix train_scores;           // class probabilities on the adversary's training slice
  std::size_t pseudo_labelled = 0;  // samples admitted in the last pseudo round
};

// Model completion: append a classification head to the adversary's bottom
// model, fit it on the auxiliary labels, then grow the labelled set by
// confidence-thresholded pseudo-labelling.
inline CompletionResult passive_model_completion(const AdversaryState& adv,
                                                 std::size_t class_count,
                                                 const CompletionConfig& cfg) {
  const auto& aux = adv.auxiliary();
  if (aux.size() == 0) throw ParameterError("model completion: empty auxiliary set");
  const Matrix& x = adv.features();

  DenseNet model = adv.bottom();
  const std::size_t body_depth = model.depth();
  {
    Rng init(derive_seed(cfg.seed, "completion.head"));
    DenseNet head = DenseNet::mlp(model.output_dim(), {}, class_count, init);
    model.append(head.layer(0));
  }
  const Matrix aux_x = gather_rows(x, aux.indices);
  const Matrix aux_y = one_hot_labels(aux.labels, class_count).probs;

  FitOptions opt;
  opt.batch_size = cfg.batch_size;
  opt.optimizer = {OptimizerKind::adam, cfg.learning_rate, {}, {}};

  opt.epochs = cfg.head_warmup_epochs;
  opt.seed = derive_seed(cfg.seed, "completion.warmup");
  opt.first_trainable_layer = body_depth;
  fit_to_targets(model, aux_x, aux_y, opt);

  opt.epochs = cfg.epochs;
  opt.seed = derive_seed(cfg.seed, "completion.finetune");
  opt.first_trainable_layer = 0;
  fit_to_targets(model, aux_x, aux_y, opt);

  std::vector<bool> is_aux(x.rows(), false);
  for (std::size_t i : aux.indices) is_aux[i] = true;

  std::size_t admitted = 0;
  for (std::size_t round = 0; round < cfg.pseudo_rounds; ++round) {
    const Matrix probs = softmax_rows(predict(model, x));
    std::vector<std::size_t> rows(aux.indices.begin(), aux.indices.end());
    std::vector<std::size_t> labels(aux.labels.begin(), aux.labels.end());
    admitted = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      if (is_aux[i]) continue;
      const auto row = probs.row(i);
      const std::size_t best = argmax(row);
      if (row[best] >= cfg.confidence) {
        rows.push_back(i);
        labels.push_back(best);
        ++admitted;
      }
    }
    if (admitted == 0) break;
    opt.epochs = cfg.pseudo_epochs;
    opt.seed = derive_seed(cfg.seed, 100 + round);
    fit_to_targets(model, gather_rows(x, rows), one_hot_labels(labels, class_count).probs, opt);
  }

  CompletionResult r{model, softmax_rows(predict(model, x)), admitted};
  return r;
}

// Test-time predictions of a completed attack model.
inline Matrix completion_scores(const CompletionResult& r, const Matrix& features) {
  return softmax_rows(predict(r.model, features));
}

struct ActiveAttackResult {
  FederationState federation;
  CompletionResult completion;
  AdversaryState adversary;
};

// Trains the federation with the adversary's bottom model stepped by the
// malicious optimizer, then runs model completion on the result.
inline ActiveAttackResult active_attack(FederationState fed, std::size_t adversary_party,
                                        const MaliciousParams& malicious,
                                        const VerticalDataset& train, const Matrix& targets,
                                        std::size_t epochs, AuxiliaryLabelSet aux,
                                        const CompletionConfig& completion) {
  if (adversary_party == 0 || adversary_party >= fed.party_count()) {
    throw ParameterError("active_attack: adversary must be a passive party");
  }
  OptimizerConfig oc = fed.parties[adversary_party].optimizer.config();
  oc.kind = OptimizerKind::malicious;
  oc.malicious = malicious;
  fed.parties[adversary_party].optimizer = OptimizerState(oc);
  vflkdk::train(fed, train, targets, epochs);
  auto adv = AdversaryState::observe(fed, adversary_party, party_view(train, adversary_party),
                                     {}, std::move(aux));
  auto done = passive_model_completion(adv, fed.class_count, completion);
  return {std::move(fed), std::move(done), std::move(adv)};
}

struct DirectAttackResult {
  Matrix scores;  // negated gradient; higher means more likely the label
  std::vector<std::size_t> predicted;
  std::vector<bool> observed;
  std::size_t fallback_count = 0;
};

// Label recovery from the signs of per-logit gradients. With a hard label the
// only negative entry marks the class; otherwise the most negative entry wins.
// Reads the packets of epoch `epoch`; a sample seen twice keeps its last packet.
inline DirectAttackResult direct_attack(std::span<const ObservedPacket> packets,
                                        std::size_t sample_count, std::size_t class_count,
                                        std::size_t epoch = 0) {
  DirectAttackResult r{Matrix(sample_count, class_count), std::vector<std::size_t>(sample_count, 0),
                       std::vector<bool>(sample_count, false), 0};
  for (const auto& p : packets) {
    if (p.epoch != epoch) continue;
    if (p.gradient.cols() != class_count) {
      throw ModeError("direct attack: packets have " + std::to_string(p.gradient.cols()) +
                      " columns; gradients at class logits (no_split mode) are required");
    }
    if (p.gradient.rows() != p.batch.size()) throw ShapeError("direct attack: packet rows");
    for (std::size_t b = 0; b < p.batch.size(); ++b) {
      const std::size_t i = p.batch[b];
      if (i >= sample_count) throw ParameterError("direct attack: sample index out of range");
      auto dst = r.scores.row(i);
      const auto g = p.gradient.row(b);
      for (std::size_t c = 0; c < class_count; ++c) dst[c] = -g[c];
      r.observed[i] = true;
    }
  }
  for (std::size_t i = 0; i < sample_count; ++i) {
    const auto g = r.scores.row(i);
    std::size_t negatives = 0;
    std::size_t only = 0;
    for (std::size_t c = 0; c < class_count; ++c) {
      if (g[c] > 0.0) {  // gradient entry < 0
        ++negatives;
        only = c;
      }
    }
    if (negatives == 1) {
      r.predicted[i] = only;
    } else {
      r.predicted[i] = argmax(g);
      if (r.observed[i]) ++r.fallback_count;
    }
  }
  return r;
}

inline std::vector<ObservedPacket> packets_for_party(std::span<const RoundTranscript> transcript,
                                                     std::size_t party) {
  std::vector<ObservedPacket> out;
  out.reserve(transcript.size());
  for (const auto& t : transcript) out.push_back({t.epoch, t.batch, t.gradients.at(party)});
  return out;
}

inline AttackReport score_direct(const DirectAttackResult& r, std::span<const std::size_t> truth,
                                 std::size_t k) {
  if (truth.size() != r.predicted.size()) throw ShapeError("score_direct: length mismatch");
  AttackReport rep = score_asr(AttackKind::direct, Split::train, r.scores, truth, k);
  // Top-1 follows the sign rule exactly.
  rep.predicted = r.predicted;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += r.predicted[i] == truth[i];
  rep.top1 = truth.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(truth.size());
  rep.fallback_count = r.fallback_count;
  return rep;
}

inline AttackReport unavailable_report(AttackKind kind, Split split, std::size_t k) {
  AttackReport r;
  r.kind = kind;
  r.split = split;
  r.available = false;
  r.k = k;
  return r;
}

}  // namespace vflkdk
