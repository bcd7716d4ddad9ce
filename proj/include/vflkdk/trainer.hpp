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
#include <functional>
#include <span>
#include <vector>

#include "vflkdk/loss.hpp"
#include "vflkdk/nn.hpp"
#include "vflkdk/optim.hpp"
#include "vflkdk/rng.hpp"

namespace vflkdk {

struct FitOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  OptimizerConfig optimizer{OptimizerKind::adam, 1e-3, {}, {}};
  std::uint64_t seed = 1;
  // Layers below this index are left untouched (used to freeze a body).
  std::size_t first_trainable_layer = 0;
};

// Gradient of the batch loss with respect to the logits.
using LogitGradFn =
    std::function<Matrix(const Matrix& logits, std::span<const std::size_t> batch)>;

// Mini-batch training of a standalone network. Batches are drawn from a
// per-epoch permutation seeded by (seed, epoch).
inline void fit(DenseNet& net, const Matrix& x, const LogitGradFn& logit_grad,
                const FitOptions& opt) {
  if (opt.epochs == 0 || x.rows() == 0) return;
  OptimizerState state(opt.optimizer);
  const std::size_t n = x.rows();
  const std::size_t bs = std::max<std::size_t>(1, std::min(opt.batch_size, n));
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    Rng rng(derive_seed(opt.seed, epoch));
    const auto perm = rng.permutation(n);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      std::span<const std::size_t> batch(perm.data() + start, end - start);
      const Matrix xb = gather_rows(x, batch);
      const auto acts = forward(net, xb);
      auto grads = backprop(net, acts, logit_grad(acts.output(), batch));
      if (opt.first_trainable_layer == 0) {
        state.step(net, grads);
      } else {
        // Frozen layers must not move even under adaptive optimizers, so only
        // the trainable suffix is handed to the optimizer.
        std::vector<std::span<double>> p;
        std::vector<std::span<const double>> g;
        for (std::size_t l = opt.first_trainable_layer; l < net.depth(); ++l) {
          p.emplace_back(net.layer(l).weight.flat());
          g.emplace_back(grads.layers[l].weight.flat());
          p.emplace_back(net.layer(l).bias);
          g.emplace_back(grads.layers[l].bias);
        }
        state.step(std::span<const std::span<double>>(p),
                   std::span<const std::span<const double>>(g));
      }
    }
  }
}

// Cross-entropy training against per-sample target distributions.
inline void fit_to_targets(DenseNet& net, const Matrix& x, const Matrix& targets,
                           const FitOptions& opt) {
  fit(
      net, x,
      [&](const Matrix& logits, std::span<const std::size_t> batch) {
        return ce_softmax_grad(logits, gather_rows(targets, batch));
      },
      opt);
}

inline std::vector<std::size_t> argmax_rows(const Matrix& m) {
  std::vector<std::size_t> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = argmax(m.row(r));
  return out;
}

inline double top1_accuracy(const Matrix& scores, std::span<const std::size_t> truth) {
  if (scores.rows() != truth.size()) throw ShapeError("top1_accuracy: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t r = 0; r < scores.rows(); ++r) hit += argmax(scores.row(r)) == truth[r];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

// Fraction of rows whose true class is among the k highest scores. Ties are
// ranked by lowest index, so the true class counts only if fewer than k
// entries outrank it.
inline double topk_accuracy(const Matrix& scores, std::span<const std::size_t> truth,
                            std::size_t k) {
  if (scores.rows() != truth.size()) throw ShapeError("topk_accuracy: length mismatch");
  if (k == 0 || k > scores.cols()) throw ParameterError("topk_accuracy: k outside [1, C]");
  if (truth.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const auto row = scores.row(r);
    const double t = row[truth[r]];
    std::size_t ahead = 0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (row[c] > t || (row[c] == t && c < truth[r])) ++ahead;
    }
    hit += ahead < k;
  }
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace vflkdk
