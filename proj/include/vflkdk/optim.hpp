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
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vflkdk/errors.hpp"
#include "vflkdk/nn.hpp"

namespace vflkdk {

enum class OptimizerKind { sgd, adam, malicious };

inline const char* to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::malicious: return "malicious";
  }
  return "?";
}

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Sign-consistency amplification: each parameter keeps a scale r that grows by
// `gamma` (capped at `r_max`) while its gradient sign repeats, and resets to 1
// on a flip.
struct MaliciousParams {
  double gamma = 2.0;
  double r_max = 8.0;
};

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 0.1;
  AdamParams adam{};
  MaliciousParams malicious{};
};

// Per-parameter-block auxiliary buffers. A "block" is one contiguous parameter
// array (a weight matrix or a bias vector).
class OptimizerState {
 public:
  OptimizerState() = default;
  explicit OptimizerState(OptimizerConfig config) : config_(config) {
    if (!(config_.learning_rate >= 0.0)) throw ParameterError("optimizer: learning_rate < 0");
    if (config_.kind == OptimizerKind::malicious &&
        !(config_.malicious.gamma >= 1.0 && config_.malicious.r_max >= 1.0)) {
      throw ParameterError("optimizer: malicious gamma and r_max must be >= 1");
    }
  }

  const OptimizerConfig& config() const noexcept { return config_; }
  OptimizerKind kind() const noexcept { return config_.kind; }
  std::uint64_t steps() const noexcept { return steps_; }

  // Updates every block in place; `params[i]` and `grads[i]` must have equal size.
  void step(std::span<const std::span<double>> params,
            std::span<const std::span<const double>> grads) {
    if (params.size() != grads.size()) throw ShapeError("optimizer: block count mismatch");
    if (buffers_.empty()) {
      buffers_.resize(params.size());
      for (std::size_t b = 0; b < params.size(); ++b) init_block(buffers_[b], params[b].size());
    }
    if (buffers_.size() != params.size()) throw ShapeError("optimizer: block count changed");
    ++steps_;
    for (std::size_t b = 0; b < params.size(); ++b) {
      if (params[b].size() != grads[b].size() || buffers_[b].size != params[b].size()) {
        throw ShapeError("optimizer: block " + std::to_string(b) + " size mismatch");
      }
      update_block(buffers_[b], params[b], grads[b]);
    }
  }

  void step(DenseNet& net, const NetGradients& grads) {
    if (grads.layers.size() != net.depth()) throw ShapeError("optimizer: gradient depth");
    std::vector<std::span<double>> p;
    std::vector<std::span<const double>> g;
    p.reserve(2 * net.depth());
    g.reserve(2 * net.depth());
    for (std::size_t l = 0; l < net.depth(); ++l) {
      auto& layer = net.layer(l);
      if (!layer.weight.same_shape(grads.layers[l].weight)) {
        throw ShapeError("optimizer: weight gradient shape mismatch at layer " +
                         std::to_string(l));
      }
      p.emplace_back(layer.weight.flat());
      g.emplace_back(grads.layers[l].weight.flat());
      p.emplace_back(layer.bias);
      g.emplace_back(grads.layers[l].bias);
    }
    step(std::span<const std::span<double>>(p), std::span<const std::span<const double>>(g));
  }

  // Scale factors of one block (malicious optimizer only); empty otherwise.
  std::span<const double> scales(std::size_t block) const {
    if (block >= buffers_.size()) return {};
    return buffers_[block].scale;
  }

 private:
  struct Block {
    std::size_t size = 0;
    std::vector<double> first;   // adam m
    std::vector<double> second;  // adam v
    std::vector<double> scale;   // malicious r, in [1, r_max]
    std::vector<signed char> prev_sign;
  };

  void init_block(Block& b, std::size_t n) const {
    b.size = n;
    switch (config_.kind) {
      case OptimizerKind::sgd:
        break;
      case OptimizerKind::adam:
        b.first.assign(n, 0.0);
        b.second.assign(n, 0.0);
        break;
      case OptimizerKind::malicious:
        b.scale.assign(n, 1.0);
        b.prev_sign.assign(n, 0);
        break;
    }
  }

  static signed char sign_of(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

  void update_block(Block& b, std::span<double> p, std::span<const double> g) const {
    const double lr = config_.learning_rate;
    switch (config_.kind) {
      case OptimizerKind::sgd:
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
        break;
      case OptimizerKind::adam: {
        const auto& a = config_.adam;
        const double t = static_cast<double>(steps_);
        const double c1 = 1.0 - std::pow(a.beta1, t);
        const double c2 = 1.0 - std::pow(a.beta2, t);
        for (std::size_t i = 0; i < p.size(); ++i) {
          b.first[i] = a.beta1 * b.first[i] + (1.0 - a.beta1) * g[i];
          b.second[i] = a.beta2 * b.second[i] + (1.0 - a.beta2) * g[i] * g[i];
          const double m_hat = b.first[i] / c1;
          const double v_hat = b.second[i] / c2;
          p[i] -= lr * m_hat / (std::sqrt(v_hat) + a.epsilon);
        }
        break;
      }
      case OptimizerKind::malicious: {
        const auto& m = config_.malicious;
        for (std::size_t i = 0; i < p.size(); ++i) {
          const signed char s = sign_of(g[i]);
          if (s != 0 && s == b.prev_sign[i]) {
            b.scale[i] = std::min(m.gamma * b.scale[i], m.r_max);
          } else {
            b.scale[i] = 1.0;
          }
          p[i] -= lr * b.scale[i] * g[i];
          b.prev_sign[i] = s;
        }
        break;
      }
    }
  }

  OptimizerConfig config_{};
  std::vector<Block> buffers_;
  std::uint64_t steps_ = 0;
};

}  // namespace vflkdk
