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

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vflkdk/errors.hpp"
#include "vflkdk/matrix.hpp"
#include "vflkdk/rng.hpp"

namespace vflkdk {

enum class Activation { relu, identity };

inline const char* to_string(Activation a) {
  return a == Activation::relu ? "relu" : "identity";
}

struct DenseLayer {
  Matrix weight;                // out x in
  std::vector<double> bias;     // out
  Activation activation = Activation::identity;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Multilayer perceptron. Bottom models, top models, teachers and attack heads
// are all instances of this type.
class DenseNet {
 public:
  DenseNet() = default;
  explicit DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    validate();
  }

  // Layers in -> hidden[0] -> ... -> out. Hidden layers use `hidden_activation`,
  // the last layer `output_activation`. Weights are Glorot-uniform, biases zero.
  static DenseNet mlp(std::size_t in, std::span<const std::size_t> hidden, std::size_t out,
                      Rng& rng, Activation hidden_activation = Activation::relu,
                      Activation output_activation = Activation::identity) {
    std::vector<DenseLayer> layers;
    std::size_t prev = in;
    auto add = [&](std::size_t width, Activation act) {
      DenseLayer layer{Matrix(width, prev), std::vector<double>(width, 0.0), act};
      const double limit = std::sqrt(6.0 / static_cast<double>(prev + width));
      for (double& w : layer.weight.flat()) w = rng.uniform(-limit, limit);
      layers.push_back(std::move(layer));
      prev = width;
    };
    for (std::size_t h : hidden) add(h, hidden_activation);
    add(out, output_activation);
    return DenseNet(std::move(layers));
  }

  static DenseNet mlp(std::size_t in, std::initializer_list<std::size_t> hidden,
                      std::size_t out, Rng& rng,
                      Activation hidden_activation = Activation::relu,
                      Activation output_activation = Activation::identity) {
    std::vector<std::size_t> h(hidden);
    return mlp(in, std::span<const std::size_t>(h), out, rng, hidden_activation,
               output_activation);
  }

  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }
  std::size_t depth() const noexcept { return layers_.size(); }

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
  DenseLayer& layer(std::size_t i) { return layers_.at(i); }

  void append(DenseLayer layer) {
    layers_.push_back(std::move(layer));
    validate();
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  friend bool operator==(const DenseNet&, const DenseNet&) = default;

 private:
  void validate() const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.bias.size() != l.out_dim()) {
        throw ShapeError("DenseNet: layer " + std::to_string(i) + " bias size mismatch");
      }
      if (i > 0 && layers_[i - 1].out_dim() != l.in_dim()) {
        throw ShapeError("DenseNet: layer " + std::to_string(i) + " expects " +
                         std::to_string(l.in_dim()) + " inputs, previous layer emits " +
                         std::to_string(layers_[i - 1].out_dim()));
      }
    }
  }

  std::vector<DenseLayer> layers_;
};

// Everything backprop needs from a forward pass.
struct Activations {
  Matrix input;
  std::vector<Matrix> layers;  // post-activation output of each layer

  const Matrix& output() const { return layers.empty() ? input : layers.back(); }
};

inline Activations forward(const DenseNet& net, const Matrix& x) {
  if (x.cols() != net.input_dim()) {
    throw ShapeError("forward: input has " + std::to_string(x.cols()) +
                     " columns, network expects " + std::to_string(net.input_dim()));
  }
  Activations acts{x, {}};
  acts.layers.reserve(net.depth());
  const Matrix* current = &acts.input;
  for (const auto& layer : net.layers()) {
    Matrix z = matmul_transpose_b(*current, layer.weight);
    for (std::size_t r = 0; r < z.rows(); ++r) {
      auto row = z.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        row[c] += layer.bias[c];
        if (layer.activation == Activation::relu && row[c] < 0.0) row[c] = 0.0;
      }
    }
    acts.layers.push_back(std::move(z));
    current = &acts.layers.back();
  }
  return acts;
}

inline Matrix predict(const DenseNet& net, const Matrix& x) {
  return forward(net, x).output();
}

struct LayerGradient {
  Matrix weight;
  std::vector<double> bias;
};

struct NetGradients {
  std::vector<LayerGradient> layers;
  Matrix input;  // d loss / d input

  static NetGradients zeros_like(const DenseNet& net) {
    NetGradients g;
    for (const auto& l : net.layers()) {
      g.layers.push_back({Matrix(l.out_dim(), l.in_dim()), std::vector<double>(l.out_dim())});
    }
    return g;
  }
};

// Reverse-mode pass through a dense net. `upstream` is d loss / d output.
inline NetGradients backprop(const DenseNet& net, const Activations& acts,
                             const Matrix& upstream) {
  if (acts.layers.size() != net.depth()) {
    throw ShapeError("backprop: activation count does not match network depth");
  }
  if (!upstream.same_shape(acts.output())) {
    throw ShapeError("backprop: upstream " + shape_string(upstream) + " vs output " +
                     shape_string(acts.output()));
  }
  NetGradients grads;
  grads.layers.resize(net.depth());
  Matrix delta = upstream;
  for (std::size_t li = net.depth(); li-- > 0;) {
    const DenseLayer& layer = net.layer(li);
    if (layer.activation == Activation::relu) {
      const Matrix& out = acts.layers[li];
      auto d = delta.flat();
      auto a = out.flat();
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (a[i] <= 0.0) d[i] = 0.0;
      }
    }
    const Matrix& in = li == 0 ? acts.input : acts.layers[li - 1];
    LayerGradient& g = grads.layers[li];
    g.weight = matmul_transpose_a(delta, in);
    g.bias.assign(layer.out_dim(), 0.0);
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      auto row = delta.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) g.bias[c] += row[c];
    }
    delta = matmul(delta, layer.weight);
  }
  grads.input = std::move(delta);
  return grads;
}

}  // namespace vflkdk
