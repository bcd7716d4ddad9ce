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
#include <functional>

#include "vflkdk/nn.hpp"

namespace vflkdk {

// Central finite differences of a scalar loss with respect to every weight,
// bias and input entry. Only `forward` is used, never `backprop`.
inline NetGradients finite_difference_gradients(
    const DenseNet& net, const Matrix& x,
    const std::function<double(const Matrix& output)>& loss, double step = 1e-5) {
  DenseNet probe = net;
  NetGradients g = NetGradients::zeros_like(net);
  auto central = [&](double& slot, const auto& eval) {
    const double saved = slot;
    slot = saved + step;
    const double up = eval();
    slot = saved - step;
    const double down = eval();
    slot = saved;
    return (up - down) / (2.0 * step);
  };
  auto eval_net = [&] { return loss(predict(probe, x)); };
  for (std::size_t l = 0; l < probe.depth(); ++l) {
    auto& layer = probe.layer(l);
    auto w = layer.weight.flat();
    auto gw = g.layers[l].weight.flat();
    for (std::size_t i = 0; i < w.size(); ++i) gw[i] = central(w[i], eval_net);
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      g.layers[l].bias[i] = central(layer.bias[i], eval_net);
    }
  }
  Matrix xin = x;
  g.input = Matrix(x.rows(), x.cols());
  auto eval_input = [&] { return loss(predict(net, xin)); };
  for (std::size_t i = 0; i < xin.size(); ++i) {
    g.input.flat()[i] = central(xin.flat()[i], eval_input);
  }
  return g;
}

// max |a - b| / max(|a|, |b|, floor) over every entry of both gradient sets.
inline double max_relative_error(const NetGradients& a, const NetGradients& b,
                                 double floor = 1e-8) {
  double worst = 0.0;
  auto accumulate = [&](std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ShapeError("max_relative_error: size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double denom = std::max({std::abs(x[i]), std::abs(y[i]), floor});
      worst = std::max(worst, std::abs(x[i] - y[i]) / denom);
    }
  };
  if (a.layers.size() != b.layers.size()) throw ShapeError("max_relative_error: depth");
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    accumulate(a.layers[l].weight.flat(), b.layers[l].weight.flat());
    accumulate(a.layers[l].bias, b.layers[l].bias);
  }
  accumulate(a.input.flat(), b.input.flat());
  return worst;
}

}  // namespace vflkdk
