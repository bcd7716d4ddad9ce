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
#include <span>
#include <string>
#include <vector>

#include "vflkdk/errors.hpp"
#include "vflkdk/matrix.hpp"

namespace vflkdk {

inline constexpr double kProbabilityFloor = 1e-12;
inline constexpr double kRowSumTolerance = 1e-6;

inline std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> p(z.size());
  if (z.empty()) return p;
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

// exp(z_k / tau) / sum_j exp(z_j / tau).
inline std::vector<double> softmax_temperature(std::span<const double> z, double tau) {
  if (!(tau > 0.0)) throw ParameterError("softmax_temperature: tau must be > 0");
  if (tau == 1.0) return softmax(z);
  std::vector<double> scaled(z.begin(), z.end());
  for (double& v : scaled) v /= tau;
  return softmax(scaled);
}

inline Matrix softmax_rows(const Matrix& logits, double tau = 1.0) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto p = softmax_temperature(logits.row(r), tau);
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

inline void require_distribution_rows(const Matrix& m, const char* what) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (double v : m.row(r)) {
      if (!std::isfinite(v) || v < 0.0) {
        throw DistributionError(std::string(what) + ": row " + std::to_string(r) +
                                " has a negative or non-finite entry");
      }
      s += v;
    }
    if (std::abs(s - 1.0) > kRowSumTolerance) {
      throw DistributionError(std::string(what) + ": row " + std::to_string(r) +
                              " sums to " + std::to_string(s));
    }
  }
}

// -(1/batch) * sum_rows sum_c target * ln(max(pred, 1e-12)).
inline double cross_entropy_soft(const Matrix& pred_probs, const Matrix& target_dist) {
  require_same_shape(pred_probs, target_dist, "cross_entropy_soft");
  require_distribution_rows(pred_probs, "cross_entropy_soft(pred)");
  require_distribution_rows(target_dist, "cross_entropy_soft(target)");
  if (pred_probs.rows() == 0) return 0.0;
  double total = 0.0;
  auto p = pred_probs.flat();
  auto t = target_dist.flat();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (t[i] != 0.0) total -= t[i] * std::log(std::max(p[i], kProbabilityFloor));
  }
  return total / static_cast<double>(pred_probs.rows());
}

// alpha * CE(student, hard) + (1 - alpha) * tau^2 * CE(student, teacher).
inline double kd_loss(const Matrix& student_soft, const Matrix& teacher_soft,
                      const Matrix& hard, double alpha, double tau) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("kd_loss: alpha must be in [0,1]");
  if (!(tau > 0.0)) throw ParameterError("kd_loss: tau must be > 0");
  const double classification = cross_entropy_soft(student_soft, hard);
  if (alpha == 1.0) return classification;
  const double distillation = tau * tau * cross_entropy_soft(student_soft, teacher_soft);
  return alpha * classification + (1.0 - alpha) * distillation;
}

// d CE(softmax(logits), target) / d logits, averaged over the batch.
inline Matrix ce_softmax_grad(const Matrix& logits, const Matrix& target_dist) {
  require_same_shape(logits, target_dist, "ce_softmax_grad");
  require_distribution_rows(target_dist, "ce_softmax_grad(target)");
  Matrix grad = softmax_rows(logits);
  const double inv_batch = logits.rows() == 0 ? 0.0 : 1.0 / static_cast<double>(logits.rows());
  auto g = grad.flat();
  auto t = target_dist.flat();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (g[i] - t[i]) * inv_batch;
  return grad;
}

}  // namespace vflkdk
