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
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "vflkdk/errors.hpp"
#include "vflkdk/kdk.hpp"
#include "vflkdk/matrix.hpp"
#include "vflkdk/rng.hpp"

namespace vflkdk {

struct NoDefense {};

// Labels are replaced by anonymized teacher outputs; gradients pass unchanged.
struct KdkDefense {
  KdkConfig config;
};

struct NoisyDefense {
  double scale = 1e-3;   // Laplace scale b
  bool relative = false;  // b = scale * mean|g| of each packet
};

struct CompressDefense {
  double rate = 0.5;  // fraction of entries kept
};

struct PpdlDefense {
  double theta_u = 0.5;
  double tau_threshold = 0.0;
  double noise_sigma = 0.0;
};

enum class Calibration { first_epoch, running };
enum class OutlierPolicy { clamp, drop };

struct DiscreteSgdDefense {
  std::size_t n_intervals = 12;
  Calibration calibration = Calibration::first_epoch;
  OutlierPolicy outliers = OutlierPolicy::clamp;
};

using DefenseConfig =
    std::variant<NoDefense, KdkDefense, NoisyDefense, CompressDefense, PpdlDefense,
                 DiscreteSgdDefense>;

inline const char* defense_name(const DefenseConfig& d) {
  static constexpr const char* names[] = {"none", "kdk", "noisy", "compress", "ppdl",
                                          "discrete_sgd"};
  return names[d.index()];
}

inline void validate(const DefenseConfig& d) {
  std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, NoisyDefense>) {
          if (!(v.scale >= 0.0)) throw ParameterError("noisy: scale must be >= 0");
        } else if constexpr (std::is_same_v<T, CompressDefense>) {
          if (!(v.rate > 0.0 && v.rate <= 1.0)) throw ParameterError("compress: rate in (0,1]");
        } else if constexpr (std::is_same_v<T, PpdlDefense>) {
          if (!(v.theta_u > 0.0 && v.theta_u <= 1.0)) {
            throw ParameterError("ppdl: theta_u in (0,1]");
          }
          if (!(v.tau_threshold >= 0.0)) throw ParameterError("ppdl: tau_threshold >= 0");
          if (!(v.noise_sigma >= 0.0)) throw ParameterError("ppdl: noise_sigma >= 0");
        } else if constexpr (std::is_same_v<T, DiscreteSgdDefense>) {
          if (v.n_intervals < 1) throw ParameterError("discrete_sgd: n_intervals >= 1");
        }
      },
      d);
}

// ceil(fraction * n) for fraction in (0, 1], at least 1 when n > 0.
inline std::size_t ceil_count(double fraction, std::size_t n) {
  if (n == 0) return 0;
  const double exact = fraction * static_cast<double>(n);
  auto c = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::clamp<std::size_t>(c, 1, n);
}

// g + Laplace(0, scale), i.i.d. per entry.
inline Matrix noisy(const Matrix& g, double scale, Rng& rng) {
  if (!(scale >= 0.0)) throw ParameterError("noisy: scale must be >= 0");
  Matrix out = g;
  if (scale == 0.0) return out;
  for (double& v : out.flat()) v += rng.laplace(scale);
  return out;
}

// Keeps the ceil(rate * n) entries of largest magnitude; ties at the cutoff go
// to the lowest flat index.
inline Matrix compress(const Matrix& g, double rate) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ParameterError("compress: rate must be in (0,1]");
  if (rate == 1.0) return g;
  const auto v = g.flat();
  const std::size_t keep = ceil_count(rate, v.size());
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto before = [&](std::size_t a, std::size_t b) {
    const double ma = std::abs(v[a]);
    const double mb = std::abs(v[b]);
    return ma > mb || (ma == mb && a < b);
  };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                   before);
  Matrix out(g.rows(), g.cols());
  for (std::size_t i = 0; i < keep; ++i) out.flat()[idx[i]] = v[idx[i]];
  return out;
}

struct PpdlRelease {
  Matrix values;                       // unreleased entries are zero
  std::vector<std::size_t> released;   // flat indices, in release order
};

// Selective release: draw an unreleased entry uniformly, add N(0, sigma),
// zero it if its magnitude is below the threshold, stop after ceil(theta_u * n).
inline PpdlRelease ppdl_release(const Matrix& g, double theta_u, double tau_threshold,
                                double noise_sigma, Rng& rng) {
  validate(DefenseConfig{PpdlDefense{theta_u, tau_threshold, noise_sigma}});
  const auto v = g.flat();
  const std::size_t budget = ceil_count(theta_u, v.size());
  std::vector<std::size_t> pool(v.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  PpdlRelease r{Matrix(g.rows(), g.cols()), {}};
  r.released.reserve(budget);
  for (std::size_t i = 0; i < budget; ++i) {
    const std::size_t pick = i + rng.index(pool.size() - i);
    std::swap(pool[i], pool[pick]);
    const std::size_t at = pool[i];
    double value = v[at];
    if (noise_sigma > 0.0) value += noise_sigma * rng.normal();
    if (std::abs(value) < tau_threshold) value = 0.0;
    r.values.flat()[at] = value;
    r.released.push_back(at);
  }
  return r;
}

inline Matrix ppdl(const Matrix& g, double theta_u, double tau_threshold, double noise_sigma,
                   Rng& rng) {
  return ppdl_release(g, theta_u, tau_threshold, noise_sigma, rng).values;
}

// Mean and population standard deviation of released gradient entries.
struct GradientStats {
  double mean = 0.0;
  double stddev = 0.0;
  bool calibrated = false;
};

// Streaming accumulator behind `calibrate` and running calibration.
class GradientStatsAccumulator {
 public:
  void add(const Matrix& packet) {
    for (double v : packet.flat()) {
      ++count_;
      const double d = v - mean_;
      mean_ += d / static_cast<double>(count_);
      m2_ += d * (v - mean_);
    }
  }

  std::size_t count() const noexcept { return count_; }

  GradientStats stats() const {
    if (count_ == 0) throw StateError("calibrate: no gradient entries observed");
    return {mean_, std::sqrt(std::max(0.0, m2_ / static_cast<double>(count_))), true};
  }

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

inline GradientStats calibrate(std::span<const Matrix> packets) {
  if (packets.empty()) throw StateError("calibrate: empty packet stream");
  GradientStatsAccumulator acc;
  for (const auto& p : packets) acc.add(p);
  return acc.stats();
}

// Endpoint i of the grid mu - 2 sigma + i * 4 sigma / N, i = 0..N.
inline double discrete_endpoint(const GradientStats& s, std::size_t n_intervals, std::size_t i) {
  const double step = 4.0 * s.stddev / static_cast<double>(n_intervals);
  return (s.mean - 2.0 * s.stddev) + static_cast<double>(i) * step;
}

inline Matrix discrete_sgd(const Matrix& g, const GradientStats& stats, std::size_t n_intervals,
                           OutlierPolicy outliers = OutlierPolicy::clamp) {
  if (!stats.calibrated) throw StateError("discrete_sgd: gradient stats not calibrated");
  if (n_intervals < 1) throw ParameterError("discrete_sgd: n_intervals must be >= 1");
  Matrix out(g.rows(), g.cols());
  if (stats.stddev == 0.0) {
    for (double& v : out.flat()) v = stats.mean;
    return out;
  }
  const double lo = stats.mean - 2.0 * stats.stddev;
  const double hi = stats.mean + 2.0 * stats.stddev;
  const double step = 4.0 * stats.stddev / static_cast<double>(n_intervals);
  const auto in = g.flat();
  auto o = out.flat();
  for (std::size_t i = 0; i < in.size(); ++i) {
    double v = in[i];
    if (v < lo || v > hi) {
      if (outliers == OutlierPolicy::drop) {
        o[i] = 0.0;
        continue;
      }
      v = std::clamp(v, lo, hi);
    }
    const double pos = std::round((v - lo) / step);
    const auto cell = static_cast<std::size_t>(
        std::clamp(pos, 0.0, static_cast<double>(n_intervals)));
    o[i] = discrete_endpoint(stats, n_intervals, cell);
  }
  return out;
}

// Stateful application of a DefenseConfig to released packets: owns the noise
// stream and the discretization statistics.
class GradientDefense {
 public:
  GradientDefense() : rng_(0) {}
  GradientDefense(DefenseConfig config, std::uint64_t seed)
      : config_(std::move(config)), rng_(derive_seed(seed, "defense")) {
    vflkdk::validate(config_);
  }

  const DefenseConfig& config() const noexcept { return config_; }
  const GradientStats& stats() const noexcept { return stats_; }

  // Called at the end of every epoch; first-epoch calibration freezes here.
  void end_epoch(std::size_t epoch) {
    if (const auto* d = std::get_if<DiscreteSgdDefense>(&config_)) {
      if (d->calibration == Calibration::first_epoch && epoch == 0 && !stats_.calibrated &&
          acc_.count() > 0) {
        stats_ = acc_.stats();
      }
    }
  }

  Matrix apply(const Matrix& g) {
    return std::visit(
        [&](const auto& d) -> Matrix {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, NoisyDefense>) {
            if (!d.relative) return noisy(g, d.scale, rng_);
            double mean_abs = 0.0;
            for (double v : g.flat()) mean_abs += std::abs(v);
            if (g.size() > 0) mean_abs /= static_cast<double>(g.size());
            return noisy(g, d.scale * mean_abs, rng_);
          } else if constexpr (std::is_same_v<T, CompressDefense>) {
            return compress(g, d.rate);
          } else if constexpr (std::is_same_v<T, PpdlDefense>) {
            return ppdl(g, d.theta_u, d.tau_threshold, d.noise_sigma, rng_);
          } else if constexpr (std::is_same_v<T, DiscreteSgdDefense>) {
            if (d.calibration == Calibration::running) {
              acc_.add(g);
              stats_ = acc_.stats();
              return discrete_sgd(g, stats_, d.n_intervals, d.outliers);
            }
            if (!stats_.calibrated) {
              // Observation phase: packets go out unmodified while the
              // distribution is measured.
              acc_.add(g);
              return g;
            }
            return discrete_sgd(g, stats_, d.n_intervals, d.outliers);
          } else {
            return g;
          }
        },
        config_);
  }

 private:
  DefenseConfig config_{NoDefense{}};
  Rng rng_;
  GradientStats stats_{};
  GradientStatsAccumulator acc_{};
};

}  // namespace vflkdk
