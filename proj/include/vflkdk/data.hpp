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
#include <utility>
#include <vector>

#include "vflkdk/errors.hpp"
#include "vflkdk/matrix.hpp"
#include "vflkdk/rng.hpp"

namespace vflkdk {

enum class Split { train, test };

inline const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

// Sample-aligned features split across parties. Party 0 is the active party;
// `labels` belongs to it alone.
struct VerticalDataset {
  std::size_t class_count = 0;
  std::vector<Matrix> party_features;
  std::vector<std::size_t> labels;
  Split split = Split::train;

  std::size_t sample_count() const noexcept { return labels.size(); }
  std::size_t party_count() const noexcept { return party_features.size(); }

  std::vector<std::size_t> feature_dims() const {
    std::vector<std::size_t> d;
    for (const auto& m : party_features) d.push_back(m.cols());
    return d;
  }

  void validate() const {
    if (party_features.empty()) throw DataError("dataset: no parties");
    for (std::size_t p = 0; p < party_features.size(); ++p) {
      if (party_features[p].rows() != labels.size()) {
        throw DataError("dataset: party " + std::to_string(p) + " has " +
                        std::to_string(party_features[p].rows()) + " rows, expected " +
                        std::to_string(labels.size()));
      }
    }
    for (std::size_t y : labels) {
      if (y >= class_count) throw DataError("dataset: label out of range");
    }
  }

  VerticalDataset subset(std::span<const std::size_t> indices) const {
    VerticalDataset out{class_count, {}, {}, split};
    for (const auto& m : party_features) out.party_features.push_back(gather_rows(m, indices));
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) out.labels.push_back(labels.at(i));
    return out;
  }

  // All parties' features side by side, party order preserved.
  Matrix joint_features() const { return hconcat(party_features); }

  friend bool operator==(const VerticalDataset&, const VerticalDataset&) = default;
};

// What one party holds locally: its feature slice, nothing else.
struct PartyData {
  std::size_t party = 0;
  Matrix features;
};

inline PartyData party_view(const VerticalDataset& ds, std::size_t party) {
  if (party >= ds.party_count()) throw ParameterError("party_view: no such party");
  return PartyData{party, ds.party_features[party]};
}

struct SyntheticSpec {
  std::size_t classes = 10;
  std::size_t train_samples = 2000;
  std::size_t test_samples = 500;
  std::vector<std::size_t> feature_dims{8, 8};
  double cluster_spread = 0.5;
  std::uint64_t seed = 1;
};

// Gaussian class clusters per party. Each (class, party) pair has one mean,
// drawn from a standard normal and rescaled to unit length; samples are that
// mean plus isotropic noise of standard deviation `cluster_spread`.
inline std::pair<VerticalDataset, VerticalDataset> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw ParameterError("generate_synthetic: classes must be >= 2");
  if (spec.feature_dims.empty()) throw ParameterError("generate_synthetic: no parties");
  for (std::size_t d : spec.feature_dims) {
    if (d < 1) throw ParameterError("generate_synthetic: feature dims must be >= 1");
  }
  if (spec.classes > spec.train_samples) {
    throw ParameterError("generate_synthetic: more classes than samples");
  }
  if (!(spec.cluster_spread >= 0.0)) {
    throw ParameterError("generate_synthetic: cluster_spread must be >= 0");
  }

  Rng mean_rng(derive_seed(spec.seed, "synthetic.means"));
  std::vector<Matrix> means;  // per party: classes x dim
  for (std::size_t d : spec.feature_dims) {
    Matrix m(spec.classes, d);
    for (std::size_t c = 0; c < spec.classes; ++c) {
      double norm = 0.0;
      for (double& v : m.row(c)) {
        v = mean_rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
      if (norm > 0.0) {
        for (double& v : m.row(c)) v /= norm;
      }
    }
    means.push_back(std::move(m));
  }

  auto build = [&](std::size_t n, Split split, std::string_view tag) {
    Rng rng(derive_seed(spec.seed, tag));
    VerticalDataset ds{spec.classes, {}, std::vector<std::size_t>(n), split};
    for (std::size_t i = 0; i < n; ++i) ds.labels[i] = i % spec.classes;
    rng.shuffle(std::span<std::size_t>(ds.labels));
    for (std::size_t p = 0; p < spec.feature_dims.size(); ++p) {
      Matrix x(n, spec.feature_dims[p]);
      for (std::size_t i = 0; i < n; ++i) {
        auto mu = means[p].row(ds.labels[i]);
        auto row = x.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
          row[j] = mu[j] + spec.cluster_spread * rng.normal();
        }
      }
      ds.party_features.push_back(std::move(x));
    }
    return ds;
  };
  return {build(spec.train_samples, Split::train, "synthetic.train"),
          build(spec.test_samples, Split::test, "synthetic.test")};
}

// Labelled training samples the passive attacker is assumed to hold.
struct AuxiliaryLabelSet {
  std::vector<std::size_t> indices;  // into the training split, ascending
  std::vector<std::size_t> labels;
  double fraction = 0.0;
  bool floor_applied = false;  // too few samples for the fraction; took one per class

  std::size_t size() const noexcept { return indices.size(); }
};

enum class AuxSampling { stratified, uniform };

inline AuxiliaryLabelSet sample_auxiliary(const VerticalDataset& train, double fraction,
                                          std::uint64_t seed,
                                          AuxSampling mode = AuxSampling::stratified) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ParameterError("sample_auxiliary: fraction must be in (0,1)");
  }
  const std::size_t n = train.sample_count();
  const std::size_t classes = train.class_count;
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < n; ++i) by_class[train.labels[i]].push_back(i);
  std::size_t populated = 0;
  for (const auto& c : by_class) populated += c.empty() ? 0 : 1;

  Rng rng(derive_seed(seed, "auxiliary"));
  for (auto& c : by_class) rng.shuffle(std::span<std::size_t>(c));

  AuxiliaryLabelSet aux;
  aux.fraction = fraction;
  const auto target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> chosen;

  if (target < populated) {
    // Floor guard: one sample from every class present.
    aux.floor_applied = true;
    for (const auto& c : by_class) {
      if (!c.empty()) chosen.push_back(c.front());
    }
  } else if (mode == AuxSampling::uniform) {
    auto perm = rng.permutation(n);
    chosen.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(target));
  } else {
    // One per class, then the remainder split proportionally to class size by
    // largest remainder (lowest class index wins ties).
    std::vector<std::size_t> quota(classes, 0);
    std::size_t left = target;
    for (std::size_t c = 0; c < classes; ++c) {
      if (!by_class[c].empty()) {
        quota[c] = 1;
        --left;
      }
    }
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    const std::size_t pool = n - populated;
    for (std::size_t c = 0; c < classes && pool > 0; ++c) {
      if (by_class[c].empty()) continue;
      const double share = static_cast<double>(left) *
                           static_cast<double>(by_class[c].size() - 1) /
                           static_cast<double>(pool);
      const auto whole = static_cast<std::size_t>(std::floor(share));
      quota[c] += whole;
      assigned += whole;
      remainders.emplace_back(share - static_cast<double>(whole), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < left && i < remainders.size(); ++i) {
      ++quota[remainders[i].second];
      ++assigned;
    }
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t take = std::min(quota[c], by_class[c].size());
      chosen.insert(chosen.end(), by_class[c].begin(),
                    by_class[c].begin() + static_cast<std::ptrdiff_t>(take));
    }
  }
  std::sort(chosen.begin(), chosen.end());
  aux.indices = chosen;
  for (std::size_t i : chosen) aux.labels.push_back(train.labels[i]);
  return aux;
}

}  // namespace vflkdk
