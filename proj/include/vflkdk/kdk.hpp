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
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "vflkdk/csv.hpp"
#include "vflkdk/errors.hpp"
#include "vflkdk/loss.hpp"
#include "vflkdk/nn.hpp"
#include "vflkdk/trainer.hpp"

namespace vflkdk {

// Label anonymization parameters and the teacher that feeds it.
struct KdkConfig {
  std::size_t k = 3;
  double epsilon = 0.45;
  double tau = 1.0;  // temperature applied to teacher logits before anonymization
  std::vector<std::size_t> teacher_hidden{128, 64};
  std::size_t teacher_epochs = 50;
  std::size_t teacher_batch_size = 64;
  double teacher_learning_rate = 1e-3;
  bool teacher_all_features = true;  // false: teacher sees only the active party's slice
  double alpha = 0.5;                 // used by distill_student only
};

// Throws for invalid parameters; returns human-readable warnings otherwise.
inline std::vector<std::string> validate(const KdkConfig& c, std::size_t class_count) {
  if (c.k < 2 || c.k > class_count) {
    throw ParameterError("kdk: k must be in [2, " + std::to_string(class_count) + "]");
  }
  if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) throw ParameterError("kdk: epsilon must be in (0,1)");
  if (!(c.tau > 0.0)) throw ParameterError("kdk: tau must be > 0");
  std::vector<std::string> warnings;
  if (!(c.epsilon < static_cast<double>(c.k - 1) / static_cast<double>(c.k))) {
    warnings.push_back("kdk: epsilon >= (k-1)/k, the anonymized argmax may differ from the teacher's");
  }
  return warnings;
}

enum class LabelProvenance { one_hot, teacher_soft, kdk_anonymized };

inline const char* to_string(LabelProvenance p) {
  switch (p) {
    case LabelProvenance::one_hot: return "one_hot";
    case LabelProvenance::teacher_soft: return "teacher_soft";
    case LabelProvenance::kdk_anonymized: return "kdk_anonymized";
  }
  return "?";
}

// Per-sample target distributions over classes.
struct LabelDistributionSet {
  Matrix probs;  // samples x classes
  LabelProvenance provenance = LabelProvenance::one_hot;

  std::size_t sample_count() const noexcept { return probs.rows(); }
  std::size_t class_count() const noexcept { return probs.cols(); }
};

inline LabelDistributionSet one_hot_labels(std::span<const std::size_t> labels,
                                           std::size_t classes) {
  LabelDistributionSet out{Matrix(labels.size(), classes), LabelProvenance::one_hot};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw ParameterError("one_hot_labels: label out of range");
    out.probs(i, labels[i]) = 1.0;
  }
  return out;
}

struct TeacherResult {
  DenseNet teacher;
  double train_accuracy = 0.0;
};

// Plain cross-entropy training of the active party's teacher.
inline TeacherResult train_teacher(const KdkConfig& config, const Matrix& features,
                                   std::span<const std::size_t> labels, std::size_t classes,
                                   std::uint64_t seed) {
  if (features.rows() != labels.size()) throw ShapeError("train_teacher: rows != labels");
  Rng init(derive_seed(seed, "teacher.init"));
  TeacherResult r{DenseNet::mlp(features.cols(), config.teacher_hidden, classes, init), 0.0};
  const auto targets = one_hot_labels(labels, classes);
  FitOptions opt;
  opt.epochs = config.teacher_epochs;
  opt.batch_size = config.teacher_batch_size;
  opt.optimizer = {OptimizerKind::adam, config.teacher_learning_rate, {}, {}};
  opt.seed = derive_seed(seed, "teacher.batches");
  fit_to_targets(r.teacher, features, targets.probs, opt);
  r.train_accuracy = top1_accuracy(predict(r.teacher, features), labels);
  return r;
}

inline LabelDistributionSet teacher_soft_labels(const DenseNet& teacher, const Matrix& features,
                                                double tau) {
  if (!(tau > 0.0)) throw ParameterError("teacher_soft_labels: tau must be > 0");
  return {softmax_rows(predict(teacher, features), tau), LabelProvenance::teacher_soft};
}

// Indices of the k largest entries, largest first; equal values keep index order.
inline std::vector<std::size_t> top_k_indices(std::span<const double> row, std::size_t k) {
  std::vector<std::size_t> idx(row.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

// The anonymized row: 1 - epsilon at the argmax, epsilon / (k - 1) at the other
// k - 1 most probable classes, zero elsewhere.
inline std::vector<double> anonymize_row(std::span<const double> row, std::size_t k,
                                         double epsilon) {
  if (k < 2 || k > row.size()) throw ParameterError("anonymize: k must be in [2, C]");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ParameterError("anonymize: epsilon must be in (0,1)");
  const auto top = top_k_indices(row, k);
  std::vector<double> out(row.size(), 0.0);
  const double high = 1.0 - epsilon;
  const double low = epsilon / static_cast<double>(k - 1);
  out[top.front()] = high;
  for (std::size_t i = 1; i < top.size(); ++i) out[top[i]] = low;
  return out;
}

inline LabelDistributionSet anonymize(const LabelDistributionSet& soft, std::size_t k,
                                      double epsilon) {
  LabelDistributionSet out{Matrix(soft.probs.rows(), soft.probs.cols()),
                           LabelProvenance::kdk_anonymized};
  for (std::size_t r = 0; r < soft.probs.rows(); ++r) {
    const auto row = anonymize_row(soft.probs.row(r), k, epsilon);
    std::copy(row.begin(), row.end(), out.probs.row(r).begin());
  }
  return out;
}

// Target distributions the active party trains the top model against.
inline LabelDistributionSet kdk_label_provider(const KdkConfig& config, const DenseNet& teacher,
                                               const Matrix& teacher_features) {
  validate(config, teacher.output_dim());
  return anonymize(teacher_soft_labels(teacher, teacher_features, config.tau), config.k,
                   config.epsilon);
}

// Student trained on alpha * CE(softmax(z), hard) +
// (1 - alpha) * tau^2 * CE(softmax(z / tau), softmax(t / tau)).
// Not part of the anonymization pipeline; kept as a distillation utility.
inline DenseNet distill_student(const DenseNet& teacher, DenseNet student, const Matrix& x,
                                std::span<const std::size_t> labels, double alpha, double tau,
                                const FitOptions& opt) {
  if (student.output_dim() != teacher.output_dim()) {
    throw ShapeError("distill_student: student and teacher output dims differ");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("distill_student: alpha in [0,1]");
  if (!(tau > 0.0)) throw ParameterError("distill_student: tau must be > 0");
  const std::size_t classes = teacher.output_dim();
  const Matrix hard = one_hot_labels(labels, classes).probs;
  const Matrix teacher_soft = softmax_rows(predict(teacher, x), tau);
  fit(
      student, x,
      [&](const Matrix& logits, std::span<const std::size_t> batch) {
        Matrix g = ce_softmax_grad(logits, gather_rows(hard, batch));
        if (alpha == 1.0) return g;
        // d/dz of tau^2 * CE(softmax(z/tau), q) is tau * (softmax(z/tau) - q).
        const Matrix target = gather_rows(teacher_soft, batch);
        const Matrix soft = softmax_rows(logits, tau);
        const double inv_batch = 1.0 / static_cast<double>(logits.rows());
        auto gv = g.flat();
        for (std::size_t i = 0; i < gv.size(); ++i) {
          const double distill = tau * (soft.flat()[i] - target.flat()[i]) * inv_batch;
          gv[i] = alpha * gv[i] + (1.0 - alpha) * distill;
        }
        return g;
      },
      opt);
  return student;
}

// Audit format: header `sample_index,p0,...,p{C-1}`, one row per sample.
inline void write_label_csv(const LabelDistributionSet& labels, std::ostream& out) {
  out << "sample_index";
  for (std::size_t c = 0; c < labels.class_count(); ++c) out << ",p" << c;
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < labels.sample_count(); ++r) {
    out << r;
    for (double v : labels.probs.row(r)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

inline LabelDistributionSet read_label_csv(std::istream& in,
                                           LabelProvenance provenance =
                                               LabelProvenance::kdk_anonymized) {
  const auto table = parse_csv(in);
  if (table.header.size() < 2 || table.header.front() != "sample_index") {
    throw DataError("label csv: header must start with sample_index");
  }
  const std::size_t classes = table.header.size() - 1;
  LabelDistributionSet out{Matrix(table.rows.size(), classes), provenance};
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto idx = detail::parse_number(table.rows[r][0]);
    if (!idx || *idx != static_cast<double>(r)) {
      throw DataError("label csv: sample_index must be 0..n-1 in order");
    }
    for (std::size_t c = 0; c < classes; ++c) {
      const auto v = detail::parse_number(table.rows[r][c + 1]);
      if (!v) throw DataError("label csv: unparseable probability at row " + std::to_string(r));
      out.probs(r, c) = *v;
    }
  }
  require_distribution_rows(out.probs, "label csv");
  return out;
}

}  // namespace vflkdk
