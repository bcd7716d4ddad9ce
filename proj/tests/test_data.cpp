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


#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "vflkdk/csv.hpp"
#include "vflkdk/data.hpp"
#include "vflkdk/trainer.hpp"
#include "vflkdk/vfl.hpp"

using namespace vflkdk;

TEST(Synthetic, DeterministicPerSeed) {
  SyntheticSpec s;
  s.classes = 2;
  s.train_samples = 100;
  s.feature_dims = {2, 2};
  s.seed = 17;
  EXPECT_EQ(generate_synthetic(s), generate_synthetic(s));
  auto other = s;
  other.seed = 18;
  EXPECT_NE(generate_synthetic(s).first, generate_synthetic(other).first);
}

TEST(Synthetic, ShapesAndBalance) {
  SyntheticSpec s;  // 10 classes, 2000/500, dims [8,8]
  const auto [tr, te] = generate_synthetic(s);
  tr.validate();
  te.validate();
  EXPECT_EQ(tr.sample_count(), 2000u);
  EXPECT_EQ(te.sample_count(), 500u);
  EXPECT_EQ(tr.feature_dims(), (std::vector<std::size_t>{8, 8}));
  std::vector<int> count(10);
  for (auto y : tr.labels) ++count[y];
  for (int c : count) EXPECT_EQ(c, 200);
  EXPECT_EQ(tr.split, Split::train);
  EXPECT_EQ(te.split, Split::test);
}

TEST(Synthetic, ZeroSpreadCollapsesClassesAndIsLinearlySeparable) {
  SyntheticSpec s;
  s.cluster_spread = 0.0;
  s.train_samples = 300;
  s.test_samples = 50;
  const auto [tr, te] = generate_synthetic(s);
  const Matrix x = tr.joint_features();
  std::vector<std::vector<double>> first(10);
  for (std::size_t i = 0; i < tr.sample_count(); ++i) {
    auto row = x.row(i);
    auto& ref = first[tr.labels[i]];
    if (ref.empty()) {
      ref.assign(row.begin(), row.end());
    } else {
      EXPECT_TRUE(std::equal(ref.begin(), ref.end(), row.begin()));
    }
  }
  Rng rng(1);
  DenseNet linear = DenseNet::mlp(16, {}, 10, rng);
  FitOptions opt;
  opt.epochs = 200;
  opt.batch_size = 32;
  opt.optimizer = {OptimizerKind::adam, 0.05, {}, {}};
  fit_to_targets(linear, x, one_hot_labels(tr.labels, 10).probs, opt);
  EXPECT_EQ(top1_accuracy(predict(linear, x), tr.labels), 1.0);
}

TEST(Synthetic, RejectsMoreClassesThanSamples) {
  SyntheticSpec s;
  s.classes = 10;
  s.train_samples = 5;
  EXPECT_THROW(generate_synthetic(s), ParameterError);
}

TEST(Synthetic, CanaryRowAlignmentSurvivesShuffle) {
  // Replace the feature generator's output with a canary: every row of
  // every party carries its own sample index through subset/gather.
  SyntheticSpec s;
  s.train_samples = 200;
  auto [tr, te] = generate_synthetic(s);
  for (std::size_t p = 0; p < tr.party_count(); ++p) {
    for (std::size_t i = 0; i < tr.sample_count(); ++i) {
      tr.party_features[p](i, 0) = static_cast<double>(i) + 1000.0 * tr.labels[i];
    }
  }
  Rng rng(4);
  const auto perm = rng.permutation(tr.sample_count());
  const auto sub = tr.subset(perm);
  for (std::size_t r = 0; r < perm.size(); ++r) {
    for (std::size_t p = 0; p < sub.party_count(); ++p) {
      EXPECT_EQ(sub.party_features[p](r, 0), static_cast<double>(perm[r]) + 1000.0 * sub.labels[r]);
    }
  }
}

TEST(Synthetic, PartiesShareLabelsAfterGeneration) {
  // The generator shuffles once with a shared permutation: per-party class
  // means computed from the labels must be far apart on both parties.
  SyntheticSpec s;
  s.cluster_spread = 0.05;
  const auto [tr, te] = generate_synthetic(s);
  for (std::size_t p = 0; p < 2; ++p) {
    std::vector<std::vector<double>> mean(10, std::vector<double>(8, 0.0));
    for (std::size_t i = 0; i < tr.sample_count(); ++i) {
      for (std::size_t d = 0; d < 8; ++d) mean[tr.labels[i]][d] += tr.party_features[p](i, d) / 200.0;
    }
    for (std::size_t c = 0; c < 10; ++c) {
      double norm = 0;
      for (double v : mean[c]) norm += v * v;
      EXPECT_NEAR(std::sqrt(norm), 1.0, 0.05);  // unit-norm class means
    }
  }
}

TEST(Auxiliary, StratifiedArithmetic) {
  SyntheticSpec s;
  const auto [tr, te] = generate_synthetic(s);
  const auto aux = sample_auxiliary(tr, 0.01, 3);
  EXPECT_EQ(aux.size(), 20u);
  EXPECT_FALSE(aux.floor_applied);
  std::vector<int> per(10);
  for (std::size_t j = 0; j < aux.size(); ++j) {
    EXPECT_EQ(aux.labels[j], tr.labels[aux.indices[j]]);
    ++per[aux.labels[j]];
  }
  for (int c : per) EXPECT_EQ(c, 2);
  EXPECT_TRUE(std::is_sorted(aux.indices.begin(), aux.indices.end()));
  EXPECT_EQ(std::set<std::size_t>(aux.indices.begin(), aux.indices.end()).size(), aux.size());
}

TEST(Auxiliary, FloorGuard) {
  SyntheticSpec s;
  const auto [tr, te] = generate_synthetic(s);
  const auto aux = sample_auxiliary(tr, 0.0008, 3);
  EXPECT_EQ(aux.size(), 10u);
  EXPECT_TRUE(aux.floor_applied);
  std::set<std::size_t> classes(aux.labels.begin(), aux.labels.end());
  EXPECT_EQ(classes.size(), 10u);
}

TEST(Auxiliary, DeterministicAndWithinTrain) {
  SyntheticSpec s;
  const auto [tr, te] = generate_synthetic(s);
  const auto a = sample_auxiliary(tr, 0.05, 9);
  const auto b = sample_auxiliary(tr, 0.05, 9);
  EXPECT_EQ(a.indices, b.indices);
  EXPECT_NE(a.indices, sample_auxiliary(tr, 0.05, 10).indices);
  for (auto i : a.indices) EXPECT_LT(i, tr.sample_count());
  const auto u = sample_auxiliary(tr, 0.05, 9, AuxSampling::uniform);
  EXPECT_EQ(u.size(), 100u);
  EXPECT_THROW(sample_auxiliary(tr, 0.0, 1), ParameterError);
}

namespace {

std::string write_file(const std::string& name, const std::string& text) {
  const auto dir = testutil::temp_dir("csv");
  const auto p = (dir / name).string();
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST(Csv, ToyShapesAndLabels) {
  const auto path = write_file("toy.csv", "a,b,c,label\n1,2,3,cat\n4,5,6,dog\n7,8,9,cat\n");
  CsvSpec spec;
  spec.label_column = std::string("label");
  spec.party_columns = {{std::string("a")}, {std::string("b"), std::size_t{2}}};
  const auto ds = load_csv(path, spec);
  EXPECT_EQ(ds.party_count(), 2u);
  EXPECT_EQ(ds.party_features[0].rows(), 3u);
  EXPECT_EQ(ds.party_features[1].rows(), 3u);
  EXPECT_EQ(ds.party_features[1].cols(), 2u);
  EXPECT_EQ(ds.labels, (std::vector<std::size_t>{0, 1, 0}));
  EXPECT_EQ(ds.class_count, 2u);
  // z-scored: column a = {1,4,7}, mean 4, population std sqrt(6)
  EXPECT_NEAR(ds.party_features[0](0, 0), -3.0 / std::sqrt(6.0), 1e-12);
}

TEST(Csv, ConstantColumnBecomesZeros) {
  const auto path = write_file("const.csv", "x,k,y\n1,5,a\n2,5,b\n3,5,a\n");
  CsvSpec spec;
  spec.label_column = std::string("y");
  spec.party_columns = {{std::string("x")}, {std::string("k")}};
  const auto ds = load_csv(path, spec);
  for (double v : ds.party_features[1].flat()) EXPECT_EQ(v, 0.0);
}

TEST(Csv, CategoricalOneHotAndUnknownCategories) {
  const auto train = write_file("tr.csv", "color,x,y\nred,1,0\nblue,2,1\nred,3,0\n");
  const auto dir = std::filesystem::path(train).parent_path();
  const auto test = (dir / "te.csv").string();
  std::ofstream(test) << "color,x,y\ngreen,1,1\nblue,2,0\n";
  CsvSpec spec;
  spec.label_column = std::string("y");
  spec.party_columns = {{std::string("x")}, {std::string("color")}};
  const auto [tr, te] = load_csv_pair(train, test, spec);
  EXPECT_EQ(tr.party_features[1], (Matrix{{1, 0}, {0, 1}, {1, 0}}));
  EXPECT_EQ(te.party_features[1], (Matrix{{0, 0}, {0, 1}}));
}

TEST(Csv, ColumnOwnedByOneGroupOnly) {
  const auto text = std::string("x,y\n1,0\n2,1\n3,0\n4,1\n");
  std::istringstream in(text);
  const auto table = parse_csv(in);
  CsvSpec spec;
  spec.label_column = std::string("y");
  spec.party_columns = {{std::string("x")}, {std::string("x")}};
  // a column may not be owned by two parties
  EXPECT_THROW(TabularEncoder(table, spec), DataError);
  spec.party_columns = {{std::size_t{0}}, {std::size_t{0}}};
  EXPECT_THROW(TabularEncoder(table, spec), DataError);
}

TEST(Csv, NormalisationIdempotentWithin1e9) {
  const auto text = std::string("x,z,y\n1,10,0\n2,30,1\n3,20,0\n4,60,1\n");
  std::istringstream in(text);
  const auto table = parse_csv(in);
  CsvSpec spec;
  spec.label_column = std::string("y");
  spec.party_columns = {{std::string("x")}, {std::string("z")}};
  const auto once = TabularEncoder(table, spec).encode(table, Split::train);
  // Re-encode the normalised values with freshly fitted statistics.
  CsvTable again{table.header, {}};
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    char a[64], b[64];
    std::snprintf(a, sizeof a, "%.17g", once.party_features[0](r, 0));
    std::snprintf(b, sizeof b, "%.17g", once.party_features[1](r, 0));
    again.rows.push_back({a, b, table.rows[r][2]});
  }
  const auto twice = TabularEncoder(again, spec).encode(again, Split::train);
  for (std::size_t p = 0; p < 2; ++p) {
    EXPECT_LT(max_abs_difference(once.party_features[p], twice.party_features[p]), 1e-9);
  }
}

TEST(Csv, QuotedFieldsAndBadNumbers) {
  std::istringstream in("\"a,b\",y\n\"1\",x\n");
  const auto t = parse_csv(in);
  ASSERT_EQ(t.header.size(), 2u);
  EXPECT_EQ(t.header[0], "a,b");
  EXPECT_EQ(t.rows[0][0], "1");
  const auto train = write_file("bad.csv", "x,k,y\n1,2,a\n2,3,b\n");
  const auto test = (std::filesystem::path(train).parent_path() / "bad_te.csv").string();
  std::ofstream(test) << "x,k,y\nnope,2,a\n";
  CsvSpec spec;
  spec.label_column = std::string("y");
  spec.party_columns = {{std::string("x")}, {std::string("k")}};
  EXPECT_THROW(load_csv_pair(train, test, spec), DataError);
}

TEST(Csv, SplitHoldsOutFraction) {
  std::string text = "x,k,y\n";
  for (int i = 0; i < 50; ++i) text += std::to_string(i) + "," + std::to_string(i % 7) + "," + std::to_string(i % 2) + "\n";
  const auto path = write_file("split.csv", text);
  CsvSpec spec;
  spec.label_column = std::string("y");
  spec.party_columns = {{std::string("x")}, {std::string("k")}};
  const auto [tr, te] = load_csv_split(path, spec, 0.2, 5);
  EXPECT_EQ(tr.sample_count() + te.sample_count(), 50u);
  EXPECT_EQ(te.sample_count(), 10u);
}
