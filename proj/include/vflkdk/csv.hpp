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

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "vflkdk/data.hpp"
#include "vflkdk/errors.hpp"

namespace vflkdk {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  out.push_back(std::move(cell));
  return out;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

inline CsvTable parse_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
      line.erase(0, 3);
    }
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    for (auto& c : cells) c = detail::trim(c);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw DataError("csv: line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " cells, header has " +
                      std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw DataError("csv: empty input");
  return t;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("csv: cannot open " + path);
  return parse_csv(in);
}

// A column named by header text or zero-based position.
using ColumnRef = std::variant<std::size_t, std::string>;

inline std::size_t resolve_column(const CsvTable& t, const ColumnRef& ref) {
  if (const auto* idx = std::get_if<std::size_t>(&ref)) {
    if (*idx >= t.header.size()) throw DataError("csv: column index out of range");
    return *idx;
  }
  const auto& name = std::get<std::string>(ref);
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (t.header[i] == name) return i;
  }
  throw DataError("csv: no column named '" + name + "'");
}

struct CsvSpec {
  ColumnRef label_column = std::size_t{0};
  std::vector<std::vector<ColumnRef>> party_columns;
  // Columns forced to one-hot encoding. Any other column holding a
  // non-numeric cell in the fitting table is also treated as categorical.
  std::vector<ColumnRef> categorical;
};

// Column statistics fitted on the training table and reused on test tables.
class TabularEncoder {
 public:
  TabularEncoder(const CsvTable& train, const CsvSpec& spec) { fit(train, spec); }

  std::size_t class_count() const noexcept { return label_values_.size(); }
  const std::vector<std::string>& class_names() const noexcept { return label_values_; }
  // Test-time categorical values never seen during fitting (encoded as zeros).
  std::size_t unknown_category_count() const noexcept { return unknown_categories_; }

  VerticalDataset encode(const CsvTable& t, Split split) {
    VerticalDataset ds{label_values_.size(), {}, {}, split};
    ds.labels.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto& v = t.rows[r][label_col_];
      auto it = label_index_.find(v);
      if (it == label_index_.end()) {
        throw DataError("csv: row " + std::to_string(r + 1) + " has unseen label '" + v + "'");
      }
      ds.labels.push_back(it->second);
    }
    for (const auto& party : parties_) {
      std::size_t width = 0;
      for (const auto& col : party) width += col.encoded_width();
      Matrix x(t.rows.size(), width);
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        std::size_t offset = 0;
        for (const auto& col : party) {
          const auto& cell = t.rows[r][col.index];
          if (col.categorical) {
            auto it = col.categories.find(cell);
            if (it == col.categories.end()) {
              ++unknown_categories_;
            } else {
              x(r, offset + it->second) = 1.0;
            }
          } else {
            const auto v = detail::parse_number(cell);
            if (!v) {
              throw DataError("csv: unparseable cell '" + cell + "' at row " +
                              std::to_string(r + 1) + ", column '" + t.header[col.index] +
                              "'");
            }
            x(r, offset) = col.stddev > 0.0 ? (*v - col.mean) / col.stddev : 0.0;
          }
          offset += col.encoded_width();
        }
      }
      ds.party_features.push_back(std::move(x));
    }
    ds.validate();
    return ds;
  }

 private:
  struct Column {
    std::size_t index = 0;
    bool categorical = false;
    double mean = 0.0;
    double stddev = 0.0;
    std::map<std::string, std::size_t> categories;

    std::size_t encoded_width() const { return categorical ? categories.size() : 1; }
  };

  void fit(const CsvTable& t, const CsvSpec& spec) {
    label_col_ = resolve_column(t, spec.label_column);
    for (const auto& row : t.rows) {
      const auto& v = row[label_col_];
      if (label_index_.try_emplace(v, label_values_.size()).second) label_values_.push_back(v);
    }
    std::vector<bool> forced(t.header.size(), false);
    for (const auto& ref : spec.categorical) forced[resolve_column(t, ref)] = true;
    std::vector<bool> used(t.header.size(), false);
    used[label_col_] = true;
    if (spec.party_columns.empty()) throw DataError("csv: no party columns");
    for (const auto& group : spec.party_columns) {
      if (group.empty()) throw DataError("csv: empty party column group");
      std::vector<Column> party;
      for (const auto& ref : group) {
        Column col;
        col.index = resolve_column(t, ref);
        if (used[col.index]) {
          throw DataError("csv: column '" + t.header[col.index] +
                          "' used twice (groups must be disjoint from each other and the label)");
        }
        used[col.index] = true;
        col.categorical = forced[col.index];
        if (!col.categorical) {
          for (const auto& row : t.rows) {
            if (!detail::parse_number(row[col.index])) {
              col.categorical = true;
              break;
            }
          }
        }
        if (col.categorical) {
          for (const auto& row : t.rows) {
            col.categories.try_emplace(row[col.index], col.categories.size());
          }
        } else {
          double sum = 0.0;
          for (const auto& row : t.rows) sum += *detail::parse_number(row[col.index]);
          const double n = static_cast<double>(std::max<std::size_t>(t.rows.size(), 1));
          col.mean = sum / n;
          double ss = 0.0;
          for (const auto& row : t.rows) {
            const double d = *detail::parse_number(row[col.index]) - col.mean;
            ss += d * d;
          }
          col.stddev = std::sqrt(ss / n);
          if (col.stddev < 1e-12) col.stddev = 0.0;
        }
        party.push_back(std::move(col));
      }
      parties_.push_back(std::move(party));
    }
  }

  std::size_t label_col_ = 0;
  std::map<std::string, std::size_t> label_index_;
  std::vector<std::string> label_values_;  // first-appearance order
  std::vector<std::vector<Column>> parties_;
  std::size_t unknown_categories_ = 0;
};

inline VerticalDataset load_csv(const std::string& path, const CsvSpec& spec) {
  const auto table = read_csv(path);
  TabularEncoder enc(table, spec);
  return enc.encode(table, Split::train);
}

// Separate train and test files; test is encoded with the train statistics.
inline std::pair<VerticalDataset, VerticalDataset> load_csv_pair(const std::string& train_path,
                                                                 const std::string& test_path,
                                                                 const CsvSpec& spec) {
  const auto train = read_csv(train_path);
  const auto test = read_csv(test_path);
  TabularEncoder enc(train, spec);
  auto tr = enc.encode(train, Split::train);
  auto te = enc.encode(test, Split::test);
  return {std::move(tr), std::move(te)};
}

// One file split into train/test rows by a seeded permutation, then encoded
// with statistics fitted on the train rows only.
inline std::pair<VerticalDataset, VerticalDataset> load_csv_split(const std::string& path,
                                                                  const CsvSpec& spec,
                                                                  double test_fraction,
                                                                  std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ParameterError("load_csv_split: test_fraction must be in (0,1)");
  }
  const auto table = read_csv(path);
  Rng rng(derive_seed(seed, "csv.split"));
  const auto perm = rng.permutation(table.rows.size());
  const auto n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(table.rows.size())));
  if (n_test == 0 || n_test >= table.rows.size()) {
    throw DataError("csv: too few rows to split");
  }
  CsvTable train{table.header, {}};
  CsvTable test{table.header, {}};
  for (std::size_t i = 0; i < perm.size(); ++i) {
    (i < n_test ? test : train).rows.push_back(table.rows[perm[i]]);
  }
  TabularEncoder enc(train, spec);
  auto tr = enc.encode(train, Split::train);
  auto te = enc.encode(test, Split::test);
  return {std::move(tr), std::move(te)};
}

}  // namespace vflkdk
