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

// Experiment configuration: a JSON document parsed strictly (unknown keys are
// rejected) into typed structs, with dotted-path overrides and a canonical
// serialization used for hashing.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "vflkdk/attacks.hpp"
#include "vflkdk/csv.hpp"
#include "vflkdk/data.hpp"
#include "vflkdk/defenses.hpp"
#include "vflkdk/errors.hpp"
#include "vflkdk/kdk.hpp"
#include "vflkdk/vfl.hpp"

namespace vflkdk {

using json = nlohmann::json;

struct CsvDatasetSpec {
  std::string path;
  std::string test_path;  // empty: hold out test_fraction of `path`
  double test_fraction = 0.2;
  CsvSpec columns;
};

struct DatasetSpec {
  bool synthetic = true;
  SyntheticSpec synth;  // seed is replaced by the run seed
  CsvDatasetSpec csv;

  std::size_t party_count() const {
    return synthetic ? synth.feature_dims.size() : csv.columns.party_columns.size();
  }
};

struct AttackSpec {
  AttackKind kind = AttackKind::passive;
  std::size_t party = 1;
  double aux_fraction = 0.01;
  AuxSampling aux_sampling = AuxSampling::stratified;
  CompletionConfig completion;  // seed is replaced by the run seed
  MaliciousParams malicious;
  std::size_t epoch = 0;  // direct attack: packets of this epoch
};

struct OutputSpec {
  std::string dir = "out";
  bool save_transcript = false;
  std::size_t transcript_epoch = 0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetSpec dataset;
  FederationConfig federation;
  std::size_t epochs = 30;
  DefenseConfig defense = NoDefense{};
  std::vector<AttackSpec> attacks;
  std::vector<std::uint64_t> seeds;
  std::size_t topk = 5;
  OutputSpec output;
};

namespace detail {

inline std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(where(), "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    out = convert<T>(j_.at(key), join_path(path_, key));
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string child(const std::string& key) const { return join_path(path_, key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ValidationError(child(it.key()), "unknown field");
    }
  }

  template <class T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ValidationError(path, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ValidationError(path, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                     v.get<std::int64_t>() < 0)) {
        throw ValidationError(path, "expected a non-negative integer");
      }
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ValidationError(path, "expected a number");
      return v.get<T>();
    } else {
      // std::vector<U>
      if (!v.is_array()) throw ValidationError(path, "expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<typename T::value_type>(v[i], path + "." + std::to_string(i)));
      }
      return out;
    }
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// A tagged object {"name": {...}} with exactly one key.
inline std::pair<std::string, const json*> single_key(const json& j, const std::string& path) {
  if (!j.is_object() || j.size() != 1) {
    throw ValidationError(path, "expected an object with exactly one key naming the variant");
  }
  return {j.begin().key(), &j.begin().value()};
}

inline ColumnRef column_from_json(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  if (v.is_string()) return v.get<std::string>();
  throw ValidationError(path, "expected a column index or header name");
}

inline json column_to_json(const ColumnRef& c) {
  if (const auto* i = std::get_if<std::size_t>(&c)) return *i;
  return std::get<std::string>(c);
}

}  // namespace detail

// ---- to_json ---------------------------------------------------------------

inline json to_json(const OptimizerConfig& o) {
  return {{"kind", to_string(o.kind)},
          {"learning_rate", o.learning_rate},
          {"beta1", o.adam.beta1},
          {"beta2", o.adam.beta2},
          {"adam_epsilon", o.adam.epsilon}};
}

inline json to_json(const KdkConfig& k) {
  return {{"k", k.k},
          {"epsilon", k.epsilon},
          {"tau", k.tau},
          {"teacher_hidden", k.teacher_hidden},
          {"teacher_epochs", k.teacher_epochs},
          {"teacher_batch_size", k.teacher_batch_size},
          {"teacher_learning_rate", k.teacher_learning_rate},
          {"teacher_all_features", k.teacher_all_features}};
}

inline json to_json(const DefenseConfig& d) {
  json body = json::object();
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, KdkDefense>) {
          body = to_json(v.config);
        } else if constexpr (std::is_same_v<T, NoisyDefense>) {
          body = {{"scale", v.scale}, {"relative", v.relative}};
        } else if constexpr (std::is_same_v<T, CompressDefense>) {
          body = {{"rate", v.rate}};
        } else if constexpr (std::is_same_v<T, PpdlDefense>) {
          body = {{"theta_u", v.theta_u},
                  {"tau_threshold", v.tau_threshold},
                  {"noise_sigma", v.noise_sigma}};
        } else if constexpr (std::is_same_v<T, DiscreteSgdDefense>) {
          body = {{"n_intervals", v.n_intervals},
                  {"calibration",
                   v.calibration == Calibration::first_epoch ? "first_epoch" : "running"},
                  {"outliers", v.outliers == OutlierPolicy::clamp ? "clamp" : "drop"}};
        }
      },
      d);
  return {{defense_name(d), body}};
}

inline json to_json(const AttackSpec& a) {
  json j = {{"kind", to_string(a.kind)}, {"party", a.party}};
  if (a.kind == AttackKind::direct) {
    j["epoch"] = a.epoch;
    return j;
  }
  j["aux_fraction"] = a.aux_fraction;
  j["aux_sampling"] = a.aux_sampling == AuxSampling::stratified ? "stratified" : "uniform";
  const auto& c = a.completion;
  j["completion"] = {{"head_warmup_epochs", c.head_warmup_epochs},
                     {"epochs", c.epochs},
                     {"pseudo_rounds", c.pseudo_rounds},
                     {"confidence", c.confidence},
                     {"pseudo_epochs", c.pseudo_epochs},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate}};
  if (a.kind == AttackKind::active) {
    j["gamma"] = a.malicious.gamma;
    j["r_max"] = a.malicious.r_max;
  }
  return j;
}

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  if (c.dataset.synthetic) {
    const auto& s = c.dataset.synth;
    j["dataset"] = {{"synthetic",
                     {{"classes", s.classes},
                      {"train_samples", s.train_samples},
                      {"test_samples", s.test_samples},
                      {"feature_dims", s.feature_dims},
                      {"cluster_spread", s.cluster_spread}}}};
  } else {
    const auto& s = c.dataset.csv;
    json parties = json::array();
    for (const auto& p : s.columns.party_columns) {
      json cols = json::array();
      for (const auto& col : p) cols.push_back(detail::column_to_json(col));
      parties.push_back(cols);
    }
    json cats = json::array();
    for (const auto& col : s.columns.categorical) cats.push_back(detail::column_to_json(col));
    j["dataset"] = {{"csv",
                     {{"path", s.path},
                      {"test_path", s.test_path},
                      {"test_fraction", s.test_fraction},
                      {"label_column", detail::column_to_json(s.columns.label_column)},
                      {"party_columns", parties},
                      {"categorical", cats}}}};
  }
  const auto& f = c.federation;
  j["federation"] = {{"mode", to_string(f.mode)},
                     {"bottom_hidden", f.bottom_hidden},
                     {"embedding_dim", f.embedding_dim},
                     {"top_hidden", f.top_hidden},
                     {"bottom_optimizer", to_json(f.bottom_optimizer)},
                     {"top_optimizer", to_json(f.top_optimizer)},
                     {"batch_size", f.batch_size},
                     {"epochs", c.epochs},
                     {"defend_active_packet", f.defend_active_packet}};
  j["defense"] = to_json(c.defense);
  j["attacks"] = json::array();
  for (const auto& a : c.attacks) j["attacks"].push_back(to_json(a));
  j["seeds"] = c.seeds;
  j["metrics"] = {{"topk", c.topk}};
  j["output"] = {{"dir", c.output.dir},
                 {"save_transcript", c.output.save_transcript},
                 {"transcript_epoch", c.output.transcript_epoch}};
  return j;
}

// ---- parsing ---------------------------------------------------------------

namespace detail {

inline OptimizerConfig parse_optimizer(const json& j, const std::string& path,
                                       OptimizerConfig o) {
  ObjectReader r(j, path);
  std::string kind = to_string(o.kind);
  r.get("kind", kind);
  if (kind == "sgd") {
    o.kind = OptimizerKind::sgd;
  } else if (kind == "adam") {
    o.kind = OptimizerKind::adam;
  } else {
    throw ValidationError(r.child("kind"), "must be sgd or adam");
  }
  r.get("learning_rate", o.learning_rate);
  r.get("beta1", o.adam.beta1);
  r.get("beta2", o.adam.beta2);
  r.get("adam_epsilon", o.adam.epsilon);
  r.finish();
  if (!(o.learning_rate > 0.0)) throw ValidationError(r.child("learning_rate"), "must be > 0");
  if (!(o.adam.beta1 >= 0.0 && o.adam.beta1 < 1.0)) {
    throw ValidationError(r.child("beta1"), "must be in [0,1)");
  }
  if (!(o.adam.beta2 >= 0.0 && o.adam.beta2 < 1.0)) {
    throw ValidationError(r.child("beta2"), "must be in [0,1)");
  }
  if (!(o.adam.epsilon > 0.0)) throw ValidationError(r.child("adam_epsilon"), "must be > 0");
  return o;
}

inline DefenseConfig parse_defense(const json& j, const std::string& path) {
  const auto [name, body] = single_key(j, path);
  const std::string bpath = join_path(path, name);
  ObjectReader r(*body, bpath);
  DefenseConfig out;
  if (name == "none") {
    out = NoDefense{};
  } else if (name == "kdk") {
    KdkConfig k;
    r.get("k", k.k);
    r.get("epsilon", k.epsilon);
    r.get("tau", k.tau);
    r.get("teacher_hidden", k.teacher_hidden);
    r.get("teacher_epochs", k.teacher_epochs);
    r.get("teacher_batch_size", k.teacher_batch_size);
    r.get("teacher_learning_rate", k.teacher_learning_rate);
    r.get("teacher_all_features", k.teacher_all_features);
    if (k.k < 2) throw ValidationError(r.child("k"), "must be >= 2");
    if (!(k.epsilon > 0.0 && k.epsilon < 1.0)) {
      throw ValidationError(r.child("epsilon"), "must be in (0,1)");
    }
    if (!(k.tau > 0.0)) throw ValidationError(r.child("tau"), "must be > 0");
    if (k.teacher_batch_size < 1) throw ValidationError(r.child("teacher_batch_size"), ">= 1");
    if (!(k.teacher_learning_rate > 0.0)) {
      throw ValidationError(r.child("teacher_learning_rate"), "must be > 0");
    }
    out = KdkDefense{k};
  } else if (name == "noisy") {
    NoisyDefense d;
    r.get("scale", d.scale);
    r.get("relative", d.relative);
    if (!(d.scale >= 0.0)) throw ValidationError(r.child("scale"), "must be >= 0");
    out = d;
  } else if (name == "compress") {
    CompressDefense d;
    r.get("rate", d.rate);
    if (!(d.rate > 0.0 && d.rate <= 1.0)) throw ValidationError(r.child("rate"), "in (0,1]");
    out = d;
  } else if (name == "ppdl") {
    PpdlDefense d;
    r.get("theta_u", d.theta_u);
    r.get("tau_threshold", d.tau_threshold);
    r.get("noise_sigma", d.noise_sigma);
    if (!(d.theta_u > 0.0 && d.theta_u <= 1.0)) {
      throw ValidationError(r.child("theta_u"), "must be in (0,1]");
    }
    if (!(d.tau_threshold >= 0.0)) throw ValidationError(r.child("tau_threshold"), ">= 0");
    if (!(d.noise_sigma >= 0.0)) throw ValidationError(r.child("noise_sigma"), ">= 0");
    out = d;
  } else if (name == "discrete_sgd") {
    DiscreteSgdDefense d;
    r.get("n_intervals", d.n_intervals);
    std::string cal = "first_epoch", outl = "clamp";
    r.get("calibration", cal);
    r.get("outliers", outl);
    if (d.n_intervals < 1) throw ValidationError(r.child("n_intervals"), "must be >= 1");
    if (cal == "first_epoch") {
      d.calibration = Calibration::first_epoch;
    } else if (cal == "running") {
      d.calibration = Calibration::running;
    } else {
      throw ValidationError(r.child("calibration"), "must be first_epoch or running");
    }
    if (outl == "clamp") {
      d.outliers = OutlierPolicy::clamp;
    } else if (outl == "drop") {
      d.outliers = OutlierPolicy::drop;
    } else {
      throw ValidationError(r.child("outliers"), "must be clamp or drop");
    }
    out = d;
  } else {
    throw ValidationError(bpath, "unknown defense (none, kdk, noisy, compress, ppdl, discrete_sgd)");
  }
  r.finish();
  return out;
}

inline AttackSpec parse_attack(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  AttackSpec a;
  std::string kind = "passive";
  r.get("kind", kind);
  if (kind == "passive") {
    a.kind = AttackKind::passive;
  } else if (kind == "active") {
    a.kind = AttackKind::active;
  } else if (kind == "direct") {
    a.kind = AttackKind::direct;
  } else {
    throw ValidationError(r.child("kind"), "must be passive, active or direct");
  }
  r.get("party", a.party);
  if (a.party == 0) throw ValidationError(r.child("party"), "party 0 holds the labels");
  if (a.kind == AttackKind::direct) {
    r.get("epoch", a.epoch);
  } else {
    r.get("aux_fraction", a.aux_fraction);
    if (!(a.aux_fraction > 0.0 && a.aux_fraction < 1.0)) {
      throw ValidationError(r.child("aux_fraction"), "must be in (0,1)");
    }
    std::string sampling = "stratified";
    r.get("aux_sampling", sampling);
    if (sampling == "stratified") {
      a.aux_sampling = AuxSampling::stratified;
    } else if (sampling == "uniform") {
      a.aux_sampling = AuxSampling::uniform;
    } else {
      throw ValidationError(r.child("aux_sampling"), "must be stratified or uniform");
    }
    if (r.has("completion")) {
      ObjectReader c(r.raw("completion"), r.child("completion"));
      auto& cc = a.completion;
      c.get("head_warmup_epochs", cc.head_warmup_epochs);
      c.get("epochs", cc.epochs);
      c.get("pseudo_rounds", cc.pseudo_rounds);
      c.get("confidence", cc.confidence);
      c.get("pseudo_epochs", cc.pseudo_epochs);
      c.get("batch_size", cc.batch_size);
      c.get("learning_rate", cc.learning_rate);
      c.finish();
      if (!(cc.confidence > 0.0 && cc.confidence <= 1.0)) {
        throw ValidationError(c.child("confidence"), "must be in (0,1]");
      }
      if (cc.batch_size < 1) throw ValidationError(c.child("batch_size"), "must be >= 1");
      if (!(cc.learning_rate > 0.0)) throw ValidationError(c.child("learning_rate"), "> 0");
    }
    if (a.kind == AttackKind::active) {
      r.get("gamma", a.malicious.gamma);
      r.get("r_max", a.malicious.r_max);
      if (!(a.malicious.gamma >= 1.0)) throw ValidationError(r.child("gamma"), "must be >= 1");
      if (!(a.malicious.r_max >= 1.0)) throw ValidationError(r.child("r_max"), "must be >= 1");
    }
  }
  r.finish();
  return a;
}

inline DatasetSpec parse_dataset(const json& j, const std::string& path) {
  const auto [name, body] = single_key(j, path);
  const std::string bpath = join_path(path, name);
  ObjectReader r(*body, bpath);
  DatasetSpec d;
  if (name == "synthetic") {
    auto& s = d.synth;
    r.get("classes", s.classes);
    r.get("train_samples", s.train_samples);
    r.get("test_samples", s.test_samples);
    r.get("feature_dims", s.feature_dims);
    r.get("cluster_spread", s.cluster_spread);
    if (s.classes < 2) throw ValidationError(r.child("classes"), "must be >= 2");
    if (s.train_samples < s.classes) {
      throw ValidationError(r.child("train_samples"), "must be >= classes");
    }
    if (s.feature_dims.size() < 2) {
      throw ValidationError(r.child("feature_dims"), "need at least two parties");
    }
    for (std::size_t i = 0; i < s.feature_dims.size(); ++i) {
      if (s.feature_dims[i] == 0) {
        throw ValidationError(r.child("feature_dims") + "." + std::to_string(i), "must be >= 1");
      }
    }
    if (!(s.cluster_spread >= 0.0)) throw ValidationError(r.child("cluster_spread"), ">= 0");
  } else if (name == "csv") {
    d.synthetic = false;
    auto& s = d.csv;
    r.get("path", s.path);
    r.get("test_path", s.test_path);
    r.get("test_fraction", s.test_fraction);
    if (s.path.empty()) throw ValidationError(r.child("path"), "required");
    if (s.test_path.empty() && !(s.test_fraction > 0.0 && s.test_fraction < 1.0)) {
      throw ValidationError(r.child("test_fraction"), "must be in (0,1)");
    }
    if (!r.has("label_column")) throw ValidationError(r.child("label_column"), "required");
    s.columns.label_column = column_from_json(r.raw("label_column"), r.child("label_column"));
    if (!r.has("party_columns")) throw ValidationError(r.child("party_columns"), "required");
    const json& parties = r.raw("party_columns");
    const std::string ppath = r.child("party_columns");
    if (!parties.is_array() || parties.size() < 2) {
      throw ValidationError(ppath, "expected an array of at least two column lists");
    }
    for (std::size_t p = 0; p < parties.size(); ++p) {
      const std::string pp = ppath + "." + std::to_string(p);
      if (!parties[p].is_array() || parties[p].empty()) {
        throw ValidationError(pp, "expected a non-empty array of columns");
      }
      std::vector<ColumnRef> cols;
      for (std::size_t c = 0; c < parties[p].size(); ++c) {
        cols.push_back(column_from_json(parties[p][c], pp + "." + std::to_string(c)));
      }
      s.columns.party_columns.push_back(std::move(cols));
    }
    if (r.has("categorical")) {
      const json& cats = r.raw("categorical");
      if (!cats.is_array()) throw ValidationError(r.child("categorical"), "expected an array");
      for (std::size_t c = 0; c < cats.size(); ++c) {
        s.columns.categorical.push_back(
            column_from_json(cats[c], r.child("categorical") + "." + std::to_string(c)));
      }
    }
  } else {
    throw ValidationError(bpath, "unknown dataset kind (synthetic, csv)");
  }
  r.finish();
  return d;
}

}  // namespace detail

// Parses and validates a config document. `fallback_seeds` is used when the
// document has no "seeds" key.
inline ExperimentConfig parse_config(const json& doc,
                                     const std::vector<std::uint64_t>& fallback_seeds = {}) {
  using detail::ObjectReader;
  ObjectReader r(doc, "");
  ExperimentConfig c;
  r.get("name", c.name);
  if (r.has("dataset")) c.dataset = detail::parse_dataset(r.raw("dataset"), "dataset");

  if (r.has("federation")) {
    ObjectReader f(r.raw("federation"), "federation");
    auto& fc = c.federation;
    std::string mode = to_string(fc.mode);
    f.get("mode", mode);
    if (mode == "split") {
      fc.mode = SplitMode::split;
    } else if (mode == "no_split") {
      fc.mode = SplitMode::no_split;
    } else {
      throw ValidationError("federation.mode", "must be split or no_split");
    }
    f.get("bottom_hidden", fc.bottom_hidden);
    f.get("embedding_dim", fc.embedding_dim);
    f.get("top_hidden", fc.top_hidden);
    if (f.has("bottom_optimizer")) {
      fc.bottom_optimizer = detail::parse_optimizer(f.raw("bottom_optimizer"),
                                                    "federation.bottom_optimizer",
                                                    fc.bottom_optimizer);
    }
    if (f.has("top_optimizer")) {
      fc.top_optimizer = detail::parse_optimizer(f.raw("top_optimizer"),
                                                 "federation.top_optimizer", fc.top_optimizer);
    }
    f.get("batch_size", fc.batch_size);
    f.get("epochs", c.epochs);
    f.get("defend_active_packet", fc.defend_active_packet);
    f.finish();
    if (fc.embedding_dim < 1) throw ValidationError("federation.embedding_dim", "must be >= 1");
    if (fc.batch_size < 1) throw ValidationError("federation.batch_size", "must be >= 1");
    for (std::size_t i = 0; i < fc.bottom_hidden.size(); ++i) {
      if (fc.bottom_hidden[i] == 0) {
        throw ValidationError("federation.bottom_hidden." + std::to_string(i), "must be >= 1");
      }
    }
    for (std::size_t i = 0; i < fc.top_hidden.size(); ++i) {
      if (fc.top_hidden[i] == 0) {
        throw ValidationError("federation.top_hidden." + std::to_string(i), "must be >= 1");
      }
    }
  }
  if (r.has("defense")) c.defense = detail::parse_defense(r.raw("defense"), "defense");
  if (r.has("attacks")) {
    const json& a = r.raw("attacks");
    if (!a.is_array()) throw ValidationError("attacks", "expected an array");
    for (std::size_t i = 0; i < a.size(); ++i) {
      c.attacks.push_back(detail::parse_attack(a[i], "attacks." + std::to_string(i)));
    }
  }
  if (r.has("seeds")) {
    r.get("seeds", c.seeds);
  } else {
    c.seeds = fallback_seeds;
  }
  if (r.has("metrics")) {
    ObjectReader m(r.raw("metrics"), "metrics");
    m.get("topk", c.topk);
    m.finish();
  }
  if (r.has("output")) {
    ObjectReader o(r.raw("output"), "output");
    o.get("dir", c.output.dir);
    o.get("save_transcript", c.output.save_transcript);
    o.get("transcript_epoch", c.output.transcript_epoch);
    o.finish();
  }
  r.finish();

  // Cross-field invariants.
  if (c.seeds.empty()) throw ValidationError("seeds", "at least one seed is required");
  const std::size_t parties = c.dataset.party_count();
  for (std::size_t i = 0; i < c.attacks.size(); ++i) {
    const auto& a = c.attacks[i];
    const std::string p = "attacks." + std::to_string(i);
    if (a.party >= parties) {
      throw ValidationError(p + ".party", "no such party (" + std::to_string(parties) +
                                              " parties)");
    }
    if (a.kind == AttackKind::direct && c.federation.mode != SplitMode::no_split) {
      throw ValidationError("federation.mode", "a direct attack requires no_split mode");
    }
    if (a.kind == AttackKind::direct && a.epoch >= c.epochs) {
      throw ValidationError(p + ".epoch", "must be < federation.epochs");
    }
  }
  if (c.topk < 1) throw ValidationError("metrics.topk", "must be >= 1");
  if (c.dataset.synthetic) {
    const std::size_t classes = c.dataset.synth.classes;
    if (c.topk > classes) throw ValidationError("metrics.topk", "must be <= classes");
    if (const auto* k = std::get_if<KdkDefense>(&c.defense)) {
      if (k->config.k > classes) throw ValidationError("defense.kdk.k", "must be <= classes");
    }
  }
  return c;
}

inline std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view tok = text.substr(start, end - start);
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
    if (!tok.empty()) {
      std::uint64_t v = 0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw ValidationError("seeds", "not a seed list: " + std::string(text));
      }
      out.push_back(v);
    }
    start = end + 1;
  }
  return out;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config", "cannot open " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ValidationError("config", "not valid JSON: " + path);
  return j;
}

inline std::string canonical_dump(const ExperimentConfig& c) { return to_json(c).dump(); }

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw StateError("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

inline std::string config_hash(const ExperimentConfig& c) { return sha256_hex(canonical_dump(c)); }

// ---- overrides -------------------------------------------------------------

namespace detail {

inline json default_variant(const std::string& group, const std::string& name) {
  if (group == "defense") {
    if (name == "none") return to_json(DefenseConfig{NoDefense{}});
    if (name == "kdk") return to_json(DefenseConfig{KdkDefense{}});
    if (name == "noisy") return to_json(DefenseConfig{NoisyDefense{}});
    if (name == "compress") return to_json(DefenseConfig{CompressDefense{}});
    if (name == "ppdl") return to_json(DefenseConfig{PpdlDefense{}});
    if (name == "discrete_sgd") return to_json(DefenseConfig{DiscreteSgdDefense{}});
  } else if (group == "dataset") {
    if (name == "synthetic") {
      ExperimentConfig c;
      return to_json(c)["dataset"];
    }
    if (name == "csv") {
      return {{"csv",
               {{"path", ""},
                {"test_path", ""},
                {"test_fraction", 0.2},
                {"label_column", 0},
                {"party_columns", json::array()},
                {"categorical", json::array()}}}};
    }
  }
  return nullptr;
}

inline std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : path) {
    if (ch == '.') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(cur);
  for (const auto& p : parts) {
    if (p.empty()) throw ValidationError(path, "malformed path");
  }
  return parts;
}

inline json parse_value(const std::string& raw) {
  json v = json::parse(raw, nullptr, false);
  if (v.is_discarded()) return raw;  // bare word: a string
  return v;
}

inline bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

// Finds the node at `path` in the fully-defaulted document, switching the
// variant of a tagged object when the path names a different one.
inline json* resolve(json& doc, const std::string& path) {
  const auto parts = split_path(path);
  json* node = &doc;
  std::string walked;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::string& key = parts[i];
    const std::string here = join_path(walked, key);
    if (node->is_object()) {
      if (!node->contains(key)) {
        const bool tagged = (walked == "defense" || walked == "dataset") && node->size() == 1;
        json def = tagged ? default_variant(walked, key) : json(nullptr);
        if (def.is_null()) throw ValidationError(here, "unknown field");
        *node = def;
      }
      node = &(*node)[key];
    } else if (node->is_array()) {
      std::size_t idx = 0;
      auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), idx);
      if (ec != std::errc() || ptr != key.data() + key.size() || idx >= node->size()) {
        throw ValidationError(here, "array index out of range");
      }
      node = &(*node)[idx];
    } else {
      throw ValidationError(walked, "is a scalar and has no field " + key);
    }
    walked = here;
  }
  return node;
}

}  // namespace detail

struct Override {
  std::string path;
  std::string value;
};

inline Override parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ValidationError(text, "override must be KEY=VALUE");
  }
  return {text.substr(0, eq), text.substr(eq + 1)};
}

// Applies `path=value` to a fully-defaulted document. The value is read as JSON
// (falling back to a bare string) and must match the type already there.
inline void apply_override(json& doc, const Override& o) {
  json* node = detail::resolve(doc, o.path);
  json v = detail::parse_value(o.value);
  if (!detail::same_kind(*node, v)) {
    throw ValidationError(o.path, "type mismatch: expected " + std::string(node->type_name()) +
                                      ", got " + std::string(v.type_name()));
  }
  *node = std::move(v);
}

inline bool is_scalar_path(json doc, const std::string& path) {
  const json* n = detail::resolve(doc, path);
  return n->is_primitive() && !n->is_null();
}

// Full resolution: parse, normalise to the canonical document, apply
// overrides in order, and parse again.
inline ExperimentConfig resolve_config(const json& doc, const std::vector<Override>& overrides,
                                       const std::vector<std::uint64_t>& fallback_seeds = {}) {
  json src = doc;
  std::vector<std::uint64_t> seeds = fallback_seeds;
  if (!src.contains("seeds") && seeds.empty()) {
    // Allow a `seeds=` override to supply the only seed list.
    for (const auto& o : overrides) {
      if (o.path == "seeds") seeds = {0};
    }
  }
  ExperimentConfig cfg = parse_config(src, seeds);
  for (const auto& o : overrides) {
    json canon = to_json(cfg);
    apply_override(canon, o);
    cfg = parse_config(canon);
  }
  return cfg;
}

}  // namespace vflkdk
