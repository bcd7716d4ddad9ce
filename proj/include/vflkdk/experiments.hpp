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
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "vflkdk/attacks.hpp"
#include "vflkdk/csv.hpp"
#include "vflkdk/data.hpp"
#include "vflkdk/experiment_config.hpp"
#include "vflkdk/kdk.hpp"
#include "vflkdk/transcript_io.hpp"
#include "vflkdk/vfl.hpp"

namespace vflkdk {

struct MetricRow {
  std::uint64_t seed = 0;
  std::string attack;  // "passive", "active", "direct", or "none" without attacks
  Split split = Split::train;
  double model_top1 = 0.0;
  double model_topk = 0.0;
  std::optional<double> asr_top1;  // absent: the attack has no output on this split
  std::optional<double> asr_topk;
  std::size_t fallback_count = 0;

  bool operator==(const MetricRow&) const = default;
};

struct SeedSummary {
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  double model_train_top1 = 0.0;
  double model_test_top1 = 0.0;
  double model_test_topk = 0.0;
  std::optional<double> teacher_train_accuracy;

  bool operator==(const SeedSummary&) const = default;
};

struct Aggregate {
  std::string attack;
  Split split = Split::train;
  std::string metric;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;

  bool operator==(const Aggregate&) const = default;
};

struct MetricsReport {
  std::string name;
  std::string config_hash;
  json config;
  std::size_t topk = 5;
  bool complete = true;
  std::vector<SeedSummary> seeds;
  std::vector<MetricRow> rows;
  std::vector<Aggregate> aggregates;
  double wall_clock_seconds = 0.0;

  // Lookup of an aggregate; nullopt when absent.
  std::optional<Aggregate> find(const std::string& attack, Split split,
                                const std::string& metric) const {
    for (const auto& a : aggregates) {
      if (a.attack == attack && a.split == split && a.metric == metric) return a;
    }
    return std::nullopt;
  }
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw StateError("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Median/min/max per (attack, split, metric) over the successful seeds, plus
// seed-level "model" and "teacher" entries. Recomputable from rows and seeds.
inline std::vector<Aggregate> aggregate(const std::vector<MetricRow>& rows,
                                        const std::vector<SeedSummary>& seeds) {
  std::vector<std::tuple<std::string, Split, std::string>> order;
  std::map<std::tuple<std::string, int, std::string>, std::vector<double>> groups;
  auto add = [&](const std::string& attack, Split split, const std::string& metric, double v) {
    auto key = std::make_tuple(attack, static_cast<int>(split), metric);
    auto it = groups.find(key);
    if (it == groups.end()) {
      order.emplace_back(attack, split, metric);
      it = groups.emplace(key, std::vector<double>{}).first;
    }
    it->second.push_back(v);
  };
  for (const auto& s : seeds) {
    if (!s.ok) continue;
    add("model", Split::train, "top1", s.model_train_top1);
    add("model", Split::test, "top1", s.model_test_top1);
    add("model", Split::test, "topk", s.model_test_topk);
    if (s.teacher_train_accuracy) add("teacher", Split::train, "top1", *s.teacher_train_accuracy);
  }
  for (const auto& r : rows) {
    add(r.attack, r.split, "model_top1", r.model_top1);
    add(r.attack, r.split, "model_topk", r.model_topk);
    if (r.asr_top1) add(r.attack, r.split, "asr_top1", *r.asr_top1);
    if (r.asr_topk) add(r.attack, r.split, "asr_topk", *r.asr_topk);
  }
  std::vector<Aggregate> out;
  for (const auto& [attack, split, metric] : order) {
    const auto& v = groups.at(std::make_tuple(attack, static_cast<int>(split), metric));
    out.push_back({attack, split, metric, median_of(v), *std::min_element(v.begin(), v.end()),
                   *std::max_element(v.begin(), v.end()), v.size()});
  }
  return out;
}

// ---- per-seed pipeline -----------------------------------------------------

inline std::pair<VerticalDataset, VerticalDataset> build_dataset(const DatasetSpec& d,
                                                                 std::uint64_t seed) {
  if (d.synthetic) {
    SyntheticSpec s = d.synth;
    s.seed = seed;
    return generate_synthetic(s);
  }
  if (!d.csv.test_path.empty()) return load_csv_pair(d.csv.path, d.csv.test_path, d.csv.columns);
  return load_csv_split(d.csv.path, d.csv.columns, d.csv.test_fraction, seed);
}

struct SeedOutcome {
  SeedSummary summary;
  std::vector<MetricRow> rows;
  std::vector<RoundTranscript> transcript;  // kept only when requested
  std::vector<std::size_t> train_labels;    // for offline scoring of saved transcripts
};

inline SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedOutcome out;
  out.summary.seed = seed;
  auto [train_set, test_set] = build_dataset(cfg.dataset, seed);
  const std::size_t classes = train_set.class_count;
  const std::size_t k = std::min(cfg.topk, classes);
  if (cfg.attacks.size() && train_set.party_count() < 2) {
    throw DataError("attacks need at least one passive party");
  }

  Matrix targets;
  if (const auto* kd = std::get_if<KdkDefense>(&cfg.defense)) {
    validate(kd->config, classes);
    const Matrix tx = kd->config.teacher_all_features ? train_set.joint_features()
                                                      : train_set.party_features.at(0);
    auto teacher = train_teacher(kd->config, tx, train_set.labels, classes, seed);
    out.summary.teacher_train_accuracy = teacher.train_accuracy;
    targets = kdk_label_provider(kd->config, teacher.teacher, tx).probs;
  } else {
    targets = one_hot_labels(train_set.labels, classes).probs;
  }

  std::set<std::size_t> record_epochs;
  for (const auto& a : cfg.attacks) {
    if (a.kind == AttackKind::direct) record_epochs.insert(a.epoch);
  }
  if (cfg.output.save_transcript) record_epochs.insert(cfg.output.transcript_epoch);
  std::optional<TranscriptRecorder> recorder;
  if (record_epochs.size() == 1) {
    recorder.emplace(*record_epochs.begin(), false);
  } else if (!record_epochs.empty()) {
    recorder.emplace(std::nullopt, false);
  }

  auto fed = FederationState::create(cfg.federation, train_set.feature_dims(), classes, seed,
                                     cfg.defense);
  train(fed, train_set, targets, cfg.epochs, recorder ? &*recorder : nullptr);
  const Accuracy model_train = evaluate(fed, train_set, k);
  const Accuracy model_test = evaluate(fed, test_set, k);
  out.summary.model_train_top1 = model_train.top1;
  out.summary.model_test_top1 = model_test.top1;
  out.summary.model_test_topk = model_test.topk;

  auto push = [&](const std::string& name, Split split, const Accuracy& model,
                  std::optional<AttackReport> rep) {
    MetricRow row{seed, name, split, model.top1, model.topk, std::nullopt, std::nullopt, 0};
    if (rep && rep->available) {
      row.asr_top1 = rep->top1;
      row.asr_topk = rep->topk;
      row.fallback_count = rep->fallback_count;
    }
    out.rows.push_back(row);
  };

  for (const auto& a : cfg.attacks) {
    const std::string name = to_string(a.kind);
    if (a.kind == AttackKind::direct) {
      const auto packets = packets_for_party(recorder->rounds(), a.party);
      const auto d = direct_attack(packets, train_set.sample_count(), classes, a.epoch);
      push(name, Split::train, model_train, score_direct(d, train_set.labels, k));
      push(name, Split::test, model_test, std::nullopt);  // no gradients at inference
      continue;
    }
    CompletionConfig cc = a.completion;
    cc.seed = seed;
    auto aux = sample_auxiliary(train_set, a.aux_fraction, seed, a.aux_sampling);
    const Matrix& test_x = test_set.party_features.at(a.party);
    if (a.kind == AttackKind::passive) {
      auto adv = AdversaryState::observe(fed, a.party, party_view(train_set, a.party), {},
                                         std::move(aux));
      auto comp = passive_model_completion(adv, classes, cc);
      push(name, Split::train, model_train,
           score_asr(a.kind, Split::train, comp.train_scores, train_set.labels, k));
      push(name, Split::test, model_test,
           score_asr(a.kind, Split::test, completion_scores(comp, test_x), test_set.labels, k));
    } else {
      auto act = active_attack(FederationState::create(cfg.federation, train_set.feature_dims(),
                                                       classes, seed, cfg.defense),
                               a.party, a.malicious, train_set, targets, cfg.epochs,
                               std::move(aux), cc);
      const Accuracy atr = evaluate(act.federation, train_set, k);
      const Accuracy ate = evaluate(act.federation, test_set, k);
      push(name, Split::train, atr,
           score_asr(a.kind, Split::train, act.completion.train_scores, train_set.labels, k));
      push(name, Split::test, ate,
           score_asr(a.kind, Split::test, completion_scores(act.completion, test_x),
                     test_set.labels, k));
    }
  }
  if (cfg.attacks.empty()) {
    push("none", Split::train, model_train, std::nullopt);
    push("none", Split::test, model_test, std::nullopt);
  }
  if (cfg.output.save_transcript && recorder) {
    for (const auto& t : recorder->rounds()) {
      if (t.epoch == cfg.output.transcript_epoch) out.transcript.push_back(t);
    }
    out.train_labels = train_set.labels;
  }
  return out;
}

struct RunOptions {
  std::size_t threads = 0;  // 0: hardware concurrency
  std::function<void(const std::string&)> log;
  // Filled per seed when the config asks for transcripts (keyed by seed order).
  std::vector<SeedOutcome>* outcomes = nullptr;
};

// Runs every seed (in parallel when cores allow) and merges in seed order.
// A failing seed is recorded and the report is flagged incomplete.
inline MetricsReport run(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  MetricsReport rep;
  rep.name = cfg.name;
  rep.config = to_json(cfg);
  rep.config_hash = sha256_hex(rep.config.dump());
  rep.topk = cfg.topk;

  const std::size_t n = cfg.seeds.size();
  std::vector<SeedOutcome> results(n);
  std::size_t threads = opt.threads ? opt.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, n);
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      const std::uint64_t seed = cfg.seeds[i];
      try {
        results[i] = run_seed(cfg, seed);
      } catch (const std::exception& e) {
        results[i] = SeedOutcome{};
        results[i].summary.seed = seed;
        results[i].summary.ok = false;
        results[i].summary.error = e.what();
      }
      if (opt.log) {
        std::lock_guard<std::mutex> lock(log_mu);
        const auto& s = results[i].summary;
        char buf[160];
        if (s.ok) {
          std::snprintf(buf, sizeof buf, "seed %llu: model test top1 %.4f",
                        static_cast<unsigned long long>(seed), s.model_test_top1);
        } else {
          std::snprintf(buf, sizeof buf, "seed %llu: failed",
                        static_cast<unsigned long long>(seed));
        }
        opt.log(s.ok ? std::string(buf) : std::string(buf) + ": " + s.error);
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& r : results) {
    rep.complete = rep.complete && r.summary.ok;
    rep.seeds.push_back(r.summary);
    rep.rows.insert(rep.rows.end(), r.rows.begin(), r.rows.end());
  }
  rep.aggregates = aggregate(rep.rows, rep.seeds);
  if (opt.outcomes) *opt.outcomes = std::move(results);
  rep.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// ---- serialization ---------------------------------------------------------

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

inline Split split_from(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw DataError("unknown split: " + s);
}

inline json report_to_json(const MetricsReport& r) {
  json j;
  j["name"] = r.name;
  j["config_hash"] = r.config_hash;
  j["config"] = r.config;
  j["topk"] = r.topk;
  j["complete"] = r.complete;
  j["seeds"] = json::array();
  for (const auto& s : r.seeds) {
    j["seeds"].push_back({{"seed", s.seed},
                          {"ok", s.ok},
                          {"error", s.error},
                          {"model_train_top1", s.model_train_top1},
                          {"model_test_top1", s.model_test_top1},
                          {"model_test_topk", s.model_test_topk},
                          {"teacher_train_accuracy", opt_json(s.teacher_train_accuracy)}});
  }
  j["rows"] = json::array();
  for (const auto& row : r.rows) {
    j["rows"].push_back({{"seed", row.seed},
                         {"attack", row.attack},
                         {"split", to_string(row.split)},
                         {"model_top1", row.model_top1},
                         {"model_topk", row.model_topk},
                         {"asr_top1", opt_json(row.asr_top1)},
                         {"asr_topk", opt_json(row.asr_topk)},
                         {"fallback_count", row.fallback_count}});
  }
  j["aggregates"] = json::array();
  for (const auto& a : r.aggregates) {
    j["aggregates"].push_back({{"attack", a.attack},
                               {"split", to_string(a.split)},
                               {"metric", a.metric},
                               {"median", a.median},
                               {"min", a.min},
                               {"max", a.max},
                               {"count", a.count}});
  }
  j["wall_clock_seconds"] = r.wall_clock_seconds;
  return j;
}

inline MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  try {
    r.name = j.at("name").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.config = j.at("config");
    r.topk = j.at("topk").get<std::size_t>();
    r.complete = j.at("complete").get<bool>();
    for (const auto& s : j.at("seeds")) {
      r.seeds.push_back({s.at("seed").get<std::uint64_t>(), s.at("ok").get<bool>(),
                         s.at("error").get<std::string>(), s.at("model_train_top1").get<double>(),
                         s.at("model_test_top1").get<double>(),
                         s.at("model_test_topk").get<double>(),
                         opt_from(s.at("teacher_train_accuracy"))});
    }
    for (const auto& row : j.at("rows")) {
      r.rows.push_back({row.at("seed").get<std::uint64_t>(), row.at("attack").get<std::string>(),
                        split_from(row.at("split").get<std::string>()),
                        row.at("model_top1").get<double>(), row.at("model_topk").get<double>(),
                        opt_from(row.at("asr_top1")), opt_from(row.at("asr_topk")),
                        row.at("fallback_count").get<std::size_t>()});
    }
    for (const auto& a : j.at("aggregates")) {
      r.aggregates.push_back({a.at("attack").get<std::string>(),
                              split_from(a.at("split").get<std::string>()),
                              a.at("metric").get<std::string>(), a.at("median").get<double>(),
                              a.at("min").get<double>(), a.at("max").get<double>(),
                              a.at("count").get<std::size_t>()});
    }
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report json: ") + e.what());
  }
  return r;
}

inline std::string fmt_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Columns: seed,attack,split,model_top1,model_topk,asr_top1,asr_topk,fallback_count.
// Absent ASR values are empty cells.
inline std::string results_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << "seed,attack,split,model_top1,model_topk,asr_top1,asr_topk,fallback_count\n";
  for (const auto& row : r.rows) {
    os << row.seed << ',' << row.attack << ',' << to_string(row.split) << ','
       << fmt_metric(row.model_top1) << ',' << fmt_metric(row.model_topk) << ','
       << (row.asr_top1 ? fmt_metric(*row.asr_top1) : "") << ','
       << (row.asr_topk ? fmt_metric(*row.asr_topk) : "") << ',' << row.fallback_count << '\n';
  }
  return os.str();
}

// ---- svg -------------------------------------------------------------------

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Line chart with y in [0, 1]. The x axis is logarithmic when `log_x`.
inline std::string svg_line_chart(const std::string& title, const std::string& x_label,
                                  const std::vector<Series>& series, bool log_x) {
  constexpr double W = 640, H = 400, L = 60, R = 160, T = 40, B = 50;
  double xmin = INFINITY, xmax = -INFINITY;
  auto tx = [&](double x) { return log_x ? std::log10(x) : x; };
  for (const auto& s : series) {
    for (double x : s.x) {
      xmin = std::min(xmin, tx(x));
      xmax = std::max(xmax, tx(x));
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1;
  if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
  auto px = [&](double x) { return L + (tx(x) - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return T + (1.0 - std::clamp(y, 0.0, 1.0)) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  std::ostringstream os;
  char buf[256];
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << xml_escape(title) << "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n"
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n",
                L, H - B, W - R, H - B, L, T, L, H - B);
  os << buf;
  for (int i = 0; i <= 4; ++i) {
    const double y = i / 4.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%.1f\" text-anchor=\"end\" font-size=\"10\">%.2f</text>\n",
                  L - 5, py(y) + 3, y);
    os << buf;
  }
  if (!series.empty()) {
    for (double x : series.front().x) {
      std::snprintf(buf, sizeof buf,
                    "<text x=\"%.1f\" y=\"%g\" text-anchor=\"middle\" font-size=\"10\">%g</text>\n",
                    px(x), H - B + 15, x);
      os << buf;
    }
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10
     << "\" text-anchor=\"middle\" font-size=\"12\">" << xml_escape(x_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % 8];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", px(series[s].x[i]),
                    py(series[s].y[i]));
      os << buf;
    }
    os << "\"/>\n";
    const double ly = T + 15.0 * static_cast<double>(s);
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                  W - R + 10, ly, W - R + 30, ly, color);
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" font-size=\"11\">", W - R + 35,
                  ly + 4);
    os << buf << xml_escape(series[s].label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

// Per-seed view of one report: model test accuracy and each attack's train ASR.
inline std::string report_svg(const MetricsReport& r) {
  std::vector<Series> series;
  Series model{"model test top1", {}, {}};
  for (std::size_t i = 0; i < r.seeds.size(); ++i) {
    if (!r.seeds[i].ok) continue;
    model.x.push_back(static_cast<double>(i));
    model.y.push_back(r.seeds[i].model_test_top1);
  }
  series.push_back(model);
  std::map<std::string, std::size_t> index;
  for (const auto& row : r.rows) {
    if (row.split != Split::train || !row.asr_top1) continue;
    auto it = index.find(row.attack);
    if (it == index.end()) {
      it = index.emplace(row.attack, series.size()).first;
      series.push_back({row.attack + " asr top1", {}, {}});
    }
    auto& s = series[it->second];
    s.x.push_back(static_cast<double>(s.x.size()));
    s.y.push_back(*row.asr_top1);
  }
  return svg_line_chart(r.name, "seed index", series, false);
}

enum class ReportFormat { json, csv, svg };

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
  if (!out) throw DataError("write failed: " + p.string());
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw DataError("output directory not writable: " + dir.string());
  }
}

// report.json, results.csv, plots/seeds.svg under `dir`.
inline void emit_report(const MetricsReport& r, ReportFormat format,
                        const std::filesystem::path& dir) {
  ensure_dir(dir);
  switch (format) {
    case ReportFormat::json: write_text(dir / "report.json", report_to_json(r).dump(2) + "\n"); break;
    case ReportFormat::csv: write_text(dir / "results.csv", results_csv(r)); break;
    case ReportFormat::svg:
      ensure_dir(dir / "plots");
      write_text(dir / "plots" / "seeds.svg", report_svg(r));
      break;
  }
}

inline void emit_all(const MetricsReport& r, const std::filesystem::path& dir) {
  emit_report(r, ReportFormat::json, dir);
  emit_report(r, ReportFormat::csv, dir);
  emit_report(r, ReportFormat::svg, dir);
}

// Writes the saved transcripts and the matching truth labels next to a report.
inline void emit_transcripts(const std::vector<SeedOutcome>& outcomes,
                             const std::filesystem::path& dir) {
  for (const auto& o : outcomes) {
    if (o.transcript.empty()) continue;
    const std::string tag = "seed" + std::to_string(o.summary.seed);
    write_transcript((dir / ("transcript_" + tag + ".jsonl")).string(), o.transcript);
    std::ostringstream os;
    os << "sample_index,label\n";
    for (std::size_t i = 0; i < o.train_labels.size(); ++i) {
      os << i << ',' << o.train_labels[i] << '\n';
    }
    write_text(dir / ("labels_" + tag + ".csv"), os.str());
  }
}

// ---- sweep -----------------------------------------------------------------

struct TrendRow {
  json value;
  double model_top1 = 0.0;  // median test Top-1 of the honestly trained federation
  std::vector<std::pair<std::string, std::optional<double>>> asr;  // "<attack>_<split>" -> median
};

struct SweepResult {
  std::string axis;
  std::vector<MetricsReport> reports;
  std::vector<TrendRow> trend;
};

inline std::vector<json> parse_axis_values(const std::string& text) {
  std::vector<json> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string::npos) end = text.size();
    std::string tok = text.substr(start, end - start);
    if (!tok.empty()) out.push_back(detail::parse_value(tok));
    start = end + 1;
  }
  if (out.empty()) throw ValidationError("values", "at least one value is required");
  return out;
}

inline std::string value_label(const json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

inline TrendRow trend_row(const json& value, const MetricsReport& r) {
  TrendRow t{value, 0.0, {}};
  if (auto m = r.find("model", Split::test, "top1")) t.model_top1 = m->median;
  std::vector<std::string> seen;
  for (const auto& row : r.rows) {
    if (row.attack == "none") continue;
    const std::string key = row.attack + "_" + to_string(row.split);
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    auto a = r.find(row.attack, row.split, "asr_top1");
    t.asr.emplace_back(key, a ? std::optional<double>(a->median) : std::nullopt);
  }
  return t;
}

// Columns: value,model_top1, then <attack>_<split>_asr_top1 per attack/split.
inline std::string trend_csv(const SweepResult& s) {
  std::ostringstream os;
  os << "value,model_top1";
  if (!s.trend.empty()) {
    for (const auto& [key, v] : s.trend.front().asr) os << ',' << key << "_asr_top1";
  }
  os << '\n';
  for (const auto& t : s.trend) {
    os << value_label(t.value) << ',' << fmt_metric(t.model_top1);
    for (const auto& [key, v] : t.asr) os << ',' << (v ? fmt_metric(*v) : "");
    os << '\n';
  }
  return os.str();
}

inline std::string trend_svg(const SweepResult& s) {
  std::vector<Series> series;
  bool numeric = !s.trend.empty();
  bool positive = true;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& t : s.trend) {
    if (!t.value.is_number()) {
      numeric = false;
      break;
    }
    const double v = t.value.get<double>();
    positive = positive && v > 0.0;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const bool log_x = numeric && positive && hi / lo >= 100.0;
  auto xval = [&](std::size_t i) {
    return numeric ? s.trend[i].value.get<double>() : static_cast<double>(i);
  };
  Series model{"model top1", {}, {}};
  for (std::size_t i = 0; i < s.trend.size(); ++i) {
    model.x.push_back(xval(i));
    model.y.push_back(s.trend[i].model_top1);
  }
  series.push_back(model);
  if (!s.trend.empty()) {
    for (std::size_t a = 0; a < s.trend.front().asr.size(); ++a) {
      Series ser{s.trend.front().asr[a].first + " asr", {}, {}};
      for (std::size_t i = 0; i < s.trend.size(); ++i) {
        if (a >= s.trend[i].asr.size() || !s.trend[i].asr[a].second) continue;
        ser.x.push_back(xval(i));
        ser.y.push_back(*s.trend[i].asr[a].second);
      }
      if (!ser.x.empty()) series.push_back(ser);
    }
  }
  return svg_line_chart("sweep: " + s.axis, s.axis, series, log_x);
}

inline json sweep_to_json(const SweepResult& s) {
  json j;
  j["axis"] = s.axis;
  j["runs"] = json::array();
  for (std::size_t i = 0; i < s.trend.size(); ++i) {
    json asr = json::object();
    for (const auto& [key, v] : s.trend[i].asr) asr[key] = opt_json(v);
    j["runs"].push_back({{"value", s.trend[i].value},
                         {"config_hash", s.reports[i].config_hash},
                         {"complete", s.reports[i].complete},
                         {"model_top1", s.trend[i].model_top1},
                         {"asr_top1", asr}});
  }
  return j;
}

// One run per axis value; each run gets its own copy of the overrides plus
// `axis=value`.
inline SweepResult sweep(const json& base_doc, const std::vector<Override>& overrides,
                         const std::string& axis, const std::vector<json>& values,
                         const std::vector<std::uint64_t>& fallback_seeds = {},
                         const RunOptions& opt = {}) {
  {
    const ExperimentConfig probe = resolve_config(base_doc, overrides, fallback_seeds);
    if (!is_scalar_path(to_json(probe), axis)) {
      throw ValidationError(axis, "sweep axis must name a scalar field");
    }
  }
  SweepResult s;
  s.axis = axis;
  for (const auto& v : values) {
    auto ov = overrides;
    ov.push_back({axis, v.is_string() ? v.get<std::string>() : v.dump()});
    const ExperimentConfig cfg = resolve_config(base_doc, ov, fallback_seeds);
    if (opt.log) opt.log(axis + " = " + value_label(v));
    s.reports.push_back(run(cfg, opt));
    s.trend.push_back(trend_row(v, s.reports.back()));
  }
  return s;
}

inline void emit_sweep(const SweepResult& s, const std::filesystem::path& dir) {
  ensure_dir(dir);
  for (std::size_t i = 0; i < s.reports.size(); ++i) {
    emit_all(s.reports[i], dir / "runs" / (std::to_string(i) + "_" + value_label(s.trend[i].value)));
  }
  write_text(dir / "sweep.json", sweep_to_json(s).dump(2) + "\n");
  write_text(dir / "trend.csv", trend_csv(s));
  ensure_dir(dir / "plots");
  write_text(dir / "plots" / "trend.svg", trend_svg(s));
}

}  // namespace vflkdk
