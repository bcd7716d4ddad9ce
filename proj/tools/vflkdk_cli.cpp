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


// vflkdk: run experiments, sweeps, offline attacks and report rendering.
//
// Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime failure
// (including runs that finished with a failed seed).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vflkdk/experiments.hpp"

namespace {

using namespace vflkdk;

struct Common {
  std::string config;
  std::string out;
  std::vector<std::string> sets;
  std::vector<std::uint64_t> seed;
  std::size_t threads = 0;
};

std::vector<std::uint64_t> env_seeds() {
  const char* v = std::getenv("VFL_SEED");
  if (!v || !*v) return {};
  return parse_seed_list(v);
}

ExperimentConfig load(const Common& c, json* doc_out = nullptr,
                      std::vector<Override>* ov_out = nullptr) {
  json doc = load_json_file(c.config);
  std::vector<Override> ov;
  for (const auto& s : c.sets) ov.push_back(parse_override(s));
  if (!c.seed.empty()) ov.push_back({"seeds", json(c.seed).dump()});
  ExperimentConfig cfg = resolve_config(doc, ov, env_seeds());
  if (doc_out) *doc_out = doc;
  if (ov_out) *ov_out = ov;
  return cfg;
}

void print_summary(const MetricsReport& r) {
  std::printf("%s  config %s  %s\n", r.name.c_str(), r.config_hash.substr(0, 12).c_str(),
              r.complete ? "complete" : "INCOMPLETE");
  for (const auto& a : r.aggregates) {
    if (a.metric != "top1" && a.metric != "asr_top1") continue;
    std::printf("  %-8s %-5s %-9s median %.4f  [%.4f, %.4f]  n=%zu\n", a.attack.c_str(),
                to_string(a.split), a.metric.c_str(), a.median, a.min, a.max, a.count);
  }
  for (const auto& s : r.seeds) {
    if (!s.ok) std::printf("  seed %llu failed: %s\n", (unsigned long long)s.seed, s.error.c_str());
  }
}

void add_common(CLI::App* sub, Common& c, bool needs_out) {
  sub->add_option("--config", c.config, "experiment config (JSON)")->required();
  sub->add_option("--set", c.sets, "override KEY=VALUE (dotted path, repeatable)");
  sub->add_option("--seed", c.seed, "replace the seed list");
  if (needs_out) {
    sub->add_option("--out", c.out, "output directory (default: output.dir of the config)");
    sub->add_option("--threads", c.threads, "worker threads for seeds (0: all cores)");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vertical federated learning simulator with KDk label anonymization"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false, verbose = false;
  app.add_flag("--quiet,-q", quiet, "print nothing on success");
  app.add_flag("--verbose,-v", verbose, "progress per seed");

  Common train_c, sweep_c, validate_c;
  auto* train_cmd = app.add_subcommand("train", "run one experiment");
  add_common(train_cmd, train_c, true);

  auto* sweep_cmd = app.add_subcommand("sweep", "run one experiment per value of a field");
  add_common(sweep_cmd, sweep_c, true);
  std::string axis, values;
  sweep_cmd->add_option("--axis", axis, "dotted path of a scalar field")->required();
  sweep_cmd->add_option("--values", values, "comma-separated values")->required();

  auto* validate_cmd = app.add_subcommand("validate", "check a config and print it resolved");
  add_common(validate_cmd, validate_c, false);

  auto* attack_cmd = app.add_subcommand("attack", "direct attack on a saved transcript");
  std::string transcript, labels, attack_out;
  std::size_t party = 1, classes = 0, epoch = 0, topk = 5;
  attack_cmd->add_option("--transcript", transcript, "transcript (JSON Lines)")->required();
  attack_cmd->add_option("--party", party, "adversary party index (>= 1)");
  attack_cmd->add_option("--epoch", epoch, "epoch whose packets are read");
  attack_cmd->add_option("--labels", labels, "sample_index,label CSV for scoring");
  attack_cmd->add_option("--topk", topk, "k for Top-k ASR");
  attack_cmd->add_option("--out", attack_out, "directory for attack_report.json");
  attack_cmd->add_option("--classes", classes, "class count (default: packet width)");

  auto* report_cmd = app.add_subcommand("report", "render a saved report.json");
  std::string report_in, report_out, formats = "json,csv,svg";
  report_cmd->add_option("--input", report_in, "report.json")->required();
  report_cmd->add_option("--out", report_out, "output directory")->required();
  report_cmd->add_option("--format", formats, "comma-separated subset of json,csv,svg");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  auto log = [&](const std::string& s) {
    if (verbose) std::cerr << s << '\n';
  };

  try {
    if (*validate_cmd) {
      const ExperimentConfig cfg = load(validate_c);
      if (!quiet) {
        std::cout << to_json(cfg).dump(2) << '\n';
        std::cout << "config_hash " << config_hash(cfg) << '\n';
      }
      return 0;
    }
    if (*train_cmd) {
      const ExperimentConfig cfg = load(train_c);
      const std::filesystem::path dir = train_c.out.empty() ? cfg.output.dir : train_c.out;
      ensure_dir(dir);
      std::vector<SeedOutcome> outcomes;
      RunOptions opt{train_c.threads, log, cfg.output.save_transcript ? &outcomes : nullptr};
      const MetricsReport rep = run(cfg, opt);
      emit_all(rep, dir);
      if (cfg.output.save_transcript) emit_transcripts(outcomes, dir);
      if (!quiet) {
        print_summary(rep);
        std::printf("wrote %s\n", dir.string().c_str());
      }
      return rep.complete ? 0 : 2;
    }
    if (*sweep_cmd) {
      json doc;
      std::vector<Override> ov;
      const ExperimentConfig base = load(sweep_c, &doc, &ov);
      const std::filesystem::path dir = sweep_c.out.empty() ? base.output.dir : sweep_c.out;
      RunOptions opt{sweep_c.threads, log, nullptr};
      const SweepResult s = sweep(doc, ov, axis, parse_axis_values(values), env_seeds(), opt);
      emit_sweep(s, dir);
      bool complete = true;
      for (const auto& r : s.reports) complete = complete && r.complete;
      if (!quiet) {
        std::cout << trend_csv(s);
        std::printf("wrote %s\n", dir.string().c_str());
      }
      return complete ? 0 : 2;
    }
    if (*attack_cmd) {
      if (party == 0) throw ValidationError("party", "party 0 holds the labels");
      const auto rounds = read_transcript(transcript);
      if (rounds.empty()) throw DataError("transcript is empty");
      const auto packets = packets_for_party(rounds, party);
      std::size_t n = 0;
      for (const auto& p : packets) {
        for (std::size_t i : p.batch) n = std::max(n, i + 1);
      }
      std::vector<std::size_t> truth;
      if (!labels.empty()) {
        const auto table = read_csv(labels);
        for (const auto& row : table.rows) {
          if (row.size() < 2) throw DataError("labels: expected sample_index,label");
          const std::size_t i = std::stoul(row[0]);
          if (i >= truth.size()) truth.resize(i + 1, 0);
          truth[i] = std::stoul(row[1]);
        }
        n = std::max(n, truth.size());
        truth.resize(n, 0);
      }
      const std::size_t c = classes ? classes : packets.front().gradient.cols();
      const auto d = direct_attack(packets, n, c, epoch);
      json out = {{"kind", "direct"},
                  {"party", party},
                  {"epoch", epoch},
                  {"samples", n},
                  {"fallback_count", d.fallback_count},
                  {"predicted", d.predicted}};
      if (!truth.empty()) {
        const auto rep = score_direct(d, truth, std::min(topk, c));
        out["asr_top1"] = rep.top1;
        out["asr_topk"] = rep.topk;
        out["topk"] = rep.k;
      }
      if (!attack_out.empty()) {
        ensure_dir(attack_out);
        write_text(std::filesystem::path(attack_out) / "attack_report.json", out.dump(2) + "\n");
      }
      if (!quiet) {
        std::printf("direct attack: %zu samples, %zu fallback rows", n, d.fallback_count);
        if (out.contains("asr_top1")) std::printf(", top1 ASR %.4f", out["asr_top1"].get<double>());
        std::printf("\n");
      }
      return 0;
    }
    if (*report_cmd) {
      const MetricsReport r = report_from_json(load_json_file(report_in));
      for (const auto& f : parse_axis_values(formats)) {
        const std::string name = value_label(f);
        if (name == "json") {
          emit_report(r, ReportFormat::json, report_out);
        } else if (name == "csv") {
          emit_report(r, ReportFormat::csv, report_out);
        } else if (name == "svg") {
          emit_report(r, ReportFormat::svg, report_out);
        } else {
          throw ValidationError("format", "unknown format " + name);
        }
      }
      if (!quiet) print_summary(r);
      return 0;
    }
  } catch (const ValidationError& e) {
    std::cerr << "invalid: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
