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

// JSON Lines persistence for round transcripts: one round per line.

#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vflkdk/errors.hpp"
#include "vflkdk/matrix.hpp"
#include "vflkdk/vfl.hpp"

namespace vflkdk {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  try {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("matrix json: ") + e.what());
  }
}

inline nlohmann::json transcript_to_json(const RoundTranscript& t) {
  nlohmann::json j;
  j["epoch"] = t.epoch;
  j["batch_index"] = t.batch_index;
  j["batch"] = t.batch;
  j["loss"] = t.loss;
  auto& g = j["gradients"] = nlohmann::json::array();
  for (const auto& m : t.gradients) g.push_back(matrix_to_json(m));
  if (!t.embeddings.empty()) {
    auto& e = j["embeddings"] = nlohmann::json::array();
    for (const auto& m : t.embeddings) e.push_back(matrix_to_json(m));
  }
  return j;
}

inline RoundTranscript transcript_from_json(const nlohmann::json& j) {
  RoundTranscript t;
  try {
    t.epoch = j.at("epoch").get<std::size_t>();
    t.batch_index = j.at("batch_index").get<std::size_t>();
    t.batch = j.at("batch").get<std::vector<std::size_t>>();
    t.loss = j.at("loss").get<double>();
    for (const auto& m : j.at("gradients")) t.gradients.push_back(matrix_from_json(m));
    if (j.contains("embeddings")) {
      for (const auto& m : j.at("embeddings")) t.embeddings.push_back(matrix_from_json(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("transcript json: ") + e.what());
  }
  for (const auto& g : t.gradients) {
    if (g.rows() != t.batch.size()) throw DataError("transcript: gradient rows != batch size");
  }
  return t;
}

inline void write_transcript(std::ostream& out, std::span<const RoundTranscript> rounds) {
  for (const auto& t : rounds) out << transcript_to_json(t).dump() << '\n';
}

inline void write_transcript(const std::string& path, std::span<const RoundTranscript> rounds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write transcript: " + path);
  write_transcript(out, rounds);
  if (!out) throw DataError("write failed: " + path);
}

inline std::vector<RoundTranscript> read_transcript(std::istream& in) {
  std::vector<RoundTranscript> rounds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw DataError("transcript: bad json on line " + std::to_string(lineno));
    rounds.push_back(transcript_from_json(j));
  }
  return rounds;
}

inline std::vector<RoundTranscript> read_transcript(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open transcript: " + path);
  return read_transcript(in);
}

}  // namespace vflkdk
