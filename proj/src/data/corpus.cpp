// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixmt/corpus.hpp"

#include <fstream>
#include <json.hpp>

#include "mixmt/error.hpp"

namespace mixmt {

using nlohmann::json;

Sentence with_eos(Sentence s) {
  if (s.empty() || s.back() != kEos) s.push_back(kEos);
  return s;
}

Sentence strip_eos(Sentence s) {
  if (!s.empty() && s.back() == kEos) s.pop_back();
  return s;
}

std::vector<TrainingPair> make_training_pairs(const std::vector<Example>& examples) {
  std::vector<TrainingPair> pairs;
  for (const Example& ex : examples) {
    for (const Reference& ref : ex.references) {
      TrainingPair p;
      p.id = pairs.size();
      p.source_id = ex.id;
      p.style = ref.style;
      p.source = with_eos(ex.source);
      p.target = with_eos(ref.tokens);
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

std::vector<Example> read_examples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open corpus file " + path.string());
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      Example ex;
      ex.id = j.at("id").get<std::size_t>();
      ex.source = j.at("source").get<Sentence>();
      for (const auto& r : j.at("references")) {
        ex.references.push_back({r.at("style").get<int>(), r.at("tokens").get<Sentence>()});
      }
      if (ex.source.empty()) throw InputError("empty source");
      out.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_examples(const std::filesystem::path& path, const std::vector<Example>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  for (const Example& ex : examples) {
    nlohmann::ordered_json refs = nlohmann::ordered_json::array();
    for (const Reference& r : ex.references) refs.push_back({{"style", r.style}, {"tokens", r.tokens}});
    nlohmann::ordered_json j = {{"id", ex.id}, {"source", ex.source}, {"references", refs}};
    out << j.dump() << "\n";
  }
}

}  // namespace mixmt
