// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixmt/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "mixmt/error.hpp"

namespace mixmt::decode {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::PerLatentGreedy: return "greedy";
    case Strategy::Beam: return "beam";
    case Strategy::DiverseBeam: return "diverse-beam";
    case Strategy::Sampling: return "sample";
    case Strategy::TopKSampling: return "topk";
  }
  return "?";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "greedy") return Strategy::PerLatentGreedy;
  if (s == "beam") return Strategy::Beam;
  if (s == "diverse-beam") return Strategy::DiverseBeam;
  if (s == "sample") return Strategy::Sampling;
  if (s == "topk") return Strategy::TopKSampling;
  throw ConfigError("decode strategy must be greedy, beam, diverse-beam, sample or topk; got '" +
                    std::string(s) + "'");
}

void DecodeConfig::validate() const {
  if (strategy != Strategy::PerLatentGreedy && num_hypotheses == 0) {
    throw ConfigError("num_hypotheses must be positive for " + to_string(strategy));
  }
  if (strategy == Strategy::Beam && beam_width < num_hypotheses) {
    throw ConfigError("beam_width must be at least num_hypotheses");
  }
  if (strategy == Strategy::DiverseBeam) {
    if (groups == 0 || num_hypotheses % groups != 0) throw ConfigError("groups must divide num_hypotheses");
    if (!(diversity >= 0.0)) throw ConfigError("diversity strength must be non-negative");
  }
  if (strategy == Strategy::TopKSampling && top_k == 0) throw ConfigError("top_k must be at least 1");
  if (max_len == 1) throw ConfigError("max_len must be 0 (model default) or at least 2");
}

void DecodeConfig::write(KeyValues& kv, const std::string& prefix) const {
  kv.set(prefix + "strategy", to_string(strategy));
  kv.set(prefix + "num_hypotheses", std::to_string(num_hypotheses));
  kv.set(prefix + "beam_width", std::to_string(beam_width));
  kv.set(prefix + "groups", std::to_string(groups));
  kv.set(prefix + "diversity", format_double(diversity));
  kv.set(prefix + "top_k", std::to_string(top_k));
  kv.set(prefix + "max_len", std::to_string(max_len));
  kv.set(prefix + "seed", std::to_string(seed));
  kv.set(prefix + "parallel", exec == Exec::Parallel ? "on" : "off");
}

DecodeConfig DecodeConfig::read(const KeyValues& kv, const std::string& prefix) {
  DecodeConfig c;
  c.strategy = parse_strategy(kv.get(prefix + "strategy", to_string(c.strategy)));
  c.num_hypotheses = kv.get_uint(prefix + "num_hypotheses", c.num_hypotheses);
  c.beam_width = kv.get_uint(prefix + "beam_width", c.beam_width);
  c.groups = kv.get_uint(prefix + "groups", c.groups);
  c.diversity = kv.get_double(prefix + "diversity", c.diversity);
  c.top_k = kv.get_uint(prefix + "top_k", c.top_k);
  c.max_len = kv.get_uint(prefix + "max_len", c.max_len);
  c.seed = kv.get_uint(prefix + "seed", c.seed);
  c.exec = kv.get_bool(prefix + "parallel", true) ? Exec::Parallel : Exec::Serial;
  c.validate();
  return c;
}

bool emittable(int token) { return token != kPad && token != kBos; }

namespace {

void check_max_len(std::size_t max_len) {
  if (max_len < 1) throw PreconditionError("max_len must be at least 1");
}

// Best emittable token; ties go to the smaller id.
int best_token(const std::vector<double>& lp) {
  int best = -1;
  for (std::size_t v = 0; v < lp.size(); ++v) {
    if (!emittable(static_cast<int>(v))) continue;
    if (best < 0 || lp[v] > lp[static_cast<std::size_t>(best)]) best = static_cast<int>(v);
  }
  return best;
}

struct Beam {
  StepDecoder decoder;
  Sentence tokens;
  double score = 0.0;  // true log-probability
  double key = 0.0;    // selection score (diversity-adjusted)
  bool finished = false;
  int last = kBos;
};

struct Candidate {
  std::size_t beam;
  int token;  // -1: carry a finished beam over unchanged
  double score;
  double key;
};

// One lockstep expansion of a beam group. `penalty[v]` is subtracted from
// the selection key of token v. Finished beams stay as candidates. Tokens
// newly picked are appended to `picked`.
std::vector<Beam> advance(const std::vector<Beam>& beams, std::size_t width, std::size_t max_len,
                          const std::vector<double>& penalty,
                          const std::vector<std::vector<double>>& dists, std::vector<int>& picked) {
  std::vector<Candidate> cands;
  for (std::size_t b = 0; b < beams.size(); ++b) {
    const Beam& beam = beams[b];
    if (beam.finished) {
      cands.push_back({b, -1, beam.score, beam.key});
      continue;
    }
    const auto& lp = dists[b];
    const bool force_eos = beam.tokens.size() + 1 >= max_len;
    for (std::size_t v = 0; v < lp.size(); ++v) {
      const int tok = static_cast<int>(v);
      if (!emittable(tok) || (force_eos && tok != kEos)) continue;
      cands.push_back({b, tok, beam.score + lp[v], beam.key + lp[v] - penalty[v]});
    }
  }
  // Stable: equal keys keep (beam, token) order, so ties favor smaller ids.
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& a, const Candidate& b) { return a.key > b.key; });
  if (cands.size() > width) cands.resize(width);

  std::vector<Beam> next;
  next.reserve(cands.size());
  for (const Candidate& c : cands) {
    Beam nb = beams[c.beam];
    if (c.token >= 0) {
      picked.push_back(c.token);
      nb.score = c.score;
      nb.key = c.key;
      nb.last = c.token;
      if (c.token == kEos) {
        nb.finished = true;
      } else {
        nb.tokens.push_back(c.token);
      }
    }
    next.push_back(std::move(nb));
  }
  return next;
}

bool all_finished(const std::vector<Beam>& beams) {
  return std::all_of(beams.begin(), beams.end(), [](const Beam& b) { return b.finished; });
}

// Decodes `groups` beams of `width` in lockstep; returns each group's beams
// ordered by selection key.
std::vector<std::vector<Beam>> group_beam_search(const MixtureModel& model, const Sentence& x,
                                                 std::size_t groups, std::size_t width, double lambda,
                                                 std::size_t max_len, std::size_t z) {
  check_max_len(max_len);
  if (width == 0) throw PreconditionError("beam width must be positive");
  if (!(lambda >= 0.0)) throw PreconditionError("diversity strength must be non-negative");
  const EncoderState enc = encode(model, with_eos(x));
  const std::size_t vocab = model.config().vocab_tgt;
  std::vector<std::vector<Beam>> g(groups, {Beam{StepDecoder(model, enc, z), {}, 0.0, 0.0, false, kBos}});
  while (!std::all_of(g.begin(), g.end(), all_finished)) {
    std::vector<double> penalty(vocab, 0.0);
    for (auto& beams : g) {
      std::vector<std::vector<double>> dists(beams.size());
      for (std::size_t b = 0; b < beams.size(); ++b) {
        if (!beams[b].finished) dists[b] = beams[b].decoder.next(beams[b].last);
      }
      std::vector<int> picked;
      beams = advance(beams, width, max_len, penalty, dists, picked);
      for (int tok : picked) penalty[static_cast<std::size_t>(tok)] += lambda;
    }
  }
  return g;
}

Hypothesis to_hypothesis(const Beam& b, int origin) { return {b.tokens, b.score, origin}; }

}  // namespace

Hypothesis greedy(const MixtureModel& model, const EncoderState& enc, std::size_t z, std::size_t max_len) {
  check_max_len(max_len);
  StepDecoder dec(model, enc, z);
  Hypothesis h;
  h.origin = static_cast<int>(z);
  int prev = kBos;
  while (true) {
    const auto lp = dec.next(prev);
    const int tok = h.tokens.size() + 1 >= max_len ? kEos : best_token(lp);
    h.score += lp[static_cast<std::size_t>(tok)];
    if (tok == kEos) break;
    h.tokens.push_back(tok);
    prev = tok;
  }
  return h;
}

std::vector<Hypothesis> greedy_per_latent(const MixtureModel& model, const Sentence& x, std::size_t max_len) {
  const EncoderState enc = encode(model, with_eos(x));
  std::vector<Hypothesis> out;
  for (std::size_t z = 0; z < model.num_experts(); ++z) out.push_back(greedy(model, enc, z, max_len));
  return out;
}

std::vector<Hypothesis> beam_search(const MixtureModel& model, const Sentence& x, std::size_t width,
                                    std::size_t k_out, std::size_t max_len, std::size_t z) {
  if (k_out == 0 || width < k_out) throw PreconditionError("beam search needs width >= k_out >= 1");
  const auto groups = group_beam_search(model, x, 1, width, 0.0, max_len, z);
  std::vector<Hypothesis> out;
  for (std::size_t r = 0; r < std::min(k_out, groups[0].size()); ++r) {
    out.push_back(to_hypothesis(groups[0][r], static_cast<int>(r)));
  }
  return out;
}

std::vector<Hypothesis> diverse_beam_search(const MixtureModel& model, const Sentence& x,
                                            std::size_t k_out, std::size_t groups, double lambda,
                                            std::size_t max_len, std::size_t z) {
  if (groups == 0 || k_out == 0 || k_out % groups != 0) {
    throw PreconditionError("diverse beam search needs groups dividing k_out");
  }
  const std::size_t width = k_out / groups;
  const auto g = group_beam_search(model, x, groups, width, lambda, max_len, z);
  std::vector<Hypothesis> out;
  for (std::size_t gi = 0; gi < groups; ++gi) {
    for (std::size_t r = 0; r < g[gi].size(); ++r) {
      out.push_back(to_hypothesis(g[gi][r], static_cast<int>(gi * width + r)));
    }
  }
  return out;
}

std::vector<Hypothesis> topk_sample(const MixtureModel& model, const Sentence& x, std::size_t k_out,
                                    std::size_t k, std::size_t max_len, std::uint64_t seed,
                                    std::size_t z) {
  check_max_len(max_len);
  if (k == 0) throw PreconditionError("top-k sampling needs k >= 1");
  const EncoderState enc = encode(model, with_eos(x));
  std::vector<Hypothesis> out;
  std::vector<int> order;
  for (std::size_t i = 0; i < k_out; ++i) {
    Rng rng(substream(seed, "sample", i));
    StepDecoder dec(model, enc, z);
    Hypothesis h;
    h.origin = static_cast<int>(i);
    int prev = kBos;
    while (true) {
      const auto lp = dec.next(prev);
      int tok = kEos;
      if (h.tokens.size() + 1 < max_len) {
        order.clear();
        for (std::size_t v = 0; v < lp.size(); ++v) {
          if (emittable(static_cast<int>(v))) order.push_back(static_cast<int>(v));
        }
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
          return lp[static_cast<std::size_t>(a)] > lp[static_cast<std::size_t>(b)];
        });
        order.resize(std::min(k, order.size()));
        double total = 0.0;
        for (int v : order) total += std::exp(lp[static_cast<std::size_t>(v)]);
        const double u = rng.uniform() * total;
        double acc = 0.0;
        tok = order.back();
        for (int v : order) {
          acc += std::exp(lp[static_cast<std::size_t>(v)]);
          if (u < acc) {
            tok = v;
            break;
          }
        }
      }
      h.score += lp[static_cast<std::size_t>(tok)];
      if (tok == kEos) break;
      h.tokens.push_back(tok);
      prev = tok;
    }
    out.push_back(std::move(h));
  }
  return out;
}

std::vector<Hypothesis> sample(const MixtureModel& model, const Sentence& x, std::size_t k_out,
                               std::size_t max_len, std::uint64_t seed, std::size_t z) {
  return topk_sample(model, x, k_out, model.config().vocab_tgt, max_len, seed, z);
}

HypothesisSet decode(const MixtureModel& model, const Example& example, const DecodeConfig& config) {
  config.validate();
  const std::size_t max_len = config.max_len ? config.max_len : model.config().max_len;
  const std::uint64_t seed = substream(config.seed, "decode", example.id);
  HypothesisSet set{example.id, example.source, {}};
  switch (config.strategy) {
    case Strategy::PerLatentGreedy:
      set.hypotheses = greedy_per_latent(model, example.source, max_len);
      if (config.num_hypotheses && config.num_hypotheses != set.hypotheses.size()) {
        throw ConfigError("greedy per-latent decoding yields one hypothesis per latent (" +
                          std::to_string(set.hypotheses.size()) + ")");
      }
      break;
    case Strategy::Beam:
      set.hypotheses = beam_search(model, example.source, config.beam_width, config.num_hypotheses, max_len);
      break;
    case Strategy::DiverseBeam:
      set.hypotheses = diverse_beam_search(model, example.source, config.num_hypotheses, config.groups,
                                           config.diversity, max_len);
      break;
    case Strategy::Sampling:
      set.hypotheses = sample(model, example.source, config.num_hypotheses, max_len, seed);
      break;
    case Strategy::TopKSampling:
      if (config.top_k > model.config().vocab_tgt) throw ConfigError("top_k exceeds the target vocabulary");
      set.hypotheses = topk_sample(model, example.source, config.num_hypotheses, config.top_k, max_len, seed);
      break;
  }
  return set;
}

std::vector<HypothesisSet> decode_corpus(const MixtureModel& model, const std::vector<Example>& examples,
                                         const DecodeConfig& config) {
  std::vector<HypothesisSet> out(examples.size());
  for_each_index(examples.size(), config.exec,
                 [&](std::size_t i) { out[i] = decode(model, examples[i], config); });
  return out;
}

void write_hypotheses(const std::filesystem::path& path, const std::vector<HypothesisSet>& sets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  for (const HypothesisSet& s : sets) {
    nlohmann::ordered_json hyps = nlohmann::ordered_json::array();
    for (const Hypothesis& h : s.hypotheses) {
      hyps.push_back({{"tokens", h.tokens}, {"score", h.score}, {"origin", h.origin}});
    }
    nlohmann::ordered_json j = {{"id", s.source_id}, {"source", s.source}, {"hypotheses", hyps}};
    out << j.dump() << "\n";
  }
}

std::vector<HypothesisSet> read_hypotheses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open hypothesis file " + path.string());
  std::vector<HypothesisSet> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      HypothesisSet s;
      s.source_id = j.at("id").get<std::size_t>();
      s.source = j.at("source").get<Sentence>();
      for (const auto& h : j.at("hypotheses")) {
        s.hypotheses.push_back({h.at("tokens").get<Sentence>(), h.at("score").get<double>(),
                                h.at("origin").get<int>()});
      }
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace mixmt::decode
