// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

// Hypothesis generation: greedy per-latent decoding for mixtures, and the
// single-model baselines (beam, diverse beam, sampling, top-k sampling).
//
// All decoding runs in Eval mode. PAD and BOS are never emitted. max_len
// counts the final EOS; at the last position EOS is forced and its
// log-probability is added to the score. Scores are unnormalized sums of
// token log-probabilities.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mixmt/config.hpp"
#include "mixmt/corpus.hpp"
#include "mixmt/model.hpp"
#include "mixmt/parallel.hpp"

namespace mixmt::decode {

enum class Strategy { PerLatentGreedy, Beam, DiverseBeam, Sampling, TopKSampling };

std::string to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

struct DecodeConfig {
  Strategy strategy = Strategy::PerLatentGreedy;
  std::size_t num_hypotheses = 0;  // 0: one per latent for PerLatentGreedy, else required
  std::size_t beam_width = 5;
  std::size_t groups = 1;
  double diversity = 0.5;
  std::size_t top_k = 10;
  std::size_t max_len = 0;  // 0: the model's max_len
  std::uint64_t seed = 1;
  Exec exec = Exec::Parallel;

  void validate() const;
  void write(KeyValues& kv, const std::string& prefix = "decode.") const;
  static DecodeConfig read(const KeyValues& kv, const std::string& prefix = "decode.");
};

struct Hypothesis {
  Sentence tokens;  // without the final EOS
  double score = 0.0;
  int origin = 0;   // latent id, beam rank or sample index

  friend bool operator==(const Hypothesis&, const Hypothesis&) = default;
};

struct HypothesisSet {
  std::size_t source_id = 0;
  Sentence source;  // without EOS
  std::vector<Hypothesis> hypotheses;

  friend bool operator==(const HypothesisSet&, const HypothesisSet&) = default;
};

// Tokens the decoder may emit (everything but PAD and BOS).
bool emittable(int token);

Hypothesis greedy(const MixtureModel& model, const EncoderState& enc, std::size_t z,
                  std::size_t max_len);
std::vector<Hypothesis> greedy_per_latent(const MixtureModel& model, const Sentence& x,
                                          std::size_t max_len);
// Finished hypotheses stop expanding but keep competing; returns the best
// k_out in descending score, origin = rank.
std::vector<Hypothesis> beam_search(const MixtureModel& model, const Sentence& x, std::size_t width,
                                    std::size_t k_out, std::size_t max_len, std::size_t z = 0);
// Groups advance in lockstep; at step t, group g's token scores are penalized
// by lambda times the number of earlier groups' step-t picks of that token.
// Groups are reported in order; origin = g * (k_out / groups) + rank.
std::vector<Hypothesis> diverse_beam_search(const MixtureModel& model, const Sentence& x,
                                            std::size_t k_out, std::size_t groups, double lambda,
                                            std::size_t max_len, std::size_t z = 0);
// Ancestral sampling restricted to the k most probable emittable tokens
// (ordered by probability, then smaller id) and renormalized. Sample i draws
// from substream(seed, "sample", i).
std::vector<Hypothesis> topk_sample(const MixtureModel& model, const Sentence& x, std::size_t k_out,
                                    std::size_t k, std::size_t max_len, std::uint64_t seed,
                                    std::size_t z = 0);
// Unrestricted ancestral sampling (top-k with k = all emittable tokens).
std::vector<Hypothesis> sample(const MixtureModel& model, const Sentence& x, std::size_t k_out,
                               std::size_t max_len, std::uint64_t seed, std::size_t z = 0);

// Dispatches on config.strategy; sampling seeds are derived per source id.
HypothesisSet decode(const MixtureModel& model, const Example& example, const DecodeConfig& config);
std::vector<HypothesisSet> decode_corpus(const MixtureModel& model, const std::vector<Example>& examples,
                                         const DecodeConfig& config);

// JSON-lines: {"id", "source", "hypotheses": [{"tokens", "score", "origin"}]}.
void write_hypotheses(const std::filesystem::path& path, const std::vector<HypothesisSet>& sets);
std::vector<HypothesisSet> read_hypotheses(const std::filesystem::path& path);

}  // namespace mixmt::decode
