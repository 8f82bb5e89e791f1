// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

// Diversity and quality metrics over multi-reference, multi-hypothesis test
// sets: corpus BLEU-4, Pairwise-BLEU, Self-BLEU, leave-one-out multi-reference
// BLEU, reference coverage, per-latent BLEU and degeneracy flags.
//
// Corpus BLEU: uniform weights over n = 1..4, clipped counts aggregated over
// the corpus, brevity penalty exp(min(0, 1 - r/c)) with r the sum of closest
// reference lengths (ties to the shorter), no smoothing, x100.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mixmt/decoder.hpp"
#include "mixmt/model.hpp"
#include "mixmt/parallel.hpp"

namespace mixmt::metrics {

constexpr std::size_t kMaxOrder = 4;

struct NGramStats {
  std::array<std::size_t, kMaxOrder> matches{};
  std::array<std::size_t, kMaxOrder> totals{};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  NGramStats& operator+=(const NGramStats& o);
  friend bool operator==(const NGramStats&, const NGramStats&) = default;
};

struct BleuPair {
  std::vector<Sentence> refs;
  Sentence hyp;
};

NGramStats ngram_stats(const std::vector<Sentence>& refs, const Sentence& hyp);
double bleu_from_stats(const NGramStats& s);
double corpus_bleu(const std::vector<BleuPair>& pairs, Exec exec = Exec::Serial);
// Sentence BLEU with add-one smoothing of the n >= 2 precisions.
double smoothed_sentence_bleu(const std::vector<Sentence>& refs, const Sentence& hyp);

struct EvalInstance {
  std::size_t source_id = 0;
  std::vector<Sentence> references;
  std::vector<Sentence> hypotheses;
  std::vector<int> origins;  // same length as hypotheses
};

// Ordered pairs (j, k), j != k, pooled into one corpus BLEU.
double pairwise_bleu(const std::vector<EvalInstance>& set, Exec exec = Exec::Serial);
// Each hypothesis against all its siblings as one reference list.
double self_bleu(const std::vector<EvalInstance>& set, Exec exec = Exec::Serial);

struct LeaveOneOut {
  double system = 0.0;
  double human = 0.0;
};
LeaveOneOut multi_ref_bleu(const std::vector<EvalInstance>& set, Exec exec = Exec::Serial);

// Mean number of distinct references that are some hypothesis's best match
// by smoothed sentence BLEU; exact ties are broken by a draw from
// substream(substream(seed, "coverage", instance), "hyp", hash of tokens).
double ref_coverage(const std::vector<EvalInstance>& set, std::uint64_t seed);
// Distinct references matched on one instance.
std::size_t instance_coverage(const EvalInstance& inst, std::uint64_t seed, std::size_t index);

enum class RefSelection { First, All };

struct PerLatent {
  std::vector<double> bleu;         // per origin 0..K-1
  std::vector<double> exact_match;  // fraction of hypotheses equal to a reference
};
// Groups hypotheses by origin; every instance must have each origin 0..K-1.
PerLatent per_latent_bleu(const std::vector<EvalInstance>& set, std::size_t k,
                          RefSelection refs = RefSelection::All);

struct Thresholds {
  double d1_latent = 1.0;
  double healthy = -1.0;  // < 0: half the human leave-one-out BLEU
  double d2_pairwise = 95.0;
};

struct Flags {
  bool d1 = false;
  bool d2 = false;
};

Flags degeneracy_classify(double pairwise, double bleu, const std::vector<double>& per_latent,
                          double healthy, const Thresholds& t);

struct EvalReport {
  std::size_t instances = 0;
  std::size_t num_hypotheses = 0;
  double pairwise_bleu = 0.0;
  double bleu = 0.0;
  double human_bleu = 0.0;
  double self_bleu = 0.0;
  double coverage = 0.0;
  PerLatent per_latent;
  Thresholds thresholds;
  double healthy = 0.0;
  Flags flags;

  std::string to_json() const;
  static std::string csv_header(std::size_t k);
  std::string csv_row(const std::string& run_id, const std::string& variant) const;
};

struct EvalOptions {
  Thresholds thresholds;
  RefSelection per_latent_refs = RefSelection::All;
  std::uint64_t seed = 1;
  Exec exec = Exec::Parallel;
};

// Joins hypothesis sets to examples by source id.
std::vector<EvalInstance> make_instances(const std::vector<decode::HypothesisSet>& hyps,
                                         const std::vector<Example>& examples);
EvalReport evaluate(const std::vector<EvalInstance>& set, const EvalOptions& options = {});

}  // namespace mixmt::metrics
