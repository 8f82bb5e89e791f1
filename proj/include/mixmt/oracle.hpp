// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

// Exact EM on a mixture of position-aligned categorical translators:
// p(y | z, x) = prod_t T_z[x_t][y_t] on length-matched pairs, with a uniform
// or free prior over z. E and M steps are closed form.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "mixmt/corpus.hpp"
#include "mixmt/em.hpp"
#include "mixmt/model.hpp"
#include "mixmt/parallel.hpp"

namespace mixmt::oracle {

enum class EmMode { Soft, Hard };

// One length-matched (source, reference) pair, without EOS.
struct AlignedPair {
  std::size_t id = 0;
  int style = -1;
  Sentence source;
  Sentence target;
};

// One pair per reference; InputError if any pair is not length-matched.
std::vector<AlignedPair> aligned_pairs(const std::vector<Example>& examples);

struct CategoricalMixture {
  std::size_t k = 0;
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  bool free_prior = false;
  std::vector<double> tables;  // [z][u][v], rows over content targets only
  std::vector<double> prior;   // [z]

  double& at(std::size_t z, std::size_t u, std::size_t v) { return tables[(z * src_vocab + u) * tgt_vocab + v]; }
  double at(std::size_t z, std::size_t u, std::size_t v) const {
    return tables[(z * src_vocab + u) * tgt_vocab + v];
  }

  // Every row uniform over content targets.
  static CategoricalMixture uniform(std::size_t k, std::size_t src_vocab, std::size_t tgt_vocab,
                                    bool free_prior = false);
  // Rows drawn as normalized Exp(1) variates (Dirichlet(1)).
  static CategoricalMixture random(std::size_t k, std::size_t src_vocab, std::size_t tgt_vocab,
                                   std::uint64_t seed, bool free_prior = false);

  // log prod_t T_z[x_t][y_t] (may be -inf).
  double log_likelihood(const AlignedPair& p, std::size_t z) const;
  double joint(const AlignedPair& p, std::size_t z) const;
  // Rows and prior sum to 1 within 1e-12.
  void validate() const;
};

std::vector<std::vector<double>> oracle_e_step(const CategoricalMixture& mix, const std::vector<AlignedPair>& pairs,
                                               EmMode mode, Exec exec = Exec::Parallel);
// Responsibility-weighted counts plus alpha over content targets; a row with
// no mass (alpha = 0, no counts) keeps its value from `previous`.
CategoricalMixture oracle_m_step(const std::vector<AlignedPair>& pairs,
                                 const std::vector<std::vector<double>>& responsibilities, double alpha,
                                 const CategoricalMixture& previous);

double marginal_log_likelihood(const CategoricalMixture& mix, const std::vector<AlignedPair>& pairs);
// sum_i max_z log p(y_i, z | x_i): the negated hard objective.
double hard_log_likelihood(const CategoricalMixture& mix, const std::vector<AlignedPair>& pairs);

struct OracleConfig {
  std::size_t k = 2;
  EmMode mode = EmMode::Soft;
  em::Schedule schedule = em::Schedule::Offline;
  std::size_t iterations = 100;
  double alpha = 0.01;
  std::size_t batch_size = 50;  // online schedule
  bool free_prior = false;
  std::uint64_t seed = 1;
  Exec exec = Exec::Parallel;
};

struct TraceRow {
  std::size_t iteration = 0;
  double log_likelihood = 0.0;       // marginal (soft) or hard log-likelihood (hard)
  double marginal = 0.0;
  double hard = 0.0;
  std::vector<double> usage;         // summed responsibilities per expert
};

struct OracleTrace {
  std::vector<TraceRow> rows;
  CategoricalMixture mixture;
  std::vector<std::vector<double>> responsibilities;  // final E-step

  // iteration,log_likelihood,usage_1..usage_K
  void write_csv(const std::filesystem::path& path) const;
};

// Row i holds statistics of the model before update i (row `iterations`
// is the final model). Offline: full E then M per iteration. Online:
// incremental EM over shuffled mini-batches, one pass per iteration.
OracleTrace oracle_em_run(const std::vector<AlignedPair>& pairs, std::size_t src_vocab, std::size_t tgt_vocab,
                          const OracleConfig& config, const std::optional<CategoricalMixture>& init = {});

// Fraction of pairs whose responsibility argmax matches the style label
// under the best latent-to-style assignment.
double partition_accuracy(const std::vector<std::vector<double>>& responsibilities,
                          const std::vector<AlignedPair>& pairs, std::size_t num_styles);

// Per expert: fraction of examples whose token-wise argmax translation
// (ties to the smaller id) equals one of the references.
std::vector<double> expert_exact_match(const CategoricalMixture& mix, const std::vector<Example>& examples);

struct RichGetRicher {
  std::vector<std::vector<std::size_t>> usage;  // [pass][expert] assignment counts
  CategoricalMixture mixture;
};

// Hard online EM with an update after every example. Expert 0 starts at
// (1 - eps) * uniform + eps * empirical, the others uniform; each expert's
// rows are (pseudo * initial + counts) normalized.
RichGetRicher rich_get_richer_demo(const std::vector<AlignedPair>& pairs, std::size_t src_vocab,
                                   std::size_t tgt_vocab, std::size_t k, double eps, std::size_t passes,
                                   double pseudo = 1.0);

// A neural mixture (Independent decoders, learned prior head) whose Eval-mode
// conditionals reproduce the oracle's: p(y_t | z, x, y_<t) = T_z[x_t][y_t]
// on content targets up to ~1e-20, then EOS with a latent-independent
// probability. Needs strictly positive tables.
MixtureModel lookup_table_model(const CategoricalMixture& mix, std::size_t max_source_len,
                                std::size_t embed_dim = 32, std::size_t hidden_dim = 64);

}  // namespace mixmt::oracle
