// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mixmt/datagen.hpp"
#include "mixmt/error.hpp"
#include "mixmt/oracle.hpp"
#include "mixmt/rng.hpp"

using namespace mixmt;
using namespace mixmt::oracle;

namespace {

data::StyledCorpus two_style_corpus(std::size_t sources, double divergence, std::uint64_t seed) {
  data::CorpusSpec spec;
  spec.num_styles = 2;
  spec.num_sentences = sources;
  spec.divergence = divergence;
  spec.test_fraction = 0.0;
  spec.seed = seed;
  return data::generate(spec);
}

// Log-likelihood of a pair under the generating model: uniform prior over
// the deterministic style maps.
double generating_log_likelihood(const data::StyleTable& t, const std::vector<AlignedPair>& pairs) {
  double ll = 0.0;
  for (const auto& p : pairs) {
    double prob = 0.0;
    for (std::size_t s = 0; s < t.num_styles(); ++s) {
      if (t.apply(s, p.source) == p.target) prob += 1.0 / static_cast<double>(t.num_styles());
    }
    ll += std::log(prob);
  }
  return ll;
}

}  // namespace

TEST_CASE("identical experts split responsibility evenly") {
  const auto c = two_style_corpus(40, 0.5, 2);
  const auto pairs = aligned_pairs(c.train);
  CategoricalMixture mix = CategoricalMixture::random(1, c.styles.src_vocab, c.styles.tgt_vocab, 5);
  CategoricalMixture twin = CategoricalMixture::uniform(2, c.styles.src_vocab, c.styles.tgt_vocab);
  const std::size_t block = mix.tables.size();
  std::copy(mix.tables.begin(), mix.tables.end(), twin.tables.begin());
  std::copy(mix.tables.begin(), mix.tables.end(), twin.tables.begin() + static_cast<long>(block));
  for (const auto& r : oracle_e_step(twin, pairs, EmMode::Soft)) {
    CHECK(r[0] == 0.5);
    CHECK(r[1] == 0.5);
  }
  for (const auto& r : oracle_e_step(twin, pairs, EmMode::Hard)) CHECK(r == std::vector<double>{1.0, 0.0});
}

TEST_CASE("an exact style map takes full responsibility") {
  data::CorpusSpec spec;
  spec.num_styles = 2;
  spec.num_sentences = 50;
  spec.test_fraction = 0.0;
  spec.style_maps = {{16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27}, {4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15}};
  const auto c = data::generate(spec);
  const auto& t = c.styles;
  CategoricalMixture mix = CategoricalMixture::uniform(2, t.src_vocab, t.tgt_vocab);
  for (std::size_t z = 0; z < 2; ++z) {
    for (std::size_t u = kFirstContent; u < t.src_vocab; ++u) {
      for (std::size_t v = kFirstContent; v < t.tgt_vocab; ++v) {
        mix.at(z, u, v) = static_cast<int>(v) == t.maps[z][u] ? 1.0 : 0.0;
      }
    }
  }
  mix.validate();
  const auto pairs = aligned_pairs(c.train);
  const auto r = oracle_e_step(mix, pairs, EmMode::Soft);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::vector<double> expect = pairs[i].style == 0 ? std::vector<double>{1.0, 0.0}
                                                           : std::vector<double>{0.0, 1.0};
    CHECK(r[i] == expect);
  }
}

TEST_CASE("soft posteriors match an extended-precision recomputation") {
  const auto c = two_style_corpus(10, 0.5, 3);
  const auto pairs = aligned_pairs(c.train);
  REQUIRE(pairs.size() == 20);
  CategoricalMixture mix = CategoricalMixture::random(3, c.styles.src_vocab, c.styles.tgt_vocab, 9, true);
  mix.prior = {0.2, 0.5, 0.3};
  const auto r = oracle_e_step(mix, pairs, EmMode::Soft, Exec::Serial);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    long double w[3], total = 0.0L;
    for (std::size_t z = 0; z < 3; ++z) {
      long double p = static_cast<long double>(mix.prior[z]);
      for (std::size_t t = 0; t < pairs[i].source.size(); ++t) {
        p *= static_cast<long double>(mix.at(z, static_cast<std::size_t>(pairs[i].source[t]),
                                             static_cast<std::size_t>(pairs[i].target[t])));
      }
      w[z] = p;
      total += p;
    }
    for (std::size_t z = 0; z < 3; ++z) CHECK(std::abs(r[i][z] - static_cast<double>(w[z] / total)) < 1e-14);
  }
}

TEST_CASE("mismatched lengths are rejected") {
  Example ex{0, {4, 5, 6}, {{0, {4, 5}}}};
  CHECK_THROWS_AS(aligned_pairs({ex}), InputError);
  const CategoricalMixture mix = CategoricalMixture::uniform(2, 8, 8);
  CHECK_THROWS_AS(oracle_e_step(mix, {AlignedPair{0, 0, {4, 5}, {4}}}, EmMode::Soft), InputError);
}

TEST_CASE("M-step closed forms") {
  const auto c = two_style_corpus(30, 0.5, 4);
  const auto pairs = aligned_pairs(c.train);
  const std::size_t vs = c.styles.src_vocab, vt = c.styles.tgt_vocab;
  const CategoricalMixture prev = CategoricalMixture::random(2, vs, vt, 1);

  SUBCASE("a starved expert gets the pure smoothing table") {
    const std::vector<std::vector<double>> r(pairs.size(), {1.0, 0.0});
    const CategoricalMixture next = oracle_m_step(pairs, r, 0.01, prev);
    next.validate();
    for (std::size_t u = kFirstContent; u < vs; ++u) {
      for (std::size_t v = kFirstContent; v < vt; ++v) {
        CHECK(next.at(1, u, v) == doctest::Approx(1.0 / static_cast<double>(vt - kFirstContent)).epsilon(1e-14));
      }
    }
  }

  SUBCASE("alpha = 0 on one example is its co-occurrence table") {
    const AlignedPair p{0, 0, {4, 5, 4, 6}, {9, 7, 8, 7}};
    const CategoricalMixture one = CategoricalMixture::uniform(1, 10, 10);
    const CategoricalMixture next = oracle_m_step({p}, {{1.0}}, 0.0, one);
    CHECK(next.at(0, 4, 9) == 0.5);
    CHECK(next.at(0, 4, 8) == 0.5);
    CHECK(next.at(0, 5, 7) == 1.0);
    CHECK(next.at(0, 6, 7) == 1.0);
    CHECK(next.at(0, 5, 9) == 0.0);
    // Unseen source rows keep their previous values.
    CHECK(next.at(0, 7, 4) == one.at(0, 7, 4));
    next.validate();
  }

  SUBCASE("free prior is the responsibility mass") {
    CategoricalMixture free = prev;
    free.free_prior = true;
    std::vector<std::vector<double>> r(pairs.size(), {0.25, 0.75});
    const CategoricalMixture next = oracle_m_step(pairs, r, 0.01, free);
    CHECK(next.prior[0] == doctest::Approx(0.25));
    CHECK(next.prior[1] == doctest::Approx(0.75));
    const CategoricalMixture fixed = oracle_m_step(pairs, r, 0.01, prev);
    CHECK(fixed.prior == prev.prior);
  }
}

TEST_CASE("soft EM is monotone and reaches the generating likelihood") {
  const auto c = two_style_corpus(250, 0.7, 5);
  const auto pairs = aligned_pairs(c.train);
  REQUIRE(pairs.size() == 500);
  OracleConfig cfg;
  cfg.k = 2;
  cfg.iterations = 50;
  cfg.alpha = 0.0;
  cfg.seed = 3;
  const OracleTrace trace = oracle_em_run(pairs, c.styles.src_vocab, c.styles.tgt_vocab, cfg);
  REQUIRE(trace.rows.size() == 51);
  for (std::size_t i = 1; i < trace.rows.size(); ++i) {
    CHECK(trace.rows[i].log_likelihood - trace.rows[i - 1].log_likelihood >= -1e-9);
  }
  const double truth = generating_log_likelihood(c.styles, pairs);
  CHECK(std::abs(trace.rows.back().marginal - truth) < 1e-6);
  trace.mixture.validate();
}

TEST_CASE("hard EM objective never increases") {
  const auto c = two_style_corpus(250, 0.7, 6);
  const auto pairs = aligned_pairs(c.train);
  OracleConfig cfg;
  cfg.k = 3;
  cfg.mode = EmMode::Hard;
  cfg.iterations = 30;
  const OracleTrace trace = oracle_em_run(pairs, c.styles.src_vocab, c.styles.tgt_vocab, cfg);
  for (std::size_t i = 1; i < trace.rows.size(); ++i) {
    CHECK(trace.rows[i].hard - trace.rows[i - 1].hard >= -1e-9);
    CHECK(trace.rows[i].log_likelihood == trace.rows[i].hard);
  }
  // Usage of a hard E-step counts examples.
  for (const auto& row : trace.rows) {
    CHECK(row.usage[0] + row.usage[1] + row.usage[2] == static_cast<double>(pairs.size()));
  }
}

TEST_CASE("soft EM recovers the style partition") {
  const auto c = two_style_corpus(250, 0.7, 7);
  const auto pairs = aligned_pairs(c.train);
  OracleConfig cfg;
  cfg.k = 2;
  cfg.iterations = 100;
  cfg.alpha = 0.01;
  const OracleTrace trace = oracle_em_run(pairs, c.styles.src_vocab, c.styles.tgt_vocab, cfg);
  CHECK(partition_accuracy(trace.responsibilities, pairs, 2) >= 0.99);
  const auto parallel = oracle_e_step(trace.mixture, pairs, EmMode::Soft, Exec::Parallel);
  CHECK(parallel == oracle_e_step(trace.mixture, pairs, EmMode::Soft, Exec::Serial));
}

TEST_CASE("online schedule and trace file") {
  const auto c = two_style_corpus(100, 0.7, 8);
  const auto pairs = aligned_pairs(c.train);
  OracleConfig cfg;
  cfg.k = 2;
  cfg.schedule = em::Schedule::Online;
  cfg.iterations = 10;
  cfg.batch_size = 16;
  const OracleTrace a = oracle_em_run(pairs, c.styles.src_vocab, c.styles.tgt_vocab, cfg);
  const OracleTrace b = oracle_em_run(pairs, c.styles.src_vocab, c.styles.tgt_vocab, cfg);
  CHECK(a.mixture.tables == b.mixture.tables);
  CHECK(a.rows.back().marginal > a.rows.front().marginal);
  a.mixture.validate();

  const auto path = std::filesystem::temp_directory_path() / "mixmt_oracle_trace.csv";
  a.write_csv(path);
  std::ifstream in(path);
  std::string header, line;
  std::getline(in, header);
  CHECK(header == "iteration,log_likelihood,usage_1,usage_2");
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 11);
  std::filesystem::remove(path);
}

TEST_CASE("rich get richer") {
  const auto c = two_style_corpus(200, 0.5, 9);
  // A unimodal corpus: style-0 references only.
  std::vector<Example> single = c.train;
  for (auto& ex : single) ex.references.resize(1);
  const auto pairs = aligned_pairs(single);
  const std::size_t vs = c.styles.src_vocab, vt = c.styles.tgt_vocab;

  const RichGetRicher rich = rich_get_richer_demo(pairs, vs, vt, 3, 0.5, 5);
  REQUIRE(rich.usage.size() == 5);
  CHECK(rich.usage.back()[0] == pairs.size());
  for (std::size_t pass = 1; pass < rich.usage.size(); ++pass) CHECK(rich.usage[pass][0] >= rich.usage[pass - 1][0]);
  const auto exact = expert_exact_match(rich.mixture, single);
  CHECK(exact[0] > 0.95);
  CHECK(exact[1] < 0.05);
  CHECK(exact[2] < 0.05);
  rich.mixture.validate();

  // Without a head start the trajectory is set by the smallest-index
  // tie-break alone and is deterministic.
  const RichGetRicher flat = rich_get_richer_demo(pairs, vs, vt, 3, 0.0, 3);
  CHECK(flat.usage == rich_get_richer_demo(pairs, vs, vt, 3, 0.0, 3).usage);
  for (const auto& u : flat.usage) CHECK(u[0] + u[1] + u[2] == pairs.size());
  CHECK(flat.usage.front()[0] >= 1);
}

TEST_CASE("lookup-table neural model reproduces the oracle posterior") {
  const auto c = two_style_corpus(40, 0.5, 10);
  const auto pairs = aligned_pairs(c.train);
  CategoricalMixture mix = CategoricalMixture::random(2, c.styles.src_vocab, c.styles.tgt_vocab, 11, true);
  mix.prior = {0.35, 0.65};
  const MixtureModel model = lookup_table_model(mix, 8);

  // Token conditionals match the tables.
  const AlignedPair& p = pairs.front();
  const EncoderState enc = encode(model, with_eos(p.source));
  Sentence prefix{kBos};
  for (std::size_t t = 0; t < p.source.size(); ++t) {
    const auto dist = token_distribution(model, enc, prefix, 1);
    for (std::size_t v = kFirstContent; v < mix.tgt_vocab; ++v) {
      CHECK(std::abs(dist[v] - mix.at(1, static_cast<std::size_t>(p.source[t]), v)) < 1e-12);
    }
    prefix.push_back(p.target[t]);
  }
  CHECK(token_distribution(model, enc, prefix, 1)[kEos] > 1.0 - 1e-15);

  const auto training = make_training_pairs(c.train);
  const auto neural = em::e_step_soft(model, training, ad::PassMode{}, 1, 0, true, Exec::Serial);
  const auto exact = oracle_e_step(mix, pairs, EmMode::Soft);
  REQUIRE(neural.size() == exact.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    for (std::size_t z = 0; z < 2; ++z) worst = std::max(worst, std::abs(neural[i][z] - exact[i][z]));
  }
  CHECK(worst < 1e-8);

  CategoricalMixture zero = mix;
  zero.at(0, 4, 4) = 0.0;
  CHECK_THROWS_AS(lookup_table_model(zero, 8), PreconditionError);
  CHECK_THROWS_AS(lookup_table_model(mix, 30), PreconditionError);
}
