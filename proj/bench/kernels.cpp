// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

// Serial vs OpenMP timings of the parallel kernels. Argument 0 selects the
// serial reference, 1 the parallel path; outputs are identical either way.

#include <benchmark/benchmark.h>

#include "mixmt/datagen.hpp"
#include "mixmt/decoder.hpp"
#include "mixmt/em.hpp"
#include "mixmt/metrics.hpp"
#include "mixmt/oracle.hpp"

namespace {

using namespace mixmt;

Exec exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? Exec::Serial : Exec::Parallel;
}

const data::StyledCorpus& corpus() {
  static const data::StyledCorpus c = [] {
    data::CorpusSpec spec;
    spec.num_sentences = 400;
    spec.divergence = 0.3;
    return data::generate(spec);
  }();
  return c;
}

const MixtureModel& model() {
  static const MixtureModel m = [] {
    ModelConfig mc;
    mc.vocab_src = corpus().styles.src_vocab;
    mc.vocab_tgt = corpus().styles.tgt_vocab;
    mc.num_experts = 3;
    return MixtureModel(mc, 1);
  }();
  return m;
}

std::vector<TrainingPair> batch(std::size_t n) {
  auto pairs = make_training_pairs(corpus().train);
  pairs.resize(std::min(n, pairs.size()));
  return pairs;
}

void BM_e_step_soft(benchmark::State& state) {
  const auto b = batch(64);
  for (auto _ : state) {
    auto r = em::e_step_soft(model(), b, ad::PassMode::eval(), 1, 0, true, exec_of(state));
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_e_step_soft)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_batch_gradient(benchmark::State& state) {
  const auto b = batch(32);
  for (auto _ : state) {
    auto g = em::batch_gradient(model(), b, em::LossVariant::hMup, ad::PassMode::eval(),
                                ad::PassMode::train(0.1), 1, 0, nullptr, exec_of(state));
    benchmark::DoNotOptimize(g.loss);
  }
}
BENCHMARK(BM_batch_gradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_decode_corpus(benchmark::State& state) {
  decode::DecodeConfig dc;
  dc.strategy = decode::Strategy::Beam;
  dc.num_hypotheses = 3;
  dc.exec = exec_of(state);
  for (auto _ : state) {
    auto h = decode::decode_corpus(model(), corpus().test, dc);
    benchmark::DoNotOptimize(h);
  }
}
BENCHMARK(BM_decode_corpus)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_corpus_bleu(benchmark::State& state) {
  std::vector<metrics::BleuPair> pairs;
  for (const auto& ex : corpus().train)
    for (std::size_t j = 0; j < ex.references.size(); ++j) {
      metrics::BleuPair p;
      for (std::size_t k = 0; k < ex.references.size(); ++k)
        if (k != j) p.refs.push_back(ex.references[k].tokens);
      p.hyp = ex.references[j].tokens;
      pairs.push_back(std::move(p));
    }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::corpus_bleu(pairs, exec_of(state)));
}
BENCHMARK(BM_corpus_bleu)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_oracle_e_step(benchmark::State& state) {
  const auto pairs = oracle::aligned_pairs(corpus().train);
  const auto mix = oracle::CategoricalMixture::random(3, corpus().styles.src_vocab,
                                                      corpus().styles.tgt_vocab, 1);
  for (auto _ : state) {
    auto r = oracle::oracle_e_step(mix, pairs, oracle::EmMode::Soft, exec_of(state));
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_oracle_e_step)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
