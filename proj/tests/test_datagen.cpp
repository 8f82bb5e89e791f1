// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mixmt/datagen.hpp"
#include "mixmt/error.hpp"
#include "mixmt/metrics.hpp"
#include "mixmt/rng.hpp"

using namespace mixmt;
using namespace mixmt::data;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

CorpusSpec small_spec() {
  CorpusSpec s;
  s.num_sentences = 300;
  s.seed = 4;
  return s;
}

}  // namespace

TEST_CASE("style tables are injective, divergent and invertible") {
  const CorpusSpec spec = small_spec();
  const StyleTable t = make_style_table(spec);
  CHECK(t.num_styles() == 3);
  CHECK(t.src_vocab == 16);
  CHECK(t.tgt_vocab == 16 + 3 * 6);
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = a + 1; b < 3; ++b) CHECK(t.difference(a, b) >= 0.5);
  }
  CHECK(t.length_preserving());
  const StyledCorpus c = generate(spec);
  for (const auto& ex : c.train) {
    REQUIRE(ex.references.size() == 3);
    for (const auto& r : ex.references) {
      CHECK(r.tokens == t.apply(static_cast<std::size_t>(r.style), ex.source));
      CHECK(t.invert(static_cast<std::size_t>(r.style), r.tokens) == ex.source);
    }
  }
}

TEST_CASE("generation is deterministic, unique and split by source") {
  const CorpusSpec spec = small_spec();
  const StyledCorpus a = generate(spec);
  const StyledCorpus b = generate(spec);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.test.size() == 30);
  CHECK(a.train.size() == 270);
  std::set<Sentence> sources;
  std::set<std::size_t> ids;
  for (const auto* part : {&a.train, &a.test}) {
    for (const auto& ex : *part) {
      CHECK(sources.insert(ex.source).second);
      CHECK(ids.insert(ex.id).second);
      CHECK(ex.source.size() >= spec.min_len);
      CHECK(ex.source.size() <= spec.max_len);
    }
  }

  const auto dir1 = std::filesystem::temp_directory_path() / "mixmt_corpus_a";
  const auto dir2 = std::filesystem::temp_directory_path() / "mixmt_corpus_b";
  write_corpus(dir1, a);
  write_corpus(dir2, b);
  for (const char* f : {"train.jsonl", "test.jsonl", "vocab.src.txt", "vocab.tgt.txt", "styles.tsv"}) {
    CHECK(slurp(dir1 / f) == slurp(dir2 / f));
  }
  const StyledCorpus back = read_corpus(dir1);
  CHECK(back.train == a.train);
  CHECK(back.styles.maps == a.styles.maps);
  CHECK(back.styles.tgt_vocab == a.styles.tgt_vocab);
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("invalid specs are rejected") {
  CorpusSpec s = small_spec();
  s.num_styles = 1;
  CHECK_THROWS_AS(generate(s), ConfigError);
  s = small_spec();
  s.src_vocab = 7;
  CHECK_THROWS_AS(generate(s), ConfigError);
  s = small_spec();
  s.num_styles = 2;
  s.style_maps = {{4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15}, {4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15}};
  CHECK_THROWS_AS(generate(s), ConfigError);
  s.style_maps[1] = {4, 4, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
  CHECK_THROWS_AS(generate(s), ConfigError);
  s.style_maps[1] = {16, 17, 18, 19, 8, 9, 10, 11, 12, 13, 14, 15};
  CHECK(generate(s).styles.tgt_vocab == 20);
  s = small_spec();
  s.divergence = 0.2;
  CHECK_THROWS_AS(generate(s), ConfigError);
  s = small_spec();
  s.min_len = 1;
  s.max_len = 1;
  CHECK_THROWS_AS(generate(s), ConfigError);
}

TEST_CASE("markers prefix each style's references") {
  CorpusSpec s = small_spec();
  s.markers = true;
  const StyledCorpus c = generate(s);
  CHECK(!c.styles.length_preserving());
  const auto& ex = c.train.front();
  for (const auto& r : ex.references) {
    CHECK(r.tokens.size() == ex.source.size() + 1);
    CHECK(r.tokens.front() == c.styles.markers[static_cast<std::size_t>(r.style)]);
    CHECK(c.styles.invert(static_cast<std::size_t>(r.style), r.tokens) == ex.source);
  }
}

TEST_CASE("spec round-trips through key-values") {
  CorpusSpec s = small_spec();
  s.style_maps = {{16, 17, 18, 19, 8, 9, 10, 11, 12, 13, 14, 15}, {4, 5, 6, 7, 20, 21, 22, 23, 12, 13, 14, 15},
                  {4, 5, 6, 7, 8, 9, 10, 11, 24, 25, 26, 27}};
  KeyValues kv;
  s.write(kv);
  const CorpusSpec back = CorpusSpec::read(kv);
  CHECK(back.style_maps == s.style_maps);
  CHECK(back.num_sentences == s.num_sentences);
  CHECK(make_style_table(back).tgt_vocab == 28);
}

TEST_CASE("synthetic references are diverse but not disjoint") {
  CorpusSpec s = small_spec();
  s.num_sentences = 1000;
  const StyledCorpus c = generate(s);
  std::vector<metrics::EvalInstance> set;
  for (const auto& ex : c.test) {
    metrics::EvalInstance inst;
    for (const auto& r : ex.references) {
      inst.references.push_back(r.tokens);
      inst.hypotheses.push_back(r.tokens);
      inst.origins.push_back(r.style);
    }
    set.push_back(inst);
  }
  const auto loo = metrics::multi_ref_bleu(set);
  CHECK(loo.human < 100.0);
  CHECK(loo.human > 0.0);
  CHECK(metrics::pairwise_bleu(set) < 100.0);
  for (std::size_t i = 0; i < set.size(); ++i) CHECK(metrics::instance_coverage(set[i], 1, i) == 3);
}

TEST_CASE("style attribution") {
  CorpusSpec s = small_spec();
  s.num_styles = 2;
  s.style_maps = {{16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27}, {4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15}};
  const StyleTable t = make_style_table(s);
  const Sentence src{4, 5, 6, 7};
  const Attribution exact = style_attribution(t.apply(1, src), src, t);
  CHECK(exact.style == 1);
  CHECK(exact.accuracy == 1.0);
  const Attribution none = style_attribution({28, 29, 30}, src, StyleTable{t.src_vocab, 31, t.maps, t.markers});
  CHECK(none.style == 0);
  CHECK(none.accuracy == 0.0);
  const Sentence a = t.apply(0, src), b = t.apply(1, src);
  const Attribution half = style_attribution({a[0], a[1], b[2], b[3]}, src, t);
  CHECK(half.accuracies == std::vector<double>{0.5, 0.5});
  CHECK(half.style == 0);
  CHECK_THROWS_AS(style_attribution({}, src, t), PreconditionError);
}

TEST_CASE("expert-style consistency") {
  const CorpusSpec spec = small_spec();
  const StyledCorpus c = generate(spec);
  const StyleTable& t = c.styles;
  std::vector<Sentence> sources;
  std::vector<std::vector<Sentence>> ideal, collapsed, random;
  Rng rng(substream(8, "random-hyps"));
  for (const auto& ex : c.train) {
    sources.push_back(ex.source);
    // Latent z speaks style (z + 1) mod 3: a permutation.
    ideal.push_back({t.apply(1, ex.source), t.apply(2, ex.source), t.apply(0, ex.source)});
    const Sentence same = t.apply(0, ex.source);
    collapsed.push_back({same, same, same});
    std::vector<Sentence> r;
    for (int z = 0; z < 3; ++z) r.push_back(t.apply(rng.below(3), ex.source));
    random.push_back(r);
  }
  const Consistency perfect = expert_style_consistency(sources, ideal, t);
  CHECK(perfect.score == 1.0);
  CHECK(perfect.matrix[1][0] == sources.size());
  const Consistency d2 = expert_style_consistency(sources, collapsed, t);
  CHECK(d2.score == doctest::Approx(1.0 / 3.0));
  CHECK(d2.matrix[0][0] == d2.matrix[0][2]);
  const Consistency noise = expert_style_consistency(sources, random, t);
  CHECK(std::abs(noise.score - 1.0 / 3.0) < 0.06);
}
