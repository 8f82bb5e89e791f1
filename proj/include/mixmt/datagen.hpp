// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

// Synthetic multi-style parallel corpora. Every source sentence has one
// reference per style, obtained by applying that style's injective token map
// (optionally preceded by a per-style marker token).
//
// Default maps: target id 4 + (u - 4) is the shared translation of source
// content token u; each style replaces a seeded random subset of
// round(divergence * n) source tokens with target tokens of its own.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mixmt/config.hpp"
#include "mixmt/corpus.hpp"
#include "mixmt/parallel.hpp"

namespace mixmt::data {

struct CorpusSpec {
  std::size_t num_styles = 3;
  std::size_t src_vocab = 16;  // including the reserved ids
  std::size_t tgt_vocab = 0;   // 0: smallest size that fits the style maps
  std::size_t num_sentences = 2000;
  std::size_t min_len = 4;
  std::size_t max_len = 8;
  double divergence = 0.5;  // fraction of source tokens each style re-maps
  bool markers = false;     // prepend a per-style marker token
  double test_fraction = 0.1;
  std::uint64_t seed = 1;
  // Explicit maps (target id per source content token), overriding the
  // generated ones; empty for generated maps.
  std::vector<std::vector<int>> style_maps;

  void validate() const;
  void write(KeyValues& kv, const std::string& prefix = "data.") const;
  static CorpusSpec read(const KeyValues& kv, const std::string& prefix = "data.");
};

struct StyleTable {
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::vector<std::vector<int>> maps;  // [style][src id] -> tgt id, -1 for reserved ids
  std::vector<int> markers;            // per style; -1 when disabled

  std::size_t num_styles() const { return maps.size(); }
  Sentence apply(std::size_t style, const Sentence& source) const;
  // Recovers the source from a reference of the given style.
  Sentence invert(std::size_t style, const Sentence& reference) const;
  // Fraction of content tokens on which two styles disagree.
  double difference(std::size_t a, std::size_t b) const;
  bool length_preserving() const;
};

// Validates S >= 2, injectivity, id ranges and >= 30% pairwise difference.
StyleTable make_style_table(const CorpusSpec& spec);
void validate_style_table(const StyleTable& table);

struct StyledCorpus {
  StyleTable styles;
  std::vector<Example> train;
  std::vector<Example> test;
};

StyledCorpus generate(const CorpusSpec& spec);

// Writes train.jsonl, test.jsonl, vocab.src.txt, vocab.tgt.txt, styles.tsv.
void write_corpus(const std::filesystem::path& dir, const StyledCorpus& corpus);
StyledCorpus read_corpus(const std::filesystem::path& dir);
void write_style_table(const std::filesystem::path& path, const StyleTable& table);
StyleTable read_style_table(const std::filesystem::path& path);

struct Attribution {
  std::size_t style = 0;
  double accuracy = 0.0;
  std::vector<double> accuracies;  // per style
};

// Position-aligned agreement of the hypothesis with each style's output
// (over the shorter length, divided by the hypothesis length); ties go to
// the smallest style id.
Attribution style_attribution(const Sentence& hypothesis, const Sentence& source, const StyleTable& table);

struct Consistency {
  std::vector<std::vector<std::size_t>> matrix;  // [style][origin]
  double score = 0.0;  // best one-to-one style/origin matching weight / total
};

// `hypotheses[i][z]` is latent z's output for `sources[i]`.
Consistency expert_style_consistency(const std::vector<Sentence>& sources,
                                     const std::vector<std::vector<Sentence>>& hypotheses,
                                     const StyleTable& table);

}  // namespace mixmt::data
