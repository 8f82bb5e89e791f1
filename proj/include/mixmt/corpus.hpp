// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

// Multi-reference parallel corpora and their JSON-lines files.
//
// File format, one object per line:
//   {"id": 17, "source": [5, 9, 4], "references": [{"style": 0, "tokens": [...]}, ...]}
// Token lists never contain EOS; it is appended when pairs are formed.

#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "mixmt/model.hpp"

namespace mixmt {

struct Reference {
  int style = 0;
  Sentence tokens;

  friend bool operator==(const Reference&, const Reference&) = default;
};

struct Example {
  std::size_t id = 0;
  Sentence source;
  std::vector<Reference> references;

  friend bool operator==(const Example&, const Example&) = default;
};

// One (source, target) training pair; both end with EOS.
struct TrainingPair {
  std::size_t id = 0;
  std::size_t source_id = 0;
  int style = -1;
  Sentence source;
  Sentence target;
};

// One pair per reference, in corpus order; pair ids are 0..n-1.
std::vector<TrainingPair> make_training_pairs(const std::vector<Example>& examples);

Sentence with_eos(Sentence s);
Sentence strip_eos(Sentence s);

std::vector<Example> read_examples(const std::filesystem::path& path);
void write_examples(const std::filesystem::path& path, const std::vector<Example>& examples);

}  // namespace mixmt
