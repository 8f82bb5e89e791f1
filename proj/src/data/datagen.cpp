// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixmt/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "mixmt/error.hpp"
#include "mixmt/rng.hpp"

namespace mixmt::data {

namespace {

constexpr double kMinStyleDifference = 0.3;

std::size_t content_size(std::size_t vocab) { return vocab - static_cast<std::size_t>(kFirstContent); }

}  // namespace

void CorpusSpec::validate() const {
  if (num_styles < 2) throw ConfigError("num_styles must be at least 2");
  if (src_vocab < 8) throw ConfigError("src_vocab must be at least 8 (4 reserved ids + content)");
  if (tgt_vocab != 0 && tgt_vocab < 8) throw ConfigError("tgt_vocab must be 0 (auto) or at least 8");
  if (num_sentences == 0) throw ConfigError("num_sentences must be positive");
  if (min_len < 1 || min_len > max_len) throw ConfigError("need 1 <= min_len <= max_len");
  if (!(divergence >= 0.0 && divergence <= 1.0)) throw ConfigError("divergence must lie in [0, 1]");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in [0, 1)");
  if (!style_maps.empty() && style_maps.size() != num_styles) {
    throw ConfigError("explicit style maps must be given for all " + std::to_string(num_styles) + " styles");
  }
}

void CorpusSpec::write(KeyValues& kv, const std::string& prefix) const {
  kv.set(prefix + "styles", std::to_string(num_styles));
  kv.set(prefix + "src_vocab", std::to_string(src_vocab));
  kv.set(prefix + "tgt_vocab", std::to_string(tgt_vocab));
  kv.set(prefix + "sentences", std::to_string(num_sentences));
  kv.set(prefix + "min_len", std::to_string(min_len));
  kv.set(prefix + "max_len", std::to_string(max_len));
  kv.set(prefix + "divergence", format_double(divergence));
  kv.set(prefix + "markers", markers ? "on" : "off");
  kv.set(prefix + "test_fraction", format_double(test_fraction));
  kv.set(prefix + "seed", std::to_string(seed));
  for (std::size_t s = 0; s < style_maps.size(); ++s) {
    std::string list;
    for (int t : style_maps[s]) list += (list.empty() ? "" : ",") + std::to_string(t);
    kv.set(prefix + "style." + std::to_string(s), list);
  }
}

CorpusSpec CorpusSpec::read(const KeyValues& kv, const std::string& prefix) {
  CorpusSpec c;
  c.num_styles = kv.get_uint(prefix + "styles", c.num_styles);
  c.src_vocab = kv.get_uint(prefix + "src_vocab", c.src_vocab);
  c.tgt_vocab = kv.get_uint(prefix + "tgt_vocab", c.tgt_vocab);
  c.num_sentences = kv.get_uint(prefix + "sentences", c.num_sentences);
  c.min_len = kv.get_uint(prefix + "min_len", c.min_len);
  c.max_len = kv.get_uint(prefix + "max_len", c.max_len);
  c.divergence = kv.get_double(prefix + "divergence", c.divergence);
  c.markers = kv.get_bool(prefix + "markers", c.markers);
  c.test_fraction = kv.get_double(prefix + "test_fraction", c.test_fraction);
  c.seed = kv.get_uint(prefix + "seed", c.seed);
  for (std::size_t s = 0; kv.has(prefix + "style." + std::to_string(s)); ++s) {
    std::vector<int> map;
    for (const std::string& item : kv.get_list(prefix + "style." + std::to_string(s))) {
      try {
        map.push_back(std::stoi(item));
      } catch (const std::exception&) {
        throw ConfigError(prefix + "style." + std::to_string(s) + ": '" + item + "' is not a token id");
      }
    }
    c.style_maps.push_back(std::move(map));
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Style tables

Sentence StyleTable::apply(std::size_t style, const Sentence& source) const {
  if (style >= maps.size()) throw InputError("style " + std::to_string(style) + " out of range");
  Sentence out;
  out.reserve(source.size() + 1);
  if (markers[style] >= 0) out.push_back(markers[style]);
  for (int u : source) {
    if (u < kFirstContent || static_cast<std::size_t>(u) >= src_vocab) {
      throw VocabError("source token " + std::to_string(u) + " is not a content token");
    }
    out.push_back(maps[style][static_cast<std::size_t>(u)]);
  }
  return out;
}

Sentence StyleTable::invert(std::size_t style, const Sentence& reference) const {
  if (style >= maps.size()) throw InputError("style " + std::to_string(style) + " out of range");
  std::vector<int> inverse(tgt_vocab, -1);
  for (std::size_t u = 0; u < src_vocab; ++u) {
    if (maps[style][u] >= 0) inverse[static_cast<std::size_t>(maps[style][u])] = static_cast<int>(u);
  }
  std::size_t start = 0;
  if (markers[style] >= 0) {
    if (reference.empty() || reference.front() != markers[style]) throw InputError("reference lacks the style marker");
    start = 1;
  }
  Sentence out;
  for (std::size_t i = start; i < reference.size(); ++i) {
    const int v = reference[i];
    if (v < 0 || static_cast<std::size_t>(v) >= tgt_vocab || inverse[static_cast<std::size_t>(v)] < 0) {
      throw InputError("token " + std::to_string(v) + " is not in the image of style " + std::to_string(style));
    }
    out.push_back(inverse[static_cast<std::size_t>(v)]);
  }
  return out;
}

double StyleTable::difference(std::size_t a, std::size_t b) const {
  std::size_t diff = 0;
  for (std::size_t u = kFirstContent; u < src_vocab; ++u) diff += maps[a][u] != maps[b][u];
  return static_cast<double>(diff) / static_cast<double>(content_size(src_vocab));
}

bool StyleTable::length_preserving() const {
  return std::all_of(markers.begin(), markers.end(), [](int m) { return m < 0; });
}

void validate_style_table(const StyleTable& t) {
  if (t.num_styles() < 2) throw ConfigError("need at least 2 styles");
  if (t.src_vocab < 8 || t.tgt_vocab < 8) throw ConfigError("vocabularies must have at least 8 entries");
  if (t.markers.size() != t.num_styles()) throw ConfigError("one marker slot per style required");
  for (std::size_t s = 0; s < t.num_styles(); ++s) {
    const auto& map = t.maps[s];
    if (map.size() != t.src_vocab) throw ConfigError("style " + std::to_string(s) + " map has the wrong size");
    std::set<int> image;
    for (std::size_t u = kFirstContent; u < t.src_vocab; ++u) {
      const int v = map[u];
      if (v < kFirstContent || static_cast<std::size_t>(v) >= t.tgt_vocab) {
        throw ConfigError("style " + std::to_string(s) + " maps source " + std::to_string(u) +
                          " to non-content target " + std::to_string(v));
      }
      if (!image.insert(v).second) throw ConfigError("style " + std::to_string(s) + " map is not injective");
    }
    const int m = t.markers[s];
    if (m >= 0 && (m < kFirstContent || static_cast<std::size_t>(m) >= t.tgt_vocab || image.count(m))) {
      throw ConfigError("style " + std::to_string(s) + " marker collides with its map");
    }
  }
  for (std::size_t a = 0; a < t.num_styles(); ++a) {
    for (std::size_t b = a + 1; b < t.num_styles(); ++b) {
      if (t.difference(a, b) < kMinStyleDifference) {
        throw ConfigError("styles " + std::to_string(a) + " and " + std::to_string(b) +
                          " differ on fewer than 30% of source tokens");
      }
    }
  }
}

StyleTable make_style_table(const CorpusSpec& spec) {
  spec.validate();
  const std::size_t n = content_size(spec.src_vocab);
  StyleTable t;
  t.src_vocab = spec.src_vocab;
  int next_id = kFirstContent + static_cast<int>(n);
  if (!spec.style_maps.empty()) {
    for (const auto& explicit_map : spec.style_maps) {
      if (explicit_map.size() != n) {
        throw ConfigError("explicit style maps need one target id per source content token (" +
                          std::to_string(n) + ")");
      }
      std::vector<int> map(spec.src_vocab, -1);
      std::copy(explicit_map.begin(), explicit_map.end(), map.begin() + kFirstContent);
      for (int v : explicit_map) next_id = std::max(next_id, v + 1);
      t.maps.push_back(std::move(map));
    }
  } else {
    const std::size_t changed = static_cast<std::size_t>(std::llround(spec.divergence * static_cast<double>(n)));
    for (std::size_t s = 0; s < spec.num_styles; ++s) {
      std::vector<int> map(spec.src_vocab, -1);
      for (std::size_t u = kFirstContent; u < spec.src_vocab; ++u) map[u] = static_cast<int>(u);
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{kFirstContent});
      Rng rng(substream(spec.seed, "style", s));
      for (std::size_t i = 0; i < changed; ++i) std::swap(order[i], order[i + rng.below(n - i)]);
      std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(changed));
      for (std::size_t i = 0; i < changed; ++i) map[order[i]] = next_id++;
      t.maps.push_back(std::move(map));
    }
  }
  t.markers.assign(t.maps.size(), -1);
  if (spec.markers) {
    for (auto& m : t.markers) m = next_id++;
  }
  const std::size_t needed = static_cast<std::size_t>(next_id);
  if (spec.tgt_vocab != 0 && spec.tgt_vocab < needed) {
    throw ConfigError("tgt_vocab " + std::to_string(spec.tgt_vocab) + " is too small; the style maps need " +
                      std::to_string(needed));
  }
  t.tgt_vocab = spec.tgt_vocab ? spec.tgt_vocab : needed;
  validate_style_table(t);
  return t;
}

StyledCorpus generate(const CorpusSpec& spec) {
  StyledCorpus corpus;
  corpus.styles = make_style_table(spec);
  const std::size_t n = content_size(spec.src_vocab);

  // Guard against asking for more distinct sentences than exist.
  double available = 0.0;
  for (std::size_t len = spec.min_len; len <= spec.max_len && available < 1e18; ++len) {
    available += std::pow(static_cast<double>(n), static_cast<double>(len));
  }
  if (available < 2.0 * static_cast<double>(spec.num_sentences)) {
    throw ConfigError("too few distinct source sentences for num_sentences=" + std::to_string(spec.num_sentences));
  }

  Rng rng(substream(spec.seed, "sources"));
  std::set<Sentence> seen;
  std::vector<Sentence> sources;
  while (sources.size() < spec.num_sentences) {
    Sentence s(spec.min_len + rng.below(spec.max_len - spec.min_len + 1));
    for (int& tok : s) tok = kFirstContent + static_cast<int>(rng.below(n));
    if (seen.insert(s).second) sources.push_back(std::move(s));
  }

  std::vector<std::size_t> order(sources.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split(substream(spec.seed, "split"));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[split.below(i)]);
  const auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(sources.size())));
  std::vector<bool> is_test(sources.size(), false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;

  for (std::size_t i = 0; i < sources.size(); ++i) {
    Example ex;
    ex.id = i;
    ex.source = sources[i];
    for (std::size_t s = 0; s < corpus.styles.num_styles(); ++s) {
      ex.references.push_back({static_cast<int>(s), corpus.styles.apply(s, sources[i])});
    }
    (is_test[i] ? corpus.test : corpus.train).push_back(std::move(ex));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::string token_name(std::size_t id, char prefix) {
  static const char* reserved[] = {"<pad>", "<bos>", "<eos>", "<unk>"};
  if (id < static_cast<std::size_t>(kFirstContent)) return reserved[id];
  return std::string(1, prefix) + std::to_string(id);
}

void write_vocab(const std::filesystem::path& path, std::size_t size, char prefix) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  for (std::size_t id = 0; id < size; ++id) out << id << '\t' << token_name(id, prefix) << '\n';
}

}  // namespace

void write_style_table(const std::filesystem::path& path, const StyleTable& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << "#src_vocab\t" << t.src_vocab << "\n#tgt_vocab\t" << t.tgt_vocab << "\n#style\tsource\ttarget\n";
  for (std::size_t s = 0; s < t.num_styles(); ++s) {
    if (t.markers[s] >= 0) out << s << "\tmarker\t" << t.markers[s] << '\n';
    for (std::size_t u = kFirstContent; u < t.src_vocab; ++u) out << s << '\t' << u << '\t' << t.maps[s][u] << '\n';
  }
}

StyleTable read_style_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  StyleTable t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    try {
      if (f.size() == 2 && f[0] == "#src_vocab") {
        t.src_vocab = std::stoul(f[1]);
      } else if (f.size() == 2 && f[0] == "#tgt_vocab") {
        t.tgt_vocab = std::stoul(f[1]);
      } else if (line[0] == '#') {
        continue;
      } else if (f.size() == 3) {
        const std::size_t s = std::stoul(f[0]);
        if (t.src_vocab == 0) throw InputError("styles file lacks #src_vocab");
        while (t.maps.size() <= s) {
          t.maps.emplace_back(t.src_vocab, -1);
          t.markers.push_back(-1);
        }
        if (f[1] == "marker") {
          t.markers[s] = std::stoi(f[2]);
        } else {
          const std::size_t u = std::stoul(f[1]);
          if (u >= t.src_vocab) throw InputError("source id out of range");
          t.maps[s][u] = std::stoi(f[2]);
        }
      } else {
        throw InputError("malformed line");
      }
    } catch (const std::logic_error&) {
      throw InputError(path.string() + ": malformed line: " + line);
    } catch (const InputError& e) {
      throw InputError(path.string() + ": " + e.what() + ": " + line);
    }
  }
  try {
    validate_style_table(t);
  } catch (const ConfigError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return t;
}

void write_corpus(const std::filesystem::path& dir, const StyledCorpus& corpus) {
  std::filesystem::create_directories(dir);
  write_examples(dir / "train.jsonl", corpus.train);
  write_examples(dir / "test.jsonl", corpus.test);
  write_vocab(dir / "vocab.src.txt", corpus.styles.src_vocab, 's');
  write_vocab(dir / "vocab.tgt.txt", corpus.styles.tgt_vocab, 't');
  write_style_table(dir / "styles.tsv", corpus.styles);
}

StyledCorpus read_corpus(const std::filesystem::path& dir) {
  StyledCorpus c;
  c.styles = read_style_table(dir / "styles.tsv");
  c.train = read_examples(dir / "train.jsonl");
  c.test = read_examples(dir / "test.jsonl");
  return c;
}

// ---------------------------------------------------------------------------
// Attribution

Attribution style_attribution(const Sentence& hypothesis, const Sentence& source, const StyleTable& table) {
  if (hypothesis.empty()) throw PreconditionError("style attribution needs a nonempty hypothesis");
  Attribution a;
  for (std::size_t s = 0; s < table.num_styles(); ++s) {
    const Sentence ref = table.apply(s, source);
    const std::size_t n = std::min(ref.size(), hypothesis.size());
    std::size_t hits = 0;
    for (std::size_t t = 0; t < n; ++t) hits += hypothesis[t] == ref[t];
    a.accuracies.push_back(static_cast<double>(hits) / static_cast<double>(hypothesis.size()));
  }
  a.style = static_cast<std::size_t>(std::max_element(a.accuracies.begin(), a.accuracies.end()) - a.accuracies.begin());
  a.accuracy = a.accuracies[a.style];
  return a;
}

Consistency expert_style_consistency(const std::vector<Sentence>& sources,
                                     const std::vector<std::vector<Sentence>>& hypotheses,
                                     const StyleTable& table) {
  if (sources.size() != hypotheses.size()) throw InputError("sources and hypothesis sets differ in length");
  if (sources.empty()) throw InputError("empty hypothesis set");
  const std::size_t s_count = table.num_styles();
  const std::size_t k = hypotheses.front().size();
  if (k == 0 || k > 20) throw InputError("expert_style_consistency supports 1..20 latents");
  Consistency c;
  c.matrix.assign(s_count, std::vector<std::size_t>(k, 0));
  std::size_t total = 0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (hypotheses[i].size() != k) throw InputError("every source needs one hypothesis per latent");
    for (std::size_t z = 0; z < k; ++z) {
      if (hypotheses[i][z].empty()) {
        ++total;  // an empty output attributes to no style
        continue;
      }
      ++c.matrix[style_attribution(hypotheses[i][z], sources[i], table).style][z];
      ++total;
    }
  }
  // Max-weight one-to-one matching: DP over styles with a bitmask of used latents.
  const std::size_t masks = std::size_t{1} << k;
  std::vector<long long> best(masks, -1);
  best[0] = 0;
  for (std::size_t s = 0; s < s_count; ++s) {
    std::vector<long long> next = best;  // style s left unmatched
    for (std::size_t m = 0; m < masks; ++m) {
      if (best[m] < 0) continue;
      for (std::size_t z = 0; z < k; ++z) {
        if (m & (std::size_t{1} << z)) continue;
        const std::size_t nm = m | (std::size_t{1} << z);
        next[nm] = std::max(next[nm], best[m] + static_cast<long long>(c.matrix[s][z]));
      }
    }
    best = std::move(next);
  }
  c.score = static_cast<double>(*std::max_element(best.begin(), best.end())) / static_cast<double>(total);
  return c;
}

}  // namespace mixmt::data
