// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <limits>
#include <map>

#include "mixmt/error.hpp"
#include "mixmt/rng.hpp"

namespace mixmt::metrics {

NGramStats& NGramStats::operator+=(const NGramStats& o) {
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    matches[n] += o.matches[n];
    totals[n] += o.totals[n];
  }
  hyp_len += o.hyp_len;
  ref_len += o.ref_len;
  return *this;
}

namespace {

// n-grams of order n packed as 16-bit token fields, sorted.
std::vector<std::uint64_t> ngram_codes(const Sentence& s, std::size_t n) {
  std::vector<std::uint64_t> codes;
  if (s.size() < n) return codes;
  codes.reserve(s.size() - n + 1);
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    std::uint64_t code = 0;
    for (std::size_t j = 0; j < n; ++j) code = (code << 16) | static_cast<std::uint64_t>(s[i + j] + 1);
    codes.push_back(code);
  }
  std::sort(codes.begin(), codes.end());
  return codes;
}

void check_tokens(const Sentence& s) {
  for (int t : s) {
    if (t < 0 || t >= 0xFFFF) throw VocabError("token id " + std::to_string(t) + " outside metric range");
  }
}

std::size_t closest_ref_length(const std::vector<Sentence>& refs, std::size_t c) {
  std::size_t best = refs.front().size();
  for (const Sentence& r : refs) {
    const auto d = [&](std::size_t len) { return len > c ? len - c : c - len; };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
  }
  return best;
}

double geometric_bleu(const std::array<double, kMaxOrder>& precisions, std::size_t c, std::size_t r) {
  double log_sum = 0.0;
  for (double p : precisions) {
    if (!(p > 0.0)) return 0.0;
    log_sum += std::log(p);
  }
  const double bp = std::min(0.0, 1.0 - static_cast<double>(r) / static_cast<double>(c));
  return 100.0 * std::exp(bp + log_sum / static_cast<double>(kMaxOrder));
}

}  // namespace

NGramStats ngram_stats(const std::vector<Sentence>& refs, const Sentence& hyp) {
  if (refs.empty()) throw InputError("BLEU needs at least one reference per hypothesis");
  check_tokens(hyp);
  for (const Sentence& r : refs) check_tokens(r);
  NGramStats s;
  s.hyp_len = hyp.size();
  s.ref_len = closest_ref_length(refs, hyp.size());
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    const auto h = ngram_codes(hyp, n);
    s.totals[n - 1] = h.size();
    if (h.empty()) continue;
    // Maximum count of each hypothesis n-gram over the references.
    std::vector<std::vector<std::uint64_t>> rc;
    for (const Sentence& r : refs) rc.push_back(ngram_codes(r, n));
    std::size_t matched = 0;
    for (std::size_t i = 0; i < h.size();) {
      std::size_t j = i;
      while (j < h.size() && h[j] == h[i]) ++j;
      std::size_t ref_max = 0;
      for (const auto& codes : rc) {
        const auto range = std::equal_range(codes.begin(), codes.end(), h[i]);
        ref_max = std::max(ref_max, static_cast<std::size_t>(range.second - range.first));
      }
      matched += std::min(j - i, ref_max);
      i = j;
    }
    s.matches[n - 1] = matched;
  }
  return s;
}

double bleu_from_stats(const NGramStats& s) {
  if (s.hyp_len == 0) return 0.0;
  std::array<double, kMaxOrder> p{};
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    p[n] = s.totals[n] ? static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]) : 0.0;
  }
  return geometric_bleu(p, s.hyp_len, s.ref_len);
}

double corpus_bleu(const std::vector<BleuPair>& pairs, Exec exec) {
  if (pairs.empty()) throw InputError("corpus BLEU of an empty corpus is undefined");
  std::vector<NGramStats> stats(pairs.size());
  for_each_index(pairs.size(), exec, [&](std::size_t i) { stats[i] = ngram_stats(pairs[i].refs, pairs[i].hyp); });
  NGramStats total;
  for (const auto& s : stats) total += s;
  return bleu_from_stats(total);
}

double smoothed_sentence_bleu(const std::vector<Sentence>& refs, const Sentence& hyp) {
  const NGramStats s = ngram_stats(refs, hyp);
  if (s.hyp_len == 0) return 0.0;
  std::array<double, kMaxOrder> p{};
  p[0] = static_cast<double>(s.matches[0]) / static_cast<double>(s.totals[0]);
  for (std::size_t n = 1; n < kMaxOrder; ++n) {
    p[n] = static_cast<double>(s.matches[n] + 1) / static_cast<double>(s.totals[n] + 1);
  }
  return geometric_bleu(p, s.hyp_len, s.ref_len);
}

namespace {

void require_hypotheses(const std::vector<EvalInstance>& set, std::size_t min_k) {
  if (set.empty()) throw InputError("empty evaluation set");
  for (const auto& inst : set) {
    if (inst.hypotheses.size() < min_k) {
      throw InputError("instance " + std::to_string(inst.source_id) + " has fewer than " +
                       std::to_string(min_k) + " hypotheses");
    }
  }
}

}  // namespace

double pairwise_bleu(const std::vector<EvalInstance>& set, Exec exec) {
  require_hypotheses(set, 2);
  std::vector<BleuPair> pairs;
  for (const auto& inst : set) {
    const auto& h = inst.hypotheses;
    for (std::size_t j = 0; j < h.size(); ++j) {
      for (std::size_t k = 0; k < h.size(); ++k) {
        if (j != k) pairs.push_back({{h[j]}, h[k]});
      }
    }
  }
  return corpus_bleu(pairs, exec);
}

double self_bleu(const std::vector<EvalInstance>& set, Exec exec) {
  require_hypotheses(set, 2);
  std::vector<BleuPair> pairs;
  for (const auto& inst : set) {
    const auto& h = inst.hypotheses;
    for (std::size_t k = 0; k < h.size(); ++k) {
      BleuPair p{{}, h[k]};
      for (std::size_t j = 0; j < h.size(); ++j) {
        if (j != k) p.refs.push_back(h[j]);
      }
      pairs.push_back(std::move(p));
    }
  }
  return corpus_bleu(pairs, exec);
}

LeaveOneOut multi_ref_bleu(const std::vector<EvalInstance>& set, Exec exec) {
  require_hypotheses(set, 1);
  const std::size_t m = set.front().references.size();
  if (m < 2) throw InputError("leave-one-out BLEU needs at least two references");
  for (const auto& inst : set) {
    if (inst.references.size() != m) throw InputError("instances differ in reference count");
  }
  LeaveOneOut out;
  for (std::size_t held = 0; held < m; ++held) {
    std::vector<BleuPair> human, system;
    for (const auto& inst : set) {
      std::vector<Sentence> rest;
      for (std::size_t i = 0; i < m; ++i) {
        if (i != held) rest.push_back(inst.references[i]);
      }
      human.push_back({rest, inst.references[held]});
      for (const Sentence& h : inst.hypotheses) system.push_back({rest, h});
    }
    out.human += corpus_bleu(human, exec) / static_cast<double>(m);
    out.system += corpus_bleu(system, exec) / static_cast<double>(m);
  }
  return out;
}

std::size_t instance_coverage(const EvalInstance& inst, std::uint64_t seed, std::size_t index) {
  if (inst.references.empty() || inst.hypotheses.empty()) {
    throw InputError("coverage needs at least one reference and one hypothesis");
  }
  const std::uint64_t base = substream(seed, "coverage", index);
  std::vector<bool> matched(inst.references.size(), false);
  for (std::size_t k = 0; k < inst.hypotheses.size(); ++k) {
    std::vector<std::size_t> best;
    double best_score = -1.0;
    for (std::size_t m = 0; m < inst.references.size(); ++m) {
      const double s = smoothed_sentence_bleu({inst.references[m]}, inst.hypotheses[k]);
      if (s > best_score) {
        best_score = s;
        best.assign(1, m);
      } else if (s == best_score) {
        best.push_back(m);
      }
    }
    std::size_t pick = best.front();
    if (best.size() > 1) {
      // Keyed by content so duplicate hypotheses always pick the same reference.
      std::uint64_t h = 0x9E3779B97F4A7C15ULL;
      for (int t : inst.hypotheses[k]) h = mix64(h ^ static_cast<std::uint64_t>(t));
      pick = best[Rng(substream(base, "hyp", h)).below(best.size())];
    }
    matched[pick] = true;
  }
  return static_cast<std::size_t>(std::count(matched.begin(), matched.end(), true));
}

double ref_coverage(const std::vector<EvalInstance>& set, std::uint64_t seed) {
  if (set.empty()) throw InputError("empty evaluation set");
  double total = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) total += static_cast<double>(instance_coverage(set[i], seed, i));
  return total / static_cast<double>(set.size());
}

PerLatent per_latent_bleu(const std::vector<EvalInstance>& set, std::size_t k, RefSelection refs) {
  if (set.empty()) throw InputError("empty evaluation set");
  PerLatent out;
  for (std::size_t z = 0; z < k; ++z) {
    std::vector<BleuPair> pairs;
    std::size_t exact = 0;
    for (const auto& inst : set) {
      const auto it = std::find(inst.origins.begin(), inst.origins.end(), static_cast<int>(z));
      if (it == inst.origins.end()) {
        throw InputError("instance " + std::to_string(inst.source_id) + " has no hypothesis for latent " +
                         std::to_string(z));
      }
      const Sentence& h = inst.hypotheses[static_cast<std::size_t>(it - inst.origins.begin())];
      std::vector<Sentence> r = refs == RefSelection::First ? std::vector<Sentence>{inst.references.front()}
                                                            : inst.references;
      if (std::find(r.begin(), r.end(), h) != r.end()) ++exact;
      pairs.push_back({std::move(r), h});
    }
    out.bleu.push_back(corpus_bleu(pairs));
    out.exact_match.push_back(static_cast<double>(exact) / static_cast<double>(set.size()));
  }
  return out;
}

Flags degeneracy_classify(double pairwise, double bleu, const std::vector<double>& per_latent,
                          double healthy, const Thresholds& t) {
  Flags f;
  if (!per_latent.empty()) {
    const auto [lo, hi] = std::minmax_element(per_latent.begin(), per_latent.end());
    f.d1 = *lo < t.d1_latent && *hi > healthy;
  }
  f.d2 = pairwise > t.d2_pairwise && bleu > healthy;
  return f;
}

std::vector<EvalInstance> make_instances(const std::vector<decode::HypothesisSet>& hyps,
                                         const std::vector<Example>& examples) {
  std::map<std::size_t, const Example*> by_id;
  for (const auto& ex : examples) by_id[ex.id] = &ex;
  std::vector<EvalInstance> out;
  for (const auto& set : hyps) {
    const auto it = by_id.find(set.source_id);
    if (it == by_id.end()) throw InputError("hypotheses for unknown source id " + std::to_string(set.source_id));
    EvalInstance inst;
    inst.source_id = set.source_id;
    for (const auto& r : it->second->references) inst.references.push_back(r.tokens);
    for (const auto& h : set.hypotheses) {
      inst.hypotheses.push_back(h.tokens);
      inst.origins.push_back(h.origin);
    }
    out.push_back(std::move(inst));
  }
  return out;
}

EvalReport evaluate(const std::vector<EvalInstance>& set, const EvalOptions& options) {
  require_hypotheses(set, 1);
  EvalReport r;
  r.instances = set.size();
  r.num_hypotheses = set.front().hypotheses.size();
  for (const auto& inst : set) {
    if (inst.hypotheses.size() != r.num_hypotheses) throw InputError("instances differ in hypothesis count");
  }
  if (r.num_hypotheses >= 2) {
    r.pairwise_bleu = pairwise_bleu(set, options.exec);
    r.self_bleu = self_bleu(set, options.exec);
  } else {
    r.pairwise_bleu = r.self_bleu = std::numeric_limits<double>::quiet_NaN();
  }
  const LeaveOneOut loo = multi_ref_bleu(set, options.exec);
  r.bleu = loo.system;
  r.human_bleu = loo.human;
  r.coverage = ref_coverage(set, options.seed);
  r.per_latent = per_latent_bleu(set, r.num_hypotheses, options.per_latent_refs);
  r.thresholds = options.thresholds;
  r.healthy = options.thresholds.healthy >= 0.0 ? options.thresholds.healthy : 0.5 * loo.human;
  r.flags = degeneracy_classify(r.num_hypotheses >= 2 ? r.pairwise_bleu : 0.0, r.bleu, r.per_latent.bleu,
                                r.healthy, r.thresholds);
  return r;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["instances"] = instances;
  j["num_hypotheses"] = num_hypotheses;
  j["pairwise_bleu"] = pairwise_bleu;
  j["bleu"] = bleu;
  j["human_bleu"] = human_bleu;
  j["self_bleu"] = self_bleu;
  j["refs_covered"] = coverage;
  j["per_latent_bleu"] = per_latent.bleu;
  j["per_latent_exact_match"] = per_latent.exact_match;
  j["d1_flag"] = flags.d1;
  j["d2_flag"] = flags.d2;
  j["thresholds"] = {{"d1_latent", thresholds.d1_latent},
                     {"healthy", healthy},
                     {"d2_pairwise", thresholds.d2_pairwise}};
  return j.dump(2);
}

std::string EvalReport::csv_header(std::size_t k) {
  std::string h = "run_id,K,variant,pairwise_bleu,bleu,human_bleu,self_bleu,coverage";
  for (std::size_t z = 0; z < k; ++z) h += ",latent_" + std::to_string(z) + "_bleu";
  return h + ",d1,d2";
}

std::string EvalReport::csv_row(const std::string& run_id, const std::string& variant) const {
  const auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  std::string row = run_id + "," + std::to_string(num_hypotheses) + "," + variant + "," + num(pairwise_bleu) +
                    "," + num(bleu) + "," + num(human_bleu) + "," + num(self_bleu) + "," + num(coverage);
  for (double b : per_latent.bleu) row += "," + num(b);
  return row + "," + (flags.d1 ? "1" : "0") + "," + (flags.d2 ? "1" : "0");
}

}  // namespace mixmt::metrics
