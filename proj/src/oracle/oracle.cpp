// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixmt/oracle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include "mixmt/error.hpp"
#include "mixmt/rng.hpp"

namespace mixmt::oracle {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const std::size_t kContent = static_cast<std::size_t>(kFirstContent);

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<double> log_scores(const CategoricalMixture& mix, const AlignedPair& p) {
  std::vector<double> s(mix.k);
  for (std::size_t z = 0; z < mix.k; ++z) s[z] = mix.joint(p, z);
  return s;
}

void check_pair(const CategoricalMixture& mix, const AlignedPair& p) {
  if (p.source.size() != p.target.size()) {
    throw InputError("pair " + std::to_string(p.id) + " is not length-matched");
  }
  for (std::size_t t = 0; t < p.source.size(); ++t) {
    const int u = p.source[t], v = p.target[t];
    if (u < kFirstContent || static_cast<std::size_t>(u) >= mix.src_vocab) {
      throw VocabError("source id " + std::to_string(u) + " outside the content range");
    }
    if (v < kFirstContent || static_cast<std::size_t>(v) >= mix.tgt_vocab) {
      throw VocabError("target id " + std::to_string(v) + " outside the content range");
    }
  }
}

void normalize_row(double* row, std::size_t vt) {
  double s = 0.0;
  for (std::size_t v = kContent; v < vt; ++v) s += row[v];
  for (std::size_t v = kContent; v < vt; ++v) row[v] /= s;
}

CategoricalMixture empty_like(std::size_t k, std::size_t vs, std::size_t vt, bool free_prior) {
  if (k == 0) throw ConfigError("oracle needs at least one expert");
  if (vs <= kContent || vt <= kContent) throw ConfigError("oracle vocabularies need content ids");
  CategoricalMixture m;
  m.k = k;
  m.src_vocab = vs;
  m.tgt_vocab = vt;
  m.free_prior = free_prior;
  m.tables.assign(k * vs * vt, 0.0);
  m.prior.assign(k, 1.0 / static_cast<double>(k));
  return m;
}

}  // namespace

std::vector<AlignedPair> aligned_pairs(const std::vector<Example>& examples) {
  std::vector<AlignedPair> out;
  for (const auto& ex : examples) {
    for (const auto& r : ex.references) {
      if (r.tokens.size() != ex.source.size()) {
        throw InputError("example " + std::to_string(ex.id) +
                         " has a reference whose length differs from the source");
      }
      out.push_back({ex.id, r.style, ex.source, r.tokens});
    }
  }
  return out;
}

CategoricalMixture CategoricalMixture::uniform(std::size_t k, std::size_t vs, std::size_t vt, bool free_prior) {
  CategoricalMixture m = empty_like(k, vs, vt, free_prior);
  const double p = 1.0 / static_cast<double>(vt - kContent);
  for (std::size_t z = 0; z < k; ++z) {
    for (std::size_t u = 0; u < vs; ++u) {
      for (std::size_t v = kContent; v < vt; ++v) m.at(z, u, v) = p;
    }
  }
  return m;
}

CategoricalMixture CategoricalMixture::random(std::size_t k, std::size_t vs, std::size_t vt, std::uint64_t seed,
                                              bool free_prior) {
  CategoricalMixture m = empty_like(k, vs, vt, free_prior);
  Rng rng(substream(seed, "oracle-init"));
  for (std::size_t z = 0; z < k; ++z) {
    for (std::size_t u = 0; u < vs; ++u) {
      double* row = &m.at(z, u, 0);
      for (std::size_t v = kContent; v < vt; ++v) row[v] = rng.exponential();
      normalize_row(row, vt);
    }
  }
  return m;
}

double CategoricalMixture::log_likelihood(const AlignedPair& p, std::size_t z) const {
  double s = 0.0;
  for (std::size_t t = 0; t < p.source.size(); ++t) {
    s += std::log(at(z, static_cast<std::size_t>(p.source[t]), static_cast<std::size_t>(p.target[t])));
  }
  return s;
}

double CategoricalMixture::joint(const AlignedPair& p, std::size_t z) const {
  return std::log(prior[z]) + log_likelihood(p, z);
}

void CategoricalMixture::validate() const {
  if (tables.size() != k * src_vocab * tgt_vocab || prior.size() != k) {
    throw ShapeError("categorical mixture has inconsistent sizes");
  }
  auto near_one = [](double s) { return std::abs(s - 1.0) <= 1e-12; };
  if (!near_one(std::accumulate(prior.begin(), prior.end(), 0.0))) throw NumericError("prior does not sum to 1");
  for (std::size_t z = 0; z < k; ++z) {
    for (std::size_t u = kContent; u < src_vocab; ++u) {
      double s = 0.0;
      for (std::size_t v = kContent; v < tgt_vocab; ++v) {
        const double x = at(z, u, v);
        if (!(x >= 0.0)) throw NumericError("negative or NaN table entry");
        s += x;
      }
      if (!near_one(s)) throw NumericError("table row does not sum to 1");
    }
  }
}

std::vector<std::vector<double>> oracle_e_step(const CategoricalMixture& mix, const std::vector<AlignedPair>& pairs,
                                               EmMode mode, Exec exec) {
  std::vector<std::vector<double>> r(pairs.size());
  for_each_index(pairs.size(), exec, [&](std::size_t i) {
    check_pair(mix, pairs[i]);
    const std::vector<double> s = log_scores(mix, pairs[i]);
    r[i] = mode == EmMode::Soft ? em::soft_responsibilities(s) : em::hard_responsibilities(s);
  });
  return r;
}

CategoricalMixture oracle_m_step(const std::vector<AlignedPair>& pairs,
                                 const std::vector<std::vector<double>>& responsibilities, double alpha,
                                 const CategoricalMixture& previous) {
  if (responsibilities.size() != pairs.size()) throw ShapeError("one responsibility row per pair required");
  if (!(alpha >= 0.0)) throw ConfigError("smoothing must be non-negative");
  const std::size_t k = previous.k, vs = previous.src_vocab, vt = previous.tgt_vocab;
  CategoricalMixture next = empty_like(k, vs, vt, previous.free_prior);
  std::vector<double> mass(k, 0.0);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const auto& r = responsibilities[i];
    if (r.size() != k) throw ShapeError("responsibility row has the wrong width");
    check_pair(previous, p);
    for (std::size_t z = 0; z < k; ++z) {
      if (r[z] == 0.0) continue;
      mass[z] += r[z];
      for (std::size_t t = 0; t < p.source.size(); ++t) {
        next.at(z, static_cast<std::size_t>(p.source[t]), static_cast<std::size_t>(p.target[t])) += r[z];
      }
    }
  }
  for (std::size_t z = 0; z < k; ++z) {
    for (std::size_t u = 0; u < vs; ++u) {
      double* row = &next.at(z, u, 0);
      double total = 0.0;
      for (std::size_t v = kContent; v < vt; ++v) total += row[v] + alpha;
      if (total <= 0.0) {
        for (std::size_t v = kContent; v < vt; ++v) row[v] = previous.at(z, u, v);
        continue;
      }
      for (std::size_t v = kContent; v < vt; ++v) row[v] = (row[v] + alpha) / total;
    }
  }
  if (previous.free_prior) {
    const double n = std::accumulate(mass.begin(), mass.end(), 0.0);
    for (std::size_t z = 0; z < k; ++z) next.prior[z] = n > 0.0 ? mass[z] / n : previous.prior[z];
  } else {
    next.prior = previous.prior;
  }
  return next;
}

double marginal_log_likelihood(const CategoricalMixture& mix, const std::vector<AlignedPair>& pairs) {
  double s = 0.0;
  for (const auto& p : pairs) s += log_sum_exp(log_scores(mix, p));
  return s;
}

double hard_log_likelihood(const CategoricalMixture& mix, const std::vector<AlignedPair>& pairs) {
  double s = 0.0;
  for (const auto& p : pairs) {
    const auto v = log_scores(mix, p);
    s += *std::max_element(v.begin(), v.end());
  }
  return s;
}

void OracleTrace::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "iteration,log_likelihood";
  const std::size_t k = mixture.k;
  for (std::size_t z = 0; z < k; ++z) out << ",usage_" << z + 1;
  out << '\n';
  char buf[64];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%.12g", row.log_likelihood);
    out << row.iteration << ',' << buf;
    for (double u : row.usage) {
      std::snprintf(buf, sizeof buf, "%.12g", u);
      out << ',' << buf;
    }
    out << '\n';
  }
}

OracleTrace oracle_em_run(const std::vector<AlignedPair>& pairs, std::size_t src_vocab, std::size_t tgt_vocab,
                          const OracleConfig& config, const std::optional<CategoricalMixture>& init) {
  if (pairs.empty()) throw InputError("oracle EM needs at least one pair");
  if (config.schedule == em::Schedule::Online && config.batch_size == 0) {
    throw ConfigError("online oracle EM needs a positive batch size");
  }
  OracleTrace trace;
  CategoricalMixture mix =
      init ? *init : CategoricalMixture::random(config.k, src_vocab, tgt_vocab, config.seed, config.free_prior);
  if (mix.k != config.k || mix.src_vocab != src_vocab || mix.tgt_vocab != tgt_vocab) {
    throw ConfigError("initial mixture does not match the oracle configuration");
  }

  auto record = [&](std::size_t it, const std::vector<std::vector<double>>& r) {
    TraceRow row;
    row.iteration = it;
    row.marginal = marginal_log_likelihood(mix, pairs);
    row.hard = hard_log_likelihood(mix, pairs);
    row.log_likelihood = config.mode == EmMode::Soft ? row.marginal : row.hard;
    row.usage.assign(mix.k, 0.0);
    for (const auto& ri : r) {
      for (std::size_t z = 0; z < mix.k; ++z) row.usage[z] += ri[z];
    }
    trace.rows.push_back(std::move(row));
  };

  std::vector<std::vector<double>> r = oracle_e_step(mix, pairs, config.mode, config.exec);
  if (config.schedule == em::Schedule::Offline) {
    for (std::size_t it = 0; it < config.iterations; ++it) {
      record(it, r);
      mix = oracle_m_step(pairs, r, config.alpha, mix);
      r = oracle_e_step(mix, pairs, config.mode, config.exec);
    }
  } else {
    // Incremental EM: each pair's stored responsibilities are replaced batch
    // by batch and the tables re-estimated from the running table.
    mix = oracle_m_step(pairs, r, config.alpha, mix);
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t it = 0; it < config.iterations; ++it) {
      record(it, oracle_e_step(mix, pairs, config.mode, config.exec));
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(substream(config.seed, "oracle-shuffle", it));
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
        const std::size_t e = std::min(order.size(), b + config.batch_size);
        for (std::size_t j = b; j < e; ++j) {
          const auto s = log_scores(mix, pairs[order[j]]);
          r[order[j]] = config.mode == EmMode::Soft ? em::soft_responsibilities(s) : em::hard_responsibilities(s);
        }
        mix = oracle_m_step(pairs, r, config.alpha, mix);
      }
    }
    r = oracle_e_step(mix, pairs, config.mode, config.exec);
  }
  record(config.iterations, r);
  trace.mixture = std::move(mix);
  trace.responsibilities = std::move(r);
  return trace;
}

double partition_accuracy(const std::vector<std::vector<double>>& responsibilities,
                          const std::vector<AlignedPair>& pairs, std::size_t num_styles) {
  if (responsibilities.size() != pairs.size() || pairs.empty()) {
    throw InputError("partition accuracy needs one responsibility row per pair");
  }
  const std::size_t k = responsibilities.front().size();
  std::vector<std::vector<std::size_t>> counts(k, std::vector<std::size_t>(num_styles, 0));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const int s = pairs[i].style;
    if (s < 0 || static_cast<std::size_t>(s) >= num_styles) throw InputError("pair without a valid style label");
    ++counts[em::argmax(responsibilities[i])][static_cast<std::size_t>(s)];
  }
  // Best injective latent-to-style assignment by bitmask DP over styles.
  const std::size_t full = std::size_t{1} << num_styles;
  std::vector<long> best(full, -1);
  best[0] = 0;
  for (std::size_t z = 0; z < k; ++z) {
    std::vector<long> next = best;
    for (std::size_t mask = 0; mask < full; ++mask) {
      if (best[mask] < 0) continue;
      for (std::size_t s = 0; s < num_styles; ++s) {
        if (mask & (std::size_t{1} << s)) continue;
        const std::size_t m2 = mask | (std::size_t{1} << s);
        next[m2] = std::max(next[m2], best[mask] + static_cast<long>(counts[z][s]));
      }
    }
    best = std::move(next);
  }
  return static_cast<double>(*std::max_element(best.begin(), best.end())) / static_cast<double>(pairs.size());
}

std::vector<double> expert_exact_match(const CategoricalMixture& mix, const std::vector<Example>& examples) {
  if (examples.empty()) throw InputError("exact match needs at least one example");
  std::vector<double> out(mix.k, 0.0);
  for (std::size_t z = 0; z < mix.k; ++z) {
    std::size_t hits = 0;
    for (const auto& ex : examples) {
      Sentence y;
      for (int u : ex.source) {
        const double* row = mix.tables.data() + (z * mix.src_vocab + static_cast<std::size_t>(u)) * mix.tgt_vocab;
        const auto best = std::max_element(row + kContent, row + mix.tgt_vocab);
        y.push_back(static_cast<int>(best - row));
      }
      hits += std::any_of(ex.references.begin(), ex.references.end(),
                          [&](const Reference& r) { return r.tokens == y; });
    }
    out[z] = static_cast<double>(hits) / static_cast<double>(examples.size());
  }
  return out;
}

RichGetRicher rich_get_richer_demo(const std::vector<AlignedPair>& pairs, std::size_t src_vocab,
                                   std::size_t tgt_vocab, std::size_t k, double eps, std::size_t passes,
                                   double pseudo) {
  if (pairs.empty()) throw InputError("rich-get-richer demo needs pairs");
  if (!(eps >= 0.0 && eps <= 1.0) || !(pseudo > 0.0)) throw ConfigError("need eps in [0, 1] and pseudo > 0");
  CategoricalMixture init = CategoricalMixture::uniform(k, src_vocab, tgt_vocab);
  {
    CategoricalMixture empirical = oracle_m_step(
        pairs, std::vector<std::vector<double>>(pairs.size(), std::vector<double>(k, 1.0)), 0.0, init);
    for (std::size_t u = 0; u < src_vocab; ++u) {
      for (std::size_t v = kContent; v < tgt_vocab; ++v) {
        init.at(0, u, v) = (1.0 - eps) * init.at(0, u, v) + eps * empirical.at(0, u, v);
      }
    }
  }

  // Per-expert counts; rows are (pseudo * init + counts) / (pseudo + row total).
  std::vector<double> counts(init.tables.size(), 0.0);
  std::vector<double> row_total(k * src_vocab, 0.0);
  auto prob = [&](std::size_t z, std::size_t u, std::size_t v) {
    const std::size_t ri = z * src_vocab + u;
    return (pseudo * init.tables[ri * tgt_vocab + v] + counts[ri * tgt_vocab + v]) / (pseudo + row_total[ri]);
  };
  auto assign = [&](const AlignedPair& p) {
    std::size_t best = 0;
    double best_score = kNegInf;
    for (std::size_t z = 0; z < k; ++z) {
      double s = 0.0;
      for (std::size_t t = 0; t < p.source.size(); ++t) {
        s += std::log(prob(z, static_cast<std::size_t>(p.source[t]), static_cast<std::size_t>(p.target[t])));
      }
      if (s > best_score) best_score = s, best = z;
    }
    return best;
  };
  auto update = [&](const AlignedPair& p, std::size_t z, double sign) {
    for (std::size_t t = 0; t < p.source.size(); ++t) {
      const std::size_t ri = z * src_vocab + static_cast<std::size_t>(p.source[t]);
      counts[ri * tgt_vocab + static_cast<std::size_t>(p.target[t])] += sign;
      row_total[ri] += sign;
    }
  };

  for (const auto& p : pairs) check_pair(init, p);
  RichGetRicher out;
  std::vector<std::size_t> current(pairs.size(), k);  // k: not yet assigned
  for (std::size_t pass = 0; pass < passes; ++pass) {
    std::vector<std::size_t> usage(k, 0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (current[i] < k) update(pairs[i], current[i], -1.0);
      current[i] = assign(pairs[i]);
      update(pairs[i], current[i], 1.0);
      ++usage[current[i]];
    }
    out.usage.push_back(std::move(usage));
  }
  out.mixture = init;
  for (std::size_t z = 0; z < k; ++z) {
    for (std::size_t u = 0; u < src_vocab; ++u) {
      for (std::size_t v = kContent; v < tgt_vocab; ++v) out.mixture.at(z, u, v) = prob(z, u, v);
    }
  }
  return out;
}

MixtureModel lookup_table_model(const CategoricalMixture& mix, std::size_t max_source_len, std::size_t embed_dim,
                                std::size_t hidden_dim) {
  const std::size_t vs = mix.src_vocab, vt = mix.tgt_vocab, k = mix.k;
  const std::size_t n_content = vs - kContent;
  const std::size_t positions = max_source_len + 1;  // content plus EOS
  const std::size_t d = embed_dim;
  if (d < positions + n_content + 1) {
    throw PreconditionError("embed_dim " + std::to_string(d) + " too small for a lookup-table model; need " +
                            std::to_string(positions + n_content + 1));
  }
  if (hidden_dim < n_content + 1) throw PreconditionError("hidden_dim too small for a lookup-table model");
  for (std::size_t z = 0; z < k; ++z) {
    for (std::size_t u = kContent; u < vs; ++u) {
      for (std::size_t v = kContent; v < vt; ++v) {
        if (!(mix.at(z, u, v) > 0.0)) throw PreconditionError("lookup-table model needs positive tables");
      }
    }
  }

  ModelConfig cfg;
  cfg.vocab_src = vs;
  cfg.vocab_tgt = vt;
  cfg.embed_dim = d;
  cfg.hidden_dim = hidden_dim;
  cfg.num_experts = k;
  cfg.parameterization = Parameterization::Independent;
  cfg.prior = PriorKind::Learned;
  cfg.max_len = positions;
  cfg.dropout = 0.0;
  MixtureModel model(cfg, 0);
  auto& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) params.value(i).fill(0.0);

  // Position matrix, rows P_0..P_{m-1}.
  Eigen::MatrixXd pos(static_cast<Eigen::Index>(positions), static_cast<Eigen::Index>(d));
  for (std::size_t t = 0; t < positions; ++t) {
    const Tensor p = position_encoding(t, d);
    for (std::size_t j = 0; j < d; ++j) pos(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = p[j];
  }

  // Source embeddings: orthonormal, orthogonal to every position encoding.
  const auto n_pos = static_cast<Eigen::Index>(positions);
  const auto n_dirs = static_cast<Eigen::Index>(n_content + 1);
  Eigen::MatrixXd basis(static_cast<Eigen::Index>(d), n_pos + n_dirs);
  basis.leftCols(n_pos) = pos.transpose();
  Rng rng(substream(0, "lookup-basis"));
  for (Eigen::Index c = 0; c < n_dirs; ++c) {
    for (Eigen::Index j = 0; j < basis.rows(); ++j) basis(j, n_pos + c) = rng.uniform(-1, 1);
  }
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(basis).householderQ();
  // Column positions + j of q is the direction of content token j (j = n_content: EOS).
  auto direction = [&](std::size_t j, std::size_t c) {
    return q(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(positions + j));
  };
  Tensor& src_embed = params.value("enc.embed");
  for (std::size_t c = 0; c < d; ++c) {
    src_embed.at(static_cast<std::size_t>(kEos), c) = direction(n_content, c);
    for (std::size_t j = 0; j < n_content; ++j) src_embed.at(kContent + j, c) = direction(j, c);
  }

  // Keys and queries both project onto span(P): the score of source
  // position i at step t is sharpness * P_t . P_i / sqrt(d). All P_i share
  // one norm, so i == t wins by at least sharpness * min_gap / sqrt(d).
  const Eigen::MatrixXd span = q.leftCols(n_pos);
  const Eigen::MatrixXd key = span * span.transpose();
  double min_gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < n_pos; ++t) {
    for (Eigen::Index i = 0; i < n_pos; ++i) {
      if (i != t) min_gap = std::min(min_gap, pos.row(t).dot(pos.row(t)) - pos.row(t).dot(pos.row(i)));
    }
  }
  const double sharpness = 60.0 * std::sqrt(static_cast<double>(d)) / std::max(min_gap, 1e-3);
  const Eigen::MatrixXd query = sharpness * key;
  // Hidden unit j fires (+1) iff the attended source token is content token
  // j (or EOS for j = n_content); otherwise it sits at -1.
  const double beta = 80.0;
  const std::size_t eos_unit = n_content;
  for (std::size_t z = 0; z < k; ++z) {
    const std::string p = model.decoder_prefix(z);
    Tensor& wk = params.value(p + "key");
    Tensor& wq = params.value(p + "query");
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        wk.at(r, c) = key(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        wq.at(r, c) = query(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      }
    }
    Tensor& ff = params.value(p + "ff_in");
    Tensor& ffb = params.value(p + "ff_bias");
    for (std::size_t j = 0; j <= n_content; ++j) {
      for (std::size_t c = 0; c < d; ++c) ff.at(j, d + c) = beta * direction(j, c);
      ffb[j] = -beta / 2.0;
    }
    for (std::size_t j = n_content + 1; j < hidden_dim; ++j) ffb[j] = -beta / 2.0;

    Tensor& out = params.value(p + "out");
    Tensor& ob = params.value(p + "out_bias");
    for (std::size_t v = 0; v < kContent; ++v) ob[v] = -50.0;
    out.at(static_cast<std::size_t>(kEos), eos_unit) = 50.0;
    ob[static_cast<std::size_t>(kEos)] = 0.0;
    for (std::size_t v = kContent; v < vt; ++v) {
      double bias = 0.0;
      for (std::size_t j = 0; j < n_content; ++j) {
        const double half = std::log(mix.at(z, kContent + j, v)) / 2.0;
        out.at(v, j) = half;
        bias += half;
      }
      ob[v] = bias;
    }
  }
  Tensor& prior_bias = params.value("prior.out_bias");
  for (std::size_t z = 0; z < k; ++z) prior_bias[z] = std::log(mix.prior[z]);
  return model;
}

}  // namespace mixmt::oracle
