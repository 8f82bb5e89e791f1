// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixmt/em.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <sstream>

#include "mixmt/error.hpp"

namespace mixmt::em {

using ad::NodeId;
using ad::PassMode;
using ad::Tape;

std::string to_string(LossVariant v) {
  switch (v) {
    case LossVariant::sMlp: return "sMlp";
    case LossVariant::sMup: return "sMup";
    case LossVariant::hMlp: return "hMlp";
    case LossVariant::hMup: return "hMup";
  }
  return "?";
}

std::string to_string(Schedule s) { return s == Schedule::Online ? "online" : "offline"; }

LossVariant parse_loss_variant(std::string_view s) {
  if (s == "sMlp") return LossVariant::sMlp;
  if (s == "sMup") return LossVariant::sMup;
  if (s == "hMlp") return LossVariant::hMlp;
  if (s == "hMup") return LossVariant::hMup;
  throw ConfigError("loss variant must be one of sMlp, sMup, hMlp, hMup; got '" + std::string(s) + "'");
}

Schedule parse_schedule(std::string_view s) {
  if (s == "online") return Schedule::Online;
  if (s == "offline") return Schedule::Offline;
  throw ConfigError("schedule must be online or offline, got '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (warmup < 1) throw ConfigError("warmup must be at least 1");
  if (!(lr_peak > 0.0)) throw ConfigError("lr_peak must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

void TrainConfig::write(KeyValues& kv, const std::string& prefix) const {
  kv.set(prefix + "variant", to_string(variant));
  kv.set(prefix + "schedule", to_string(schedule));
  kv.set(prefix + "e_step_dropout", e_step_dropout ? "on" : "off");
  kv.set(prefix + "m_step_dropout", m_step_dropout ? "on" : "off");
  kv.set(prefix + "epochs", std::to_string(epochs));
  kv.set(prefix + "batch_size", std::to_string(batch_size));
  kv.set(prefix + "lr_peak", format_double(lr_peak));
  kv.set(prefix + "warmup", std::to_string(warmup));
  kv.set(prefix + "beta1", format_double(beta1));
  kv.set(prefix + "beta2", format_double(beta2));
  kv.set(prefix + "adam_eps", format_double(adam_eps));
  kv.set(prefix + "seed", std::to_string(seed));
  kv.set(prefix + "parallel", exec == Exec::Parallel ? "on" : "off");
}

TrainConfig TrainConfig::read(const KeyValues& kv, const std::string& prefix) {
  TrainConfig c;
  c.variant = parse_loss_variant(kv.get(prefix + "variant", to_string(c.variant)));
  c.schedule = parse_schedule(kv.get(prefix + "schedule", to_string(c.schedule)));
  c.e_step_dropout = kv.get_bool(prefix + "e_step_dropout", c.e_step_dropout);
  c.m_step_dropout = kv.get_bool(prefix + "m_step_dropout", c.m_step_dropout);
  c.epochs = kv.get_uint(prefix + "epochs", c.epochs);
  c.batch_size = kv.get_uint(prefix + "batch_size", c.batch_size);
  c.lr_peak = kv.get_double(prefix + "lr_peak", c.lr_peak);
  c.warmup = kv.get_uint(prefix + "warmup", c.warmup);
  c.beta1 = kv.get_double(prefix + "beta1", c.beta1);
  c.beta2 = kv.get_double(prefix + "beta2", c.beta2);
  c.adam_eps = kv.get_double(prefix + "adam_eps", c.adam_eps);
  c.seed = kv.get_uint(prefix + "seed", c.seed);
  c.exec = kv.get_bool(prefix + "parallel", true) ? Exec::Parallel : Exec::Serial;
  c.validate();
  return c;
}

double learning_rate(std::size_t step, double peak, std::size_t warmup) {
  if (step < 1) throw PreconditionError("learning_rate: step must be >= 1");
  if (warmup < 1) throw PreconditionError("learning_rate: warmup must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return peak * std::min(s / w, std::sqrt(w / s));
}

// ---------------------------------------------------------------------------
// Responsibility table files

void write_table(const std::filesystem::path& path, const ResponsibilityTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& [id, row] : table) {
    out << id;
    for (double v : row) out << '\t' << format_double(v);
    out << '\n';
  }
}

ResponsibilityTable read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  ResponsibilityTable table;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::size_t id;
    if (!(fields >> id)) throw InputError("malformed responsibility line: " + line);
    std::vector<double> row;
    double v;
    while (fields >> v) row.push_back(v);
    table[id] = std::move(row);
  }
  return table;
}

// ---------------------------------------------------------------------------
// E-step

std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

std::vector<double> soft_responsibilities(const std::vector<double>& log_scores) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double s : log_scores) mx = std::max(mx, s);
  std::vector<double> r(log_scores.size());
  if (!std::isfinite(mx)) {
    // Every expert has zero likelihood; fall back to uniform.
    std::fill(r.begin(), r.end(), 1.0 / static_cast<double>(r.size()));
    return r;
  }
  double total = 0.0;
  for (std::size_t z = 0; z < r.size(); ++z) total += (r[z] = std::exp(log_scores[z] - mx));
  for (double& v : r) v /= total;
  return r;
}

std::vector<double> hard_responsibilities(const std::vector<double>& log_scores) {
  std::vector<double> r(log_scores.size(), 0.0);
  r[argmax(log_scores)] = 1.0;
  return r;
}

namespace {

// Records log p(y, z | x) (or log p(y | z, x)) for each expert in `experts`.
std::vector<NodeId> record_terms(Tape& tape, const MixtureModel& model, const TrainingPair& pair,
                                 const std::vector<std::size_t>& experts, bool with_prior) {
  const EncoderGraph enc = encode(tape, model, pair.source);
  const NodeId prior = with_prior ? prior_log_probs(tape, model, enc) : -1;
  std::vector<NodeId> terms(model.num_experts(), -1);
  for (std::size_t z : experts) {
    NodeId t = sequence_log_prob(tape, model, enc, pair.target, z);
    if (with_prior) t = tape.add(tape.gather(prior, z), t);
    terms[z] = t;
  }
  return terms;
}

std::vector<std::size_t> all_experts(const MixtureModel& model) {
  std::vector<std::size_t> z(model.num_experts());
  std::iota(z.begin(), z.end(), std::size_t{0});
  return z;
}

std::vector<double> term_values(const Tape& tape, const std::vector<NodeId>& terms) {
  std::vector<double> out(terms.size());
  for (std::size_t z = 0; z < terms.size(); ++z) out[z] = tape.scalar(terms[z]);
  return out;
}

void append_losses(Tape& tape, ExampleLoss& loss, LossVariant variant) {
  const auto& terms = loss.expert_terms;
  const auto& r = loss.responsibilities;
  if (is_soft(variant)) {
    loss.objective = tape.scale(tape.logsumexp(tape.concat(terms)), -1.0);
  } else {
    loss.objective = tape.scale(terms[argmax(r)], -1.0);
  }
  NodeId sur = -1;
  for (std::size_t z = 0; z < terms.size(); ++z) {
    if (r[z] == 0.0 || terms[z] < 0) continue;
    const NodeId piece = tape.scale(terms[z], -r[z]);
    sur = sur < 0 ? piece : tape.add(sur, piece);
  }
  loss.surrogate = sur;
}

}  // namespace

std::vector<double> expert_log_scores(const MixtureModel& model, const TrainingPair& pair,
                                      PassMode mode, RngState rng, bool with_prior) {
  Tape tape(&model.params());
  const auto terms = record_terms(tape, model, pair, all_experts(model), with_prior);
  tape.forward(mode, rng);
  return term_values(tape, terms);
}

RngState e_step_rng(std::uint64_t seed, std::size_t step, std::size_t i) {
  return {substream(seed, "e-dropout", step), i};
}

RngState m_step_rng(std::uint64_t seed, std::size_t step, std::size_t i) {
  return {substream(seed, "m-dropout", step), i};
}

namespace {

std::vector<std::vector<double>> e_step(const MixtureModel& model, const std::vector<TrainingPair>& batch,
                                        PassMode mode, std::uint64_t seed, std::size_t step,
                                        bool with_prior, bool soft, Exec exec) {
  if (batch.empty()) throw PreconditionError("E-step on an empty batch");
  std::vector<std::vector<double>> rows(batch.size());
  for_each_index(batch.size(), exec, [&](std::size_t i) {
    const auto scores = expert_log_scores(model, batch[i], mode, e_step_rng(seed, step, i), with_prior);
    rows[i] = soft ? soft_responsibilities(scores) : hard_responsibilities(scores);
  });
  return rows;
}

}  // namespace

std::vector<std::vector<double>> e_step_soft(const MixtureModel& model,
                                             const std::vector<TrainingPair>& batch, PassMode mode,
                                             std::uint64_t seed, std::size_t step, bool with_prior,
                                             Exec exec) {
  return e_step(model, batch, mode, seed, step, with_prior, true, exec);
}

std::vector<std::vector<double>> e_step_hard(const MixtureModel& model,
                                             const std::vector<TrainingPair>& batch, PassMode mode,
                                             std::uint64_t seed, std::size_t step, bool with_prior,
                                             Exec exec) {
  return e_step(model, batch, mode, seed, step, with_prior, false, exec);
}

// ---------------------------------------------------------------------------
// Losses

ExampleLoss example_loss(const MixtureModel& model, const TrainingPair& pair, LossVariant variant,
                         PassMode e_mode, PassMode m_mode, RngState e_rng, RngState m_rng,
                         const std::vector<double>* fixed) {
  const std::size_t k = model.num_experts();
  const bool with_prior = uses_prior(variant);
  const bool soft = is_soft(variant);
  ExampleLoss loss{Tape(&model.params()), -1, -1, {}, {}};

  if (fixed == nullptr && e_mode == m_mode) {
    // One tape: the E-step forward doubles as the M-step forward.
    loss.expert_terms = record_terms(loss.tape, model, pair, all_experts(model), with_prior);
    loss.tape.forward(e_mode, e_rng);
    const auto scores = term_values(loss.tape, loss.expert_terms);
    loss.responsibilities = soft ? soft_responsibilities(scores) : hard_responsibilities(scores);
    append_losses(loss.tape, loss, variant);
    loss.tape.forward(e_mode, e_rng);
    return loss;
  }

  if (fixed != nullptr) {
    if (fixed->size() != k) throw InputError("responsibility row has wrong length");
    loss.responsibilities = *fixed;
  } else {
    const auto scores = expert_log_scores(model, pair, e_mode, e_rng, with_prior);
    loss.responsibilities = soft ? soft_responsibilities(scores) : hard_responsibilities(scores);
  }

  std::vector<std::size_t> experts;
  if (soft) {
    experts = all_experts(model);
  } else {
    experts.push_back(argmax(loss.responsibilities));
  }
  loss.expert_terms = record_terms(loss.tape, model, pair, experts, with_prior);
  append_losses(loss.tape, loss, variant);
  loss.tape.forward(m_mode, m_rng);
  return loss;
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(const ad::ParameterStore& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.emplace_back(params.value(i).shape(), 0.0);
    v_.emplace_back(params.value(i).shape(), 0.0);
  }
}

void Adam::step(ad::ParameterStore& params, const ad::Gradients& grads, double lr) {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = params.value(i);
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    const bool touched = i < grads.size() && grads.touched(i);
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double g = touched ? grads.get(i)[j] : 0.0;
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      theta[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

// ---------------------------------------------------------------------------
// Batches

BatchResult batch_gradient(const MixtureModel& model, const std::vector<TrainingPair>& batch,
                           LossVariant variant, PassMode e_mode, PassMode m_mode, std::uint64_t seed,
                           std::size_t step, const std::vector<std::vector<double>>* fixed,
                           Exec exec) {
  if (batch.empty()) throw PreconditionError("empty batch");
  if (fixed && fixed->size() != batch.size()) throw InputError("responsibilities do not align with batch");

  std::vector<ad::Gradients> grads(batch.size());
  std::vector<double> losses(batch.size());
  BatchResult out;
  out.responsibilities.resize(batch.size());
  for_each_index(batch.size(), exec, [&](std::size_t i) {
    const RngState e_rng = e_step_rng(seed, step, i);
    // Fused E/M passes share one RNG state so masks coincide.
    const RngState m_rng = (fixed == nullptr && e_mode == m_mode) ? e_rng : m_step_rng(seed, step, i);
    ExampleLoss ex = example_loss(model, batch[i], variant, e_mode, m_mode, e_rng, m_rng,
                                  fixed ? &(*fixed)[i] : nullptr);
    losses[i] = ex.tape.scalar(ex.objective);
    grads[i] = ad::Gradients(model.params());
    ex.tape.backward_into(ex.surrogate, Tensor::scalar(1.0), 1.0, grads[i]);
    out.responsibilities[i] = std::move(ex.responsibilities);
  });

  const double inv = 1.0 / static_cast<double>(batch.size());
  out.gradient = ad::Gradients(model.params());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.loss += losses[i] * inv;
    out.gradient.add_scaled(grads[i], inv);
  }
  return out;
}

double m_step(MixtureModel& model, const std::vector<TrainingPair>& batch,
              const std::vector<std::vector<double>>& responsibilities, LossVariant variant,
              Adam& optimizer, double lr, PassMode m_mode, std::uint64_t seed, std::size_t step,
              Exec exec) {
  BatchResult r = batch_gradient(model, batch, variant, m_mode, m_mode, seed, step, &responsibilities, exec);
  optimizer.step(model.params(), r.gradient, lr);
  return r.loss;
}

// ---------------------------------------------------------------------------
// Schedules

std::string EpochStats::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["loss"] = loss;
  j["entropy"] = entropy;
  j["usage_counts"] = usage_counts;
  j["usage_mass"] = usage_mass;
  j["wall_seconds"] = seconds;
  return j.dump();
}

namespace {

struct StatsAccumulator {
  explicit StatsAccumulator(std::size_t k) : counts(k, 0), mass(k, 0.0) {}

  void add_rows(const std::vector<std::vector<double>>& rows) {
    for (const auto& r : rows) {
      ++counts[argmax(r)];
      double h = 0.0;
      for (std::size_t z = 0; z < r.size(); ++z) {
        mass[z] += r[z];
        if (r[z] > 0.0) h -= r[z] * std::log(r[z]);
      }
      entropy += h;
      ++rows_seen;
    }
  }

  EpochStats finish(std::size_t epoch, double seconds) const {
    EpochStats s;
    s.epoch = epoch;
    s.loss = batches ? loss / static_cast<double>(examples) : 0.0;
    s.entropy = rows_seen ? entropy / static_cast<double>(rows_seen) : 0.0;
    s.usage_counts = counts;
    s.usage_mass = mass;
    s.seconds = seconds;
    return s;
  }

  std::vector<std::size_t> counts;
  std::vector<double> mass;
  double entropy = 0.0;
  double loss = 0.0;
  std::size_t rows_seen = 0;
  std::size_t examples = 0;
  std::size_t batches = 0;
};

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(substream(seed, "shuffle", epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

PassMode mode_for(bool dropout_on, const MixtureModel& model) {
  return dropout_on ? PassMode::train(model.config().dropout) : PassMode::eval();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <typename BatchFn>
void for_each_batch(const std::vector<TrainingPair>& pairs, const std::vector<std::size_t>& order,
                    std::size_t batch_size, BatchFn&& fn) {
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<TrainingPair> batch;
    batch.reserve(end - start);
    for (std::size_t j = start; j < end; ++j) batch.push_back(pairs[order[j]]);
    fn(batch, start, end);
  }
}

}  // namespace

TrainResult train_online(MixtureModel& model, const std::vector<TrainingPair>& pairs,
                         const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (config.schedule != Schedule::Online) throw PreconditionError("train_online needs schedule=online");
  const PassMode e_mode = mode_for(config.e_step_dropout, model);
  const PassMode m_mode = mode_for(config.m_step_dropout, model);
  Adam adam(model.params(), config.beta1, config.beta2, config.adam_eps);
  TrainResult result;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    StatsAccumulator acc(model.num_experts());
    const auto order = shuffled(pairs.size(), config.seed, epoch);
    for_each_batch(pairs, order, config.batch_size,
                   [&](const std::vector<TrainingPair>& batch, std::size_t, std::size_t) {
                     const std::size_t step = ++result.steps;
                     BatchResult br = batch_gradient(model, batch, config.variant, e_mode, m_mode,
                                                     config.seed, step, nullptr, config.exec);
                     adam.step(model.params(), br.gradient,
                               learning_rate(step, config.lr_peak, config.warmup));
                     acc.loss += br.loss * static_cast<double>(batch.size());
                     acc.examples += batch.size();
                     ++acc.batches;
                     acc.add_rows(br.responsibilities);
                   });
    EpochStats stats = acc.finish(epoch, seconds_since(t0));
    if (hooks.on_epoch) hooks.on_epoch(stats);
    if (hooks.on_checkpoint) hooks.on_checkpoint(epoch, model);
    result.epochs.push_back(std::move(stats));
  }
  return result;
}

TrainResult train_offline(MixtureModel& model, const std::vector<TrainingPair>& pairs,
                          const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (config.schedule != Schedule::Offline) throw PreconditionError("train_offline needs schedule=offline");
  const std::size_t k = model.num_experts();
  const bool soft = is_soft(config.variant);
  const PassMode e_mode = mode_for(config.e_step_dropout, model);
  const PassMode m_mode = mode_for(config.m_step_dropout, model);
  Adam adam(model.params(), config.beta1, config.beta2, config.adam_eps);
  TrainResult result;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::vector<double>> rows(pairs.size());
    if (epoch == 0) {
      Rng rng(substream(config.seed, "resp-init"));
      for (auto& r : rows) {
        r.assign(k, 0.0);
        if (soft) {
          double total = 0.0;
          for (double& v : r) total += (v = rng.exponential());
          for (double& v : r) v /= total;
        } else {
          r[rng.below(k)] = 1.0;
        }
      }
    } else {
      // Full-corpus E-step with the model from the end of the last epoch.
      rows = soft ? e_step_soft(model, pairs, e_mode, config.seed, result.steps,
                                uses_prior(config.variant), config.exec)
                  : e_step_hard(model, pairs, e_mode, config.seed, result.steps,
                                uses_prior(config.variant), config.exec);
    }
    if (hooks.on_table) {
      ResponsibilityTable table;
      for (std::size_t i = 0; i < pairs.size(); ++i) table[pairs[i].id] = rows[i];
      hooks.on_table(epoch, table);
    }

    StatsAccumulator acc(k);
    acc.add_rows(rows);
    const auto order = shuffled(pairs.size(), config.seed, epoch);
    for_each_batch(pairs, order, config.batch_size,
                   [&](const std::vector<TrainingPair>& batch, std::size_t start, std::size_t end) {
                     std::vector<std::vector<double>> fixed;
                     for (std::size_t j = start; j < end; ++j) fixed.push_back(rows[order[j]]);
                     const std::size_t step = ++result.steps;
                     BatchResult br = batch_gradient(model, batch, config.variant, m_mode, m_mode,
                                                     config.seed, step, &fixed, config.exec);
                     adam.step(model.params(), br.gradient,
                               learning_rate(step, config.lr_peak, config.warmup));
                     acc.loss += br.loss * static_cast<double>(batch.size());
                     acc.examples += batch.size();
                     ++acc.batches;
                   });
    EpochStats stats = acc.finish(epoch, seconds_since(t0));
    if (hooks.on_epoch) hooks.on_epoch(stats);
    if (hooks.on_checkpoint) hooks.on_checkpoint(epoch, model);
    result.epochs.push_back(std::move(stats));
  }
  return result;
}

TrainResult train(MixtureModel& model, const std::vector<TrainingPair>& pairs,
                  const TrainConfig& config, const TrainHooks& hooks) {
  return config.schedule == Schedule::Online ? train_online(model, pairs, config, hooks)
                                             : train_offline(model, pairs, config, hooks);
}

// ---------------------------------------------------------------------------

std::vector<double> dropout_flip_rate(const MixtureModel& model, const std::vector<TrainingPair>& pairs,
                                      const std::vector<double>& ps, std::size_t trials,
                                      std::uint64_t seed, Exec exec) {
  if (trials == 0) throw PreconditionError("dropout_flip_rate needs trials >= 1");
  if (pairs.empty()) throw PreconditionError("dropout_flip_rate needs at least one pair");
  for (double p : ps) PassMode::train(p);

  std::vector<std::vector<std::size_t>> flips(pairs.size(), std::vector<std::size_t>(ps.size(), 0));
  for_each_index(pairs.size(), exec, [&](std::size_t i) {
    Tape tape(&model.params());
    const auto terms = record_terms(tape, model, pairs[i], all_experts(model), true);
    tape.forward(PassMode::eval(), {});
    const std::size_t reference = argmax(term_values(tape, terms));
    for (std::size_t pi = 0; pi < ps.size(); ++pi) {
      for (std::size_t t = 0; t < trials; ++t) {
        tape.forward(PassMode::train(ps[pi]), {substream(seed, "flip", pi), i * trials + t});
        if (argmax(term_values(tape, terms)) != reference) ++flips[i][pi];
      }
    }
  });

  std::vector<double> rates(ps.size(), 0.0);
  const double total = static_cast<double>(pairs.size() * trials);
  for (std::size_t pi = 0; pi < ps.size(); ++pi) {
    std::size_t count = 0;
    for (const auto& f : flips) count += f[pi];
    rates[pi] = static_cast<double>(count) / total;
  }
  return rates;
}

}  // namespace mixmt::em
