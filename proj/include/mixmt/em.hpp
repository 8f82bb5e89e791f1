// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

// EM training of mixture models: soft/hard E-steps, responsibility-weighted
// M-steps, the four loss variants, online/offline schedules and Adam.
//
// Loss variants (per example, K experts):
//   sMlp  -log sum_z p(z|x) p(y|z,x)        hMlp  -log p(z*|x) p(y|z*,x)
//   sMup  -log sum_z p(y|z,x)               hMup  -log p(y|z*,x)
// where z* is the hard E-step argmax. The "up" variants drop the constant
// log K and never use the prior network.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mixmt/config.hpp"
#include "mixmt/corpus.hpp"
#include "mixmt/model.hpp"
#include "mixmt/parallel.hpp"
#include "mixmt/tape.hpp"

namespace mixmt::em {

enum class LossVariant { sMlp, sMup, hMlp, hMup };
enum class Schedule { Online, Offline };

std::string to_string(LossVariant v);
std::string to_string(Schedule s);
LossVariant parse_loss_variant(std::string_view s);
Schedule parse_schedule(std::string_view s);

constexpr bool is_soft(LossVariant v) { return v == LossVariant::sMlp || v == LossVariant::sMup; }
constexpr bool uses_prior(LossVariant v) { return v == LossVariant::sMlp || v == LossVariant::hMlp; }

struct TrainConfig {
  LossVariant variant = LossVariant::hMup;
  Schedule schedule = Schedule::Online;
  bool e_step_dropout = false;
  bool m_step_dropout = true;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr_peak = 2e-3;
  std::size_t warmup = 200;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  Exec exec = Exec::Parallel;

  void validate() const;
  void write(KeyValues& kv, const std::string& prefix = "train.") const;
  static TrainConfig read(const KeyValues& kv, const std::string& prefix = "train.");
};

// lr(step) = peak * min(step / warmup, sqrt(warmup / step)); step >= 1.
double learning_rate(std::size_t step, double peak, std::size_t warmup);

// Responsibility rows keyed by training-pair id.
using ResponsibilityTable = std::map<std::size_t, std::vector<double>>;

void write_table(const std::filesystem::path& path, const ResponsibilityTable& table);
ResponsibilityTable read_table(const std::filesystem::path& path);

// Normalized exponentials of log-scores (log-sum-exp stabilized).
std::vector<double> soft_responsibilities(const std::vector<double>& log_scores);
// One-hot argmax; ties go to the smallest index.
std::vector<double> hard_responsibilities(const std::vector<double>& log_scores);
std::size_t argmax(const std::vector<double>& v);

// Per-expert scores log p(z|x) + log p(y|z,x) (with_prior) or log p(y|z,x).
std::vector<double> expert_log_scores(const MixtureModel& model, const TrainingPair& pair,
                                      ad::PassMode mode, RngState rng, bool with_prior = true);

// Dropout RNG for the E-step of pair i in update step `step` of a run.
RngState e_step_rng(std::uint64_t seed, std::size_t step, std::size_t i);
RngState m_step_rng(std::uint64_t seed, std::size_t step, std::size_t i);

std::vector<std::vector<double>> e_step_soft(const MixtureModel& model,
                                             const std::vector<TrainingPair>& batch,
                                             ad::PassMode mode, std::uint64_t seed = 0,
                                             std::size_t step = 0, bool with_prior = true,
                                             Exec exec = Exec::Parallel);
std::vector<std::vector<double>> e_step_hard(const MixtureModel& model,
                                             const std::vector<TrainingPair>& batch,
                                             ad::PassMode mode, std::uint64_t seed = 0,
                                             std::size_t step = 0, bool with_prior = true,
                                             Exec exec = Exec::Parallel);

// The loss graph of one example. `objective` is the variant's loss as a
// function of theta (evaluated in the M-step mode); `surrogate` is
// -sum_z r_z * log p(y, z | x) with the E-step responsibilities r held
// constant, whose gradient is the EM update direction.
struct ExampleLoss {
  ad::Tape tape;
  ad::NodeId objective = -1;
  ad::NodeId surrogate = -1;
  std::vector<double> responsibilities;
  std::vector<ad::NodeId> expert_terms;  // log p(y, z | x) per expert; -1 if skipped
};

// E-step in e_mode (skipped when `fixed` is given), then the loss tape in
// m_mode. Hard variants record only the selected expert. When e_mode and
// m_mode coincide one tape serves both steps.
ExampleLoss example_loss(const MixtureModel& model, const TrainingPair& pair, LossVariant variant,
                         ad::PassMode e_mode, ad::PassMode m_mode, RngState e_rng, RngState m_rng,
                         const std::vector<double>* fixed = nullptr);

class Adam {
 public:
  Adam(const ad::ParameterStore& params, double beta1 = 0.9, double beta2 = 0.98, double eps = 1e-8);
  void step(ad::ParameterStore& params, const ad::Gradients& grads, double lr);
  std::size_t steps() const { return steps_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  double beta1_, beta2_, eps_;
  std::size_t steps_ = 0;
  std::vector<Tensor> m_, v_;
};

struct BatchResult {
  double loss = 0.0;  // mean objective
  std::vector<std::vector<double>> responsibilities;
  ad::Gradients gradient;  // batch mean of the surrogate gradient
};

// Loss and mean surrogate gradient of a batch; no parameter update.
BatchResult batch_gradient(const MixtureModel& model, const std::vector<TrainingPair>& batch,
                           LossVariant variant, ad::PassMode e_mode, ad::PassMode m_mode,
                           std::uint64_t seed, std::size_t step,
                           const std::vector<std::vector<double>>* fixed = nullptr,
                           Exec exec = Exec::Parallel);

// One M-step: Adam update on the batch-mean surrogate gradient using the
// given responsibilities.
double m_step(MixtureModel& model, const std::vector<TrainingPair>& batch,
              const std::vector<std::vector<double>>& responsibilities, LossVariant variant,
              Adam& optimizer, double lr, ad::PassMode m_mode, std::uint64_t seed, std::size_t step,
              Exec exec = Exec::Parallel);

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double entropy = 0.0;  // mean responsibility entropy (nats)
  std::vector<std::size_t> usage_counts;  // argmax counts
  std::vector<double> usage_mass;         // summed responsibilities
  double seconds = 0.0;

  std::string to_json() const;
};

struct TrainHooks {
  std::function<void(const EpochStats&)> on_epoch;
  // Offline only: the frozen table used for the epoch.
  std::function<void(std::size_t epoch, const ResponsibilityTable&)> on_table;
  std::function<void(std::size_t epoch, const MixtureModel&)> on_checkpoint;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  std::size_t steps = 0;
};

TrainResult train_online(MixtureModel& model, const std::vector<TrainingPair>& pairs,
                         const TrainConfig& config, const TrainHooks& hooks = {});
TrainResult train_offline(MixtureModel& model, const std::vector<TrainingPair>& pairs,
                          const TrainConfig& config, const TrainHooks& hooks = {});
TrainResult train(MixtureModel& model, const std::vector<TrainingPair>& pairs,
                  const TrainConfig& config, const TrainHooks& hooks = {});

// Fraction of (pair, trial) draws whose hard assignment under
// TrainWithDropout(p) differs from the Eval-mode assignment, per p.
std::vector<double> dropout_flip_rate(const MixtureModel& model, const std::vector<TrainingPair>& pairs,
                                      const std::vector<double>& ps, std::size_t trials,
                                      std::uint64_t seed, Exec exec = Exec::Parallel);

}  // namespace mixmt::em
