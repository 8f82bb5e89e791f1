// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "mixmt/em.hpp"
#include "mixmt/error.hpp"

using namespace mixmt;
using namespace mixmt::em;
using ad::PassMode;

namespace {

ModelConfig em_config(Parameterization p, std::size_t k, PriorKind prior = PriorKind::Learned) {
  ModelConfig c;
  c.vocab_src = 12;
  c.vocab_tgt = 14;
  c.embed_dim = 8;
  c.hidden_dim = 10;
  c.num_experts = k;
  c.parameterization = p;
  c.prior = prior;
  c.max_len = 12;
  c.dropout = 0.1;
  return c;
}

std::vector<TrainingPair> random_pairs(std::size_t n, std::uint64_t seed, int vs = 12, int vt = 14) {
  Rng rng(substream(seed, "pairs"));
  std::vector<TrainingPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    TrainingPair p;
    p.id = i;
    p.source_id = i;
    const std::size_t ls = 1 + rng.below(5);
    const std::size_t lt = 1 + rng.below(5);
    for (std::size_t j = 0; j < ls; ++j) p.source.push_back(kFirstContent + static_cast<int>(rng.below(vs - kFirstContent)));
    for (std::size_t j = 0; j < lt; ++j) p.target.push_back(kFirstContent + static_cast<int>(rng.below(vt - kFirstContent)));
    p.source = with_eos(p.source);
    p.target = with_eos(p.target);
    out.push_back(std::move(p));
  }
  return out;
}

double loss_value(const MixtureModel& m, const TrainingPair& p, LossVariant v) {
  ExampleLoss l = example_loss(m, p, v, PassMode::eval(), PassMode::eval(), {}, {});
  return l.tape.scalar(l.objective);
}

// Dense gradient of -log p(y, z | x) for one expert, on its own tape.
std::vector<Tensor> expert_gradient(const MixtureModel& m, const TrainingPair& p, std::size_t z,
                                    bool with_prior) {
  ad::Tape tape(&m.params());
  const EncoderGraph enc = encode(tape, m, p.source);
  ad::NodeId term = sequence_log_prob(tape, m, enc, p.target, z);
  if (with_prior) term = tape.add(tape.gather(prior_log_probs(tape, m, enc), z), term);
  const ad::NodeId loss = tape.scale(term, -1.0);
  tape.forward(PassMode::eval(), {});
  const ad::Gradients g = tape.backward(loss);
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < m.params().size(); ++i) out.push_back(g.dense(i, m.params().value(i).shape()));
  return out;
}

std::vector<Tensor> dense(const MixtureModel& m, const ad::Gradients& g) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < m.params().size(); ++i) out.push_back(g.dense(i, m.params().value(i).shape()));
  return out;
}

double max_rel_diff(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      const double denom = std::max({std::abs(a[i][j]), std::abs(b[i][j]), 1e-8});
      worst = std::max(worst, std::abs(a[i][j] - b[i][j]) / denom);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("learning rate schedule") {
  CHECK(learning_rate(200, 1e-3, 200) == doctest::Approx(1e-3).epsilon(1e-15));
  CHECK(learning_rate(800, 1e-3, 200) == doctest::Approx(5e-4).epsilon(1e-15));
  CHECK(learning_rate(1, 1.0, 100) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK_THROWS_AS(learning_rate(0, 1.0, 100), PreconditionError);
}

TEST_CASE("responsibility rules") {
  const auto half = soft_responsibilities({-3.0, -3.0});
  CHECK(half[0] == doctest::Approx(0.5));
  CHECK(half[1] == doctest::Approx(0.5));
  const auto dom = soft_responsibilities({0.0, -1e9, -1e9});
  CHECK(std::abs(dom[0] - 1.0) < 1e-6);
  CHECK(dom[1] < 1e-6);
  CHECK(hard_responsibilities({-1.0, -2.0, -3.0}) == std::vector<double>{1, 0, 0});
  CHECK(hard_responsibilities({-1.0, -1.0}) == std::vector<double>{1, 0});
  const auto big = soft_responsibilities({1000.0, 999.0});
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] + big[1] == doctest::Approx(1.0));
}

TEST_CASE("soft E-step matches long-double normalization and hard E-step agrees with its argmax") {
  MixtureModel m(em_config(Parameterization::Independent, 3), 5);
  const auto pairs = random_pairs(100, 3);
  const auto soft = e_step_soft(m, pairs, PassMode::eval());
  const auto hard = e_step_hard(m, pairs, PassMode::eval());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    long double total = 0.0L;
    std::vector<long double> w(3);
    for (std::size_t z = 0; z < 3; ++z) {
      total += (w[z] = std::exp(static_cast<long double>(joint_log_prob(m, pairs[i].source, pairs[i].target, z))));
    }
    double row = 0.0;
    for (std::size_t z = 0; z < 3; ++z) {
      CHECK(std::abs(soft[i][z] - static_cast<double>(w[z] / total)) < 1e-12);
      row += soft[i][z];
    }
    CHECK(std::abs(row - 1.0) < 1e-9);
    CHECK(hard[i][argmax(soft[i])] == 1.0);
  }
  CHECK(e_step_soft(m, pairs, PassMode::eval()) == soft);
  CHECK_THROWS_AS(e_step_soft(m, {}, PassMode::eval()), PreconditionError);
}

TEST_CASE("K = 1 collapses all four losses") {
  MixtureModel m(em_config(Parameterization::Independent, 1), 2);
  for (const auto& p : random_pairs(10, 4)) {
    const double ref = -sequence_log_prob(m, p.source, p.target, 0);
    for (LossVariant v : {LossVariant::sMlp, LossVariant::sMup, LossVariant::hMlp, LossVariant::hMup}) {
      CHECK(std::abs(loss_value(m, p, v) - ref) < 1e-12);
    }
  }
}

TEST_CASE("hard and soft losses obey the max-versus-sum sandwich") {
  for (Parameterization par : {Parameterization::Shared, Parameterization::Independent}) {
    MixtureModel m(em_config(par, 3), 8);
    for (const auto& p : random_pairs(25, 6)) {
      const double s = loss_value(m, p, LossVariant::sMup);
      const double h = loss_value(m, p, LossVariant::hMup);
      CHECK(h >= s - 1e-12);
      CHECK(h <= s + std::log(3.0) + 1e-12);
      const double sl = loss_value(m, p, LossVariant::sMlp);
      const double hl = loss_value(m, p, LossVariant::hMlp);
      CHECK(hl >= sl - 1e-12);
    }
  }
}

TEST_CASE("constant prior makes sMlp equal sMup plus log K") {
  MixtureModel uni(em_config(Parameterization::Shared, 4, PriorKind::Uniform), 3);
  MixtureModel learned(em_config(Parameterization::Shared, 4, PriorKind::Learned), 3);
  learned.params().value("prior.out").fill(0.0);
  learned.params().value("prior.out_bias").fill(0.0);
  for (const auto& p : random_pairs(10, 9)) {
    CHECK(std::abs(loss_value(uni, p, LossVariant::sMlp) - loss_value(uni, p, LossVariant::sMup) - std::log(4.0)) < 1e-9);
    CHECK(std::abs(loss_value(learned, p, LossVariant::sMlp) - loss_value(learned, p, LossVariant::sMup) - std::log(4.0)) < 1e-9);
  }
}

TEST_CASE("soft loss gradient equals responsibility-weighted expert gradients") {
  for (Parameterization par : {Parameterization::Shared, Parameterization::Independent}) {
    MixtureModel m(em_config(par, 3), 11);
    for (const auto& p : random_pairs(5, 12)) {
      for (LossVariant v : {LossVariant::sMlp, LossVariant::sMup}) {
        ExampleLoss l = example_loss(m, p, v, PassMode::eval(), PassMode::eval(), {}, {});
        const auto direct = dense(m, l.tape.backward(l.objective));
        const auto surrogate = dense(m, l.tape.backward(l.surrogate));
        std::vector<Tensor> weighted;
        for (std::size_t i = 0; i < m.params().size(); ++i) weighted.emplace_back(m.params().value(i).shape(), 0.0);
        for (std::size_t z = 0; z < 3; ++z) {
          const auto g = expert_gradient(m, p, z, uses_prior(v));
          for (std::size_t i = 0; i < g.size(); ++i) {
            for (std::size_t j = 0; j < g[i].size(); ++j) weighted[i][j] += l.responsibilities[z] * g[i][j];
          }
        }
        CHECK(max_rel_diff(direct, weighted) < 1e-8);
        CHECK(max_rel_diff(surrogate, weighted) < 1e-8);
      }
    }
  }
}

TEST_CASE("finite differences agree with all four losses") {
  MixtureModel m(em_config(Parameterization::Shared, 2), 13);
  const auto p = random_pairs(1, 14)[0];
  for (LossVariant v : {LossVariant::sMlp, LossVariant::sMup, LossVariant::hMlp, LossVariant::hMup}) {
    ExampleLoss l = example_loss(m, p, v, PassMode::eval(), PassMode::eval(), {}, {});
    CHECK(ad::finite_difference_check(l.tape, m.params(), l.objective, 1e-3) < 1e-4);
  }
}

TEST_CASE("M-step weighting") {
  MixtureModel m(em_config(Parameterization::Shared, 2), 21);
  const auto pairs = random_pairs(6, 22);

  SUBCASE("zero responsibility leaves the latent embedding untouched") {
    std::vector<std::vector<double>> rows(pairs.size(), {1.0, 0.0});
    const BatchResult r = batch_gradient(m, pairs, LossVariant::sMup, PassMode::eval(), PassMode::eval(), 1, 1, &rows);
    const Tensor g = r.gradient.dense(m.params().index("latent.embed"), m.params().value("latent.embed").shape());
    const std::size_t d = m.config().embed_dim;
    for (std::size_t j = 0; j < d; ++j) CHECK(g[d + j] == 0.0);
    bool any = false;
    for (std::size_t j = 0; j < d; ++j) any = any || g[j] != 0.0;
    CHECK(any);
  }

  SUBCASE("one-hot rows equal training the chosen expert alone") {
    const std::vector<std::vector<double>> row{{0.0, 1.0}};
    const BatchResult r = batch_gradient(m, {pairs[0]}, LossVariant::hMup, PassMode::eval(), PassMode::eval(), 1, 1, &row);
    CHECK(max_rel_diff(dense(m, r.gradient), expert_gradient(m, pairs[0], 1, false)) < 1e-12);
    ExampleLoss l = example_loss(m, pairs[0], LossVariant::hMup, PassMode::eval(), PassMode::eval(), {}, {}, &row[0]);
    CHECK(l.expert_terms[0] == -1);
  }

  SUBCASE("equal split averages the two expert gradients") {
    const std::vector<std::vector<double>> row{{0.5, 0.5}};
    const BatchResult r = batch_gradient(m, {pairs[1]}, LossVariant::sMup, PassMode::eval(), PassMode::eval(), 1, 1, &row);
    const auto g0 = expert_gradient(m, pairs[1], 0, false);
    const auto g1 = expert_gradient(m, pairs[1], 1, false);
    const auto got = dense(m, r.gradient);
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
      for (std::size_t j = 0; j < got[i].size(); ++j) worst = std::max(worst, std::abs(got[i][j] - 0.5 * (g0[i][j] + g1[i][j])));
    }
    CHECK(worst < 1e-12);
  }

  SUBCASE("parallel and serial reductions are bit-identical") {
    const BatchResult a = batch_gradient(m, pairs, LossVariant::hMup, PassMode::eval(), PassMode::train(0.1), 3, 7, nullptr, Exec::Serial);
    const BatchResult b = batch_gradient(m, pairs, LossVariant::hMup, PassMode::eval(), PassMode::train(0.1), 3, 7, nullptr, Exec::Parallel);
    CHECK(a.loss == b.loss);
    CHECK(dense(m, a.gradient) == dense(m, b.gradient));
  }
}

TEST_CASE("Adam matches a hand-computed first step") {
  ad::ParameterStore ps;
  ps.add("w", Tensor::vector({1.0, -2.0}));
  ad::Gradients g(ps);
  g.ensure(0, {2}) = Tensor::vector({0.5, -0.25});
  Adam adam(ps, 0.9, 0.98, 1e-8);
  adam.step(ps, g, 0.1);
  // With bias correction the first step is lr * g / (|g| + eps).
  CHECK(ps.value(0)[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
  CHECK(ps.value(0)[1] == doctest::Approx(-2.0 + 0.1 * 0.25 / (0.25 + 1e-8)).epsilon(1e-14));
  CHECK(adam.steps() == 1);
  CHECK(adam.first_moments()[0].shape() == ps.value(0).shape());
}

TEST_CASE("online training") {
  const auto pairs = random_pairs(20, 31);
  TrainConfig cfg;
  cfg.batch_size = 6;
  cfg.epochs = 2;
  cfg.warmup = 4;
  cfg.seed = 9;

  SUBCASE("zero epochs is a no-op") {
    MixtureModel m(em_config(Parameterization::Shared, 2), 1);
    const MixtureModel before = m;
    cfg.epochs = 0;
    train(m, pairs, cfg);
    CHECK(m == before);
  }

  SUBCASE("same seed gives identical parameters and hard usage partitions the data") {
    MixtureModel a(em_config(Parameterization::Shared, 2), 1);
    MixtureModel b(em_config(Parameterization::Shared, 2), 1);
    const TrainResult ra = train(a, pairs, cfg);
    cfg.exec = Exec::Serial;
    train(b, pairs, cfg);
    CHECK(a == b);
    CHECK(!(a == MixtureModel(em_config(Parameterization::Shared, 2), 1)));
    REQUIRE(ra.epochs.size() == 2);
    for (const auto& e : ra.epochs) {
      CHECK(std::accumulate(e.usage_counts.begin(), e.usage_counts.end(), std::size_t{0}) == pairs.size());
      CHECK(std::isfinite(e.loss));
    }
    CHECK(ra.steps == 8);
    CHECK(ra.epochs[0].to_json().find("\"usage_counts\"") != std::string::npos);
  }
}

TEST_CASE("offline training freezes and re-estimates the table") {
  const auto pairs = random_pairs(15, 41);
  TrainConfig cfg;
  cfg.schedule = Schedule::Offline;
  cfg.variant = LossVariant::sMup;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.warmup = 2;
  cfg.m_step_dropout = false;

  MixtureModel m(em_config(Parameterization::Independent, 3), 4);
  std::vector<ResponsibilityTable> tables;
  std::vector<MixtureModel> checkpoints;
  TrainHooks hooks;
  hooks.on_table = [&](std::size_t, const ResponsibilityTable& t) { tables.push_back(t); };
  hooks.on_checkpoint = [&](std::size_t, const MixtureModel& mm) { checkpoints.push_back(mm); };
  const TrainResult r = train(m, pairs, cfg, hooks);
  REQUIRE(tables.size() == 2);
  for (const auto& [id, row] : tables[0]) {
    CHECK(std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) < 1e-9);
  }
  const auto manual = e_step_soft(checkpoints[0], pairs, PassMode::eval(), cfg.seed, 0, false);
  for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(tables[1].at(pairs[i].id) == manual[i]);
  // Masses reported for an epoch are the frozen table's.
  double mass0 = 0.0;
  for (const auto& [id, row] : tables[0]) mass0 += row[0];
  CHECK(r.epochs[0].usage_mass[0] == doctest::Approx(mass0).epsilon(1e-12));

  const auto path = std::filesystem::temp_directory_path() / "mixmt_table_test.tsv";
  write_table(path, tables[1]);
  CHECK(read_table(path) == tables[1]);
  std::filesystem::remove(path);
}

TEST_CASE("offline hard initialization is one-hot") {
  const auto pairs = random_pairs(12, 43);
  TrainConfig cfg;
  cfg.schedule = Schedule::Offline;
  cfg.variant = LossVariant::hMup;
  cfg.epochs = 1;
  MixtureModel m(em_config(Parameterization::Shared, 2), 4);
  ResponsibilityTable first;
  TrainHooks hooks;
  hooks.on_table = [&](std::size_t, const ResponsibilityTable& t) { first = t; };
  train(m, pairs, cfg, hooks);
  for (const auto& [id, row] : first) CHECK(row[argmax(row)] == 1.0);
}

TEST_CASE("dropout flip rate") {
  MixtureModel m(em_config(Parameterization::Shared, 2), 51);
  const auto pairs = random_pairs(50, 52);
  const auto rates = dropout_flip_rate(m, pairs, {0.0, 0.05, 0.3}, 5, 7);
  CHECK(rates[0] == 0.0);
  for (double r : rates) CHECK((r >= 0.0 && r <= 1.0));
  CHECK(rates[2] >= rates[1]);
  CHECK(dropout_flip_rate(m, pairs, {0.0, 0.05, 0.3}, 5, 7, Exec::Serial) == rates);
  CHECK_THROWS_AS(dropout_flip_rate(m, pairs, {0.1}, 0, 7), PreconditionError);
}

TEST_CASE("train config round-trips and rejects bad values") {
  TrainConfig c;
  c.variant = LossVariant::sMlp;
  c.schedule = Schedule::Offline;
  c.lr_peak = 0.003;
  KeyValues kv;
  c.write(kv);
  const TrainConfig back = TrainConfig::read(kv);
  CHECK(back.variant == LossVariant::sMlp);
  CHECK(back.schedule == Schedule::Offline);
  CHECK(back.lr_peak == 0.003);
  CHECK_THROWS_AS(parse_loss_variant("xMup"), ConfigError);
  kv.set("train.batch_size", "0");
  CHECK_THROWS_AS(TrainConfig::read(kv), ConfigError);
}
