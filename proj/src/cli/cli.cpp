// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixmt/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <numeric>
#include <set>

#include "mixmt/corpus.hpp"
#include "mixmt/decoder.hpp"
#include "mixmt/error.hpp"
#include "mixmt/oracle.hpp"

namespace mixmt::cli {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

std::set<std::string> keys_of(const KeyValues& kv) {
  std::set<std::string> keys;
  for (const auto& [k, v] : kv.entries()) keys.insert(k);
  return keys;
}

void add_keys(std::set<std::string>& known, std::initializer_list<const char*> keys) {
  for (const char* k : keys) known.insert(k);
}

// Schema pieces: every key a config struct writes is accepted.
std::set<std::string> data_keys() {
  KeyValues kv;
  data::CorpusSpec{}.write(kv);
  auto keys = keys_of(kv);
  add_keys(keys, {"data.style.", "data.dir"});
  return keys;
}

std::set<std::string> pipeline_keys() {
  KeyValues kv;
  ModelConfig{}.write(kv);
  em::TrainConfig{}.write(kv);
  decode::DecodeConfig{}.write(kv);
  auto keys = keys_of(kv);
  add_keys(keys, {"run.id", "run.seed", "run.variant", "data.dir", "eval.d1_latent", "eval.healthy",
                  "eval.d2_pairwise", "eval.per_latent_refs", "eval.seed"});
  return keys;
}

std::set<std::string> merge(std::set<std::string> a, const std::set<std::string>& b) {
  a.insert(b.begin(), b.end());
  return a;
}

data::StyledCorpus load_or_generate(const KeyValues& kv, const fs::path& out) {
  if (kv.has("data.dir")) return data::read_corpus(kv.require("data.dir"));
  data::StyledCorpus corpus = data::generate(data::CorpusSpec::read(kv));
  if (!out.empty()) data::write_corpus(out / "corpus", corpus);
  return corpus;
}

metrics::EvalOptions eval_options(const KeyValues& kv) {
  metrics::EvalOptions o;
  o.thresholds.d1_latent = kv.get_double("eval.d1_latent", o.thresholds.d1_latent);
  o.thresholds.healthy = kv.get_double("eval.healthy", o.thresholds.healthy);
  o.thresholds.d2_pairwise = kv.get_double("eval.d2_pairwise", o.thresholds.d2_pairwise);
  const std::string refs = kv.get("eval.per_latent_refs", "all");
  if (refs == "all") {
    o.per_latent_refs = metrics::RefSelection::All;
  } else if (refs == "first") {
    o.per_latent_refs = metrics::RefSelection::First;
  } else {
    throw ConfigError("eval.per_latent_refs must be all or first, got '" + refs + "'");
  }
  o.seed = kv.get_uint("eval.seed", kv.get_uint("run.seed", 1));
  return o;
}

void write_eval_options(KeyValues& kv, const metrics::EvalOptions& o) {
  kv.set("eval.d1_latent", format_double(o.thresholds.d1_latent));
  kv.set("eval.healthy", format_double(o.thresholds.healthy));
  kv.set("eval.d2_pairwise", format_double(o.thresholds.d2_pairwise));
  kv.set("eval.per_latent_refs", o.per_latent_refs == metrics::RefSelection::All ? "all" : "first");
  kv.set("eval.seed", std::to_string(o.seed));
}

void write_report(const fs::path& out, const metrics::EvalReport& report, const std::string& run_id,
                  const std::string& variant) {
  write_text(out / "report.json", report.to_json() + "\n");
  write_text(out / "report.csv", metrics::EvalReport::csv_header(report.per_latent.bleu.size()) + "\n" +
                                     report.csv_row(run_id, variant) + "\n");
}

struct Trained {
  MixtureModel model;
  em::TrainResult result;
};

Trained train_model(const KeyValues& resolved, const data::StyledCorpus& corpus, const fs::path& out) {
  const ModelConfig mc = ModelConfig::read(resolved);
  const em::TrainConfig tc = em::TrainConfig::read(resolved);
  tc.validate();
  MixtureModel model(mc, resolved.get_uint("run.seed", 1));
  const std::vector<TrainingPair> pairs = make_training_pairs(corpus.train);
  if (pairs.empty()) throw InputError("training split is empty");

  em::TrainHooks hooks;
  std::ofstream log;
  if (!out.empty()) {
    fs::create_directories(out / "checkpoints");
    log.open(out / "train_log.jsonl", std::ios::binary);
    hooks.on_epoch = [&](const em::EpochStats& s) { log << s.to_json() << '\n' << std::flush; };
    hooks.on_table = [&](std::size_t e, const em::ResponsibilityTable& t) {
      em::write_table(out / "checkpoints" / ("responsibilities_epoch" + std::to_string(e) + ".tsv"), t);
    };
    hooks.on_checkpoint = [&](std::size_t e, const MixtureModel& m) {
      m.save(out / "checkpoints" / ("epoch" + std::to_string(e) + ".bin"));
    };
  }
  em::TrainResult result = em::train(model, pairs, tc, hooks);
  if (!out.empty()) model.save(out / "checkpoint.bin");
  return {std::move(model), std::move(result)};
}

std::vector<std::vector<Sentence>> hypotheses_by_origin(const std::vector<metrics::EvalInstance>& set,
                                                        std::size_t k) {
  std::vector<std::vector<Sentence>> out;
  for (const auto& inst : set) {
    std::vector<Sentence> row(k);
    for (std::size_t j = 0; j < inst.hypotheses.size(); ++j) {
      const auto z = static_cast<std::size_t>(inst.origins[j]);
      if (z < k) row[z] = inst.hypotheses[j];
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InputError*>(&e) ||
      dynamic_cast<const VocabError*>(&e) || dynamic_cast<const PreconditionError*>(&e) ||
      dynamic_cast<const UsageError*>(&e) || dynamic_cast<const LatentIndexError*>(&e)) {
    return 1;
  }
  return 2;
}

KeyValues resolve_pipeline_config(const KeyValues& kv, const data::StyleTable& styles) {
  kv.reject_unknown(merge(pipeline_keys(), data_keys()));
  KeyValues in = kv;
  const std::uint64_t seed = kv.get_uint("run.seed", 1);
  in.set_default("model.vocab_src", std::to_string(styles.src_vocab));
  in.set_default("model.vocab_tgt", std::to_string(styles.tgt_vocab));
  in.set_default("train.seed", std::to_string(seed));
  in.set_default("decode.seed", std::to_string(seed));

  KeyValues r;
  r.set("run.id", kv.get("run.id", "run"));
  r.set("run.seed", std::to_string(seed));
  r.set("run.variant", kv.get("run.variant", ""));
  if (kv.has("data.dir")) r.set("data.dir", kv.require("data.dir"));
  const ModelConfig mc = ModelConfig::read(in);
  mc.validate();
  mc.write(r);
  const em::TrainConfig tc = em::TrainConfig::read(in);
  tc.validate();
  tc.write(r);
  const decode::DecodeConfig dc = decode::DecodeConfig::read(in);
  dc.validate();
  dc.write(r);
  write_eval_options(r, eval_options(in));
  return r;
}

PipelineResult run_pipeline(const KeyValues& kv, const data::StyledCorpus& corpus, const fs::path& out) {
  const KeyValues resolved = resolve_pipeline_config(kv, corpus.styles);
  if (!out.empty()) {
    fs::create_directories(out);
    resolved.save(out / "run.cfg");
  }
  Trained trained = train_model(resolved, corpus, out);

  const decode::DecodeConfig dc = decode::DecodeConfig::read(resolved);
  const auto hyps = decode::decode_corpus(trained.model, corpus.test, dc);
  const auto set = metrics::make_instances(hyps, corpus.test);
  PipelineResult result;
  result.training = std::move(trained.result);
  result.report = metrics::evaluate(set, eval_options(resolved));

  const std::size_t k = trained.model.num_experts();
  std::vector<Sentence> sources;
  for (const auto& ex : corpus.test) sources.push_back(ex.source);
  const bool per_latent = dc.strategy == decode::Strategy::PerLatentGreedy;
  if (per_latent) {
    result.style_consistency =
        data::expert_style_consistency(sources, hypotheses_by_origin(set, k), corpus.styles).score;
  }

  if (!out.empty()) {
    decode::write_hypotheses(out / "hypotheses.jsonl", hyps);
    const std::string run_id = resolved.require("run.id");
    const std::string variant = resolved.get("run.variant", "");
    write_report(out, result.report, run_id, variant.empty() ? resolved.require("train.variant") : variant);
    nlohmann::ordered_json j;
    j["run_id"] = run_id;
    j["variant"] = resolved.require("train.variant");
    j["schedule"] = resolved.require("train.schedule");
    j["parameterization"] = resolved.require("model.parameterization");
    j["prior"] = resolved.require("model.prior");
    j["e_step_dropout"] = resolved.get_bool("train.e_step_dropout", false);
    j["pairwise_bleu"] = result.report.pairwise_bleu;
    j["bleu"] = result.report.bleu;
    j["human_bleu"] = result.report.human_bleu;
    j["coverage"] = result.report.coverage;
    j["per_latent_bleu"] = result.report.per_latent.bleu;
    j["d1_flag"] = result.report.flags.d1;
    j["d2_flag"] = result.report.flags.d2;
    if (per_latent) j["style_consistency"] = result.style_consistency;
    if (!result.training.epochs.empty()) j["final_usage"] = result.training.epochs.back().usage_counts;
    write_text(out / "summary.json", j.dump(2) + "\n");
  }
  return result;
}

void cmd_datagen(const KeyValues& kv, const fs::path& out) {
  kv.reject_unknown(merge(data_keys(), {"run.id", "run.seed"}));
  const data::CorpusSpec spec = data::CorpusSpec::read(kv);
  const data::StyledCorpus corpus = data::generate(spec);
  fs::create_directories(out);
  KeyValues resolved;
  resolved.set("run.id", kv.get("run.id", "datagen"));
  spec.write(resolved);
  resolved.save(out / "run.cfg");
  data::write_corpus(out, corpus);
}

void cmd_train(const KeyValues& kv, const fs::path& out) {
  const data::StyledCorpus corpus = data::read_corpus(kv.require("data.dir"));
  const KeyValues resolved = resolve_pipeline_config(kv, corpus.styles);
  fs::create_directories(out);
  resolved.save(out / "run.cfg");
  train_model(resolved, corpus, out);
}

void cmd_generate(const KeyValues& kv, const fs::path& out) {
  KeyValues schema;
  decode::DecodeConfig{}.write(schema);
  kv.reject_unknown(merge(keys_of(schema), {"run.id", "run.seed", "data.dir", "io.checkpoint", "io.examples"}));
  KeyValues in = kv;
  in.set_default("decode.seed", std::to_string(kv.get_uint("run.seed", 1)));
  const decode::DecodeConfig dc = decode::DecodeConfig::read(in);
  dc.validate();
  const MixtureModel model = MixtureModel::load(kv.require("io.checkpoint"));
  const fs::path examples_path = kv.has("io.examples") ? fs::path(kv.require("io.examples"))
                                                       : fs::path(kv.require("data.dir")) / "test.jsonl";
  const std::vector<Example> examples = read_examples(examples_path);

  KeyValues resolved;
  resolved.set("run.id", kv.get("run.id", "generate"));
  resolved.set("io.checkpoint", kv.require("io.checkpoint"));
  resolved.set("io.examples", examples_path.string());
  dc.write(resolved);
  fs::create_directories(out);
  resolved.save(out / "run.cfg");
  decode::write_hypotheses(out / "hypotheses.jsonl", decode::decode_corpus(model, examples, dc));
}

metrics::EvalReport cmd_eval(const KeyValues& kv, const fs::path& out) {
  kv.reject_unknown({"run.id", "run.seed", "run.variant", "data.dir", "io.hypotheses", "io.references",
                     "eval.d1_latent", "eval.healthy", "eval.d2_pairwise", "eval.per_latent_refs", "eval.seed"});
  const fs::path refs_path = kv.has("io.references") ? fs::path(kv.require("io.references"))
                                                     : fs::path(kv.require("data.dir")) / "test.jsonl";
  const auto hyps = decode::read_hypotheses(kv.require("io.hypotheses"));
  const auto examples = read_examples(refs_path);
  const metrics::EvalOptions options = eval_options(kv);
  const metrics::EvalReport report = metrics::evaluate(metrics::make_instances(hyps, examples), options);

  KeyValues resolved;
  resolved.set("run.id", kv.get("run.id", "eval"));
  resolved.set("run.variant", kv.get("run.variant", ""));
  resolved.set("io.hypotheses", kv.require("io.hypotheses"));
  resolved.set("io.references", refs_path.string());
  write_eval_options(resolved, options);
  fs::create_directories(out);
  resolved.save(out / "run.cfg");
  write_report(out, report, resolved.require("run.id"), resolved.require("run.variant"));
  return report;
}

namespace {

struct Cell {
  em::LossVariant variant;
  em::Schedule schedule;
  Parameterization parameterization;
  bool e_step_dropout;

  std::string name() const {
    return em::to_string(variant) + "_" + em::to_string(schedule) + "_" + to_string(parameterization) +
           (e_step_dropout ? "_edrop" : "");
  }
};

bool parse_on_off(const std::string& s) {
  if (s == "on" || s == "true" || s == "1") return true;
  if (s == "off" || s == "false" || s == "0") return false;
  throw ConfigError("expected on/off, got '" + s + "'");
}

struct Moments {
  double mean = 0.0;
  double std = 0.0;
};

// Sample standard deviation (n - 1); zero for a single value.
Moments moments(const std::vector<double>& v) {
  Moments m;
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

}  // namespace

bool cmd_grid(const KeyValues& kv, const fs::path& out) {
  kv.reject_unknown(merge(merge(pipeline_keys(), data_keys()),
                          {"grid.variants", "grid.schedules", "grid.parameterizations", "grid.e_step_dropout",
                           "grid.seeds"}));
  auto list = [&](const char* key, const char* fallback) {
    auto v = kv.get_list(key);
    return v.empty() ? split(fallback, ',') : v;
  };
  std::vector<Cell> cells;
  for (const auto& v : list("grid.variants", "sMlp,sMup,hMlp,hMup")) {
    for (const auto& s : list("grid.schedules", "online,offline")) {
      for (const auto& p : list("grid.parameterizations", "shared,independent")) {
        for (const auto& d : list("grid.e_step_dropout", "off")) {
          cells.push_back({em::parse_loss_variant(trim(v)), em::parse_schedule(trim(s)),
                           parse_parameterization(trim(p)), parse_on_off(trim(d))});
        }
      }
    }
  }
  const auto seeds = static_cast<std::size_t>(kv.get_uint("grid.seeds", 5));
  if (seeds == 0) throw ConfigError("grid.seeds must be positive");
  const std::uint64_t base_seed = kv.get_uint("run.seed", 1);

  fs::create_directories(out);
  KeyValues grid_cfg = kv;
  grid_cfg.save(out / "run.cfg");
  const data::StyledCorpus corpus = load_or_generate(kv, out);

  KeyValues base;
  for (const auto& [k, v] : kv.entries()) {
    if (k.rfind("grid.", 0) != 0 && k.rfind("data.", 0) != 0) base.set(k, v);
  }
  if (kv.has("data.dir")) base.set("data.dir", kv.require("data.dir"));

  std::ofstream runs(out / "runs.csv", std::ios::binary);
  std::ofstream agg(out / "aggregate.csv", std::ios::binary);
  bool header_written = false;
  agg << "cell,variant,schedule,parameterization,prior,e_step_dropout,seeds,failures,"
         "pairwise_bleu_mean,pairwise_bleu_std,bleu_mean,bleu_std,coverage_mean,coverage_std,"
         "consistency_mean,consistency_std,d1_rate,d2_rate\n";
  bool all_ok = true;
  for (const Cell& cell : cells) {
    std::vector<double> pairwise, bleu, coverage, consistency;
    std::size_t failures = 0, d1 = 0, d2 = 0;
    for (std::size_t s = 0; s < seeds; ++s) {
      const std::uint64_t seed = base_seed + s;
      const fs::path dir = out / "runs" / cell.name() / ("seed" + std::to_string(seed));
      KeyValues cfg = base;
      cfg.set("run.id", cell.name() + "_seed" + std::to_string(seed));
      cfg.set("run.seed", std::to_string(seed));
      cfg.set("train.seed", std::to_string(seed));
      cfg.set("decode.seed", std::to_string(seed));
      cfg.set("train.variant", em::to_string(cell.variant));
      cfg.set("train.schedule", em::to_string(cell.schedule));
      cfg.set("train.e_step_dropout", cell.e_step_dropout ? "true" : "false");
      cfg.set("model.parameterization", to_string(cell.parameterization));
      cfg.set("model.prior", to_string(em::uses_prior(cell.variant) ? PriorKind::Learned : PriorKind::Uniform));
      try {
        const PipelineResult r = run_pipeline(cfg, corpus, dir);
        if (!header_written) {
          runs << metrics::EvalReport::csv_header(r.report.per_latent.bleu.size()) << ",style_consistency\n";
          header_written = true;
        }
        runs << r.report.csv_row(cfg.require("run.id"), cell.name()) << ',' << num(r.style_consistency) << '\n';
        pairwise.push_back(r.report.pairwise_bleu);
        bleu.push_back(r.report.bleu);
        coverage.push_back(r.report.coverage);
        consistency.push_back(r.style_consistency);
        d1 += r.report.flags.d1;
        d2 += r.report.flags.d2;
      } catch (const std::exception& e) {
        ++failures;
        all_ok = false;
        fs::create_directories(dir);
        write_text(dir / "error.txt", std::string(e.what()) + "\n");
      }
    }
    const std::size_t ok = seeds - failures;
    const auto rate = [&](std::size_t n) { return ok == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(ok); };
    const Moments mp = moments(pairwise), mb = moments(bleu), mc = moments(coverage), ms = moments(consistency);
    agg << cell.name() << ',' << em::to_string(cell.variant) << ',' << em::to_string(cell.schedule) << ','
        << to_string(cell.parameterization) << ','
        << to_string(em::uses_prior(cell.variant) ? PriorKind::Learned : PriorKind::Uniform) << ','
        << (cell.e_step_dropout ? "on" : "off") << ',' << seeds << ',' << failures << ',' << num(mp.mean) << ','
        << num(mp.std) << ',' << num(mb.mean) << ',' << num(mb.std) << ',' << num(mc.mean) << ','
        << num(mc.std) << ',' << num(ms.mean) << ',' << num(ms.std) << ',' << num(rate(d1)) << ','
        << num(rate(d2)) << '\n'
        << std::flush;
  }
  return all_ok;
}

void cmd_flipdemo(const KeyValues& kv, const fs::path& out) {
  KeyValues schema;
  ModelConfig{}.write(schema);
  kv.reject_unknown(merge(keys_of(schema), {"run.id", "run.seed", "data.dir", "io.checkpoint", "flip.ps",
                                            "flip.trials", "flip.pairs", "flip.seed"}));
  const data::StyledCorpus corpus = data::read_corpus(kv.require("data.dir"));
  const std::uint64_t seed = kv.get_uint("run.seed", 1);
  KeyValues resolved;
  resolved.set("run.id", kv.get("run.id", "flipdemo"));
  resolved.set("run.seed", std::to_string(seed));
  resolved.set("data.dir", kv.require("data.dir"));

  std::optional<MixtureModel> model;
  if (kv.has("io.checkpoint")) {
    resolved.set("io.checkpoint", kv.require("io.checkpoint"));
    model = MixtureModel::load(kv.require("io.checkpoint"));
  } else {
    KeyValues in = kv;
    in.set_default("model.vocab_src", std::to_string(corpus.styles.src_vocab));
    in.set_default("model.vocab_tgt", std::to_string(corpus.styles.tgt_vocab));
    const ModelConfig mc = ModelConfig::read(in);
    mc.validate();
    mc.write(resolved);
    model.emplace(mc, seed);
  }
  std::vector<double> ps;
  for (const auto& p : kv.get_list("flip.ps")) ps.push_back(std::stod(p));
  if (ps.empty()) ps = {0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
  for (double p : ps) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("flip.ps entries must lie in [0, 1)");
  }
  const auto trials = static_cast<std::size_t>(kv.get_uint("flip.trials", 500));
  const auto n_pairs = static_cast<std::size_t>(kv.get_uint("flip.pairs", 200));
  const std::uint64_t flip_seed = kv.get_uint("flip.seed", seed);
  if (trials == 0 || n_pairs == 0) throw ConfigError("flip.trials and flip.pairs must be positive");
  std::string plist;
  for (double p : ps) plist += (plist.empty() ? "" : ",") + format_double(p);
  resolved.set("flip.ps", plist);
  resolved.set("flip.trials", std::to_string(trials));
  resolved.set("flip.pairs", std::to_string(n_pairs));
  resolved.set("flip.seed", std::to_string(flip_seed));

  std::vector<TrainingPair> pairs = make_training_pairs(corpus.train);
  if (pairs.size() > n_pairs) pairs.resize(n_pairs);
  const std::vector<double> rates = em::dropout_flip_rate(*model, pairs, ps, trials, flip_seed);
  fs::create_directories(out);
  resolved.save(out / "run.cfg");
  std::string csv = "p,flip_fraction\n";
  for (std::size_t i = 0; i < ps.size(); ++i) csv += format_double(ps[i]) + "," + num(rates[i]) + "\n";
  write_text(out / "flip.csv", csv);
}

void cmd_oracle_em(const KeyValues& kv, const fs::path& out) {
  kv.reject_unknown(merge(data_keys(), {"run.id", "run.seed", "oracle.k", "oracle.mode", "oracle.schedule",
                                        "oracle.iterations", "oracle.alpha", "oracle.batch_size",
                                        "oracle.free_prior", "oracle.seed"}));
  oracle::OracleConfig c;
  c.k = static_cast<std::size_t>(kv.get_uint("oracle.k", c.k));
  const std::string mode = kv.get("oracle.mode", "soft");
  if (mode != "soft" && mode != "hard") throw ConfigError("oracle.mode must be soft or hard");
  c.mode = mode == "soft" ? oracle::EmMode::Soft : oracle::EmMode::Hard;
  c.schedule = em::parse_schedule(kv.get("oracle.schedule", "offline"));
  c.iterations = static_cast<std::size_t>(kv.get_uint("oracle.iterations", c.iterations));
  c.alpha = kv.get_double("oracle.alpha", c.alpha);
  c.batch_size = static_cast<std::size_t>(kv.get_uint("oracle.batch_size", c.batch_size));
  c.free_prior = kv.get_bool("oracle.free_prior", c.free_prior);
  c.seed = kv.get_uint("oracle.seed", kv.get_uint("run.seed", 1));
  if (c.k == 0 || c.iterations == 0) throw ConfigError("oracle.k and oracle.iterations must be positive");
  if (!(c.alpha >= 0.0)) throw ConfigError("oracle.alpha must be non-negative");

  fs::create_directories(out);
  const data::StyledCorpus corpus = load_or_generate(kv, out);
  if (!corpus.styles.length_preserving()) throw InputError("oracle EM needs length-preserving style maps");
  const auto pairs = oracle::aligned_pairs(corpus.train);

  KeyValues resolved;
  resolved.set("run.id", kv.get("run.id", "oracle-em"));
  if (kv.has("data.dir")) {
    resolved.set("data.dir", kv.require("data.dir"));
  } else {
    data::CorpusSpec::read(kv).write(resolved);
  }
  resolved.set("oracle.k", std::to_string(c.k));
  resolved.set("oracle.mode", mode);
  resolved.set("oracle.schedule", em::to_string(c.schedule));
  resolved.set("oracle.iterations", std::to_string(c.iterations));
  resolved.set("oracle.alpha", format_double(c.alpha));
  resolved.set("oracle.batch_size", std::to_string(c.batch_size));
  resolved.set("oracle.free_prior", c.free_prior ? "true" : "false");
  resolved.set("oracle.seed", std::to_string(c.seed));
  resolved.save(out / "run.cfg");

  const oracle::OracleTrace trace =
      oracle::oracle_em_run(pairs, corpus.styles.src_vocab, corpus.styles.tgt_vocab, c);
  trace.write_csv(out / "trace.csv");
  em::ResponsibilityTable table;
  for (std::size_t i = 0; i < pairs.size(); ++i) table[i] = trace.responsibilities[i];
  em::write_table(out / "responsibilities.tsv", table);

  nlohmann::ordered_json j;
  j["pairs"] = pairs.size();
  j["final_log_likelihood"] = trace.rows.back().log_likelihood;
  j["final_marginal"] = trace.rows.back().marginal;
  j["final_hard"] = trace.rows.back().hard;
  j["final_usage"] = trace.rows.back().usage;
  j["partition_accuracy"] = oracle::partition_accuracy(trace.responsibilities, pairs, corpus.styles.num_styles());
  j["expert_exact_match"] = oracle::expert_exact_match(trace.mixture, corpus.train);
  write_text(out / "summary.json", j.dump(2) + "\n");
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixture-of-experts translation toolkit: synthetic corpora, EM training, decoding, diversity metrics"};
  app.require_subcommand(1);

  struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
  };
  std::map<std::string, Common> common;
  const std::vector<std::pair<std::string, std::string>> subcommands = {
      {"datagen", "Generate a synthetic multi-style corpus (data.* keys)"},
      {"train", "Train a mixture model on data.dir (model.*, train.* keys)"},
      {"generate", "Decode examples with a checkpoint (io.checkpoint, decode.* keys)"},
      {"eval", "Score a hypothesis file against references (io.hypotheses, eval.* keys)"},
      {"grid", "Run the variant x schedule x parameterization grid (grid.* keys)"},
      {"flipdemo", "Measure hard-assignment flip rates under E-step dropout (flip.* keys)"},
      {"oracle-em", "Run exact EM on the categorical oracle (oracle.* keys)"},
  };
  for (const auto& [name, help] : subcommands) {
    CLI::App* sub = app.add_subcommand(name, help);
    Common& c = common[name];
    sub->add_option("--config", c.config, "key=value configuration file");
    sub->add_option("--set", c.sets, "override one key (key=value); repeatable");
    sub->add_option("--out", c.out, "output directory")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  const Common& c = common[name];
  try {
    KeyValues kv = c.config.empty() ? KeyValues{} : KeyValues::load(c.config);
    for (const auto& s : c.sets) kv.apply_override(s);
    const fs::path dir = c.out;
    if (name == "datagen") {
      cmd_datagen(kv, dir);
    } else if (name == "train") {
      cmd_train(kv, dir);
    } else if (name == "generate") {
      cmd_generate(kv, dir);
    } else if (name == "eval") {
      out << cmd_eval(kv, dir).to_json() << '\n';
    } else if (name == "grid") {
      if (!cmd_grid(kv, dir)) {
        err << "mixmt grid: one or more cells failed; see error.txt in their run directories\n";
        return 2;
      }
    } else if (name == "flipdemo") {
      cmd_flipdemo(kv, dir);
    } else if (name == "oracle-em") {
      cmd_oracle_em(kv, dir);
    }
  } catch (const std::exception& e) {
    err << "mixmt " << name << ": " << e.what() << '\n';
    return exit_code(e);
  }
  return 0;
}

}  // namespace mixmt::cli
