// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

// Command-line front end and experiment orchestration. Every subcommand takes
// one flat key=value configuration (--config FILE plus --set key=value
// overrides) and writes its outputs, including the resolved configuration as
// run.cfg, into --out DIR.
//
// Exit codes: 0 success, 1 validation error (bad config, input, vocabulary or
// precondition), 2 runtime or numeric error.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mixmt/config.hpp"
#include "mixmt/datagen.hpp"
#include "mixmt/em.hpp"
#include "mixmt/metrics.hpp"

namespace mixmt::cli {

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
// Exit code for an exception escaping a subcommand.
int exit_code(const std::exception& e);

// Subcommand bodies. `kv` is the merged configuration; keys outside the
// subcommand's schema raise ConfigError.
void cmd_datagen(const KeyValues& kv, const std::filesystem::path& out);
void cmd_train(const KeyValues& kv, const std::filesystem::path& out);
void cmd_generate(const KeyValues& kv, const std::filesystem::path& out);
metrics::EvalReport cmd_eval(const KeyValues& kv, const std::filesystem::path& out);
// Returns false if any cell failed (failures are recorded per cell).
bool cmd_grid(const KeyValues& kv, const std::filesystem::path& out);
void cmd_flipdemo(const KeyValues& kv, const std::filesystem::path& out);
void cmd_oracle_em(const KeyValues& kv, const std::filesystem::path& out);

// Train, decode the test split and evaluate one configuration on a corpus.
struct PipelineResult {
  em::TrainResult training;
  metrics::EvalReport report;
  double style_consistency = 0.0;
};

// Writes run.cfg, checkpoint.bin, train_log.jsonl, hypotheses.jsonl,
// report.json, report.csv and summary.json under `out` (when non-empty).
PipelineResult run_pipeline(const KeyValues& kv, const data::StyledCorpus& corpus,
                            const std::filesystem::path& out);

// Full resolved configuration of a pipeline run (defaults filled in).
KeyValues resolve_pipeline_config(const KeyValues& kv, const data::StyleTable& styles);

}  // namespace mixmt::cli
