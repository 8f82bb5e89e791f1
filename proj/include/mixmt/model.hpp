// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

// Compact attention encoder-decoder with a K-way multinomial latent variable.
//
// Encoder: a_i = dropout(E_src[x_i] + P_i),
//          h_i = a_i + tanh(Wc a_i + Wl a_{i-1} + Wr a_{i+1} + b).
// Decoder step t (latent z):
//   v   = (t == 0 ? (Shared ? E_z : E_tgt[BOS]) : E_tgt[y_{t-1}]) + P_t
//   e   = dropout(v)
//   r_t = tanh(W_in e + W_rec r_{t-1} + b_rec)
//   q   = W_q (e + r_t);  alpha = softmax(H W_k^T q / sqrt(d));  c = H^T alpha
//   f   = dropout(tanh(W_ff [r_t; c] + b_ff))
//   log p(y_t | ...) = log_softmax(W_out f + b_out)
// Prior (Learned): softmax(W_o tanh(W_h mean_i(h_i) + b_h) + b_o).
//
// P_t are fixed sinusoidal position encodings. Latent ids are 0-based.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mixmt/config.hpp"
#include "mixmt/rng.hpp"
#include "mixmt/tape.hpp"
#include "mixmt/tensor.hpp"

namespace mixmt {

using Sentence = std::vector<int>;

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kFirstContent = 4;

enum class Parameterization { Shared, Independent };
enum class PriorKind { Uniform, Learned };

std::string to_string(Parameterization p);
std::string to_string(PriorKind p);
Parameterization parse_parameterization(std::string_view s);
PriorKind parse_prior_kind(std::string_view s);

struct ModelConfig {
  std::size_t vocab_src = 0;
  std::size_t vocab_tgt = 0;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t num_experts = 2;
  Parameterization parameterization = Parameterization::Shared;
  PriorKind prior = PriorKind::Uniform;
  std::size_t max_len = 32;
  double dropout = 0.1;

  void validate() const;
  void write(KeyValues& kv, const std::string& prefix = "model.") const;
  static ModelConfig read(const KeyValues& kv, const std::string& prefix = "model.");

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

class MixtureModel {
 public:
  // Parameters drawn uniformly from [-0.08, 0.08] using the "init" substream.
  MixtureModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::size_t num_experts() const { return config_.num_experts; }
  std::size_t num_decoder_sets() const;

  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }

  // Name prefix of the decoder set serving latent z ("dec." or "dec<z>.").
  std::string decoder_prefix(std::size_t z) const;
  // Scalar count of one decoder set.
  std::size_t decoder_param_count() const;

  void save(const std::filesystem::path& path) const;
  static MixtureModel load(const std::filesystem::path& path);

  friend bool operator==(const MixtureModel&, const MixtureModel&) = default;

 private:
  struct Uninitialized {};
  MixtureModel(ModelConfig config, Uninitialized);
  void declare();

  ModelConfig config_;
  ad::ParameterStore params_;
};

// Sinusoidal position encoding of position t in dimension d.
Tensor position_encoding(std::size_t t, std::size_t d);

// ---------------------------------------------------------------------------
// Graph construction (used for training and gradient checks).

struct EncoderGraph {
  ad::NodeId states = -1;  // [n, d]
  std::size_t length = 0;
};

struct DecoderCursor {
  std::size_t z = 0;
  std::size_t t = 0;
  ad::NodeId states = -1;
  ad::NodeId keys = -1;
  ad::NodeId rec = -1;  // r_{t-1}; -1 before the first step
};

EncoderGraph encode(ad::Tape& tape, const MixtureModel& model, const Sentence& x);
DecoderCursor begin_decoder(ad::Tape& tape, const MixtureModel& model, ad::NodeId states,
                            std::size_t z);
// Appends one step fed with `prev` (ignored at t = 0) and returns the
// log-probability node over the target vocabulary.
ad::NodeId decoder_step(ad::Tape& tape, const MixtureModel& model, DecoderCursor& cursor,
                        int prev);
// log p(y | z, x); y must end with EOS.
ad::NodeId sequence_log_prob(ad::Tape& tape, const MixtureModel& model, const EncoderGraph& enc,
                             const Sentence& y, std::size_t z);
// log p(z | x) as a [K] node (constant -log K for the uniform prior).
ad::NodeId prior_log_probs(ad::Tape& tape, const MixtureModel& model, const EncoderGraph& enc);

// ---------------------------------------------------------------------------
// Value API.

struct EncoderState {
  Tensor states;  // [n, d]
  std::size_t length() const { return states.rows(); }
};

EncoderState encode(const MixtureModel& model, const Sentence& x, ad::PassMode mode = {},
                    RngState rng = {});
// Distribution over the next target token given prefix (which starts with BOS).
std::vector<double> token_distribution(const MixtureModel& model, const EncoderState& enc,
                                       const Sentence& prefix, std::size_t z,
                                       ad::PassMode mode = {}, RngState rng = {});
double sequence_log_prob(const MixtureModel& model, const Sentence& x, const Sentence& y,
                         std::size_t z, ad::PassMode mode = {}, RngState rng = {});
std::vector<double> prior(const MixtureModel& model, const EncoderState& enc);
double joint_log_prob(const MixtureModel& model, const Sentence& x, const Sentence& y,
                      std::size_t z, ad::PassMode mode = {}, RngState rng = {});

// Incremental Eval-mode decoding state for one (source, latent) pair.
class StepDecoder {
 public:
  StepDecoder(const MixtureModel& model, const EncoderState& enc, std::size_t z);

  // Log-probabilities of the next token after feeding `prev` (BOS at t = 0).
  std::vector<double> next(int prev);
  std::size_t position() const { return t_; }

 private:
  const MixtureModel* model_;
  const EncoderState* enc_;
  std::size_t z_;
  std::size_t t_ = 0;
  Tensor rec_;
};

void check_source(const MixtureModel& model, const Sentence& x);
void check_target(const MixtureModel& model, const Sentence& y);
void check_latent(const MixtureModel& model, std::size_t z);

}  // namespace mixmt
