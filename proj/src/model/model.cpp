// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixmt/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "mixmt/error.hpp"

namespace mixmt {

using ad::NodeId;
using ad::Tape;

std::string to_string(Parameterization p) {
  return p == Parameterization::Shared ? "shared" : "independent";
}

std::string to_string(PriorKind p) { return p == PriorKind::Uniform ? "uniform" : "learned"; }

Parameterization parse_parameterization(std::string_view s) {
  if (s == "shared") return Parameterization::Shared;
  if (s == "independent") return Parameterization::Independent;
  throw ConfigError("parameterization must be shared or independent, got '" + std::string(s) + "'");
}

PriorKind parse_prior_kind(std::string_view s) {
  if (s == "uniform") return PriorKind::Uniform;
  if (s == "learned") return PriorKind::Learned;
  throw ConfigError("prior must be uniform or learned, got '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  if (vocab_src <= static_cast<std::size_t>(kFirstContent)) {
    throw ConfigError("vocab_src must exceed the 4 reserved ids");
  }
  if (vocab_tgt <= static_cast<std::size_t>(kFirstContent)) {
    throw ConfigError("vocab_tgt must exceed the 4 reserved ids");
  }
  if (embed_dim == 0 || hidden_dim == 0) throw ConfigError("embed_dim and hidden_dim must be positive");
  if (num_experts == 0) throw ConfigError("num_experts must be at least 1");
  if (max_len < 2) throw ConfigError("max_len must be at least 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

void ModelConfig::write(KeyValues& kv, const std::string& prefix) const {
  kv.set(prefix + "vocab_src", std::to_string(vocab_src));
  kv.set(prefix + "vocab_tgt", std::to_string(vocab_tgt));
  kv.set(prefix + "embed_dim", std::to_string(embed_dim));
  kv.set(prefix + "hidden_dim", std::to_string(hidden_dim));
  kv.set(prefix + "num_experts", std::to_string(num_experts));
  kv.set(prefix + "parameterization", to_string(parameterization));
  kv.set(prefix + "prior", to_string(prior));
  kv.set(prefix + "max_len", std::to_string(max_len));
  kv.set(prefix + "dropout", format_double(dropout));
}

ModelConfig ModelConfig::read(const KeyValues& kv, const std::string& prefix) {
  ModelConfig c;
  c.vocab_src = kv.get_uint(prefix + "vocab_src", c.vocab_src);
  c.vocab_tgt = kv.get_uint(prefix + "vocab_tgt", c.vocab_tgt);
  c.embed_dim = kv.get_uint(prefix + "embed_dim", c.embed_dim);
  c.hidden_dim = kv.get_uint(prefix + "hidden_dim", c.hidden_dim);
  c.num_experts = kv.get_uint(prefix + "num_experts", c.num_experts);
  c.parameterization = parse_parameterization(kv.get(prefix + "parameterization", "shared"));
  c.prior = parse_prior_kind(kv.get(prefix + "prior", "uniform"));
  c.max_len = kv.get_uint(prefix + "max_len", c.max_len);
  c.dropout = kv.get_double(prefix + "dropout", c.dropout);
  return c;
}

// ---------------------------------------------------------------------------

MixtureModel::MixtureModel(ModelConfig config, Uninitialized) : config_(std::move(config)) {
  config_.validate();
  declare();
}

MixtureModel::MixtureModel(ModelConfig config, std::uint64_t seed)
    : MixtureModel(std::move(config), Uninitialized{}) {
  Rng rng(substream(seed, "init"));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    for (double& v : params_.value(i).values()) v = rng.uniform(-0.08, 0.08);
  }
}

std::size_t MixtureModel::num_decoder_sets() const {
  return config_.parameterization == Parameterization::Shared ? 1 : config_.num_experts;
}

std::string MixtureModel::decoder_prefix(std::size_t z) const {
  if (config_.parameterization == Parameterization::Shared) return "dec.";
  return "dec" + std::to_string(z) + ".";
}

void MixtureModel::declare() {
  const std::size_t d = config_.embed_dim;
  const std::size_t h = config_.hidden_dim;
  const std::size_t vs = config_.vocab_src;
  const std::size_t vt = config_.vocab_tgt;
  const std::size_t k = config_.num_experts;

  params_.add("enc.embed", Tensor({vs, d}));
  params_.add("enc.mix_self", Tensor({d, d}));
  params_.add("enc.mix_left", Tensor({d, d}));
  params_.add("enc.mix_right", Tensor({d, d}));
  params_.add("enc.mix_bias", Tensor({1, d}));

  for (std::size_t s = 0; s < num_decoder_sets(); ++s) {
    const std::string p = decoder_prefix(s);
    params_.add(p + "embed", Tensor({vt, d}));
    params_.add(p + "rec_in", Tensor({d, d}));
    params_.add(p + "rec_hidden", Tensor({d, d}));
    params_.add(p + "rec_bias", Tensor({d}));
    params_.add(p + "query", Tensor({d, d}));
    params_.add(p + "key", Tensor({d, d}));
    params_.add(p + "ff_in", Tensor({h, 2 * d}));
    params_.add(p + "ff_bias", Tensor({h}));
    params_.add(p + "out", Tensor({vt, h}));
    params_.add(p + "out_bias", Tensor({vt}));
  }

  if (config_.parameterization == Parameterization::Shared) {
    params_.add("latent.embed", Tensor({k, d}));
  }
  if (config_.prior == PriorKind::Learned) {
    params_.add("prior.hidden", Tensor({d, d}));
    params_.add("prior.hidden_bias", Tensor({d}));
    params_.add("prior.out", Tensor({k, d}));
    params_.add("prior.out_bias", Tensor({k}));
  }
}

std::size_t MixtureModel::decoder_param_count() const {
  const std::string p = decoder_prefix(0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_.name(i).rfind(p, 0) == 0) n += params_.value(i).size();
  }
  return n;
}

// ---------------------------------------------------------------------------
// Checkpoint: text header, then named little-endian float64 arrays.

namespace {

constexpr const char* kMagic = "MIXMT-CHECKPOINT";
constexpr int kFormatVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw InputError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void MixtureModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  KeyValues kv;
  config_.write(kv);
  out << kMagic << "\n";
  out << "format_version = " << kFormatVersion << "\n";
  out << kv.to_text();
  out << "params = " << params_.size() << "\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::string& name = params_.name(i);
    const Tensor& t = params_.value(i);
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, t.rank());
    for (std::size_t dim : t.shape()) put_u64(out, dim);
    for (double v : t.values()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      put_u64(out, bits);
    }
  }
  if (!out) throw InputError("failed writing checkpoint " + path.string());
}

MixtureModel MixtureModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kMagic) throw InputError(path.string() + " is not a mixmt checkpoint");
  std::string header;
  while (std::getline(in, line) && line != "end_header") header += line + "\n";
  if (line != "end_header") throw InputError("checkpoint header not terminated");
  KeyValues kv = KeyValues::parse(header, path.string());
  if (kv.get_int("format_version", -1) != kFormatVersion) {
    throw InputError("unsupported checkpoint format_version " + kv.get("format_version", "?"));
  }
  MixtureModel model(ModelConfig::read(kv), Uninitialized{});
  const std::size_t count = kv.get_uint("params", 0);
  if (count != model.params_.size()) {
    throw InputError("checkpoint holds " + std::to_string(count) + " parameters, config implies " +
                     std::to_string(model.params_.size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t len = get_u64(in);
    if (len > 4096) throw InputError("checkpoint parameter name too long");
    std::string name(len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(len))) throw InputError("checkpoint truncated");
    Tensor& t = model.params_.value(model.params_.index(name));
    const std::uint64_t rank = get_u64(in);
    Shape shape(rank);
    for (auto& dim : shape) dim = get_u64(in);
    if (shape != t.shape()) {
      throw InputError("checkpoint parameter '" + name + "' has shape " + shape_string(shape) +
                       ", expected " + shape_string(t.shape()));
    }
    for (double& v : t.values()) {
      const std::uint64_t bits = get_u64(in);
      std::memcpy(&v, &bits, sizeof v);
    }
  }
  return model;
}

// ---------------------------------------------------------------------------

Tensor position_encoding(std::size_t t, std::size_t d) {
  Tensor p({d});
  for (std::size_t i = 0; i < d; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
    p[i] = (i % 2 == 0) ? std::sin(static_cast<double>(t) * freq) : std::cos(static_cast<double>(t) * freq);
  }
  return p;
}

void check_source(const MixtureModel& model, const Sentence& x) {
  if (x.empty()) throw PreconditionError("source sentence is empty");
  for (int id : x) {
    if (id < 0 || static_cast<std::size_t>(id) >= model.config().vocab_src) {
      throw VocabError("source token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(model.config().vocab_src));
    }
  }
}

void check_target(const MixtureModel& model, const Sentence& y) {
  if (y.empty() || y.back() != kEos) throw PreconditionError("target sentence must end with EOS");
  for (int id : y) {
    if (id < 0 || static_cast<std::size_t>(id) >= model.config().vocab_tgt) {
      throw VocabError("target token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(model.config().vocab_tgt));
    }
  }
}

void check_latent(const MixtureModel& model, std::size_t z) {
  if (z >= model.num_experts()) {
    throw LatentIndexError("latent id " + std::to_string(z) + " outside [0, " +
                           std::to_string(model.num_experts()) + ")");
  }
}

// ---------------------------------------------------------------------------
// Graphs

EncoderGraph encode(Tape& tape, const MixtureModel& model, const Sentence& x) {
  check_source(model, x);
  const std::size_t n = x.size();
  const std::size_t d = model.config().embed_dim;

  std::vector<std::size_t> ids(x.begin(), x.end());
  Tensor pos({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor p = position_encoding(i, d);
    std::copy(p.values().begin(), p.values().end(), pos.values().begin() + static_cast<long>(i * d));
  }
  const NodeId emb = tape.rows(tape.parameter("enc.embed"), std::move(ids));
  const NodeId a = tape.dropout(tape.add(emb, tape.constant(std::move(pos))));

  NodeId pre = tape.matmul_bt(a, tape.parameter("enc.mix_self"));
  if (n > 1) {
    Tensor left({n, n}), right({n, n});
    for (std::size_t i = 1; i < n; ++i) left.at(i, i - 1) = 1.0;
    for (std::size_t i = 0; i + 1 < n; ++i) right.at(i, i + 1) = 1.0;
    const NodeId a_left = tape.matmul(tape.constant(std::move(left)), a);
    const NodeId a_right = tape.matmul(tape.constant(std::move(right)), a);
    pre = tape.add(pre, tape.matmul_bt(a_left, tape.parameter("enc.mix_left")));
    pre = tape.add(pre, tape.matmul_bt(a_right, tape.parameter("enc.mix_right")));
  }
  const NodeId bias = tape.matmul(tape.constant(Tensor({n, 1}, 1.0)), tape.parameter("enc.mix_bias"));
  pre = tape.add(pre, bias);
  return {tape.add(a, tape.tanh(pre)), n};
}

DecoderCursor begin_decoder(Tape& tape, const MixtureModel& model, NodeId states, std::size_t z) {
  check_latent(model, z);
  DecoderCursor c;
  c.z = z;
  c.states = states;
  c.keys = tape.matmul_bt(states, tape.parameter(model.decoder_prefix(z) + "key"));
  return c;
}

NodeId decoder_step(Tape& tape, const MixtureModel& model, DecoderCursor& cursor, int prev) {
  const ModelConfig& cfg = model.config();
  const std::string p = model.decoder_prefix(cursor.z);
  const std::size_t d = cfg.embed_dim;

  NodeId v;
  if (cursor.t == 0) {
    v = cfg.parameterization == Parameterization::Shared
            ? tape.row(tape.parameter("latent.embed"), cursor.z)
            : tape.row(tape.parameter(p + "embed"), static_cast<std::size_t>(kBos));
  } else {
    if (prev < 0 || static_cast<std::size_t>(prev) >= cfg.vocab_tgt) {
      throw VocabError("target token id " + std::to_string(prev) + " outside vocabulary");
    }
    v = tape.row(tape.parameter(p + "embed"), static_cast<std::size_t>(prev));
  }
  v = tape.add(v, tape.constant(position_encoding(cursor.t, d)));
  const NodeId e = tape.dropout(v);

  NodeId rec_pre = tape.add(tape.matvec(tape.parameter(p + "rec_in"), e), tape.parameter(p + "rec_bias"));
  if (cursor.rec >= 0) rec_pre = tape.add(rec_pre, tape.matvec(tape.parameter(p + "rec_hidden"), cursor.rec));
  const NodeId r = tape.tanh(rec_pre);

  const NodeId q = tape.matvec(tape.parameter(p + "query"), tape.add(e, r));
  const NodeId scores = tape.scale(tape.matvec(cursor.keys, q), 1.0 / std::sqrt(static_cast<double>(d)));
  const NodeId alpha = tape.softmax(scores);
  const NodeId ctx = tape.mattvec(cursor.states, alpha);

  const NodeId ff = tape.add(tape.matvec(tape.parameter(p + "ff_in"), tape.concat({r, ctx})),
                             tape.parameter(p + "ff_bias"));
  const NodeId f = tape.dropout(tape.tanh(ff));
  const NodeId logits = tape.add(tape.matvec(tape.parameter(p + "out"), f), tape.parameter(p + "out_bias"));

  cursor.rec = r;
  ++cursor.t;
  return tape.log_softmax(logits);
}

NodeId sequence_log_prob(Tape& tape, const MixtureModel& model, const EncoderGraph& enc,
                         const Sentence& y, std::size_t z) {
  check_target(model, y);
  DecoderCursor cursor = begin_decoder(tape, model, enc.states, z);
  std::vector<NodeId> terms;
  terms.reserve(y.size());
  int prev = kBos;
  for (int tok : y) {
    const NodeId lp = decoder_step(tape, model, cursor, prev);
    terms.push_back(tape.gather(lp, static_cast<std::size_t>(tok)));
    prev = tok;
  }
  return terms.size() == 1 ? terms[0] : tape.sum(tape.concat(std::move(terms)));
}

NodeId prior_log_probs(Tape& tape, const MixtureModel& model, const EncoderGraph& enc) {
  const std::size_t k = model.num_experts();
  if (model.config().prior == PriorKind::Uniform) {
    return tape.constant(Tensor({k}, -std::log(static_cast<double>(k))));
  }
  const NodeId mean = tape.mean_rows(enc.states);
  const NodeId hid = tape.tanh(tape.add(tape.matvec(tape.parameter("prior.hidden"), mean),
                                        tape.parameter("prior.hidden_bias")));
  const NodeId logits = tape.add(tape.matvec(tape.parameter("prior.out"), hid),
                                 tape.parameter("prior.out_bias"));
  return tape.log_softmax(logits);
}

// ---------------------------------------------------------------------------
// Values

EncoderState encode(const MixtureModel& model, const Sentence& x, ad::PassMode mode, RngState rng) {
  Tape tape(&model.params());
  const EncoderGraph g = encode(tape, model, x);
  tape.forward(mode, rng);
  return {tape.value(g.states)};
}

std::vector<double> token_distribution(const MixtureModel& model, const EncoderState& enc,
                                       const Sentence& prefix, std::size_t z, ad::PassMode mode,
                                       RngState rng) {
  check_latent(model, z);
  if (prefix.empty() || prefix.front() != kBos) throw PreconditionError("prefix must start with BOS");
  Tape tape(&model.params());
  DecoderCursor cursor = begin_decoder(tape, model, tape.constant(enc.states), z);
  NodeId lp = -1;
  for (int tok : prefix) lp = decoder_step(tape, model, cursor, tok);
  tape.forward(mode, rng);
  std::vector<double> out(tape.value(lp).values());
  for (double& v : out) v = std::exp(v);
  return out;
}

double sequence_log_prob(const MixtureModel& model, const Sentence& x, const Sentence& y,
                         std::size_t z, ad::PassMode mode, RngState rng) {
  Tape tape(&model.params());
  const EncoderGraph enc = encode(tape, model, x);
  const NodeId s = sequence_log_prob(tape, model, enc, y, z);
  tape.forward(mode, rng);
  return tape.scalar(s);
}

std::vector<double> prior(const MixtureModel& model, const EncoderState& enc) {
  Tape tape(&model.params());
  const EncoderGraph g{tape.constant(enc.states), enc.length()};
  const NodeId lp = prior_log_probs(tape, model, g);
  tape.forward(ad::PassMode::eval(), RngState{});
  std::vector<double> out(tape.value(lp).values());
  for (double& v : out) v = std::exp(v);
  return out;
}

double joint_log_prob(const MixtureModel& model, const Sentence& x, const Sentence& y,
                      std::size_t z, ad::PassMode mode, RngState rng) {
  check_latent(model, z);
  Tape tape(&model.params());
  const EncoderGraph enc = encode(tape, model, x);
  const NodeId lp = prior_log_probs(tape, model, enc);
  const NodeId s = sequence_log_prob(tape, model, enc, y, z);
  const NodeId j = tape.add(tape.gather(lp, z), s);
  tape.forward(mode, rng);
  return tape.scalar(j);
}

StepDecoder::StepDecoder(const MixtureModel& model, const EncoderState& enc, std::size_t z)
    : model_(&model), enc_(&enc), z_(z) {
  check_latent(model, z);
}

std::vector<double> StepDecoder::next(int prev) {
  Tape tape(&model_->params());
  DecoderCursor cursor = begin_decoder(tape, *model_, tape.constant(enc_->states), z_);
  cursor.t = t_;
  if (t_ > 0) cursor.rec = tape.constant(rec_);
  const NodeId lp = decoder_step(tape, *model_, cursor, prev);
  tape.forward(ad::PassMode::eval(), RngState{});
  rec_ = tape.value(cursor.rec);
  ++t_;
  return tape.value(lp).values();
}

}  // namespace mixmt
