// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixmt/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mixmt/error.hpp"

namespace mixmt::ad {

PassMode PassMode::train(double p) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw PreconditionError("dropout rate must lie in [0, 1), got " + std::to_string(p));
  }
  return PassMode{Kind::TrainWithDropout, p};
}

// ---------------------------------------------------------------------------
// ParameterStore / Gradients

std::size_t ParameterStore::add(std::string name, Tensor value) {
  if (lookup_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  const std::size_t i = values_.size();
  lookup_.emplace(name, i);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return i;
}

std::optional<std::size_t> ParameterStore::find(std::string_view name) const {
  auto it = lookup_.find(name);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t ParameterStore::index(std::string_view name) const {
  auto i = find(name);
  if (!i) throw UsageError("unknown parameter '" + std::string(name) + "'");
  return *i;
}

std::size_t ParameterStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

Gradients::Gradients(const ParameterStore& params) : grads_(params.size()) {}

Tensor& Gradients::ensure(std::size_t i, const Shape& shape) {
  if (i >= grads_.size()) grads_.resize(i + 1);
  if (grads_[i].empty()) grads_[i] = Tensor(shape, 0.0);
  return grads_[i];
}

Tensor Gradients::dense(std::size_t i, const Shape& shape) const {
  if (i < grads_.size() && !grads_[i].empty()) return grads_[i];
  return Tensor(shape, 0.0);
}

void Gradients::add_scaled(const Gradients& other, double weight) {
  if (other.grads_.size() > grads_.size()) grads_.resize(other.grads_.size());
  for (std::size_t i = 0; i < other.grads_.size(); ++i) {
    const Tensor& g = other.grads_[i];
    if (g.empty()) continue;
    Tensor& dst = ensure(i, g.shape());
    for (std::size_t k = 0; k < g.size(); ++k) dst[k] += weight * g[k];
  }
}

void Gradients::scale(double factor) {
  for (auto& g : grads_) {
    for (double& v : g.values()) v *= factor;
  }
}

void Gradients::clear() {
  for (auto& g : grads_) g = Tensor();
}

// ---------------------------------------------------------------------------
// Recording

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Parameter: return "parameter";
    case Op::Input: return "input";
    case Op::Constant: return "constant";
    case Op::MatMul: return "matmul";
    case Op::MatMulBT: return "matmul_bt";
    case Op::MatVec: return "matvec";
    case Op::MatTVec: return "mattvec";
    case Op::Add: return "add";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::Tanh: return "tanh";
    case Op::Softmax: return "softmax";
    case Op::LogSoftmax: return "log_softmax";
    case Op::Row: return "row";
    case Op::Rows: return "rows";
    case Op::MeanRows: return "mean_rows";
    case Op::Dropout: return "dropout";
    case Op::Gather: return "gather";
    case Op::Sum: return "sum";
    case Op::LogSumExp: return "logsumexp";
    case Op::Concat: return "concat";
    case Op::StackRows: return "stack_rows";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_fail(Op op, const std::string& detail) {
  throw ShapeError(std::string(op_name(op)) + ": " + detail);
}

void require_rank(Op op, const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    shape_fail(op, std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                       shape_string(s));
  }
}

}  // namespace

NodeId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw UsageError("node id " + std::to_string(id) + " is not on this tape");
  }
  return nodes_[static_cast<std::size_t>(id)];
}

NodeId Tape::parameter(std::size_t index) {
  if (!params_) throw UsageError("tape has no parameter store");
  if (index >= params_->size()) throw UsageError("parameter index out of range");
  if (auto it = param_nodes_.find(index); it != param_nodes_.end()) return it->second;
  Node n{Op::Parameter, {}, params_->value(index).shape()};
  n.index = index;
  NodeId id = push(std::move(n));
  param_nodes_.emplace(index, id);
  return id;
}

NodeId Tape::parameter(std::string_view name) {
  if (!params_) throw UsageError("tape has no parameter store");
  return parameter(params_->index(name));
}

NodeId Tape::input(std::string name, Shape shape) {
  Node n{Op::Input, {}, std::move(shape)};
  n.name = std::move(name);
  return push(std::move(n));
}

NodeId Tape::constant(Tensor value) {
  Shape s = value.shape();
  Node n{Op::Constant, {}, std::move(s), std::move(value)};
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Shape& sa = node(a).shape;
  const Shape& sb = node(b).shape;
  require_rank(Op::MatMul, sa, 2, "lhs");
  require_rank(Op::MatMul, sb, 2, "rhs");
  if (sa[1] != sb[0]) shape_fail(Op::MatMul, shape_string(sa) + " x " + shape_string(sb));
  return push(Node{Op::MatMul, {a, b}, {sa[0], sb[1]}});
}

NodeId Tape::matmul_bt(NodeId a, NodeId b) {
  const Shape& sa = node(a).shape;
  const Shape& sb = node(b).shape;
  require_rank(Op::MatMulBT, sa, 2, "lhs");
  require_rank(Op::MatMulBT, sb, 2, "rhs");
  if (sa[1] != sb[1]) shape_fail(Op::MatMulBT, shape_string(sa) + " x " + shape_string(sb) + "^T");
  return push(Node{Op::MatMulBT, {a, b}, {sa[0], sb[0]}});
}

NodeId Tape::matvec(NodeId a, NodeId x) {
  const Shape& sa = node(a).shape;
  const Shape& sx = node(x).shape;
  require_rank(Op::MatVec, sa, 2, "matrix");
  require_rank(Op::MatVec, sx, 1, "vector");
  if (sa[1] != sx[0]) shape_fail(Op::MatVec, shape_string(sa) + " x " + shape_string(sx));
  return push(Node{Op::MatVec, {a, x}, {sa[0]}});
}

NodeId Tape::mattvec(NodeId a, NodeId x) {
  const Shape& sa = node(a).shape;
  const Shape& sx = node(x).shape;
  require_rank(Op::MatTVec, sa, 2, "matrix");
  require_rank(Op::MatTVec, sx, 1, "vector");
  if (sa[0] != sx[0]) shape_fail(Op::MatTVec, shape_string(sa) + "^T x " + shape_string(sx));
  return push(Node{Op::MatTVec, {a, x}, {sa[1]}});
}

NodeId Tape::add(NodeId a, NodeId b) {
  if (node(a).shape != node(b).shape) {
    shape_fail(Op::Add, shape_string(node(a).shape) + " + " + shape_string(node(b).shape));
  }
  Shape s = node(a).shape;
  return push(Node{Op::Add, {a, b}, std::move(s)});
}

NodeId Tape::mul(NodeId a, NodeId b) {
  if (node(a).shape != node(b).shape) {
    shape_fail(Op::Mul, shape_string(node(a).shape) + " * " + shape_string(node(b).shape));
  }
  Shape s = node(a).shape;
  return push(Node{Op::Mul, {a, b}, std::move(s)});
}

NodeId Tape::scale(NodeId a, double factor) {
  Shape s = node(a).shape;
  Node n{Op::Scale, {a}, std::move(s)};
  n.factor = factor;
  return push(std::move(n));
}

NodeId Tape::tanh(NodeId a) {
  Shape s = node(a).shape;
  return push(Node{Op::Tanh, {a}, std::move(s)});
}

NodeId Tape::softmax(NodeId a) {
  Shape s = node(a).shape;
  if (s.size() != 1 && s.size() != 2) shape_fail(Op::Softmax, "expects rank 1 or 2");
  return push(Node{Op::Softmax, {a}, std::move(s)});
}

NodeId Tape::log_softmax(NodeId a) {
  Shape s = node(a).shape;
  if (s.size() != 1 && s.size() != 2) shape_fail(Op::LogSoftmax, "expects rank 1 or 2");
  return push(Node{Op::LogSoftmax, {a}, std::move(s)});
}

NodeId Tape::sum(NodeId a) {
  node(a);
  return push(Node{Op::Sum, {a}, {1}});
}

NodeId Tape::logsumexp(NodeId a) {
  require_rank(Op::LogSumExp, node(a).shape, 1, "operand");
  return push(Node{Op::LogSumExp, {a}, {1}});
}

NodeId Tape::gather(NodeId a, std::size_t index) {
  const Shape& s = node(a).shape;
  require_rank(Op::Gather, s, 1, "operand");
  if (index >= s[0]) {
    shape_fail(Op::Gather, "index " + std::to_string(index) + " out of range for " + shape_string(s));
  }
  Node n{Op::Gather, {a}, {1}};
  n.index = index;
  return push(std::move(n));
}

NodeId Tape::row(NodeId table, std::size_t index) {
  const Shape& s = node(table).shape;
  require_rank(Op::Row, s, 2, "table");
  if (index >= s[0]) {
    shape_fail(Op::Row, "row " + std::to_string(index) + " out of range for " + shape_string(s));
  }
  Node n{Op::Row, {table}, {s[1]}};
  n.index = index;
  return push(std::move(n));
}

NodeId Tape::rows(NodeId table, std::vector<std::size_t> indices) {
  const Shape& s = node(table).shape;
  require_rank(Op::Rows, s, 2, "table");
  if (indices.empty()) shape_fail(Op::Rows, "empty index list");
  for (std::size_t i : indices) {
    if (i >= s[0]) shape_fail(Op::Rows, "row " + std::to_string(i) + " out of range for " + shape_string(s));
  }
  Node n{Op::Rows, {table}, {indices.size(), s[1]}};
  n.indices = std::move(indices);
  return push(std::move(n));
}

NodeId Tape::mean_rows(NodeId a) {
  const Shape& s = node(a).shape;
  require_rank(Op::MeanRows, s, 2, "operand");
  return push(Node{Op::MeanRows, {a}, {s[1]}});
}

NodeId Tape::concat(std::vector<NodeId> parts) {
  if (parts.empty()) shape_fail(Op::Concat, "no operands");
  std::size_t n = 0;
  for (NodeId p : parts) {
    require_rank(Op::Concat, node(p).shape, 1, "operand");
    n += node(p).shape[0];
  }
  return push(Node{Op::Concat, std::move(parts), {n}});
}

NodeId Tape::stack_rows(std::vector<NodeId> parts) {
  if (parts.empty()) shape_fail(Op::StackRows, "no operands");
  const Shape& first = node(parts[0]).shape;
  require_rank(Op::StackRows, first, 1, "operand");
  for (NodeId p : parts) {
    if (node(p).shape != first) shape_fail(Op::StackRows, "operands differ in shape");
  }
  Shape s{parts.size(), first[0]};
  return push(Node{Op::StackRows, std::move(parts), std::move(s)});
}

NodeId Tape::dropout(NodeId a) {
  Shape s = node(a).shape;
  return push(Node{Op::Dropout, {a}, std::move(s)});
}

void Tape::mark_output(std::string name, NodeId id) {
  node(id);
  outputs_[std::move(name)] = id;
}

std::vector<std::size_t> Tape::parameters_used() const {
  std::vector<std::size_t> out;
  for (const Node& n : nodes_) {
    if (n.op == Op::Parameter) out.push_back(n.index);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward

const Tensor& Tape::value(NodeId id) const {
  const Node& n = node(id);
  if (n.op == Op::Parameter) return params_->value(n.index);
  if (!evaluated(id)) {
    throw UsageError("value of node " + std::to_string(id) + " (" + std::string(op_name(n.op)) +
                     ") requested before forward");
  }
  return n.value;
}

double Tape::scalar(NodeId id) const {
  const Tensor& t = value(id);
  if (t.size() != 1) throw UsageError("node " + std::to_string(id) + " is not a scalar");
  return t[0];
}

const Tensor& Tape::arg(const Node& n, std::size_t k) const {
  const Node& src = nodes_[static_cast<std::size_t>(n.in[k])];
  if (src.op == Op::Parameter) return params_->value(src.index);
  return src.value;
}

void Tape::check_finite(NodeId id, const Tensor& t, const char* phase) const {
  if (!t.all_finite()) {
    throw NumericError(std::string("numeric overflow: non-finite ") + phase + " at op #" +
                       std::to_string(id) + " (" + std::string(op_name(nodes_[id].op)) + ")");
  }
}

namespace {

void softmax_rows(const Tensor& x, Tensor& y, bool log_space) {
  const std::size_t rows = x.rank() == 1 ? 1 : x.shape()[0];
  const std::size_t cols = x.rank() == 1 ? x.size() : x.shape()[1];
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * cols;
    double* out = y.data().data() + r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, in[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(in[c] - mx);
    if (log_space) {
      const double lse = mx + std::log(total);
      for (std::size_t c = 0; c < cols; ++c) out[c] = in[c] - lse;
    } else {
      for (std::size_t c = 0; c < cols; ++c) out[c] = std::exp(in[c] - mx) / total;
    }
  }
}

std::uint64_t dropout_key(const RngState& rng, NodeId id) {
  return mix64(rng.counter ^ mix64(static_cast<std::uint64_t>(id) * 0x9E3779B97F4A7C15ULL + 1));
}

}  // namespace

void Tape::evaluate(NodeId id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.op == Op::Parameter) return;
  if (n.op == Op::Constant) return;
  if (n.op == Op::Input) {
    auto it = inputs_.find(n.name);
    if (it == inputs_.end()) throw UsageError("input '" + n.name + "' was not bound");
    if (it->second.shape() != n.shape) {
      throw ShapeError("input '" + n.name + "': expected " + shape_string(n.shape) + ", got " +
                       shape_string(it->second.shape()));
    }
    n.value = it->second;
    check_finite(id, n.value, "input");
    return;
  }

  if (n.value.shape() != n.shape) n.value = Tensor(n.shape, 0.0);
  Tensor& out = n.value;

  switch (n.op) {
    case Op::MatMul: {
      const Tensor& a = arg(n, 0);
      const Tensor& b = arg(n, 1);
      const std::size_t m = a.shape()[0], k = a.shape()[1], c = b.shape()[1];
      out.fill(0.0);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a[i * k + p];
          for (std::size_t j = 0; j < c; ++j) out[i * c + j] += av * b[p * c + j];
        }
      }
      break;
    }
    case Op::MatMulBT: {
      const Tensor& a = arg(n, 0);
      const Tensor& b = arg(n, 1);
      const std::size_t m = a.shape()[0], k = a.shape()[1], c = b.shape()[0];
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          double s = 0.0;
          for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
          out[i * c + j] = s;
        }
      }
      break;
    }
    case Op::MatVec: {
      const Tensor& a = arg(n, 0);
      const Tensor& x = arg(n, 1);
      const std::size_t m = a.shape()[0], k = a.shape()[1];
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        const double* ar = a.data().data() + i * k;
        for (std::size_t j = 0; j < k; ++j) s += ar[j] * x[j];
        out[i] = s;
      }
      break;
    }
    case Op::MatTVec: {
      const Tensor& a = arg(n, 0);
      const Tensor& x = arg(n, 1);
      const std::size_t m = a.shape()[0], k = a.shape()[1];
      out.fill(0.0);
      for (std::size_t i = 0; i < m; ++i) {
        const double xi = x[i];
        const double* ar = a.data().data() + i * k;
        for (std::size_t j = 0; j < k; ++j) out[j] += ar[j] * xi;
      }
      break;
    }
    case Op::Add: {
      const Tensor& a = arg(n, 0);
      const Tensor& b = arg(n, 1);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
      break;
    }
    case Op::Mul: {
      const Tensor& a = arg(n, 0);
      const Tensor& b = arg(n, 1);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
      break;
    }
    case Op::Scale: {
      const Tensor& a = arg(n, 0);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = n.factor * a[i];
      break;
    }
    case Op::Tanh: {
      const Tensor& a = arg(n, 0);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a[i]);
      break;
    }
    case Op::Softmax: softmax_rows(arg(n, 0), out, false); break;
    case Op::LogSoftmax: softmax_rows(arg(n, 0), out, true); break;
    case Op::Row: {
      const Tensor& t = arg(n, 0);
      const std::size_t d = t.shape()[1];
      std::copy_n(t.data().data() + n.index * d, d, out.data().data());
      break;
    }
    case Op::Rows: {
      const Tensor& t = arg(n, 0);
      const std::size_t d = t.shape()[1];
      for (std::size_t r = 0; r < n.indices.size(); ++r) {
        std::copy_n(t.data().data() + n.indices[r] * d, d, out.data().data() + r * d);
      }
      break;
    }
    case Op::MeanRows: {
      const Tensor& a = arg(n, 0);
      const std::size_t rows = a.shape()[0], d = a.shape()[1];
      out.fill(0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) out[j] += a[r * d + j];
      }
      for (std::size_t j = 0; j < d; ++j) out[j] /= static_cast<double>(rows);
      break;
    }
    case Op::Dropout: {
      const Tensor& a = arg(n, 0);
      if (!mode_.dropout_active()) {
        n.indices.clear();
        out = a;
        break;
      }
      // Mask stored as kept/dropped flags in `indices` (1 = kept).
      const double p = mode_.dropout;
      const double keep_scale = 1.0 / (1.0 - p);
      const std::uint64_t key = dropout_key(rng_, id);
      n.indices.assign(a.size(), 0);
      for (std::size_t i = 0; i < a.size(); ++i) {
        const bool keep = uniform01(rng_.seed, key + i) >= p;
        n.indices[i] = keep ? 1 : 0;
        out[i] = keep ? a[i] * keep_scale : 0.0;
      }
      break;
    }
    case Op::Gather: out[0] = arg(n, 0)[n.index]; break;
    case Op::Sum: {
      const Tensor& a = arg(n, 0);
      double s = 0.0;
      for (double v : a.values()) s += v;
      out[0] = s;
      break;
    }
    case Op::LogSumExp: {
      const Tensor& a = arg(n, 0);
      double mx = -std::numeric_limits<double>::infinity();
      for (double v : a.values()) mx = std::max(mx, v);
      double s = 0.0;
      for (double v : a.values()) s += std::exp(v - mx);
      out[0] = mx + std::log(s);
      break;
    }
    case Op::Concat: {
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.in.size(); ++k) {
        const Tensor& a = arg(n, k);
        std::copy(a.values().begin(), a.values().end(), out.values().begin() + static_cast<long>(off));
        off += a.size();
      }
      break;
    }
    case Op::StackRows: {
      const std::size_t d = n.shape[1];
      for (std::size_t k = 0; k < n.in.size(); ++k) {
        const Tensor& a = arg(n, k);
        std::copy_n(a.data().data(), d, out.data().data() + k * d);
      }
      break;
    }
    case Op::Parameter:
    case Op::Input:
    case Op::Constant: break;
  }
  check_finite(id, out, "forward value");
}

void Tape::forward(PassMode mode, RngState rng) {
  if (!has_run_ || !(mode == mode_) || !(rng == rng_)) {
    evaluated_ = 0;
    mode_ = mode;
    rng_ = rng;
    has_run_ = true;
  }
  const NodeId end = static_cast<NodeId>(nodes_.size());
  for (NodeId id = evaluated_; id < end; ++id) {
    evaluate(id);
    evaluated_ = id + 1;
  }
}

std::map<std::string, Tensor> Tape::forward(const std::map<std::string, Tensor>& inputs,
                                            PassMode mode, RngState rng) {
  inputs_ = inputs;
  has_run_ = false;
  forward(mode, rng);
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : outputs_) out.emplace(name, value(id));
  return out;
}

void Tape::replay() {
  if (!has_run_) throw UsageError("replay before forward");
  evaluated_ = 0;
  forward(mode_, rng_);
}

// ---------------------------------------------------------------------------
// Backward

Gradients Tape::backward(NodeId output) const {
  const Tensor& v = value(output);
  if (v.size() != 1) throw UsageError("backward without output_grad needs a scalar output");
  return backward(output, Tensor::scalar(1.0));
}

Gradients Tape::backward(NodeId output, const Tensor& output_grad) const {
  Gradients g(params_ ? *params_ : ParameterStore{});
  backward_into(output, output_grad, 1.0, g);
  return g;
}

void Tape::backward_into(NodeId output, const Tensor& output_grad, double weight,
                         Gradients& grads, std::map<std::string, Tensor>* input_grads) const {
  if (!evaluated(output)) throw UsageError("backward before forward");
  if (output_grad.shape() != node(output).shape) {
    throw ShapeError("backward: output_grad " + shape_string(output_grad.shape()) +
                     " does not match output " + shape_string(node(output).shape));
  }

  const std::size_t count = static_cast<std::size_t>(output) + 1;
  std::vector<Tensor> g(count);
  g[static_cast<std::size_t>(output)] = output_grad;

  auto acc = [&](NodeId id) -> Tensor& {
    Tensor& t = g[static_cast<std::size_t>(id)];
    if (t.empty()) t = Tensor(nodes_[static_cast<std::size_t>(id)].shape, 0.0);
    return t;
  };
  auto wants = [&](NodeId id) {
    const Op o = nodes_[static_cast<std::size_t>(id)].op;
    return o != Op::Constant;
  };

  for (NodeId id = output; id >= 0; --id) {
    Tensor& gy = g[static_cast<std::size_t>(id)];
    if (gy.empty()) continue;
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    switch (n.op) {
      case Op::Parameter: {
        Tensor& dst = grads.ensure(n.index, n.shape);
        for (std::size_t i = 0; i < gy.size(); ++i) dst[i] += weight * gy[i];
        break;
      }
      case Op::Input: {
        if (input_grads) {
          auto [it, fresh] = input_grads->try_emplace(n.name, n.shape, 0.0);
          for (std::size_t i = 0; i < gy.size(); ++i) it->second[i] += weight * gy[i];
        }
        break;
      }
      case Op::Constant: break;
      case Op::MatMul: {
        const Tensor& a = arg(n, 0);
        const Tensor& b = arg(n, 1);
        const std::size_t m = a.shape()[0], k = a.shape()[1], c = b.shape()[1];
        if (wants(n.in[0])) {
          Tensor& ga = acc(n.in[0]);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < c; ++j) s += gy[i * c + j] * b[p * c + j];
              ga[i * k + p] += s;
            }
        }
        if (wants(n.in[1])) {
          Tensor& gb = acc(n.in[1]);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double av = a[i * k + p];
              for (std::size_t j = 0; j < c; ++j) gb[p * c + j] += av * gy[i * c + j];
            }
        }
        break;
      }
      case Op::MatMulBT: {
        const Tensor& a = arg(n, 0);
        const Tensor& b = arg(n, 1);
        const std::size_t m = a.shape()[0], k = a.shape()[1], c = b.shape()[0];
        const bool want_a = wants(n.in[0]);
        const bool want_b = wants(n.in[1]);
        Tensor* ga = want_a ? &acc(n.in[0]) : nullptr;
        Tensor* gb = want_b ? &acc(n.in[1]) : nullptr;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            const double gij = gy[i * c + j];
            if (gij == 0.0) continue;
            for (std::size_t p = 0; p < k; ++p) {
              if (ga) (*ga)[i * k + p] += gij * b[j * k + p];
              if (gb) (*gb)[j * k + p] += gij * a[i * k + p];
            }
          }
        break;
      }
      case Op::MatVec: {
        const Tensor& a = arg(n, 0);
        const Tensor& x = arg(n, 1);
        const std::size_t m = a.shape()[0], k = a.shape()[1];
        const bool want_a = wants(n.in[0]);
        const bool want_x = wants(n.in[1]);
        Tensor* ga = want_a ? &acc(n.in[0]) : nullptr;
        Tensor* gx = want_x ? &acc(n.in[1]) : nullptr;
        for (std::size_t i = 0; i < m; ++i) {
          const double gi = gy[i];
          if (gi == 0.0) continue;
          const double* ar = a.data().data() + i * k;
          if (ga) {
            double* gar = ga->data().data() + i * k;
            for (std::size_t j = 0; j < k; ++j) gar[j] += gi * x[j];
          }
          if (gx) {
            for (std::size_t j = 0; j < k; ++j) (*gx)[j] += gi * ar[j];
          }
        }
        break;
      }
      case Op::MatTVec: {
        const Tensor& a = arg(n, 0);
        const Tensor& x = arg(n, 1);
        const std::size_t m = a.shape()[0], k = a.shape()[1];
        const bool want_a = wants(n.in[0]);
        const bool want_x = wants(n.in[1]);
        Tensor* ga = want_a ? &acc(n.in[0]) : nullptr;
        Tensor* gx = want_x ? &acc(n.in[1]) : nullptr;
        for (std::size_t i = 0; i < m; ++i) {
          const double* ar = a.data().data() + i * k;
          if (ga) {
            double* gar = ga->data().data() + i * k;
            for (std::size_t j = 0; j < k; ++j) gar[j] += x[i] * gy[j];
          }
          if (gx) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += ar[j] * gy[j];
            (*gx)[i] += s;
          }
        }
        break;
      }
      case Op::Add: {
        for (std::size_t k = 0; k < 2; ++k) {
          if (!wants(n.in[k])) continue;
          Tensor& ga = acc(n.in[k]);
          for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
        }
        break;
      }
      case Op::Mul: {
        const Tensor& a = arg(n, 0);
        const Tensor& b = arg(n, 1);
        if (wants(n.in[0])) {
          Tensor& ga = acc(n.in[0]);
          for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * b[i];
        }
        if (wants(n.in[1])) {
          Tensor& gb = acc(n.in[1]);
          for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * a[i];
        }
        break;
      }
      case Op::Scale: {
        if (!wants(n.in[0])) break;
        Tensor& ga = acc(n.in[0]);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += n.factor * gy[i];
        break;
      }
      case Op::Tanh: {
        if (!wants(n.in[0])) break;
        Tensor& ga = acc(n.in[0]);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * (1.0 - n.value[i] * n.value[i]);
        break;
      }
      case Op::Softmax:
      case Op::LogSoftmax: {
        if (!wants(n.in[0])) break;
        Tensor& ga = acc(n.in[0]);
        const std::size_t rows = n.shape.size() == 1 ? 1 : n.shape[0];
        const std::size_t cols = n.shape.size() == 1 ? n.shape[0] : n.shape[1];
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = n.value.data().data() + r * cols;
          const double* gr = gy.data().data() + r * cols;
          double* gar = ga.data().data() + r * cols;
          if (n.op == Op::Softmax) {
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * y[c];
            for (std::size_t c = 0; c < cols; ++c) gar[c] += y[c] * (gr[c] - dot);
          } else {
            double total = 0.0;
            for (std::size_t c = 0; c < cols; ++c) total += gr[c];
            for (std::size_t c = 0; c < cols; ++c) gar[c] += gr[c] - std::exp(y[c]) * total;
          }
        }
        break;
      }
      case Op::Row: {
        if (!wants(n.in[0])) break;
        Tensor& ga = acc(n.in[0]);
        const std::size_t d = n.shape[0];
        for (std::size_t j = 0; j < d; ++j) ga[n.index * d + j] += gy[j];
        break;
      }
      case Op::Rows: {
        if (!wants(n.in[0])) break;
        Tensor& ga = acc(n.in[0]);
        const std::size_t d = n.shape[1];
        for (std::size_t r = 0; r < n.indices.size(); ++r)
          for (std::size_t j = 0; j < d; ++j) ga[n.indices[r] * d + j] += gy[r * d + j];
        break;
      }
      case Op::MeanRows: {
        if (!wants(n.in[0])) break;
        Tensor& ga = acc(n.in[0]);
        const std::size_t rows = ga.shape()[0], d = ga.shape()[1];
        const double inv = 1.0 / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) ga[r * d + j] += gy[j] * inv;
        break;
      }
      case Op::Dropout: {
        if (!wants(n.in[0])) break;
        Tensor& ga = acc(n.in[0]);
        if (n.indices.empty()) {
          for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
        } else {
          const double keep_scale = 1.0 / (1.0 - mode_.dropout);
          for (std::size_t i = 0; i < gy.size(); ++i) {
            if (n.indices[i]) ga[i] += gy[i] * keep_scale;
          }
        }
        break;
      }
      case Op::Gather: {
        if (!wants(n.in[0])) break;
        acc(n.in[0])[n.index] += gy[0];
        break;
      }
      case Op::Sum: {
        if (!wants(n.in[0])) break;
        Tensor& ga = acc(n.in[0]);
        for (double& v : ga.values()) v += gy[0];
        break;
      }
      case Op::LogSumExp: {
        if (!wants(n.in[0])) break;
        const Tensor& a = arg(n, 0);
        Tensor& ga = acc(n.in[0]);
        const double lse = n.value[0];
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += gy[0] * std::exp(a[i] - lse);
        break;
      }
      case Op::Concat: {
        std::size_t off = 0;
        for (NodeId src : n.in) {
          const std::size_t len = nodes_[static_cast<std::size_t>(src)].shape[0];
          if (wants(src)) {
            Tensor& ga = acc(src);
            for (std::size_t i = 0; i < len; ++i) ga[i] += gy[off + i];
          }
          off += len;
        }
        break;
      }
      case Op::StackRows: {
        const std::size_t d = n.shape[1];
        for (std::size_t k = 0; k < n.in.size(); ++k) {
          if (!wants(n.in[k])) continue;
          Tensor& ga = acc(n.in[k]);
          for (std::size_t j = 0; j < d; ++j) ga[j] += gy[k * d + j];
        }
        break;
      }
    }
    check_finite(id, gy, "gradient");
    // Free as we go; each node's gradient is complete once visited.
    gy = Tensor();
  }
}

// ---------------------------------------------------------------------------

double finite_difference_check(Tape& tape, ParameterStore& params, NodeId loss, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2)) {
    throw PreconditionError("finite_difference_check: epsilon must lie in (0, 1e-2], got " +
                            std::to_string(epsilon));
  }
  tape.forward(PassMode::eval(), RngState{});
  if (tape.value(loss).size() != 1) throw UsageError("finite_difference_check: loss must be scalar");
  const Gradients analytic = tape.backward(loss);

  auto eval_at = [&](double& slot, double v) {
    slot = v;
    tape.replay();
    return tape.scalar(loss);
  };

  double worst = 0.0;
  for (std::size_t p : tape.parameters_used()) {
    Tensor& value = params.value(p);
    const Tensor grad = analytic.dense(p, value.shape());
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = value[i];
      const double fp1 = eval_at(value[i], orig + epsilon);
      const double fm1 = eval_at(value[i], orig - epsilon);
      const double fp2 = eval_at(value[i], orig + 2.0 * epsilon);
      const double fm2 = eval_at(value[i], orig - 2.0 * epsilon);
      value[i] = orig;
      const double numeric = (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * epsilon);
      const double a = grad[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  tape.replay();
  return worst;
}

}  // namespace mixmt::ad
