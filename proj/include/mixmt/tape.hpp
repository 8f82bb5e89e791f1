// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

// Minimal reverse-mode automatic differentiation.
//
// A Tape is built by recording primitive ops; shapes are checked at record
// time. forward() evaluates every node not yet evaluated, so a tape can be
// extended and re-run incrementally (used by the decoders). Parameters are
// read from a ParameterStore at evaluation time, so perturbing a parameter and
// calling replay() re-evaluates the graph with the new value.
//
// Dropout masks are a pure function of (RngState, node id, element index),
// which makes replays bit-identical and lets backward reuse the exact masks.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mixmt/rng.hpp"
#include "mixmt/tensor.hpp"

namespace mixmt::ad {

struct PassMode {
  enum class Kind { Eval, TrainWithDropout };

  Kind kind = Kind::Eval;
  double dropout = 0.0;

  static PassMode eval() { return {}; }
  static PassMode train(double p);

  bool dropout_active() const { return kind == Kind::TrainWithDropout && dropout > 0.0; }

  friend bool operator==(const PassMode&, const PassMode&) = default;
};

// Named, ordered collection of trainable tensors (theta).
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor value);
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index(std::string_view name) const;

  std::size_t size() const { return values_.size(); }
  std::size_t num_scalars() const;
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& value(std::size_t i) { return values_[i]; }
  const Tensor& value(std::size_t i) const { return values_[i]; }
  Tensor& value(std::string_view name) { return values_[index(name)]; }
  const Tensor& value(std::string_view name) const { return values_[index(name)]; }

  friend bool operator==(const ParameterStore&, const ParameterStore&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::map<std::string, std::size_t, std::less<>> lookup_;
};

// Per-parameter gradient buffers; untouched parameters hold an empty tensor
// and count as zero.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterStore& params);

  std::size_t size() const { return grads_.size(); }
  bool touched(std::size_t i) const { return !grads_[i].empty(); }
  const Tensor& get(std::size_t i) const { return grads_[i]; }
  Tensor& ensure(std::size_t i, const Shape& shape);
  // Dense copy of gradient i (zeros when untouched).
  Tensor dense(std::size_t i, const Shape& shape) const;

  void add_scaled(const Gradients& other, double weight);
  void scale(double factor);
  void clear();

 private:
  std::vector<Tensor> grads_;
};

using NodeId = int;

enum class Op {
  Parameter,
  Input,
  Constant,
  MatMul,
  MatMulBT,
  MatVec,
  MatTVec,
  Add,
  Mul,
  Scale,
  Tanh,
  Softmax,
  LogSoftmax,
  Row,
  Rows,
  MeanRows,
  Dropout,
  Gather,
  Sum,
  LogSumExp,
  Concat,
  StackRows,
};

std::string_view op_name(Op op);

class Tape {
 public:
  explicit Tape(const ParameterStore* params = nullptr) : params_(params) {}

  // Leaves.
  NodeId parameter(std::size_t index);
  NodeId parameter(std::string_view name);
  NodeId input(std::string name, Shape shape);
  NodeId constant(Tensor value);

  // Linear algebra.
  NodeId matmul(NodeId a, NodeId b);      // [m,k] x [k,n] -> [m,n]
  NodeId matmul_bt(NodeId a, NodeId b);   // [m,k] x [n,k]^T -> [m,n]
  NodeId matvec(NodeId a, NodeId x);      // [m,n] x [n] -> [m]
  NodeId mattvec(NodeId a, NodeId x);     // [m,n]^T x [m] -> [n]

  // Elementwise and reductions.
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId tanh(NodeId a);
  NodeId softmax(NodeId a);       // rank 1, or row-wise on rank 2
  NodeId log_softmax(NodeId a);   // rank 1, or row-wise on rank 2
  NodeId sum(NodeId a);           // -> [1]
  NodeId logsumexp(NodeId a);     // rank 1 -> [1]
  NodeId gather(NodeId a, std::size_t index);  // -> [1]

  // Indexing and reshaping.
  NodeId row(NodeId table, std::size_t index);                 // [V,d] -> [d]
  NodeId rows(NodeId table, std::vector<std::size_t> indices);  // [V,d] -> [n,d]
  NodeId mean_rows(NodeId a);                                   // [n,d] -> [d]
  NodeId concat(std::vector<NodeId> parts);                     // rank-1 parts
  NodeId stack_rows(std::vector<NodeId> parts);                 // n x [d] -> [n,d]

  // Inverted dropout site; identity in Eval mode.
  NodeId dropout(NodeId a);

  // Named outputs returned by forward(inputs, ...).
  void mark_output(std::string name, NodeId node);

  // Evaluate pending nodes. A change of mode or RNG state re-evaluates the
  // whole tape; otherwise only nodes appended since the last call run.
  void forward(PassMode mode, RngState rng);
  // Bind named inputs and evaluate the whole tape; returns marked outputs.
  std::map<std::string, Tensor> forward(const std::map<std::string, Tensor>& inputs,
                                        PassMode mode, RngState rng);
  // Re-evaluate every node with the last mode, RNG state and inputs.
  void replay();

  bool evaluated(NodeId id) const { return id >= 0 && id < evaluated_; }
  const Tensor& value(NodeId id) const;
  double scalar(NodeId id) const;
  const PassMode& mode() const { return mode_; }
  std::size_t size() const { return nodes_.size(); }
  Op op(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].op; }
  const Shape& shape(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].shape; }
  // Parameter indices referenced by this tape, in first-use order.
  std::vector<std::size_t> parameters_used() const;

  // Reverse pass from a scalar output (seed gradient 1).
  Gradients backward(NodeId output) const;
  // Reverse pass with an explicit output gradient.
  Gradients backward(NodeId output, const Tensor& output_grad) const;
  // Accumulate weight * d(output)/d(theta) into grads. When input_grads is
  // given, gradients w.r.t. Input nodes are stored there by name.
  void backward_into(NodeId output, const Tensor& output_grad, double weight,
                     Gradients& grads,
                     std::map<std::string, Tensor>* input_grads = nullptr) const;

 private:
  struct Node {
    Node(Op o, std::vector<NodeId> inputs, Shape s, Tensor v = {})
        : op(o), in(std::move(inputs)), shape(std::move(s)), value(std::move(v)) {}

    Op op;
    std::vector<NodeId> in;
    Shape shape;
    Tensor value;                      // unused for Parameter nodes
    std::size_t index = 0;             // Parameter / Row / Gather
    std::vector<std::size_t> indices;  // Rows
    double factor = 1.0;               // Scale
    std::string name;                  // Input
  };

  NodeId push(Node node);
  const Node& node(NodeId id) const;
  const Tensor& arg(const Node& n, std::size_t k) const;
  void evaluate(NodeId id);
  void check_finite(NodeId id, const Tensor& t, const char* phase) const;

  const ParameterStore* params_;
  std::vector<Node> nodes_;
  std::unordered_map<std::size_t, NodeId> param_nodes_;
  std::map<std::string, Tensor> inputs_;
  std::map<std::string, NodeId> outputs_;
  NodeId evaluated_ = 0;
  bool has_run_ = false;
  PassMode mode_;
  RngState rng_;
};

// Max over all parameter elements used by the tape of
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8), where numeric is a
// fourth-order central difference with step epsilon. Runs in Eval mode and
// restores every parameter afterwards. epsilon must lie in (0, 1e-2].
double finite_difference_check(Tape& tape, ParameterStore& params, NodeId loss,
                               double epsilon);

}  // namespace mixmt::ad
