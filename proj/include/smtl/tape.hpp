// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smtl/tensor.hpp"

namespace smtl {

/// Primitive set understood by the tape.
enum class Op : std::uint8_t {
  kLeaf,
  kConstant,
  kMatMul,
  kMatMulT,  // a b^T
  kAdd,
  kSub,
  kMul,
  kScale,
  kRelu,
  kTanh,
  kSigmoid,
  kExp,
  kLog,
  kRowSoftmax,
  kReduceSum,
  kReduceMean,
  kConvexCombine,
  // Forward value is substituted; the gradient flows to the single parent.
  kStraightThrough,
};

std::string_view op_name(Op op);

/// Handle to a node on a Tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const noexcept { return id != kNone; }
};

/// Leaf id -> gradient, shaped like the leaf.
using GradMap = std::map<std::string, Tensor>;

/// Evaluates one primitive without recording it. `scalar` is the factor for
/// kScale and the substituted value for kStraightThrough.
///
/// Elementwise binary ops accept equal shapes, or a second operand that
/// matches the first with its leading (batch) dimension dropped.
Tensor primitive_forward(Op op, std::span<const Tensor* const> inputs, double scalar = 1.0);

/// Reverse-mode tape. Nodes are appended in topological order; a tape
/// supports exactly one backward pass and is confined to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var leaf(std::string id, Tensor value);
  Var constant(Tensor value);
  Var apply(Op op, std::span<const Var> inputs, double scalar = 1.0);

  Var matmul(Var a, Var b) { return apply2(Op::kMatMul, a, b); }
  Var matmul_t(Var a, Var b) { return apply2(Op::kMatMulT, a, b); }
  Var add(Var a, Var b) { return apply2(Op::kAdd, a, b); }
  Var sub(Var a, Var b) { return apply2(Op::kSub, a, b); }
  Var mul(Var a, Var b) { return apply2(Op::kMul, a, b); }
  Var scale(Var a, double c) { return apply1(Op::kScale, a, c); }
  Var relu(Var a) { return apply1(Op::kRelu, a); }
  Var tanh(Var a) { return apply1(Op::kTanh, a); }
  Var sigmoid(Var a) { return apply1(Op::kSigmoid, a); }
  Var exp(Var a) { return apply1(Op::kExp, a); }
  Var log(Var a) { return apply1(Op::kLog, a); }
  Var row_softmax(Var a) { return apply1(Op::kRowSoftmax, a); }
  Var reduce_sum(Var a) { return apply1(Op::kReduceSum, a); }
  Var reduce_mean(Var a) { return apply1(Op::kReduceMean, a); }
  Var convex_combine(Var alpha, Var u, Var v);
  Var straight_through(double forward_value, Var surrogate) {
    return apply1(Op::kStraightThrough, surrogate, forward_value);
  }

  const Tensor& value(Var v) const;
  Op op(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  bool has_leaf(const std::string& id) const { return leaves_.contains(id); }
  bool consumed() const noexcept { return consumed_; }

  /// d(output)/d(leaf) for every leaf on the tape; leaves the output does not
  /// depend on map to zeros. `output` must hold a single element.
  GradMap backward(Var output);

 private:
  struct Node {
    Op op;
    std::uint8_t arity = 0;
    std::size_t parents[3] = {0, 0, 0};
    double scalar = 1.0;
    Tensor value;
    std::string leaf_id;
  };

  Var apply1(Op op, Var a, double scalar = 1.0) {
    const Var in[1] = {a};
    return apply(op, in, scalar);
  }
  Var apply2(Op op, Var a, Var b) {
    const Var in[2] = {a, b};
    return apply(op, in);
  }
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> leaves_;
  bool consumed_ = false;
};

}  // namespace smtl
