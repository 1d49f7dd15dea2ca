// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "smtl/tape.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "smtl/error.hpp"

namespace smtl {
namespace {

std::size_t arity_of(Op op) {
  switch (op) {
    case Op::kLeaf:
    case Op::kConstant:
      return 0;
    case Op::kMatMul:
    case Op::kMatMulT:
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
      return 2;
    case Op::kConvexCombine:
      return 3;
    default:
      return 1;
  }
}

// True when `b` broadcasts over the leading dimension of `a`.
bool batch_broadcast(const Shape& a, const Shape& b) {
  return a.size() >= 2 && b.size() + 1 == a.size() && std::equal(b.begin(), b.end(), a.begin() + 1);
}

void check_elementwise(Op op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape() || batch_broadcast(a.shape(), b.shape())) return;
  throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " + shape_str(a.shape()) +
                   " and " + shape_str(b.shape()));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <class F>
Tensor map_unary(const Tensor& a, F f) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return Tensor(a.shape(), std::move(out));
}

template <class F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  std::vector<double> out(a.size());
  const std::size_t nb = b.size();
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i % nb]);
  return Tensor(a.shape(), std::move(out));
}

// Reduces a gradient shaped like `a` down to the (possibly broadcast) shape of `b`.
Tensor reduce_to(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor out(target);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < g.size(); ++i) out[i % n] += g[i];
  return out;
}

Tensor matmul_nn(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  Tensor out(Shape{n, m});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = po + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

// a^T b for a [k,n], b [k,m].
Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  const std::size_t k = a.shape()[0], n = a.shape()[1], m = b.shape()[1];
  Tensor out(Shape{n, m});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = pa + p * n;
    const double* brow = pb + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double av = arow[i];
      double* orow = po + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

// a b^T for a [n,m], b [k,m].
Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.shape()[0], m = a.shape()[1], k = b.shape()[0];
  Tensor out(Shape{n, k});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < m; ++p) s += pa[i * m + p] * pb[j * m + p];
      po[i * k + j] = s;
    }
  }
  return out;
}

Tensor row_softmax(const Tensor& a) {
  const std::size_t width = a.shape().empty() ? 1 : a.shape().back();
  const std::size_t rows = a.size() / width;
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = a.data().data() + r * width;
    double* o = out.data() + r * width;
    const double mx = *std::max_element(in, in + width);
    double s = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      o[j] = std::exp(in[j] - mx);
      s += o[j];
    }
    for (std::size_t j = 0; j < width; ++j) o[j] /= s;
  }
  return Tensor(a.shape(), std::move(out));
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConstant: return "constant";
    case Op::kMatMul: return "matmul";
    case Op::kMatMulT: return "matmul_t";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kRelu: return "relu";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kRowSoftmax: return "row_softmax";
    case Op::kReduceSum: return "reduce_sum";
    case Op::kReduceMean: return "reduce_mean";
    case Op::kConvexCombine: return "convex_combine";
    case Op::kStraightThrough: return "straight_through";
  }
  return "?";
}

Tensor primitive_forward(Op op, std::span<const Tensor* const> in, double scalar) {
  if (in.size() != arity_of(op) || op == Op::kLeaf || op == Op::kConstant) {
    throw InvalidArgument(std::string(op_name(op)) + ": wrong number of inputs");
  }
  Tensor out;
  switch (op) {
    case Op::kMatMul:
      out = matmul_nn(*in[0], *in[1]);
      break;
    case Op::kMatMulT:
      if (in[0]->rank() != 2 || in[1]->rank() != 2 || in[0]->shape()[1] != in[1]->shape()[1]) {
        throw ShapeError("matmul_t: incompatible shapes " + shape_str(in[0]->shape()) + " and " +
                         shape_str(in[1]->shape()));
      }
      out = matmul_nt(*in[0], *in[1]);
      break;
    case Op::kAdd:
      check_elementwise(op, *in[0], *in[1]);
      out = map_binary(*in[0], *in[1], [](double x, double y) { return x + y; });
      break;
    case Op::kSub:
      check_elementwise(op, *in[0], *in[1]);
      out = map_binary(*in[0], *in[1], [](double x, double y) { return x - y; });
      break;
    case Op::kMul:
      check_elementwise(op, *in[0], *in[1]);
      out = map_binary(*in[0], *in[1], [](double x, double y) { return x * y; });
      break;
    case Op::kScale:
      out = map_unary(*in[0], [scalar](double x) { return scalar * x; });
      break;
    case Op::kRelu:
      out = map_unary(*in[0], [](double x) { return x > 0.0 ? x : 0.0; });
      break;
    case Op::kTanh:
      out = map_unary(*in[0], [](double x) { return std::tanh(x); });
      break;
    case Op::kSigmoid:
      out = map_unary(*in[0], stable_sigmoid);
      break;
    case Op::kExp:
      out = map_unary(*in[0], [](double x) { return std::exp(x); });
      break;
    case Op::kLog:
      for (double v : in[0]->data()) {
        if (!(v > 0.0)) throw NumericError("log of non-positive value " + std::to_string(v));
      }
      out = map_unary(*in[0], [](double x) { return std::log(x); });
      break;
    case Op::kRowSoftmax:
      out = row_softmax(*in[0]);
      break;
    case Op::kReduceSum: {
      double s = 0.0;
      for (double v : in[0]->data()) s += v;
      out = Tensor::scalar(s);
      break;
    }
    case Op::kReduceMean: {
      double s = 0.0;
      for (double v : in[0]->data()) s += v;
      out = Tensor::scalar(s / static_cast<double>(in[0]->size()));
      break;
    }
    case Op::kConvexCombine: {
      const Tensor& alpha = *in[0];
      if (!alpha.is_scalar()) {
        throw ShapeError("convex_combine: alpha must be a scalar, got " + shape_str(alpha.shape()));
      }
      if (in[1]->shape() != in[2]->shape()) {
        throw ShapeError("convex_combine: incompatible shapes " + shape_str(in[1]->shape()) +
                         " and " + shape_str(in[2]->shape()));
      }
      const double a = alpha[0];
      // Endpoints select a branch exactly (no 0 * v residue, no signed-zero flips).
      if (a == 1.0) {
        out = *in[1];
        break;
      }
      if (a == 0.0) {
        out = *in[2];
        break;
      }
      out = map_binary(*in[1], *in[2], [a](double u, double v) { return a * u + (1.0 - a) * v; });
      break;
    }
    case Op::kStraightThrough:
      if (!in[0]->is_scalar()) throw ShapeError("straight_through expects a scalar surrogate");
      out = Tensor::scalar(scalar);
      break;
    default:
      throw InvalidArgument("unsupported primitive");
  }
  if (!out.all_finite()) {
    throw NumericError(std::string(op_name(op)) + ": non-finite output");
  }
  return out;
}

Var Tape::leaf(std::string id, Tensor value) {
  if (leaves_.contains(id)) throw InvalidArgument("duplicate leaf id '" + id + "'");
  if (!value.all_finite()) throw NumericError("leaf '" + id + "' holds non-finite values");
  Node n{Op::kLeaf};
  n.value = std::move(value);
  n.leaf_id = id;
  nodes_.push_back(std::move(n));
  leaves_.emplace(std::move(id), nodes_.size() - 1);
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant holds non-finite values");
  Node n{Op::kConstant};
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::apply(Op op, std::span<const Var> inputs, double scalar) {
  if (consumed_) throw InvalidArgument("tape already consumed by backward()");
  const Tensor* vals[3] = {nullptr, nullptr, nullptr};
  if (inputs.size() > 3) throw InvalidArgument("too many inputs");
  for (std::size_t i = 0; i < inputs.size(); ++i) vals[i] = &node(inputs[i]).value;
  Tensor out = primitive_forward(op, std::span<const Tensor* const>(vals, inputs.size()), scalar);
  Node n{op};
  n.arity = static_cast<std::uint8_t>(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) n.parents[i] = inputs[i].id;
  n.scalar = scalar;
  n.value = std::move(out);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::convex_combine(Var alpha, Var u, Var v) {
  const Var in[3] = {alpha, u, v};
  return apply(Op::kConvexCombine, in);
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw InvalidArgument("invalid tape handle");
  return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

Op Tape::op(Var v) const { return node(v).op; }

GradMap Tape::backward(Var output) {
  if (consumed_) throw InvalidArgument("backward() called twice on one tape");
  const Node& out_node = node(output);
  if (out_node.value.size() != 1) {
    throw ShapeError("backward() needs a scalar output, got " + shape_str(out_node.value.shape()));
  }
  consumed_ = true;

  std::vector<std::optional<Tensor>> grads(nodes_.size());
  grads[output.id] = Tensor(out_node.value.shape(), 1.0);

  auto accumulate = [&](std::size_t id, Tensor g) {
    auto& slot = grads[id];
    if (!slot) {
      slot = std::move(g);
      return;
    }
    auto dst = slot->data();
    const auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  };

  for (std::size_t id = output.id + 1; id-- > 0;) {
    if (!grads[id]) continue;
    const Node& n = nodes_[id];
    if (n.op == Op::kLeaf || n.op == Op::kConstant) continue;
    const Tensor& g = *grads[id];
    const Tensor& y = n.value;
    const Tensor& a = nodes_[n.parents[0]].value;
    switch (n.op) {
      case Op::kMatMul: {
        const Tensor& b = nodes_[n.parents[1]].value;
        accumulate(n.parents[0], matmul_nt(g, b));
        accumulate(n.parents[1], matmul_tn(a, g));
        break;
      }
      case Op::kMatMulT: {
        const Tensor& b = nodes_[n.parents[1]].value;
        accumulate(n.parents[0], matmul_nn(g, b));
        accumulate(n.parents[1], matmul_tn(g, a));
        break;
      }
      case Op::kAdd:
        accumulate(n.parents[0], g);
        accumulate(n.parents[1], reduce_to(g, nodes_[n.parents[1]].value.shape()));
        break;
      case Op::kSub:
        accumulate(n.parents[0], g);
        accumulate(n.parents[1], reduce_to(map_unary(g, [](double x) { return -x; }),
                                           nodes_[n.parents[1]].value.shape()));
        break;
      case Op::kMul: {
        const Tensor& b = nodes_[n.parents[1]].value;
        accumulate(n.parents[0], map_binary(g, b, [](double x, double z) { return x * z; }));
        Tensor gb(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) gb[i] = g[i] * a[i];
        accumulate(n.parents[1], reduce_to(gb, b.shape()));
        break;
      }
      case Op::kScale: {
        const double c = n.scalar;
        accumulate(n.parents[0], map_unary(g, [c](double x) { return c * x; }));
        break;
      }
      case Op::kRelu:
        accumulate(n.parents[0], map_binary(g, a, [](double x, double z) { return z > 0.0 ? x : 0.0; }));
        break;
      case Op::kTanh:
        accumulate(n.parents[0], map_binary(g, y, [](double x, double t) { return x * (1.0 - t * t); }));
        break;
      case Op::kSigmoid:
        accumulate(n.parents[0], map_binary(g, y, [](double x, double s) { return x * s * (1.0 - s); }));
        break;
      case Op::kExp:
        accumulate(n.parents[0], map_binary(g, y, [](double x, double e) { return x * e; }));
        break;
      case Op::kLog:
        accumulate(n.parents[0], map_binary(g, a, [](double x, double z) { return x / z; }));
        break;
      case Op::kRowSoftmax: {
        const std::size_t width = y.shape().empty() ? 1 : y.shape().back();
        const std::size_t rows = y.size() / width;
        Tensor gx(y.shape());
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < width; ++j) dot += g[r * width + j] * y[r * width + j];
          for (std::size_t j = 0; j < width; ++j) {
            gx[r * width + j] = y[r * width + j] * (g[r * width + j] - dot);
          }
        }
        accumulate(n.parents[0], std::move(gx));
        break;
      }
      case Op::kReduceSum:
        accumulate(n.parents[0], Tensor(a.shape(), g[0]));
        break;
      case Op::kReduceMean:
        accumulate(n.parents[0], Tensor(a.shape(), g[0] / static_cast<double>(a.size())));
        break;
      case Op::kConvexCombine: {
        const double alpha = a[0];
        const Tensor& u = nodes_[n.parents[1]].value;
        const Tensor& v = nodes_[n.parents[2]].value;
        double dalpha = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) dalpha += g[i] * (u[i] - v[i]);
        accumulate(n.parents[0], Tensor(a.shape(), dalpha));
        accumulate(n.parents[1], map_unary(g, [alpha](double x) { return alpha * x; }));
        accumulate(n.parents[2], map_unary(g, [alpha](double x) { return (1.0 - alpha) * x; }));
        break;
      }
      case Op::kStraightThrough:
        accumulate(n.parents[0], Tensor(a.shape(), g[0]));
        break;
      default:
        break;
    }
  }

  GradMap out;
  for (const auto& [id, idx] : leaves_) {
    auto& g = grads[idx];
    out.emplace(id, g ? std::move(*g) : Tensor(nodes_[idx].value.shape(), 0.0));
  }
  return out;
}

}  // namespace smtl
