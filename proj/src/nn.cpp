// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "smtl/nn.hpp"

#include <cmath>

#include "smtl/error.hpp"
#include "smtl/rng.hpp"

namespace smtl::nn {

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kRowSoftmax: return "row_softmax";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  for (auto a : {Activation::kIdentity, Activation::kRelu, Activation::kTanh, Activation::kSigmoid,
                 Activation::kRowSoftmax}) {
    if (activation_name(a) == name) return a;
  }
  throw InvalidArgument("unknown activation '" + std::string(name) + "'");
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw InvalidArgument("MLP needs at least one layer");
  for (auto w : widths) {
    if (w == 0) throw InvalidArgument("MLP widths must be positive");
  }
  if (hidden.size() + 2 != widths.size()) {
    throw InvalidArgument("MLP needs one activation per hidden layer: " + std::to_string(widths.size() - 2) +
                          " expected, " + std::to_string(hidden.size()) + " given");
  }
}

std::string weight_path(std::string_view prefix, std::size_t layer) {
  return std::string(prefix) + ".layer" + std::to_string(layer) + ".W";
}

std::string bias_path(std::string_view prefix, std::size_t layer) {
  return std::string(prefix) + ".layer" + std::to_string(layer) + ".b";
}

ParamStore init_params(const MlpSpec& spec, std::string_view prefix, std::uint64_t seed) {
  spec.validate();
  ParamStore store;
  for (std::size_t i = 0; i < spec.layer_count(); ++i) {
    const auto [in, out] = spec.layer(i);
    const double gain = spec.activation_after(i) == Activation::kRelu ? 6.0 : 3.0;
    const double bound = std::sqrt(gain / static_cast<double>(in));
    const std::string wp = weight_path(prefix, i);
    Rng rng(derive_seed(seed, wp));
    Tensor w(Shape{out, in});
    for (auto& v : w.data()) v = rng.uniform(-bound, bound);
    store.set(wp, std::move(w));
    store.set(bias_path(prefix, i), Tensor(Shape{out}, 0.0));
  }
  return store;
}

Bindings::Bindings(Tape& tape, const ParamStore& store, Predicate trainable)
    : tape_(&tape), store_(&store), trainable_(std::move(trainable)) {}

Var Bindings::param(std::string_view path) {
  if (auto it = bound_.find(path); it != bound_.end()) return it->second;
  const Tensor& value = store_->at(path);
  const bool train = !trainable_ || trainable_(path);
  Var v = train ? tape_->leaf(std::string(path), value) : tape_->constant(value);
  bound_.emplace(std::string(path), v);
  return v;
}

Var apply_activation(Tape& tape, Var x, Activation a) {
  switch (a) {
    case Activation::kIdentity: return x;
    case Activation::kRelu: return tape.relu(x);
    case Activation::kTanh: return tape.tanh(x);
    case Activation::kSigmoid: return tape.sigmoid(x);
    case Activation::kRowSoftmax: return tape.row_softmax(x);
  }
  return x;
}

Var mlp_forward(Bindings& b, const MlpSpec& spec, std::string_view prefix, Var x) {
  Tape& tape = b.tape();
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 2 || xv.shape()[1] != spec.in_dim()) {
    throw ShapeError("MLP '" + std::string(prefix) + "' expects input width " +
                     std::to_string(spec.in_dim()) + ", got " + shape_str(xv.shape()));
  }
  Var h = x;
  for (std::size_t i = 0; i < spec.layer_count(); ++i) {
    Var w = b.param(weight_path(prefix, i));
    Var bias = b.param(bias_path(prefix, i));
    const Tensor& wv = tape.value(w);
    if (wv.rank() != 2 || wv.shape()[1] != tape.value(h).shape()[1]) {
      throw ShapeError("layer " + weight_path(prefix, i) + " has shape " + shape_str(wv.shape()) +
                       ", incompatible with input " + shape_str(tape.value(h).shape()));
    }
    h = tape.add(tape.matmul_t(h, w), bias);
    h = apply_activation(tape, h, spec.activation_after(i));
  }
  return h;
}

Tensor mlp_apply(const ParamStore& store, const MlpSpec& spec, std::string_view prefix,
                 const Tensor& x) {
  Tape tape;
  Bindings b(tape, store, [](std::string_view) { return false; });
  return tape.value(mlp_forward(b, spec, prefix, tape.constant(x)));
}

}  // namespace smtl::nn
