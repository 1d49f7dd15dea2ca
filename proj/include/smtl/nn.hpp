// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "smtl/param_store.hpp"
#include "smtl/tape.hpp"

namespace smtl::nn {

enum class Activation { kIdentity, kRelu, kTanh, kSigmoid, kRowSoftmax };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

struct LinearSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
};

/// Stack of linear layers. widths = {in, hidden..., out}; `hidden` holds one
/// activation per hidden layer, `output` is applied after the last layer.
struct MlpSpec {
  std::vector<std::size_t> widths;
  std::vector<Activation> hidden;
  Activation output = Activation::kIdentity;

  std::size_t layer_count() const { return widths.empty() ? 0 : widths.size() - 1; }
  std::size_t in_dim() const { return widths.front(); }
  std::size_t out_dim() const { return widths.back(); }
  LinearSpec layer(std::size_t i) const { return {widths[i], widths[i + 1]}; }
  Activation activation_after(std::size_t i) const {
    return i + 1 == layer_count() ? output : hidden[i];
  }
  void validate() const;
};

// `<prefix>.layer<i>.W` is [out, in]; `<prefix>.layer<i>.b` is [out].
std::string weight_path(std::string_view prefix, std::size_t layer);
std::string bias_path(std::string_view prefix, std::size_t layer);

/// Zero biases; weights uniform in ±sqrt(6/fan_in) when the layer feeds a relu
/// and ±sqrt(3/fan_in) otherwise. Each tensor draws from a stream keyed by
/// (seed, path), so a path gets the same values in every store built from
/// the same seed.
ParamStore init_params(const MlpSpec& spec, std::string_view prefix, std::uint64_t seed);

/// Exposes ParamStore entries on a tape. Trainable paths become leaves (keyed
/// by path), the rest constants; each path is bound at most once per tape.
class Bindings {
 public:
  using Predicate = std::function<bool(std::string_view)>;

  Bindings(Tape& tape, const ParamStore& store, Predicate trainable = {});

  Var param(std::string_view path);
  Tape& tape() noexcept { return *tape_; }
  const ParamStore& store() const noexcept { return *store_; }

 private:
  Tape* tape_;
  const ParamStore* store_;
  Predicate trainable_;
  std::map<std::string, Var, std::less<>> bound_;
};

Var apply_activation(Tape& tape, Var x, Activation a);

/// x [batch, in] -> [batch, out].
Var mlp_forward(Bindings& b, const MlpSpec& spec, std::string_view prefix, Var x);

/// Value-only evaluation on a scratch tape.
Tensor mlp_apply(const ParamStore& store, const MlpSpec& spec, std::string_view prefix,
                 const Tensor& x);

}  // namespace smtl::nn
