// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "smtl/gates.hpp"
#include "smtl/nn.hpp"
#include "smtl/param_store.hpp"

namespace smtl::model {

enum class Variant { kSTL, kDMTL, kSMTL, kLSMTL, kSMTLc, kLSMTLc };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

bool has_gates(Variant v);
bool is_lite(Variant v);
bool has_public_encoder(Variant v);
bool has_private_encoders(Variant v);
bool has_public_decoders(Variant v);

struct HeadSpec {
  std::size_t out_dim = 1;
  nn::Activation output = nn::Activation::kIdentity;
};

/// Shared by every encoder (public and private): input_dim -> encoder_hidden
/// -> feature_dim. Decoder t: feature_dim -> decoder_hidden -> heads[t].out_dim.
struct ArchSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> encoder_hidden;
  std::size_t feature_dim = 0;
  std::vector<std::size_t> decoder_hidden;
  std::vector<HeadSpec> heads;
  nn::Activation hidden_activation = nn::Activation::kRelu;
  nn::Activation feature_activation = nn::Activation::kRelu;

  std::size_t tasks() const { return heads.size(); }
  nn::MlpSpec encoder() const;
  nn::MlpSpec decoder(std::size_t t) const;
  void validate() const;
};

std::string public_encoder_prefix();
std::string private_encoder_prefix(std::size_t t);
std::string private_decoder_prefix(std::size_t t);
std::string public_decoder_prefix(std::size_t t);
bool is_gate_path(std::string_view path);

enum class Phase { kTrain, kEval };

struct Assembly {
  Variant variant = Variant::kSTL;
  ArchSpec arch;
  ParamStore params;
  std::vector<gates::GateState> gates;  // empty for STL / DMTL
  std::uint64_t seed = 0;

  std::size_t tasks() const { return arch.tasks(); }
  void check_task(std::size_t t) const;
};

/// Deterministic: a parameter path gets the same initial values in every
/// variant built from the same seed. Gate logits start at 0.
Assembly build(Variant v, const ArchSpec& arch, std::uint64_t seed);

/// Current alpha of gate t: the pinned value, else sigmoid(logit).
double gate_alpha(const Assembly& a, std::size_t t);

/// Eval-phase branch choice for binary gates.
bool chooses_public(const Assembly& a, std::size_t t);

struct TaskOutput {
  Var pred;
  Var alpha;  // invalid for gateless variants
};

/// Records forward passes of one Assembly on one tape, sharing the public
/// encoder output across tasks. Train-phase lite gates draw noise from
/// `live_gates` (normally asm.gates of a mutable assembly).
class Forward {
 public:
  Forward(nn::Bindings& b, const Assembly& a, Var x, Phase phase,
          std::span<gates::GateState> live_gates = {});

  /// Replaces gate t's alpha with an arbitrary scalar node.
  void override_alpha(std::size_t t, Var alpha);

  TaskOutput task(std::size_t t);

  /// Straight-through draws made during this pass, keyed by task.
  const std::map<std::size_t, gates::StraightThrough>& draws() const { return draws_; }

 private:
  Var public_features();
  Var private_features(std::size_t t);
  Var alpha(std::size_t t);

  nn::Bindings* b_;
  const Assembly* asm_;
  Var x_;
  Phase phase_;
  std::span<gates::GateState> live_;
  std::optional<Var> public_;
  std::map<std::size_t, Var> overrides_;
  std::map<std::size_t, gates::StraightThrough> draws_;
};

/// Eval-phase prediction for task t, values only.
Tensor predict(const Assembly& a, std::size_t t, const Tensor& x);

/// Pins gate t at `value` in [0, 1]; the logit stops influencing the output.
void pin_gate(Assembly& a, std::size_t t, double value);

std::vector<std::pair<std::size_t, double>> alpha_report(const Assembly& a);

enum class Branch { kPublic, kPrivate };

struct PrunedAssembly {
  Variant source = Variant::kLSMTL;
  ArchSpec arch;
  std::vector<Branch> branch;
  ParamStore params;
};

/// Keeps only what the resolved binary gates use.
PrunedAssembly prune(const Assembly& a);
Tensor predict(const PrunedAssembly& p, std::size_t t, const Tensor& x);

/// Strict: unknown keys and missing required fields throw ConfigError.
nlohmann::json arch_to_json(const ArchSpec& arch);
ArchSpec arch_from_json(const nlohmann::json& j);

/// Parameter checkpoint plus an assembly.json sidecar (variant, arch, gates).
void save_assembly(const Assembly& a, const std::filesystem::path& dir);
Assembly load_assembly(const std::filesystem::path& dir);

}  // namespace smtl::model
