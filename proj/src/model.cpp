// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "smtl/model.hpp"

#include "smtl/error.hpp"
#include "smtl/io.hpp"
#include "smtl/json_util.hpp"

namespace smtl::model {

using nlohmann::json;

namespace {
constexpr Variant kAllVariants[] = {Variant::kSTL,   Variant::kDMTL,  Variant::kSMTL,
                                    Variant::kLSMTL, Variant::kSMTLc, Variant::kLSMTLc};
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kSTL: return "STL";
    case Variant::kDMTL: return "DMTL";
    case Variant::kSMTL: return "SMTL";
    case Variant::kLSMTL: return "L-SMTL";
    case Variant::kSMTLc: return "SMTL_c";
    case Variant::kLSMTLc: return "L-SMTL_c";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (auto v : kAllVariants) {
    if (variant_name(v) == name) return v;
  }
  throw InvalidArgument("unknown variant '" + std::string(name) + "'");
}

bool has_gates(Variant v) { return v != Variant::kSTL && v != Variant::kDMTL; }
bool is_lite(Variant v) { return v == Variant::kLSMTL || v == Variant::kLSMTLc; }
bool has_public_encoder(Variant v) { return v != Variant::kSTL; }
bool has_private_encoders(Variant v) { return v != Variant::kDMTL; }
bool has_public_decoders(Variant v) { return v == Variant::kSMTLc || v == Variant::kLSMTLc; }

nn::MlpSpec ArchSpec::encoder() const {
  nn::MlpSpec s;
  s.widths.push_back(input_dim);
  s.widths.insert(s.widths.end(), encoder_hidden.begin(), encoder_hidden.end());
  s.widths.push_back(feature_dim);
  s.hidden.assign(encoder_hidden.size(), hidden_activation);
  s.output = feature_activation;
  return s;
}

nn::MlpSpec ArchSpec::decoder(std::size_t t) const {
  nn::MlpSpec s;
  s.widths.push_back(feature_dim);
  s.widths.insert(s.widths.end(), decoder_hidden.begin(), decoder_hidden.end());
  s.widths.push_back(heads.at(t).out_dim);
  s.hidden.assign(decoder_hidden.size(), hidden_activation);
  s.output = heads[t].output;
  return s;
}

void ArchSpec::validate() const {
  if (heads.empty()) throw InvalidArgument("architecture needs at least one task head");
  if (input_dim == 0 || feature_dim == 0) throw InvalidArgument("input and feature dims must be positive");
  encoder().validate();
  for (std::size_t t = 0; t < heads.size(); ++t) {
    if (heads[t].output == nn::Activation::kRowSoftmax && heads[t].out_dim < 2) {
      throw InvalidArgument("softmax head " + std::to_string(t) + " needs at least 2 classes");
    }
    decoder(t).validate();
  }
}

std::string public_encoder_prefix() { return "encoder.public"; }
std::string private_encoder_prefix(std::size_t t) { return "encoder.private." + std::to_string(t); }
std::string private_decoder_prefix(std::size_t t) { return "decoder.private." + std::to_string(t); }
std::string public_decoder_prefix(std::size_t t) { return "decoder.public." + std::to_string(t); }
bool is_gate_path(std::string_view path) { return path_has_prefix(path, "gate"); }

void Assembly::check_task(std::size_t t) const {
  if (t >= tasks()) {
    throw InvalidArgument("task index " + std::to_string(t) + " out of range for " +
                          std::to_string(tasks()) + " tasks");
  }
}

Assembly build(Variant v, const ArchSpec& arch, std::uint64_t seed) {
  arch.validate();
  Assembly a;
  a.variant = v;
  a.arch = arch;
  a.seed = seed;
  const auto enc = arch.encoder();
  if (has_public_encoder(v)) a.params.merge(nn::init_params(enc, public_encoder_prefix(), seed));
  for (std::size_t t = 0; t < arch.tasks(); ++t) {
    if (has_private_encoders(v)) a.params.merge(nn::init_params(enc, private_encoder_prefix(t), seed));
    a.params.merge(nn::init_params(arch.decoder(t), private_decoder_prefix(t), seed));
    if (has_public_decoders(v)) {
      a.params.merge(nn::init_params(arch.decoder(t), public_decoder_prefix(t), seed));
    }
    if (has_gates(v)) {
      a.params.set(gates::logit_path(t), Tensor::scalar(0.0));
      const auto mode = is_lite(v) ? gates::GateMode::kGumbelBinary : gates::GateMode::kSoftConvex;
      a.gates.emplace_back(t, mode, derive_seed(seed, "gate", t));
    }
  }
  return a;
}

double gate_alpha(const Assembly& a, std::size_t t) {
  a.check_task(t);
  if (!has_gates(a.variant)) throw InvalidArgument(std::string(variant_name(a.variant)) + " has no gates");
  const auto& g = a.gates[t];
  if (g.pinned) return *g.pinned;
  return gates::sigmoid(a.params.at(gates::logit_path(t)).item());
}

bool chooses_public(const Assembly& a, std::size_t t) { return gate_alpha(a, t) > 0.5; }

Forward::Forward(nn::Bindings& b, const Assembly& a, Var x, Phase phase,
                 std::span<gates::GateState> live_gates)
    : b_(&b), asm_(&a), x_(x), phase_(phase), live_(live_gates) {}

void Forward::override_alpha(std::size_t t, Var alpha) {
  asm_->check_task(t);
  if (!has_gates(asm_->variant)) {
    throw InvalidArgument(std::string(variant_name(asm_->variant)) + " has no gates");
  }
  overrides_[t] = alpha;
}

Var Forward::public_features() {
  if (!public_) public_ = nn::mlp_forward(*b_, asm_->arch.encoder(), public_encoder_prefix(), x_);
  return *public_;
}

Var Forward::private_features(std::size_t t) {
  return nn::mlp_forward(*b_, asm_->arch.encoder(), private_encoder_prefix(t), x_);
}

Var Forward::alpha(std::size_t t) {
  Tape& tape = b_->tape();
  if (auto it = overrides_.find(t); it != overrides_.end()) return it->second;
  const auto& g = asm_->gates[t];
  if (g.pinned) return tape.constant(Tensor::scalar(*g.pinned));
  if (!is_lite(asm_->variant)) return tape.sigmoid(b_->param(gates::logit_path(t)));
  if (phase_ == Phase::kEval) return tape.constant(Tensor::scalar(chooses_public(*asm_, t) ? 1.0 : 0.0));
  if (live_.size() != asm_->tasks()) {
    throw InvalidArgument("train-phase binary gates need live gate states");
  }
  auto st = gates::straight_through_alpha(tape, b_->param(gates::logit_path(t)), live_[t]);
  draws_[t] = st;
  return st.alpha;
}

TaskOutput Forward::task(std::size_t t) {
  asm_->check_task(t);
  Tape& tape = b_->tape();
  const ArchSpec& arch = asm_->arch;
  const auto dec = arch.decoder(t);
  switch (asm_->variant) {
    case Variant::kSTL:
      return {nn::mlp_forward(*b_, dec, private_decoder_prefix(t), private_features(t)), {}};
    case Variant::kDMTL:
      return {nn::mlp_forward(*b_, dec, private_decoder_prefix(t), public_features()), {}};
    case Variant::kSMTL:
    case Variant::kLSMTL: {
      Var a = alpha(t);
      Var g = tape.convex_combine(a, public_features(), private_features(t));
      return {nn::mlp_forward(*b_, dec, private_decoder_prefix(t), g), a};
    }
    case Variant::kSMTLc:
    case Variant::kLSMTLc: {
      Var a = alpha(t);
      Var o_pub = nn::mlp_forward(*b_, dec, public_decoder_prefix(t), public_features());
      Var o_priv = nn::mlp_forward(*b_, dec, private_decoder_prefix(t), private_features(t));
      return {tape.convex_combine(a, o_pub, o_priv), a};
    }
  }
  throw InvalidArgument("unknown variant");
}

Tensor predict(const Assembly& a, std::size_t t, const Tensor& x) {
  Tape tape;
  nn::Bindings b(tape, a.params, [](std::string_view) { return false; });
  Forward f(b, a, tape.constant(x), Phase::kEval);
  return tape.value(f.task(t).pred);
}

void pin_gate(Assembly& a, std::size_t t, double value) {
  a.check_task(t);
  if (!has_gates(a.variant)) {
    throw InvalidArgument("cannot pin a gate on gateless variant " + std::string(variant_name(a.variant)));
  }
  if (!(value >= 0.0 && value <= 1.0)) throw InvalidArgument("pinned alpha must lie in [0,1]");
  a.gates[t].pinned = value;
}

std::vector<std::pair<std::size_t, double>> alpha_report(const Assembly& a) {
  if (!has_gates(a.variant)) {
    throw InvalidArgument(std::string(variant_name(a.variant)) + " has no gates to report");
  }
  std::vector<std::pair<std::size_t, double>> out;
  for (std::size_t t = 0; t < a.tasks(); ++t) out.emplace_back(t, gate_alpha(a, t));
  return out;
}

PrunedAssembly prune(const Assembly& a) {
  if (!is_lite(a.variant)) {
    throw InvalidArgument("prune needs binary gates; " + std::string(variant_name(a.variant)) + " is soft");
  }
  PrunedAssembly p;
  p.source = a.variant;
  p.arch = a.arch;
  auto keep = [&](const std::string& prefix) {
    for (const auto& path : a.params.paths(prefix)) p.params.set(path, a.params.at(path));
  };
  bool any_public = false;
  for (std::size_t t = 0; t < a.tasks(); ++t) {
    const bool pub = chooses_public(a, t);
    any_public = any_public || pub;
    p.branch.push_back(pub ? Branch::kPublic : Branch::kPrivate);
    if (!pub) keep(private_encoder_prefix(t));
    if (has_public_decoders(a.variant)) {
      keep(pub ? public_decoder_prefix(t) : private_decoder_prefix(t));
    } else {
      keep(private_decoder_prefix(t));
    }
  }
  if (any_public) keep(public_encoder_prefix());
  return p;
}

Tensor predict(const PrunedAssembly& p, std::size_t t, const Tensor& x) {
  if (t >= p.branch.size()) throw InvalidArgument("task index " + std::to_string(t) + " out of range");
  const bool pub = p.branch[t] == Branch::kPublic;
  const Tensor features =
      nn::mlp_apply(p.params, p.arch.encoder(), pub ? public_encoder_prefix() : private_encoder_prefix(t), x);
  const std::string dec =
      pub && has_public_decoders(p.source) ? public_decoder_prefix(t) : private_decoder_prefix(t);
  return nn::mlp_apply(p.params, p.arch.decoder(t), dec, features);
}

json arch_to_json(const ArchSpec& arch) {
  json heads = json::array();
  for (const auto& h : arch.heads) {
    heads.push_back({{"out_dim", h.out_dim}, {"output", nn::activation_name(h.output)}});
  }
  return {{"input_dim", arch.input_dim},
          {"encoder_hidden", arch.encoder_hidden},
          {"feature_dim", arch.feature_dim},
          {"decoder_hidden", arch.decoder_hidden},
          {"heads", heads},
          {"hidden_activation", nn::activation_name(arch.hidden_activation)},
          {"feature_activation", nn::activation_name(arch.feature_activation)}};
}

ArchSpec arch_from_json(const json& j) {
  constexpr std::string_view where = "arch";
  jsonu::check_keys(j, {"input_dim", "encoder_hidden", "feature_dim", "decoder_hidden", "heads",
                        "hidden_activation", "feature_activation"},
                    where);
  auto activation = [&](std::string_view key, nn::Activation fallback) {
    if (!j.contains(key)) return fallback;
    try {
      return nn::parse_activation(jsonu::required<std::string>(j, key, where));
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string(where) + "." + std::string(key) + ": " + e.what());
    }
  };
  ArchSpec a;
  a.input_dim = jsonu::required<std::size_t>(j, "input_dim", where);
  a.feature_dim = jsonu::required<std::size_t>(j, "feature_dim", where);
  a.encoder_hidden = jsonu::optional<std::vector<std::size_t>>(j, "encoder_hidden", {}, where);
  a.decoder_hidden = jsonu::optional<std::vector<std::size_t>>(j, "decoder_hidden", {}, where);
  a.hidden_activation = activation("hidden_activation", nn::Activation::kRelu);
  a.feature_activation = activation("feature_activation", nn::Activation::kRelu);
  const auto heads = jsonu::required<json>(j, "heads", where);
  if (!heads.is_array()) throw ConfigError("arch.heads: expected an array");
  for (const auto& h : heads) {
    jsonu::check_keys(h, {"out_dim", "output"}, "arch.heads[]");
    HeadSpec hs;
    hs.out_dim = jsonu::required<std::size_t>(h, "out_dim", "arch.heads[]");
    try {
      hs.output = nn::parse_activation(jsonu::optional<std::string>(h, "output", "identity", "arch.heads[]"));
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("arch.heads[].output: ") + e.what());
    }
    a.heads.push_back(hs);
  }
  try {
    a.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("arch: ") + e.what());
  }
  return a;
}

void save_assembly(const Assembly& a, const std::filesystem::path& dir) {
  save_checkpoint(a.params, dir);
  json gates = json::array();
  for (const auto& g : a.gates) {
    gates.push_back({{"task", g.task},
                     {"mode", gates::mode_name(g.mode)},
                     {"tau", g.tau},
                     {"pinned", g.pinned ? json(*g.pinned) : json(nullptr)},
                     {"rng_seed", g.seed},
                     {"draws", g.draws}});
  }
  json sidecar = {{"variant", variant_name(a.variant)},
                  {"seed", a.seed},
                  {"arch", arch_to_json(a.arch)},
                  {"gates", gates}};
  io::write_text(dir / "assembly.json", sidecar.dump(2) + "\n");
}

Assembly load_assembly(const std::filesystem::path& dir) {
  json sidecar;
  try {
    sidecar = json::parse(io::read_text(dir / "assembly.json"));
  } catch (const json::exception& e) {
    throw IoError("malformed assembly sidecar in " + dir.string() + ": " + e.what());
  }
  Assembly a;
  try {
    a.variant = parse_variant(sidecar.at("variant").get<std::string>());
    a.seed = sidecar.at("seed").get<std::uint64_t>();
    a.arch = arch_from_json(sidecar.at("arch"));
    for (const auto& g : sidecar.at("gates")) {
      gates::GateState s(g.at("task").get<std::size_t>(), gates::parse_mode(g.at("mode").get<std::string>()),
                         g.at("rng_seed").get<std::uint64_t>());
      s.tau = g.at("tau").get<double>();
      if (!g.at("pinned").is_null()) s.pinned = g.at("pinned").get<double>();
      s.draws = g.at("draws").get<std::uint64_t>();
      for (std::uint64_t i = 0; i < 2 * s.draws; ++i) s.rng.uniform_open();
      a.gates.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed assembly sidecar in " + dir.string() + ": " + e.what());
  } catch (const Error& e) {
    throw IoError("invalid assembly sidecar in " + dir.string() + ": " + e.what());
  }
  a.params = load_checkpoint(dir);
  return a;
}

}  // namespace smtl::model
