// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>

#include <gtest/gtest.h>

#include "smtl/error.hpp"
#include "smtl/model.hpp"
#include "smtl/rng.hpp"

namespace smtl::model {
namespace {

using nn::Activation;

ArchSpec arch3() {
  ArchSpec a;
  a.input_dim = 4;
  a.encoder_hidden = {8};
  a.feature_dim = 8;
  a.heads = {{1, Activation::kIdentity}, {1, Activation::kIdentity}, {1, Activation::kIdentity}};
  return a;
}

Tensor inputs(std::size_t n, std::uint64_t seed) {
  Rng r(seed);
  Tensor x(Shape{n, 4});
  for (double& v : x.data()) v = r.uniform(-1, 1);
  return x;
}

TEST(Variant, NamesRoundTrip) {
  for (auto v : {Variant::kSTL, Variant::kDMTL, Variant::kSMTL, Variant::kLSMTL, Variant::kSMTLc,
                 Variant::kLSMTLc}) {
    EXPECT_EQ(parse_variant(variant_name(v)), v);
  }
  EXPECT_THROW(parse_variant("MTL"), InvalidArgument);
}

TEST(Build, ParamCounts) {
  const Assembly smtl = build(Variant::kSMTL, arch3(), 1);
  EXPECT_EQ(param_count(smtl.params), 478u);
  const Assembly smtl_c = build(Variant::kSMTLc, arch3(), 1);
  EXPECT_EQ(param_count(smtl_c.params) - param_count(smtl.params), 3u * 9u);
  EXPECT_EQ(param_count(build(Variant::kSTL, arch3(), 1).params), 3u * 112u + 3u * 9u);
  EXPECT_EQ(param_count(build(Variant::kDMTL, arch3(), 1).params), 112u + 3u * 9u);
}

TEST(Build, ComponentsPerVariant) {
  const Assembly stl = build(Variant::kSTL, arch3(), 1);
  EXPECT_TRUE(stl.params.paths(public_encoder_prefix()).empty());
  EXPECT_TRUE(stl.gates.empty());
  const Assembly smtl = build(Variant::kSMTL, arch3(), 1);
  EXPECT_EQ(smtl.params.paths("gate").size(), 3u);
  EXPECT_EQ(smtl.gates.size(), 3u);
  EXPECT_EQ(smtl.gates[0].mode, gates::GateMode::kSoftConvex);
  EXPECT_EQ(build(Variant::kLSMTL, arch3(), 1).gates[0].mode, gates::GateMode::kGumbelBinary);
  EXPECT_EQ(build(Variant::kSMTL, arch3(), 1).params, smtl.params);
}

TEST(Build, SharedWidthsAreValidated) {
  ArchSpec bad = arch3();
  bad.heads[0] = {1, Activation::kRowSoftmax};
  EXPECT_THROW(build(Variant::kSMTL, bad, 1), InvalidArgument);
}

TEST(Gates, FreshModelReportsHalf) {
  const Assembly a = build(Variant::kSMTL, arch3(), 1);
  for (const auto& [t, alpha] : alpha_report(a)) EXPECT_EQ(alpha, 0.5) << t;
  EXPECT_THROW(alpha_report(build(Variant::kDMTL, arch3(), 1)), InvalidArgument);
}

TEST(Gates, PinOverridesLogit) {
  Assembly a = build(Variant::kSMTL, arch3(), 2);
  a.params.at(gates::logit_path(1)) = Tensor::scalar(3.0);
  pin_gate(a, 1, 0.0);
  EXPECT_EQ(gate_alpha(a, 1), 0.0);
  EXPECT_THROW(pin_gate(a, 1, 1.5), InvalidArgument);
  EXPECT_THROW(pin_gate(a, 7, 0.5), InvalidArgument);
  Assembly d = build(Variant::kDMTL, arch3(), 2);
  EXPECT_THROW(pin_gate(d, 0, 1.0), InvalidArgument);
}

TEST(Forward, PinnedEndpointsSelectOneBranch) {
  Assembly a = build(Variant::kSMTL, arch3(), 3);
  const Tensor x = inputs(5, 1);
  const auto enc = a.arch.encoder();
  const auto dec = a.arch.decoder(0);
  pin_gate(a, 0, 1.0);
  const Tensor pub = nn::mlp_apply(a.params, dec, private_decoder_prefix(0),
                                   nn::mlp_apply(a.params, enc, public_encoder_prefix(), x));
  EXPECT_TRUE(bitwise_equal(predict(a, 0, x), pub));
  pin_gate(a, 0, 0.0);
  const Tensor priv = nn::mlp_apply(a.params, dec, private_decoder_prefix(0),
                                    nn::mlp_apply(a.params, enc, private_encoder_prefix(0), x));
  EXPECT_TRUE(bitwise_equal(predict(a, 0, x), priv));
}

TEST(Forward, DecoderCombinationAtHalfIsBranchMean) {
  Assembly a = build(Variant::kSMTLc, arch3(), 4);
  pin_gate(a, 2, 0.5);
  const Tensor x = inputs(6, 2);
  const auto enc = a.arch.encoder();
  const auto dec = a.arch.decoder(2);
  const Tensor o_pub = nn::mlp_apply(a.params, dec, public_decoder_prefix(2),
                                     nn::mlp_apply(a.params, enc, public_encoder_prefix(), x));
  const Tensor o_priv = nn::mlp_apply(a.params, dec, private_decoder_prefix(2),
                                      nn::mlp_apply(a.params, enc, private_encoder_prefix(2), x));
  const Tensor y = predict(a, 2, x);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], 0.5 * (o_pub[i] + o_priv[i]), 1e-15);
}

TEST(Forward, GradientsRespectBranchStructure) {
  Assembly a = build(Variant::kSMTL, arch3(), 5);
  for (std::size_t t = 0; t < 3; ++t) pin_gate(a, t, 1.0);
  Tape tape;
  nn::Bindings b(tape, a.params);
  Forward f(b, a, tape.constant(inputs(4, 3)), Phase::kTrain, a.gates);
  Var loss = tape.reduce_sum(tape.mul(f.task(0).pred, f.task(0).pred));
  const GradMap g = tape.backward(loss);
  for (const auto& [path, grad] : g) {
    const bool dead = path_has_prefix(path, "encoder.private") || path_has_prefix(path, "decoder.private.1") ||
                      path_has_prefix(path, "decoder.private.2");
    if (dead) {
      for (double v : grad.data()) EXPECT_EQ(v, 0.0) << path;
    }
  }
  double pub_norm = 0;
  for (const auto& [path, grad] : g)
    if (path_has_prefix(path, public_encoder_prefix()))
      for (double v : grad.data()) pub_norm += v * v;
  EXPECT_GT(pub_norm, 0.0);
}

TEST(Forward, LiteGatesUseHalfThresholdAtEval) {
  Assembly a = build(Variant::kLSMTL, arch3(), 6);
  const Tensor x = inputs(3, 4);
  a.params.at(gates::logit_path(0)) = Tensor::scalar(0.01);
  EXPECT_TRUE(chooses_public(a, 0));
  Assembly hard = a;
  pin_gate(hard, 0, 1.0);
  EXPECT_TRUE(bitwise_equal(predict(a, 0, x), predict(hard, 0, x)));
  a.params.at(gates::logit_path(0)) = Tensor::scalar(0.0);
  EXPECT_FALSE(chooses_public(a, 0));  // exactly one half stays private
}

TEST(Forward, TrainPhaseBinaryGatesNeedLiveStates) {
  const Assembly a = build(Variant::kLSMTL, arch3(), 7);
  Tape tape;
  nn::Bindings b(tape, a.params);
  Forward f(b, a, tape.constant(inputs(2, 5)), Phase::kTrain);
  EXPECT_THROW(f.task(0), InvalidArgument);
}

TEST(Prune, MatchesGatedModelAndShrinks) {
  for (Variant v : {Variant::kLSMTL, Variant::kLSMTLc}) {
    Assembly a = build(v, arch3(), 8);
    a.params.at(gates::logit_path(0)) = Tensor::scalar(1.0);
    a.params.at(gates::logit_path(1)) = Tensor::scalar(-1.0);
    a.params.at(gates::logit_path(2)) = Tensor::scalar(2.0);
    const PrunedAssembly p = prune(a);
    EXPECT_LT(param_count(p.params), param_count(a.params));
    const Tensor x = inputs(5, 6);
    for (std::size_t t = 0; t < 3; ++t) EXPECT_TRUE(bitwise_equal(predict(p, t, x), predict(a, t, x))) << t;
  }
  EXPECT_THROW(prune(build(Variant::kSMTL, arch3(), 8)), InvalidArgument);
}

TEST(Prune, ExtremeMasksMatchBaselineSizes) {
  Assembly a = build(Variant::kLSMTL, arch3(), 9);
  for (std::size_t t = 0; t < 3; ++t) a.params.at(gates::logit_path(t)) = Tensor::scalar(-1.0);
  EXPECT_EQ(param_count(prune(a).params), param_count(build(Variant::kSTL, arch3(), 9).params));
  for (std::size_t t = 0; t < 3; ++t) a.params.at(gates::logit_path(t)) = Tensor::scalar(1.0);
  EXPECT_EQ(param_count(prune(a).params), param_count(build(Variant::kDMTL, arch3(), 9).params));
}

TEST(Persistence, AssemblyRoundTrip) {
  Assembly a = build(Variant::kLSMTLc, arch3(), 10);
  pin_gate(a, 1, 1.0);
  a.params.at(gates::logit_path(2)) = Tensor::scalar(-0.25);
  const auto dir = std::filesystem::temp_directory_path() / "smtl_model_roundtrip";
  std::filesystem::remove_all(dir);
  save_assembly(a, dir);
  const Assembly b = load_assembly(dir);
  EXPECT_EQ(b.variant, a.variant);
  EXPECT_EQ(b.params, a.params);
  EXPECT_EQ(b.gates[1].pinned, std::optional<double>(1.0));
  EXPECT_FALSE(b.gates[2].pinned.has_value());
  const Tensor x = inputs(3, 7);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_TRUE(bitwise_equal(predict(a, t, x), predict(b, t, x)));
  std::filesystem::remove_all(dir);
}

TEST(Persistence, ArchJsonRoundTrip) {
  ArchSpec a = arch3();
  a.decoder_hidden = {5};
  a.hidden_activation = Activation::kTanh;
  a.heads[1] = {3, Activation::kRowSoftmax};
  const ArchSpec b = arch_from_json(arch_to_json(a));
  EXPECT_EQ(arch_to_json(b), arch_to_json(a));
  auto j = arch_to_json(a);
  j["bogus"] = 1;
  EXPECT_THROW(arch_from_json(j), ConfigError);
}

}  // namespace
}  // namespace smtl::model
