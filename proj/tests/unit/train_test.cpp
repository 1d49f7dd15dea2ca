// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "smtl/adam.hpp"
#include "smtl/error.hpp"
#include "smtl/loss.hpp"
#include "smtl/trainer.hpp"

namespace smtl::train {
namespace {

using model::Variant;
using nn::Activation;

synth::TaskBundle small_bundle(std::uint64_t seed = 3) {
  synth::GeneratorSpec g;
  g.n = 64;
  g.d = 6;
  g.k = 3;
  g.hidden = 8;
  g.noise = 0.1;
  g.seed = seed;
  g.tasks = {{synth::TaskKind::kRegression, 2, 0.8, std::nullopt},
             {synth::TaskKind::kClassification, 3, 0.5, std::nullopt},
             {synth::TaskKind::kRegression, 1, 0.0, std::nullopt}};
  auto b = synth::generate(g);
  const double fr[] = {0.75, 0.25};
  synth::split(b, fr, seed);
  return b;
}

model::ArchSpec arch_for(const synth::TaskBundle& b) {
  model::ArchSpec a;
  a.input_dim = b.X.cols();
  a.encoder_hidden = {8};
  a.feature_dim = 4;
  for (std::size_t t = 0; t < b.tasks(); ++t) {
    const bool cls = b.spec.tasks[t].kind == synth::TaskKind::kClassification;
    a.heads.push_back({b.Y[t].cols(), cls ? Activation::kRowSoftmax : Activation::kIdentity});
  }
  return a;
}

TEST(Loss, Examples) {
  const Tensor uniform = Tensor::matrix(2, 3, {1. / 3, 1. / 3, 1. / 3, 1. / 3, 1. / 3, 1. / 3});
  const Tensor onehot = Tensor::matrix(2, 3, {0, 1, 0, 1, 0, 0});
  EXPECT_NEAR(compute_loss(LossKind::kCrossEntropy, uniform, onehot), std::log(3.0), 1e-15);
  const Tensor t = Tensor::matrix(2, 2, {1, -2, 0.5, 3});
  EXPECT_EQ(compute_loss(LossKind::kL1, t, t), 0.0);
  EXPECT_EQ(compute_loss(LossKind::kMSE, t, t), 0.0);
  const Tensor t2 = Tensor::matrix(2, 2, {2, -4, 1, 6});
  EXPECT_NEAR(compute_loss(LossKind::kCosine, t2, t), 0.0, 1e-15);
  EXPECT_NEAR(compute_loss(LossKind::kMSE, Tensor::matrix(1, 2, {1, 3}), Tensor::matrix(1, 2, {0, 0})), 5.0,
              1e-15);
  EXPECT_NEAR(compute_loss(LossKind::kL1, Tensor::matrix(1, 2, {1, -3}), Tensor::matrix(1, 2, {0, 0})), 2.0,
              1e-15);
}

TEST(Loss, Validation) {
  const Tensor p = Tensor::matrix(1, 2, {0.5, 0.5});
  EXPECT_THROW(compute_loss(LossKind::kCrossEntropy, p, Tensor::matrix(1, 2, {0.5, 0.5})), InvalidArgument);
  EXPECT_THROW(compute_loss(LossKind::kMSE, p, Tensor::matrix(1, 3, {0, 0, 0})), ShapeError);
  EXPECT_THROW(compute_loss(LossKind::kCosine, p, Tensor::matrix(1, 2, {0, 0})), InvalidArgument);
  EXPECT_EQ(parse_loss(loss_name(LossKind::kCosine)), LossKind::kCosine);
  EXPECT_THROW(parse_loss("hinge"), InvalidArgument);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore p;
  p.set("w", Tensor::matrix(1, 2, {1.0, -1.0}));
  Adam opt(AdamConfig{.lr = 0.01});
  opt.step(p, {{"w", Tensor::matrix(1, 2, {3.0, -0.2})}});
  EXPECT_NEAR(p.at("w").at(0, 0), 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p.at("w").at(0, 1), -1.0 + 0.01, 1e-9);
  EXPECT_EQ(opt.steps("w"), 1u);
  EXPECT_EQ(opt.steps("other"), 0u);
}

TEST(Adam, ZeroGradientLeavesParamsAlone) {
  ParamStore p;
  p.set("w", Tensor::scalar(2.0));
  p.set("u", Tensor::scalar(5.0));
  Adam opt(AdamConfig{.lr = 0.1});
  opt.step(p, {{"w", Tensor::scalar(0.0)}});
  EXPECT_EQ(p.at("w").item(), 2.0);
  EXPECT_EQ(p.at("u").item(), 5.0);
}

TEST(Adam, ConvergesOnQuadratic) {
  ParamStore p;
  p.set("theta", Tensor::scalar(1.0));
  Adam opt(AdamConfig{.lr = 0.05});
  for (int i = 0; i < 500; ++i) opt.step(p, {{"theta", Tensor::scalar(2.0 * p.at("theta").item())}});
  EXPECT_LT(std::abs(p.at("theta").item()), 1e-3);
}

TEST(Adam, NonFiniteGradientIsRejectedAtomically) {
  ParamStore p;
  p.set("a", Tensor::scalar(1.0));
  p.set("b", Tensor::scalar(1.0));
  Adam opt(AdamConfig{.lr = 0.1});
  EXPECT_THROW(opt.step(p, {{"a", Tensor::scalar(1.0)},
                            {"b", Tensor::scalar(std::numeric_limits<double>::infinity())}}),
               DivergenceError);
  EXPECT_EQ(p.at("a").item(), 1.0);
  EXPECT_EQ(opt.steps("a"), 0u);
}

TEST(Objective, MeanOfTaskLosses) {
  const auto bundle = small_bundle();
  const auto a = model::build(Variant::kDMTL, arch_for(bundle), 1);
  const auto losses = resolve_losses(a, bundle, TrainConfig{});
  const auto v = joint_objective(a, bundle, bundle.splits.train, losses);
  ASSERT_EQ(v.task_losses.size(), 3u);
  EXPECT_NEAR(v.value, (v.task_losses[0] + v.task_losses[1] + v.task_losses[2]) / 3.0, 1e-15);
  const auto ev = evaluate(a, bundle, bundle.splits.train, losses);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(ev[t].loss, v.task_losses[t]);
}

TEST(Objective, SingleTaskIsTheTaskLoss) {
  auto bundle = small_bundle();
  bundle.Y.resize(1);
  bundle.spec.tasks.resize(1);
  const auto a = model::build(Variant::kSTL, arch_for(bundle), 2);
  const auto losses = resolve_losses(a, bundle, TrainConfig{});
  const auto v = joint_objective(a, bundle, bundle.splits.train, losses);
  EXPECT_EQ(v.value, v.task_losses[0]);
}

TEST(Objective, DuplicatedExamplesLeaveItUnchanged) {
  const auto bundle = small_bundle();
  const auto a = model::build(Variant::kSMTL, arch_for(bundle), 3);
  const auto losses = resolve_losses(a, bundle, TrainConfig{});
  std::vector<std::size_t> twice = bundle.splits.train;
  twice.insert(twice.end(), bundle.splits.train.begin(), bundle.splits.train.end());
  EXPECT_NEAR(joint_objective(a, bundle, twice, losses).value,
              joint_objective(a, bundle, bundle.splits.train, losses).value, 1e-13);
}

TEST(Objective, LossResolution) {
  const auto bundle = small_bundle();
  const auto a = model::build(Variant::kSTL, arch_for(bundle), 4);
  TrainConfig cfg;
  const auto def = resolve_losses(a, bundle, cfg);
  EXPECT_EQ(def, (std::vector<LossKind>{LossKind::kMSE, LossKind::kCrossEntropy, LossKind::kMSE}));
  cfg.losses = {LossKind::kL1, std::nullopt, LossKind::kCosine};
  EXPECT_EQ(resolve_losses(a, bundle, cfg)[2], LossKind::kCosine);
  cfg.losses = {LossKind::kL1, LossKind::kMSE, std::nullopt};
  EXPECT_THROW(resolve_losses(a, bundle, cfg), ConfigError);
  cfg.losses = {LossKind::kCrossEntropy, std::nullopt, std::nullopt};
  EXPECT_THROW(resolve_losses(a, bundle, cfg), ConfigError);
  cfg.losses = {std::nullopt};
  EXPECT_THROW(resolve_losses(a, bundle, cfg), ConfigError);
}

// Joint STL training must equal training each tower alone on L_t / m.
TEST(Train, StlEqualsIndependentTowers) {
  const auto bundle = small_bundle();
  const auto arch = arch_for(bundle);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.lr = 0.01;
  model::Assembly joint = model::build(Variant::kSTL, arch, 5);
  model::Assembly solo = joint;
  const auto losses = resolve_losses(joint, bundle, cfg);
  train(joint, bundle, cfg);

  const double m = 3.0;
  for (std::size_t t = 0; t < 3; ++t) {
    Adam opt(AdamConfig{.lr = cfg.lr});
    const std::string enc = model::private_encoder_prefix(t), dec = model::private_decoder_prefix(t);
    for (int e = 0; e < cfg.epochs; ++e) {
      Tape tape;
      nn::Bindings b(tape, solo.params, [&](std::string_view p) {
        return path_has_prefix(p, enc) || path_has_prefix(p, dec);
      });
      model::Forward f(b, solo, tape.constant(bundle.X.gather_rows(bundle.splits.train)), model::Phase::kTrain);
      Var lt = loss_node(tape, losses[t], f.task(t).pred, bundle.Y[t].gather_rows(bundle.splits.train));
      opt.step(solo.params, tape.backward(tape.scale(lt, 1.0 / m)));
    }
  }
  for (const auto& [path, value] : joint.params) EXPECT_TRUE(bitwise_equal(value, solo.params.at(path))) << path;
}

TEST(Train, ObjectiveDecreasesAndHistoryIsComplete) {
  const auto bundle = small_bundle();
  model::Assembly a = model::build(Variant::kSMTL, arch_for(bundle), 6);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.lr = 0.01;
  cfg.batch_size = 16;
  const auto res = train(a, bundle, cfg);
  ASSERT_FALSE(res.diverged);
  ASSERT_EQ(res.history.rows.size(), 6u);
  EXPECT_EQ(res.history.rows[0].alpha_phase, "init");
  EXPECT_EQ(res.history.rows[5].alpha_phase, "joint");
  EXPECT_LE(res.history.rows[5].objective, res.history.rows[0].objective);
  EXPECT_EQ(res.history.rows[0].alpha, (std::vector<double>{0.5, 0.5, 0.5}));
  EXPECT_EQ(res.history.rows[1].gate_updates, 3u);
  const std::string csv = res.history.to_csv();
  EXPECT_EQ(csv.rfind("epoch,objective,train_loss.0", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

TEST(Train, Deterministic) {
  const auto bundle = small_bundle();
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.lr = 0.02;
  cfg.batch_size = 10;
  model::Assembly a = model::build(Variant::kLSMTLc, arch_for(bundle), 7);
  model::Assembly b = a;
  train(a, bundle, cfg);
  train(b, bundle, cfg);
  EXPECT_EQ(a.params, b.params);
}

TEST(Train, BilevelPhasesTouchDisjointParameters) {
  const auto bundle = small_bundle();
  model::Assembly a = model::build(Variant::kSMTL, arch_for(bundle), 8);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.lr = 0.01;
  cfg.batch_size = 12;
  cfg.bilevel = true;
  cfg.k = 2;
  const auto res = train(a, bundle, cfg);
  ASSERT_FALSE(res.diverged);
  EXPECT_FALSE(res.weight_phase_paths.empty());
  for (const auto& p : res.weight_phase_paths) EXPECT_FALSE(model::is_gate_path(p)) << p;
  EXPECT_EQ(res.gate_phase_paths.size(), 3u);
  for (const auto& p : res.gate_phase_paths) EXPECT_TRUE(model::is_gate_path(p)) << p;
  for (std::size_t e = 1; e < res.history.rows.size(); ++e) EXPECT_EQ(res.history.rows[e].alpha_phase, "val");
}

TEST(Train, BilevelPreconditions) {
  auto bundle = small_bundle();
  TrainConfig cfg;
  cfg.bilevel = true;
  cfg.epochs = 1;
  model::Assembly d = model::build(Variant::kDMTL, arch_for(bundle), 9);
  EXPECT_THROW(train(d, bundle, cfg), InvalidArgument);
  model::Assembly s = model::build(Variant::kSMTL, arch_for(bundle), 9);
  bundle.splits.val.clear();
  EXPECT_THROW(train(s, bundle, cfg), InvalidArgument);
}

TEST(Evaluate, PerfectClassifierScoresOne) {
  auto bundle = small_bundle();
  model::Assembly a = model::build(Variant::kSTL, arch_for(bundle), 10);
  const auto losses = resolve_losses(a, bundle, TrainConfig{});
  // Make every prediction of task 1 equal its one-hot target by zeroing the weights and
  // replacing the labels with class 0, which the zero-logit softmax argmax picks.
  for (const auto& p : a.params.paths(model::private_decoder_prefix(1))) {
    for (double& v : a.params.at(p).data()) v = 0.0;
  }
  for (std::size_t r = 0; r < bundle.n(); ++r) {
    for (std::size_t c = 0; c < 3; ++c) bundle.Y[1].at(r, c) = c == 0 ? 1.0 : 0.0;
  }
  const auto ev = evaluate(a, bundle, bundle.splits.val, losses);
  EXPECT_EQ(ev[1].metrics[0].name, "accuracy");
  EXPECT_EQ(ev[1].metrics[0].value, 1.0);
  EXPECT_FALSE(ev[1].metrics[0].lower_is_better);
  EXPECT_EQ(ev[0].metrics[0].name, "l1");
  EXPECT_TRUE(ev[0].metrics[0].lower_is_better);
  const auto again = evaluate(a, bundle, bundle.splits.val, losses);
  EXPECT_EQ(again[0].metrics[1].value, ev[0].metrics[1].value);
}

}  // namespace
}  // namespace smtl::train
