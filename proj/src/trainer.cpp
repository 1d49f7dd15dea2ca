// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "smtl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "smtl/error.hpp"
#include "smtl/io.hpp"

namespace smtl::train {

using model::Assembly;
using model::Phase;
using synth::TaskBundle;

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (k < 1) throw ConfigError("bi-level k must be >= 1");
  try {
    tau.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

std::vector<LossKind> resolve_losses(const Assembly& a, const TaskBundle& bundle, const TrainConfig& cfg) {
  const std::size_t m = bundle.tasks();
  if (a.tasks() != m) {
    throw ConfigError("model has " + std::to_string(a.tasks()) + " heads, bundle has " + std::to_string(m) +
                      " tasks");
  }
  if (!cfg.losses.empty() && cfg.losses.size() != m) {
    throw ConfigError("losses: expected " + std::to_string(m) + " entries, got " +
                      std::to_string(cfg.losses.size()));
  }
  if (a.arch.input_dim != bundle.X.cols()) {
    throw ConfigError("model input_dim " + std::to_string(a.arch.input_dim) + " does not match bundle d " +
                      std::to_string(bundle.X.cols()));
  }
  std::vector<LossKind> out;
  for (std::size_t t = 0; t < m; ++t) {
    const auto& head = a.arch.heads[t];
    const bool cls = bundle.spec.tasks[t].kind == synth::TaskKind::kClassification;
    const auto override = cfg.losses.empty() ? std::nullopt : cfg.losses[t];
    const std::string where = "task " + std::to_string(t) + ": ";
    if (head.out_dim != bundle.Y[t].cols()) {
      throw ConfigError(where + "head width " + std::to_string(head.out_dim) + " vs target width " +
                        std::to_string(bundle.Y[t].cols()));
    }
    if (cls) {
      if (override && *override != LossKind::kCrossEntropy) {
        throw ConfigError(where + "classification tasks train with cross_entropy");
      }
      if (head.output != nn::Activation::kRowSoftmax) {
        throw ConfigError(where + "classification heads need a row_softmax output");
      }
      out.push_back(LossKind::kCrossEntropy);
    } else {
      if (override == LossKind::kCrossEntropy) throw ConfigError(where + "cross_entropy needs a classification task");
      out.push_back(override.value_or(LossKind::kMSE));
    }
  }
  return out;
}

Objective build_objective(nn::Bindings& b, const Assembly& a, const TaskBundle& bundle,
                          std::span<const std::size_t> idx, std::span<const LossKind> losses, Phase phase,
                          std::span<gates::GateState> live_gates) {
  if (idx.empty()) throw InvalidArgument("objective over an empty batch");
  if (losses.size() != a.tasks()) throw InvalidArgument("one loss kind per task required");
  Tape& tape = b.tape();
  Var x = tape.constant(bundle.X.gather_rows(idx));
  model::Forward fwd(b, a, x, phase, live_gates);
  Objective obj;
  Var total;
  for (std::size_t t = 0; t < a.tasks(); ++t) {
    Var lt = loss_node(tape, losses[t], fwd.task(t).pred, bundle.Y[t].gather_rows(idx));
    obj.task_losses.push_back(lt);
    total = t == 0 ? lt : tape.add(total, lt);
  }
  obj.value = tape.scale(total, 1.0 / static_cast<double>(a.tasks()));
  return obj;
}

ObjectiveValue joint_objective(const Assembly& a, const TaskBundle& bundle, std::span<const std::size_t> idx,
                               std::span<const LossKind> losses) {
  Tape tape;
  nn::Bindings b(tape, a.params, [](std::string_view) { return false; });
  const Objective obj = build_objective(b, a, bundle, idx, losses, Phase::kEval);
  ObjectiveValue out;
  out.value = tape.value(obj.value).item();
  for (Var v : obj.task_losses) out.task_losses.push_back(tape.value(v).item());
  return out;
}

std::string History::to_csv() const {
  std::string s = "epoch,objective";
  for (std::size_t t = 0; t < tasks; ++t) s += ",train_loss." + std::to_string(t);
  if (has_val) {
    for (std::size_t t = 0; t < tasks; ++t) s += ",val_loss." + std::to_string(t);
  }
  if (gated) {
    for (std::size_t t = 0; t < tasks; ++t) s += ",alpha." + std::to_string(t);
  }
  s += ",tau,alpha_phase,gate_updates\n";
  for (const auto& r : rows) {
    s += std::to_string(r.epoch) + "," + io::fmt_exact(r.objective);
    for (double v : r.train_loss) s += "," + io::fmt_exact(v);
    for (double v : r.val_loss) s += "," + io::fmt_exact(v);
    for (double v : r.alpha) s += "," + io::fmt_exact(v);
    s += "," + io::fmt_exact(r.tau) + "," + r.alpha_phase + "," + std::to_string(r.gate_updates) + "\n";
  }
  return s;
}

namespace {

std::vector<std::vector<std::size_t>> batches_of(const std::vector<std::size_t>& order, std::size_t batch) {
  std::vector<std::vector<std::size_t>> out;
  if (batch == 0 || batch >= order.size()) {
    out.push_back(order);
    return out;
  }
  for (std::size_t i = 0; i < order.size(); i += batch) {
    const std::size_t end = std::min(order.size(), i + batch);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

HistoryRow make_row(const Assembly& a, const TaskBundle& bundle, std::span<const LossKind> losses, int epoch,
                    double tau, std::string phase, std::size_t gate_updates) {
  HistoryRow row;
  row.epoch = epoch;
  const auto train = joint_objective(a, bundle, bundle.splits.train, losses);
  if (!std::isfinite(train.value)) throw DivergenceError("objective is not finite at epoch " + std::to_string(epoch));
  row.objective = train.value;
  row.train_loss = train.task_losses;
  if (!bundle.splits.val.empty()) row.val_loss = joint_objective(a, bundle, bundle.splits.val, losses).task_losses;
  if (model::has_gates(a.variant)) {
    for (const auto& [t, alpha] : model::alpha_report(a)) row.alpha.push_back(alpha);
  }
  row.tau = tau;
  row.alpha_phase = std::move(phase);
  row.gate_updates = gate_updates;
  return row;
}

History empty_history(const Assembly& a, const TaskBundle& bundle) {
  History h;
  h.tasks = a.tasks();
  h.gated = model::has_gates(a.variant);
  h.has_val = !bundle.splits.val.empty();
  return h;
}

bool any_free_gate(const Assembly& a) {
  return std::any_of(a.gates.begin(), a.gates.end(), [](const auto& g) { return !g.pinned; });
}

// Runs one epoch body; on failure restores the snapshot and marks divergence.
template <class Body>
bool guarded_epoch(Assembly& a, TrainResult& res, int epoch, Body&& body) {
  const ParamStore snapshot = a.params;
  try {
    body();
    return true;
  } catch (const DivergenceError& e) {
    res.diagnostic = "epoch " + std::to_string(epoch) + ": " + e.what();
  } catch (const NumericError& e) {
    res.diagnostic = "epoch " + std::to_string(epoch) + ": " + e.what();
  }
  a.params = snapshot;
  res.diverged = true;
  return false;
}

GradMap step_grads(Tape& tape, const Objective& obj) {
  if (!std::isfinite(tape.value(obj.value).item())) throw DivergenceError("objective is not finite");
  return tape.backward(obj.value);
}

}  // namespace

TrainResult train_single_level(Assembly& a, const TaskBundle& bundle, const TrainConfig& cfg, Adam* warm) {
  cfg.validate();
  if (cfg.bilevel) throw ConfigError("train_single_level called with the bi-level flag set");
  if (bundle.splits.train.empty()) throw InvalidArgument("empty train split");
  const auto losses = resolve_losses(a, bundle, cfg);
  Adam local(AdamConfig{.lr = cfg.lr});
  Adam& opt = warm ? *warm : local;

  TrainResult res;
  res.history = empty_history(a, bundle);
  res.history.rows.push_back(make_row(a, bundle, losses, 0, gates::anneal_temperature(0, cfg.tau), "init", 0));

  Rng batch_rng(derive_seed(cfg.seed, "batches"));
  std::vector<std::size_t> order = bundle.splits.train;
  const bool free_gates = any_free_gate(a);
  for (int e = 1; e <= cfg.epochs; ++e) {
    const double tau = gates::anneal_temperature(e - 1, cfg.tau);
    for (auto& g : a.gates) g.tau = tau;
    if (cfg.batch_size != 0 && cfg.batch_size < order.size()) batch_rng.shuffle(order.begin(), order.end());
    std::size_t gate_updates = 0;
    const bool ok = guarded_epoch(a, res, e, [&] {
      for (const auto& batch : batches_of(order, cfg.batch_size)) {
        Tape tape;
        nn::Bindings b(tape, a.params);
        const Objective obj = build_objective(b, a, bundle, batch, losses, Phase::kTrain, a.gates);
        const GradMap grads = step_grads(tape, obj);
        for (const auto& [p, _] : grads) res.weight_phase_paths.insert(p);
        opt.step(a.params, grads);
        if (free_gates) ++gate_updates;
      }
      res.history.rows.push_back(make_row(a, bundle, losses, e, tau, "joint", gate_updates));
    });
    if (!ok) break;
  }
  return res;
}

TrainResult train_bilevel(Assembly& a, const TaskBundle& bundle, const TrainConfig& cfg) {
  cfg.validate();
  if (!model::has_gates(a.variant)) {
    throw InvalidArgument("bi-level training needs a gated variant, got " + std::string(model::variant_name(a.variant)));
  }
  const auto& train_idx = bundle.splits.train;
  const auto& val_idx = bundle.splits.val;
  if (train_idx.empty()) throw InvalidArgument("empty train split");
  if (val_idx.empty()) throw InvalidArgument("bi-level training needs a non-empty val split");
  {
    std::vector<std::size_t> tr(train_idx), va(val_idx), common;
    std::sort(tr.begin(), tr.end());
    std::sort(va.begin(), va.end());
    std::set_intersection(tr.begin(), tr.end(), va.begin(), va.end(), std::back_inserter(common));
    if (!common.empty() && tr != va) throw InvalidArgument("train and val splits partially overlap");
  }
  const auto losses = resolve_losses(a, bundle, cfg);
  Adam wopt(AdamConfig{.lr = cfg.lr});
  Adam gopt(AdamConfig{.lr = cfg.lr});

  TrainResult res;
  res.history = empty_history(a, bundle);
  res.history.rows.push_back(make_row(a, bundle, losses, 0, gates::anneal_temperature(0, cfg.tau), "init", 0));

  Rng batch_rng(derive_seed(cfg.seed, "batches"));
  std::vector<std::size_t> order = train_idx;
  std::size_t weight_steps = 0;
  const auto weights_only = [](std::string_view p) { return !model::is_gate_path(p); };
  const auto gates_only = [](std::string_view p) { return model::is_gate_path(p); };
  for (int e = 1; e <= cfg.epochs; ++e) {
    const double tau = gates::anneal_temperature(e - 1, cfg.tau);
    for (auto& g : a.gates) g.tau = tau;
    if (cfg.batch_size != 0 && cfg.batch_size < order.size()) batch_rng.shuffle(order.begin(), order.end());
    std::size_t gate_updates = 0;
    const bool ok = guarded_epoch(a, res, e, [&] {
      for (const auto& batch : batches_of(order, cfg.batch_size)) {
        {
          Tape tape;
          nn::Bindings b(tape, a.params, weights_only);
          const Objective obj = build_objective(b, a, bundle, batch, losses, Phase::kTrain, a.gates);
          const GradMap grads = step_grads(tape, obj);
          for (const auto& [p, _] : grads) res.weight_phase_paths.insert(p);
          wopt.step(a.params, grads);
        }
        if (++weight_steps % static_cast<std::size_t>(cfg.k) != 0) continue;
        Tape tape;
        nn::Bindings b(tape, a.params, gates_only);
        const Objective obj = build_objective(b, a, bundle, val_idx, losses, Phase::kTrain, a.gates);
        const GradMap grads = step_grads(tape, obj);
        if (grads.empty()) continue;  // every gate pinned
        for (const auto& [p, _] : grads) res.gate_phase_paths.insert(p);
        gopt.step(a.params, grads);
        ++gate_updates;
      }
      res.history.rows.push_back(make_row(a, bundle, losses, e, tau, "val", gate_updates));
    });
    if (!ok) break;
  }
  return res;
}

TrainResult train(Assembly& a, const TaskBundle& bundle, const TrainConfig& cfg) {
  return cfg.bilevel ? train_bilevel(a, bundle, cfg) : train_single_level(a, bundle, cfg);
}

std::vector<TaskEval> evaluate(const Assembly& a, const TaskBundle& bundle, std::span<const std::size_t> idx,
                               std::span<const LossKind> losses) {
  if (idx.empty()) throw InvalidArgument("evaluate on an empty split");
  if (losses.size() != a.tasks()) throw InvalidArgument("one loss kind per task required");
  Tape tape;
  nn::Bindings b(tape, a.params, [](std::string_view) { return false; });
  model::Forward fwd(b, a, tape.constant(bundle.X.gather_rows(idx)), Phase::kEval);
  std::vector<TaskEval> out;
  for (std::size_t t = 0; t < a.tasks(); ++t) {
    const Tensor pred = tape.value(fwd.task(t).pred);
    const Tensor y = bundle.Y[t].gather_rows(idx);
    TaskEval ev;
    ev.loss = compute_loss(losses[t], pred, y);
    if (bundle.spec.tasks[t].kind == synth::TaskKind::kClassification) {
      std::size_t hits = 0;
      for (std::size_t r = 0; r < pred.rows(); ++r) {
        std::size_t bp = 0, by = 0;
        for (std::size_t c = 1; c < pred.cols(); ++c) {
          if (pred.at(r, c) > pred.at(r, bp)) bp = c;
          if (y.at(r, c) > y.at(r, by)) by = c;
        }
        hits += bp == by ? 1 : 0;
      }
      ev.metrics.push_back({"accuracy", false, static_cast<double>(hits) / static_cast<double>(pred.rows())});
      ev.metrics.push_back({"cross_entropy", true, compute_loss(LossKind::kCrossEntropy, pred, y)});
    } else {
      ev.metrics.push_back({"l1", true, compute_loss(LossKind::kL1, pred, y)});
      ev.metrics.push_back({"mse", true, compute_loss(LossKind::kMSE, pred, y)});
    }
    out.push_back(std::move(ev));
  }
  return out;
}

}  // namespace smtl::train
