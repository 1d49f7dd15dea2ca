// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "smtl/adam.hpp"
#include "smtl/gates.hpp"
#include "smtl/loss.hpp"
#include "smtl/model.hpp"
#include "smtl/synth.hpp"

namespace smtl::train {

struct TrainConfig {
  int epochs = 50;
  std::size_t batch_size = 0;  // 0 = full batch
  double lr = 1e-3;
  std::uint64_t seed = 0;
  gates::TemperatureSchedule tau;
  bool bilevel = false;
  int k = 5;  // weight steps per gate step in bi-level mode
  std::vector<std::optional<LossKind>> losses;  // per-task override; empty = defaults

  void validate() const;
};

/// Classification tasks use cross_entropy; regression defaults to mse unless
/// overridden. Also checks the heads agree with the task kinds.
std::vector<LossKind> resolve_losses(const model::Assembly& a, const synth::TaskBundle& bundle,
                                     const TrainConfig& cfg);

struct Objective {
  Var value;                     // (1/m) sum_t L_t
  std::vector<Var> task_losses;  // batch-mean L_t
};

/// Records the joint objective over rows `idx` on the bindings' tape.
Objective build_objective(nn::Bindings& b, const model::Assembly& a, const synth::TaskBundle& bundle,
                          std::span<const std::size_t> idx, std::span<const LossKind> losses,
                          model::Phase phase, std::span<gates::GateState> live_gates = {});

struct ObjectiveValue {
  double value = 0.0;
  std::vector<double> task_losses;
};

/// Eval-phase objective value (binary gates resolved by the 0.5 rule).
ObjectiveValue joint_objective(const model::Assembly& a, const synth::TaskBundle& bundle,
                               std::span<const std::size_t> idx, std::span<const LossKind> losses);

struct HistoryRow {
  int epoch = 0;
  double objective = 0.0;
  std::vector<double> train_loss;
  std::vector<double> val_loss;  // empty without a val split
  std::vector<double> alpha;     // empty for gateless variants
  double tau = 0.0;
  std::string alpha_phase;  // "init", "joint" or "val"
  std::size_t gate_updates = 0;
};

struct History {
  std::size_t tasks = 0;
  bool gated = false;
  bool has_val = false;
  std::vector<HistoryRow> rows;  // row 0 is the initial state

  std::string to_csv() const;
};

struct TrainResult {
  History history;
  bool diverged = false;
  std::string diagnostic;
  // Parameter paths that received gradients in each phase (audit trail).
  std::set<std::string> weight_phase_paths;
  std::set<std::string> gate_phase_paths;
};

/// Minibatch Adam on the joint objective; gate logits train with the weights.
/// `warm` carries optimizer state in and out. On divergence the parameters of
/// the last completed epoch are restored and `diverged` is set.
TrainResult train_single_level(model::Assembly& a, const synth::TaskBundle& bundle, const TrainConfig& cfg,
                               Adam* warm = nullptr);

/// First-order alternation: k Adam steps on weights over the train split with
/// gates frozen, then one Adam step on gate logits over the whole val split
/// with weights frozen. The val split must be disjoint from train or equal.
TrainResult train_bilevel(model::Assembly& a, const synth::TaskBundle& bundle, const TrainConfig& cfg);

TrainResult train(model::Assembly& a, const synth::TaskBundle& bundle, const TrainConfig& cfg);

struct MetricValue {
  std::string name;
  bool lower_is_better = false;
  double value = 0.0;
};

struct TaskEval {
  double loss = 0.0;
  std::vector<MetricValue> metrics;
};

/// Per-task loss plus accuracy / cross_entropy (classification) or l1 / mse
/// (regression), with eval-phase gating.
std::vector<TaskEval> evaluate(const model::Assembly& a, const synth::TaskBundle& bundle,
                               std::span<const std::size_t> idx, std::span<const LossKind> losses);

}  // namespace smtl::train
