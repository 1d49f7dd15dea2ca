// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "smtl/rng.hpp"
#include "smtl/tape.hpp"
#include "smtl/tensor.hpp"

namespace smtl::gates {

enum class GateMode { kSoftConvex, kGumbelBinary };

std::string_view mode_name(GateMode m);
GateMode parse_mode(std::string_view name);

struct TemperatureSchedule {
  double tau0 = 5.0;
  double tau_min = 0.5;
  double rate = 0.1;

  void validate() const;
};

/// max(tau_min, tau0 * exp(-rate * epoch)).
double anneal_temperature(int epoch, const TemperatureSchedule& s);

/// Per-task gate bookkeeping. The learnable logit itself lives in the
/// ParamStore at logit_path(task); alpha = sigmoid(logit).
struct GateState {
  std::size_t task = 0;
  GateMode mode = GateMode::kSoftConvex;
  double tau = 5.0;
  std::optional<double> pinned;  // fixed alpha in [0, 1]; the logit is then ignored
  std::uint64_t seed = 0;
  std::uint64_t draws = 0;  // Gumbel pairs consumed so far
  Rng rng{0};

  GateState() = default;
  GateState(std::size_t t, GateMode m, std::uint64_t stream_seed)
      : task(t), mode(m), seed(stream_seed), rng(stream_seed) {}
};

std::string logit_path(std::size_t task);

double sigmoid(double x);

/// alpha * u_public + (1 - alpha) * u_private.
Tensor convex_combine(double alpha, const Tensor& u_public, const Tensor& u_private);
Var convex_combine(Tape& tape, Var alpha, Var u_public, Var u_private);

/// -log(-log(u)) for u in (0, 1).
double gumbel_from_uniform(double u);
double gumbel_noise(Rng& rng);

/// 1 iff b1 + log p1 > b0 + log(1 - p1); ties go to 0.
int hard_choice(double p1, double b0, double b1);

/// sigmoid((b1 - b0 + log(p1 / (1 - p1))) / tau).
double soft_weight(double p1, double b0, double b1, double tau);

// Logit forms: with p1 = sigmoid(a), log(p1 / (1 - p1)) == a, so these avoid
// forming p1 and stay finite for saturated gates.
int hard_choice_logit(double a, double b0, double b1);
double soft_weight_logit(double a, double b0, double b1, double tau);

struct StraightThrough {
  Var alpha;      // forward value hard in {0, 1}; gradient of the soft surrogate
  int hard = 0;
  double soft = 0.0;
  double b0 = 0.0;
  double b1 = 0.0;
};

/// Draws (b0, b1) from the gate's stream and records the straight-through
/// node for `logit` (a [1] tensor on `tape`).
StraightThrough straight_through_alpha(Tape& tape, Var logit, GateState& gate);

/// Same, with caller-supplied noise.
StraightThrough straight_through_alpha(Tape& tape, Var logit, double tau, double b0, double b1);

}  // namespace smtl::gates
