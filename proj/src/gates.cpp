// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "smtl/gates.hpp"

#include <algorithm>
#include <cmath>

#include "smtl/error.hpp"

namespace smtl::gates {

std::string_view mode_name(GateMode m) {
  return m == GateMode::kSoftConvex ? "soft-convex" : "gumbel-binary";
}

GateMode parse_mode(std::string_view name) {
  if (name == "soft-convex") return GateMode::kSoftConvex;
  if (name == "gumbel-binary") return GateMode::kGumbelBinary;
  throw InvalidArgument("unknown gate mode '" + std::string(name) + "'");
}

void TemperatureSchedule::validate() const {
  if (!(tau_min > 0.0) || !(tau0 >= tau_min) || !(rate >= 0.0) || !std::isfinite(tau0) ||
      !std::isfinite(rate)) {
    throw InvalidArgument("temperature schedule needs tau0 >= tau_min > 0 and rate >= 0");
  }
}

double anneal_temperature(int epoch, const TemperatureSchedule& s) {
  s.validate();
  if (epoch < 0) throw InvalidArgument("anneal_temperature: negative epoch");
  return std::max(s.tau_min, s.tau0 * std::exp(-s.rate * static_cast<double>(epoch)));
}

std::string logit_path(std::size_t task) { return "gate." + std::to_string(task) + ".logit"; }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor convex_combine(double alpha, const Tensor& u_public, const Tensor& u_private) {
  const Tensor a = Tensor::scalar(alpha);
  const Tensor* in[3] = {&a, &u_public, &u_private};
  return primitive_forward(Op::kConvexCombine, in);
}

Var convex_combine(Tape& tape, Var alpha, Var u_public, Var u_private) {
  return tape.convex_combine(alpha, u_public, u_private);
}

double gumbel_from_uniform(double u) {
  if (!(u > 0.0 && u < 1.0)) throw InvalidArgument("gumbel_from_uniform: u must lie in (0,1)");
  return -std::log(-std::log(u));
}

double gumbel_noise(Rng& rng) { return gumbel_from_uniform(rng.uniform_open()); }

namespace {
void check_prob(double p1) {
  if (!(p1 > 0.0 && p1 < 1.0)) {
    throw InvalidArgument("gate probability must lie in (0,1), got " + std::to_string(p1));
  }
}
void check_tau(double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("temperature must be positive");
}
}  // namespace

int hard_choice(double p1, double b0, double b1) {
  check_prob(p1);
  return b1 + std::log(p1) > b0 + std::log(1.0 - p1) ? 1 : 0;
}

double soft_weight(double p1, double b0, double b1, double tau) {
  check_prob(p1);
  check_tau(tau);
  return sigmoid((b1 - b0 + std::log(p1 / (1.0 - p1))) / tau);
}

int hard_choice_logit(double a, double b0, double b1) { return b1 - b0 + a > 0.0 ? 1 : 0; }

double soft_weight_logit(double a, double b0, double b1, double tau) {
  check_tau(tau);
  return sigmoid((b1 - b0 + a) / tau);
}

StraightThrough straight_through_alpha(Tape& tape, Var logit, double tau, double b0, double b1) {
  check_tau(tau);
  const double a = tape.value(logit).item();
  StraightThrough st;
  st.b0 = b0;
  st.b1 = b1;
  st.hard = hard_choice_logit(a, b0, b1);
  Var shifted = tape.add(logit, tape.constant(Tensor::scalar(b1 - b0)));
  Var surrogate = tape.sigmoid(tape.scale(shifted, 1.0 / tau));
  st.soft = tape.value(surrogate).item();
  st.alpha = tape.straight_through(static_cast<double>(st.hard), surrogate);
  return st;
}

StraightThrough straight_through_alpha(Tape& tape, Var logit, GateState& gate) {
  if (gate.mode != GateMode::kGumbelBinary) {
    throw InvalidArgument("straight_through_alpha needs a gumbel-binary gate");
  }
  const double b0 = gumbel_noise(gate.rng);
  const double b1 = gumbel_noise(gate.rng);
  ++gate.draws;
  return straight_through_alpha(tape, logit, gate.tau, b0, b1);
}

}  // namespace smtl::gates
