// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "smtl/probes.hpp"

#include <algorithm>
#include <cmath>

#include "smtl/error.hpp"

namespace smtl::probes {

using model::Assembly;
using model::Variant;
using nlohmann::json;

namespace {

constexpr auto kFrozen = [](std::string_view) { return false; };

double task_loss_at(const Assembly& a, const synth::TaskBundle& bundle, std::span<const std::size_t> idx,
                    train::LossKind loss, std::size_t t, double alpha, double* grad) {
  Tape tape;
  nn::Bindings b(tape, a.params, kFrozen);
  Var al = grad ? tape.leaf("alpha", Tensor::scalar(alpha)) : tape.constant(Tensor::scalar(alpha));
  model::Forward f(b, a, tape.constant(bundle.X.gather_rows(idx)), model::Phase::kEval);
  f.override_alpha(t, al);
  Var l = train::loss_node(tape, loss, f.task(t).pred, bundle.Y[t].gather_rows(idx));
  const double value = tape.value(l).item();
  if (grad) *grad = tape.backward(l).at("alpha").item();
  return value;
}

void copy_prefix(const ParamStore& from, const std::string& from_prefix, ParamStore& to,
                 const std::string& to_prefix) {
  for (const auto& path : from.paths(from_prefix)) {
    to.set(to_prefix + path.substr(from_prefix.size()), from.at(path));
  }
}

double max_forward_diff(const Assembly& x, const Assembly& y, const Tensor& inputs) {
  double worst = 0.0;
  for (std::size_t t = 0; t < x.tasks(); ++t) {
    worst = std::max(worst, max_abs_diff(model::predict(x, t, inputs), model::predict(y, t, inputs)));
  }
  return worst;
}

}  // namespace

BoundaryReport boundary_condition(const Assembly& a, const synth::TaskBundle& bundle,
                                  std::span<const std::size_t> idx, std::span<const train::LossKind> losses,
                                  std::size_t t, double boundary, double tol, double h) {
  a.check_task(t);
  if (!model::has_gates(a.variant)) throw InvalidArgument("boundary probe needs a gated variant");
  if (boundary != 0.0 && boundary != 1.0) throw InvalidArgument("boundary must be 0 or 1");
  if (losses.size() != a.tasks()) throw InvalidArgument("one loss kind per task required");
  if (losses[t] != train::LossKind::kCrossEntropy) {
    throw InvalidArgument("boundary probe covers cross_entropy tasks only; task " + std::to_string(t) + " uses " +
                          std::string(train::loss_name(losses[t])));
  }
  if (!(h > 0.0 && 3.0 * h <= 1.0)) throw InvalidArgument("finite-difference step out of range");
  BoundaryReport r;
  r.task = t;
  r.boundary = boundary;
  const double f0 = task_loss_at(a, bundle, idx, losses[t], t, boundary, &r.autodiff);
  // Third-order one-sided stencil pointing into [0, 1].
  const double s = boundary == 0.0 ? 1.0 : -1.0;
  double f[4] = {f0, 0.0, 0.0, 0.0};
  for (int k = 1; k <= 3; ++k) f[k] = task_loss_at(a, bundle, idx, losses[t], t, boundary + s * k * h, nullptr);
  r.finite_diff = s * (-11.0 * f[0] + 18.0 * f[1] - 9.0 * f[2] + 2.0 * f[3]) / (6.0 * h);
  auto holds = [&](double d) { return boundary == 0.0 ? d >= -tol : d <= tol; };
  r.condition = holds(r.autodiff);
  r.fd_condition = holds(r.finite_diff);
  return r;
}

ReductionReport reduction_equivalence(Variant gated, const model::ArchSpec& arch, std::uint64_t seed,
                                      const synth::TaskBundle& bundle, std::span<const std::size_t> idx,
                                      std::span<const train::LossKind> losses, double tol) {
  if (gated != Variant::kSMTL && gated != Variant::kSMTLc) {
    throw InvalidArgument("reduction probe compares SMTL or SMTL_c against the baselines");
  }
  const Assembly stl = model::build(Variant::kSTL, arch, seed);
  // A distinct stream keeps the DMTL weights different from STL's, so the
  // copies below are what make the identities hold.
  const Assembly dmtl = model::build(Variant::kDMTL, arch, derive_seed(seed, "reduction-dmtl"));
  Assembly at0 = model::build(gated, arch, seed);
  Assembly at1 = at0;
  for (std::size_t t = 0; t < arch.tasks(); ++t) {
    copy_prefix(stl.params, model::private_encoder_prefix(t), at0.params, model::private_encoder_prefix(t));
    copy_prefix(stl.params, model::private_decoder_prefix(t), at0.params, model::private_decoder_prefix(t));
    const std::string dec_target =
        gated == Variant::kSMTLc ? model::public_decoder_prefix(t) : model::private_decoder_prefix(t);
    copy_prefix(dmtl.params, model::private_decoder_prefix(t), at1.params, dec_target);
    model::pin_gate(at0, t, 0.0);
    model::pin_gate(at1, t, 1.0);
  }
  copy_prefix(dmtl.params, model::public_encoder_prefix(), at1.params, model::public_encoder_prefix());

  const Tensor inputs = bundle.X.gather_rows(idx);
  ReductionReport r;
  r.gated = gated;
  r.tol = tol;
  r.forward_diff_stl = max_forward_diff(at0, stl, inputs);
  r.forward_diff_dmtl = max_forward_diff(at1, dmtl, inputs);
  r.objective_diff_stl = std::abs(train::joint_objective(at0, bundle, idx, losses).value -
                                  train::joint_objective(stl, bundle, idx, losses).value);
  r.objective_diff_dmtl = std::abs(train::joint_objective(at1, bundle, idx, losses).value -
                                   train::joint_objective(dmtl, bundle, idx, losses).value);
  return r;
}

DominanceReport loss_dominance_probe(const synth::TaskBundle& bundle, const model::ArchSpec& arch,
                                     const train::TrainConfig& cfg, Variant reference, int continue_epochs) {
  if (reference != Variant::kSTL && reference != Variant::kDMTL) {
    throw InvalidArgument("dominance probe warm-starts from STL or DMTL");
  }
  if (cfg.batch_size != 0 || cfg.bilevel) throw InvalidArgument("dominance probe needs full-batch single-level training");
  if (continue_epochs < 0) throw InvalidArgument("continue_epochs must be >= 0");

  Assembly ref = model::build(reference, arch, cfg.seed);
  train::Adam opt(train::AdamConfig{.lr = cfg.lr});
  const auto ref_run = train::train_single_level(ref, bundle, cfg, &opt);
  if (ref_run.diverged) {
    throw DivergenceError(std::string(model::variant_name(reference)) + " training diverged: " + ref_run.diagnostic);
  }
  const auto losses = train::resolve_losses(ref, bundle, cfg);

  DominanceReport r;
  r.reference = reference;
  r.continued_epochs = continue_epochs;
  r.reference_loss = train::joint_objective(ref, bundle, bundle.splits.train, losses).value;

  Assembly smtl = model::build(Variant::kSMTL, arch, cfg.seed);
  for (const auto& [path, value] : ref.params) smtl.params.set(path, value);
  const double logit = reference == Variant::kSTL ? -40.0 : 40.0;
  for (std::size_t t = 0; t < arch.tasks(); ++t) smtl.params.set(gates::logit_path(t), Tensor::scalar(logit));
  r.warm_start = train::joint_objective(smtl, bundle, bundle.splits.train, losses).value;
  r.step0_ok = std::abs(r.warm_start - r.reference_loss) <= 1e-9;

  train::TrainConfig cont = cfg;
  cont.epochs = continue_epochs;
  const auto run = train::train_single_level(smtl, bundle, cont, &opt);
  r.final_value = run.history.rows.back().objective;
  r.pass = r.step0_ok && !run.diverged && r.final_value <= r.reference_loss + 1e-6;
  return r;
}

AlphaSummary alpha_trajectory(const train::History& history) {
  if (!history.gated) throw InvalidArgument("alpha trajectory needs a gated run");
  if (history.rows.empty()) throw InvalidArgument("empty history");
  AlphaSummary s;
  s.curves.assign(history.tasks, {});
  for (const auto& row : history.rows) {
    for (std::size_t t = 0; t < history.tasks; ++t) s.curves[t].push_back(row.alpha.at(t));
  }
  for (const auto& curve : s.curves) {
    s.final_alpha.push_back(curve.back());
    const double side = curve.back() - 0.5;
    std::optional<int> settled;
    if (side != 0.0) {
      // First epoch from which alpha stays strictly on its final side of 0.5.
      std::size_t i = curve.size();
      while (i > 0 && (curve[i - 1] - 0.5) * side > 0.0) --i;
      settled = history.rows[i].epoch;
    }
    s.epochs_to_cross.push_back(settled);
  }
  return s;
}

json to_json(const BoundaryReport& r) {
  return {{"task", r.task},         {"boundary", r.boundary},         {"autodiff", r.autodiff},
          {"finite_diff", r.finite_diff}, {"condition", r.condition}, {"fd_condition", r.fd_condition},
          {"agrees", r.agrees()}};
}

json to_json(const ReductionReport& r) {
  return {{"variant", model::variant_name(r.gated)},
          {"forward_diff_stl", r.forward_diff_stl},
          {"forward_diff_dmtl", r.forward_diff_dmtl},
          {"objective_diff_stl", r.objective_diff_stl},
          {"objective_diff_dmtl", r.objective_diff_dmtl},
          {"tolerance", r.tol},
          {"pass", r.pass()}};
}

json to_json(const DominanceReport& r) {
  return {{"reference", model::variant_name(r.reference)},
          {"reference_loss", r.reference_loss},
          {"warm_start", r.warm_start},
          {"final", r.final_value},
          {"continued_epochs", r.continued_epochs},
          {"step0_ok", r.step0_ok},
          {"pass", r.pass}};
}

}  // namespace smtl::probes
