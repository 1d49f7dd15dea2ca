// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "smtl/model.hpp"
#include "smtl/synth.hpp"
#include "smtl/trainer.hpp"

namespace smtl::probes {

struct BoundaryReport {
  std::size_t task = 0;
  double boundary = 0.0;      // 0 or 1
  double autodiff = 0.0;      // dL_t/dalpha_t at the boundary
  double finite_diff = 0.0;   // one-sided estimate, stepping into [0, 1]
  bool condition = false;     // >= -tol at 0, <= +tol at 1 (autodiff)
  bool fd_condition = false;  // the same test on the finite-difference value
  bool agrees() const { return condition == fd_condition; }
};

/// Task t must train with cross_entropy. Alpha becomes a free scalar pinned
/// at `boundary`; all other gates keep their eval-phase values.
BoundaryReport boundary_condition(const model::Assembly& a, const synth::TaskBundle& bundle,
                                  std::span<const std::size_t> idx, std::span<const train::LossKind> losses,
                                  std::size_t t, double boundary, double tol = 1e-6, double h = 1e-5);

struct ReductionReport {
  model::Variant gated = model::Variant::kSMTL;
  double forward_diff_stl = 0.0;    // max |SMTL|alpha=0 - STL| over tasks and rows
  double forward_diff_dmtl = 0.0;   // max |SMTL|alpha=1 - DMTL|
  double objective_diff_stl = 0.0;
  double objective_diff_dmtl = 0.0;
  double tol = 1e-12;
  bool pass() const {
    return forward_diff_stl <= tol && forward_diff_dmtl <= tol && objective_diff_stl <= tol &&
           objective_diff_dmtl <= tol;
  }
};

/// Builds STL, DMTL and `gated` (SMTL or SMTL_c) from one seed, copies the
/// baseline weights into the gated model and compares at alpha = 0 and 1.
ReductionReport reduction_equivalence(model::Variant gated, const model::ArchSpec& arch, std::uint64_t seed,
                                      const synth::TaskBundle& bundle, std::span<const std::size_t> idx,
                                      std::span<const train::LossKind> losses, double tol = 1e-12);

struct DominanceReport {
  model::Variant reference = model::Variant::kSTL;
  double reference_loss = 0.0;  // mean training loss of the trained baseline
  double warm_start = 0.0;      // gated objective before any further step
  double final_value = 0.0;     // after continued training
  int continued_epochs = 0;
  bool step0_ok = false;  // |warm_start - reference_loss| <= 1e-9
  bool pass = false;      // step0_ok and final_value <= reference_loss + 1e-6
};

/// Trains `reference` (STL or DMTL) full-batch under `cfg`, warm-starts SMTL
/// from its weights with the gate logit at -40 (STL) or +40 (DMTL), carries
/// the optimizer state over and continues for `continue_epochs`.
DominanceReport loss_dominance_probe(const synth::TaskBundle& bundle, const model::ArchSpec& arch,
                                     const train::TrainConfig& cfg, model::Variant reference,
                                     int continue_epochs = 200);

struct AlphaSummary {
  std::vector<std::vector<double>> curves;  // [task][epoch]
  std::vector<double> final_alpha;
  std::vector<std::optional<int>> epochs_to_cross;  // first epoch on the other side of 0.5
};

AlphaSummary alpha_trajectory(const train::History& history);

nlohmann::json to_json(const BoundaryReport& r);
nlohmann::json to_json(const ReductionReport& r);
nlohmann::json to_json(const DominanceReport& r);

}  // namespace smtl::probes
