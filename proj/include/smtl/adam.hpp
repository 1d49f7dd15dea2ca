// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "smtl/param_store.hpp"
#include "smtl/tape.hpp"

namespace smtl::train {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moments and step counts are kept per parameter path,
/// so parameters stepped on different schedules each see their own t.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {});

  /// Updates every path in `grads`; other parameters are untouched. A
  /// non-finite gradient throws DivergenceError before anything changes.
  void step(ParamStore& params, const GradMap& grads);

  const AdamConfig& config() const noexcept { return cfg_; }
  void set_lr(double lr);
  std::uint64_t steps(const std::string& path) const;

 private:
  struct Slot {
    Tensor m;
    Tensor v;
    std::uint64_t t = 0;
  };
  AdamConfig cfg_;
  std::map<std::string, Slot> slots_;
};

}  // namespace smtl::train
