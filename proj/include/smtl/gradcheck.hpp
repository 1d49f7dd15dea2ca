// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "smtl/param_store.hpp"
#include "smtl/tape.hpp"

namespace smtl {

using LossFn = std::function<double(const ParamStore&)>;

/// Central differences (L(θ + h e_i) - L(θ - h e_i)) / 2h over every
/// coordinate of every parameter. Independent of the tape; this is the oracle
/// for gradient claims. Throws NumericError naming the coordinate if the loss
/// is non-finite at a perturbed point.
GradMap finite_diff_grad(const LossFn& loss, const ParamStore& params, double h = 1e-5);

/// |a - b| / max(|a|, |b|, floor). The floor keeps coordinates whose true
/// gradient is ~0 from reporting rounding noise as large relative error.
double grad_relative_error(double a, double b, double floor = 1e-4);

/// Max grad_relative_error over all coordinates present in both maps.
double max_relative_error(const GradMap& a, const GradMap& b, double floor = 1e-4);

}  // namespace smtl
