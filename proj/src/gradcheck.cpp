// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "smtl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "smtl/error.hpp"

namespace smtl {

GradMap finite_diff_grad(const LossFn& loss, const ParamStore& params, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite_diff_grad: step must be positive");
  ParamStore work = params;
  GradMap out;
  for (const auto& [path, value] : params) {
    Tensor g(value.shape());
    Tensor& slot = work.at(path);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = slot[i];
      slot[i] = orig + h;
      const double up = loss(work);
      slot[i] = orig - h;
      const double down = loss(work);
      slot[i] = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("non-finite loss when perturbing " + path + "[" + std::to_string(i) + "]");
      }
      g[i] = (up - down) / (2.0 * h);
    }
    out.emplace(path, std::move(g));
  }
  return out;
}

double grad_relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

double max_relative_error(const GradMap& a, const GradMap& b, double floor) {
  double worst = 0.0;
  for (const auto& [path, ga] : a) {
    auto it = b.find(path);
    if (it == b.end()) continue;
    const Tensor& gb = it->second;
    if (ga.shape() != gb.shape()) throw ShapeError("gradient shape mismatch at " + path);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      worst = std::max(worst, grad_relative_error(ga[i], gb[i], floor));
    }
  }
  return worst;
}

}  // namespace smtl
