// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "smtl/adam.hpp"

#include <cmath>

#include "smtl/error.hpp"

namespace smtl::train {

Adam::Adam(AdamConfig cfg) : cfg_(cfg) {
  set_lr(cfg.lr);
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0) || !(cfg.eps > 0.0)) {
    throw InvalidArgument("Adam needs beta1, beta2 in [0,1) and eps > 0");
  }
}

void Adam::set_lr(double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidArgument("learning rate must be positive");
  cfg_.lr = lr;
}

std::uint64_t Adam::steps(const std::string& path) const {
  auto it = slots_.find(path);
  return it == slots_.end() ? 0 : it->second.t;
}

void Adam::step(ParamStore& params, const GradMap& grads) {
  for (const auto& [path, g] : grads) {
    if (!g.all_finite()) throw DivergenceError("non-finite gradient for '" + path + "'");
    if (params.at(path).shape() != g.shape()) {
      throw ShapeError("gradient shape " + shape_str(g.shape()) + " does not match parameter '" + path + "'");
    }
  }
  for (const auto& [path, g] : grads) {
    Tensor& theta = params.at(path);
    auto [it, fresh] = slots_.try_emplace(path);
    Slot& s = it->second;
    if (fresh) {
      s.m = Tensor(g.shape());
      s.v = Tensor(g.shape());
    }
    ++s.t;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < g.size(); ++i) {
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g[i];
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = s.m[i] / c1;
      const double vhat = s.v[i] / c2;
      theta[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace smtl::train
