// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "smtl/loss.hpp"

#include <cmath>

#include "smtl/error.hpp"

namespace smtl::train {

std::string_view loss_name(LossKind k) {
  switch (k) {
    case LossKind::kCrossEntropy: return "cross_entropy";
    case LossKind::kL1: return "l1";
    case LossKind::kMSE: return "mse";
    case LossKind::kCosine: return "cosine";
  }
  return "?";
}

LossKind parse_loss(std::string_view name) {
  for (auto k : {LossKind::kCrossEntropy, LossKind::kL1, LossKind::kMSE, LossKind::kCosine}) {
    if (loss_name(k) == name) return k;
  }
  throw InvalidArgument("unknown loss kind '" + std::string(name) + "'");
}

namespace {

void check_onehot(const Tensor& y) {
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < y.cols(); ++c) {
      const double v = y.at(r, c);
      if (v != 0.0 && v != 1.0) throw InvalidArgument("cross_entropy targets must be one-hot rows");
      sum += v;
    }
    if (sum != 1.0) throw InvalidArgument("cross_entropy targets must be one-hot rows");
  }
}

// [batch, width] -> [batch, 1] row sums.
Var row_sum(Tape& tape, Var x) {
  const std::size_t width = tape.value(x).cols();
  return tape.matmul(x, tape.constant(Tensor(Shape{width, 1}, 1.0)));
}

}  // namespace

Var loss_node(Tape& tape, LossKind kind, Var pred, const Tensor& target) {
  const Tensor p = tape.value(pred);  // copy: adding nodes may move tape storage
  if (p.shape() != target.shape() || p.rank() != 2) {
    throw ShapeError(std::string(loss_name(kind)) + ": prediction " + shape_str(p.shape()) +
                     " vs target " + shape_str(target.shape()));
  }
  Var y = tape.constant(target);
  switch (kind) {
    case LossKind::kCrossEntropy: {
      check_onehot(target);
      // One-hot rows select the labelled probability; only it enters the log.
      Var picked = row_sum(tape, tape.mul(pred, y));
      return tape.scale(tape.reduce_mean(tape.log(picked)), -1.0);
    }
    case LossKind::kL1: {
      Var r = tape.sub(pred, y);
      return tape.reduce_mean(tape.add(tape.relu(r), tape.relu(tape.scale(r, -1.0))));
    }
    case LossKind::kMSE: {
      Var r = tape.sub(pred, y);
      return tape.reduce_mean(tape.mul(r, r));
    }
    case LossKind::kCosine: {
      const std::size_t n = p.rows(), w = p.cols();
      Tensor inv_target_norm(Shape{n, 1});
      for (std::size_t r = 0; r < n; ++r) {
        double pn = 0.0, tn = 0.0;
        for (std::size_t c = 0; c < w; ++c) {
          pn += p.at(r, c) * p.at(r, c);
          tn += target.at(r, c) * target.at(r, c);
        }
        if (pn == 0.0 || tn == 0.0) {
          throw InvalidArgument("cosine loss: zero-norm vector in row " + std::to_string(r));
        }
        inv_target_norm[r] = 1.0 / std::sqrt(tn);
      }
      Var dot = row_sum(tape, tape.mul(pred, y));
      Var inv_pred_norm = tape.exp(tape.scale(tape.log(row_sum(tape, tape.mul(pred, pred))), -0.5));
      Var cos = tape.mul(tape.mul(dot, inv_pred_norm), tape.constant(inv_target_norm));
      return tape.sub(tape.constant(Tensor::scalar(1.0)), tape.reduce_mean(cos));
    }
  }
  throw InvalidArgument("unknown loss kind");
}

double compute_loss(LossKind kind, const Tensor& pred, const Tensor& target) {
  Tape tape;
  return tape.value(loss_node(tape, kind, tape.constant(pred), target)).item();
}

}  // namespace smtl::train
