// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>

#include "smtl/tape.hpp"
#include "smtl/tensor.hpp"

namespace smtl::train {

enum class LossKind { kCrossEntropy, kL1, kMSE, kCosine };

std::string_view loss_name(LossKind k);
LossKind parse_loss(std::string_view name);

/// Batch-mean losses over [batch, width] predictions:
///   cross_entropy  -(1/n) sum_i log p_i[label_i]   (targets one-hot rows)
///   l1, mse        mean over all elements of |r| and r^2
///   cosine         1 - mean_i cos(pred_i, target_i)
Var loss_node(Tape& tape, LossKind kind, Var pred, const Tensor& target);

double compute_loss(LossKind kind, const Tensor& pred, const Tensor& target);

}  // namespace smtl::train
