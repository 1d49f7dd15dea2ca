// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace smtl {

/// SMTL_THREADS if set to a positive integer, else the hardware count (>= 1).
std::size_t worker_count();

/// Runs fn(0..n-1) on up to worker_count() threads. Results must be written
/// to per-index slots; the lowest-index exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace smtl
