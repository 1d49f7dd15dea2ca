// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "smtl/tensor.hpp"

namespace smtl::synth {

enum class TaskKind { kRegression, kClassification };

std::string_view kind_name(TaskKind k);
TaskKind parse_kind(std::string_view name);

struct TaskGenSpec {
  TaskKind kind = TaskKind::kRegression;
  std::size_t out_dim = 1;  // regression width, or class count K
  double rho = 0.0;
  std::optional<std::size_t> head_id;  // tasks with equal head ids share the head map

  friend bool operator==(const TaskGenSpec&, const TaskGenSpec&) = default;
};

struct GeneratorSpec {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t k = 0;       // latent width
  std::size_t hidden = 16;  // hidden width of the U / V_t networks
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::vector<TaskGenSpec> tasks;
  std::optional<std::size_t> outlier;

  std::size_t tasks_count() const { return tasks.size(); }
  void validate() const;
  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  friend bool operator==(const Splits&, const Splits&) = default;
};

struct TaskBundle {
  GeneratorSpec spec;
  Tensor X;               // [n, d]
  std::vector<Tensor> Y;  // per task: [n, out] or one-hot [n, K]
  Splits splits;

  std::size_t n() const { return X.rows(); }
  std::size_t tasks() const { return Y.size(); }
  const std::vector<std::size_t>& split_indices(std::string_view name) const;
  friend bool operator==(const TaskBundle&, const TaskBundle&) = default;
};

/// X ~ N(0, I). A random rotation splits input space into two halves: the
/// shared map U reads one half, every task-private map V_t the other, so a
/// task with rho = 0 is independent of U. Targets come from
/// head_t(rho U(x) + (1 - rho) V_t(x)) plus N(0, noise^2); classification
/// takes the argmax as a one-hot label. Every random draw is keyed by
/// (seed, role, task index). All data lands in splits.train until split().
TaskBundle generate(const GeneratorSpec& spec);

/// head_t(U(x)) for every row: the part of task t's signal that is shared.
Tensor shared_features(const GeneratorSpec& spec, const Tensor& X, std::size_t t);

/// rho = 0.9 for every task except `outlier` (rho = 0).
GeneratorSpec outlier_spec(GeneratorSpec base, std::size_t outlier);
TaskBundle make_outlier_suite(const GeneratorSpec& base, std::size_t outlier);

/// Seeded shuffle into train / val / test; sizes round(f * n), rest to test.
void split(TaskBundle& bundle, std::span<const double> fractions, std::uint64_t seed);

nlohmann::json spec_to_json(const GeneratorSpec& spec);
GeneratorSpec spec_from_json(const nlohmann::json& j);  // strict

/// manifest.json (spec echo, shapes, splits, per-blob CRC32) plus one .bin
/// blob per array.
void save_bundle(const TaskBundle& bundle, const std::filesystem::path& dir);
TaskBundle load_bundle(const std::filesystem::path& dir);

/// CRC32 of the manifest text; identifies data + splits.
std::string bundle_checksum(const TaskBundle& bundle);
std::string bundle_checksum(const std::filesystem::path& dir);

}  // namespace smtl::synth
