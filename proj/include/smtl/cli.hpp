// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "smtl/model.hpp"
#include "smtl/synth.hpp"
#include "smtl/trainer.hpp"

namespace smtl::cli {

enum ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kIo = 3,
  kDivergence = 4,
  kMismatch = 5,
  kAssertion = 6,
};

int exit_code_for(const std::exception& e);

/// Widths of the encoders/decoders; input_dim and heads come from the bundle.
struct ModelConfig {
  std::vector<std::size_t> encoder_hidden{16};
  std::size_t feature_dim = 8;
  std::vector<std::size_t> decoder_hidden;
  nn::Activation hidden_activation = nn::Activation::kRelu;
  nn::Activation feature_activation = nn::Activation::kRelu;

  model::ArchSpec arch_for(const synth::TaskBundle& bundle) const;
};

struct CompareConfig {
  std::optional<std::filesystem::path> stl;
  std::vector<std::filesystem::path> methods;
  std::string split = "val";
};

struct ProbeConfig {
  std::vector<model::Variant> reduction;  // gated variants to check
  std::vector<model::Variant> dominance;  // references (STL / DMTL)
  int continue_epochs = 200;
  bool boundary = false;
  std::size_t boundary_task = 0;
  double boundary_point = 0.0;
  std::optional<std::filesystem::path> boundary_checkpoint;  // else identical-encoder toy
};

struct RunConfig {
  std::string raw;  // the config file bytes
  std::uint64_t seed = 0;
  std::optional<synth::GeneratorSpec> generator;
  std::optional<std::filesystem::path> bundle;
  std::vector<double> split_fractions{0.8, 0.2};
  std::uint64_t split_seed = 0;
  std::vector<model::Variant> variants;
  ModelConfig model;
  train::TrainConfig train;
  std::optional<std::filesystem::path> checkpoint;
  CompareConfig compare;
  ProbeConfig probes;
};

/// Strict parse; relative paths resolve against `base_dir`. Throws ConfigError.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir,
                       std::optional<std::uint64_t> seed_override = std::nullopt);

/// Generated (and split) bundle, or the one on disk.
synth::TaskBundle materialize_bundle(const RunConfig& cfg);

int cmd_gen_data(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_train(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_eval(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_compare(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_probe(const RunConfig& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_reproduce_tables(const std::optional<std::filesystem::path>& out, std::ostream& log);

/// Full command line: smtl <command> --config <file> --out <dir> [--seed N].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace smtl::cli
