// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace smtl::safeness {

struct MetricDef {
  std::string task;
  std::string name;
  bool lower_is_better = false;  // direction flag p = 1

  std::string column() const { return task + "." + name; }
  friend bool operator==(const MetricDef&, const MetricDef&) = default;
};

/// Consecutive metrics of one task form a group; returns the group sizes m_t.
std::vector<std::size_t> task_groups(std::span<const MetricDef> metrics);

/// (-1)^p (m - stl).
double delta(double m_val, double stl_val, bool lower_is_better);

/// (1/m) sum_t (1/m_t) sum_j delta_tj / stl_tj. Throws if any stl is 0.
double overall_improvement(std::span<const double> deltas, std::span<const double> stl,
                           std::span<const std::size_t> groups);

/// (1/m) sum_t (1/m_t) sum_j step(delta_tj) * 100, step(0) = 1.
double eta_hat(std::span<const double> deltas, std::span<const std::size_t> groups);

enum class Label { kSafe, kPartiallySafe, kFullyUnsafe };

std::string_view label_name(Label l);
Label parse_label(std::string_view name);
Label classify(double eta);

struct MethodResult {
  std::string method;
  std::vector<double> values;  // aligned with the metric defs
};

struct MethodReport {
  std::string method;
  std::vector<double> values;  // may be empty when built from deltas only
  std::vector<double> deltas;
  double delta_i = 0.0;
  double eta_hat = 0.0;
  Label label = Label::kSafe;

  friend bool operator==(const MethodReport&, const MethodReport&) = default;
};

struct SafenessReport {
  std::vector<MetricDef> metrics;
  std::vector<double> stl;
  std::vector<MethodReport> methods;  // input order

  friend bool operator==(const SafenessReport&, const SafenessReport&) = default;
};

SafenessReport build_report(std::vector<MetricDef> metrics, std::vector<double> stl,
                            std::span<const MethodResult> methods);

/// Same, from already-signed deltas.
MethodReport report_from_deltas(std::string method, std::vector<double> deltas, std::span<const double> stl,
                                std::span<const std::size_t> groups);

enum class Format { kCsv, kJson };

/// CSV: header method,<task>.<metric>...,delta_I,eta_hat,label with one row of
/// deltas per method. JSON carries everything needed to rebuild the report.
std::string render_report(const SafenessReport& report, Format format);
SafenessReport report_from_json(const nlohmann::json& j);

struct FixtureMethod {
  std::string method;
  std::vector<double> deltas;
  double delta_i = 0.0;
  double eta_hat = 0.0;
};

struct FixtureTable {
  std::string dataset;
  int table = 0;
  double eta_tolerance = 0.0;
  std::vector<MetricDef> metrics;
  std::vector<double> stl;
  std::vector<FixtureMethod> methods;
};

struct Fixtures {
  double delta_i_tolerance = 0.0;
  std::vector<FixtureTable> tables;
};

Fixtures parse_fixtures(std::string_view json_text);
/// The table fixtures compiled into the library.
const Fixtures& embedded_fixtures();

struct RowCheck {
  std::string dataset;
  int table = 0;
  std::string method;
  double delta_i = 0.0;
  double published_delta_i = 0.0;
  bool delta_i_ok = false;
  double eta_hat = 0.0;
  double published_eta_hat = 0.0;
  bool eta_ok = false;
  bool eta_exact = false;

  bool ok() const { return delta_i_ok && eta_ok; }
};

/// Recomputes delta_I and eta_hat of every row. eta tolerance 0 means exact
/// (within 1e-9).
std::vector<RowCheck> reproduce_tables(const Fixtures& f);

}  // namespace smtl::safeness
