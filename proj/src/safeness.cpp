// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "smtl/safeness.hpp"

#include <cmath>
#include <numeric>

#include "smtl/error.hpp"
#include "smtl/io.hpp"

namespace smtl::safeness {

using nlohmann::json;

extern const std::string_view kBenchmarkTablesJson;

std::vector<std::size_t> task_groups(std::span<const MetricDef> metrics) {
  std::vector<std::size_t> groups;
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    if (i == 0 || metrics[i].task != metrics[i - 1].task) {
      groups.push_back(1);
    } else {
      ++groups.back();
    }
  }
  return groups;
}

double delta(double m_val, double stl_val, bool lower_is_better) {
  return lower_is_better ? -(m_val - stl_val) : m_val - stl_val;
}

namespace {

void check_groups(std::size_t n, std::span<const std::size_t> groups) {
  if (groups.empty()) throw InvalidArgument("at least one task group required");
  std::size_t total = 0;
  for (auto g : groups) {
    if (g == 0) throw InvalidArgument("task with no metrics");
    total += g;
  }
  if (total != n) {
    throw InvalidArgument("task groups cover " + std::to_string(total) + " metrics, " + std::to_string(n) +
                          " given");
  }
}

template <class F>
double nested_mean(std::span<const std::size_t> groups, F term) {
  double outer = 0.0;
  std::size_t i = 0;
  for (auto g : groups) {
    double inner = 0.0;
    for (std::size_t j = 0; j < g; ++j, ++i) inner += term(i);
    outer += inner / static_cast<double>(g);
  }
  return outer / static_cast<double>(groups.size());
}

}  // namespace

double overall_improvement(std::span<const double> deltas, std::span<const double> stl,
                           std::span<const std::size_t> groups) {
  if (deltas.size() != stl.size()) throw InvalidArgument("deltas and STL values differ in length");
  check_groups(deltas.size(), groups);
  for (std::size_t i = 0; i < stl.size(); ++i) {
    if (stl[i] == 0.0) {
      throw InvalidArgument("STL value of metric " + std::to_string(i) + " is 0; relative improvement undefined");
    }
  }
  return nested_mean(groups, [&](std::size_t i) { return deltas[i] / stl[i]; });
}

double eta_hat(std::span<const double> deltas, std::span<const std::size_t> groups) {
  check_groups(deltas.size(), groups);
  return nested_mean(groups, [&](std::size_t i) { return deltas[i] >= 0.0 ? 1.0 : 0.0; }) * 100.0;
}

std::string_view label_name(Label l) {
  switch (l) {
    case Label::kSafe: return "safe";
    case Label::kPartiallySafe: return "partially-safe";
    case Label::kFullyUnsafe: return "fully-unsafe";
  }
  return "?";
}

Label parse_label(std::string_view name) {
  for (auto l : {Label::kSafe, Label::kPartiallySafe, Label::kFullyUnsafe}) {
    if (label_name(l) == name) return l;
  }
  throw InvalidArgument("unknown safeness label '" + std::string(name) + "'");
}

Label classify(double eta) {
  if (!(eta >= 0.0 && eta <= 100.0)) throw InvalidArgument("eta_hat must lie in [0,100]");
  if (eta == 100.0) return Label::kSafe;
  if (eta == 0.0) return Label::kFullyUnsafe;
  return Label::kPartiallySafe;
}

MethodReport report_from_deltas(std::string method, std::vector<double> deltas, std::span<const double> stl,
                                std::span<const std::size_t> groups) {
  MethodReport r;
  r.method = std::move(method);
  r.delta_i = overall_improvement(deltas, stl, groups);
  r.eta_hat = eta_hat(deltas, groups);
  r.label = classify(r.eta_hat);
  r.deltas = std::move(deltas);
  return r;
}

SafenessReport build_report(std::vector<MetricDef> metrics, std::vector<double> stl,
                            std::span<const MethodResult> methods) {
  if (metrics.size() != stl.size()) throw InvalidArgument("STL row does not match the metric definitions");
  const auto groups = task_groups(metrics);
  SafenessReport rep;
  for (const auto& m : methods) {
    if (m.values.size() != metrics.size()) {
      throw InvalidArgument("method '" + m.method + "' reports " + std::to_string(m.values.size()) +
                            " metrics, expected " + std::to_string(metrics.size()));
    }
    std::vector<double> d(metrics.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = delta(m.values[i], stl[i], metrics[i].lower_is_better);
    MethodReport r = report_from_deltas(m.method, std::move(d), stl, groups);
    r.values = m.values;
    rep.methods.push_back(std::move(r));
  }
  rep.metrics = std::move(metrics);
  rep.stl = std::move(stl);
  return rep;
}

std::string render_report(const SafenessReport& report, Format format) {
  if (format == Format::kCsv) {
    std::string s = "method";
    for (const auto& m : report.metrics) s += "," + m.column();
    s += ",delta_I,eta_hat,label\n";
    for (const auto& r : report.methods) {
      s += r.method;
      for (double d : r.deltas) s += "," + io::fmt_exact(d);
      s += "," + io::fmt_exact(r.delta_i) + "," + io::fmt_exact(r.eta_hat) + "," + std::string(label_name(r.label)) +
           "\n";
    }
    return s;
  }
  json metrics = json::array();
  for (const auto& m : report.metrics) {
    metrics.push_back({{"task", m.task}, {"name", m.name}, {"lower_is_better", m.lower_is_better}});
  }
  json methods = json::array();
  for (const auto& r : report.methods) {
    methods.push_back({{"method", r.method},
                       {"values", r.values},
                       {"deltas", r.deltas},
                       {"delta_I", r.delta_i},
                       {"eta_hat", r.eta_hat},
                       {"label", label_name(r.label)}});
  }
  json j = {{"metrics", metrics}, {"stl", report.stl}, {"methods", methods}};
  return j.dump(2) + "\n";
}

SafenessReport report_from_json(const json& j) {
  SafenessReport rep;
  try {
    for (const auto& m : j.at("metrics")) {
      rep.metrics.push_back(
          {m.at("task").get<std::string>(), m.at("name").get<std::string>(), m.at("lower_is_better").get<bool>()});
    }
    rep.stl = j.at("stl").get<std::vector<double>>();
    for (const auto& m : j.at("methods")) {
      MethodReport r;
      r.method = m.at("method").get<std::string>();
      r.values = m.at("values").get<std::vector<double>>();
      r.deltas = m.at("deltas").get<std::vector<double>>();
      r.delta_i = m.at("delta_I").get<double>();
      r.eta_hat = m.at("eta_hat").get<double>();
      r.label = parse_label(m.at("label").get<std::string>());
      rep.methods.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed safeness report: ") + e.what());
  }
  return rep;
}

Fixtures parse_fixtures(std::string_view json_text) {
  Fixtures f;
  try {
    const json j = json::parse(json_text);
    f.delta_i_tolerance = j.at("delta_i_tolerance").get<double>();
    for (const auto& d : j.at("datasets")) {
      FixtureTable t;
      t.dataset = d.at("dataset").get<std::string>();
      t.table = d.at("table").get<int>();
      t.eta_tolerance = d.at("eta_tolerance").get<double>();
      for (const auto& m : d.at("metrics")) {
        t.metrics.push_back(
            {m.at("task").get<std::string>(), m.at("name").get<std::string>(), m.at("lower_is_better").get<bool>()});
      }
      t.stl = d.at("stl").get<std::vector<double>>();
      for (const auto& m : d.at("methods")) {
        t.methods.push_back({m.at("method").get<std::string>(), m.at("deltas").get<std::vector<double>>(),
                             m.at("delta_i").get<double>(), m.at("eta_hat").get<double>()});
      }
      f.tables.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed fixture file: ") + e.what());
  }
  return f;
}

const Fixtures& embedded_fixtures() {
  static const Fixtures f = parse_fixtures(kBenchmarkTablesJson);
  return f;
}

std::vector<RowCheck> reproduce_tables(const Fixtures& f) {
  std::vector<RowCheck> out;
  for (const auto& t : f.tables) {
    const auto groups = task_groups(t.metrics);
    for (const auto& m : t.methods) {
      const MethodReport r = report_from_deltas(m.method, m.deltas, t.stl, groups);
      RowCheck c;
      c.dataset = t.dataset;
      c.table = t.table;
      c.method = m.method;
      c.delta_i = r.delta_i;
      c.published_delta_i = m.delta_i;
      c.delta_i_ok = std::abs(r.delta_i - m.delta_i) <= f.delta_i_tolerance;
      c.eta_hat = r.eta_hat;
      c.published_eta_hat = m.eta_hat;
      const double eta_diff = std::abs(r.eta_hat - m.eta_hat);
      c.eta_exact = eta_diff <= 1e-9;
      c.eta_ok = t.eta_tolerance == 0.0 ? c.eta_exact : eta_diff <= t.eta_tolerance;
      out.push_back(std::move(c));
    }
  }
  return out;
}

}  // namespace smtl::safeness
