// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "smtl/cli.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"

#include "smtl/error.hpp"
#include "smtl/io.hpp"
#include "smtl/json_util.hpp"
#include "smtl/parallel.hpp"
#include "smtl/probes.hpp"
#include "smtl/safeness.hpp"

namespace smtl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::exception& e) {
  const auto* err = dynamic_cast<const Error*>(&e);
  if (!err) return 1;
  switch (err->code()) {
    case Errc::kConfig:
    case Errc::kInvalidArgument:
    case Errc::kShape: return kConfig;
    case Errc::kIo:
    case Errc::kChecksum: return kIo;
    case Errc::kDivergence:
    case Errc::kNumeric: return kDivergence;
    case Errc::kMismatch: return kMismatch;
    case Errc::kAssertion: return kAssertion;
  }
  return 1;
}

model::ArchSpec ModelConfig::arch_for(const synth::TaskBundle& bundle) const {
  model::ArchSpec a;
  a.input_dim = bundle.X.cols();
  a.encoder_hidden = encoder_hidden;
  a.feature_dim = feature_dim;
  a.decoder_hidden = decoder_hidden;
  a.hidden_activation = hidden_activation;
  a.feature_activation = feature_activation;
  for (std::size_t t = 0; t < bundle.tasks(); ++t) {
    const bool cls = bundle.spec.tasks[t].kind == synth::TaskKind::kClassification;
    a.heads.push_back({bundle.Y[t].cols(), cls ? nn::Activation::kRowSoftmax : nn::Activation::kIdentity});
  }
  try {
    a.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return a;
}

namespace {

// Re-throws library validation errors as configuration errors.
template <class F>
auto as_config(std::string_view where, F&& f) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string(where) + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::vector<model::Variant> variant_list(const json& j, std::string_view where) {
  std::vector<model::Variant> out;
  if (j.is_string()) {
    out.push_back(as_config(where, [&] { return model::parse_variant(j.get<std::string>()); }));
    return out;
  }
  if (!j.is_array()) throw ConfigError(std::string(where) + ": expected a variant name or a list");
  for (const auto& v : j) {
    if (!v.is_string()) throw ConfigError(std::string(where) + ": variant names are strings");
    out.push_back(as_config(where, [&] { return model::parse_variant(v.get<std::string>()); }));
  }
  return out;
}

ModelConfig parse_model(const json& j) {
  constexpr std::string_view w = "model";
  jsonu::check_keys(j, {"encoder_hidden", "feature_dim", "decoder_hidden", "hidden_activation", "feature_activation"},
                    w);
  ModelConfig m;
  m.encoder_hidden = jsonu::optional(j, "encoder_hidden", m.encoder_hidden, w);
  m.feature_dim = jsonu::optional(j, "feature_dim", m.feature_dim, w);
  m.decoder_hidden = jsonu::optional(j, "decoder_hidden", m.decoder_hidden, w);
  m.hidden_activation = as_config(w, [&] {
    return nn::parse_activation(jsonu::optional<std::string>(j, "hidden_activation", "relu", w));
  });
  m.feature_activation = as_config(w, [&] {
    return nn::parse_activation(jsonu::optional<std::string>(j, "feature_activation", "relu", w));
  });
  if (m.feature_dim == 0) throw ConfigError("model: feature_dim must be positive");
  return m;
}

train::TrainConfig parse_train(const json& j, std::uint64_t seed) {
  constexpr std::string_view w = "train";
  jsonu::check_keys(j, {"epochs", "batch_size", "lr", "tau", "bilevel", "k", "losses"}, w);
  train::TrainConfig c;
  c.seed = seed;
  c.epochs = jsonu::optional(j, "epochs", c.epochs, w);
  c.batch_size = jsonu::optional(j, "batch_size", c.batch_size, w);
  c.lr = jsonu::optional(j, "lr", c.lr, w);
  c.bilevel = jsonu::optional(j, "bilevel", c.bilevel, w);
  c.k = jsonu::optional(j, "k", c.k, w);
  if (j.contains("tau")) {
    const json& t = j.at("tau");
    jsonu::check_keys(t, {"tau0", "tau_min", "rate"}, "train.tau");
    c.tau.tau0 = jsonu::optional(t, "tau0", c.tau.tau0, "train.tau");
    c.tau.tau_min = jsonu::optional(t, "tau_min", c.tau.tau_min, "train.tau");
    c.tau.rate = jsonu::optional(t, "rate", c.tau.rate, "train.tau");
  }
  if (j.contains("losses")) {
    const json& l = j.at("losses");
    if (!l.is_array()) throw ConfigError("train.losses: expected an array");
    for (const auto& e : l) {
      if (e.is_null()) {
        c.losses.emplace_back(std::nullopt);
      } else if (e.is_string()) {
        c.losses.emplace_back(as_config("train.losses", [&] { return train::parse_loss(e.get<std::string>()); }));
      } else {
        throw ConfigError("train.losses: entries are loss names or null");
      }
    }
  }
  c.validate();
  return c;
}

ProbeConfig parse_probes(const json& j, const fs::path& base) {
  constexpr std::string_view w = "probes";
  jsonu::check_keys(j, {"reduction", "dominance", "boundary"}, w);
  ProbeConfig p;
  if (j.contains("reduction")) p.reduction = variant_list(j.at("reduction"), "probes.reduction");
  if (j.contains("dominance")) {
    const json& d = j.at("dominance");
    jsonu::check_keys(d, {"references", "continue_epochs"}, "probes.dominance");
    p.dominance = variant_list(jsonu::required<json>(d, "references", "probes.dominance"), "probes.dominance");
    p.continue_epochs = jsonu::optional(d, "continue_epochs", p.continue_epochs, "probes.dominance");
    if (p.continue_epochs < 0) throw ConfigError("probes.dominance.continue_epochs must be >= 0");
  }
  if (j.contains("boundary")) {
    const json& b = j.at("boundary");
    jsonu::check_keys(b, {"task", "boundary", "checkpoint"}, "probes.boundary");
    p.boundary = true;
    p.boundary_task = jsonu::optional<std::size_t>(b, "task", 0, "probes.boundary");
    p.boundary_point = jsonu::optional(b, "boundary", 0.0, "probes.boundary");
    if (p.boundary_point != 0.0 && p.boundary_point != 1.0) throw ConfigError("probes.boundary.boundary must be 0 or 1");
    if (b.contains("checkpoint")) {
      p.boundary_checkpoint = resolve(base, jsonu::required<std::string>(b, "checkpoint", "probes.boundary"));
    }
  }
  return p;
}

}  // namespace

RunConfig parse_config(const std::string& text, const fs::path& base_dir, std::optional<std::uint64_t> seed_override) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  constexpr std::string_view w = "config";
  jsonu::check_keys(doc, {"description", "seed", "generator", "bundle", "split", "variant", "variants", "model",
                          "train", "checkpoint", "compare", "probes"},
                    w);
  RunConfig c;
  c.raw = text;
  c.seed = jsonu::required<std::uint64_t>(doc, "seed", w);
  if (seed_override) c.seed = *seed_override;
  c.split_seed = c.seed;

  if (doc.contains("generator") && doc.contains("bundle")) {
    throw ConfigError("config: give either 'generator' or 'bundle', not both");
  }
  if (doc.contains("generator")) {
    json g = doc.at("generator");
    jsonu::require_object(g, "generator");
    if (!g.contains("seed")) g["seed"] = c.seed;
    c.generator = synth::spec_from_json(g);
    if (c.generator->outlier) {
      c.generator = as_config("generator", [&] { return synth::outlier_spec(*c.generator, *c.generator->outlier); });
    }
  }
  if (doc.contains("bundle")) c.bundle = resolve(base_dir, jsonu::required<std::string>(doc, "bundle", w));
  if (doc.contains("split")) {
    const json& s = doc.at("split");
    jsonu::check_keys(s, {"fractions", "seed"}, "split");
    c.split_fractions = jsonu::required<std::vector<double>>(s, "fractions", "split");
    c.split_seed = jsonu::optional(s, "seed", c.seed, "split");
    if (c.split_fractions.empty() || c.split_fractions.size() > 2) {
      throw ConfigError("split.fractions: one or two fractions (train[, val])");
    }
  }
  if (doc.contains("variant") && doc.contains("variants")) {
    throw ConfigError("config: give either 'variant' or 'variants', not both");
  }
  if (doc.contains("variant")) c.variants = variant_list(doc.at("variant"), "variant");
  if (doc.contains("variants")) c.variants = variant_list(doc.at("variants"), "variants");
  if (doc.contains("model")) c.model = parse_model(doc.at("model"));
  c.train = parse_train(doc.value("train", json::object()), c.seed);
  if (doc.contains("checkpoint")) c.checkpoint = resolve(base_dir, jsonu::required<std::string>(doc, "checkpoint", w));
  if (doc.contains("compare")) {
    const json& cmp = doc.at("compare");
    jsonu::check_keys(cmp, {"stl", "methods", "split"}, "compare");
    if (cmp.contains("stl")) c.compare.stl = resolve(base_dir, jsonu::required<std::string>(cmp, "stl", "compare"));
    for (const auto& m : jsonu::optional(cmp, "methods", std::vector<std::string>{}, "compare")) {
      c.compare.methods.push_back(resolve(base_dir, m));
    }
    c.compare.split = jsonu::optional<std::string>(cmp, "split", "val", "compare");
    if (c.compare.split != "train" && c.compare.split != "val" && c.compare.split != "test") {
      throw ConfigError("compare.split must be train, val or test");
    }
  }
  if (doc.contains("probes")) {
    c.probes = parse_probes(doc.at("probes"), base_dir);
  } else {
    c.probes.reduction = {model::Variant::kSMTL, model::Variant::kSMTLc};
    c.probes.dominance = {model::Variant::kSTL, model::Variant::kDMTL};
  }
  return c;
}

synth::TaskBundle materialize_bundle(const RunConfig& cfg) {
  if (cfg.bundle) return synth::load_bundle(*cfg.bundle);
  if (!cfg.generator) throw ConfigError("config needs a 'generator' or a 'bundle'");
  synth::TaskBundle b = synth::generate(*cfg.generator);
  as_config("split", [&] {
    synth::split(b, cfg.split_fractions, cfg.split_seed);
    return 0;
  });
  return b;
}

namespace {

void write_config_echo(const RunConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  io::write_text(out / "config.json", cfg.raw);
}

// Lists every artifact under `out` (except report.json) with its CRC32.
json file_manifest(const fs::path& out) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    if (e.is_regular_file() && e.path() != out / "report.json") files.push_back(fs::relative(e.path(), out));
  }
  std::sort(files.begin(), files.end());
  json list = json::array();
  for (const auto& f : files) {
    list.push_back({{"path", f.generic_string()}, {"crc32", io::hex32(io::crc32(io::read_bytes(out / f)))}});
  }
  return list;
}

void write_report(const fs::path& out, json report) {
  report["files"] = file_manifest(out);
  io::write_text(out / "report.json", report.dump(2) + "\n");
}

std::string metrics_csv(const std::map<std::string, std::vector<train::TaskEval>>& by_split) {
  std::string s = "split,task,metric,lower_is_better,value\n";
  for (const auto* split : {"train", "val", "test"}) {
    auto it = by_split.find(split);
    if (it == by_split.end()) continue;
    for (std::size_t t = 0; t < it->second.size(); ++t) {
      const auto& ev = it->second[t];
      s += fmt::format("{},{},loss,1,{}\n", split, t, io::fmt_exact(ev.loss));
      for (const auto& m : ev.metrics) {
        s += fmt::format("{},{},{},{},{}\n", split, t, m.name, m.lower_is_better ? 1 : 0, io::fmt_exact(m.value));
      }
    }
  }
  return s;
}

json metrics_json(const std::map<std::string, std::vector<train::TaskEval>>& by_split) {
  json j = json::object();
  for (const auto& [split, evals] : by_split) {
    json tasks = json::array();
    for (const auto& ev : evals) {
      json metrics = json::array();
      for (const auto& m : ev.metrics) {
        metrics.push_back({{"name", m.name}, {"lower_is_better", m.lower_is_better}, {"value", m.value}});
      }
      tasks.push_back({{"loss", ev.loss}, {"metrics", metrics}});
    }
    j[split] = tasks;
  }
  return j;
}

std::map<std::string, std::vector<train::TaskEval>> evaluate_splits(const model::Assembly& a,
                                                                     const synth::TaskBundle& b,
                                                                     std::span<const train::LossKind> losses) {
  std::map<std::string, std::vector<train::TaskEval>> out;
  for (const auto* split : {"train", "val", "test"}) {
    const auto& idx = b.split_indices(split);
    if (!idx.empty()) out[split] = train::evaluate(a, b, idx, losses);
  }
  return out;
}

std::string alpha_csv(const model::Assembly& a) {
  std::string s = "task,alpha\n";
  for (const auto& [t, alpha] : model::alpha_report(a)) s += fmt::format("{},{}\n", t, io::fmt_fixed(alpha, 4));
  return s;
}

struct Prepared {
  synth::TaskBundle bundle;
  model::Assembly assembly;
  std::vector<train::LossKind> losses;
};

Prepared prepare_training(const RunConfig& cfg, model::Variant v) {
  Prepared p;
  p.bundle = materialize_bundle(cfg);
  const auto arch = cfg.model.arch_for(p.bundle);
  p.assembly = model::build(v, arch, cfg.seed);
  p.losses = train::resolve_losses(p.assembly, p.bundle, cfg.train);
  if (cfg.train.bilevel) {
    if (!model::has_gates(v)) throw ConfigError("bi-level training needs a gated variant");
    if (p.bundle.splits.val.empty()) throw ConfigError("bi-level training needs a val split");
  }
  return p;
}

// Trains and writes a complete artifact directory; returns the exit code.
int train_into(const RunConfig& cfg, Prepared p, const fs::path& out, std::ostream& log) {
  write_config_echo(cfg, out);
  model::Assembly& a = p.assembly;
  const auto result = train::train(a, p.bundle, cfg.train);
  io::write_text(out / "history.csv", result.history.to_csv());
  model::save_assembly(a, out / "checkpoint");
  const auto evals = evaluate_splits(a, p.bundle, p.losses);
  io::write_text(out / "metrics.csv", metrics_csv(evals));
  json report = {{"command", "train"},
                 {"variant", model::variant_name(a.variant)},
                 {"seed", cfg.seed},
                 {"bilevel", cfg.train.bilevel},
                 {"epochs_completed", result.history.rows.back().epoch},
                 {"diverged", result.diverged},
                 {"bundle_checksum", synth::bundle_checksum(p.bundle)},
                 {"metrics", metrics_json(evals)}};
  if (model::has_gates(a.variant)) {
    io::write_text(out / "alpha.csv", alpha_csv(a));
    json alphas = json::array();
    for (const auto& [t, alpha] : model::alpha_report(a)) alphas.push_back(alpha);
    report["alpha"] = alphas;
  }
  if (result.diverged) report["diagnostic"] = result.diagnostic;
  write_report(out, report);
  log << fmt::format("{}: {} epochs, final objective {}\n", model::variant_name(a.variant),
                     result.history.rows.back().epoch, io::fmt_exact(result.history.rows.back().objective));
  if (result.diverged) {
    log << "diverged: " << result.diagnostic << "\n";
    return kDivergence;
  }
  return kOk;
}

model::Variant single_variant(const RunConfig& cfg) {
  if (cfg.variants.size() != 1) throw ConfigError("train needs exactly one 'variant'");
  return cfg.variants.front();
}

struct RunSummary {
  std::string method;
  std::string checksum;
  std::vector<safeness::MetricDef> metrics;
  std::vector<double> values;
  json report;
};

RunSummary read_run(const fs::path& dir, const std::string& split) {
  json r;
  try {
    r = json::parse(io::read_text(dir / "report.json"));
  } catch (const json::exception& e) {
    throw IoError("malformed run report in " + dir.string() + ": " + e.what());
  }
  RunSummary s;
  try {
    s.method = r.at("variant").get<std::string>();
    s.checksum = r.at("bundle_checksum").get<std::string>();
    if (!r.at("metrics").contains(split)) {
      throw MismatchError("run " + dir.string() + " has no '" + split + "' split metrics");
    }
    const auto& tasks = r.at("metrics").at(split);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      for (const auto& m : tasks[t].at("metrics")) {
        s.metrics.push_back({"task" + std::to_string(t), m.at("name").get<std::string>(),
                             m.at("lower_is_better").get<bool>()});
        s.values.push_back(m.at("value").get<double>());
      }
    }
  } catch (const json::exception& e) {
    throw IoError("malformed run report in " + dir.string() + ": " + e.what());
  }
  s.report = std::move(r);
  return s;
}

int compare_runs(const RunConfig& cfg, const fs::path& stl_dir, const std::vector<fs::path>& method_dirs,
                 const fs::path& out, std::ostream& log) {
  const auto stl = read_run(stl_dir, cfg.compare.split);
  std::vector<RunSummary> runs;
  for (const auto& d : method_dirs) runs.push_back(read_run(d, cfg.compare.split));
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (runs[i].checksum != stl.checksum) {
      throw MismatchError("bundle checksum of " + method_dirs[i].string() + " (" + runs[i].checksum +
                          ") differs from the STL run (" + stl.checksum + ")");
    }
    if (runs[i].metrics != stl.metrics) {
      throw MismatchError("metric set of " + method_dirs[i].string() + " differs from the STL run");
    }
  }
  std::vector<safeness::MethodResult> methods;
  for (const auto& r : runs) methods.push_back({r.method, r.values});
  const auto rep = safeness::build_report(stl.metrics, stl.values, methods);

  fs::create_directories(out);
  if (!fs::exists(out / "config.json")) io::write_text(out / "config.json", cfg.raw);
  io::write_text(out / "safeness.csv", safeness::render_report(rep, safeness::Format::kCsv));
  io::write_text(out / "safeness.json", safeness::render_report(rep, safeness::Format::kJson));
  json inputs = json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    inputs.push_back({{"dir", method_dirs[i].generic_string()}, {"method", runs[i].method}});
  }
  write_report(out, {{"command", "compare"},
                     {"split", cfg.compare.split},
                     {"bundle_checksum", stl.checksum},
                     {"stl", {{"dir", stl_dir.generic_string()}, {"values", stl.values}}},
                     {"methods", inputs},
                     {"safeness", json::parse(safeness::render_report(rep, safeness::Format::kJson))}});
  for (const auto& m : rep.methods) {
    log << fmt::format("{:<10} delta_I {:+.5f}  eta_hat {:6.2f}  {}\n", m.method, m.delta_i, m.eta_hat,
                       safeness::label_name(m.label));
  }
  return kOk;
}

}  // namespace

int cmd_gen_data(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  if (!cfg.generator) throw ConfigError("gen-data needs a 'generator' section");
  const auto bundle = materialize_bundle(cfg);
  synth::save_bundle(bundle, out);
  log << fmt::format("bundle: {} tasks, n={}, train/val/test = {}/{}/{}, checksum {}\n", bundle.tasks(), bundle.n(),
                     bundle.splits.train.size(), bundle.splits.val.size(), bundle.splits.test.size(),
                     synth::bundle_checksum(bundle));
  return kOk;
}

int cmd_train(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto v = single_variant(cfg);
  return train_into(cfg, prepare_training(cfg, v), out, log);
}

int cmd_eval(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  if (!cfg.checkpoint) throw ConfigError("eval needs a 'checkpoint' directory");
  const auto bundle = materialize_bundle(cfg);
  const auto a = model::load_assembly(*cfg.checkpoint);
  const auto losses = train::resolve_losses(a, bundle, cfg.train);
  const auto evals = evaluate_splits(a, bundle, losses);
  write_config_echo(cfg, out);
  io::write_text(out / "metrics.csv", metrics_csv(evals));
  json report = {{"command", "eval"},
                 {"variant", model::variant_name(a.variant)},
                 {"seed", cfg.seed},
                 {"checkpoint", cfg.checkpoint->generic_string()},
                 {"bundle_checksum", synth::bundle_checksum(bundle)},
                 {"metrics", metrics_json(evals)}};
  if (model::has_gates(a.variant)) {
    io::write_text(out / "alpha.csv", alpha_csv(a));
  }
  write_report(out, report);
  for (const auto& [split, ev] : evals) {
    for (std::size_t t = 0; t < ev.size(); ++t) {
      log << fmt::format("{} task {}: loss {}\n", split, t, io::fmt_exact(ev[t].loss));
    }
  }
  return kOk;
}

int cmd_compare(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  if (cfg.compare.stl) {
    if (cfg.compare.methods.empty()) throw ConfigError("compare.methods is empty");
    return compare_runs(cfg, *cfg.compare.stl, cfg.compare.methods, out, log);
  }
  // Train every listed variant (concurrently), then compare against STL.
  if (std::count(cfg.variants.begin(), cfg.variants.end(), model::Variant::kSTL) != 1 || cfg.variants.size() < 2) {
    throw ConfigError("compare needs compare.stl/methods, or 'variants' with STL exactly once plus methods");
  }
  std::vector<Prepared> prepared;
  for (auto v : cfg.variants) prepared.push_back(prepare_training(cfg, v));
  fs::create_directories(out);
  io::write_text(out / "config.json", cfg.raw);
  std::vector<int> codes(prepared.size(), kOk);
  std::vector<std::string> logs(prepared.size());
  std::vector<fs::path> dirs;
  for (auto v : cfg.variants) dirs.push_back(out / "runs" / std::string(model::variant_name(v)));
  parallel_for(prepared.size(), [&](std::size_t i) {
    std::ostringstream os;
    codes[i] = train_into(cfg, std::move(prepared[i]), dirs[i], os);
    logs[i] = os.str();
  });
  for (const auto& l : logs) log << l;
  for (int c : codes) {
    if (c != kOk) return c;
  }
  fs::path stl_dir;
  std::vector<fs::path> method_dirs;
  for (std::size_t i = 0; i < cfg.variants.size(); ++i) {
    if (cfg.variants[i] == model::Variant::kSTL) {
      stl_dir = dirs[i];
    } else {
      method_dirs.push_back(dirs[i]);
    }
  }
  return compare_runs(cfg, stl_dir, method_dirs, out, log);
}

int cmd_probe(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto bundle = materialize_bundle(cfg);
  const auto arch = cfg.model.arch_for(bundle);
  {
    // Validates losses against the bundle before any side effect.
    const auto probe_asm = model::build(model::Variant::kSMTL, arch, cfg.seed);
    (void)train::resolve_losses(probe_asm, bundle, cfg.train);
  }
  if (cfg.probes.boundary) {
    if (cfg.probes.boundary_task >= bundle.tasks()) throw ConfigError("probes.boundary.task out of range");
    if (bundle.spec.tasks[cfg.probes.boundary_task].kind != synth::TaskKind::kClassification) {
      throw ConfigError("probes.boundary.task must be a classification (cross_entropy) task");
    }
  }
  if (!cfg.probes.dominance.empty() && (cfg.train.batch_size != 0 || cfg.train.bilevel)) {
    throw ConfigError("dominance probe needs full-batch single-level training (batch_size 0)");
  }

  json probes = json::object();
  std::vector<std::string> failed;
  const auto& train_idx = bundle.splits.train;
  for (auto v : cfg.probes.reduction) {
    const auto a = model::build(v, arch, cfg.seed);
    const auto losses = train::resolve_losses(a, bundle, cfg.train);
    const auto r = as_config("probes.reduction", [&] {
      return probes::reduction_equivalence(v, arch, cfg.seed, bundle, train_idx, losses);
    });
    probes["reduction"][std::string(model::variant_name(v))] = probes::to_json(r);
    log << fmt::format("reduction {:<8} fwd(a=0) {:.3g} fwd(a=1) {:.3g} obj {:.3g}/{:.3g}  {}\n",
                       model::variant_name(v), r.forward_diff_stl, r.forward_diff_dmtl, r.objective_diff_stl,
                       r.objective_diff_dmtl, r.pass() ? "pass" : "FAIL");
    if (!r.pass()) failed.push_back("reduction:" + std::string(model::variant_name(v)));
  }
  for (auto ref : cfg.probes.dominance) {
    const auto r = as_config("probes.dominance", [&] {
      return probes::loss_dominance_probe(bundle, arch, cfg.train, ref, cfg.probes.continue_epochs);
    });
    probes["dominance"][std::string(model::variant_name(ref))] = probes::to_json(r);
    log << fmt::format("dominance from {:<5} ref {} warm {} final {}  {}\n", model::variant_name(ref),
                       io::fmt_exact(r.reference_loss), io::fmt_exact(r.warm_start), io::fmt_exact(r.final_value),
                       r.pass ? "pass" : "FAIL");
    if (!r.pass) failed.push_back("dominance:" + std::string(model::variant_name(ref)));
  }
  if (cfg.probes.boundary) {
    const std::size_t t = cfg.probes.boundary_task;
    model::Assembly a;
    std::string source;
    if (cfg.probes.boundary_checkpoint) {
      a = model::load_assembly(*cfg.probes.boundary_checkpoint);
      source = cfg.probes.boundary_checkpoint->generic_string();
    } else {
      // Identical public and private encoders: the output cannot depend on alpha.
      a = model::build(model::Variant::kSMTL, arch, cfg.seed);
      for (const auto& path : a.params.paths(model::private_encoder_prefix(t))) {
        a.params.set(model::public_encoder_prefix() + path.substr(model::private_encoder_prefix(t).size()),
                     a.params.at(path));
      }
      source = "identical-encoders";
    }
    const auto losses = train::resolve_losses(a, bundle, cfg.train);
    const auto r = as_config("probes.boundary", [&] {
      return probes::boundary_condition(a, bundle, train_idx, losses, t, cfg.probes.boundary_point);
    });
    json j = probes::to_json(r);
    j["source"] = source;
    j["equality"] = std::abs(r.autodiff) <= 1e-6;
    probes["boundary"] = j;
    const bool ok = r.condition && r.agrees();
    log << fmt::format("boundary task {} at {}: dL/da {:.6g} (fd {:.6g}){}  {}\n", t, r.boundary, r.autodiff,
                       r.finite_diff, std::abs(r.autodiff) <= 1e-6 ? " equality" : "", ok ? "pass" : "FAIL");
    if (!ok) failed.push_back("boundary");
  }

  write_config_echo(cfg, out);
  io::write_text(out / "probes.json", probes.dump(2) + "\n");
  write_report(out, {{"command", "probe"},
                     {"seed", cfg.seed},
                     {"bundle_checksum", synth::bundle_checksum(bundle)},
                     {"probes", probes},
                     {"failed", failed}});
  if (!failed.empty()) {
    std::string names;
    for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
    log << "failed probes: " << names << "\n";
    return kAssertion;
  }
  return kOk;
}

int cmd_reproduce_tables(const std::optional<fs::path>& out, std::ostream& log) {
  const auto& fixtures = safeness::embedded_fixtures();
  const auto checks = safeness::reproduce_tables(fixtures);
  std::string csv =
      "table,dataset,method,delta_I,published_delta_I,delta_I_ok,eta_hat,published_eta_hat,eta_ok,eta_exact\n";
  std::size_t failures = 0;
  for (const auto& c : checks) {
    std::string note;
    if (!c.delta_i_ok) note += "  delta_I outside tolerance";
    if (!c.eta_ok) note += "  eta_hat mismatch";
    if (c.eta_ok && !c.eta_exact) note += "  (eta_hat within table tolerance, not exact)";
    log << fmt::format("Table {} {:<15} {:<13} delta_I {:+.5f} vs {:+.4f}  eta_hat {:6.2f} vs {:3g}  {}{}\n", c.table,
                       c.dataset, c.method, c.delta_i, c.published_delta_i, c.eta_hat, c.published_eta_hat,
                       c.ok() ? "ok" : "FAIL", note);
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", c.table, c.dataset, c.method, io::fmt_exact(c.delta_i),
                       io::fmt_exact(c.published_delta_i), c.delta_i_ok ? 1 : 0, io::fmt_exact(c.eta_hat),
                       io::fmt_exact(c.published_eta_hat), c.eta_ok ? 1 : 0, c.eta_exact ? 1 : 0);
    failures += c.ok() ? 0 : 1;
  }
  log << fmt::format("{} rows, {} outside tolerance\n", checks.size(), failures);
  if (out) {
    fs::create_directories(*out);
    io::write_text(*out / "tables.csv", csv);
    write_report(*out, {{"command", "reproduce-tables"}, {"rows", checks.size()}, {"failures", failures}});
  }
  return failures == 0 ? kOk : kAssertion;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Safe multi-task learning lab"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  struct Sub {
    std::string name;
    CLI::App* app;
  };
  std::vector<Sub> subs;
  for (const char* name : {"gen-data", "train", "eval", "compare", "probe", "reproduce-tables"}) {
    auto* s = app.add_subcommand(name);
    const bool tables = std::string(name) == "reproduce-tables";
    auto* c = s->add_option("--config", config_path, "JSON run config");
    auto* o = s->add_option("--out", out_dir, "output directory");
    if (!tables) {
      c->required();
      o->required();
    }
    s->add_option("--seed", seed, "override the config seed");
    subs.push_back({name, s});
  }
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kConfig;
  }

  std::string command;
  for (const auto& s : subs) {
    if (s.app->parsed()) command = s.name;
  }
  try {
    if (command == "reproduce-tables") {
      return cmd_reproduce_tables(out_dir.empty() ? std::nullopt : std::optional<fs::path>(out_dir), out);
    }
    const fs::path cfg_path(config_path);
    const std::string text = io::read_text(cfg_path);
    const RunConfig cfg = parse_config(text, cfg_path.parent_path(), seed);
    const fs::path out_path(out_dir);
    if (command == "gen-data") return cmd_gen_data(cfg, out_path, out);
    if (command == "train") return cmd_train(cfg, out_path, out);
    if (command == "eval") return cmd_eval(cfg, out_path, out);
    if (command == "compare") return cmd_compare(cfg, out_path, out);
    if (command == "probe") return cmd_probe(cfg, out_path, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kConfig;
}

}  // namespace smtl::cli
