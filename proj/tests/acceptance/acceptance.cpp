// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance [--criterion N]

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "smtl/cli.hpp"
#include "smtl/gates.hpp"
#include "smtl/gradcheck.hpp"
#include "smtl/io.hpp"
#include "smtl/model.hpp"
#include "smtl/probes.hpp"
#include "smtl/rng.hpp"
#include "smtl/safeness.hpp"
#include "smtl/synth.hpp"
#include "smtl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace smtl;
using model::Variant;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch_dir(std::string_view name) {
  const fs::path p = fs::temp_directory_path() / fmt::format("smtl-acceptance-{}-{}", ::getpid(), name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------- 1

Outcome criterion_tables() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto checks = safeness::reproduce_tables(safeness::embedded_fixtures());
  const double secs = seconds_since(t0);
  std::size_t bad = 0;
  std::string worst;
  for (const auto& c : checks) {
    if (c.ok()) continue;
    ++bad;
    worst += fmt::format(" [Table {} {} {}: delta_I {:.5f} vs {:.4f}, eta_hat {:.2f} vs {:g}]", c.table, c.dataset,
                         c.method, c.delta_i, c.published_delta_i, c.eta_hat, c.published_eta_hat);
  }
  return {bad == 0 && secs < 1.0,
          fmt::format("{}/{} rows within tolerance, {:.3f}s{}", checks.size() - bad, checks.size(), secs, worst)};
}

// ---------------------------------------------------------------- 2

struct Composition {
  model::Assembly a;
  Tensor x;
  std::vector<Tensor> y;
  std::vector<train::LossKind> losses;
};

Composition random_composition(Rng& rng, std::uint64_t seed) {
  static constexpr Variant kVariants[] = {Variant::kSTL,   Variant::kDMTL,  Variant::kSMTL,
                                          Variant::kLSMTL, Variant::kSMTLc, Variant::kLSMTLc};
  static constexpr nn::Activation kHidden[] = {nn::Activation::kRelu, nn::Activation::kTanh,
                                               nn::Activation::kSigmoid};
  static constexpr nn::Activation kFeature[] = {nn::Activation::kRelu, nn::Activation::kTanh,
                                                nn::Activation::kSigmoid, nn::Activation::kIdentity};
  Composition c;
  const Variant v = kVariants[rng.below(6)];
  const std::size_t m = 1 + rng.below(3);
  const std::size_t n = 3 + rng.below(4);
  model::ArchSpec arch;
  arch.input_dim = 2 + rng.below(4);
  for (std::size_t i = 0, e = rng.below(3); i < e; ++i) arch.encoder_hidden.push_back(2 + rng.below(4));
  arch.feature_dim = 2 + rng.below(3);
  for (std::size_t i = 0, e = rng.below(2); i < e; ++i) arch.decoder_hidden.push_back(2 + rng.below(4));
  arch.hidden_activation = kHidden[rng.below(3)];
  arch.feature_activation = kFeature[rng.below(4)];
  c.x = Tensor(Shape{n, arch.input_dim});
  for (auto& e : c.x.data()) e = rng.normal();
  for (std::size_t t = 0; t < m; ++t) {
    if (rng.uniform() < 0.4) {
      const std::size_t k = 2 + rng.below(3);
      arch.heads.push_back({k, nn::Activation::kRowSoftmax});
      Tensor y(Shape{n, k});
      for (std::size_t r = 0; r < n; ++r) y.at(r, rng.below(k)) = 1.0;
      c.y.push_back(std::move(y));
      c.losses.push_back(train::LossKind::kCrossEntropy);
    } else {
      const std::size_t k = 1 + rng.below(3);
      arch.heads.push_back({k, nn::Activation::kIdentity});
      Tensor y(Shape{n, k});
      for (auto& e : y.data()) e = rng.normal();
      c.y.push_back(std::move(y));
      static constexpr train::LossKind kReg[] = {train::LossKind::kMSE, train::LossKind::kL1,
                                                 train::LossKind::kCosine};
      c.losses.push_back(kReg[rng.below(3)]);
    }
  }
  c.a = model::build(v, arch, seed);
  // Nonzero biases keep relu units off their kinks and predictions off zero.
  for (auto& [path, value] : c.a.params) {
    if (path.ends_with(".b")) {
      for (auto& e : value.data()) e = rng.uniform(-0.5, 0.5);
    }
  }
  for (std::size_t t = 0; t < c.a.gates.size(); ++t) {
    c.a.params.set(gates::logit_path(t), Tensor::scalar(rng.uniform(-1.5, 1.5)));
    c.a.gates[t].tau = rng.uniform(0.5, 3.0);
  }
  return c;
}

// (1/m) sum_t L_t recorded on the bindings' tape, train phase.
Var recorded_objective(nn::Bindings& b, const Composition& c, std::span<gates::GateState> live,
                       std::optional<std::pair<std::size_t, double>> alpha_override,
                       std::map<std::size_t, gates::StraightThrough>* draws = nullptr) {
  Tape& tape = b.tape();
  model::Forward f(b, c.a, tape.constant(c.x), model::Phase::kTrain, live);
  if (alpha_override) f.override_alpha(alpha_override->first, tape.constant(Tensor::scalar(alpha_override->second)));
  Var sum;
  for (std::size_t t = 0; t < c.a.tasks(); ++t) {
    Var l = train::loss_node(tape, c.losses[t], f.task(t).pred, c.y[t]);
    sum = sum.valid() ? tape.add(sum, l) : l;
  }
  if (draws) *draws = f.draws();
  return tape.scale(sum, 1.0 / static_cast<double>(c.a.tasks()));
}

double objective_value(const Composition& c, const ParamStore& params,
                       std::optional<std::pair<std::size_t, double>> alpha_override = std::nullopt) {
  Composition copy_view{c.a, c.x, c.y, c.losses};
  copy_view.a.params = params;
  std::vector<gates::GateState> live = c.a.gates;  // replays the same Gumbel noise
  Tape tape;
  nn::Bindings b(tape, copy_view.a.params, [](std::string_view) { return false; });
  return tape.value(recorded_objective(b, copy_view, live, alpha_override)).item();
}

Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(derive_seed(2, "gradient-compositions"));
  double worst = 0.0;
  std::size_t st_checked = 0, soft_checked = 0;
  std::string worst_at;
  bool key_sets_ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    const Composition c = random_composition(rng, derive_seed(2, "composition", trial));
    GradMap autodiff;
    std::map<std::size_t, gates::StraightThrough> draws;
    {
      std::vector<gates::GateState> live = c.a.gates;
      Tape tape;
      nn::Bindings b(tape, c.a.params, [](std::string_view) { return true; });
      const Var obj = recorded_objective(b, c, live, std::nullopt, &draws);
      autodiff = tape.backward(obj);
    }
    GradMap oracle = finite_diff_grad([&](const ParamStore& p) { return objective_value(c, p); }, c.a.params, 1e-5);
    if (model::is_lite(c.a.variant)) {
      // Straight-through: dL/dalpha at the hard value times d soft_weight / d logit.
      for (const auto& [t, st] : draws) {
        const double h = 1e-5;
        const double dl = (objective_value(c, c.a.params, std::pair{t, st.hard + h}) -
                           objective_value(c, c.a.params, std::pair{t, st.hard - h})) /
                          (2 * h);
        const double a = c.a.params.at(gates::logit_path(t)).item();
        const double tau = c.a.gates[t].tau;
        const double ds = (gates::soft_weight_logit(a + h, st.b0, st.b1, tau) -
                           gates::soft_weight_logit(a - h, st.b0, st.b1, tau)) /
                          (2 * h);
        oracle[gates::logit_path(t)] = Tensor::scalar(dl * ds);
        ++st_checked;
      }
    } else if (model::has_gates(c.a.variant)) {
      soft_checked += c.a.tasks();
    }
    std::vector<std::string> ka, ko;
    for (const auto& [k, _] : autodiff) ka.push_back(k);
    for (const auto& [k, _] : oracle) ko.push_back(k);
    if (ka != ko) key_sets_ok = false;
    const double err = max_relative_error(autodiff, oracle);
    if (err > worst) {
      worst = err;
      worst_at = fmt::format("trial {} ({})", trial, model::variant_name(c.a.variant));
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && key_sets_ok && secs < 30.0 && st_checked > 0 && soft_checked > 0,
          fmt::format("max rel err {:.3g} at {}; {} soft-gate and {} straight-through alpha gradients; {:.1f}s{}", worst,
                      worst_at, soft_checked, st_checked, secs, key_sets_ok ? "" : "; gradient key sets differ")};
}

// ---------------------------------------------------------------- 3

Outcome criterion_gumbel() {
  Rng rng(derive_seed(3, "gumbel"));
  const double p1 = 0.7;
  const int trials = 20000;
  int ones = 0;
  for (int i = 0; i < trials; ++i) {
    const double b0 = gates::gumbel_noise(rng);
    const double b1 = gates::gumbel_noise(rng);
    ones += gates::hard_choice(p1, b0, b1);
  }
  const double freq = static_cast<double>(ones) / trials;
  const bool freq_ok = std::abs(freq - p1) <= 0.01;

  int close = 0;
  double worst = 0.0, worst_margin = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double b0 = gates::gumbel_noise(rng);
    const double b1 = gates::gumbel_noise(rng);
    const double diff = std::abs(gates::soft_weight(p1, b0, b1, 0.01) - gates::hard_choice(p1, b0, b1));
    if (diff <= 1e-6) ++close;
    if (diff > worst) {
      worst = diff;
      worst_margin = b1 - b0 + std::log(p1 / (1 - p1));
    }
  }
  return {freq_ok && close == 1000,
          fmt::format("hard-choice frequency {:.4f} (target 0.7 +- 0.01); soft_weight(tau=0.01) within 1e-6 of the hard "
                      "choice on {}/1000 draws, worst gap {:.3g} at perturbed-logit margin {:.4f}",
                      freq, close, worst, worst_margin)};
}

// ---------------------------------------------------------------- 4

synth::TaskBundle small_bundle(std::uint64_t seed, bool classification) {
  synth::GeneratorSpec g;
  g.n = 64;
  g.d = 6;
  g.k = 3;
  g.hidden = 8;
  g.noise = 0.05;
  g.seed = seed;
  for (std::size_t t = 0; t < 3; ++t) {
    synth::TaskGenSpec ts;
    ts.rho = t == 2 ? 0.0 : 0.8;
    if (classification && t != 1) {
      ts.kind = synth::TaskKind::kClassification;
      ts.out_dim = 3;
    } else {
      ts.out_dim = 2;
    }
    g.tasks.push_back(ts);
  }
  auto b = synth::generate(g);
  const std::vector<double> f{0.75, 0.25};
  synth::split(b, f, seed);
  return b;
}

model::ArchSpec arch_for(const synth::TaskBundle& b, std::vector<std::size_t> enc = {12}, std::size_t feat = 6) {
  cli::ModelConfig mc;
  mc.encoder_hidden = std::move(enc);
  mc.feature_dim = feat;
  mc.decoder_hidden = {5};
  return mc.arch_for(b);
}

Outcome criterion_reduction() {
  std::string detail;
  bool ok = true;
  double worst_red = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto b = small_bundle(seed, seed % 2 == 0);
    const auto arch = arch_for(b);
    for (Variant v : {Variant::kSMTL, Variant::kSMTLc}) {
      const auto probe_asm = model::build(v, arch, seed);
      const auto losses = train::resolve_losses(probe_asm, b, {});
      const auto r = probes::reduction_equivalence(v, arch, seed, b, b.splits.train, losses, 1e-12);
      worst_red = std::max({worst_red, r.forward_diff_stl, r.forward_diff_dmtl, r.objective_diff_stl,
                            r.objective_diff_dmtl});
      ok = ok && r.pass();
    }
  }
  detail += fmt::format("reduction max diff {:.3g}", worst_red);

  // Pruning: every public/private pattern over three tasks.
  std::size_t cases = 0, bitwise = 0, smaller = 0, needs_smaller = 0;
  for (Variant v : {Variant::kLSMTL, Variant::kLSMTLc}) {
    for (unsigned mask = 0; mask < 8; ++mask) {
      const auto b = small_bundle(10 + mask, mask % 2 == 1);
      auto a = model::build(v, arch_for(b), 10 + mask);
      for (std::size_t t = 0; t < 3; ++t) a.params.set(gates::logit_path(t), Tensor::scalar(mask >> t & 1 ? 0.7 : -0.7));
      const auto p = model::prune(a);
      ++cases;
      bool same = true;
      for (std::size_t t = 0; t < 3; ++t) same = same && bitwise_equal(model::predict(p, t, b.X), model::predict(a, t, b.X));
      bitwise += same ? 1 : 0;
      const bool fewer = param_count(p.params) < param_count(a.params);
      if (mask != 0) {
        ++needs_smaller;
        smaller += fewer ? 1 : 0;
      }
    }
  }
  ok = ok && bitwise == cases && smaller == needs_smaller;
  detail += fmt::format("; pruned outputs bitwise-equal in {}/{} cases; strictly fewer parameters in {}/{} cases with a "
                        "public choice",
                        bitwise, cases, smaller, needs_smaller);
  return {ok, detail};
}

// ---------------------------------------------------------------- 5

Outcome criterion_dominance() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path cfg_path = fs::path(SMTL_CONFIG_DIR) / "outlier.json";
  const auto cfg = cli::parse_config(io::read_text(cfg_path), cfg_path.parent_path());
  const auto bundle = cli::materialize_bundle(cfg);
  const auto arch = cfg.model.arch_for(bundle);
  train::TrainConfig tc = cfg.train;
  tc.epochs = 400;
  bool ok = true;
  std::string detail;
  for (Variant ref : {Variant::kSTL, Variant::kDMTL}) {
    const auto r = probes::loss_dominance_probe(bundle, arch, tc, ref, 200);
    ok = ok && r.pass;
    detail += fmt::format("{}{}: reference {:.10g}, step-0 gap {:.2g}, after 200 epochs {:+.3g}", detail.empty() ? "" : "; ",
                          model::variant_name(ref), r.reference_loss, std::abs(r.warm_start - r.reference_loss),
                          r.final_value - r.reference_loss);
  }
  const double secs = seconds_since(t0);
  detail += fmt::format("; {:.1f}s", secs);
  return {ok && secs < 120.0, detail};
}

// ---------------------------------------------------------------- 6

Outcome criterion_negative_sharing() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path cfg_path = fs::path(SMTL_CONFIG_DIR) / "outlier.json";
  json doc = json::parse(io::read_text(cfg_path));
  doc.erase("variant");
  doc["variants"] = {"STL", "DMTL", "SMTL"};
  const fs::path root = scratch_dir("negative-sharing");
  const std::size_t outlier = doc.at("generator").at("outlier").get<std::size_t>();
  const std::string outlier_task = "task" + std::to_string(outlier);

  std::vector<double> eta_dmtl, eta_smtl;
  std::map<std::string, std::vector<double>> dmtl_outlier_delta;
  std::vector<std::vector<double>> alphas;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto cfg = cli::parse_config(doc.dump(2), cfg_path.parent_path(), seed);
    std::ostringstream log;
    const fs::path out = root / fmt::format("seed{}", seed);
    if (cli::cmd_compare(cfg, out, log) != cli::kOk) return {false, "compare failed for seed " + std::to_string(seed)};
    const auto rep = safeness::report_from_json(json::parse(io::read_text(out / "safeness.json")));
    for (const auto& m : rep.methods) {
      if (m.method == "DMTL") {
        eta_dmtl.push_back(m.eta_hat);
        for (std::size_t j = 0; j < rep.metrics.size(); ++j) {
          if (rep.metrics[j].task == outlier_task) dmtl_outlier_delta[rep.metrics[j].name].push_back(m.deltas[j]);
        }
      }
      if (m.method == "SMTL") eta_smtl.push_back(m.eta_hat);
    }
    const json run = json::parse(io::read_text(out / "runs" / "SMTL" / "report.json"));
    alphas.push_back(run.at("alpha").get<std::vector<double>>());
  }
  fs::remove_all(root);

  bool negative = !dmtl_outlier_delta.empty();
  std::string deltas;
  for (const auto& [name, v] : dmtl_outlier_delta) {
    const double med = median(v);
    negative = negative && med < 0.0;
    deltas += fmt::format(" {}={:+.4f}", name, med);
  }
  const double med_eta_d = median(eta_dmtl), med_eta_s = median(eta_smtl);
  std::vector<double> med_alpha;
  for (std::size_t t = 0; t < alphas.front().size(); ++t) {
    std::vector<double> v;
    for (const auto& a : alphas) v.push_back(a.at(t));
    med_alpha.push_back(median(v));
  }
  bool smallest = true;
  for (std::size_t t = 0; t < med_alpha.size(); ++t) {
    if (t != outlier && !(med_alpha[outlier] < med_alpha[t])) smallest = false;
  }
  const double secs = seconds_since(t0);
  std::string alpha_txt;
  for (double a : med_alpha) alpha_txt += fmt::format(" {:.4f}", a);
  return {negative && med_eta_s >= med_eta_d && smallest && secs < 300.0,
          fmt::format("median DMTL outlier delta{}; median eta_hat SMTL {:.2f} vs DMTL {:.2f}; median SMTL alpha{}; "
                      "{:.1f}s",
                      deltas, med_eta_s, med_eta_d, alpha_txt, secs)};
}

// ---------------------------------------------------------------- 7

// Four unrelated 3-class tasks competing for a one-dimensional public
// feature: most runs push some gate against a boundary.
synth::TaskBundle boundary_bundle(std::uint64_t seed) {
  synth::GeneratorSpec g;
  g.n = 64;
  g.d = 8;
  g.k = 4;
  g.hidden = 8;
  g.noise = 0.3;
  g.seed = derive_seed(seed, "boundary-trial");
  for (std::size_t t = 0; t < 4; ++t) {
    synth::TaskGenSpec ts;
    ts.kind = synth::TaskKind::kClassification;
    ts.out_dim = 3;
    g.tasks.push_back(ts);
  }
  auto b = synth::generate(g);
  const std::vector<double> f{1.0};
  synth::split(b, f, seed);
  return b;
}

Outcome criterion_boundary() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t trials = 0, agree = 0, attempts = 0, bad_disagreements = 0, tiny = 0;
  double worst_rel = 0.0;
  train::TrainConfig tc;
  tc.epochs = 4000;
  tc.lr = 0.2;
  for (std::uint64_t seed = 1; seed <= 60 && trials < 24; ++seed) {
    ++attempts;
    const auto bundle = boundary_bundle(seed);
    tc.seed = seed;
    cli::ModelConfig mc;
    mc.encoder_hidden = {};
    mc.feature_dim = 1;
    auto a = model::build(Variant::kSMTL, mc.arch_for(bundle), seed);
    const auto run = train::train_single_level(a, bundle, tc);
    if (run.diverged) continue;
    std::optional<std::size_t> hit;
    double gap = 1e-3;
    for (std::size_t t = 0; t < a.tasks(); ++t) {
      const double al = model::gate_alpha(a, t);
      const double g = std::min(al, 1.0 - al);
      if (g <= gap) {
        gap = g;
        hit = t;
      }
    }
    if (!hit) continue;
    ++trials;
    const double point = model::gate_alpha(a, *hit) < 0.5 ? 0.0 : 1.0;
    const auto losses = train::resolve_losses(a, bundle, tc);
    const auto r = probes::boundary_condition(a, bundle, bundle.splits.train, losses, *hit, point);
    if (std::abs(r.autodiff) < 1e-6) ++tiny;
    if (r.condition == r.fd_condition) {
      ++agree;
    } else if (std::abs(r.autodiff) >= 1e-6) {
      ++bad_disagreements;
    }
    if (std::abs(r.autodiff) > 1e-6) {
      worst_rel = std::max(worst_rel, grad_relative_error(r.autodiff, r.finite_diff, 0.0));
    }
  }
  const double rate = trials ? static_cast<double>(agree) / static_cast<double>(trials) : 0.0;
  return {trials >= 20 && rate >= 0.95 && bad_disagreements == 0,
          fmt::format("{} boundary trials out of {} training runs; sign agreement {:.1f}%; disagreements with |dL/da| >= "
                      "1e-6: {}; {} trials with |dL/da| < 1e-6; max autodiff vs fd rel err {:.2g}; {:.1f}s",
                      trials, attempts, 100.0 * rate, bad_disagreements, tiny, worst_rel, seconds_since(t0))};
}

// ---------------------------------------------------------------- 8

Outcome criterion_bilevel() {
  const fs::path cfg_path = fs::path(SMTL_CONFIG_DIR) / "outlier.json";
  const auto cfg = cli::parse_config(io::read_text(cfg_path), cfg_path.parent_path());
  auto bundle = cli::materialize_bundle(cfg);
  const auto arch = cfg.model.arch_for(bundle);

  // Ordinary bi-level run with the configured disjoint val split.
  train::TrainConfig bl = cfg.train;
  bl.bilevel = true;
  auto a = model::build(Variant::kSMTL, arch, cfg.seed);
  const auto run = train::train(a, bundle, bl);
  const auto report = model::alpha_report(a);
  bool alpha_ok = !run.diverged && report.size() == bundle.tasks();
  for (const auto& [t, al] : report) alpha_ok = alpha_ok && std::isfinite(al) && al > 0.0 && al < 1.0;
  std::size_t val_rows = 0, gate_updates = 0;
  for (const auto& row : run.history.rows) {
    val_rows += row.alpha_phase == "val" ? 1 : 0;
    gate_updates += row.gate_updates;
  }
  alpha_ok = alpha_ok && val_rows == static_cast<std::size_t>(bl.epochs) && gate_updates > 0;

  // val == train, k = 1 against the single-level trainer on the same seed.
  bundle.splits.val = bundle.splits.train;
  train::TrainConfig k1 = bl;
  k1.k = 1;
  auto a_bl = model::build(Variant::kSMTL, arch, cfg.seed);
  const auto r_bl = train::train(a_bl, bundle, k1);
  train::TrainConfig single = cfg.train;
  single.bilevel = false;
  auto a_sl = model::build(Variant::kSMTL, arch, cfg.seed);
  const auto r_sl = train::train(a_sl, bundle, single);
  const auto losses = train::resolve_losses(a_sl, bundle, single);
  const double v_bl = train::joint_objective(a_bl, bundle, bundle.splits.train, losses).value;
  const double v_sl = train::joint_objective(a_sl, bundle, bundle.splits.train, losses).value;
  const double rel = std::abs(v_bl - v_sl) / std::abs(v_sl);
  std::string alpha_txt;
  for (const auto& [t, al] : report) alpha_txt += fmt::format(" {:.4f}", al);
  return {alpha_ok && !r_bl.diverged && !r_sl.diverged && rel <= 0.10,
          fmt::format("bi-level outlier run alpha{} ({} val-phase rows, {} gate steps); val=train k=1 objective {:.6g} "
                      "vs single-level {:.6g} ({:.2f}% apart)",
                      alpha_txt, val_rows, gate_updates, v_bl, v_sl, 100.0 * rel)};
}

// ---------------------------------------------------------------- 9

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SMTL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::vector<std::uint8_t>> dir_bytes(const fs::path& dir) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = io::read_bytes(e.path());
  }
  return out;
}

Outcome criterion_determinism() {
  const fs::path root = scratch_dir("determinism");
  json doc = json::parse(io::read_text(fs::path(SMTL_CONFIG_DIR) / "outlier.json"));
  doc["train"]["epochs"] = 25;
  doc["train"]["batch_size"] = 128;
  std::vector<std::string> failures;
  for (const char* variant : {"SMTL", "L-SMTL"}) {
    doc["variant"] = variant;
    const fs::path cfg = root / fmt::format("{}.json", variant);
    io::write_text(cfg, doc.dump(2) + "\n");
    std::vector<fs::path> runs;
    for (int i = 0; i < 2; ++i) {
      const fs::path out = root / fmt::format("{}-run{}", variant, i);
      if (run_cli(fmt::format("train --config {} --out {}", cfg.string(), out.string())) != 0) {
        failures.push_back(fmt::format("{} run {} exited nonzero", variant, i));
      }
      runs.push_back(out);
    }
    for (const char* file : {"metrics.csv", "alpha.csv"}) {
      if (!fs::exists(runs[0] / file) || io::read_bytes(runs[0] / file) != io::read_bytes(runs[1] / file)) {
        failures.push_back(fmt::format("{} {} differs", variant, file));
      }
    }
  }
  const fs::path cfg = root / "SMTL.json";
  for (int i = 0; i < 2; ++i) {
    if (run_cli(fmt::format("gen-data --config {} --out {}", cfg.string(), (root / fmt::format("bundle{}", i)).string())) != 0) {
      failures.push_back("gen-data exited nonzero");
    }
  }
  const auto b0 = dir_bytes(root / "bundle0");
  const bool bundles_same = !b0.empty() && b0 == dir_bytes(root / "bundle1");
  if (!bundles_same) failures.push_back("bundle directories differ");
  fs::remove_all(root);
  std::string detail = failures.empty() ? fmt::format("metrics.csv, alpha.csv (SMTL, L-SMTL) and {}-file bundle "
                                                      "directories byte-identical across two runs",
                                                      b0.size())
                                        : "";
  for (const auto& f : failures) detail += (detail.empty() ? "" : "; ") + f;
  return {failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  app.add_option("--criterion", only, "run a single criterion (1-9)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"metric fixtures", criterion_tables},
      {"gradient correctness", criterion_gradients},
      {"gumbel statistics", criterion_gumbel},
      {"reduction identities and pruning", criterion_reduction},
      {"loss dominance probe", criterion_dominance},
      {"negative-sharing study", criterion_negative_sharing},
      {"boundary-condition probe", criterion_boundary},
      {"bi-level trainer", criterion_bilevel},
      {"determinism", criterion_determinism},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<int>(i) + 1 != only) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << fmt::format("criterion {} [{}]: {} - {}\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL",
                             o.detail)
              << std::flush;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
