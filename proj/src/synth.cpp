// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "smtl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "smtl/error.hpp"
#include "smtl/io.hpp"
#include "smtl/json_util.hpp"
#include "smtl/rng.hpp"

namespace smtl::synth {

using nlohmann::json;

std::string_view kind_name(TaskKind k) {
  return k == TaskKind::kRegression ? "regression" : "classification";
}

TaskKind parse_kind(std::string_view name) {
  if (name == "regression") return TaskKind::kRegression;
  if (name == "classification") return TaskKind::kClassification;
  throw InvalidArgument("unknown task kind '" + std::string(name) + "'");
}

void GeneratorSpec::validate() const {
  if (tasks.empty()) throw InvalidArgument("generator needs at least one task");
  if (n == 0 || k == 0 || hidden == 0) throw InvalidArgument("generator sizes n, k, hidden must be positive");
  if (d < 2) throw InvalidArgument("generator input dim d must be at least 2");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw InvalidArgument("noise must be >= 0");
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& ts = tasks[t];
    if (!(ts.rho >= 0.0 && ts.rho <= 1.0)) {
      throw InvalidArgument("task " + std::to_string(t) + ": rho must lie in [0,1]");
    }
    if (ts.out_dim == 0) throw InvalidArgument("task " + std::to_string(t) + ": out_dim must be positive");
    if (ts.kind == TaskKind::kClassification && ts.out_dim < 2) {
      throw InvalidArgument("task " + std::to_string(t) + ": classification needs at least 2 classes");
    }
  }
  if (outlier && *outlier >= tasks.size()) throw InvalidArgument("outlier index out of range");
}

const std::vector<std::size_t>& TaskBundle::split_indices(std::string_view name) const {
  if (name == "train") return splits.train;
  if (name == "val") return splits.val;
  if (name == "test") return splits.test;
  throw InvalidArgument("unknown split '" + std::string(name) + "'");
}

namespace {

Tensor gaussian(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Tensor t(Shape{rows, cols});
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

// Rows form an orthonormal basis (modified Gram-Schmidt on a Gaussian draw).
Tensor random_rotation(std::uint64_t seed, std::size_t d) {
  Rng rng(seed);
  Tensor q = gaussian(rng, d, d, 1.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += q.at(i, c) * q.at(j, c);
      for (std::size_t c = 0; c < d; ++c) q.at(i, c) -= dot * q.at(j, c);
    }
    double norm = 0.0;
    for (std::size_t c = 0; c < d; ++c) norm += q.at(i, c) * q.at(i, c);
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < d; ++c) q.at(i, c) /= norm;
  }
  return q;
}

// y = x W^T for x [n, in], W [out, in]; optional bias and tanh.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor* bias, bool squash) {
  const std::size_t n = x.rows(), in = x.cols(), out = w.rows();
  Tensor y(Shape{n, out});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double s = bias ? (*bias)[o] : 0.0;
      for (std::size_t c = 0; c < in; ++c) s += x.at(r, c) * w.at(o, c);
      y.at(r, o) = squash ? std::tanh(s) : s;
    }
  }
  return y;
}

struct TanhNet {
  Tensor w1, b1, w2;

  TanhNet(std::uint64_t seed, std::size_t in, std::size_t hidden, std::size_t out) {
    Rng rng(seed);
    w1 = gaussian(rng, hidden, in, 1.0 / std::sqrt(static_cast<double>(in)));
    b1 = Tensor(Shape{hidden});
    for (auto& v : b1.data()) v = 0.5 * rng.normal();
    w2 = gaussian(rng, out, hidden, 1.0 / std::sqrt(static_cast<double>(hidden)));
  }

  Tensor operator()(const Tensor& x) const { return affine(affine(x, w1, &b1, true), w2, nullptr, false); }
};

struct Projections {
  Tensor shared;   // x projected on the first half of the rotated basis
  Tensor private_;  // the complementary half
};

Projections project(const GeneratorSpec& spec, const Tensor& X) {
  const Tensor q = random_rotation(derive_seed(spec.seed, "rotation"), spec.d);
  const std::size_t ds = spec.d / 2;
  Tensor qs(Shape{ds, spec.d}), qp(Shape{spec.d - ds, spec.d});
  for (std::size_t r = 0; r < spec.d; ++r) {
    for (std::size_t c = 0; c < spec.d; ++c) (r < ds ? qs.at(r, c) : qp.at(r - ds, c)) = q.at(r, c);
  }
  return {affine(X, qs, nullptr, false), affine(X, qp, nullptr, false)};
}

Tensor head_weights(const GeneratorSpec& spec, std::size_t t) {
  const auto& ts = spec.tasks[t];
  Rng rng(derive_seed(spec.seed, "head", ts.head_id.value_or(t)));
  return gaussian(rng, ts.out_dim, spec.k, 1.0 / std::sqrt(static_cast<double>(spec.k)));
}

Tensor shared_net_output(const GeneratorSpec& spec, const Projections& p) {
  const TanhNet u(derive_seed(spec.seed, "U"), p.shared.cols(), spec.hidden, spec.k);
  return u(p.shared);
}

}  // namespace

TaskBundle generate(const GeneratorSpec& spec) {
  spec.validate();
  TaskBundle b;
  b.spec = spec;
  {
    Rng rng(derive_seed(spec.seed, "X"));
    b.X = gaussian(rng, spec.n, spec.d, 1.0);
  }
  const Projections p = project(spec, b.X);
  const Tensor u = shared_net_output(spec, p);
  for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
    const auto& ts = spec.tasks[t];
    const TanhNet v(derive_seed(spec.seed, "V", t), p.private_.cols(), spec.hidden, spec.k);
    const Tensor vt = v(p.private_);
    Tensor z(Shape{spec.n, spec.k});
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = ts.rho * u[i] + (1.0 - ts.rho) * vt[i];
    Tensor h = affine(z, head_weights(spec, t), nullptr, false);
    Rng noise(derive_seed(spec.seed, "noise", t));
    for (auto& val : h.data()) val += spec.noise * noise.normal();
    if (ts.kind == TaskKind::kRegression) {
      b.Y.push_back(std::move(h));
      continue;
    }
    Tensor onehot(Shape{spec.n, ts.out_dim});
    for (std::size_t r = 0; r < spec.n; ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < ts.out_dim; ++c) {
        if (h.at(r, c) > h.at(r, best)) best = c;
      }
      onehot.at(r, best) = 1.0;
    }
    b.Y.push_back(std::move(onehot));
  }
  b.splits.train.resize(spec.n);
  std::iota(b.splits.train.begin(), b.splits.train.end(), std::size_t{0});
  return b;
}

Tensor shared_features(const GeneratorSpec& spec, const Tensor& X, std::size_t t) {
  spec.validate();
  if (t >= spec.tasks.size()) throw InvalidArgument("task index out of range");
  const Projections p = project(spec, X);
  return affine(shared_net_output(spec, p), head_weights(spec, t), nullptr, false);
}

GeneratorSpec outlier_spec(GeneratorSpec base, std::size_t outlier) {
  if (base.tasks.size() < 2) throw InvalidArgument("outlier suite needs at least 2 tasks");
  if (outlier >= base.tasks.size()) {
    throw InvalidArgument("outlier index " + std::to_string(outlier) + " out of range for " +
                          std::to_string(base.tasks.size()) + " tasks");
  }
  for (std::size_t t = 0; t < base.tasks.size(); ++t) base.tasks[t].rho = t == outlier ? 0.0 : 0.9;
  base.outlier = outlier;
  return base;
}

TaskBundle make_outlier_suite(const GeneratorSpec& base, std::size_t outlier) {
  return generate(outlier_spec(base, outlier));
}

void split(TaskBundle& bundle, std::span<const double> fractions, std::uint64_t seed) {
  if (fractions.empty() || fractions.size() > 2) {
    throw InvalidArgument("split takes one or two fractions (train[, val])");
  }
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw InvalidArgument("split fractions must be positive");
    total += f;
  }
  if (total > 1.0 + 1e-12) throw InvalidArgument("split fractions sum above 1");
  const std::size_t n = bundle.n();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(idx.begin(), idx.end());

  std::vector<std::size_t> sizes;
  std::size_t used = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    auto s = static_cast<std::size_t>(std::llround(fractions[i] * static_cast<double>(n)));
    s = std::min(s, n - used);
    if (s == 0) {
      throw InvalidArgument(std::string(i == 0 ? "train" : "val") + " split receives 0 of " +
                            std::to_string(n) + " examples");
    }
    sizes.push_back(s);
    used += s;
  }
  auto take = [&](std::size_t from, std::size_t count) {
    std::vector<std::size_t> out(idx.begin() + static_cast<std::ptrdiff_t>(from),
                                 idx.begin() + static_cast<std::ptrdiff_t>(from + count));
    std::sort(out.begin(), out.end());
    return out;
  };
  Splits s;
  s.train = take(0, sizes[0]);
  if (sizes.size() > 1) s.val = take(sizes[0], sizes[1]);
  s.test = take(used, n - used);
  bundle.splits = std::move(s);
}

json spec_to_json(const GeneratorSpec& spec) {
  json tasks = json::array();
  for (const auto& t : spec.tasks) {
    json jt = {{"kind", kind_name(t.kind)}, {"out_dim", t.out_dim}, {"rho", t.rho}};
    if (t.head_id) jt["head_id"] = *t.head_id;
    tasks.push_back(std::move(jt));
  }
  json j = {{"n", spec.n},         {"d", spec.d},         {"k", spec.k},        {"hidden", spec.hidden},
            {"noise", spec.noise}, {"seed", spec.seed}, {"tasks", tasks}};
  if (spec.outlier) j["outlier"] = *spec.outlier;
  return j;
}

GeneratorSpec spec_from_json(const json& j) {
  constexpr std::string_view where = "generator";
  jsonu::check_keys(j, {"n", "d", "k", "hidden", "noise", "seed", "tasks", "outlier"}, where);
  GeneratorSpec s;
  s.n = jsonu::required<std::size_t>(j, "n", where);
  s.d = jsonu::required<std::size_t>(j, "d", where);
  s.k = jsonu::required<std::size_t>(j, "k", where);
  s.seed = jsonu::required<std::uint64_t>(j, "seed", where);
  s.hidden = jsonu::optional<std::size_t>(j, "hidden", 16, where);
  s.noise = jsonu::optional<double>(j, "noise", 0.0, where);
  const json tasks = jsonu::required<json>(j, "tasks", where);
  if (!tasks.is_array()) throw ConfigError("generator.tasks: expected an array");
  for (const auto& jt : tasks) {
    constexpr std::string_view tw = "generator.tasks[]";
    jsonu::check_keys(jt, {"kind", "out_dim", "rho", "head_id"}, tw);
    TaskGenSpec t;
    try {
      t.kind = parse_kind(jsonu::optional<std::string>(jt, "kind", "regression", tw));
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string(tw) + ": " + e.what());
    }
    t.out_dim = jsonu::optional<std::size_t>(jt, "out_dim", 1, tw);
    t.rho = jsonu::optional<double>(jt, "rho", 0.0, tw);
    if (jt.contains("head_id")) t.head_id = jsonu::required<std::size_t>(jt, "head_id", tw);
    s.tasks.push_back(t);
  }
  if (j.contains("outlier")) s.outlier = jsonu::required<std::size_t>(j, "outlier", where);
  try {
    s.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string(where) + ": " + e.what());
  }
  return s;
}

namespace {

struct Blob {
  std::string name;
  const Tensor* tensor;
  std::vector<std::uint8_t> bytes;
};

std::vector<Blob> blobs_of(const TaskBundle& b) {
  std::vector<Blob> out;
  out.push_back({"X", &b.X, io::encode_f64(b.X.data())});
  for (std::size_t t = 0; t < b.Y.size(); ++t) {
    out.push_back({"Y" + std::to_string(t), &b.Y[t], io::encode_f64(b.Y[t].data())});
  }
  return out;
}

std::string manifest_text(const TaskBundle& b, const std::vector<Blob>& blobs) {
  json arrays = json::array();
  for (const auto& bl : blobs) {
    arrays.push_back({{"name", bl.name},
                      {"file", bl.name + ".bin"},
                      {"shape", bl.tensor->shape()},
                      {"crc32", io::hex32(io::crc32(bl.bytes))}});
  }
  json m = {{"format", "smtl-bundle/1"},
            {"spec", spec_to_json(b.spec)},
            {"arrays", arrays},
            {"splits", {{"train", b.splits.train}, {"val", b.splits.val}, {"test", b.splits.test}}}};
  return m.dump(2) + "\n";
}

void validate_splits(const Splits& s, std::size_t n) {
  std::vector<char> seen(n, 0);
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    for (auto i : *part) {
      if (i >= n) throw IoError("split index " + std::to_string(i) + " out of range");
      if (seen[i]) throw IoError("split index " + std::to_string(i) + " appears twice");
      seen[i] = 1;
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw IoError("splits do not cover every example");
}

}  // namespace

void save_bundle(const TaskBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto blobs = blobs_of(bundle);
  for (const auto& bl : blobs) io::write_bytes(dir / (bl.name + ".bin"), bl.bytes);
  io::write_text(dir / "manifest.json", manifest_text(bundle, blobs));
}

TaskBundle load_bundle(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  json m;
  try {
    m = json::parse(io::read_text(manifest_path));
  } catch (const json::exception& e) {
    throw IoError("malformed bundle manifest " + manifest_path.string() + ": " + e.what());
  }
  TaskBundle b;
  try {
    if (m.at("format").get<std::string>() != "smtl-bundle/1") throw IoError("unsupported bundle format");
    try {
      b.spec = spec_from_json(m.at("spec"));
    } catch (const ConfigError& e) {
      throw IoError(std::string("bundle manifest spec: ") + e.what());
    }
    for (const auto& a : m.at("arrays")) {
      const auto name = a.at("name").get<std::string>();
      const Shape shape = a.at("shape").get<Shape>();
      const auto bytes = io::read_bytes(dir / a.at("file").get<std::string>());
      if (bytes.size() != shape_size(shape) * 8) {
        throw IoError("blob " + name + " holds " + std::to_string(bytes.size()) + " bytes, shape " +
                      shape_str(shape) + " needs " + std::to_string(shape_size(shape) * 8));
      }
      if (io::hex32(io::crc32(bytes)) != a.at("crc32").get<std::string>()) {
        throw ChecksumError("checksum mismatch in bundle blob " + name);
      }
      Tensor t(shape, io::decode_f64(bytes));
      if (name == "X") {
        b.X = std::move(t);
      } else {
        b.Y.push_back(std::move(t));
      }
    }
    const auto& s = m.at("splits");
    b.splits.train = s.at("train").get<std::vector<std::size_t>>();
    b.splits.val = s.at("val").get<std::vector<std::size_t>>();
    b.splits.test = s.at("test").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw IoError("malformed bundle manifest " + manifest_path.string() + ": " + e.what());
  }
  if (b.Y.size() != b.spec.tasks.size()) throw IoError("bundle task count disagrees with its spec");
  if (b.X.rank() != 2 || b.X.rows() != b.spec.n || b.X.cols() != b.spec.d) {
    throw IoError("bundle X shape disagrees with its spec");
  }
  for (const auto& y : b.Y) {
    if (y.rank() != 2 || y.rows() != b.spec.n) throw IoError("bundle target rows disagree with X");
  }
  validate_splits(b.splits, b.n());
  return b;
}

std::string bundle_checksum(const TaskBundle& bundle) {
  return io::hex32(io::crc32(manifest_text(bundle, blobs_of(bundle))));
}

std::string bundle_checksum(const std::filesystem::path& dir) {
  return io::hex32(io::crc32(io::read_text(dir / "manifest.json")));
}

}  // namespace smtl::synth
