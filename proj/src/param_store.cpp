// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "smtl/param_store.hpp"

#include "json.hpp"

#include "smtl/error.hpp"
#include "smtl/io.hpp"

namespace smtl {

using nlohmann::json;

const Tensor& ParamStore::at(std::string_view path) const {
  auto it = params_.find(path);
  if (it == params_.end()) throw InvalidArgument("missing parameter '" + std::string(path) + "'");
  return it->second;
}

Tensor& ParamStore::at(std::string_view path) {
  auto it = params_.find(path);
  if (it == params_.end()) throw InvalidArgument("missing parameter '" + std::string(path) + "'");
  return it->second;
}

void ParamStore::erase(std::string_view path) {
  auto it = params_.find(path);
  if (it != params_.end()) params_.erase(it);
}

std::vector<std::string> ParamStore::paths(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& [p, _] : params_) {
    if (path_has_prefix(p, prefix)) out.push_back(p);
  }
  return out;
}

void ParamStore::merge(const ParamStore& other) {
  for (const auto& [p, t] : other) set(p, t);
}

bool path_has_prefix(std::string_view path, std::string_view prefix) {
  if (prefix.empty()) return true;
  if (!path.starts_with(prefix)) return false;
  return path.size() == prefix.size() || path[prefix.size()] == '.';
}

std::size_t param_count(const ParamStore& store, std::string_view prefix) {
  std::size_t n = 0;
  for (const auto& [p, t] : store) {
    if (path_has_prefix(p, prefix)) n += t.size();
  }
  return n;
}

void save_checkpoint(const ParamStore& store, const std::filesystem::path& dir,
                     std::string_view stem) {
  std::filesystem::create_directories(dir);
  std::vector<double> flat;
  json entries = json::array();
  for (const auto& [path, t] : store) {
    entries.push_back({{"path", path}, {"shape", t.shape()}, {"offset", flat.size()}});
    flat.insert(flat.end(), t.data().begin(), t.data().end());
  }
  const auto blob = io::encode_f64(flat);
  json manifest = {{"format", "smtl-params/1"},
                   {"entries", entries},
                   {"count", flat.size()},
                   {"crc32", io::hex32(io::crc32(blob))}};
  io::write_bytes(dir / (std::string(stem) + ".bin"), blob);
  io::write_text(dir / (std::string(stem) + ".json"), manifest.dump(2) + "\n");
}

ParamStore load_checkpoint(const std::filesystem::path& dir, std::string_view stem) {
  const auto manifest_path = dir / (std::string(stem) + ".json");
  json manifest;
  try {
    manifest = json::parse(io::read_text(manifest_path));
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint manifest " + manifest_path.string() + ": " + e.what());
  }
  const auto blob = io::read_bytes(dir / (std::string(stem) + ".bin"));
  ParamStore store;
  try {
    const std::size_t count = manifest.at("count").get<std::size_t>();
    if (blob.size() != count * 8) {
      throw IoError("checkpoint blob holds " + std::to_string(blob.size()) + " bytes, manifest expects " +
                    std::to_string(count * 8));
    }
    if (manifest.at("crc32").get<std::string>() != io::hex32(io::crc32(blob))) {
      throw ChecksumError("checkpoint blob checksum mismatch in " + dir.string());
    }
    const auto flat = io::decode_f64(blob);
    for (const auto& e : manifest.at("entries")) {
      Shape shape = e.at("shape").get<Shape>();
      const std::size_t off = e.at("offset").get<std::size_t>();
      const std::size_t n = shape_size(shape);
      if (off + n > flat.size()) throw IoError("checkpoint entry exceeds blob");
      store.set(e.at("path").get<std::string>(),
                Tensor(std::move(shape), std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(off),
                                                             flat.begin() + static_cast<std::ptrdiff_t>(off + n))));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint manifest " + manifest_path.string() + ": " + e.what());
  }
  return store;
}

}  // namespace smtl
