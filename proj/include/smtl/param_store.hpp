// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "smtl/tensor.hpp"

namespace smtl {

/// Named parameter tensors keyed by dot-separated paths
/// (e.g. `encoder.public.layer0.W`). Iteration order is lexicographic.
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor, std::less<>>;

  void set(std::string path, Tensor value) { params_.insert_or_assign(std::move(path), std::move(value)); }
  bool contains(std::string_view path) const { return params_.find(path) != params_.end(); }
  const Tensor& at(std::string_view path) const;
  Tensor& at(std::string_view path);
  void erase(std::string_view path);

  std::size_t size() const noexcept { return params_.size(); }
  bool empty() const noexcept { return params_.empty(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }
  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }

  std::vector<std::string> paths(std::string_view prefix = "") const;

  // Inserts every entry of `other`; existing paths are overwritten.
  void merge(const ParamStore& other);

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  Map params_;
};

/// Total element count of tensors whose path starts with `prefix`.
std::size_t param_count(const ParamStore& store, std::string_view prefix = "");

bool path_has_prefix(std::string_view path, std::string_view prefix);

/// Checkpoint: `<stem>.json` manifest (path -> shape, offset) plus `<stem>.bin`,
/// one flat little-endian float64 blob in manifest order.
void save_checkpoint(const ParamStore& store, const std::filesystem::path& dir,
                     std::string_view stem = "params");
ParamStore load_checkpoint(const std::filesystem::path& dir, std::string_view stem = "params");

}  // namespace smtl
