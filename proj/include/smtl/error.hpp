// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace smtl {

// Every failure the library reports carries one of these categories; the CLI
// maps them onto its exit codes.
enum class Errc {
  kInvalidArgument,
  kShape,
  kNumeric,
  kConfig,
  kIo,
  kChecksum,
  kDivergence,
  kMismatch,
  kAssertion,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(Errc::kShape, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(Errc::kNumeric, what) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(Errc::kInvalidArgument, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(Errc::kIo, what) {}
};

class ChecksumError : public Error {
 public:
  explicit ChecksumError(const std::string& what) : Error(Errc::kChecksum, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(Errc::kConfig, what) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(Errc::kDivergence, what) {}
};

class MismatchError : public Error {
 public:
  explicit MismatchError(const std::string& what) : Error(Errc::kMismatch, what) {}
};

class AssertionFailure : public Error {
 public:
  explicit AssertionFailure(const std::string& what) : Error(Errc::kAssertion, what) {}
};

}  // namespace smtl
