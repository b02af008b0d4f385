// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace notecraft {

// Base of every error thrown by the library. `kind()` is a short stable tag
// used in the CLI's machine-readable error line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error("contract", what) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error("input", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class ConflictError : public Error {
 public:
  explicit ConflictError(const std::string& what) : Error("conflict", what) {}
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& what) : Error("not_found", what) {}
};

// A stage was asked to run before the stage it consumes.
class DependencyError : public Error {
 public:
  explicit DependencyError(const std::string& what) : Error("dependency", what) {}
};

class UndefinedRatioError : public Error {
 public:
  explicit UndefinedRatioError(const std::string& what) : Error("undefined_ratio", what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("format", what) {}
};

}  // namespace notecraft
