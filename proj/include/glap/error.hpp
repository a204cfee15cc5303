// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace glap {

enum class ErrorCode {
  kInvalidInput,
  kShape,
  kNumeric,
  kConfig,
  kParse,
  kIo,
  kChecksum,
  kVersion,
  kRange,
  kUnsupported,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised on NaN/Inf; carries the offending (row, col) when one exists.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message,
                        std::optional<std::pair<std::size_t, std::size_t>> where = std::nullopt)
      : Error(ErrorCode::kNumeric, message), where_(where) {}

  const std::optional<std::pair<std::size_t, std::size_t>>& where() const noexcept {
    return where_;
  }

 private:
  std::optional<std::pair<std::size_t, std::size_t>> where_;
};

}  // namespace glap
