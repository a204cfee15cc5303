// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#include "glap/error.hpp"

namespace glap {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput: return "invalid input";
    case ErrorCode::kShape: return "shape error";
    case ErrorCode::kNumeric: return "numeric error";
    case ErrorCode::kConfig: return "configuration error";
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kChecksum: return "checksum error";
    case ErrorCode::kVersion: return "version error";
    case ErrorCode::kRange: return "range error";
    case ErrorCode::kUnsupported: return "unsupported";
  }
  return "error";
}

}  // namespace glap
