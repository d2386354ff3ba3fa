// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace retex {

/// Malformed or unreadable input data (asset files, configs).
/// Carries a byte offset when the failure position is known.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg, int64_t byte_offset = -1)
      : std::runtime_error(byte_offset >= 0
                               ? msg + " (byte offset " + std::to_string(byte_offset) + ")"
                               : msg),
        byte_offset_(byte_offset) {}

  int64_t byte_offset() const { return byte_offset_; }

 private:
  int64_t byte_offset_;
};

/// Numeric failure: divergence, non-finite intermediate, failed solve.
class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace retex
