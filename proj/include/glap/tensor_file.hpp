// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

// GLAP-TENSOR container, all integers little-endian:
//
//   magic   "GLAPTNSR"        8 bytes
//   version u32
//   dtype   u8                0 = float32, 1 = float64
//   ndim    u8
//   dims    u64 x ndim
//   payload row-major values
//   crc32   u32               IEEE polynomial over the payload bytes

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace glap {

enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

inline constexpr char kTensorMagic[8] = {'G', 'L', 'A', 'P', 'T', 'N', 'S', 'R'};
inline constexpr std::uint32_t kTensorVersion = 1;

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::variant<std::vector<float>, std::vector<double>> values;

  DType dtype() const noexcept {
    return values.index() == 0 ? DType::kFloat32 : DType::kFloat64;
  }
  std::size_t element_count() const noexcept;

  static Tensor f32(std::vector<std::uint64_t> dims, std::vector<float> values);
  static Tensor f64(std::vector<std::uint64_t> dims, std::vector<double> values);

  const std::vector<float>& as_f32() const;
  const std::vector<double>& as_f64() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);
/// `source` names the blob in error messages.
Tensor decode_tensor(std::span<const std::uint8_t> bytes, const std::string& source);

void write_tensor_file(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor_file(const std::filesystem::path& path);

}  // namespace glap
