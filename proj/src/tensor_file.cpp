// Copyright 2026 The GLAP Authors
// SPDX-License-Identifier: Apache-2.0

#include "glap/tensor_file.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "glap/error.hpp"

namespace glap {

namespace {

constexpr std::size_t kMaxDims = 8;

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t(in[at + i]) << (8 * i);
  return v;
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, const std::string& source)
      : bytes_(bytes), source_(source) {}

  std::uint64_t take(int n) {
    need(n);
    const auto v = get_le(bytes_, pos_, n);
    pos_ += n;
    return v;
  }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorCode::kIo, source_ + ": truncated tensor file");
    }
  }

  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) { need(n); pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t Tensor::element_count() const noexcept {
  std::size_t n = 1;
  for (auto d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

Tensor Tensor::f32(std::vector<std::uint64_t> dims, std::vector<float> values) {
  Tensor t{std::move(dims), std::move(values)};
  if (t.element_count() != t.as_f32().size()) {
    throw Error(ErrorCode::kShape, "tensor dims do not match value count");
  }
  return t;
}

Tensor Tensor::f64(std::vector<std::uint64_t> dims, std::vector<double> values) {
  Tensor t{std::move(dims), std::move(values)};
  if (t.element_count() != t.as_f64().size()) {
    throw Error(ErrorCode::kShape, "tensor dims do not match value count");
  }
  return t;
}

const std::vector<float>& Tensor::as_f32() const {
  if (dtype() != DType::kFloat32) throw Error(ErrorCode::kUnsupported, "tensor is not float32");
  return std::get<0>(values);
}

const std::vector<double>& Tensor::as_f64() const {
  if (dtype() != DType::kFloat64) throw Error(ErrorCode::kUnsupported, "tensor is not float64");
  return std::get<1>(values);
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for payloads over 4 GiB.
  constexpr std::size_t kChunk = std::numeric_limits<uInt>::max();
  for (std::size_t at = 0; at < bytes.size(); at += kChunk) {
    const auto n = static_cast<uInt>(std::min(kChunk, bytes.size() - at));
    crc = ::crc32(crc, bytes.data() + at, n);
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
  if (tensor.dims.size() > kMaxDims) throw Error(ErrorCode::kShape, "too many tensor dims");
  std::vector<std::uint8_t> out(std::begin(kTensorMagic), std::end(kTensorMagic));
  put_le(out, kTensorVersion, 4);
  put_le(out, static_cast<std::uint8_t>(tensor.dtype()), 1);
  put_le(out, tensor.dims.size(), 1);
  for (auto d : tensor.dims) put_le(out, d, 8);

  const std::size_t payload_start = out.size();
  std::visit(
      [&](const auto& vals) {
        for (auto v : vals) {
          if constexpr (sizeof(v) == 4) {
            put_le(out, std::bit_cast<std::uint32_t>(v), 4);
          } else {
            put_le(out, std::bit_cast<std::uint64_t>(v), 8);
          }
        }
      },
      tensor.values);
  const auto crc = crc32(std::span(out).subspan(payload_start));
  put_le(out, crc, 4);
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes, const std::string& source) {
  Reader in(bytes, source);
  in.need(sizeof(kTensorMagic));
  if (!std::equal(std::begin(kTensorMagic), std::end(kTensorMagic), bytes.begin())) {
    throw Error(ErrorCode::kParse, source + ": bad magic, not a GLAP-TENSOR file");
  }
  in.skip(sizeof(kTensorMagic));
  const auto version = in.take(4);
  if (version > kTensorVersion || version == 0) {
    throw Error(ErrorCode::kVersion, source + ": unsupported tensor format version " +
                                         std::to_string(version));
  }
  const auto dtype = in.take(1);
  const auto ndim = in.take(1);
  if (dtype > static_cast<std::uint8_t>(DType::kFloat64)) {
    throw Error(ErrorCode::kUnsupported, source + ": unsupported dtype code " +
                                             std::to_string(dtype));
  }
  if (ndim > kMaxDims) throw Error(ErrorCode::kParse, source + ": too many dims");

  std::vector<std::uint64_t> dims(ndim);
  std::uint64_t count = 1;
  for (auto& d : dims) {
    d = in.take(8);
    if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / 16 / d) {
      throw Error(ErrorCode::kParse, source + ": tensor dims overflow");
    }
    count *= d;
  }
  const std::size_t width = dtype == 0 ? 4 : 8;
  const std::size_t payload_bytes = static_cast<std::size_t>(count) * width;
  in.need(payload_bytes + 4);
  if (bytes.size() != in.pos() + payload_bytes + 4) {
    throw Error(ErrorCode::kParse, source + ": trailing bytes after tensor checksum");
  }
  const auto payload = bytes.subspan(in.pos(), payload_bytes);
  const auto stored = static_cast<std::uint32_t>(get_le(bytes, in.pos() + payload_bytes, 4));
  if (crc32(payload) != stored) {
    throw Error(ErrorCode::kChecksum, source + ": payload CRC32 mismatch");
  }

  if (dtype == 0) {
    std::vector<float> vals(count);
    for (std::size_t i = 0; i < vals.size(); ++i) {
      vals[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(payload, 4 * i, 4)));
    }
    return Tensor{std::move(dims), std::move(vals)};
  }
  std::vector<double> vals(count);
  for (std::size_t i = 0; i < vals.size(); ++i) {
    vals[i] = std::bit_cast<double>(get_le(payload, 8 * i, 8));
  }
  return Tensor{std::move(dims), std::move(vals)};
}

void write_tensor_file(const std::filesystem::path& path, const Tensor& tensor) {
  const auto bytes = encode_tensor(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

Tensor read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open tensor file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_tensor(bytes, path.string());
}

}  // namespace glap
