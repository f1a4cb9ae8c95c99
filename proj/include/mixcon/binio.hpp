// Copyright 2026 The mixcon Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Little-endian framing helpers shared by the dataset blobs and checkpoints.

#ifndef MIXCON_BINIO_HPP_
#define MIXCON_BINIO_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixcon {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TruncatedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open for writing: " + path.string());
  }

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failed: " + path_.string());
  }

  template <typename T>
  void le(T v) {
    static_assert(std::is_integral_v<T>);
    unsigned char buf[sizeof(T)];
    using U = std::make_unsigned_t<T>;
    U u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf[i] = static_cast<unsigned char>(u >> (8 * i));
    }
    bytes(buf, sizeof(T));
  }

  void u8(std::uint8_t v) { le(v); }
  void u16(std::uint16_t v) { le(v); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }

  void f32s(std::span<const float> v) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(v.data(), v.size() * sizeof(float));
    } else {
      for (float x : v) f32(x);
    }
  }

  void close() {
    out_.close();
    if (!out_) throw IoError("close failed: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open for reading: " + path.string());
  }

  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw TruncatedError("truncated file: " + path_.string());
    }
  }

  template <typename T>
  T le() {
    unsigned char buf[sizeof(T)];
    bytes(buf, sizeof(T));
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<U>(static_cast<U>(buf[i]) << (8 * i));
    }
    return static_cast<T>(u);
  }

  std::uint8_t u8() { return le<std::uint8_t>(); }
  std::uint16_t u16() { return le<std::uint16_t>(); }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }

  void f32s(std::span<float> v) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(v.data(), v.size() * sizeof(float));
    } else {
      for (float& x : v) x = f32();
    }
  }

  std::string string(std::size_t n) {
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace mixcon

#endif  // MIXCON_BINIO_HPP_
