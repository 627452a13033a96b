// SPDX-License-Identifier: Apache-2.0
#pragma once

// Low-level helpers shared by the binary file formats: little-endian
// scalar IO, FNV-1a checksums, and atomic (write-temp-then-rename) file
// replacement.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <type_traits>
#include <vector>

namespace fishmask::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written natively and assume little-endian");

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) {
  return fnv1a(s.data(), s.size());
}

// Byte sink that keeps a running checksum of everything written.
class ChecksummedWriter {
 public:
  explicit ChecksummedWriter(std::ostream& os) : os_(os) {}

  void write_raw(const void* data, std::size_t n) {
    os_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    hash_ = fnv1a(data, n, hash_);
  }

  template <typename T>
  void write(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    write_raw(&value, sizeof(T));
  }

  template <typename T>
  void write_span(const T* data, std::size_t count) {
    write_raw(data, count * sizeof(T));
  }

  std::uint64_t hash() const { return hash_; }

 private:
  std::ostream& os_;
  std::uint64_t hash_ = kFnvOffset;
};

class ChecksummedReader {
 public:
  explicit ChecksummedReader(std::istream& is, std::string path)
      : is_(is), path_(std::move(path)) {}

  void read_raw(void* data, std::size_t n);

  template <typename T>
  T read() {
    static_assert(std::is_trivially_copyable_v<T>);
    T value{};
    read_raw(&value, sizeof(T));
    return value;
  }

  template <typename T>
  void read_span(T* data, std::size_t count) {
    read_raw(data, count * sizeof(T));
  }

  std::uint64_t hash() const { return hash_; }
  std::size_t offset() const { return offset_; }
  const std::string& path() const { return path_; }

 private:
  std::istream& is_;
  std::string path_;
  std::uint64_t hash_ = kFnvOffset;
  std::size_t offset_ = 0;
};

// Writes via `fill`, then renames over `path` so readers never observe a
// half-written file.
void atomic_write(const std::string& path,
                  const std::function<void(std::ostream&)>& fill);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace fishmask::io
