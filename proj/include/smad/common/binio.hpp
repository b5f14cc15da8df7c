#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "smad/common/error.hpp"

namespace smad::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written by memcpy of little-endian scalars");

// Append-only little-endian byte sink.
class Writer {
 public:
  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    bytes_.append(raw, sizeof(T));
  }

  void put_bytes(std::string_view raw) { bytes_.append(raw); }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put_span(std::span<const T> values) {
    bytes_.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
  }

  const std::string& bytes() const noexcept { return bytes_; }
  std::string release() { return std::move(bytes_); }

 private:
  std::string bytes_;
};

// Bounds-checked little-endian reader. Running past the end raises the
// error code given at construction (format-specific, e.g. BadCheckpoint).
class Reader {
 public:
  Reader(std::string_view bytes, std::string_view module, ErrorCode on_truncation)
      : bytes_(bytes), module_(module), code_(on_truncation) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)).data(), sizeof(T));
    return value;
  }

  std::string_view get_bytes(std::size_t n) { return take(n); }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void get_span(std::span<T> out) {
    auto raw = take(out.size_bytes());
    std::memcpy(out.data(), raw.data(), raw.size());
  }

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::string_view take(std::size_t n);

  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::string module_;
  ErrorCode code_;
};

std::string read_file(const std::filesystem::path& path, std::string_view module);
void write_file(const std::filesystem::path& path, std::string_view bytes,
                std::string_view module);

}  // namespace smad::binio
