#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace smad::anck {

inline constexpr std::uint16_t kVersion = 1;

struct Blob {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  bool operator==(const Blob&) const = default;
};

// "ANCK" | u16 version | u32 header length | JSON header | u32 blob count |
// blobs: u32 name length, name, u32 rank, u32 dims[rank], f32 data.
struct Container {
  std::string header;  // JSON text; must carry a "kind" field
  std::vector<Blob> blobs;

  const Blob& blob(std::string_view name, std::string_view module) const;
};

std::string encode(const Container& c);
// Any structural problem (magic, version, truncation, trailing bytes,
// dims/data mismatch) throws `module`::BadCheckpoint.
Container decode(std::string_view bytes, std::string_view module);

void write(const std::filesystem::path& path, const Container& c, std::string_view module);
Container read(const std::filesystem::path& path, std::string_view module);

}  // namespace smad::anck
