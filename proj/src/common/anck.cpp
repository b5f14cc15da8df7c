#include "smad/common/anck.hpp"

#include "smad/common/binio.hpp"
#include "smad/common/error.hpp"

namespace smad::anck {

const Blob& Container::blob(std::string_view name, std::string_view module) const {
  for (const auto& b : blobs) {
    if (b.name == name) return b;
  }
  throw Error(module, ErrorCode::BadCheckpoint, "missing tensor '" + std::string(name) + "'");
}

std::string encode(const Container& c) {
  binio::Writer out;
  out.put_bytes("ANCK");
  out.put<std::uint16_t>(kVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(c.header.size()));
  out.put_bytes(c.header);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(c.blobs.size()));
  for (const auto& b : c.blobs) {
    out.put<std::uint32_t>(static_cast<std::uint32_t>(b.name.size()));
    out.put_bytes(b.name);
    out.put<std::uint32_t>(static_cast<std::uint32_t>(b.dims.size()));
    for (auto d : b.dims) out.put<std::uint32_t>(d);
    out.put_span<float>(b.data);
  }
  return out.release();
}

Container decode(std::string_view bytes, std::string_view module) {
  binio::Reader in(bytes, module, ErrorCode::BadCheckpoint);
  if (in.get_bytes(4) != "ANCK") throw Error(module, ErrorCode::BadCheckpoint, "bad magic");
  const auto version = in.get<std::uint16_t>();
  if (version != kVersion) {
    throw Error(module, ErrorCode::BadCheckpoint, "unsupported version " + std::to_string(version));
  }
  Container c;
  c.header = std::string(in.get_bytes(in.get<std::uint32_t>()));
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    Blob b;
    b.name = std::string(in.get_bytes(in.get<std::uint32_t>()));
    const auto rank = in.get<std::uint32_t>();
    if (rank > 8) throw Error(module, ErrorCode::BadCheckpoint, "implausible rank for '" + b.name + "'");
    std::uint64_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      b.dims.push_back(in.get<std::uint32_t>());
      n *= b.dims.back();
    }
    if (n * sizeof(float) > in.remaining()) {
      throw Error(module, ErrorCode::BadCheckpoint, "truncated tensor '" + b.name + "'");
    }
    b.data.resize(n);
    in.get_span<float>(b.data);
    c.blobs.push_back(std::move(b));
  }
  if (in.remaining() != 0) throw Error(module, ErrorCode::BadCheckpoint, "trailing bytes");
  return c;
}

void write(const std::filesystem::path& path, const Container& c, std::string_view module) {
  binio::write_file(path, encode(c), module);
}

Container read(const std::filesystem::path& path, std::string_view module) {
  return decode(binio::read_file(path, module), module);
}

}  // namespace smad::anck
