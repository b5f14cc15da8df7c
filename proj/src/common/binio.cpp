#include "smad/common/binio.hpp"

#include <fstream>
#include <iterator>

namespace smad::binio {

std::string_view Reader::take(std::size_t n) {
  if (n > remaining()) {
    throw Error(module_, code_,
                "truncated input: need " + std::to_string(n) + " bytes at offset " +
                    std::to_string(pos_) + ", have " + std::to_string(remaining()));
  }
  auto out = bytes_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::string read_file(const std::filesystem::path& path, std::string_view module) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(module, ErrorCode::IoError, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(module, ErrorCode::IoError, "read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::string_view bytes,
                std::string_view module) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(module, ErrorCode::IoError, "cannot create " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(module, ErrorCode::IoError, "write failed: " + path.string());
}

}  // namespace smad::binio
