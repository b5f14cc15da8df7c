#include <set>

#include "json.hpp"
#include "smad/common/binio.hpp"
#include "smad/common/error.hpp"
#include "smad/synth/synth.hpp"

namespace smad::synth {

using nlohmann::json;

std::string encode_motion(const MotionFieldSequence& m) {
  m.validate();
  binio::Writer out;
  out.put_bytes("MFLD");
  out.put<std::uint16_t>(kMotionVersion);
  for (std::size_t v : {m.dims.frames, m.dims.x, m.dims.y, m.dims.z}) out.put<std::uint32_t>(static_cast<std::uint32_t>(v));
  out.put_span(std::span<const float>(m.data));
  return out.release();
}

MotionFieldSequence decode_motion(std::string_view bytes) {
  binio::Reader in(bytes, "synth", ErrorCode::IoError);
  if (in.get_bytes(4) != "MFLD") throw Error("synth", ErrorCode::IoError, "bad motion file magic");
  const auto version = in.get<std::uint16_t>();
  if (version != kMotionVersion) {
    throw Error("synth", ErrorCode::IoError, "unsupported motion file version " + std::to_string(version));
  }
  MotionFieldSequence m;
  m.dims.frames = in.get<std::uint32_t>();
  m.dims.x = in.get<std::uint32_t>();
  m.dims.y = in.get<std::uint32_t>();
  m.dims.z = in.get<std::uint32_t>();
  const std::size_t count = m.dims.frames * m.dims.frame_size();
  if (count * sizeof(float) != in.remaining()) {
    throw Error("synth", ErrorCode::IoError, "motion payload size does not match header dims");
  }
  m.data.resize(count);
  in.get_span(std::span<float>(m.data));
  m.validate();
  return m;
}

void write_motion(const std::filesystem::path& path, const MotionFieldSequence& m) {
  binio::write_file(path, encode_motion(m), "synth");
}

MotionFieldSequence read_motion(const std::filesystem::path& path) {
  auto m = decode_motion(binio::read_file(path, "synth"));
  m.subject_id = path.stem().string();
  return m;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  json arr = json::array();
  for (const auto& e : m.entries) {
    arr.push_back({{"subject_id", e.subject_id},
                   {"label", label_name(e.label)},
                   {"motion", e.motion_path.generic_string()},
                   {"audio", e.audio_path.generic_string()},
                   {"phrase", e.phrase}});
  }
  binio::write_file(path, arr.dump(2) + "\n", "synth");
}

Manifest read_manifest(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(binio::read_file(path, "synth"));
  } catch (const json::exception& e) {
    throw Error("synth", ErrorCode::BadManifest, path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw Error("synth", ErrorCode::BadManifest, "manifest must be a JSON array");
  Manifest m;
  m.root = path.parent_path();
  std::set<std::string> seen;
  for (const auto& item : doc) {
    ManifestEntry e;
    try {
      for (const auto& [key, value] : item.items()) {
        if (key != "subject_id" && key != "label" && key != "motion" && key != "audio" && key != "phrase") {
          throw Error("synth", ErrorCode::BadManifest, "unknown manifest key '" + key + "'");
        }
      }
      e.subject_id = item.at("subject_id").get<std::string>();
      e.label = parse_label(item.at("label").get<std::string>());
      e.motion_path = item.at("motion").get<std::string>();
      e.audio_path = item.at("audio").get<std::string>();
      e.phrase = item.value("phrase", std::string{});
    } catch (const json::exception& ex) {
      throw Error("synth", ErrorCode::BadManifest, std::string("malformed manifest entry: ") + ex.what());
    }
    if (!seen.insert(e.subject_id).second) {
      throw Error("synth", ErrorCode::BadManifest, "duplicate subject id " + e.subject_id);
    }
    for (const auto& p : {e.motion_path, e.audio_path}) {
      const auto full = p.is_absolute() ? p : m.root / p;
      if (!std::filesystem::exists(full)) throw Error("synth", ErrorCode::IoError, "missing file " + full.string());
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

}  // namespace smad::synth
