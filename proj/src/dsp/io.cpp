#include "smad/dsp/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "smad/common/binio.hpp"

namespace smad::dsp {

std::string encode_wav(const Waveform& w) {
  w.validate();
  const auto n = static_cast<std::uint32_t>(w.size());
  const std::uint32_t data_bytes = n * 2;
  binio::Writer out;
  out.put_bytes("RIFF");
  out.put<std::uint32_t>(36 + data_bytes);
  out.put_bytes("WAVE");
  out.put_bytes("fmt ");
  out.put<std::uint32_t>(16);
  out.put<std::uint16_t>(1);  // PCM
  out.put<std::uint16_t>(1);  // mono
  out.put<std::uint32_t>(static_cast<std::uint32_t>(w.sample_rate));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(w.sample_rate) * 2);
  out.put<std::uint16_t>(2);
  out.put<std::uint16_t>(16);
  out.put_bytes("data");
  out.put<std::uint32_t>(data_bytes);
  for (double x : w.samples) {
    out.put<std::int16_t>(static_cast<std::int16_t>(std::lround(std::clamp(x, -1.0, 1.0) * 32767.0)));
  }
  return out.release();
}

Waveform decode_wav(std::string_view bytes) {
  binio::Reader in(bytes, "dsp", ErrorCode::IoError);
  if (in.get_bytes(4) != "RIFF") throw Error("dsp", ErrorCode::IoError, "not a RIFF file");
  in.get<std::uint32_t>();
  if (in.get_bytes(4) != "WAVE") throw Error("dsp", ErrorCode::IoError, "not a WAVE file");
  int rate = 0;
  bool have_fmt = false;
  while (in.remaining() >= 8) {
    const auto id = in.get_bytes(4);
    const auto size = in.get<std::uint32_t>();
    if (id == "fmt ") {
      const auto format = in.get<std::uint16_t>();
      const auto channels = in.get<std::uint16_t>();
      rate = static_cast<int>(in.get<std::uint32_t>());
      in.get<std::uint32_t>();
      in.get<std::uint16_t>();
      const auto bits = in.get<std::uint16_t>();
      if (format != 1 || channels != 1 || bits != 16) {
        throw Error("dsp", ErrorCode::IoError, "only 16-bit PCM mono WAV is supported");
      }
      if (size > 16) in.get_bytes(size - 16);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error("dsp", ErrorCode::IoError, "data chunk before fmt chunk");
      Waveform w;
      w.sample_rate = rate;
      w.samples.resize(size / 2);
      for (double& x : w.samples) x = static_cast<double>(in.get<std::int16_t>()) / 32767.0;
      return w;
    } else {
      in.get_bytes(size + (size & 1));
    }
  }
  throw Error("dsp", ErrorCode::IoError, "WAV file has no data chunk");
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  binio::write_file(path, encode_wav(w), "dsp");
}

Waveform read_wav(const std::filesystem::path& path) { return decode_wav(binio::read_file(path, "dsp")); }

std::string encode_spectrogram(const MelSpectrogram& m) {
  binio::Writer out;
  out.put_bytes("MSPC");
  out.put<std::uint16_t>(kSpectrogramVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(m.values.rows()));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(m.values.cols()));
  const float nan = std::numeric_limits<float>::quiet_NaN();
  out.put<float>(m.norm ? m.norm->min : nan);
  out.put<float>(m.norm ? m.norm->max : nan);
  out.put_span(m.values.flat());
  return out.release();
}

MelSpectrogram decode_spectrogram(std::string_view bytes, const MelConfig& cfg) {
  binio::Reader in(bytes, "dsp", ErrorCode::IoError);
  if (in.get_bytes(4) != "MSPC") throw Error("dsp", ErrorCode::IoError, "bad spectrogram magic");
  const auto version = in.get<std::uint16_t>();
  if (version != kSpectrogramVersion) {
    throw Error("dsp", ErrorCode::IoError, "unsupported spectrogram version " + std::to_string(version));
  }
  const auto rows = in.get<std::uint32_t>();
  const auto cols = in.get<std::uint32_t>();
  const float lo = in.get<float>();
  const float hi = in.get<float>();
  MelSpectrogram m;
  m.config = cfg;
  m.values = Matrix<float>(rows, cols);
  in.get_span(m.values.flat());
  if (in.remaining() != 0) throw Error("dsp", ErrorCode::IoError, "trailing bytes after spectrogram payload");
  if (!std::isnan(lo) && !std::isnan(hi)) m.norm = Normalization{lo, hi};
  return m;
}

void write_spectrogram(const std::filesystem::path& path, const MelSpectrogram& m) {
  binio::write_file(path, encode_spectrogram(m), "dsp");
}

MelSpectrogram read_spectrogram(const std::filesystem::path& path, const MelConfig& cfg) {
  return decode_spectrogram(binio::read_file(path, "dsp"), cfg);
}

}  // namespace smad::dsp
