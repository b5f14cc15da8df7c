#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "smad/dsp/mel.hpp"
#include "smad/dsp/stft.hpp"

namespace smad::dsp {

// 16-bit PCM mono RIFF/WAVE. Samples are clamped to [-1, 1] and scaled by
// 32767 on write.
std::string encode_wav(const Waveform& w);
Waveform decode_wav(std::string_view bytes);
void write_wav(const std::filesystem::path& path, const Waveform& w);
Waveform read_wav(const std::filesystem::path& path);

// "MSPC" container: u16 version, u32 rows, u32 cols, f32 norm min, f32 norm
// max, row-major f32 payload. A spectrogram without a normalization record
// stores NaN for both bounds. The mel config is not part of the file.
inline constexpr std::uint16_t kSpectrogramVersion = 1;
std::string encode_spectrogram(const MelSpectrogram& m);
MelSpectrogram decode_spectrogram(std::string_view bytes, const MelConfig& cfg = {});
void write_spectrogram(const std::filesystem::path& path, const MelSpectrogram& m);
MelSpectrogram read_spectrogram(const std::filesystem::path& path, const MelConfig& cfg = {});

}  // namespace smad::dsp
