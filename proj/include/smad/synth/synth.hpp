#pragma once

// Synthetic articulatory corpus: paired motion-field sequences and speech-like
// waveforms driven by one shared latent gesture. Healthy subjects map the
// gesture to formants through a fixed coupling; patients get a perturbed
// coupling plus a phase drift between motion and audio, leaving each modality
// on its own statistically unchanged.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "smad/dsp/stft.hpp"

namespace smad::synth {

struct MotionDims {
  std::size_t frames = 8;
  std::size_t x = 16;
  std::size_t y = 16;
  std::size_t z = 16;

  std::size_t voxels() const noexcept { return x * y * z; }
  std::size_t frame_size() const noexcept { return voxels() * 3; }
  bool operator==(const MotionDims&) const = default;
};

// T frames of X*Y*Z*3 displacements, layout [t][x][y][z][channel].
struct MotionFieldSequence {
  MotionDims dims;
  std::vector<float> data;
  float frame_rate = 26.0f;
  std::string subject_id;

  float at(std::size_t t, std::size_t x, std::size_t y, std::size_t z, std::size_t c) const {
    return data[(((t * dims.x + x) * dims.y + y) * dims.z + z) * 3 + c];
  }
  void validate() const;
};

inline constexpr std::size_t kBlobs = 2;
inline constexpr std::size_t kCentersPerBlob = 2;

struct GestureLatent {
  std::array<double, kBlobs> amplitude{};           // [0.2, 1.0]
  std::array<std::size_t, kBlobs> center_index{};   // into the blob's center set
  std::array<double, kBlobs> frequency{};           // cycles per utterance, [0.5, 2.0]
  double phase = 0.0;                               // [0, 2π)
};

// Fixed center set, as fractions of the grid extent: blob j may sit at
// centers[j][0] or centers[j][1].
const std::array<std::array<std::array<double, 3>, kCentersPerBlob>, kBlobs>& blob_center_set();
// Unit displacement direction of each blob.
const std::array<std::array<double, 3>, kBlobs>& blob_directions();

using Coupling = std::array<std::array<double, 2>, 2>;

enum class Label { Healthy, Patient };
const char* label_name(Label label);
Label parse_label(const std::string& text);

struct AudioConfig {
  int sample_rate = 10000;
  std::size_t length = 24000;
  double f0 = 100.0;
  std::array<double, 2> bandwidth_hz{50.0, 60.0};
  double rms = 0.1;
  double noise_std = 0.03;
};

struct SynthConfig {
  MotionDims dims;
  double blob_sigma = 3.0;  // voxels at 16^3, scaled with grid size
  double motion_noise = 0.02;
  AudioConfig audio;
  std::size_t n_healthy = 12;
  std::size_t n_patients = 3;
  double severity = 0.5;
  std::uint64_t seed = 20240229;
  Coupling healthy_coupling{{{0.225, 0.075}, {0.075, 0.225}}};
  Coupling perturbation{{{-1.0, 1.0}, {1.0, -1.0}}};
  // Peak phase drift (radians) between motion and audio envelopes at
  // severity 1.
  double phase_jitter = 2.0;
};

struct SubjectRecord {
  std::string subject_id;
  Label label = Label::Healthy;
  std::string phrase;
  MotionFieldSequence motion;
  dsp::Waveform audio;
  GestureLatent latent;
  double severity = 0.0;
};

// Envelopes s_j(u) = a_j sin(2π f_j u + φ + drift(u)) at normalized utterance
// time u in [0, 1).
std::array<double, kBlobs> gesture_envelopes(const GestureLatent& g, double u, double drift = 0.0);

MotionFieldSequence render_motion(const GestureLatent& g, const SynthConfig& cfg, std::uint64_t noise_seed);

// Phase drift applied to the audio envelopes: amplitude * sin(2π u + offset).
struct PhaseDrift {
  double amplitude = 0.0;
  double offset = 0.0;
  double at(double u) const;
};

dsp::Waveform render_audio(const GestureLatent& g, const Coupling& coupling, const SynthConfig& cfg,
                           std::uint64_t noise_seed, const PhaseDrift& drift = {});

std::string subject_id_for(Label label, std::size_t index);

// Deterministic in (cfg.seed, subject_id); independent of generation order.
SubjectRecord sample_subject(std::uint64_t seed, Label label, const SynthConfig& cfg,
                             const std::string& subject_id);

struct ManifestEntry {
  std::string subject_id;
  Label label = Label::Healthy;
  std::filesystem::path motion_path;
  std::filesystem::path audio_path;
  std::string phrase;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  // Directory relative paths resolve against.
  std::filesystem::path root;

  std::size_t count(Label label) const;
};

Manifest make_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir);

// JSON array of {subject_id, label, motion, audio, phrase}; paths stored
// relative to the manifest file's directory.
void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

// "MFLD" container: u16 version, u32 T, X, Y, Z, f32 payload [t][x][y][z][c].
inline constexpr std::uint16_t kMotionVersion = 1;
std::string encode_motion(const MotionFieldSequence& m);
MotionFieldSequence decode_motion(std::string_view bytes);
void write_motion(const std::filesystem::path& path, const MotionFieldSequence& m);
MotionFieldSequence read_motion(const std::filesystem::path& path);

}  // namespace smad::synth
