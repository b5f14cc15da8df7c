#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "smad/common/matrix.hpp"
#include "smad/dsp/stft.hpp"

namespace smad::dsp {

struct MelConfig {
  int sample_rate = 10000;
  std::size_t n_fft = 1024;
  std::size_t hop = 328;
  std::size_t n_mels = 64;
  // Expected frame count; 21,000-sample crops at hop 328 give 64.
  std::size_t n_time = 64;
  double fmin = 40.0;
  double fmax = 1000.0;
  double log_floor = 1e-10;

  bool operator==(const MelConfig&) const = default;
};

// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct MelFilterbank {
  Matrix<double> weights;             // n_mels x (n_fft/2 + 1)
  std::vector<double> band_edges_hz;  // n_mels + 2 points, equally spaced in mel
};

MelFilterbank mel_filterbank(std::size_t n_mels, std::size_t n_fft, int sample_rate, double fmin,
                             double fmax);

// Min and max of the log-energies that were mapped onto [0, 1].
struct Normalization {
  float min = 0.0f;
  float max = 0.0f;
  bool operator==(const Normalization&) const = default;
};

struct MelSpectrogram {
  Matrix<float> values;  // n_mels x n_time
  std::optional<Normalization> norm;
  MelConfig config;

  std::size_t n_mels() const noexcept { return values.rows(); }
  std::size_t n_time() const noexcept { return values.cols(); }

  // Log-energies before min-max scaling; requires a normalization record.
  Matrix<double> denormalized() const;
};

// Filterbank applied to the power spectrum: mel power (pre-log).
Matrix<double> mel_power(const Waveform& w, const MelConfig& cfg);

// ln(floor + mel power).
Matrix<double> log_mel(const Waveform& w, const MelConfig& cfg);

// Min-max scaling of a log-mel matrix to [0, 1]. The recorded min/max are
// rounded to float first so that the record reproduces the scaling exactly.
MelSpectrogram normalize_log_mel(const Matrix<double>& log_energies, const MelConfig& cfg);

MelSpectrogram melspectrogram(const Waveform& w, const MelConfig& cfg);

struct GriffinLimResult {
  Waveform waveform;
  // Spectrogram-consistency residual before each projection step; entry i is
  // measured on the estimate after i iterations.
  std::vector<double> residuals;
};

// Phase recovery for a one-sided magnitude spectrogram laid out as stft()
// would produce for a signal of `signal_length` samples. The initial phase is
// zero, or uniform random from `seed` when random_init is set.
GriffinLimResult griffin_lim(const Matrix<double>& magnitude, std::size_t signal_length,
                             std::size_t n_fft, std::size_t hop, int iterations, std::uint64_t seed,
                             bool random_init = false, int sample_rate = 10000);

struct InvertOptions {
  int iterations = 60;
  std::uint64_t seed = 0;
  bool random_init = false;
};

// Mel -> linear magnitude via the clipped pseudo-inverse of the filterbank,
// then Griffin-Lim.
GriffinLimResult invert_mel_detailed(const MelSpectrogram& m, const InvertOptions& options);
Waveform invert_mel(const MelSpectrogram& m, int iterations, std::uint64_t seed);

}  // namespace smad::dsp
