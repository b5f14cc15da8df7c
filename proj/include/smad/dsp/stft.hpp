#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "smad/common/matrix.hpp"

namespace smad::dsp {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 10000;

  std::size_t size() const noexcept { return samples.size(); }
  // Throws BadConfig for an empty buffer, non-finite samples or a
  // non-positive rate.
  void validate() const;
};

enum class Window { Hann };

// One-sided STFT: bins(k, t) for k in [0, n_fft/2], t in [0, n_frames).
struct ComplexSpectrogram {
  Matrix<std::complex<double>> bins;
  std::size_t n_fft = 0;
  std::size_t hop = 0;
  Window window = Window::Hann;
  // Length of the analysed signal; istft reproduces this many samples.
  std::size_t signal_length = 0;

  std::size_t n_bins() const noexcept { return bins.rows(); }
  std::size_t n_frames() const noexcept { return bins.cols(); }
};

// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

// Frames centred at t*hop for t in [0, len/hop), reflect-padded by n_fft/2.
std::size_t frame_count(std::size_t signal_length, std::size_t hop);

ComplexSpectrogram stft(const Waveform& w, std::size_t n_fft, std::size_t hop);

// Least-squares weighted overlap-add (window-square normalised).
Waveform istft(const ComplexSpectrogram& s, int sample_rate = 10000);

// Building blocks on the padded domain, exposed for Griffin-Lim: analysis of
// an already padded signal (frame t starts at t*hop) and its least-squares
// inverse. Synthesis leaves samples no window covers at zero.
Matrix<std::complex<double>> analyze_frames(std::span<const double> padded, std::size_t n_fft,
                                            std::size_t hop, std::size_t n_frames);
std::vector<double> synthesize_frames(const Matrix<std::complex<double>>& bins,
                                      std::size_t n_fft, std::size_t hop);

// Reflect padding by `pad` samples on each side (numpy "reflect" mode).
std::vector<double> reflect_pad(std::span<const double> x, std::size_t pad);

// Evenly spaced fixed-length crops: offset_i = round(i * slack / (count - 1)).
std::vector<std::size_t> crop_offsets(std::size_t length, std::size_t crop_len, std::size_t count);
std::vector<Waveform> sliding_crops(const Waveform& w, std::size_t crop_len, std::size_t count);

}  // namespace smad::dsp
