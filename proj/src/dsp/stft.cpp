#include "smad/dsp/stft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "smad/common/error.hpp"
#include "smad/dsp/fft.hpp"

namespace smad::dsp {

namespace {

void check_frame_config(std::size_t n_fft, std::size_t hop) {
  if (!is_power_of_two(n_fft)) {
    throw Error("dsp", ErrorCode::BadConfig, "n_fft " + std::to_string(n_fft) + " is not a power of two");
  }
  if (hop == 0 || hop > n_fft) {
    throw Error("dsp", ErrorCode::BadConfig,
                "hop " + std::to_string(hop) + " must lie in [1, n_fft=" + std::to_string(n_fft) + "]");
  }
}

// Every sample position modulo hop must receive some window energy, or the
// overlap-add cannot be inverted.
void check_nola(const std::vector<double>& window, std::size_t hop) {
  double lo = INFINITY;
  double hi = 0.0;
  for (std::size_t r = 0; r < hop; ++r) {
    double acc = 0.0;
    for (std::size_t i = r; i < window.size(); i += hop) acc += window[i] * window[i];
    lo = std::min(lo, acc);
    hi = std::max(hi, acc);
  }
  if (!(lo > 1e-8 * hi)) {
    throw Error("dsp", ErrorCode::BadConfig,
                "window/hop pair does not overlap-add (hop " + std::to_string(hop) + ")");
  }
}

}  // namespace

void Waveform::validate() const {
  if (samples.empty()) throw Error("dsp", ErrorCode::BadConfig, "waveform has no samples");
  if (sample_rate <= 0) throw Error("dsp", ErrorCode::BadConfig, "sample rate must be positive");
  for (double x : samples) {
    if (!std::isfinite(x)) throw Error("dsp", ErrorCode::BadConfig, "waveform has non-finite samples");
  }
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

std::size_t frame_count(std::size_t signal_length, std::size_t hop) { return signal_length / hop; }

std::vector<double> reflect_pad(std::span<const double> x, std::size_t pad) {
  const std::size_t n = x.size();
  if (n <= pad) {
    throw Error("dsp", ErrorCode::InputTooShort,
                "reflect padding of " + std::to_string(pad) + " needs more than " + std::to_string(n) + " samples");
  }
  std::vector<double> out(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) out[i] = x[pad - i];
  std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(pad));
  for (std::size_t i = 0; i < pad; ++i) out[pad + n + i] = x[n - 2 - i];
  return out;
}

Matrix<std::complex<double>> analyze_frames(std::span<const double> padded, std::size_t n_fft,
                                            std::size_t hop, std::size_t n_frames) {
  check_frame_config(n_fft, hop);
  if (n_frames == 0 || (n_frames - 1) * hop + n_fft > padded.size()) {
    throw Error("dsp", ErrorCode::InputTooShort, "signal too short for requested frames");
  }
  const auto window = hann_window(n_fft);
  Matrix<std::complex<double>> bins(n_fft / 2 + 1, n_frames);
  std::vector<double> frame(n_fft);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const double* src = padded.data() + t * hop;
    for (std::size_t i = 0; i < n_fft; ++i) frame[i] = src[i] * window[i];
    const auto spectrum = rfft(frame);
    for (std::size_t k = 0; k < spectrum.size(); ++k) bins(k, t) = spectrum[k];
  }
  return bins;
}

std::vector<double> synthesize_frames(const Matrix<std::complex<double>>& bins, std::size_t n_fft,
                                      std::size_t hop) {
  check_frame_config(n_fft, hop);
  if (bins.rows() != n_fft / 2 + 1 || bins.cols() == 0) {
    throw Error("dsp", ErrorCode::ShapeError, "spectrogram shape does not match n_fft");
  }
  const auto window = hann_window(n_fft);
  check_nola(window, hop);
  const std::size_t n_frames = bins.cols();
  const std::size_t length = (n_frames - 1) * hop + n_fft;
  std::vector<double> out(length, 0.0);
  std::vector<double> norm(length, 0.0);
  std::vector<std::complex<double>> column(bins.rows());
  for (std::size_t t = 0; t < n_frames; ++t) {
    for (std::size_t k = 0; k < column.size(); ++k) column[k] = bins(k, t);
    const auto frame = irfft(column, n_fft);
    for (std::size_t i = 0; i < n_fft; ++i) {
      out[t * hop + i] += frame[i] * window[i];
      norm[t * hop + i] += window[i] * window[i];
    }
  }
  for (std::size_t i = 0; i < length; ++i) out[i] = norm[i] > 1e-12 ? out[i] / norm[i] : 0.0;
  return out;
}

ComplexSpectrogram stft(const Waveform& w, std::size_t n_fft, std::size_t hop) {
  check_frame_config(n_fft, hop);
  w.validate();
  if (w.size() < n_fft) {
    throw Error("dsp", ErrorCode::InputTooShort,
                "signal of " + std::to_string(w.size()) + " samples is shorter than n_fft " + std::to_string(n_fft));
  }
  const auto padded = reflect_pad(w.samples, n_fft / 2);
  ComplexSpectrogram s;
  s.bins = analyze_frames(padded, n_fft, hop, frame_count(w.size(), hop));
  s.n_fft = n_fft;
  s.hop = hop;
  s.signal_length = w.size();
  return s;
}

Waveform istft(const ComplexSpectrogram& s, int sample_rate) {
  const auto padded = synthesize_frames(s.bins, s.n_fft, s.hop);
  const std::size_t pad = s.n_fft / 2;
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(s.signal_length, 0.0);
  const std::size_t available = padded.size() > pad ? padded.size() - pad : 0;
  const std::size_t n = std::min(s.signal_length, available);
  std::copy_n(padded.begin() + static_cast<std::ptrdiff_t>(pad), n, w.samples.begin());
  return w;
}

std::vector<std::size_t> crop_offsets(std::size_t length, std::size_t crop_len, std::size_t count) {
  if (count == 0) throw Error("dsp", ErrorCode::BadConfig, "crop count must be >= 1");
  if (crop_len == 0) throw Error("dsp", ErrorCode::BadConfig, "crop length must be >= 1");
  if (length < crop_len) {
    throw Error("dsp", ErrorCode::InputTooShort,
                "waveform of " + std::to_string(length) + " samples is shorter than crop " + std::to_string(crop_len));
  }
  const std::size_t slack = length - crop_len;
  std::vector<std::size_t> offsets(count, 0);
  if (count == 1) return offsets;
  for (std::size_t i = 0; i < count; ++i) {
    offsets[i] = static_cast<std::size_t>(
        std::llround(static_cast<double>(i) * static_cast<double>(slack) / static_cast<double>(count - 1)));
  }
  return offsets;
}

std::vector<Waveform> sliding_crops(const Waveform& w, std::size_t crop_len, std::size_t count) {
  const auto offsets = crop_offsets(w.size(), crop_len, count);
  std::vector<Waveform> crops;
  crops.reserve(count);
  for (std::size_t off : offsets) {
    Waveform c;
    c.sample_rate = w.sample_rate;
    c.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(off),
                     w.samples.begin() + static_cast<std::ptrdiff_t>(off + crop_len));
    crops.push_back(std::move(c));
  }
  return crops;
}

}  // namespace smad::dsp
