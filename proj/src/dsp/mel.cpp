#include "smad/dsp/mel.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "smad/common/error.hpp"
#include "smad/common/rng.hpp"
#include "smad/dsp/fft.hpp"

namespace smad::dsp {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank mel_filterbank(std::size_t n_mels, std::size_t n_fft, int sample_rate, double fmin,
                             double fmax) {
  const double nyquist = 0.5 * sample_rate;
  if (n_mels < 2) throw Error("dsp", ErrorCode::BadConfig, "n_mels must be >= 2");
  if (!is_power_of_two(n_fft)) throw Error("dsp", ErrorCode::BadConfig, "n_fft must be a power of two");
  if (sample_rate <= 0) throw Error("dsp", ErrorCode::BadConfig, "sample rate must be positive");
  if (!(fmin >= 0.0 && fmin < fmax)) {
    throw Error("dsp", ErrorCode::BadConfig, "need 0 <= fmin < fmax");
  }
  if (fmax > nyquist) {
    throw Error("dsp", ErrorCode::BadConfig,
                "fmax " + std::to_string(fmax) + " Hz exceeds Nyquist " + std::to_string(nyquist) + " Hz");
  }

  const std::size_t n_bins = n_fft / 2 + 1;
  MelFilterbank fb;
  fb.band_edges_hz.resize(n_mels + 2);
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  for (std::size_t i = 0; i < n_mels + 2; ++i) {
    fb.band_edges_hz[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                                 static_cast<double>(n_mels + 1));
  }
  fb.band_edges_hz.front() = fmin;
  fb.band_edges_hz.back() = fmax;

  fb.weights = Matrix<double>(n_mels, n_bins, 0.0);
  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(n_fft);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = fb.band_edges_hz[m];
    const double peak = fb.band_edges_hz[m + 1];
    const double hi = fb.band_edges_hz[m + 2];
    double row_max = 0.0;
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      double v = 0.0;
      if (f > lo && f <= peak) {
        v = (f - lo) / (peak - lo);
      } else if (f > peak && f < hi) {
        v = (hi - f) / (hi - peak);
      }
      fb.weights(m, k) = v;
      row_max = std::max(row_max, v);
    }
    if (row_max <= 0.0) {
      throw Error("dsp", ErrorCode::BadConfig,
                  "mel band " + std::to_string(m) + " contains no FFT bin; increase n_fft or fmax-fmin");
    }
    for (double& v : fb.weights.row(m)) v /= row_max;
  }
  return fb;
}

Matrix<double> MelSpectrogram::denormalized() const {
  if (!norm) throw Error("dsp", ErrorCode::MissingMetadata, "mel spectrogram has no normalization record");
  const double lo = norm->min;
  const double span = static_cast<double>(norm->max) - lo;
  Matrix<double> out(values.rows(), values.cols());
  for (std::size_t i = 0; i < values.size(); ++i) out.flat()[i] = lo + span * values.flat()[i];
  return out;
}

Matrix<double> mel_power(const Waveform& w, const MelConfig& cfg) {
  const auto fb = mel_filterbank(cfg.n_mels, cfg.n_fft, cfg.sample_rate, cfg.fmin, cfg.fmax);
  if (w.sample_rate != cfg.sample_rate) {
    throw Error("dsp", ErrorCode::BadConfig,
                "waveform rate " + std::to_string(w.sample_rate) + " != config rate " +
                    std::to_string(cfg.sample_rate));
  }
  const auto spec = stft(w, cfg.n_fft, cfg.hop);
  const std::size_t n_frames = spec.n_frames();
  const std::size_t n_bins = spec.n_bins();
  Matrix<double> power(n_bins, n_frames);
  for (std::size_t k = 0; k < n_bins; ++k) {
    for (std::size_t t = 0; t < n_frames; ++t) power(k, t) = std::norm(spec.bins(k, t));
  }
  Matrix<double> out(cfg.n_mels, n_frames, 0.0);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double wk = fb.weights(m, k);
      if (wk == 0.0) continue;
      for (std::size_t t = 0; t < n_frames; ++t) out(m, t) += wk * power(k, t);
    }
  }
  return out;
}

Matrix<double> log_mel(const Waveform& w, const MelConfig& cfg) {
  auto out = mel_power(w, cfg);
  for (double& v : out.flat()) v = std::log(cfg.log_floor + v);
  return out;
}

MelSpectrogram normalize_log_mel(const Matrix<double>& log_energies, const MelConfig& cfg) {
  const auto [lo_it, hi_it] = std::minmax_element(log_energies.flat().begin(), log_energies.flat().end());
  const float lo = static_cast<float>(*lo_it);
  const float hi = static_cast<float>(*hi_it);
  if (!(hi > lo)) {
    throw Error("dsp", ErrorCode::DegenerateNormalization, "all log-mel energies are equal");
  }
  MelSpectrogram m;
  m.config = cfg;
  m.norm = Normalization{lo, hi};
  m.values = Matrix<float>(log_energies.rows(), log_energies.cols());
  const double span = static_cast<double>(hi) - static_cast<double>(lo);
  for (std::size_t i = 0; i < log_energies.size(); ++i) {
    const double v = (log_energies.flat()[i] - static_cast<double>(lo)) / span;
    m.values.flat()[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return m;
}

MelSpectrogram melspectrogram(const Waveform& w, const MelConfig& cfg) {
  const auto energies = log_mel(w, cfg);
  if (energies.cols() != cfg.n_time) {
    throw Error("dsp", ErrorCode::BadConfig,
                std::to_string(w.size()) + " samples at hop " + std::to_string(cfg.hop) + " give " +
                    std::to_string(energies.cols()) + " frames, config expects " + std::to_string(cfg.n_time));
  }
  return normalize_log_mel(energies, cfg);
}

namespace {

constexpr int kNnlsIterations = 100;

// Full-spectrum energy weight of a one-sided bin: interior bins stand for a
// conjugate pair.
double bin_weight(std::size_t k, std::size_t n_bins) {
  return (k == 0 || k + 1 == n_bins) ? 1.0 : 2.0;
}

double consistency_residual(const Matrix<std::complex<double>>& estimate, const Matrix<double>& target) {
  double acc = 0.0;
  for (std::size_t k = 0; k < target.rows(); ++k) {
    const double wk = bin_weight(k, target.rows());
    for (std::size_t t = 0; t < target.cols(); ++t) {
      const double d = std::abs(estimate(k, t)) - target(k, t);
      acc += wk * d * d;
    }
  }
  return std::sqrt(acc);
}

}  // namespace

GriffinLimResult griffin_lim(const Matrix<double>& magnitude, std::size_t signal_length,
                             std::size_t n_fft, std::size_t hop, int iterations, std::uint64_t seed,
                             bool random_init, int sample_rate) {
  if (iterations < 0) throw Error("dsp", ErrorCode::BadConfig, "iterations must be >= 0");
  if (magnitude.rows() != n_fft / 2 + 1 || magnitude.cols() == 0) {
    throw Error("dsp", ErrorCode::ShapeError, "magnitude shape does not match n_fft");
  }
  const std::size_t n_frames = magnitude.cols();

  Matrix<std::complex<double>> projected(magnitude.rows(), n_frames);
  if (random_init) {
    Rng rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < projected.size(); ++i) {
      projected.flat()[i] = std::polar(magnitude.flat()[i], phase(rng));
    }
  } else {
    for (std::size_t i = 0; i < projected.size(); ++i) projected.flat()[i] = magnitude.flat()[i];
  }

  GriffinLimResult result;
  auto padded = synthesize_frames(projected, n_fft, hop);
  for (int it = 0; it < iterations; ++it) {
    const auto estimate = analyze_frames(padded, n_fft, hop, n_frames);
    result.residuals.push_back(consistency_residual(estimate, magnitude));
    for (std::size_t i = 0; i < projected.size(); ++i) {
      const auto z = estimate.flat()[i];
      const double r = std::abs(z);
      projected.flat()[i] = r > 0.0 ? z * (magnitude.flat()[i] / r) : std::complex<double>(magnitude.flat()[i]);
    }
    padded = synthesize_frames(projected, n_fft, hop);
  }
  result.residuals.push_back(consistency_residual(analyze_frames(padded, n_fft, hop, n_frames), magnitude));

  const std::size_t pad = n_fft / 2;
  result.waveform.sample_rate = sample_rate;
  result.waveform.samples.assign(signal_length, 0.0);
  const std::size_t n = std::min(signal_length, padded.size() - pad);
  std::copy_n(padded.begin() + static_cast<std::ptrdiff_t>(pad), n, result.waveform.samples.begin());
  return result;
}

GriffinLimResult invert_mel_detailed(const MelSpectrogram& m, const InvertOptions& options) {
  if (!m.norm) throw Error("dsp", ErrorCode::MissingMetadata, "cannot invert a mel spectrogram without normalization record");
  if (options.iterations < 0) throw Error("dsp", ErrorCode::BadConfig, "iterations must be >= 0");
  const auto& cfg = m.config;
  const auto fb = mel_filterbank(cfg.n_mels, cfg.n_fft, cfg.sample_rate, cfg.fmin, cfg.fmax);
  if (m.n_mels() != cfg.n_mels) throw Error("dsp", ErrorCode::ShapeError, "mel rows do not match config");

  const auto log_energy = m.denormalized();
  Eigen::MatrixXd mel(static_cast<Eigen::Index>(m.n_mels()), static_cast<Eigen::Index>(m.n_time()));
  for (std::size_t r = 0; r < m.n_mels(); ++r) {
    for (std::size_t c = 0; c < m.n_time(); ++c) {
      mel(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          std::max(0.0, std::exp(log_energy(r, c)) - cfg.log_floor);
    }
  }
  Eigen::MatrixXd weights(static_cast<Eigen::Index>(fb.weights.rows()), static_cast<Eigen::Index>(fb.weights.cols()));
  for (std::size_t r = 0; r < fb.weights.rows(); ++r) {
    for (std::size_t c = 0; c < fb.weights.cols(); ++c) {
      weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = fb.weights(r, c);
    }
  }
  // Clipped pseudo-inverse as the starting point, then non-negative least
  // squares on relative mel error via multiplicative updates. Plain
  // clipping leaves quiet bands far off in the log domain.
  const Eigen::MatrixXd pinv = weights.completeOrthogonalDecomposition().pseudoInverse();
  Eigen::MatrixXd power = (pinv * mel).cwiseMax(0.0);
  const double floor = std::max(power.maxCoeff(), 1e-300) * 1e-9;
  power = power.array().max(floor).matrix();
  const Eigen::ArrayXXd inv_sq = 1.0 / (mel.array().square() + 1e-300);
  const Eigen::MatrixXd numerator = weights.transpose() * (mel.array() * inv_sq).matrix();
  for (int it = 0; it < kNnlsIterations; ++it) {
    const Eigen::MatrixXd fitted = weights * power;
    const Eigen::MatrixXd denominator = weights.transpose() * (fitted.array() * inv_sq).matrix();
    power = (power.array() * numerator.array() / (denominator.array() + 1e-300)).matrix();
  }

  Matrix<double> magnitude(static_cast<std::size_t>(power.rows()), static_cast<std::size_t>(power.cols()));
  for (std::size_t k = 0; k < magnitude.rows(); ++k) {
    for (std::size_t t = 0; t < magnitude.cols(); ++t) {
      magnitude(k, t) = std::sqrt(power(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)));
    }
  }
  return griffin_lim(magnitude, m.n_time() * cfg.hop, cfg.n_fft, cfg.hop, options.iterations, options.seed,
                     options.random_init, cfg.sample_rate);
}

Waveform invert_mel(const MelSpectrogram& m, int iterations, std::uint64_t seed) {
  return invert_mel_detailed(m, InvertOptions{iterations, seed, false}).waveform;
}

}  // namespace smad::dsp
