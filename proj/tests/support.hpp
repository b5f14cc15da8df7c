#pragma once

// Test-only helpers: independent reference formulas and signal fixtures.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "smad/dsp/stft.hpp"

namespace smad::testing {

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

// Two-pass Pearson correlation over flattened entries.
template <typename RangeA, typename RangeB>
double pearson_two_pass(const RangeA& a, const RangeB& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return sab / std::sqrt(saa * sbb);
}

// Sum of harmonics of f0 with 1/k amplitudes.
inline dsp::Waveform harmonic_tone(std::size_t n, int sample_rate, double f0, int harmonics, double gain = 0.3) {
  dsp::Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    double acc = 0.0;
    for (int k = 1; k <= harmonics; ++k) acc += std::sin(2.0 * std::numbers::pi * f0 * k * t + 0.3 * k) / k;
    w.samples[i] = gain * acc;
  }
  return w;
}

}  // namespace smad::testing
