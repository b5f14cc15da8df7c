#include "smad/dsp/fft.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "smad/common/error.hpp"

namespace smad::dsp {

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

void fft_inplace(std::span<std::complex<double>> data, bool inverse) {
  const std::size_t n = data.size();
  if (!is_power_of_two(n)) {
    throw Error("dsp", ErrorCode::BadConfig, "fft size " + std::to_string(n) + " is not a power of two");
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  // Twiddles e^{-2πik/n} computed directly per index and cached per size;
  // recurrence-generated twiddles drift.
  thread_local std::vector<std::complex<double>> table;
  if (table.size() != n / 2) {
    table.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      table[k] = {std::cos(angle), std::sin(angle)};
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const auto w = inverse ? std::conj(table[k * stride]) : table[k * stride];
        const auto u = data[start + k];
        const auto x = data[start + k + half];
        const std::complex<double> v{x.real() * w.real() - x.imag() * w.imag(),
                                     x.real() * w.imag() + x.imag() * w.real()};
        data[start + k] = u + v;
        data[start + k + half] = u - v;
      }
    }
  }
}

std::vector<std::complex<double>> rfft(std::span<const double> frame) {
  std::vector<std::complex<double>> buf(frame.begin(), frame.end());
  fft_inplace(buf, false);
  buf.resize(frame.size() / 2 + 1);
  return buf;
}

std::vector<double> irfft(std::span<const std::complex<double>> bins, std::size_t n) {
  if (bins.size() != n / 2 + 1) {
    throw Error("dsp", ErrorCode::BadConfig, "irfft: expected " + std::to_string(n / 2 + 1) + " bins");
  }
  std::vector<std::complex<double>> buf(n);
  for (std::size_t k = 0; k <= n / 2; ++k) buf[k] = bins[k];
  for (std::size_t k = n / 2 + 1; k < n; ++k) buf[k] = std::conj(bins[n - k]);
  // DC and Nyquist of a real signal are real.
  buf[0] = {bins[0].real(), 0.0};
  buf[n / 2] = {bins[n / 2].real(), 0.0};
  fft_inplace(buf, true);
  std::vector<double> out(n);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real() * scale;
  return out;
}

}  // namespace smad::dsp
