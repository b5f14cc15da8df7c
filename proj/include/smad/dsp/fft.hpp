#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace smad::dsp {

bool is_power_of_two(std::size_t n) noexcept;

// In-place iterative radix-2 transform; size must be a power of two.
// Forward uses e^{-2πi kn/N}; inverse is unscaled.
void fft_inplace(std::span<std::complex<double>> data, bool inverse);

// One-sided spectrum of a real frame: returns n/2+1 bins.
std::vector<std::complex<double>> rfft(std::span<const double> frame);

// Inverse of rfft for an n-point real signal (scaled by 1/n).
std::vector<double> irfft(std::span<const std::complex<double>> bins, std::size_t n);

}  // namespace smad::dsp
