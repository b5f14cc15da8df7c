#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "smad/common/error.hpp"
#include "smad/dsp/fft.hpp"
#include "smad/dsp/io.hpp"
#include "smad/dsp/mel.hpp"
#include "smad/dsp/stft.hpp"
#include "support.hpp"

using namespace smad;
using namespace smad::dsp;

namespace {

Waveform make_wave(std::vector<double> s, int sr = 10000) { return Waveform{std::move(s), sr}; }

// O(n^2) DFT of one Hann-windowed, reflect-padded frame.
std::vector<std::complex<double>> naive_frame_dft(const std::vector<double>& x, std::size_t n_fft,
                                                  std::size_t hop, std::size_t t) {
  const auto padded = reflect_pad(x, n_fft / 2);
  std::vector<std::complex<double>> out(n_fft / 2 + 1);
  for (std::size_t k = 0; k <= n_fft / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < n_fft; ++n) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / n_fft);
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k * n) / n_fft;
      acc += padded[t * hop + n] * w * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

// Overlap-add oracle written straight from the least-squares ISTFT formula:
// x[n] = sum_t w[n - t*hop] * frame_t[n - t*hop] / sum_t w^2[n - t*hop].
std::vector<double> naive_istft(const ComplexSpectrogram& s) {
  const std::size_t n_fft = s.n_fft;
  const std::size_t pad = n_fft / 2;
  const std::size_t padded_len = (s.n_frames() - 1) * s.hop + n_fft;
  std::vector<double> num(padded_len, 0.0), den(padded_len, 0.0);
  for (std::size_t t = 0; t < s.n_frames(); ++t) {
    for (std::size_t n = 0; n < n_fft; ++n) {
      std::complex<double> acc = 0.0;
      for (std::size_t k = 0; k < n_fft; ++k) {
        const auto bin = k <= n_fft / 2 ? s.bins(k, t) : std::conj(s.bins(n_fft - k, t));
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(k * n) / n_fft;
        acc += bin * std::complex<double>(std::cos(angle), std::sin(angle));
      }
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / n_fft);
      num[t * s.hop + n] += w * acc.real() / n_fft;
      den[t * s.hop + n] += w * w;
    }
  }
  std::vector<double> out(s.signal_length, 0.0);
  for (std::size_t i = 0; i < out.size() && i + pad < padded_len; ++i) {
    out[i] = den[i + pad] > 1e-12 ? num[i + pad] / den[i + pad] : 0.0;
  }
  return out;
}

double max_interior_error(const std::vector<double>& a, const std::vector<double>& b, std::size_t margin) {
  double err = 0.0;
  for (std::size_t i = margin; i + margin < a.size(); ++i) err = std::max(err, std::abs(a[i] - b[i]));
  return err;
}

}  // namespace

TEST_CASE("fft matches direct DFT") {
  const auto x = testing::random_vector(64, 5);
  const auto fast = rfft(x);
  for (std::size_t k = 0; k < fast.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) acc += x[n] * std::polar(1.0, -2.0 * std::numbers::pi * k * n / 64.0);
    CHECK(std::abs(fast[k] - acc) < 1e-12);
  }
  const auto back = irfft(fast, 64);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-13));
}

TEST_CASE("stft of silence is exactly zero") {
  const auto s = stft(make_wave(std::vector<double>(4096, 0.0)), 1024, 256);
  for (const auto& z : s.bins.flat()) CHECK(z == std::complex<double>(0.0, 0.0));
}

TEST_CASE("stft bins equal the naive DFT oracle and peak at the tone bin") {
  const std::size_t n_fft = 256, hop = 64;
  const std::size_t k0 = 19;
  std::vector<double> x(2048);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2.0 * std::numbers::pi * k0 * i / n_fft);
  const auto s = stft(make_wave(x), n_fft, hop);
  REQUIRE(s.n_frames() == 2048 / hop);
  for (std::size_t t : {0ul, 5ul, s.n_frames() - 1}) {
    const auto oracle = naive_frame_dft(x, n_fft, hop, t);
    for (std::size_t k = 0; k < oracle.size(); ++k) CHECK(std::abs(oracle[k] - s.bins(k, t)) < 1e-9);
  }
  // Edge frames see reflected samples; the argmax check covers frames whose
  // window lies inside the signal.
  for (std::size_t t = n_fft / (2 * hop); t + n_fft / (2 * hop) < s.n_frames(); ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < s.n_bins(); ++k) {
      if (std::abs(s.bins(k, t)) > std::abs(s.bins(best, t))) best = k;
    }
    CHECK(best == k0);
  }
}

TEST_CASE("stft/istft round trip reproduces interior samples") {
  const std::size_t n_fft = 512;
  const auto x = testing::random_vector(8192, 42);
  SUBCASE("COLA hop n_fft/4") {
    const auto y = istft(stft(make_wave(x), n_fft, n_fft / 4));
    CHECK(max_interior_error(x, y.samples, n_fft) <= 1e-10);
  }
  SUBCASE("default hop 328 with n_fft 1024") {
    const auto y = istft(stft(make_wave(x), 1024, 328));
    CHECK(max_interior_error(x, y.samples, 1024) <= 1e-10);
  }
}

TEST_CASE("istft of an all-zero spectrogram is silent") {
  ComplexSpectrogram s;
  s.n_fft = 256;
  s.hop = 64;
  s.signal_length = 1024;
  s.bins = Matrix<std::complex<double>>(129, 16);
  const auto y = istft(s);
  CHECK(std::all_of(y.samples.begin(), y.samples.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("istft on a chirp agrees with the naive overlap-add oracle") {
  std::vector<double> x(1200);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = static_cast<double>(i) / 10000.0;
    x[i] = std::sin(2.0 * std::numbers::pi * (100.0 * t + 8000.0 * t * t));
  }
  const auto s = stft(make_wave(x), 128, 32);
  const auto fast = istft(s);
  const auto slow = naive_istft(s);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(fast.samples[i] - slow[i]) < 1e-10);
}

TEST_CASE("stft and istft reject bad configurations") {
  const auto x = make_wave(testing::random_vector(2000, 1));
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::RoundFailure;
  };
  CHECK(code_of([&] { stft(make_wave(std::vector<double>(100, 0.1)), 256, 64); }) == ErrorCode::InputTooShort);
  CHECK(code_of([&] { stft(x, 1000, 250); }) == ErrorCode::BadConfig);
  auto s = stft(x, 256, 64);
  s.hop = 256;  // periodic Hann has w[0] = 0: no overlap at frame edges
  CHECK(code_of([&] { istft(s); }) == ErrorCode::BadConfig);
}

TEST_CASE("mel scale reference points") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)).epsilon(1e-15));
  CHECK(hz_to_mel(700.0) == doctest::Approx(781.17).epsilon(1e-5));
  CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5).epsilon(1e-13));
}

TEST_CASE("filterbank invariants on the default emphasis band") {
  const auto fb = mel_filterbank(64, 1024, 10000, 40.0, 1000.0);
  REQUIRE(fb.weights.rows() == 64);
  REQUIRE(fb.weights.cols() == 513);
  for (std::size_t m = 0; m < 64; ++m) {
    const auto row = fb.weights.row(m);
    CHECK(*std::max_element(row.begin(), row.end()) == 1.0);
    CHECK(std::all_of(row.begin(), row.end(), [](double v) { return v >= 0.0; }));
    // Unimodal: non-decreasing up to the argmax, non-increasing after.
    const auto peak = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    for (std::size_t k = 1; k <= peak; ++k) CHECK(row[k] >= row[k - 1]);
    for (std::size_t k = peak + 1; k < row.size(); ++k) CHECK(row[k] <= row[k - 1]);
  }
  const double bin_hz = 10000.0 / 1024.0;
  for (std::size_t k = 0; k < 513; ++k) {
    const double f = k * bin_hz;
    if (f <= 40.0 || f >= 1000.0) continue;
    double total = 0.0;
    for (std::size_t m = 0; m < 64; ++m) total += fb.weights(m, k);
    CHECK(total > 0.0);
  }
  CHECK(fb.band_edges_hz.front() == 40.0);
  CHECK(fb.band_edges_hz.back() == 1000.0);
}

TEST_CASE("filterbank rejects fmax above Nyquist") {
  CHECK_THROWS_AS(mel_filterbank(64, 1024, 10000, 40.0, 6000.0), Error);
  CHECK_THROWS_AS(mel_filterbank(1, 1024, 10000, 40.0, 1000.0), Error);
}

TEST_CASE("21,000-sample crop gives a 64x64 normalized mel spectrogram") {
  const auto tone = testing::harmonic_tone(21000, 10000, 100.0, 12);
  const auto m = melspectrogram(tone, MelConfig{});
  CHECK(m.n_mels() == 64);
  CHECK(m.n_time() == 64);
  REQUIRE(m.norm.has_value());
  CHECK(std::all_of(m.values.flat().begin(), m.values.flat().end(), [](float v) { return v >= 0.0f && v <= 1.0f; }));
  const auto again = melspectrogram(tone, MelConfig{});
  CHECK(again.values == m.values);
  CHECK(again.norm == m.norm);
}

TEST_CASE("zero signal has degenerate normalization") {
  try {
    melspectrogram(make_wave(std::vector<double>(21000, 0.0)), MelConfig{});
    FAIL("expected DegenerateNormalization");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateNormalization);
  }
}

TEST_CASE("adding louder noise raises total mel energy") {
  const auto tone = testing::harmonic_tone(21000, 10000, 100.0, 8);
  const auto noise = testing::random_vector(21000, 9);
  double previous = -1.0;
  for (double level : {0.0, 0.1, 0.3, 1.0}) {
    auto w = tone;
    for (std::size_t i = 0; i < w.size(); ++i) w.samples[i] += level * noise[i];
    const auto power = mel_power(w, MelConfig{});
    double total = 0.0;
    for (double v : power.flat()) total += v;
    CHECK(total > previous);
    previous = total;
  }
}

TEST_CASE("mel inversion round trip on a harmonic tone") {
  const MelConfig cfg;
  const auto tone = testing::harmonic_tone(21000, 10000, 100.0, 10);
  const auto original = melspectrogram(tone, cfg);
  const auto detail = invert_mel_detailed(original, InvertOptions{60, 7, false});
  REQUIRE(detail.waveform.size() == 64 * cfg.hop);
  const auto again = melspectrogram(detail.waveform, cfg);
  const double r = testing::pearson_two_pass(original.values.flat(), again.values.flat());
  MESSAGE("mel round-trip Corr2D = " << r);
  CHECK(r >= 0.95);
  for (std::size_t i = 1; i < detail.residuals.size(); ++i) {
    CHECK(detail.residuals[i] <= detail.residuals[i - 1] + 1e-9 * std::max(1.0, detail.residuals[0]));
  }
}

TEST_CASE("griffin-lim residual is non-increasing on random magnitudes") {
  const auto mags = testing::random_vector(129 * 40, 3, 0.0, 1.0);
  Matrix<double> magnitude(129, 40);
  std::copy(mags.begin(), mags.end(), magnitude.flat().begin());
  for (bool random_init : {false, true}) {
    const auto res = griffin_lim(magnitude, 40 * 64, 256, 64, 30, 11, random_init);
    REQUIRE(res.residuals.size() == 31);
    for (std::size_t i = 1; i < res.residuals.size(); ++i) {
      CHECK(res.residuals[i] <= res.residuals[i - 1] + 1e-9 * std::max(1.0, res.residuals[0]));
    }
  }
}

TEST_CASE("invert_mel with zero iterations is deterministic; missing record rejected") {
  const auto m = melspectrogram(testing::harmonic_tone(21000, 10000, 100.0, 6), MelConfig{});
  const auto a = invert_mel(m, 0, 3);
  const auto b = invert_mel(m, 0, 3);
  CHECK(a.samples == b.samples);
  auto bare = m;
  bare.norm.reset();
  try {
    invert_mel(bare, 10, 0);
    FAIL("expected MissingMetadata");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingMetadata);
  }
}

TEST_CASE("sliding crops are evenly spaced and boundary anchored") {
  CHECK(crop_offsets(21832, 21000, 3) == std::vector<std::size_t>{0, 416, 832});
  const auto offsets = crop_offsets(24175, 21000, 100);
  REQUIRE(offsets.size() == 100);
  CHECK(offsets.front() == 0);
  CHECK(offsets.back() == 3175);
  CHECK(std::is_sorted(offsets.begin(), offsets.end()));

  const auto w = make_wave(testing::random_vector(21000, 4));
  const auto crops = sliding_crops(w, 21000, 5);
  REQUIRE(crops.size() == 5);
  for (const auto& c : crops) CHECK(c.samples == w.samples);

  const auto longer = make_wave(testing::random_vector(24175, 8));
  const auto last = sliding_crops(longer, 21000, 100).back();
  CHECK(last.size() == 21000);
  CHECK(last.samples.back() == longer.samples.back());

  CHECK_THROWS_AS(sliding_crops(make_wave(std::vector<double>(100, 0.0)), 200, 2), Error);
}

TEST_CASE("wav and spectrogram files round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "smad_test_dsp_io";
  std::filesystem::create_directories(dir);

  Waveform w{testing::random_vector(1000, 5, -0.9, 0.9), 10000};
  write_wav(dir / "a.wav", w);
  const auto back = read_wav(dir / "a.wav");
  CHECK(back.sample_rate == 10000);
  REQUIRE(back.size() == w.size());
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(back.samples[i] - w.samples[i]) <= 0.5 / 32767.0 + 1e-12);
  // Quantised samples are a fixed point of encode/decode.
  CHECK(encode_wav(back) == encode_wav(read_wav(dir / "a.wav")));

  const auto m = melspectrogram(testing::harmonic_tone(21000, 10000, 100.0, 5), MelConfig{});
  write_spectrogram(dir / "m.mspc", m);
  const auto m2 = read_spectrogram(dir / "m.mspc");
  CHECK(m2.values == m.values);
  CHECK(m2.norm == m.norm);

  auto bytes = encode_spectrogram(m);
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_spectrogram(bytes), Error);
  CHECK_THROWS_AS(decode_spectrogram(encode_spectrogram(m).substr(0, 100)), Error);
  std::filesystem::remove_all(dir);
}
