#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <set>

#include "doctest.h"
#include "smad/common/error.hpp"
#include "smad/dsp/io.hpp"
#include "smad/dsp/stft.hpp"
#include "smad/synth/synth.hpp"

using namespace smad;
using namespace smad::synth;

namespace {

constexpr double kPi = std::numbers::pi;

GestureLatent latent(double a1, double a2, double f1, double f2, double phase, std::size_t c1 = 0,
                     std::size_t c2 = 0) {
  GestureLatent g;
  g.amplitude = {a1, a2};
  g.frequency = {f1, f2};
  g.phase = phase;
  g.center_index = {c1, c2};
  return g;
}

// Field straight from the blob formula, evaluated voxel by voxel.
double formula(const GestureLatent& g, const SynthConfig& cfg, std::size_t t, std::size_t x, std::size_t y,
               std::size_t z, std::size_t c) {
  const auto& d = cfg.dims;
  const double sigma = cfg.blob_sigma * static_cast<double>(d.x + d.y + d.z) / 48.0;
  const double ext[3] = {double(d.x - 1), double(d.y - 1), double(d.z - 1)};
  const double v[3] = {double(x), double(y), double(z)};
  double out = 0.0;
  for (std::size_t j = 0; j < 2; ++j) {
    const auto& frac = blob_center_set()[j][g.center_index[j]];
    double r2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double diff = v[a] - frac[a] * ext[a];
      r2 += diff * diff;
    }
    const double s = g.amplitude[j] * std::sin(2.0 * kPi * g.frequency[j] * double(t) / double(d.frames) + g.phase);
    out += s * std::exp(-r2 / (2.0 * sigma * sigma)) * blob_directions()[j][c];
  }
  return out;
}

double magnitude(const MotionFieldSequence& m, std::size_t t, std::size_t x, std::size_t y, std::size_t z) {
  double s = 0.0;
  for (std::size_t c = 0; c < 3; ++c) s += m.at(t, x, y, z, c) * m.at(t, x, y, z, c);
  return std::sqrt(s);
}

// Average magnitude spectrum over STFT frames; returns the frequency of the
// strongest bin inside [lo, hi] Hz.
double peak_hz(const dsp::Waveform& w, double lo, double hi) {
  const std::size_t n_fft = 1024;
  const auto spec = dsp::stft(w, n_fft, 256);
  const double bin_hz = double(w.sample_rate) / double(n_fft);
  double best = -1.0, best_hz = 0.0;
  for (std::size_t k = 0; k < spec.n_bins(); ++k) {
    const double hz = double(k) * bin_hz;
    if (hz < lo || hz > hi) continue;
    double mag = 0.0;
    for (std::size_t t = 0; t < spec.n_frames(); ++t) mag += std::abs(spec.bins(k, t));
    if (mag > best) {
      best = mag;
      best_hz = hz;
    }
  }
  return best_hz;
}

void stats(const std::vector<double>& v, double& mean, double& std) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  std = std::sqrt(ss / double(v.size()));
}

}  // namespace

TEST_CASE("motion field follows the blob formula") {
  SynthConfig cfg;
  cfg.motion_noise = 0.0;
  for (const MotionDims dims : {MotionDims{8, 16, 16, 16}, MotionDims{5, 8, 12, 10}}) {
    cfg.dims = dims;
    const auto g = latent(0.7, 0.4, 1.3, 0.6, 0.9, 1, 0);
    const auto m = render_motion(g, cfg, 1);
    REQUIRE(m.data.size() == dims.frames * dims.voxels() * 3);
    double worst = 0.0;
    for (std::size_t t = 0; t < dims.frames; ++t)
      for (std::size_t x = 0; x < dims.x; ++x)
        for (std::size_t y = 0; y < dims.y; ++y)
          for (std::size_t z = 0; z < dims.z; ++z)
            for (std::size_t c = 0; c < 3; ++c)
              worst = std::max(worst, std::abs(m.at(t, x, y, z, c) - formula(g, cfg, t, x, y, z, c)));
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("zero amplitude gives pure noise at the configured level") {
  SynthConfig cfg;
  const auto m = render_motion(latent(0.0, 0.0, 1.0, 1.0, 0.3), cfg, 11);
  std::vector<double> v(m.data.begin(), m.data.end());
  double mean = 0.0, std = 0.0;
  stats(v, mean, std);
  CHECK(std::abs(mean) <= 0.1 * cfg.motion_noise);
  CHECK(std == doctest::Approx(cfg.motion_noise).epsilon(0.2));
}

TEST_CASE("displacement at a blob center reaches its amplitude when the sine peaks") {
  SynthConfig cfg;
  // f = 1 cycle over 8 frames: the sine peaks at t = 2 with zero phase.
  const double a = 0.8;
  const auto m = render_motion(latent(a, 0.0, 1.0, 1.0, 0.0), cfg, 5);
  const auto& c = blob_center_set()[0][0];
  const auto vox = [](double f) { return static_cast<std::size_t>(std::lround(f * 15.0)); };
  const double mag = magnitude(m, 2, vox(c[0]), vox(c[1]), vox(c[2]));
  // Off-grid centers cost at most exp(-3 * 0.25 / 18) of the peak.
  CHECK(mag <= a * 1.05);
  CHECK(mag >= a * 0.9);
}

TEST_CASE("zero coupling pins the formants regardless of the latent") {
  SynthConfig cfg;
  cfg.audio.noise_std = 0.0;
  const Coupling zero{};
  const auto a = render_audio(latent(0.9, 0.3, 1.7, 0.6, 0.2), zero, cfg, 1);
  const auto b = render_audio(latent(0.2, 1.0, 0.5, 2.0, 4.0), zero, cfg, 2);
  CHECK(a.size() == 24000);
  CHECK(a.sample_rate == 10000);
  CHECK(a.samples == b.samples);
  CHECK(peak_hz(a, 150, 600) == doctest::Approx(300.0).epsilon(0.1));
  CHECK(peak_hz(a, 700, 1300) == doctest::Approx(900.0).epsilon(0.1));
}

TEST_CASE("identity coupling with constant envelopes places the formant peaks") {
  SynthConfig cfg;
  cfg.audio.noise_std = 0.0;
  // Zero frequency and phase pi/2: envelopes are the amplitudes themselves.
  const auto g = latent(0.5, 0.25, 0.0, 0.0, kPi / 2);
  const Coupling eye{{{1.0, 0.0}, {0.0, 1.0}}};
  const auto w = render_audio(g, eye, cfg, 3);
  // F1 = 300 + 400 * 0.5, F2 = 900 + 800 * 0.25; harmonics sit every 100 Hz.
  CHECK(std::abs(peak_hz(w, 200, 800) - 500.0) <= 60.0);
  CHECK(std::abs(peak_hz(w, 850, 1600) - 1100.0) <= 60.0);
  double e = 0.0;
  for (double x : w.samples) e += x * x;
  CHECK(std::sqrt(e / double(w.size())) == doctest::Approx(cfg.audio.rms).epsilon(1e-9));
}

TEST_CASE("audio rejects unstable resonators and non-finite coupling") {
  SynthConfig cfg;
  cfg.audio.bandwidth_hz = {0.0, 60.0};
  try {
    render_audio(latent(0.5, 0.5, 1, 1, 0), cfg.healthy_coupling, cfg, 1);
    FAIL("expected BadConfig");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadConfig);
  }
  SynthConfig ok;
  Coupling nan = ok.healthy_coupling;
  nan[0][1] = std::nan("");
  CHECK_THROWS_AS(render_audio(latent(0.5, 0.5, 1, 1, 0), nan, ok, 1), Error);
}

TEST_CASE("subjects are deterministic per (seed, id) and independent of order") {
  SynthConfig cfg;
  const auto a = sample_subject(9, Label::Healthy, cfg, "H001");
  const auto other = sample_subject(9, Label::Healthy, cfg, "H000");
  const auto b = sample_subject(9, Label::Healthy, cfg, "H001");
  CHECK(a.motion.data == b.motion.data);
  CHECK(a.audio.samples == b.audio.samples);
  CHECK(a.phrase == b.phrase);
  CHECK(a.motion.data != other.motion.data);
  CHECK(sample_subject(10, Label::Healthy, cfg, "H001").audio.samples != a.audio.samples);
  for (double amp : a.latent.amplitude) {
    CHECK(amp >= 0.2);
    CHECK(amp <= 1.0);
  }
  for (double f : a.latent.frequency) {
    CHECK(f >= 0.5);
    CHECK(f <= 2.0);
  }
  CHECK(a.latent.phase >= 0.0);
  CHECK(a.latent.phase < 2.0 * kPi);
}

TEST_CASE("patients need a positive severity") {
  SynthConfig cfg;
  cfg.severity = 0.0;
  try {
    sample_subject(1, Label::Patient, cfg, "P000");
    FAIL("expected InvalidSeverity");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidSeverity);
  }
  CHECK_NOTHROW(sample_subject(1, Label::Healthy, cfg, "H000"));
}

TEST_CASE("matched pairs: same motion, different audio") {
  SynthConfig cfg;
  const auto h = sample_subject(4, Label::Healthy, cfg, "S000");
  const auto p = sample_subject(4, Label::Patient, cfg, "S000");
  CHECK(h.motion.data == p.motion.data);
  REQUIRE(h.audio.size() == p.audio.size());
  double l2 = 0.0;
  for (std::size_t i = 0; i < h.audio.size(); ++i) l2 += std::pow(h.audio.samples[i] - p.audio.samples[i], 2);
  CHECK(std::sqrt(l2) > 0.0);
  CHECK(p.severity == 0.5);
}

TEST_CASE("patient and healthy motion marginals agree") {
  SynthConfig cfg;
  std::vector<double> mh, mp;
  for (std::size_t i = 0; i < 30; ++i) {
    for (auto [label, out] : {std::pair{Label::Healthy, &mh}, std::pair{Label::Patient, &mp}}) {
      const auto rec = sample_subject(cfg.seed, label, cfg, subject_id_for(label, i));
      const auto& d = rec.motion.dims;
      for (std::size_t t = 0; t < d.frames; ++t)
        for (std::size_t x = 0; x < d.x; x += 3)
          for (std::size_t y = 0; y < d.y; y += 3)
            for (std::size_t z = 0; z < d.z; z += 3) out->push_back(magnitude(rec.motion, t, x, y, z));
    }
  }
  double h_mean, h_std, p_mean, p_std;
  stats(mh, h_mean, h_std);
  stats(mp, p_mean, p_std);
  CHECK(std::abs(p_mean - h_mean) <= 0.1 * h_mean);
  CHECK(std::abs(p_std - h_std) <= 0.1 * h_std);
}

TEST_CASE("make_dataset writes the cohort and its manifest") {
  const auto dir = std::filesystem::temp_directory_path() / "smad_test_synth";
  std::filesystem::remove_all(dir);
  SynthConfig cfg;
  cfg.dims = {4, 8, 8, 8};

  const auto m = make_dataset(cfg, dir);
  CHECK(m.entries.size() == 15);
  CHECK(m.count(Label::Healthy) == 12);
  CHECK(m.count(Label::Patient) == 3);
  std::set<std::string> ids;
  for (const auto& e : m.entries) {
    ids.insert(e.subject_id);
    CHECK(std::filesystem::exists(dir / e.motion_path));
    CHECK(std::filesystem::exists(dir / e.audio_path));
  }
  CHECK(ids.size() == 15);

  const auto back = read_manifest(dir / "manifest.json");
  REQUIRE(back.entries.size() == m.entries.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    CHECK(back.entries[i].subject_id == m.entries[i].subject_id);
    CHECK(back.entries[i].label == m.entries[i].label);
    CHECK(back.entries[i].motion_path == m.entries[i].motion_path);
    CHECK(back.entries[i].phrase == m.entries[i].phrase);
  }
  // The files hold exactly the sampled subject.
  const auto rec = sample_subject(cfg.seed, Label::Patient, cfg, "P001");
  CHECK(read_motion(dir / "motion" / "P001.mfld").data == rec.motion.data);

  // Regenerating gives byte-identical files.
  const auto dir2 = dir / "again";
  make_dataset(cfg, dir2);
  for (const auto& e : m.entries) {
    CHECK(dsp::read_wav(dir / e.audio_path).samples == dsp::read_wav(dir2 / e.audio_path).samples);
  }

  SynthConfig large = cfg;
  large.n_healthy = 36;
  large.n_patients = 3;
  const auto big = make_dataset(large, dir / "large");
  CHECK(big.count(Label::Healthy) == 36);
  CHECK(big.count(Label::Patient) == 3);

  SynthConfig healthy_only = cfg;
  healthy_only.n_patients = 0;
  CHECK(make_dataset(healthy_only, dir / "healthy").entries.size() == 12);
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifest errors") {
  const auto dir = std::filesystem::temp_directory_path() / "smad_test_manifest";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& text) {
    dsp::Waveform w{std::vector<double>(10, 0.0), 10000};
    dsp::write_wav(dir / "a.wav", w);
    std::FILE* f = std::fopen((dir / "m.json").string().c_str(), "wb");
    std::fwrite(text.data(), 1, text.size(), f);
    std::fclose(f);
  };
  auto code = [&]() {
    try {
      read_manifest(dir / "m.json");
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::BadConfig;
  };
  write(R"([{"subject_id":"A","label":"healthy","motion":"a.wav","audio":"a.wav"},
            {"subject_id":"A","label":"healthy","motion":"a.wav","audio":"a.wav"}])");
  CHECK(code() == ErrorCode::BadManifest);
  write(R"([{"subject_id":"A","label":"sick","motion":"a.wav","audio":"a.wav"}])");
  CHECK(code() == ErrorCode::BadManifest);
  write(R"([{"subject_id":"A","label":"healthy","motion":"a.wav","audio":"a.wav","extra":1}])");
  CHECK(code() == ErrorCode::BadManifest);
  write(R"([{"subject_id":"A","label":"healthy","motion":"gone.mfld","audio":"a.wav"}])");
  CHECK(code() == ErrorCode::IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("motion file layout and round trip") {
  SynthConfig cfg;
  cfg.dims = {3, 8, 9, 10};
  const auto m = render_motion(latent(0.6, 0.5, 1.0, 1.5, 0.1), cfg, 2);
  const auto bytes = encode_motion(m);

  // Header read by hand: magic, u16 version, four u32 dims, then f32 data.
  REQUIRE(bytes.size() == 4 + 2 + 16 + m.data.size() * 4);
  CHECK(bytes.substr(0, 4) == "MFLD");
  std::uint16_t version;
  std::memcpy(&version, bytes.data() + 4, 2);
  CHECK(version == kMotionVersion);
  std::uint32_t dims[4];
  std::memcpy(dims, bytes.data() + 6, 16);
  CHECK(dims[0] == 3);
  CHECK(dims[1] == 8);
  CHECK(dims[2] == 9);
  CHECK(dims[3] == 10);
  // Channel is fastest, then z.
  float v;
  std::memcpy(&v, bytes.data() + 22 + 4 * ((((1 * 8 + 2) * 9 + 3) * 10 + 4) * 3 + 2), 4);
  CHECK(v == m.at(1, 2, 3, 4, 2));

  const auto back = decode_motion(bytes);
  CHECK(back.dims == m.dims);
  CHECK(std::memcmp(back.data.data(), m.data.data(), m.data.size() * 4) == 0);
  CHECK(encode_motion(back) == bytes);

  auto bad = bytes;
  bad[1] = 'X';
  CHECK_THROWS_AS(decode_motion(bad), Error);
  CHECK_THROWS_AS(decode_motion(bytes.substr(0, bytes.size() - 4)), Error);
  CHECK_THROWS_AS(decode_motion(bytes.substr(0, 10)), Error);
}
