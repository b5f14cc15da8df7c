#include "smad/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "smad/common/error.hpp"
#include "smad/common/rng.hpp"
#include "smad/dsp/io.hpp"

namespace smad::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

[[noreturn]] void bad_config(const std::string& what) { throw Error("synth", ErrorCode::BadConfig, what); }

void check_config(const SynthConfig& cfg) {
  const auto& d = cfg.dims;
  if (d.frames < 2 || d.x == 0 || d.y == 0 || d.z == 0) bad_config("motion dims need T >= 2 and X, Y, Z >= 1");
  if (!(cfg.blob_sigma > 0.0)) bad_config("blob sigma must be positive");
  if (!(cfg.motion_noise >= 0.0)) bad_config("motion noise must be non-negative");
  if (cfg.audio.sample_rate <= 0 || cfg.audio.length == 0) bad_config("audio rate and length must be positive");
  if (!(cfg.audio.f0 > 0.0 && cfg.audio.f0 < 0.5 * cfg.audio.sample_rate)) bad_config("f0 outside (0, Nyquist)");
  if (!(cfg.audio.noise_std >= 0.0) || !(cfg.audio.rms > 0.0)) bad_config("audio levels must be positive");
  if (!(cfg.severity >= 0.0)) bad_config("severity must be non-negative");
}

// Second-order resonator with unity gain at DC (Klatt form).
struct Resonator {
  double y1 = 0.0;
  double y2 = 0.0;

  double step(double x, double freq, double radius, double sample_rate) {
    const double b = 2.0 * radius * std::cos(kTwoPi * freq / sample_rate);
    const double c = -radius * radius;
    const double a = 1.0 - b - c;
    const double y = a * x + b * y1 + c * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

void MotionFieldSequence::validate() const {
  if (dims.frames < 2) throw Error("synth", ErrorCode::ShapeError, "motion needs at least two frames");
  if (data.size() != dims.frames * dims.frame_size()) {
    throw Error("synth", ErrorCode::ShapeError, "motion payload does not match its dims");
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw Error("synth", ErrorCode::BadConfig, "motion field has non-finite values");
  }
}

const std::array<std::array<std::array<double, 3>, kCentersPerBlob>, kBlobs>& blob_center_set() {
  static const std::array<std::array<std::array<double, 3>, kCentersPerBlob>, kBlobs> centers{{
      {{{0.30, 0.35, 0.45}, {0.30, 0.65, 0.55}}},
      {{{0.70, 0.40, 0.50}, {0.70, 0.60, 0.40}}},
  }};
  return centers;
}

const std::array<std::array<double, 3>, kBlobs>& blob_directions() {
  static const std::array<std::array<double, 3>, kBlobs> dirs = [] {
    std::array<std::array<double, 3>, kBlobs> d{{{1.0, 0.5, 0.0}, {0.0, 0.5, 1.0}}};
    for (auto& v : d) {
      const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
      for (double& c : v) c /= n;
    }
    return d;
  }();
  return dirs;
}

const char* label_name(Label label) { return label == Label::Healthy ? "healthy" : "patient"; }

Label parse_label(const std::string& text) {
  if (text == "healthy") return Label::Healthy;
  if (text == "patient") return Label::Patient;
  throw Error("synth", ErrorCode::BadManifest, "unknown label '" + text + "'");
}

std::array<double, kBlobs> gesture_envelopes(const GestureLatent& g, double u, double drift) {
  std::array<double, kBlobs> s{};
  for (std::size_t j = 0; j < kBlobs; ++j) {
    s[j] = g.amplitude[j] * std::sin(kTwoPi * g.frequency[j] * u + g.phase + drift);
  }
  return s;
}

double PhaseDrift::at(double u) const { return amplitude * std::sin(kTwoPi * u + offset); }

MotionFieldSequence render_motion(const GestureLatent& g, const SynthConfig& cfg, std::uint64_t noise_seed) {
  check_config(cfg);
  const auto& d = cfg.dims;
  const std::array<std::size_t, 3> extent{d.x, d.y, d.z};
  const double sigma = cfg.blob_sigma * static_cast<double>(d.x + d.y + d.z) / 48.0;

  // Separable Gaussian profiles per blob and axis.
  std::array<std::array<std::vector<double>, 3>, kBlobs> profile;
  for (std::size_t j = 0; j < kBlobs; ++j) {
    const auto& frac = blob_center_set()[j][g.center_index[j] % kCentersPerBlob];
    for (std::size_t a = 0; a < 3; ++a) {
      const double c = frac[a] * static_cast<double>(extent[a] - 1);
      profile[j][a].resize(extent[a]);
      for (std::size_t i = 0; i < extent[a]; ++i) {
        const double diff = static_cast<double>(i) - c;
        profile[j][a][i] = std::exp(-diff * diff / (2.0 * sigma * sigma));
      }
    }
  }

  MotionFieldSequence m;
  m.dims = d;
  m.data.assign(d.frames * d.frame_size(), 0.0f);
  Rng rng(noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto& dirs = blob_directions();
  std::size_t idx = 0;
  for (std::size_t t = 0; t < d.frames; ++t) {
    const auto s = gesture_envelopes(g, static_cast<double>(t) / static_cast<double>(d.frames));
    for (std::size_t x = 0; x < d.x; ++x) {
      for (std::size_t y = 0; y < d.y; ++y) {
        std::array<double, kBlobs> xy{};
        for (std::size_t j = 0; j < kBlobs; ++j) xy[j] = s[j] * profile[j][0][x] * profile[j][1][y];
        for (std::size_t z = 0; z < d.z; ++z) {
          for (std::size_t c = 0; c < 3; ++c) {
            double v = 0.0;
            for (std::size_t j = 0; j < kBlobs; ++j) v += xy[j] * profile[j][2][z] * dirs[j][c];
            m.data[idx++] = static_cast<float>(v + cfg.motion_noise * noise(rng));
          }
        }
      }
    }
  }
  return m;
}

dsp::Waveform render_audio(const GestureLatent& g, const Coupling& coupling, const SynthConfig& cfg,
                           std::uint64_t noise_seed, const PhaseDrift& drift) {
  check_config(cfg);
  for (const auto& row : coupling) {
    for (double c : row) {
      if (!std::isfinite(c)) bad_config("coupling matrix must be finite");
    }
  }
  const auto& ac = cfg.audio;
  const double sr = static_cast<double>(ac.sample_rate);
  std::array<double, 2> radius{};
  for (std::size_t i = 0; i < 2; ++i) {
    radius[i] = std::exp(-std::numbers::pi * ac.bandwidth_hz[i] / sr);
    if (!(radius[i] < 1.0)) bad_config("resonator pole radius >= 1 (bandwidth must be positive)");
  }

  const std::size_t n = ac.length;
  std::vector<double> out(n);
  Resonator r1, r2;
  const double period = sr / ac.f0;
  double phase_acc = period;  // first impulse at sample 0
  const double f_lo = 50.0;
  const double f_hi = 0.5 * sr - 50.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(n);
    const auto s = gesture_envelopes(g, u, drift.at(u));
    const double c1 = coupling[0][0] * s[0] + coupling[0][1] * s[1];
    const double c2 = coupling[1][0] * s[0] + coupling[1][1] * s[1];
    const double f1 = std::clamp(300.0 + 400.0 * c1, f_lo, f_hi);
    const double f2 = std::clamp(900.0 + 800.0 * c2, f_lo, f_hi);
    double source = 0.0;
    if (phase_acc >= period) {
      phase_acc -= period;
      source = 1.0;
    }
    phase_acc += 1.0;
    out[i] = r2.step(r1.step(source, f1, radius[0], sr), f2, radius[1], sr);
  }

  double energy = 0.0;
  for (double v : out) energy += v * v;
  const double rms = std::sqrt(energy / static_cast<double>(n));
  const double gain = rms > 0.0 ? ac.rms / rms : 0.0;
  Rng rng(noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  dsp::Waveform w;
  w.sample_rate = ac.sample_rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = gain * out[i] + ac.noise_std * noise(rng);
  return w;
}

std::string subject_id_for(Label label, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%03zu", label == Label::Healthy ? 'H' : 'P', index);
  return buf;
}

SubjectRecord sample_subject(std::uint64_t seed, Label label, const SynthConfig& cfg,
                             const std::string& subject_id) {
  if (label == Label::Patient && !(cfg.severity > 0.0)) {
    throw Error("synth", ErrorCode::InvalidSeverity, "patient " + subject_id + " needs severity > 0");
  }
  const std::uint64_t subject_seed = derive_seed(seed, subject_id);
  Rng rng(subject_seed);
  std::uniform_real_distribution<double> amp(0.2, 1.0);
  std::uniform_real_distribution<double> freq(0.5, 2.0);
  std::uniform_real_distribution<double> angle(0.0, kTwoPi);
  std::uniform_int_distribution<std::size_t> center(0, kCentersPerBlob - 1);

  SubjectRecord rec;
  rec.subject_id = subject_id;
  rec.label = label;
  rec.phrase = (subject_seed & 1) ? "a souk" : "a geese";
  auto& g = rec.latent;
  for (auto& a : g.amplitude) a = amp(rng);
  for (auto& c : g.center_index) c = center(rng);
  for (auto& f : g.frequency) f = freq(rng);
  g.phase = angle(rng);
  PhaseDrift drift{0.0, angle(rng)};

  Coupling coupling = cfg.healthy_coupling;
  if (label == Label::Patient) {
    rec.severity = cfg.severity;
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t c = 0; c < 2; ++c) coupling[r][c] += cfg.severity * cfg.perturbation[r][c];
    }
    drift.amplitude = cfg.severity * cfg.phase_jitter;
  }

  rec.motion = render_motion(g, cfg, derive_seed(subject_seed, "motion"));
  rec.motion.subject_id = subject_id;
  rec.audio = render_audio(g, coupling, cfg, derive_seed(subject_seed, "audio"), drift);
  return rec;
}

std::size_t Manifest::count(Label label) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const ManifestEntry& e) { return e.label == label; }));
}

Manifest make_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  check_config(cfg);
  std::error_code ec;
  for (const char* sub : {"motion", "audio"}) {
    std::filesystem::create_directories(out_dir / sub, ec);
    if (ec) throw Error("synth", ErrorCode::IoError, "cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }
  Manifest manifest;
  manifest.root = out_dir;
  auto emit = [&](Label label, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      const auto id = subject_id_for(label, i);
      const auto rec = sample_subject(cfg.seed, label, cfg, id);
      ManifestEntry e{id, label, std::filesystem::path("motion") / (id + ".mfld"),
                      std::filesystem::path("audio") / (id + ".wav"), rec.phrase};
      write_motion(out_dir / e.motion_path, rec.motion);
      dsp::write_wav(out_dir / e.audio_path, rec.audio);
      manifest.entries.push_back(std::move(e));
    }
  };
  emit(Label::Healthy, cfg.n_healthy);
  emit(Label::Patient, cfg.n_patients);
  write_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace smad::synth
