#include "smad/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>

#include "smad/common/binio.hpp"
#include "smad/common/error.hpp"
#include "smad/dsp/fft.hpp"

namespace smad::metrics {

namespace {

template <typename T>
double corr2d_impl(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error("metrics", ErrorCode::ShapeError,
                "corr2d shapes " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " and " +
                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  const std::size_t n = a.size();
  if (n == 0) throw Error("metrics", ErrorCode::ShapeError, "corr2d of empty matrices");
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a.flat()[i];
    mb += b.flat()[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a.flat()[i] - ma;
    const double db = b.flat()[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw Error("metrics", ErrorCode::DegenerateVariance, "corr2d of a constant matrix");
  // Identical inputs give saa == sbb == sab, and sqrt(s * s) == s in IEEE
  // arithmetic, so r is exactly 1.
  const double r = sab / std::sqrt(saa * sbb);
  return std::clamp(r, -1.0, 1.0);
}

double rms(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

// Lag L maximizing the normalized correlation of ref[n] with deg[n + L]
// over their overlap; ties go to the smallest |L|. Scores are FFT-based, so
// anything within kLagTie of the best counts as a tie.
constexpr double kLagTie = 1e-9;
long best_lag(std::span<const double> ref, std::span<const double> deg, long max_lag) {
  const std::size_t nr = ref.size(), nd = deg.size();
  std::size_t n = 1;
  while (n < nr + nd) n <<= 1;
  std::vector<double> a(n, 0.0), b(n, 0.0);
  std::copy(ref.begin(), ref.end(), a.begin());
  std::copy(deg.begin(), deg.end(), b.begin());
  auto fa = dsp::rfft(a);
  const auto fb = dsp::rfft(b);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] = std::conj(fa[k]) * fb[k];
  // xc[L mod n] = sum_m ref[m] deg[m + L]
  const auto xc = dsp::irfft(fa, n);

  std::vector<double> er(nr + 1, 0.0), ed(nd + 1, 0.0);
  for (std::size_t i = 0; i < nr; ++i) er[i + 1] = er[i] + ref[i] * ref[i];
  for (std::size_t i = 0; i < nd; ++i) ed[i + 1] = ed[i] + deg[i] * deg[i];

  long best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (long mag = 0; mag <= max_lag; ++mag) {
    for (long lag : {mag, -mag}) {
      if (mag == 0 && lag < 0) continue;
      // Overlap: ref[r0, r1), deg[r0 + lag, r1 + lag).
      const long r0 = std::max(0L, -lag);
      const long r1 = std::min(static_cast<long>(nr), static_cast<long>(nd) - lag);
      if (r1 - r0 <= 0) continue;
      const double e = (er[r1] - er[r0]) * (ed[r1 + lag] - ed[r0 + lag]);
      if (e <= 0.0) continue;
      const double c = xc[static_cast<std::size_t>((lag % static_cast<long>(n) + static_cast<long>(n)) % static_cast<long>(n))];
      const double score = c / std::sqrt(e);
      if (score > best_score + kLagTie) {
        best_score = score;
        best = lag;
      }
    }
  }
  return best;
}

}  // namespace

double corr2d(const Matrix<float>& a, const Matrix<float>& b) { return corr2d_impl(a, b); }
double corr2d(const Matrix<double>& a, const Matrix<double>& b) { return corr2d_impl(a, b); }
double corr2d(const dsp::MelSpectrogram& a, const dsp::MelSpectrogram& b) { return corr2d_impl(a.values, b.values); }

double log_spectral_distance(const Matrix<double>& a, const Matrix<double>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.size() == 0) {
    throw Error("metrics", ErrorCode::ShapeError, "log_spectral_distance shapes differ");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.flat()[i] - b.flat()[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.size())) * 10.0 / std::numbers::ln10;
}

double log_spectral_distance(const dsp::MelSpectrogram& a, const dsp::MelSpectrogram& b) {
  if (a.n_mels() != b.n_mels() || a.n_time() != b.n_time()) {
    throw Error("metrics", ErrorCode::ShapeError, "log_spectral_distance shapes differ");
  }
  return log_spectral_distance(a.denormalized(), b.denormalized());
}

PesqLiteDetail pesq_lite_detailed(const dsp::Waveform& ref, const dsp::Waveform& deg, const PesqLiteConfig& cfg) {
  if (ref.sample_rate != deg.sample_rate) {
    throw Error("metrics", ErrorCode::BadConfig,
                "sample rates differ: " + std::to_string(ref.sample_rate) + " vs " + std::to_string(deg.sample_rate));
  }
  const auto sr = static_cast<std::size_t>(ref.sample_rate);
  if (ref.samples.size() < sr || deg.samples.size() < sr) {
    throw Error("metrics", ErrorCode::InputTooShort, "pesq_lite needs at least one second of audio");
  }
  const double ref_rms = rms(ref.samples);
  if (ref_rms == 0.0) throw Error("metrics", ErrorCode::DegenerateReference, "reference is silent");

  PesqLiteDetail d;
  const long max_lag = std::lround(cfg.max_lag_seconds * ref.sample_rate);
  d.lag = best_lag(ref.samples, deg.samples, max_lag);

  // Overlapping segments, then level alignment on what is compared.
  const long r0 = std::max(0L, -d.lag);
  const long r1 = std::min(static_cast<long>(ref.samples.size()), static_cast<long>(deg.samples.size()) - d.lag);
  dsp::Waveform a{std::vector<double>(ref.samples.begin() + r0, ref.samples.begin() + r1), ref.sample_rate};
  dsp::Waveform b{std::vector<double>(deg.samples.begin() + r0 + d.lag, deg.samples.begin() + r1 + d.lag),
                  ref.sample_rate};
  const double a_rms = rms(a.samples), b_rms = rms(b.samples);
  d.gain = b_rms > 0.0 ? a_rms / b_rms : 1.0;
  if (d.gain != 1.0) {
    for (double& v : b.samples) v *= d.gain;
  }

  auto mel = cfg.mel;
  mel.sample_rate = ref.sample_rate;
  const auto la = dsp::log_mel(a, mel);
  const auto lb = dsp::log_mel(b, mel);
  double sym = 0.0, asym = 0.0;
  for (std::size_t i = 0; i < la.size(); ++i) {
    const double diff = lb.flat()[i] - la.flat()[i];
    sym += std::abs(diff);
    asym += std::max(diff, 0.0);
  }
  d.d_sym = sym / static_cast<double>(la.size());
  d.d_asym = asym / static_cast<double>(la.size());
  d.score = std::clamp(4.5 - cfg.sym_weight * d.d_sym - cfg.asym_weight * d.d_asym, 1.0, 4.5);
  return d;
}

double pesq_lite(const dsp::Waveform& ref, const dsp::Waveform& deg, const PesqLiteConfig& cfg) {
  return pesq_lite_detailed(ref, deg, cfg).score;
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = "subject_id,crop_index,corr2d,lsd_db,pesq_lite\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%zu,%.9f,%.9f,%.9f\n", r.crop_index, r.report.corr2d, r.report.lsd_db,
                  r.report.pesq_lite);
    out += r.subject_id;
    out += buf;
  }
  return out;
}

void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path) {
  binio::write_file(path, metrics_csv(rows), "metrics");
}

}  // namespace smad::metrics
