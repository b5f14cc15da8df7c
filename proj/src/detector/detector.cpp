#include "smad/detector/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "smad/common/anck.hpp"
#include "smad/common/binio.hpp"
#include "smad/common/error.hpp"
#include "smad/metrics/metrics.hpp"
#include "smad/simd/kernels.hpp"

namespace smad::detector {

using nlohmann::json;

namespace {
constexpr double kPolishTol = 1e-12;
}  // namespace

const char* feature_mode_name(FeatureMode m) { return m == FeatureMode::Raw ? "raw" : "reconstruction"; }

FeatureMode parse_feature_mode(std::string_view s) {
  if (s == "reconstruction") return FeatureMode::Reconstruction;
  if (s == "raw") return FeatureMode::Raw;
  throw Error("detector", ErrorCode::BadConfig, "unknown feature mode '" + std::string(s) + "'");
}

const char* aggregation_name(Aggregation a) { return a == Aggregation::Mean ? "mean" : "median"; }

Aggregation parse_aggregation(std::string_view s) {
  if (s == "median") return Aggregation::Median;
  if (s == "mean") return Aggregation::Mean;
  throw Error("detector", ErrorCode::BadConfig, "unknown aggregation '" + std::string(s) + "'");
}

const char* kernel_name(KernelType k) { return k == KernelType::Rbf ? "rbf" : "linear"; }

KernelType parse_kernel(std::string_view s) {
  if (s == "rbf") return KernelType::Rbf;
  if (s == "linear") return KernelType::Linear;
  throw Error("detector", ErrorCode::BadConfig, "unknown kernel '" + std::string(s) + "'");
}

FeatureVector extract_features(const dsp::MelSpectrogram& pred, const dsp::MelSpectrogram& target) {
  const std::size_t rows = target.n_mels(), cols = target.n_time();
  if (pred.n_mels() != rows || pred.n_time() != cols) {
    throw Error("detector", ErrorCode::ShapeError, "prediction and target spectrogram shapes differ");
  }
  if (rows % kBandGroups != 0) {
    throw Error("detector", ErrorCode::ShapeError, "n_mels must split into 8 band groups");
  }
  FeatureVector f;
  f.reserve(kFeatureDim);
  f.push_back(metrics::corr2d(pred.values, target.values));
  dsp::MelSpectrogram aligned = pred;
  aligned.norm = target.norm;
  f.push_back(metrics::log_spectral_distance(aligned, target));
  const std::size_t band = rows / kBandGroups;
  const double count = static_cast<double>(band * cols);
  for (std::size_t g = 0; g < kBandGroups; ++g) {
    double abs_sum = 0.0, sum = 0.0;
    for (std::size_t r = g * band; r < (g + 1) * band; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double e = static_cast<double>(pred.values(r, c)) - static_cast<double>(target.values(r, c));
        abs_sum += std::abs(e);
        sum += e;
      }
    }
    const double mean = sum / count;
    double var = 0.0;
    for (std::size_t r = g * band; r < (g + 1) * band; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double e = static_cast<double>(pred.values(r, c)) - static_cast<double>(target.values(r, c)) - mean;
        var += e * e;
      }
    }
    f.push_back(abs_sum / count);
    f.push_back(std::sqrt(var / count));
  }
  return f;
}

FeatureVector raw_features(const dsp::MelSpectrogram& pred) {
  return FeatureVector(pred.values.flat().begin(), pred.values.flat().end());
}

Standardization Standardization::fit(const std::vector<FeatureVector>& xs) {
  if (xs.empty()) throw Error("detector", ErrorCode::TooFewSamples, "no feature vectors to standardize");
  Standardization s;
  s.input_dim = xs.front().size();
  const double n = static_cast<double>(xs.size());
  for (const auto& x : xs) {
    if (x.size() != s.input_dim) throw Error("detector", ErrorCode::ShapeError, "feature vectors differ in length");
  }
  for (std::size_t d = 0; d < s.input_dim; ++d) {
    double mean = 0.0;
    for (const auto& x : xs) mean += x[d];
    mean /= n;
    double var = 0.0;
    for (const auto& x : xs) var += (x[d] - mean) * (x[d] - mean);
    const double sd = std::sqrt(var / n);
    if (sd > 0.0) {
      s.kept.push_back(d);
      s.mean.push_back(mean);
      s.std.push_back(sd);
    }
  }
  return s;
}

FeatureVector Standardization::apply(const FeatureVector& x) const {
  if (x.size() != input_dim) {
    throw Error("detector", ErrorCode::ShapeError,
                "feature dimension " + std::to_string(x.size()) + ", model expects " + std::to_string(input_dim));
  }
  FeatureVector z(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) z[i] = (x[kept[i]] - mean[i]) / std[i];
  return z;
}

double OcSvmModel::kernel_value(const FeatureVector& a, const FeatureVector& b) const {
  if (kernel == KernelType::Linear) return simd::dot(a.data(), b.data(), a.size());
  return std::exp(-gamma * simd::squared_distance(a.data(), b.data(), a.size()));
}

bool OcSvmModel::operator==(const OcSvmModel& o) const {
  return stats.kept == o.stats.kept && stats.mean == o.stats.mean && stats.std == o.stats.std &&
         stats.input_dim == o.stats.input_dim && points == o.points && alpha == o.alpha && rho == o.rho &&
         gamma == o.gamma && nu == o.nu && kernel == o.kernel;
}

OcSvmModel fit_ocsvm(const std::vector<FeatureVector>& xs, const OcSvmConfig& cfg) {
  const std::size_t n = xs.size();
  if (n < 2) throw Error("detector", ErrorCode::TooFewSamples, "one-class SVM needs at least 2 samples");
  if (!(cfg.nu > 0.0 && cfg.nu <= 1.0)) throw Error("detector", ErrorCode::BadConfig, "nu must lie in (0, 1]");
  if (cfg.gamma && !(*cfg.gamma > 0.0)) throw Error("detector", ErrorCode::BadConfig, "gamma must be positive");

  OcSvmModel m;
  m.nu = cfg.nu;
  m.kernel = cfg.kernel;
  m.stats = Standardization::fit(xs);
  for (const auto& x : xs) m.points.push_back(m.stats.apply(x));
  const std::size_t d = m.stats.kept.size();
  if (cfg.gamma) {
    m.gamma = *cfg.gamma;
  } else {
    double mean = 0.0, var = 0.0;
    for (const auto& z : m.points) {
      for (double v : z) mean += v;
    }
    const double count = static_cast<double>(n * std::max<std::size_t>(d, 1));
    mean /= count;
    for (const auto& z : m.points) {
      for (double v : z) var += (v - mean) * (v - mean);
    }
    var /= count;
    m.gamma = d > 0 && var > 0.0 ? 1.0 / (static_cast<double>(d) * var) : 1.0;
  }

  std::vector<double> q(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) q[i * n + j] = q[j * n + i] = m.kernel_value(m.points[i], m.points[j]);
  }

  // Uniform start: feasible for every nu (1/n <= 1/(nu n)) and symmetric
  // in the data.
  const double c = 1.0 / (cfg.nu * static_cast<double>(n));
  auto& a = m.alpha;
  a.assign(n, 1.0 / static_cast<double>(n));
  std::vector<double> g(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) g[k] += q[k * n + i] * a[i];
  }

  const double cap = c * (1.0 - 1e-12);
  auto can_grow = [&](std::size_t i) { return a[i] < cap; };
  auto can_shrink = [&](std::size_t i) { return a[i] > 0.0; };
  for (;;) {
    // i: most negative gradient among growable; j: second-order choice.
    std::size_t i = n;
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (can_grow(t) && -g[t] > gmax) {
        gmax = -g[t];
        i = t;
      }
      if (can_shrink(t)) gmin = std::min(gmin, -g[t]);
    }
    m.kkt_violation = i == n ? 0.0 : std::max(0.0, gmax - gmin);
    // Past the required tolerance, keep polishing while the budget lasts so
    // that solutions do not depend on visiting order.
    if (m.kkt_violation <= kPolishTol) break;
    if (m.updates >= cfg.max_updates) {
      if (m.kkt_violation <= cfg.tol) break;
      throw Error("detector", ErrorCode::ConvergenceError,
                  "SMO stopped after " + std::to_string(m.updates) + " updates with KKT violation " +
                      std::to_string(m.kkt_violation));
    }
    std::size_t j = n;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (!can_shrink(t) || t == i) continue;
      const double b = gmax + g[t];
      if (b <= 0.0) continue;
      double curv = q[i * n + i] + q[t * n + t] - 2.0 * q[i * n + t];
      if (curv <= 0.0) curv = 1e-12;
      const double gain = -(b * b) / curv;
      if (gain < best) {
        best = gain;
        j = t;
      }
    }
    if (j == n) break;
    double curv = q[i * n + i] + q[j * n + j] - 2.0 * q[i * n + j];
    if (curv <= 0.0) curv = 1e-12;
    // Move mass from j to i.
    double step = (g[j] - g[i]) / curv;
    step = std::min({step, c - a[i], a[j]});
    if (step <= 0.0) break;
    a[i] += step;
    a[j] -= step;
    if (a[j] < 1e-15 * c) a[j] = 0.0;
    if (a[i] > c) a[i] = c;
    for (std::size_t k = 0; k < n; ++k) g[k] += (q[k * n + i] - q[k * n + j]) * step;
    ++m.updates;
  }

  if (m.kkt_violation > cfg.tol) {
    throw Error("detector", ErrorCode::ConvergenceError,
                "SMO stalled with KKT violation " + std::to_string(m.kkt_violation));
  }

  // rho from free vectors, else the midpoint of the feasible interval.
  double free_sum = 0.0;
  std::size_t free_count = 0;
  double lb = -std::numeric_limits<double>::infinity(), ub = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n; ++t) {
    if (a[t] > 0.0 && a[t] < cap) {
      free_sum += g[t];
      ++free_count;
    } else if (a[t] == 0.0) {
      ub = std::min(ub, g[t]);
    } else {
      lb = std::max(lb, g[t]);
    }
  }
  if (free_count > 0) {
    m.rho = free_sum / static_cast<double>(free_count);
  } else if (std::isfinite(lb) && std::isfinite(ub)) {
    m.rho = 0.5 * (lb + ub);
  } else {
    m.rho = std::isfinite(lb) ? lb : ub;
  }
  return m;
}

double decision_standardized(const OcSvmModel& m, const FeatureVector& z) {
  if (z.size() != m.stats.kept.size()) {
    throw Error("detector", ErrorCode::ShapeError, "standardized feature dimension mismatch");
  }
  double f = 0.0;
  for (std::size_t i = 0; i < m.points.size(); ++i) {
    if (m.alpha[i] != 0.0) f += m.alpha[i] * m.kernel_value(m.points[i], z);
  }
  return f - m.rho;
}

double decision(const OcSvmModel& m, const FeatureVector& x) { return decision_standardized(m, m.stats.apply(x)); }

double anomaly_score(const OcSvmModel& m, const FeatureVector& x) { return -decision(m, x); }

double aggregate(std::vector<double> values, Aggregation a) {
  if (values.empty()) throw Error("detector", ErrorCode::TooFewSamples, "no crop scores to aggregate");
  if (a == Aggregation::Mean) {
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
  }
  std::sort(values.begin(), values.end());
  const std::size_t h = values.size() / 2;
  return values.size() % 2 == 1 ? values[h] : 0.5 * (values[h - 1] + values[h]);
}

double score_subject(const OcSvmModel& m, const std::vector<FeatureVector>& crops, Aggregation a) {
  std::vector<double> s;
  s.reserve(crops.size());
  for (const auto& x : crops) s.push_back(anomaly_score(m, x));
  return aggregate(std::move(s), a);
}

double threshold_score(const std::vector<double>& crop_corr2d, Aggregation a) {
  std::vector<double> s;
  s.reserve(crop_corr2d.size());
  for (double c : crop_corr2d) s.push_back(-c);
  return aggregate(std::move(s), a);
}

double dual_objective(const OcSvmModel& m) {
  double obj = 0.0;
  for (std::size_t i = 0; i < m.points.size(); ++i) {
    if (m.alpha[i] == 0.0) continue;
    for (std::size_t j = 0; j < m.points.size(); ++j) {
      if (m.alpha[j] != 0.0) obj += m.alpha[i] * m.alpha[j] * m.kernel_value(m.points[i], m.points[j]);
    }
  }
  return 0.5 * obj;
}

// Doubles go into the JSON header, which round-trips them exactly; the f32
// blob section stays empty.
std::string encode_model(const OcSvmModel& m) {
  json h;
  h["kind"] = "ocsvm";
  h["kernel"] = kernel_name(m.kernel);
  h["nu"] = m.nu;
  h["gamma"] = m.gamma;
  h["rho"] = m.rho;
  h["input_dim"] = m.stats.input_dim;
  h["kept"] = m.stats.kept;
  h["mean"] = m.stats.mean;
  h["std"] = m.stats.std;
  h["alpha"] = m.alpha;
  h["points"] = m.points;
  h["updates"] = m.updates;
  h["kkt_violation"] = m.kkt_violation;
  return anck::encode({h.dump(), {}});
}

OcSvmModel decode_model(std::string_view bytes) {
  const auto c = anck::decode(bytes, "detector");
  OcSvmModel m;
  try {
    const json h = json::parse(c.header);
    if (h.at("kind") != "ocsvm") throw Error("detector", ErrorCode::BadCheckpoint, "not a one-class SVM model");
    const auto kernel = h.at("kernel").get<std::string>();
    if (kernel != "rbf" && kernel != "linear") throw Error("detector", ErrorCode::BadCheckpoint, "unknown kernel");
    m.kernel = kernel == "rbf" ? KernelType::Rbf : KernelType::Linear;
    m.nu = h.at("nu").get<double>();
    m.gamma = h.at("gamma").get<double>();
    m.rho = h.at("rho").get<double>();
    m.stats.input_dim = h.at("input_dim").get<std::size_t>();
    m.stats.kept = h.at("kept").get<std::vector<std::size_t>>();
    m.stats.mean = h.at("mean").get<std::vector<double>>();
    m.stats.std = h.at("std").get<std::vector<double>>();
    m.alpha = h.at("alpha").get<std::vector<double>>();
    m.points = h.at("points").get<std::vector<FeatureVector>>();
    m.updates = h.at("updates").get<std::size_t>();
    m.kkt_violation = h.at("kkt_violation").get<double>();
  } catch (const json::exception& e) {
    throw Error("detector", ErrorCode::BadCheckpoint, std::string("bad header: ") + e.what());
  }
  const std::size_t d = m.stats.kept.size();
  bool ok = m.stats.mean.size() == d && m.stats.std.size() == d && m.alpha.size() == m.points.size();
  for (const auto& p : m.points) ok = ok && p.size() == d;
  for (auto k : m.stats.kept) ok = ok && k < m.stats.input_dim;
  if (!ok) throw Error("detector", ErrorCode::BadCheckpoint, "inconsistent model dimensions");
  return m;
}

void save_model(const OcSvmModel& m, const std::filesystem::path& path) {
  binio::write_file(path, encode_model(m), "detector");
}

OcSvmModel load_model(const std::filesystem::path& path) { return decode_model(binio::read_file(path, "detector")); }

}  // namespace smad::detector
