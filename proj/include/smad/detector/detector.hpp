#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "smad/dsp/mel.hpp"

namespace smad::detector {

using FeatureVector = std::vector<double>;

inline constexpr std::size_t kBandGroups = 8;
inline constexpr std::size_t kFeatureDim = 2 + 2 * kBandGroups;

enum class FeatureMode { Reconstruction, Raw };
enum class Aggregation { Median, Mean };
enum class KernelType { Rbf, Linear };

const char* feature_mode_name(FeatureMode m);
FeatureMode parse_feature_mode(std::string_view s);
const char* aggregation_name(Aggregation a);
Aggregation parse_aggregation(std::string_view s);
const char* kernel_name(KernelType k);
KernelType parse_kernel(std::string_view s);

// corr2d, lsd_db, then per band group (n_mels / 8 consecutive rows) the
// mean absolute error and the std of the error. `pred` is read with the
// target's normalization for the LSD term.
FeatureVector extract_features(const dsp::MelSpectrogram& pred, const dsp::MelSpectrogram& target);
// Raw mode: the flattened predicted spectrogram.
FeatureVector raw_features(const dsp::MelSpectrogram& pred);

struct Standardization {
  std::vector<std::size_t> kept;  // input dimensions with non-zero std
  std::vector<double> mean;       // per kept dimension
  std::vector<double> std;
  std::size_t input_dim = 0;

  static Standardization fit(const std::vector<FeatureVector>& xs);
  FeatureVector apply(const FeatureVector& x) const;
};

struct OcSvmConfig {
  double nu = 0.1;
  std::optional<double> gamma;  // empty: 1 / (d * pooled variance)
  KernelType kernel = KernelType::Rbf;
  double tol = 1e-6;
  std::size_t max_updates = 100000;
};

struct OcSvmModel {
  Standardization stats;
  std::vector<FeatureVector> points;  // standardized training points
  std::vector<double> alpha;
  double rho = 0.0;
  double gamma = 0.0;
  double nu = 0.0;
  KernelType kernel = KernelType::Rbf;
  std::size_t updates = 0;
  double kkt_violation = 0.0;

  double kernel_value(const FeatureVector& a, const FeatureVector& b) const;
  bool operator==(const OcSvmModel&) const;
};

// Dual: min 1/2 a'Qa, 0 <= a_i <= 1/(nu n), sum a = 1, solved by SMO.
OcSvmModel fit_ocsvm(const std::vector<FeatureVector>& xs, const OcSvmConfig& cfg = {});

// f(x) >= 0: inside the healthy boundary. Anomaly score is -f.
double decision(const OcSvmModel& m, const FeatureVector& x);
// Same, for a point that is already standardized.
double decision_standardized(const OcSvmModel& m, const FeatureVector& z);
double anomaly_score(const OcSvmModel& m, const FeatureVector& x);

double aggregate(std::vector<double> values, Aggregation a);
// Median (default) of per-crop anomaly scores.
double score_subject(const OcSvmModel& m, const std::vector<FeatureVector>& crops,
                     Aggregation a = Aggregation::Median);

// Raw-threshold baseline: anomaly = -corr2d, aggregated like the SVM.
double threshold_score(const std::vector<double>& crop_corr2d, Aggregation a = Aggregation::Median);

// Dual objective 1/2 a'Qa over the model's own training points.
double dual_objective(const OcSvmModel& m);

std::string encode_model(const OcSvmModel& m);
OcSvmModel decode_model(std::string_view bytes);
void save_model(const OcSvmModel& m, const std::filesystem::path& path);
OcSvmModel load_model(const std::filesystem::path& path);

}  // namespace smad::detector
