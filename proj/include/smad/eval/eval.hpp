#pragma once

// Leave-one-subject-out harness: ROC/AUC, the per-round protocol, the ridge
// reference model and report rendering.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "smad/detector/detector.hpp"
#include "smad/metrics/metrics.hpp"
#include "smad/synth/synth.hpp"
#include "smad/translator/translator.hpp"

namespace smad::eval {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // scores >= threshold are called patient
};

struct RocCurve {
  std::vector<RocPoint> points;
};

// Patients are the positive class; larger scores are more patient-like.
// Equal scores move together as one step.
RocCurve roc(const std::vector<double>& scores, const std::vector<synth::Label>& labels);
double auc(const RocCurve& curve);
// Probability a patient outscores a healthy subject, ties counted half.
double mann_whitney(const std::vector<double>& scores, const std::vector<synth::Label>& labels);

struct MeanRoc {
  std::vector<double> fpr;
  std::vector<double> tpr_mean;
  std::vector<double> tpr_std;
};

// Vertical averaging: each curve's TPR is read at fixed FPR values (the
// highest TPR reached at that FPR), then averaged across curves.
MeanRoc vertical_average(const std::vector<RocCurve>& curves, std::size_t grid = 101);
double tpr_at(const RocCurve& curve, double fpr);

// Ridge regression from coarse per-frame motion statistics to spectrogram
// pixels; a closed-form reference for what the corpus makes learnable.
struct RidgeOracle {
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
  std::vector<double> weights;  // [features + 1, pixels], bias row last
  std::size_t features = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

std::vector<double> motion_statistics(const grad::Tensor<float>& input);
RidgeOracle fit_ridge(const std::vector<const translator::Example*>& examples, double lambda = 1.0);
dsp::MelSpectrogram predict_ridge(const RidgeOracle& oracle, const grad::Tensor<float>& input);

// Where the SVM's healthy training points come from.
//   InSample: the round's translator reconstructing its own training subjects.
//   HeldOut:  subjects withheld from translator training.
//   CrossFit: two translators on alternating halves of the training subjects,
//             each reconstructing the other half; test subjects are scored
//             under both and reported from their averaged prediction.
enum class SvmFit { InSample, HeldOut, CrossFit };
const char* svm_fit_name(SvmFit f);
SvmFit parse_svm_fit(std::string_view s);

struct DetectorSettings {
  detector::OcSvmConfig svm;
  detector::FeatureMode features = detector::FeatureMode::Reconstruction;
  detector::Aggregation aggregation = detector::Aggregation::Median;
  SvmFit fit = SvmFit::CrossFit;
  // HeldOut: healthy training subjects withheld from the translator and
  // used only to fit the SVM.
  std::size_t holdout_subjects = 2;
};

struct LooConfig {
  translator::TrainConfig train;
  translator::ModelConfig model;
  dsp::MelConfig mel;
  DetectorSettings detector;
  int griffin_lim_iterations = 60;
  double ridge_lambda = 1.0;
  std::size_t jobs = 1;
};

struct SubjectResult {
  std::string subject_id;
  synth::Label label = synth::Label::Healthy;
  std::vector<metrics::MetricReport> crops;
  double corr2d = 0.0;     // crop mean
  double pesq_lite = 0.0;  // crop mean
  double anomaly = 0.0;    // SVM, aggregated over crops
  double threshold = 0.0;  // raw corr2d baseline
  double ridge_anomaly = 0.0;
  double ridge_corr2d = 0.0;
};

struct SvmSummary {
  std::size_t n = 0;
  std::size_t support = 0;
  std::size_t outliers = 0;
  double rho = 0.0;
  double gamma = 0.0;
  double kkt_violation = 0.0;
  std::size_t updates = 0;
  bool nu_property = false;
};

struct RoundResult {
  std::size_t index = 0;
  std::string held_out;
  std::vector<SubjectResult> subjects;  // held-out healthy subject, then patients
  double first_loss = 0.0;
  double final_loss = 0.0;
  double train_seconds = 0.0;
  SvmSummary svm;
  SvmSummary ridge_svm;
};

struct CohortStats {
  std::size_t n = 0;
  double corr2d_mean = 0.0;
  double corr2d_std = 0.0;
  double pesq_mean = 0.0;
  double pesq_std = 0.0;
};

struct EvaluationReport {
  std::string variant;
  std::vector<RoundResult> rounds;
  CohortStats healthy;
  CohortStats patient;
  double pooled_auc = 0.0;
  double threshold_auc = 0.0;
  double ridge_auc = 0.0;
  double ridge_healthy_corr2d = 0.0;
  double ridge_patient_corr2d = 0.0;
  std::vector<double> round_auc;
  std::map<std::string, double> patient_mean_anomaly;
  RocCurve pooled_roc;
  MeanRoc mean_roc;
  nlohmann::json config;
};

// One detector feature vector per crop of the subject.
std::vector<detector::FeatureVector> crop_features(const dsp::MelSpectrogram& pred, const translator::Example& ex,
                                                   detector::FeatureMode mode);

// Per-crop metrics of one prediction against a subject's crops: the
// prediction is inverted once at the subject's mean level. anomaly and the
// ridge fields are left at zero.
SubjectResult evaluate_subject(const dsp::MelSpectrogram& pred, const translator::Example& ex,
                               const LooConfig& cfg);

using RoundCallback = std::function<void(const RoundResult&)>;

// One round per healthy subject. Examples are loaded once and shared.
EvaluationReport loo_protocol(const synth::Manifest& manifest, const LooConfig& cfg,
                              const RoundCallback& on_round = {});
EvaluationReport loo_protocol(const std::vector<translator::Example>& examples, const LooConfig& cfg,
                              const RoundCallback& on_round = {});

// Fills the pooled fields from rounds; ordering of rounds is by index.
void summarize(EvaluationReport& report);

nlohmann::json config_json(const LooConfig& cfg);
nlohmann::json report_json(const EvaluationReport& report);
EvaluationReport report_from_json(const nlohmann::json& j);

// metrics.csv, scores.csv, summary.csv and roc.svg for one or more backbones.
std::string summary_csv(const std::vector<EvaluationReport>& reports);
std::string scores_csv(const std::vector<EvaluationReport>& reports);
std::string roc_svg(const std::vector<EvaluationReport>& reports);
void render_report(const std::vector<EvaluationReport>& reports, const std::filesystem::path& out_dir);

// Writes the text, replacing any existing file; IoError on failure.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string version_string();

}  // namespace smad::eval
