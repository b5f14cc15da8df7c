#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "smad/common/matrix.hpp"
#include "smad/dsp/mel.hpp"
#include "smad/dsp/stft.hpp"

namespace smad::metrics {

// Pearson r over all entries. Throws ShapeError / DegenerateVariance.
double corr2d(const Matrix<float>& a, const Matrix<float>& b);
double corr2d(const Matrix<double>& a, const Matrix<double>& b);
double corr2d(const dsp::MelSpectrogram& a, const dsp::MelSpectrogram& b);

// RMS difference of natural-log energies, in dB.
double log_spectral_distance(const Matrix<double>& a, const Matrix<double>& b);
// Uses the de-normalized log energies; both need a normalization record.
double log_spectral_distance(const dsp::MelSpectrogram& a, const dsp::MelSpectrogram& b);

struct PesqLiteConfig {
  double max_lag_seconds = 0.25;
  double sym_weight = 0.35;
  double asym_weight = 0.11;
  dsp::MelConfig mel;
};

struct PesqLiteDetail {
  double score = 0.0;
  long lag = 0;  // deg sample aligned with ref sample 0
  double gain = 1.0;
  double d_sym = 0.0;
  double d_asym = 0.0;
};

// Disturbance-based quality score in [1, 4.5]; not an ITU P.862 value.
PesqLiteDetail pesq_lite_detailed(const dsp::Waveform& ref, const dsp::Waveform& deg, const PesqLiteConfig& cfg = {});
double pesq_lite(const dsp::Waveform& ref, const dsp::Waveform& deg, const PesqLiteConfig& cfg = {});

struct MetricReport {
  double corr2d = 0.0;
  double lsd_db = 0.0;
  double pesq_lite = 0.0;
};

struct MetricRow {
  std::string subject_id;
  std::size_t crop_index = 0;
  MetricReport report;
};

std::string metrics_csv(const std::vector<MetricRow>& rows);
void write_metrics_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path);

}  // namespace smad::metrics
