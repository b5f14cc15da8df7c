#pragma once

// Resolved configuration for one command-line run. JSON sections: data, dsp,
// train, detector, eval. Unknown keys are rejected.

#include <filesystem>
#include <string>

#include "json.hpp"
#include "smad/eval/eval.hpp"

namespace smad::cli {

struct RunConfig {
  // data
  synth::MotionDims dims;
  std::size_t healthy = 12;
  std::size_t patients = 3;
  double severity = 0.5;
  std::uint64_t data_seed = 20240229;
  std::string data_dir = "data";

  dsp::MelConfig mel;
  translator::TrainConfig train;
  eval::DetectorSettings detector;

  // eval
  std::string out_dir = "runs/default";
  std::size_t jobs = 1;
  int griffin_lim_iterations = 60;
  double ridge_lambda = 1.0;

  synth::SynthConfig synth_config() const;
  translator::ModelConfig model_config() const;
  eval::LooConfig loo_config() const;
  std::filesystem::path manifest_path() const { return std::filesystem::path(data_dir) / "manifest.json"; }

  // BadConfig (module "cli") naming the offending key or value.
  void validate() const;
};

// Starts from the defaults; every key present overrides one field.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_json(const RunConfig& cfg);

}  // namespace smad::cli
