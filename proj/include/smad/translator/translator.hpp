#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "smad/dsp/mel.hpp"
#include "smad/grad/tape.hpp"
#include "smad/synth/synth.hpp"

namespace smad::translator {

enum class Variant { Cnn, CnnAttention };

const char* variant_name(Variant v);
Variant parse_variant(std::string_view name);

struct ModelConfig {
  synth::MotionDims dims;
  std::size_t n_mels = 64;
  std::size_t n_time = 64;
  float leaky_slope = 0.1f;

  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 200;
  double lr = 1e-3;
  std::size_t batch = 4;  // crops of one subject per step
  std::size_t crops = 10;
  std::uint64_t seed = 7;
  Variant variant = Variant::Cnn;
};

struct TrainMeta {
  std::size_t epochs = 0;
  std::size_t steps = 0;
  double lr = 0.0;
  std::size_t batch = 0;
  std::size_t crops = 0;
  double final_loss = 0.0;
  std::vector<std::string> subjects;

  bool operator==(const TrainMeta&) const = default;
};

struct TrainHistory {
  std::vector<double> loss;     // mean crop MSE per epoch
  std::vector<double> seconds;  // wall clock per epoch
};

struct Param {
  std::string name;
  grad::Tensor<float> value;

  bool operator==(const Param&) const = default;
};

struct TranslatorModel {
  Variant variant = Variant::Cnn;
  ModelConfig cfg;
  std::uint64_t seed = 0;
  TrainMeta meta;
  std::vector<Param> params;

  const grad::Tensor<float>& param(std::string_view name) const;
  std::size_t parameter_count() const;
  bool operator==(const TranslatorModel&) const = default;
};

// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) per tensor. Each tensor draws
// from its own stream keyed by name, so shared layers of the two variants
// start identical.
TranslatorModel init_model(Variant variant, const ModelConfig& cfg, std::uint64_t seed);

// [t][x][y][z][c] -> [T, 3, X, Y, Z]
template <typename T>
grad::Tensor<T> motion_tensor(const synth::MotionFieldSequence& m);

// Records the forward pass; `params` follow model.params order. Output is
// [n_mels, n_time] in (0, 1).
template <typename T>
grad::Var forward(grad::Tape<T>& tape, const TranslatorModel& model, const std::vector<grad::Var>& params,
                  grad::Var input);

// Mean over targets of mse(forward(input), target).
template <typename T>
grad::Var crop_loss(grad::Tape<T>& tape, const TranslatorModel& model, const std::vector<grad::Var>& params,
                    grad::Var input, const std::vector<const grad::Tensor<T>*>& targets);

dsp::MelSpectrogram predict(const TranslatorModel& model, const synth::MotionFieldSequence& motion,
                            const dsp::MelConfig& mel = {});
dsp::MelSpectrogram predict(const TranslatorModel& model, const grad::Tensor<float>& input,
                            const dsp::MelConfig& mel = {});

// One subject's translator input plus its per-crop targets.
struct Example {
  std::string subject_id;
  synth::Label label = synth::Label::Healthy;
  grad::Tensor<float> input;
  std::vector<dsp::MelSpectrogram> targets;
  std::vector<dsp::Waveform> crops;
};

Example make_example(const synth::MotionFieldSequence& motion, const dsp::Waveform& audio, synth::Label label,
                     std::size_t crops, const dsp::MelConfig& mel = {});
std::vector<Example> load_examples(const synth::Manifest& manifest, std::size_t crops,
                                   const dsp::MelConfig& mel = {});

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

// Healthy examples only: a patient example throws LabelLeakError.
TrainHistory train(TranslatorModel& model, const std::vector<const Example*>& examples, const TrainConfig& cfg,
                   const EpochCallback& on_epoch = {});

void save_checkpoint(const TranslatorModel& model, const std::filesystem::path& path);
TranslatorModel load_checkpoint(const std::filesystem::path& path);
std::string encode_checkpoint(const TranslatorModel& model);
TranslatorModel decode_checkpoint(std::string_view bytes);

}  // namespace smad::translator
