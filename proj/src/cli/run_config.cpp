#include "smad/cli/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "smad/common/error.hpp"

namespace smad::cli {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& msg) { throw Error("cli", ErrorCode::BadConfig, msg); }

// Reads the keys of one section; anything left unread is an unknown key.
class Section {
 public:
  Section(const json& root, const std::string& name) : name_(name) {
    if (!root.contains(name)) return;
    obj_ = &root.at(name);
    if (!obj_->is_object()) bad("section '" + name + "' must be an object");
  }

  template <typename T>
  void read(const std::string& key, T& field) {
    if (!obj_ || !obj_->contains(key)) return;
    seen_.insert(key);
    try {
      field = obj_->at(key).get<T>();
    } catch (const json::exception&) {
      bad("bad value for " + name_ + "." + key + ": " + obj_->at(key).dump());
    }
  }

  template <typename Parse, typename T>
  void read_enum(const std::string& key, T& field, Parse parse) {
    std::string s;
    if (!obj_ || !obj_->contains(key)) return;
    read(key, s);
    try {
      field = parse(s);
    } catch (const Error&) {
      bad("bad value for " + name_ + "." + key + ": '" + s + "'");
    }
  }

  void read_optional(const std::string& key, std::optional<double>& field) {
    if (!obj_ || !obj_->contains(key)) return;
    if (obj_->at(key).is_null()) {
      seen_.insert(key);
      field.reset();
      return;
    }
    double v = 0.0;
    read(key, v);
    field = v;
  }

  void finish() const {
    if (!obj_) return;
    for (const auto& [key, _] : obj_->items()) {
      if (!seen_.count(key)) bad("unknown key " + name_ + "." + key);
    }
  }

 private:
  std::string name_;
  const json* obj_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace

synth::SynthConfig RunConfig::synth_config() const {
  synth::SynthConfig s;
  s.dims = dims;
  s.n_healthy = healthy;
  s.n_patients = patients;
  s.severity = severity;
  s.seed = data_seed;
  s.audio.sample_rate = mel.sample_rate;
  return s;
}

translator::ModelConfig RunConfig::model_config() const {
  translator::ModelConfig m;
  m.dims = dims;
  m.n_mels = mel.n_mels;
  m.n_time = mel.n_time;
  return m;
}

eval::LooConfig RunConfig::loo_config() const {
  eval::LooConfig c;
  c.train = train;
  c.model = model_config();
  c.mel = mel;
  c.detector = detector;
  c.griffin_lim_iterations = griffin_lim_iterations;
  c.ridge_lambda = ridge_lambda;
  c.jobs = jobs;
  return c;
}

void RunConfig::validate() const {
  if (dims.frames == 0 || dims.x < 8 || dims.y < 8 || dims.z < 8) bad("data.dims must be [frames>=1, x>=8, y>=8, z>=8]");
  if (healthy == 0) bad("data.healthy must be at least 1");
  if (!(severity >= 0.0)) bad("data.severity must be non-negative");
  if (patients > 0 && !(severity > 0.0)) bad("data.severity must be positive when patients are requested");
  if (data_dir.empty()) bad("data.dir must not be empty");
  if (mel.sample_rate <= 0) bad("dsp.sample_rate must be positive");
  if (mel.n_fft == 0 || (mel.n_fft & (mel.n_fft - 1)) != 0) bad("dsp.n_fft must be a power of two");
  if (mel.hop == 0 || mel.hop > mel.n_fft) bad("dsp.hop must be in [1, n_fft]");
  if (mel.n_mels == 0 || mel.n_mels % 16 != 0) bad("dsp.n_mels must be a positive multiple of 16");
  if (mel.n_time == 0 || mel.n_time % 16 != 0) bad("dsp.n_time must be a positive multiple of 16");
  if (!(mel.fmin >= 0.0 && mel.fmin < mel.fmax && mel.fmax <= mel.sample_rate / 2.0)) {
    bad("dsp needs 0 <= fmin < fmax <= sample_rate / 2");
  }
  if (train.epochs == 0) bad("train.epochs must be at least 1");
  if (!(train.lr > 0.0)) bad("train.lr must be positive");
  if (train.batch == 0) bad("train.batch must be at least 1");
  if (train.crops == 0) bad("train.crops must be at least 1");
  if (!(detector.svm.nu > 0.0 && detector.svm.nu <= 1.0)) bad("detector.nu must be in (0, 1]");
  if (detector.svm.gamma && !(*detector.svm.gamma > 0.0)) bad("detector.gamma must be positive or null");
  if (jobs == 0) bad("eval.jobs must be at least 1");
  if (griffin_lim_iterations < 0) bad("eval.griffin_lim_iterations must be non-negative");
  if (!(ridge_lambda > 0.0)) bad("eval.ridge_lambda must be positive");
  if (out_dir.empty()) bad("eval.out_dir must not be empty");
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) bad("run config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "data" && key != "dsp" && key != "train" && key != "detector" && key != "eval") {
      bad("unknown section '" + key + "'");
    }
  }
  RunConfig c;

  Section data(j, "data");
  std::vector<std::size_t> dims{c.dims.frames, c.dims.x, c.dims.y, c.dims.z};
  data.read("dims", dims);
  if (dims.size() != 4) bad("data.dims must have four entries [frames, x, y, z]");
  c.dims = {dims[0], dims[1], dims[2], dims[3]};
  data.read("healthy", c.healthy);
  data.read("patients", c.patients);
  data.read("severity", c.severity);
  data.read("seed", c.data_seed);
  data.read("dir", c.data_dir);
  data.finish();

  Section dsp(j, "dsp");
  dsp.read("sample_rate", c.mel.sample_rate);
  dsp.read("n_fft", c.mel.n_fft);
  dsp.read("hop", c.mel.hop);
  dsp.read("n_mels", c.mel.n_mels);
  dsp.read("n_time", c.mel.n_time);
  dsp.read("fmin", c.mel.fmin);
  dsp.read("fmax", c.mel.fmax);
  dsp.finish();

  Section train(j, "train");
  train.read_enum("variant", c.train.variant, translator::parse_variant);
  train.read("epochs", c.train.epochs);
  train.read("lr", c.train.lr);
  train.read("batch", c.train.batch);
  train.read("crops", c.train.crops);
  train.read("seed", c.train.seed);
  train.finish();

  Section det(j, "detector");
  det.read("nu", c.detector.svm.nu);
  det.read_optional("gamma", c.detector.svm.gamma);
  det.read_enum("kernel", c.detector.svm.kernel, detector::parse_kernel);
  det.read_enum("features", c.detector.features, detector::parse_feature_mode);
  det.read_enum("aggregation", c.detector.aggregation, detector::parse_aggregation);
  det.read_enum("fit", c.detector.fit, eval::parse_svm_fit);
  det.read("holdout_subjects", c.detector.holdout_subjects);
  det.finish();

  Section ev(j, "eval");
  ev.read("out_dir", c.out_dir);
  ev.read("jobs", c.jobs);
  ev.read("griffin_lim_iterations", c.griffin_lim_iterations);
  ev.read("ridge_lambda", c.ridge_lambda);
  ev.finish();

  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cli", ErrorCode::IoError, "cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    bad(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

json run_config_json(const RunConfig& c) {
  json gamma = nullptr;
  if (c.detector.svm.gamma) gamma = *c.detector.svm.gamma;
  return {{"data",
           {{"dims", {c.dims.frames, c.dims.x, c.dims.y, c.dims.z}},
            {"healthy", c.healthy},
            {"patients", c.patients},
            {"severity", c.severity},
            {"seed", c.data_seed},
            {"dir", c.data_dir}}},
          {"dsp",
           {{"sample_rate", c.mel.sample_rate},
            {"n_fft", c.mel.n_fft},
            {"hop", c.mel.hop},
            {"n_mels", c.mel.n_mels},
            {"n_time", c.mel.n_time},
            {"fmin", c.mel.fmin},
            {"fmax", c.mel.fmax}}},
          {"train",
           {{"variant", translator::variant_name(c.train.variant)},
            {"epochs", c.train.epochs},
            {"lr", c.train.lr},
            {"batch", c.train.batch},
            {"crops", c.train.crops},
            {"seed", c.train.seed}}},
          {"detector",
           {{"nu", c.detector.svm.nu},
            {"gamma", gamma},
            {"kernel", detector::kernel_name(c.detector.svm.kernel)},
            {"features", detector::feature_mode_name(c.detector.features)},
            {"aggregation", detector::aggregation_name(c.detector.aggregation)},
            {"fit", eval::svm_fit_name(c.detector.fit)},
            {"holdout_subjects", c.detector.holdout_subjects}}},
          {"eval",
           {{"out_dir", c.out_dir},
            {"jobs", c.jobs},
            {"griffin_lim_iterations", c.griffin_lim_iterations},
            {"ridge_lambda", c.ridge_lambda}}}};
}

}  // namespace smad::cli
