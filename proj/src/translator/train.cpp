#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "smad/common/anck.hpp"
#include "smad/common/binio.hpp"
#include "smad/common/error.hpp"
#include "smad/common/rng.hpp"
#include "smad/dsp/io.hpp"
#include "smad/grad/adam.hpp"
#include "smad/grad/ops.hpp"
#include "smad/translator/translator.hpp"

namespace smad::translator {

using nlohmann::json;

Example make_example(const synth::MotionFieldSequence& motion, const dsp::Waveform& audio, synth::Label label,
                     std::size_t crops, const dsp::MelConfig& mel) {
  if (crops == 0) throw Error("translator", ErrorCode::BadConfig, "crops must be at least 1");
  Example ex;
  ex.subject_id = motion.subject_id;
  ex.label = label;
  ex.input = motion_tensor<float>(motion);
  // A crop covers exactly n_time hops.
  ex.crops = dsp::sliding_crops(audio, mel.n_time * mel.hop, crops);
  for (const auto& c : ex.crops) ex.targets.push_back(dsp::melspectrogram(c, mel));
  return ex;
}

std::vector<Example> load_examples(const synth::Manifest& manifest, std::size_t crops, const dsp::MelConfig& mel) {
  std::vector<Example> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    auto motion = synth::read_motion(manifest.root / e.motion_path);
    motion.subject_id = e.subject_id;
    auto audio = dsp::read_wav(manifest.root / e.audio_path);
    out.push_back(make_example(motion, audio, e.label, crops, mel));
  }
  return out;
}

TrainHistory train(TranslatorModel& model, const std::vector<const Example*>& examples, const TrainConfig& cfg,
                   const EpochCallback& on_epoch) {
  if (cfg.epochs == 0) throw Error("translator", ErrorCode::BadConfig, "epochs must be at least 1");
  if (cfg.batch == 0) throw Error("translator", ErrorCode::BadConfig, "batch must be at least 1");
  if (!(cfg.lr > 0.0)) throw Error("translator", ErrorCode::BadConfig, "learning rate must be positive");
  if (examples.empty()) throw Error("translator", ErrorCode::BadConfig, "no training examples");
  for (const auto* ex : examples) {
    if (ex->label != synth::Label::Healthy) {
      throw Error("translator", ErrorCode::LabelLeakError,
                  "patient subject " + ex->subject_id + " in training set; the translator sees healthy data only");
    }
    if (ex->targets.empty()) throw Error("translator", ErrorCode::BadConfig, "subject " + ex->subject_id + " has no crops");
  }

  // Targets as tensors, once.
  std::vector<std::vector<grad::Tensor<float>>> targets(examples.size());
  std::size_t total_crops = 0;
  for (std::size_t s = 0; s < examples.size(); ++s) {
    for (const auto& m : examples[s]->targets) {
      if (m.n_mels() != model.cfg.n_mels || m.n_time() != model.cfg.n_time) {
        throw Error("translator", ErrorCode::ShapeError, "target spectrogram shape does not match the model");
      }
      targets[s].emplace_back(grad::Shape{m.n_mels(), m.n_time()},
                              std::vector<float>(m.values.flat().begin(), m.values.flat().end()));
    }
    total_crops += targets[s].size();
  }

  std::vector<grad::Tensor<float>*> params;
  for (auto& p : model.params) params.push_back(&p.value);
  auto state = grad::AdamState<float>::for_params(params);
  const grad::AdamConfig adam{.lr = cfg.lr};

  Rng rng(derive_seed(cfg.seed, "train-order"));
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  TrainHistory history;
  std::size_t steps = 0;
  grad::Tape<float> tape;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t s : order) {
      const auto& subject_targets = targets[s];
      for (std::size_t start = 0; start < subject_targets.size(); start += cfg.batch) {
        const std::size_t end = std::min(start + cfg.batch, subject_targets.size());
        std::vector<grad::Var> vars;
        vars.reserve(params.size());
        for (auto* p : params) vars.push_back(tape.watch(*p, true));
        std::vector<const grad::Tensor<float>*> batch;
        for (std::size_t c = start; c < end; ++c) batch.push_back(&subject_targets[c]);
        grad::Var input = tape.watch(examples[s]->input, false);
        grad::Var loss = crop_loss(tape, model, vars, input, batch);
        epoch_loss += static_cast<double>(tape.value(loss)[0]) * static_cast<double>(batch.size());
        auto grads = tape.backward(loss);
        std::vector<const grad::Tensor<float>*> g;
        g.reserve(vars.size());
        for (auto v : vars) g.push_back(&grads[v]);
        grad::adam_step(params, g, state, adam);
        ++steps;
      }
    }
    epoch_loss /= static_cast<double>(total_crops);
    history.loss.push_back(epoch_loss);
    history.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }

  model.meta.epochs = cfg.epochs;
  model.meta.steps = steps;
  model.meta.lr = cfg.lr;
  model.meta.batch = cfg.batch;
  model.meta.crops = total_crops / examples.size();
  model.meta.final_loss = history.loss.back();
  model.meta.subjects.clear();
  for (const auto* ex : examples) model.meta.subjects.push_back(ex->subject_id);
  return history;
}

std::string encode_checkpoint(const TranslatorModel& model) {
  json h;
  h["kind"] = "translator";
  h["variant"] = variant_name(model.variant);
  h["dims"] = {model.cfg.dims.frames, model.cfg.dims.x, model.cfg.dims.y, model.cfg.dims.z};
  h["n_mels"] = model.cfg.n_mels;
  h["n_time"] = model.cfg.n_time;
  h["leaky_slope"] = model.cfg.leaky_slope;
  h["seed"] = model.seed;
  h["train"] = {{"epochs", model.meta.epochs}, {"steps", model.meta.steps},         {"lr", model.meta.lr},
                {"batch", model.meta.batch},   {"crops", model.meta.crops},         {"final_loss", model.meta.final_loss},
                {"subjects", model.meta.subjects}};
  anck::Container c;
  c.header = h.dump();
  for (const auto& p : model.params) {
    anck::Blob b;
    b.name = p.name;
    for (auto d : p.value.shape()) b.dims.push_back(static_cast<std::uint32_t>(d));
    b.data = p.value.storage();
    c.blobs.push_back(std::move(b));
  }
  return anck::encode(c);
}

TranslatorModel decode_checkpoint(std::string_view bytes) {
  const auto c = anck::decode(bytes, "translator");
  TranslatorModel m;
  try {
    const json h = json::parse(c.header);
    if (h.at("kind") != "translator") {
      throw Error("translator", ErrorCode::BadCheckpoint, "not a translator checkpoint");
    }
    ModelConfig cfg;
    const auto dims = h.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() != 4) throw Error("translator", ErrorCode::BadCheckpoint, "dims must have 4 entries");
    cfg.dims = {dims[0], dims[1], dims[2], dims[3]};
    cfg.n_mels = h.at("n_mels").get<std::size_t>();
    cfg.n_time = h.at("n_time").get<std::size_t>();
    cfg.leaky_slope = h.at("leaky_slope").get<float>();
    m = init_model(parse_variant(h.at("variant").get<std::string>()), cfg, h.at("seed").get<std::uint64_t>());
    const auto& t = h.at("train");
    m.meta.epochs = t.at("epochs").get<std::size_t>();
    m.meta.steps = t.at("steps").get<std::size_t>();
    m.meta.lr = t.at("lr").get<double>();
    m.meta.batch = t.at("batch").get<std::size_t>();
    m.meta.crops = t.at("crops").get<std::size_t>();
    m.meta.final_loss = t.at("final_loss").get<double>();
    m.meta.subjects = t.at("subjects").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error("translator", ErrorCode::BadCheckpoint, std::string("bad header: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::BadCheckpoint) throw;
    throw Error("translator", ErrorCode::BadCheckpoint, e.what());
  }
  if (c.blobs.size() != m.params.size()) {
    throw Error("translator", ErrorCode::BadCheckpoint, "tensor count does not match the architecture");
  }
  for (auto& p : m.params) {
    const auto& b = c.blob(p.name, "translator");
    grad::Shape shape(b.dims.begin(), b.dims.end());
    if (shape != p.value.shape()) {
      throw Error("translator", ErrorCode::BadCheckpoint,
                  "tensor '" + p.name + "' has shape " + grad::shape_string(shape) + ", expected " +
                      grad::shape_string(p.value.shape()));
    }
    p.value = grad::Tensor<float>(std::move(shape), b.data);
  }
  return m;
}

void save_checkpoint(const TranslatorModel& model, const std::filesystem::path& path) {
  binio::write_file(path, encode_checkpoint(model), "translator");
}

TranslatorModel load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(binio::read_file(path, "translator"));
}

}  // namespace smad::translator
