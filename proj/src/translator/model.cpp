#include <cmath>

#include "smad/common/error.hpp"
#include "smad/common/rng.hpp"
#include "smad/grad/ops.hpp"
#include "smad/translator/translator.hpp"

namespace smad::translator {

namespace {

constexpr std::size_t kEncoderChannels[] = {3, 8, 16, 32};
constexpr std::size_t kDecoderChannels[] = {64, 32, 16, 8, 1};
constexpr std::size_t kEmbed = 32;
constexpr std::size_t kDecoderKernel = 4;

std::size_t decoder_seed_h(const ModelConfig& cfg) { return cfg.n_mels / 16; }
std::size_t decoder_seed_w(const ModelConfig& cfg) { return cfg.n_time / 16; }

void validate(const ModelConfig& cfg) {
  if (cfg.n_mels == 0 || cfg.n_time == 0 || cfg.n_mels % 16 != 0 || cfg.n_time % 16 != 0) {
    throw Error("translator", ErrorCode::BadConfig, "n_mels and n_time must be positive multiples of 16");
  }
  if (cfg.dims.frames == 0 || cfg.dims.x < 8 || cfg.dims.y < 8 || cfg.dims.z < 8) {
    throw Error("translator", ErrorCode::BadConfig, "motion grid must be at least 8 voxels per axis");
  }
}

grad::Tensor<float> uniform(grad::Shape shape, std::size_t fan_in, std::uint64_t seed, std::string_view name) {
  Rng rng(derive_seed(seed, name));
  const float bound = static_cast<float>(std::sqrt(1.0 / static_cast<double>(fan_in)));
  std::uniform_real_distribution<float> dist(-bound, bound);
  grad::Tensor<float> t(std::move(shape));
  for (float& v : t.flat()) v = dist(rng);
  return t;
}

}  // namespace

const char* variant_name(Variant v) { return v == Variant::Cnn ? "cnn" : "cnn_attention"; }

Variant parse_variant(std::string_view name) {
  if (name == "cnn") return Variant::Cnn;
  if (name == "cnn_attention") return Variant::CnnAttention;
  throw Error("translator", ErrorCode::BadConfig, "unknown variant '" + std::string(name) + "'");
}

const grad::Tensor<float>& TranslatorModel::param(std::string_view name) const {
  for (const auto& p : params) {
    if (p.name == name) return p.value;
  }
  throw Error("translator", ErrorCode::BadCheckpoint, "no parameter named '" + std::string(name) + "'");
}

std::size_t TranslatorModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

TranslatorModel init_model(Variant variant, const ModelConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  TranslatorModel m;
  m.variant = variant;
  m.cfg = cfg;
  m.seed = seed;
  auto add = [&](std::string name, grad::Shape shape, std::size_t fan_in) {
    m.params.push_back({name, uniform(std::move(shape), fan_in, seed, name)});
  };
  for (std::size_t l = 0; l < 3; ++l) {
    const std::size_t ci = kEncoderChannels[l], co = kEncoderChannels[l + 1];
    const std::string p = "enc" + std::to_string(l);
    add(p + ".w", {co, ci, 3, 3, 3}, ci * 27);
    add(p + ".b", {co}, ci * 27);
  }
  add("pos.embed", {cfg.dims.frames, kEmbed}, 1);
  if (variant == Variant::Cnn) {
    add("head.w", {kEmbed, kEmbed, 3, 1, 1}, kEmbed * 3);
    add("head.b", {kEmbed}, kEmbed * 3);
  } else {
    add("head.wq", {kEmbed, kEmbed}, kEmbed);
    add("head.wk", {kEmbed, kEmbed}, kEmbed);
    add("head.wv", {kEmbed, kEmbed}, kEmbed);
  }
  const std::size_t seed_size = kDecoderChannels[0] * decoder_seed_h(cfg) * decoder_seed_w(cfg);
  add("dense.w", {kEmbed, seed_size}, kEmbed);
  add("dense.b", {seed_size}, kEmbed);
  for (std::size_t l = 0; l < 4; ++l) {
    const std::size_t ci = kDecoderChannels[l], co = kDecoderChannels[l + 1];
    const std::string p = "dec" + std::to_string(l);
    add(p + ".w", {ci, co, kDecoderKernel, kDecoderKernel}, ci * kDecoderKernel * kDecoderKernel);
    add(p + ".b", {co}, ci * kDecoderKernel * kDecoderKernel);
  }
  return m;
}

template <typename T>
grad::Tensor<T> motion_tensor(const synth::MotionFieldSequence& m) {
  m.validate();
  const auto& d = m.dims;
  grad::Tensor<T> out({d.frames, 3, d.x, d.y, d.z});
  const std::size_t vox = d.voxels();
  for (std::size_t t = 0; t < d.frames; ++t) {
    const float* src = m.data.data() + t * vox * 3;
    T* dst = out.data() + t * vox * 3;
    for (std::size_t v = 0; v < vox; ++v) {
      for (std::size_t c = 0; c < 3; ++c) dst[c * vox + v] = static_cast<T>(src[v * 3 + c]);
    }
  }
  return out;
}

template <typename T>
grad::Var forward(grad::Tape<T>& tape, const TranslatorModel& model, const std::vector<grad::Var>& params,
                  grad::Var input) {
  using namespace grad;
  if (params.size() != model.params.size()) {
    throw Error("translator", ErrorCode::ShapeError, "parameter count mismatch");
  }
  const auto& d = model.cfg.dims;
  const Shape expect{d.frames, 3, d.x, d.y, d.z};
  if (tape.value(input).shape() != expect) {
    throw Error("translator", ErrorCode::ShapeError,
                "motion input " + shape_string(tape.value(input).shape()) + " does not match model " +
                    shape_string(expect));
  }
  const T slope = static_cast<T>(model.cfg.leaky_slope);
  std::size_t k = 0;
  auto next = [&] { return params[k++]; };

  // Encoder: per-frame 3D convs, then spatial mean.
  Var h = input;
  const Conv3dParams down{{2, 2, 2}, {1, 1, 1}};
  for (int l = 0; l < 3; ++l) {
    Var w = next();
    Var b = next();
    h = leaky_relu(tape, bias_add(tape, conv3d(tape, h, w, down), b), slope);
  }
  const Shape& hs = tape.value(h).shape();
  const std::size_t frames = hs[0];
  const std::size_t spatial = hs[2] * hs[3] * hs[4];
  h = reshape(tape, h, {frames * kEmbed, spatial});
  Var emb = reshape(tape, mean_axis(tape, h, 1), {frames, kEmbed});
  // Frame embeddings carry no time index of their own.
  emb = add(tape, emb, next());

  Var pooled;
  if (model.variant == Variant::Cnn) {
    Var w = next();
    Var b = next();
    Var seq = transpose(tape, emb);  // [C, T]
    Var x5 = reshape(tape, seq, {1, kEmbed, frames, 1, 1});
    Var c = leaky_relu(tape, bias_add(tape, conv3d(tape, x5, w, Conv3dParams{{1, 1, 1}, {1, 0, 0}}), b), slope);
    Var mixed = add(tape, seq, reshape(tape, c, {kEmbed, frames}));
    pooled = mean_axis(tape, mixed, 1);
  } else {
    Var wq = next();
    Var wk = next();
    Var wv = next();
    Var q = matmul(tape, emb, wq);
    Var kk = matmul(tape, emb, wk);
    Var v = matmul(tape, emb, wv);
    const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(kEmbed)));
    Var att = softmax(tape, scale(tape, matmul(tape, q, transpose(tape, kk)), inv_sqrt), 1);
    Var mixed = add(tape, emb, matmul(tape, att, v));
    pooled = mean_axis(tape, mixed, 0);
  }

  // Decoder: dense seed image, four 2x upsamplings.
  const std::size_t sh = decoder_seed_h(model.cfg), sw = decoder_seed_w(model.cfg);
  {
    Var w = next();
    Var b = next();
    Var z = matmul(tape, reshape(tape, pooled, {1, kEmbed}), w);
    h = leaky_relu(tape, bias_add(tape, z, b), slope);
    h = reshape(tape, h, {1, kDecoderChannels[0], sh, sw});
  }
  const ConvTranspose2dParams up{2, 1};
  for (int l = 0; l < 4; ++l) {
    Var w = next();
    Var b = next();
    h = bias_add(tape, conv2d_transpose(tape, h, w, up), b);
    h = l < 3 ? leaky_relu(tape, h, slope) : sigmoid(tape, h);
  }
  return reshape(tape, h, {model.cfg.n_mels, model.cfg.n_time});
}

template <typename T>
grad::Var crop_loss(grad::Tape<T>& tape, const TranslatorModel& model, const std::vector<grad::Var>& params,
                    grad::Var input, const std::vector<const grad::Tensor<T>*>& targets) {
  if (targets.empty()) throw Error("translator", ErrorCode::BadConfig, "no targets for loss");
  grad::Var pred = forward(tape, model, params, input);
  grad::Var total = grad::mse(tape, pred, tape.watch(*targets[0], false));
  for (std::size_t i = 1; i < targets.size(); ++i) {
    total = grad::add(tape, total, grad::mse(tape, pred, tape.watch(*targets[i], false)));
  }
  if (targets.size() == 1) return total;
  return grad::scale(tape, total, static_cast<T>(1.0 / static_cast<double>(targets.size())));
}

dsp::MelSpectrogram predict(const TranslatorModel& model, const grad::Tensor<float>& input,
                            const dsp::MelConfig& mel) {
  grad::Tape<float> tape;
  std::vector<grad::Var> vars;
  vars.reserve(model.params.size());
  for (const auto& p : model.params) vars.push_back(tape.watch(p.value, false));
  grad::Var out = forward(tape, model, vars, tape.watch(input, false));
  const auto& v = tape.value(out);
  dsp::MelSpectrogram s;
  s.config = mel;
  s.values = Matrix<float>(model.cfg.n_mels, model.cfg.n_time);
  std::copy(v.flat().begin(), v.flat().end(), s.values.flat().begin());
  return s;
}

dsp::MelSpectrogram predict(const TranslatorModel& model, const synth::MotionFieldSequence& motion,
                            const dsp::MelConfig& mel) {
  if (motion.dims != model.cfg.dims) {
    throw Error("translator", ErrorCode::ShapeError, "motion dims do not match the model");
  }
  return predict(model, motion_tensor<float>(motion), mel);
}

template grad::Tensor<float> motion_tensor<float>(const synth::MotionFieldSequence&);
template grad::Tensor<double> motion_tensor<double>(const synth::MotionFieldSequence&);
template grad::Var forward<float>(grad::Tape<float>&, const TranslatorModel&, const std::vector<grad::Var>&,
                                  grad::Var);
template grad::Var forward<double>(grad::Tape<double>&, const TranslatorModel&, const std::vector<grad::Var>&,
                                   grad::Var);
template grad::Var crop_loss<float>(grad::Tape<float>&, const TranslatorModel&, const std::vector<grad::Var>&,
                                    grad::Var, const std::vector<const grad::Tensor<float>*>&);
template grad::Var crop_loss<double>(grad::Tape<double>&, const TranslatorModel&, const std::vector<grad::Var>&,
                                     grad::Var, const std::vector<const grad::Tensor<double>*>&);

}  // namespace smad::translator
