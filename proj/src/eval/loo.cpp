#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "smad/common/error.hpp"
#include "smad/dsp/mel.hpp"
#include "smad/eval/eval.hpp"

namespace smad::eval {

namespace {

using detector::FeatureVector;
using translator::Example;

const char* const kSvmFitNames[] = {"in_sample", "held_out", "cross_fit"};

SvmSummary summarize_svm(const detector::OcSvmModel& m, const std::vector<FeatureVector>& xs) {
  constexpr double tol = 1e-6;
  SvmSummary s;
  s.n = xs.size();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (m.alpha[i] > tol) ++s.support;
    if (detector::decision(m, xs[i]) < -tol) ++s.outliers;
  }
  s.rho = m.rho;
  s.gamma = m.gamma;
  s.kkt_violation = m.kkt_violation;
  s.updates = m.updates;
  const double n = static_cast<double>(s.n);
  s.nu_property = static_cast<double>(s.outliers) / n <= m.nu + 1e-12 && m.nu <= static_cast<double>(s.support) / n + 1e-12;
  return s;
}

// Predicted spectrograms carry no level; borrow the mean of the subject's
// crop normalizations so the inverted waveform has a comparable level.
dsp::MelSpectrogram with_subject_level(dsp::MelSpectrogram pred, const Example& ex) {
  double lo = 0.0, hi = 0.0;
  for (const auto& t : ex.targets) {
    lo += t.norm.value().min;
    hi += t.norm.value().max;
  }
  const double n = static_cast<double>(ex.targets.size());
  pred.norm = dsp::Normalization{static_cast<float>(lo / n), static_cast<float>(hi / n)};
  return pred;
}

// One translator and one ridge reference trained on a subset of the round's
// healthy subjects.
struct Fold {
  std::vector<const Example*> train;
  translator::TranslatorModel model;
  RidgeOracle ridge;
  translator::TrainHistory history;
};

std::vector<FeatureVector> pooled_features(const std::vector<std::pair<const Example*, const Fold*>>& pairs,
                                           bool ridge, detector::FeatureMode mode, const dsp::MelConfig& mel) {
  std::vector<FeatureVector> xs;
  for (const auto& [ex, fold] : pairs) {
    const auto pred = ridge ? predict_ridge(fold->ridge, ex->input) : translator::predict(fold->model, ex->input, mel);
    auto f = crop_features(pred, *ex, mode);
    xs.insert(xs.end(), std::make_move_iterator(f.begin()), std::make_move_iterator(f.end()));
  }
  return xs;
}

// Element-wise mean of the folds' predictions.
dsp::MelSpectrogram ensemble(const std::vector<dsp::MelSpectrogram>& preds) {
  dsp::MelSpectrogram out = preds.front();
  if (preds.size() == 1) return out;
  auto v = out.values.flat();
  for (std::size_t i = 1; i < preds.size(); ++i) {
    const auto w = preds[i].values.flat();
    for (std::size_t p = 0; p < v.size(); ++p) v[p] += w[p];
  }
  const float inv = 1.0f / static_cast<float>(preds.size());
  for (float& x : v) x *= inv;
  return out;
}

RoundResult run_round(std::size_t index, const Example& held, const std::vector<const Example*>& others,
                      const std::vector<const Example*>& patients, const LooConfig& cfg) {
  RoundResult r;
  r.index = index;
  r.held_out = held.subject_id;

  // Which fold reconstructs each SVM training subject.
  std::vector<Fold> folds;
  std::vector<std::pair<const Example*, std::size_t>> svm_pairs;
  switch (cfg.detector.fit) {
    case SvmFit::InSample:
      folds.push_back({others, {}, {}, {}});
      for (const auto* e : others) svm_pairs.emplace_back(e, 0);
      break;
    case SvmFit::HeldOut: {
      const std::size_t k = cfg.detector.holdout_subjects;
      if (k == 0 || k >= others.size()) {
        throw Error("eval", ErrorCode::BadConfig, "held-out SVM split needs between 1 and " +
                                                      std::to_string(others.size() - 1) + " subjects");
      }
      const auto cut = others.end() - static_cast<std::ptrdiff_t>(k);
      folds.push_back({{others.begin(), cut}, {}, {}, {}});
      for (auto it = cut; it != others.end(); ++it) svm_pairs.emplace_back(*it, 0);
      break;
    }
    case SvmFit::CrossFit: {
      folds.resize(2);
      for (std::size_t i = 0; i < others.size(); ++i) folds[i % 2].train.push_back(others[i]);
      for (std::size_t i = 0; i < others.size(); ++i) svm_pairs.emplace_back(others[i], 1 - i % 2);
      break;
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  for (auto& f : folds) {
    f.model = translator::init_model(cfg.train.variant, cfg.model, cfg.train.seed);
    f.history = translator::train(f.model, f.train, cfg.train);
    f.ridge = fit_ridge(f.train, cfg.ridge_lambda);
    r.first_loss += f.history.loss.front() / static_cast<double>(folds.size());
    r.final_loss += f.history.loss.back() / static_cast<double>(folds.size());
  }
  r.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::vector<std::pair<const Example*, const Fold*>> pairs;
  for (const auto& [e, f] : svm_pairs) pairs.emplace_back(e, &folds[f]);
  const auto xs = pooled_features(pairs, false, cfg.detector.features, cfg.mel);
  const auto svm = detector::fit_ocsvm(xs, cfg.detector.svm);
  r.svm = summarize_svm(svm, xs);
  const auto rxs = pooled_features(pairs, true, cfg.detector.features, cfg.mel);
  const auto ridge_svm = detector::fit_ocsvm(rxs, cfg.detector.svm);
  r.ridge_svm = summarize_svm(ridge_svm, rxs);

  std::vector<const Example*> tested{&held};
  tested.insert(tested.end(), patients.begin(), patients.end());
  for (const auto* ex : tested) {
    std::vector<dsp::MelSpectrogram> preds, rpreds;
    for (const auto& f : folds) {
      preds.push_back(translator::predict(f.model, ex->input, cfg.mel));
      rpreds.push_back(predict_ridge(f.ridge, ex->input));
    }
    const auto rpred = ensemble(rpreds);
    SubjectResult s = evaluate_subject(ensemble(preds), *ex, cfg);
    for (const auto& t : ex->targets) s.ridge_corr2d += metrics::corr2d(rpred.values, t.values);
    s.ridge_corr2d /= static_cast<double>(ex->targets.size());

    // Each fold's own reconstruction is scored, matching how the SVM's
    // training points were produced.
    std::vector<FeatureVector> f, rf;
    for (std::size_t i = 0; i < folds.size(); ++i) {
      auto a = crop_features(preds[i], *ex, cfg.detector.features);
      auto b = crop_features(rpreds[i], *ex, cfg.detector.features);
      f.insert(f.end(), a.begin(), a.end());
      rf.insert(rf.end(), b.begin(), b.end());
    }
    s.anomaly = detector::score_subject(svm, f, cfg.detector.aggregation);
    s.ridge_anomaly = detector::score_subject(ridge_svm, rf, cfg.detector.aggregation);
    r.subjects.push_back(std::move(s));
  }
  return r;
}

}  // namespace

std::vector<FeatureVector> crop_features(const dsp::MelSpectrogram& pred, const translator::Example& ex,
                                         detector::FeatureMode mode) {
  std::vector<FeatureVector> out;
  out.reserve(ex.targets.size());
  for (const auto& t : ex.targets) {
    out.push_back(mode == detector::FeatureMode::Reconstruction ? detector::extract_features(pred, t)
                                                                : detector::raw_features(pred));
  }
  return out;
}

SubjectResult evaluate_subject(const dsp::MelSpectrogram& pred, const translator::Example& ex,
                               const LooConfig& cfg) {
  if (ex.targets.empty() || ex.crops.size() != ex.targets.size()) {
    throw Error("eval", ErrorCode::BadConfig, "subject " + ex.subject_id + " has no usable crops");
  }
  SubjectResult s;
  s.subject_id = ex.subject_id;
  s.label = ex.label;
  const auto wave = dsp::invert_mel(with_subject_level(pred, ex), cfg.griffin_lim_iterations, cfg.train.seed);
  const metrics::PesqLiteConfig pesq_cfg{.mel = cfg.mel};
  std::vector<double> corr;
  for (std::size_t k = 0; k < ex.targets.size(); ++k) {
    metrics::MetricReport m;
    m.corr2d = metrics::corr2d(pred.values, ex.targets[k].values);
    m.lsd_db = detector::extract_features(pred, ex.targets[k])[1];
    m.pesq_lite = metrics::pesq_lite(ex.crops[k], wave, pesq_cfg);
    corr.push_back(m.corr2d);
    s.corr2d += m.corr2d;
    s.pesq_lite += m.pesq_lite;
    s.crops.push_back(m);
  }
  const double n = static_cast<double>(s.crops.size());
  s.corr2d /= n;
  s.pesq_lite /= n;
  s.threshold = detector::threshold_score(corr, cfg.detector.aggregation);
  return s;
}

const char* svm_fit_name(SvmFit f) { return kSvmFitNames[static_cast<int>(f)]; }

SvmFit parse_svm_fit(std::string_view s) {
  if (s == "in_sample") return SvmFit::InSample;
  if (s == "held_out") return SvmFit::HeldOut;
  if (s == "cross_fit") return SvmFit::CrossFit;
  throw Error("eval", ErrorCode::BadConfig, "unknown SVM fit mode '" + std::string(s) + "'");
}

EvaluationReport loo_protocol(const synth::Manifest& manifest, const LooConfig& cfg, const RoundCallback& on_round) {
  if (manifest.count(synth::Label::Healthy) < 3 || manifest.count(synth::Label::Patient) < 1) {
    throw Error("eval", ErrorCode::BadManifest,
                "leave-one-out needs at least 3 healthy subjects and 1 patient, got " +
                    std::to_string(manifest.count(synth::Label::Healthy)) + " and " +
                    std::to_string(manifest.count(synth::Label::Patient)));
  }
  return loo_protocol(translator::load_examples(manifest, cfg.train.crops, cfg.mel), cfg, on_round);
}

EvaluationReport loo_protocol(const std::vector<Example>& examples, const LooConfig& cfg,
                              const RoundCallback& on_round) {
  // Subject order never depends on input order.
  std::vector<const Example*> healthy, patients;
  for (const auto& e : examples) (e.label == synth::Label::Healthy ? healthy : patients).push_back(&e);
  const auto by_id = [](const Example* a, const Example* b) { return a->subject_id < b->subject_id; };
  std::sort(healthy.begin(), healthy.end(), by_id);
  std::sort(patients.begin(), patients.end(), by_id);
  if (healthy.size() < 3 || patients.empty()) {
    throw Error("eval", ErrorCode::BadManifest,
                "leave-one-out needs at least 3 healthy subjects and 1 patient, got " +
                    std::to_string(healthy.size()) + " and " + std::to_string(patients.size()));
  }
  std::vector<const Example*> all = healthy;
  all.insert(all.end(), patients.begin(), patients.end());
  std::sort(all.begin(), all.end(), by_id);
  const auto dup = std::adjacent_find(all.begin(), all.end(),
                                      [](auto* a, auto* b) { return a->subject_id == b->subject_id; });
  if (dup != all.end()) throw Error("eval", ErrorCode::BadManifest, "duplicate subject id " + (*dup)->subject_id);

  EvaluationReport report;
  report.variant = translator::variant_name(cfg.train.variant);
  report.config = config_json(cfg);
  report.rounds.resize(healthy.size());

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  std::size_t failed_round = 0;
  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= healthy.size()) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      try {
        std::vector<const Example*> others;
        for (std::size_t j = 0; j < healthy.size(); ++j) {
          if (j != i) others.push_back(healthy[j]);
        }
        auto r = run_round(i, *healthy[i], others, patients, cfg);
        std::lock_guard lock(mu);
        report.rounds[i] = std::move(r);
        if (on_round) on_round(report.rounds[i]);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure || i < failed_round) {
          failure = std::current_exception();
          failed_round = i;
        }
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(cfg.jobs, 1, healthy.size());
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const Error& e) {
      throw Error("eval", ErrorCode::RoundFailure,
                  "round " + std::to_string(failed_round) + " (held out " + healthy[failed_round]->subject_id +
                      "): " + e.qualified_name() + ": " + e.what());
    }
  }
  summarize(report);
  return report;
}

}  // namespace smad::eval
