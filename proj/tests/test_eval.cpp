#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "doctest.h"
#include "smad/common/error.hpp"
#include "smad/eval/eval.hpp"

using namespace smad;
using namespace smad::eval;
using synth::Label;

namespace {

constexpr Label H = Label::Healthy;
constexpr Label P = Label::Patient;

// Every threshold tried directly: call patient when score >= t.
std::vector<std::pair<double, double>> enumerate_roc(const std::vector<double>& s, const std::vector<Label>& l) {
  std::vector<double> ts(s.begin(), s.end());
  std::sort(ts.begin(), ts.end(), std::greater<>());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  const double np = static_cast<double>(std::count(l.begin(), l.end(), P));
  const double nn = static_cast<double>(l.size()) - np;
  std::vector<std::pair<double, double>> out{{0.0, 0.0}};
  for (double t : ts) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) (l[i] == P ? tp : fp) += 1;
    }
    out.emplace_back(fp / nn, tp / np);
  }
  return out;
}

void random_instance(std::mt19937_64& rng, std::vector<double>& s, std::vector<Label>& l) {
  std::uniform_int_distribution<int> size(2, 50);
  const int n = size(rng);
  std::uniform_int_distribution<int> level(0, 9);  // coarse levels force ties
  s.clear();
  l.clear();
  for (int i = 0; i < n; ++i) {
    l.push_back(i == 0 ? P : (i == 1 ? H : (rng() % 2 ? P : H)));
    s.push_back(level(rng) * 0.1 + (l.back() == P ? 0.15 : 0.0));
  }
  std::shuffle(l.begin(), l.end(), rng);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Tiny corpus: 8^3 grid, 16x16 spectrograms, 1 s crops.
struct Tiny {
  synth::SynthConfig synth;
  LooConfig loo;
  std::vector<translator::Example> examples;

  Tiny(std::size_t healthy, std::size_t patients) {
    synth.dims = {4, 8, 8, 8};
    synth.n_healthy = healthy;
    synth.n_patients = patients;
    loo.mel.n_mels = 16;
    loo.mel.n_time = 16;
    loo.mel.hop = 656;
    loo.model.dims = synth.dims;
    loo.model.n_mels = 16;
    loo.model.n_time = 16;
    loo.train.epochs = 2;
    loo.train.crops = 3;
    loo.griffin_lim_iterations = 4;
    for (std::size_t i = 0; i < healthy + patients; ++i) {
      const Label label = i < healthy ? H : P;
      const auto id = synth::subject_id_for(label, i < healthy ? i : i - healthy);
      const auto rec = synth::sample_subject(synth.seed, label, synth, id);
      auto motion = rec.motion;
      motion.subject_id = id;
      examples.push_back(translator::make_example(motion, rec.audio, label, loo.train.crops, loo.mel));
    }
  }
};

}  // namespace

TEST_CASE("perfect separation and total ties") {
  const std::vector<double> s{0.1, 0.2, 0.9, 0.8};
  const std::vector<Label> l{H, H, P, P};
  const auto c = roc(s, l);
  CHECK(std::any_of(c.points.begin(), c.points.end(), [](auto& p) { return p.fpr == 0.0 && p.tpr == 1.0; }));
  CHECK(auc(c) == 1.0);

  const auto tie = roc({0.5, 0.5, 0.5, 0.5, 0.5}, {H, P, H, P, P});
  REQUIRE(tie.points.size() == 2);
  CHECK(tie.points[1].fpr == 1.0);
  CHECK(tie.points[1].tpr == 1.0);
  CHECK(auc(tie) == 0.5);

  CHECK(auc(roc({0.9, 0.8, 0.1, 0.2}, l)) == 0.0);
}

TEST_CASE("six scores with one tie match the enumerated sweep") {
  const std::vector<double> s{0.3, 0.7, 0.5, 0.5, 0.9, 0.1};
  const std::vector<Label> l{H, P, H, P, P, H};
  const auto c = roc(s, l);
  const auto ref = enumerate_roc(s, l);
  REQUIRE(c.points.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(c.points[i].fpr == doctest::Approx(ref[i].first).epsilon(1e-15));
    CHECK(c.points[i].tpr == doctest::Approx(ref[i].second).epsilon(1e-15));
  }
  // Hand count: pairs (p, h) with p > h: 0.7 beats 3, 0.9 beats 3, 0.5 beats 2 and ties 1.
  CHECK(auc(c) == doctest::Approx(8.5 / 9.0).epsilon(1e-14));
}

TEST_CASE("trapezoid AUC equals the pair statistic on random instances") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s;
    std::vector<Label> l;
    random_instance(rng, s, l);
    const auto c = roc(s, l);
    CHECK(std::abs(auc(c) - mann_whitney(s, l)) <= 1e-12);
    CHECK(c.points.front().fpr == 0.0);
    CHECK(c.points.front().tpr == 0.0);
    CHECK(c.points.back().fpr == 1.0);
    CHECK(c.points.back().tpr == 1.0);
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      CHECK(c.points[i].fpr >= c.points[i - 1].fpr);
      CHECK(c.points[i].tpr >= c.points[i - 1].tpr);
    }
    const auto ref = enumerate_roc(s, l);
    REQUIRE(ref.size() == c.points.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(c.points[i].tpr - ref[i].second) <= 1e-15);
  }
}

TEST_CASE("ROC input errors") {
  try {
    roc({0.1, 0.2}, {H, H});
    FAIL("expected SingleClassError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingleClassError);
  }
  CHECK_THROWS_AS(roc({0.1}, {H, P}), Error);
  CHECK_THROWS_AS(mann_whitney({0.1, 0.2}, {P, P}), Error);
}

TEST_CASE("vertical averaging") {
  RocCurve a{{{0, 0, 0}, {0, 0.5, 0}, {0.5, 1, 0}, {1, 1, 0}}};
  RocCurve b{{{0, 0, 0}, {1, 1, 0}}};
  CHECK(tpr_at(a, 0.0) == 0.5);
  CHECK(tpr_at(a, 0.25) == doctest::Approx(0.75));
  CHECK(tpr_at(b, 0.3) == doctest::Approx(0.3));
  const auto m = vertical_average({a, b}, 5);
  REQUIRE(m.fpr.size() == 5);
  CHECK(m.fpr[2] == 0.5);
  CHECK(m.tpr_mean[2] == doctest::Approx(0.75));
  CHECK(m.tpr_std[2] == doctest::Approx(0.25));
  CHECK(m.tpr_mean[4] == 1.0);
  CHECK(m.tpr_std[4] == 0.0);
  CHECK_THROWS_AS(vertical_average({a}, 1), Error);
}

TEST_CASE("pooled accounting over rounds") {
  EvaluationReport r;
  r.variant = "cnn";
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < 12; ++i) {
    RoundResult round;
    round.index = 11 - i;  // out of order on purpose
    round.held_out = synth::subject_id_for(H, 11 - i);
    round.subjects.push_back({round.held_out, H, {}, 0.8, 3.5, u(rng), u(rng), u(rng), 0.7});
    for (std::size_t p = 0; p < 3; ++p) {
      round.subjects.push_back({synth::subject_id_for(P, p), P, {}, 0.7, 3.4, u(rng) + 0.3, u(rng), u(rng), 0.6});
    }
    r.rounds.push_back(round);
  }
  summarize(r);
  CHECK(r.healthy.n == 12);
  CHECK(r.patient.n == 36);
  CHECK(r.round_auc.size() == 12);
  CHECK(r.rounds.front().index == 0);
  CHECK(r.patient_mean_anomaly.size() == 3);
  CHECK(r.healthy.corr2d_mean == doctest::Approx(0.8));
  CHECK(r.healthy.corr2d_std == doctest::Approx(0.0));

  std::vector<double> s;
  std::vector<Label> l;
  for (const auto& round : r.rounds) {
    for (const auto& sub : round.subjects) {
      s.push_back(sub.anomaly);
      l.push_back(sub.label);
    }
  }
  CHECK(std::abs(r.pooled_auc - mann_whitney(s, l)) <= 1e-12);
  CHECK(r.mean_roc.fpr.size() == 101);
}

TEST_CASE("motion statistics are octant means") {
  grad::Tensor<float> t({2, 3, 4, 4, 4});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-1, 1);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
  const auto s = motion_statistics(t);
  REQUIRE(s.size() == 2 * 3 * 8);
  for (std::size_t f = 0; f < 2; ++f) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t o = 0; o < 8; ++o) {
        double sum = 0.0;
        for (std::size_t x = 0; x < 2; ++x) {
          for (std::size_t y = 0; y < 2; ++y) {
            for (std::size_t z = 0; z < 2; ++z) {
              const std::size_t gx = (o >> 2) * 2 + x, gy = ((o >> 1) & 1) * 2 + y, gz = (o & 1) * 2 + z;
              sum += t.data()[(((f * 3 + c) * 4 + gx) * 4 + gy) * 4 + gz];
            }
          }
        }
        CHECK(s[(f * 3 + c) * 8 + o] == doctest::Approx(sum / 8.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("heavy ridge penalty predicts the mean target") {
  Tiny tiny(4, 0);
  std::vector<const translator::Example*> xs;
  for (const auto& e : tiny.examples) xs.push_back(&e);
  const auto o = fit_ridge(xs, 1e12);
  const auto pred = predict_ridge(o, xs[0]->input);
  double n = 0.0;
  std::vector<double> mean(16 * 16, 0.0);
  for (const auto* e : xs) {
    for (const auto& t : e->targets) {
      for (std::size_t p = 0; p < mean.size(); ++p) mean[p] += t.values.flat()[p];
      n += 1.0;
    }
  }
  for (std::size_t p = 0; p < mean.size(); ++p) CHECK(pred.values.flat()[p] == doctest::Approx(mean[p] / n).epsilon(1e-5));
}

TEST_CASE("ridge reference learns the default corpus") {
  synth::SynthConfig cfg;
  std::vector<translator::Example> healthy, patients;
  for (std::size_t i = 0; i < cfg.n_healthy; ++i) {
    const auto id = synth::subject_id_for(H, i);
    auto rec = synth::sample_subject(cfg.seed, H, cfg, id);
    healthy.push_back(translator::make_example(rec.motion, rec.audio, H, 4));
  }
  for (std::size_t i = 0; i < cfg.n_patients; ++i) {
    const auto id = synth::subject_id_for(P, i);
    auto rec = synth::sample_subject(cfg.seed, P, cfg, id);
    patients.push_back(translator::make_example(rec.motion, rec.audio, P, 4));
  }
  const auto mean_corr = [](const RidgeOracle& o, const translator::Example& e) {
    const auto pred = predict_ridge(o, e.input);
    double c = 0.0;
    for (const auto& t : e.targets) c += metrics::corr2d(pred.values, t.values);
    return c / static_cast<double>(e.targets.size());
  };
  double h = 0.0, p = 0.0;
  for (std::size_t k = 0; k < healthy.size(); ++k) {
    std::vector<const translator::Example*> train;
    for (std::size_t j = 0; j < healthy.size(); ++j) {
      if (j != k) train.push_back(&healthy[j]);
    }
    const auto o = fit_ridge(train);
    h += mean_corr(o, healthy[k]);
    for (const auto& e : patients) p += mean_corr(o, e);
  }
  h /= static_cast<double>(healthy.size());
  p /= static_cast<double>(healthy.size() * patients.size());
  MESSAGE("ridge held-out corr2d: healthy " << h << ", patient " << p);
  CHECK(h >= 0.5);
  CHECK(h - p > 0.0);
}

TEST_CASE("manifests without both cohorts are rejected") {
  Tiny healthy_only(3, 0);
  try {
    loo_protocol(healthy_only.examples, healthy_only.loo);
    FAIL("expected BadManifest");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadManifest);
  }
  Tiny too_small(2, 1);
  CHECK_THROWS_AS(loo_protocol(too_small.examples, too_small.loo), Error);
}

TEST_CASE("leave-one-out on a tiny corpus") {
  Tiny tiny(4, 2);
  const auto report = loo_protocol(tiny.examples, tiny.loo);
  REQUIRE(report.rounds.size() == 4);
  CHECK(report.healthy.n == 4);
  CHECK(report.patient.n == 8);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& r = report.rounds[i];
    CHECK(r.index == i);
    CHECK(r.held_out == synth::subject_id_for(H, i));
    REQUIRE(r.subjects.size() == 3);
    CHECK(r.subjects[0].subject_id == r.held_out);
    CHECK(r.subjects[1].label == P);
    CHECK(r.svm.n == 3 * tiny.loo.train.crops);
    CHECK(r.svm.nu_property);
    CHECK(r.svm.kkt_violation <= 1e-6);
    for (const auto& s : r.subjects) {
      CHECK(s.crops.size() == tiny.loo.train.crops);
      CHECK(s.pesq_lite >= 1.0);
      CHECK(s.pesq_lite <= 4.5);
    }
  }

  SUBCASE("manifest order does not matter") {
    auto shuffled = tiny.examples;
    std::mt19937_64 rng(9);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto again = loo_protocol(shuffled, tiny.loo);
    CHECK(std::abs(again.pooled_auc - report.pooled_auc) <= 1e-10);
    CHECK(std::abs(again.healthy.corr2d_mean - report.healthy.corr2d_mean) <= 1e-10);
    CHECK(std::abs(again.patient.pesq_mean - report.patient.pesq_mean) <= 1e-10);
    CHECK(summary_csv({again}) == summary_csv({report}));
  }

  SUBCASE("parallel rounds give the same report") {
    auto cfg = tiny.loo;
    cfg.jobs = 3;
    const auto par = loo_protocol(tiny.examples, cfg);
    CHECK(scores_csv({par}) == scores_csv({report}));
  }

  SUBCASE("cross-fit splits training subjects into alternating halves") {
    auto cfg = tiny.loo;
    cfg.detector.fit = SvmFit::CrossFit;
    const auto r = loo_protocol(tiny.examples, cfg);
    // Every training subject reaches the SVM exactly once.
    CHECK(r.rounds[0].svm.n == 3 * tiny.loo.train.crops);
    CHECK(r.rounds[0].svm.nu_property);

    // Round 0 holds out H0; the folds are {H1, H3} and {H2}.
    std::map<std::string, const translator::Example*> by_id;
    for (const auto& e : tiny.examples) by_id[e.subject_id] = &e;
    auto fold = [&](std::vector<std::size_t> idx) {
      std::vector<const translator::Example*> set;
      for (auto i : idx) set.push_back(by_id.at(synth::subject_id_for(H, i)));
      auto m = translator::init_model(cfg.train.variant, cfg.model, cfg.train.seed);
      translator::train(m, set, cfg.train);
      return m;
    };
    const auto ma = fold({1, 3});
    const auto mb = fold({2});
    const auto& held = *by_id.at(synth::subject_id_for(H, 0));
    const auto pa = translator::predict(ma, held.input, cfg.mel);
    const auto pb = translator::predict(mb, held.input, cfg.mel);
    auto avg = pa;
    for (std::size_t p = 0; p < avg.values.size(); ++p) {
      avg.values.flat()[p] = (pa.values.flat()[p] + pb.values.flat()[p]) / 2.0f;
    }
    double corr = 0.0;
    for (const auto& t : held.targets) corr += metrics::corr2d(avg.values, t.values);
    corr /= static_cast<double>(held.targets.size());
    CHECK(std::abs(r.rounds[0].subjects[0].corr2d - corr) <= 1e-9);
    CHECK(parse_svm_fit(svm_fit_name(SvmFit::CrossFit)) == SvmFit::CrossFit);
  }

  SUBCASE("held-out SVM split") {
    auto cfg = tiny.loo;
    cfg.detector.fit = SvmFit::HeldOut;
    cfg.detector.holdout_subjects = 1;
    const auto r = loo_protocol(tiny.examples, cfg);
    CHECK(r.rounds[0].svm.n == tiny.loo.train.crops);
    cfg.detector.holdout_subjects = 3;
    try {
      loo_protocol(tiny.examples, cfg);
      FAIL("expected RoundFailure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::RoundFailure);
      CHECK(std::string(e.what()).find("round 0") != std::string::npos);
    }
  }

  SUBCASE("rendering is deterministic and survives a JSON round trip") {
    auto att_cfg = tiny.loo;
    att_cfg.train.variant = translator::Variant::CnnAttention;
    const auto att = loo_protocol(tiny.examples, att_cfg);
    const auto dir = std::filesystem::temp_directory_path() / "smad_test_render";
    std::filesystem::remove_all(dir);
    render_report({report, att}, dir / "a");
    const auto back = report_from_json(report_json(report));
    const auto back_att = report_from_json(nlohmann::json::parse(report_json(att).dump()));
    render_report({back, back_att}, dir / "b");
    for (const char* f : {"metrics.csv", "scores.csv", "summary.csv", "auc.csv", "roc.svg", "report.json"}) {
      CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "b" / f), f);
    }
    const auto summary = slurp(dir / "a" / "summary.csv");
    CHECK(std::count(summary.begin(), summary.end(), '\n') == 5);
    CHECK(summary.find("cnn_attention,patient,") != std::string::npos);
    const auto svg = slurp(dir / "a" / "roc.svg");
    CHECK(svg.find("id=\"chance-cnn\"") != std::string::npos);
    CHECK(svg.find("chance AUC = 0.5") != std::string::npos);
    std::filesystem::remove_all(dir);
  }
}
