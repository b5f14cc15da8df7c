#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "doctest.h"
#include "smad/common/error.hpp"
#include "smad/detector/detector.hpp"
#include "qp_oracle.hpp"
#include "support.hpp"

using namespace smad;
using namespace smad::detector;
using testing::brute_force_objective;
using testing::random_points;

namespace {

dsp::MelSpectrogram random_spectrogram(std::uint64_t seed) {
  dsp::MelSpectrogram s;
  s.values = Matrix<float>(64, 64);
  const auto v = testing::random_vector(64 * 64, seed, 0.0, 1.0);
  for (std::size_t i = 0; i < v.size(); ++i) s.values.flat()[i] = static_cast<float>(v[i]);
  s.norm = dsp::Normalization{-12.0f, 3.0f};
  return s;
}

void check_kkt(const OcSvmModel& m) {
  const double c = 1.0 / (m.nu * static_cast<double>(m.points.size()));
  double sum = 0.0;
  for (double a : m.alpha) {
    sum += a;
    CHECK(a >= 0.0);
    CHECK(a <= c + 1e-12);
  }
  CHECK(std::abs(sum - 1.0) <= 1e-8);
  for (std::size_t i = 0; i < m.points.size(); ++i) {
    const double f = decision_standardized(m, m.points[i]);
    if (m.alpha[i] <= 1e-12) {
      CHECK(f >= -1e-5);
    } else if (m.alpha[i] >= c - 1e-12) {
      CHECK(f <= 1e-5);
    } else {
      CHECK(std::abs(f) <= 1e-5);
    }
  }
}

}  // namespace

TEST_CASE("features of a perfect and an inverted prediction") {
  const auto t = random_spectrogram(1);
  const auto f = extract_features(t, t);
  REQUIRE(f.size() == kFeatureDim);
  CHECK(f[0] == 1.0);
  CHECK(f[1] == 0.0);
  for (std::size_t i = 2; i < kFeatureDim; ++i) CHECK(f[i] == 0.0);
  auto inv = t;
  for (float& v : inv.values.flat()) v = 1.0f - v;
  CHECK(extract_features(inv, t)[0] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("band-group errors match a loop over the 8x8-row partition") {
  const auto p = random_spectrogram(2);
  const auto t = random_spectrogram(3);
  const auto f = extract_features(p, t);
  for (std::size_t g = 0; g < 8; ++g) {
    std::vector<double> e;
    for (std::size_t r = 8 * g; r < 8 * g + 8; ++r) {
      for (std::size_t c = 0; c < 64; ++c) e.push_back(double(p.values(r, c)) - double(t.values(r, c)));
    }
    double mae = 0.0, mean = 0.0;
    for (double x : e) {
      mae += std::abs(x);
      mean += x;
    }
    mae /= double(e.size());
    mean /= double(e.size());
    double var = 0.0;
    for (double x : e) var += (x - mean) * (x - mean);
    CHECK(std::abs(f[2 + 2 * g] - mae) <= 1e-12);
    CHECK(std::abs(f[3 + 2 * g] - std::sqrt(var / double(e.size()))) <= 1e-12);
  }
}

TEST_CASE("standardization drops constant dimensions") {
  std::vector<FeatureVector> xs{{1.0, 5.0, 2.0}, {3.0, 5.0, 4.0}, {5.0, 5.0, 9.0}};
  const auto s = Standardization::fit(xs);
  CHECK(s.kept == std::vector<std::size_t>{0, 2});
  const auto z = s.apply({3.0, 5.0, 5.0});
  CHECK(z[0] == doctest::Approx(0.0));
  CHECK_THROWS_AS(s.apply({1.0, 2.0}), Error);
}

TEST_CASE("nu = 1 forces uniform alpha") {
  const auto m = fit_ocsvm(random_points(7, 3, 4), {.nu = 1.0});
  for (double a : m.alpha) CHECK(a == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("two identical points share alpha") {
  const auto m = fit_ocsvm({{0.3, -1.0}, {0.3, -1.0}}, {.nu = 0.5});
  CHECK(m.alpha[0] == doctest::Approx(0.5));
  CHECK(m.alpha[1] == doctest::Approx(0.5));
}

TEST_CASE("SMO matches a brute-force QP on small instances") {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + trial % 7;
    const double nu = 0.2 + 0.04 * static_cast<double>(trial);
    const auto m = fit_ocsvm(random_points(n, 2 + trial % 3, 100 + trial), {.nu = nu});
    CHECK(std::abs(dual_objective(m) - brute_force_objective(m)) <= 1e-5);
    CHECK(m.kkt_violation <= 1e-6);
    check_kkt(m);
  }
}

TEST_CASE("n=5, nu=0.4 fixture") {
  const auto m = fit_ocsvm(random_points(5, 2, 55), {.nu = 0.4});
  CHECK(std::abs(dual_objective(m) - brute_force_objective(m)) <= 1e-5);
}

TEST_CASE("nu-property and margin vectors on a larger fit") {
  const auto xs = random_points(60, 5, 9);
  for (double nu : {0.05, 0.1, 0.3, 0.6}) {
    const auto m = fit_ocsvm(xs, {.nu = nu});
    check_kkt(m);
    std::size_t outliers = 0, svs = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (decision(m, xs[i]) < -1e-6) ++outliers;
      if (m.alpha[i] > 1e-6) ++svs;
    }
    CHECK(double(outliers) / 60.0 <= nu + 1e-12);
    CHECK(nu <= double(svs) / 60.0 + 1e-12);
  }
}

TEST_CASE("decision basics") {
  const auto xs = random_points(30, 4, 10);
  const auto m = fit_ocsvm(xs);
  CHECK(m.kernel_value(m.points[0], m.points[0]) == 1.0);
  CHECK(m.rho > 0.0);
  FeatureVector far(4);
  for (std::size_t k = 0; k < 4; ++k) far[k] = m.stats.mean[k] + 10.0 * m.stats.std[k];
  CHECK(decision(m, far) < 0.0);
  CHECK(decision(m, far) == doctest::Approx(-m.rho).epsilon(1e-6));
  CHECK_THROWS_AS(decision(m, FeatureVector(3)), Error);
}

TEST_CASE("decision is invariant to training order") {
  auto xs = random_points(40, 6, 11);
  const auto m1 = fit_ocsvm(xs);
  std::mt19937_64 rng(3);
  std::shuffle(xs.begin(), xs.end(), rng);
  const auto m2 = fit_ocsvm(xs);
  for (const auto& p : random_points(20, 6, 12)) CHECK(std::abs(decision(m1, p) - decision(m2, p)) <= 1e-10);
}

TEST_CASE("fit errors") {
  try {
    fit_ocsvm({{1.0}});
    FAIL("expected TooFewSamples");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewSamples);
  }
  CHECK_THROWS_AS(fit_ocsvm(random_points(5, 2, 1), {.nu = 0.0}), Error);
  try {
    fit_ocsvm(random_points(50, 3, 2), {.nu = 0.1, .gamma = std::nullopt, .kernel = KernelType::Rbf,
                                        .tol = 1e-6, .max_updates = 1});
    FAIL("expected ConvergenceError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConvergenceError);
  }
}

TEST_CASE("subject scores use the median") {
  CHECK(aggregate({0.7}, Aggregation::Median) == 0.7);
  CHECK(aggregate({5.0, 1.0, 3.0}, Aggregation::Median) == 3.0);
  std::vector<double> crops{0.1, 0.2, 0.15, 0.12, 0.18, 0.11, 0.19, 0.14, 0.16, 50.0};
  const double med = aggregate(crops, Aggregation::Median);
  CHECK(med == doctest::Approx(0.155));
  CHECK(aggregate(crops, Aggregation::Mean) > 5.0);
  CHECK_THROWS_AS(aggregate({}, Aggregation::Median), Error);
  CHECK(threshold_score({0.9, 0.8, 0.7}) == doctest::Approx(-0.8));
}

TEST_CASE("model file round trip") {
  const auto m = fit_ocsvm(random_points(25, 4, 13), {.nu = 0.2});
  const auto path = std::filesystem::temp_directory_path() / "smad_test_model.anck";
  save_model(m, path);
  const auto back = load_model(path);
  CHECK(back == m);
  CHECK(back.updates == m.updates);
  auto bytes = encode_model(m);
  CHECK(encode_model(decode_model(bytes)) == bytes);
  bytes[0] = 'X';
  try {
    decode_model(bytes);
    FAIL("expected BadCheckpoint");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadCheckpoint);
  }
  CHECK_THROWS_AS(decode_model(encode_model(m).substr(0, 40)), Error);
  std::filesystem::remove(path);
}
