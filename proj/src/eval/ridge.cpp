#include <Eigen/Dense>
#include <cmath>

#include "smad/common/error.hpp"
#include "smad/eval/eval.hpp"

namespace smad::eval {

std::vector<double> motion_statistics(const grad::Tensor<float>& input) {
  const auto& s = input.shape();
  if (s.size() != 5 || s[1] != 3) {
    throw Error("eval", ErrorCode::ShapeError, "expected [T, 3, X, Y, Z], got " + grad::shape_string(s));
  }
  const std::size_t frames = s[0], nx = s[2], ny = s[3], nz = s[4];
  // Per frame and channel, the mean displacement in each spatial octant.
  std::vector<double> out(frames * 3 * 8, 0.0);
  std::vector<double> count(8, 0.0);
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t y = 0; y < ny; ++y) {
      for (std::size_t z = 0; z < nz; ++z) count[(2 * x / nx) * 4 + (2 * y / ny) * 2 + 2 * z / nz] += 1.0;
    }
  }
  const float* p = input.data();
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t c = 0; c < 3; ++c) {
      double* dst = out.data() + (t * 3 + c) * 8;
      for (std::size_t x = 0; x < nx; ++x) {
        for (std::size_t y = 0; y < ny; ++y) {
          const std::size_t oct = (2 * x / nx) * 4 + (2 * y / ny) * 2;
          for (std::size_t z = 0; z < nz; ++z, ++p) dst[oct + 2 * z / nz] += *p;
        }
      }
      for (std::size_t o = 0; o < 8; ++o) dst[o] /= count[o];
    }
  }
  return out;
}

RidgeOracle fit_ridge(const std::vector<const translator::Example*>& examples, double lambda) {
  if (examples.empty()) throw Error("eval", ErrorCode::TooFewSamples, "ridge needs at least one subject");
  if (!(lambda >= 0.0)) throw Error("eval", ErrorCode::BadConfig, "ridge lambda must be non-negative");
  std::vector<std::vector<double>> stats;
  std::size_t rows_total = 0;
  for (const auto* ex : examples) {
    stats.push_back(motion_statistics(ex->input));
    rows_total += ex->targets.size();
  }
  RidgeOracle o;
  o.features = stats[0].size();
  o.rows = examples[0]->targets.at(0).n_mels();
  o.cols = examples[0]->targets.at(0).n_time();
  const std::size_t d = o.features, pixels = o.rows * o.cols;

  o.feature_mean.assign(d, 0.0);
  o.feature_std.assign(d, 0.0);
  for (const auto& s : stats) {
    for (std::size_t k = 0; k < d; ++k) o.feature_mean[k] += s[k];
  }
  for (double& m : o.feature_mean) m /= static_cast<double>(stats.size());
  for (const auto& s : stats) {
    for (std::size_t k = 0; k < d; ++k) o.feature_std[k] += (s[k] - o.feature_mean[k]) * (s[k] - o.feature_mean[k]);
  }
  for (double& v : o.feature_std) {
    v = std::sqrt(v / static_cast<double>(stats.size()));
    if (!(v > 0.0)) v = 1.0;
  }

  Eigen::MatrixXd x(rows_total, d + 1);
  Eigen::MatrixXd y(rows_total, pixels);
  std::size_t r = 0;
  for (std::size_t e = 0; e < examples.size(); ++e) {
    for (const auto& t : examples[e]->targets) {
      if (t.n_mels() != o.rows || t.n_time() != o.cols) {
        throw Error("eval", ErrorCode::ShapeError, "target spectrograms differ in shape");
      }
      for (std::size_t k = 0; k < d; ++k) x(r, k) = (stats[e][k] - o.feature_mean[k]) / o.feature_std[k];
      x(r, d) = 1.0;
      for (std::size_t p = 0; p < pixels; ++p) y(r, p) = t.values.flat()[p];
      ++r;
    }
  }
  Eigen::MatrixXd gram = x.transpose() * x;
  for (std::size_t k = 0; k < d; ++k) gram(k, k) += lambda;  // bias left unpenalized
  const Eigen::MatrixXd w = gram.ldlt().solve(x.transpose() * y);
  o.weights.assign(w.size(), 0.0);
  for (std::size_t i = 0; i <= d; ++i) {
    for (std::size_t p = 0; p < pixels; ++p) o.weights[i * pixels + p] = w(i, p);
  }
  return o;
}

dsp::MelSpectrogram predict_ridge(const RidgeOracle& o, const grad::Tensor<float>& input) {
  const auto s = motion_statistics(input);
  if (s.size() != o.features) throw Error("eval", ErrorCode::ShapeError, "motion dims do not match the ridge fit");
  const std::size_t pixels = o.rows * o.cols;
  std::vector<double> acc(o.weights.begin() + o.features * pixels, o.weights.end());
  for (std::size_t k = 0; k < o.features; ++k) {
    const double z = (s[k] - o.feature_mean[k]) / o.feature_std[k];
    const double* w = o.weights.data() + k * pixels;
    for (std::size_t p = 0; p < pixels; ++p) acc[p] += z * w[p];
  }
  dsp::MelSpectrogram m;
  m.values = Matrix<float>(o.rows, o.cols);
  for (std::size_t p = 0; p < pixels; ++p) m.values.flat()[p] = static_cast<float>(acc[p]);
  return m;
}

}  // namespace smad::eval
