#include "vbl/model.hpp"

#include "vbl/dist.hpp"

#include <cmath>
#include <limits>

namespace vbl {

Mat Predictive::average_mean() const {
  if (mean.empty()) throw NumericError("Predictive: no samples");
  Mat out = Mat::Zero(mean[0].rows(), mean[0].cols());
  for (const Mat& m : mean) out += m;
  return out / static_cast<double>(mean.size());
}

double Predictive::test_loglik(const Mat& y) const {
  if (mean.empty()) throw NumericError("Predictive: no samples");
  const Index n = y.rows();
  const double s = static_cast<double>(mean.size());
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    std::vector<double> lp(mean.size());
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < mean.size(); ++k) {
      double acc = 0.0;
      for (Index j = 0; j < y.cols(); ++j) {
        const double v = var[k](i, j);
        const double r = y(i, j) - mean[k](i, j);
        acc += -0.5 * (kLog2Pi + std::log(v) + r * r / v);
      }
      lp[k] = acc;
      best = std::max(best, acc);
    }
    double se = 0.0;
    for (double v : lp) se += std::exp(v - best);
    total += best + std::log(se / s);
  }
  return total / static_cast<double>(n);
}

double Predictive::rmse(const Mat& y) const {
  Mat m = average_mean();
  return std::sqrt((m - y).array().square().mean());
}

DiffTensor expected_gaussian_loglik(const Mat& y, const DiffTensor& mean, const DiffTensor& var,
                                    const DiffTensor& noise_var) {
  if (mean.rows() != y.rows() || mean.cols() != y.cols() || var.rows() != y.rows())
    throw NumericError("expected_gaussian_loglik: shape mismatch");
  DiffTensor sq = sum_squares(DiffTensor(y) - mean);
  DiffTensor v = var.cols() == y.cols() ? sum(var) : scale(sum(var), static_cast<double>(y.cols()));
  const double count = static_cast<double>(y.size());
  DiffTensor quad = scale_by(sq + v, scale(reciprocal(noise_var), -0.5));
  return add_scalar(quad - scale(log(noise_var), 0.5 * count), -0.5 * count * kLog2Pi);
}

DiffTensor gaussian_loglik(const Mat& y, const DiffTensor& mean, const DiffTensor& noise_var) {
  if (mean.rows() != y.rows() || mean.cols() != y.cols()) throw NumericError("gaussian_loglik: shape mismatch");
  const double count = static_cast<double>(y.size());
  DiffTensor quad = scale_by(sum_squares(DiffTensor(y) - mean), scale(reciprocal(noise_var), -0.5));
  return add_scalar(quad - scale(log(noise_var), 0.5 * count), -0.5 * count * kLog2Pi);
}

}  // namespace vbl
