#pragma once

#include "vbl/diff.hpp"
#include "vbl/params.hpp"
#include "vbl/rng.hpp"

#include <string>
#include <vector>

namespace vbl {

// One stochastic estimate of the training objective, averaged over the
// posterior samples drawn for it.  The trainer maximizes
//   loglik + anneal * increment + surrogate,
// where increment collects the log p - log q terms (minus the KL) and
// surrogate carries any score-function terms whose value is zero.
struct ElboEstimate {
  DiffTensor loglik = DiffTensor::scalar(0.0);     // (N / batch) * expected log-likelihood
  DiffTensor increment = DiffTensor::scalar(0.0);  // log p - log q, summed over layers
  DiffTensor surrogate = DiffTensor::scalar(0.0);

  double value() const { return loglik.item() + increment.item(); }
};

// Per-sample Gaussian predictive marginals (N x P each); var includes the
// likelihood noise.
struct Predictive {
  std::vector<Mat> mean;
  std::vector<Mat> var;

  Mat average_mean() const;
  // Mean over points of log (1/S) sum_s N(y_n; mean_s, var_s).
  double test_loglik(const Mat& y) const;
  double rmse(const Mat& y) const;
};

class Model {
 public:
  virtual ~Model() = default;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  virtual std::string kind() const = 0;
  virtual ElboEstimate elbo(const ParamView& p, const Mat& x, const Mat& y, double n_total, int samples,
                            RngStream& rng) = 0;
  virtual Predictive predict(const ParamView& p, const Mat& x, int samples, RngStream& rng) = 0;
  // Sticking-the-landing toggle; models without eligible parameters ignore it.
  virtual void set_stl(bool on) { stl_ = on; }
  bool stl() const { return stl_; }

 protected:
  ParamStore params_;
  bool stl_ = false;
};

// sum_{n,p} E_{f ~ N(mean, var)} log N(y_np; f, noise_var).  var is N x P or
// N x 1 (shared across outputs); noise_var is 1 x 1.
DiffTensor expected_gaussian_loglik(const Mat& y, const DiffTensor& mean, const DiffTensor& var,
                                    const DiffTensor& noise_var);

// sum log N(y; mean, noise_var) with a 1 x 1 noise variance.
DiffTensor gaussian_loglik(const Mat& y, const DiffTensor& mean, const DiffTensor& noise_var);

}  // namespace vbl
