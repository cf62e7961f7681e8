#pragma once

#include "vbl/diff.hpp"
#include "vbl/kernels.hpp"
#include "vbl/model.hpp"
#include "vbl/params.hpp"

#include <vector>

namespace vbl {

// ------------------------------------------------------------ linear models

// Gaussian bumps exp(-(x - c_k)^2 / (2 w^2)) of a single input column.
struct BumpSpec {
  Vec centers;
  double width = 1.0;
};
// count centers evenly spaced on [min x, max x], width equal to the spacing.
BumpSpec bump_spec_from_range(const Mat& x, int count);
Mat bump_features(const Mat& x, const BumpSpec& spec);
DiffTensor bump_features(const DiffTensor& x, const BumpSpec& spec);

// Data fit, complexity penalty and constant of a Gaussian log marginal
// likelihood, summed over the columns of y.
struct LmlTerms {
  double data_fit = 0.0;    // -1/2 y^T C^{-1} y
  double complexity = 0.0;  // -1/2 log |C|
  double constant = 0.0;    // -N/2 log 2 pi
  double total() const { return data_fit + complexity + constant; }
};
// Terms for y ~ N(0, C), evaluated through a Cholesky factor of C.
LmlTerms gaussian_lml_terms(const Mat& c, const Mat& y);

struct BlrResult {
  Mat mean;       // W x P posterior mean
  Mat cov;        // W x W posterior covariance
  Mat pred_mean;  // N* x P
  Vec pred_var;   // N*, includes the noise
  LmlTerms lml;
};
// Exact Bayesian linear regression with prior w ~ N(0, alpha^2 I) and noise
// sigma^2.  The LML uses the Woodbury form, O(N W^2).
BlrResult blr_fit_predict_lml(const Mat& phi, const Mat& y, const Mat& phi_star, double alpha, double sigma);

// ------------------------------------------------------------------ exact GP

struct GpResult {
  Mat mean;  // N* x P
  Mat cov;   // N* x N*, latent (no noise)
  LmlTerms lml;
};
GpResult gp_predict_lml(const Mat& k_xx, const Mat& k_sx, const Mat& k_ss, const Mat& y, double noise_var);

// Differentiable log N(y; 0, K + noise_var I) summed over the columns of y.
struct DiffLml {
  DiffTensor total;
  DiffTensor data_fit;
  DiffTensor complexity;
};
DiffLml gp_lml(const DiffTensor& k_xx, const Mat& y, const DiffTensor& noise_var);

// Optimal signal variance for K = sf2 * k_hat with noise sf2 * sigma_hat2,
// and the resulting LML terms.
struct SignalVarianceOptimum {
  double sf2 = 0.0;
  double data_fit = 0.0;           // at the optimal sf2; equals -N P / 2
  double complexity_direct = 0.0;  // -1/2 log |sf2 (K_hat + sigma_hat2 I)|
  double complexity_split = 0.0;   // -N/2 log sf2 - 1/2 log |K_hat + sigma_hat2 I|
};
SignalVarianceOptimum signal_variance_optimum(const Mat& k_hat, const Mat& y, double sigma_hat2);

// --------------------------------------------------------------- sparse GP

// Per-point Gaussian marginals of f(x) under q(u_l) = N(m_l, L_l L_l^T) at
// inducing inputs whose prior covariance has Cholesky factor lzz.
struct SparseMarginals {
  DiffTensor mean;  // N x P
  DiffTensor var;   // N x P (latent)
};
SparseMarginals sparse_marginals(const DiffTensor& lzz, const DiffTensor& kxz, const DiffTensor& kxx_diag,
                                 const DiffTensor& m, const std::vector<DiffTensor>& ls);
// sum_l KL(N(m_l, L_l L_l^T) || N(0, lzz lzz^T)).
DiffTensor sparse_kl(const DiffTensor& lzz, const DiffTensor& m, const std::vector<DiffTensor>& ls);

// (N / batch) sum_n E_q log p(y_n | f_n) - sum_l KL, with an ARD SE kernel.
DiffTensor svgp_elbo(const KernelParams& kp, const DiffTensor& z, const DiffTensor& m,
                     const std::vector<DiffTensor>& ls, const DiffTensor& noise_var, const DiffTensor& xb,
                     const Mat& yb, double n_total);

struct CollapsedBound {
  double bound = 0.0;
  Mat m;  // M x P optimal variational mean
  Mat s;  // M x M optimal variational covariance (shared by the outputs)
};
CollapsedBound svgp_collapsed_bound(const Mat& kxx, const Mat& kxz, const Mat& kzz, const Mat& y, double noise_var);

// ------------------------------------------------------------ deep kernels

// Fully connected relu network with a linear output layer.  widths holds
// input, hidden and output sizes; a single width means the identity map.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore& store, const std::string& prefix, const std::vector<int>& widths, RngStream& rng);
  DiffTensor forward(const ParamView& p, const DiffTensor& x) const;
  int out_dim() const { return widths_.empty() ? 0 : widths_.back(); }

 private:
  std::vector<int> widths_;
  std::vector<int> w_ids_;
  std::vector<int> b_ids_;
};

// --------------------------------------------------------------- models

// Full-covariance Gaussian VI over the weights of a bump-feature linear model
// with fixed prior scale and noise.  The expected log-likelihood is exact.
class BlrViModel : public Model {
 public:
  BlrViModel(const BumpSpec& spec, int outputs, double alpha, double sigma, RngStream& rng);
  std::string kind() const override { return "blr"; }
  ElboEstimate elbo(const ParamView& p, const Mat& x, const Mat& y, double n_total, int samples,
                    RngStream& rng) override;
  Predictive predict(const ParamView& p, const Mat& x, int samples, RngStream& rng) override;
  BlrResult exact(const Mat& x, const Mat& y, const Mat& x_star) const;

 private:
  BumpSpec spec_;
  double alpha_;
  double sigma_;
  int mean_id_;
  int chol_id_;
};

// Exact GP regression trained on the LML; with a feature extractor it is the
// deep-kernel model k(g(x), g(x')).
class ExactGpModel : public Model {
 public:
  ExactGpModel(const Mat& x_train, const Mat& y_train, const std::vector<int>& extractor_widths, bool ard,
               double noise_std, RngStream& rng);
  std::string kind() const override { return has_extractor_ ? "dkl" : "gp"; }
  ElboEstimate elbo(const ParamView& p, const Mat& x, const Mat& y, double n_total, int samples,
                    RngStream& rng) override;
  Predictive predict(const ParamView& p, const Mat& x, int samples, RngStream& rng) override;

  DiffTensor features(const ParamView& p, const DiffTensor& x) const;
  KernelParams kernel(const ParamView& p) const;
  DiffTensor noise_var(const ParamView& p) const;
  DiffLml lml(const ParamView& p) const;

 private:
  Mat x_train_;
  Mat y_train_;
  Mlp extractor_;
  bool has_extractor_ = false;
  int log_sf_id_, log_ls_id_, log_noise_id_;
};

// Sparse variational GP with per-output full-covariance q(u).
class SvgpModel : public Model {
 public:
  SvgpModel(const Mat& z_init, int outputs, bool ard, double noise_std, RngStream& rng);
  std::string kind() const override { return "svgp"; }
  ElboEstimate elbo(const ParamView& p, const Mat& x, const Mat& y, double n_total, int samples,
                    RngStream& rng) override;
  Predictive predict(const ParamView& p, const Mat& x, int samples, RngStream& rng) override;

  KernelParams kernel(const ParamView& p) const;
  std::vector<DiffTensor> chol_factors(const ParamView& p) const;
  int z_id() const { return z_id_; }
  int m_id() const { return m_id_; }
  const std::vector<int>& chol_ids() const { return chol_ids_; }
  int noise_id() const { return log_noise_id_; }

 private:
  int z_id_, m_id_, log_sf_id_, log_ls_id_, log_noise_id_;
  std::vector<int> chol_ids_;
};

}  // namespace vbl
