#pragma once

#include "vbl/diff.hpp"
#include "vbl/kernels.hpp"
#include "vbl/model.hpp"
#include "vbl/params.hpp"
#include "vbl/rng.hpp"

#include <string>
#include <vector>

namespace vbl {

// ------------------------------------------------------------ weight priors

// Prior over a layer's weights, w ~ N(0, Sigma / fan_in) per output column:
// Standard has Sigma = fan_in I, Neal has Sigma = I, and Scale has
// Sigma = I / s with s ~ Gamma(shape, rate) and q(s) = Gamma(shape + alpha, rate + beta).
enum class PriorVariant { Standard, Neal, Scale };
PriorVariant parse_prior_variant(const std::string& name);
std::string prior_variant_name(PriorVariant v);

struct PriorSpec {
  PriorVariant variant = PriorVariant::Neal;
  double shape = 2.0;
  double rate = 2.0;
};

// One draw of the prior precision of every weight in a layer (1 x 1), with
// KL(q(s) || p(s)) for the Scale variant (zero otherwise).
struct PriorDraw {
  DiffTensor precision;
  DiffTensor kl = DiffTensor::scalar(0.0);
};
// alpha and beta are the non-negative offsets (1 x 1); ignored unless Scale.
PriorDraw draw_prior_precision(const PriorSpec& spec, double fan_in, const DiffTensor& alpha, const DiffTensor& beta,
                               RngStream& rng);

// Sum over entries of log N(w; 0, 1 / precision).
DiffTensor weight_log_prior(const DiffTensor& w, const DiffTensor& precision);

// Log-prior of w under one draw of q(s) and the gamma KL (Scale variant).
struct ScaleTerms {
  DiffTensor log_prior;
  DiffTensor kl;
};
ScaleTerms scale_prior_terms(const PriorSpec& spec, double fan_in, const DiffTensor& alpha, const DiffTensor& beta,
                             const DiffTensor& w, RngStream& rng);

// Per-layer prior parameters held in a ParamStore.  Scale offsets are stored
// through softplus so they stay non-negative.
class LayerPrior {
 public:
  LayerPrior() = default;
  LayerPrior(ParamStore& store, const std::string& prefix, const PriorSpec& spec, double fan_in);
  PriorDraw draw(const ParamView& p, RngStream& rng) const;
  double fan_in() const { return fan_in_; }

 private:
  PriorSpec spec_;
  double fan_in_ = 1.0;
  int alpha_id_ = -1;
  int beta_id_ = -1;
};

// ------------------------------------------------------- BNN building blocks

// [psi(h), 1]: relu (identity on the first layer) followed by a bias column.
DiffTensor bnn_features(const DiffTensor& h, bool first_layer);

// q(W | lower layers) for one layer given features at the inducing inputs:
// P = prior_precision I + phi^T diag(lambda) phi, mean = P^{-1} phi^T diag(lambda) V.
struct GiWeightPosterior {
  DiffTensor mean;       // fan_in x out
  DiffTensor chol_prec;  // lower Cholesky factor of P
};
GiWeightPosterior gi_weight_posterior(const DiffTensor& phi_u, const DiffTensor& lambda, const DiffTensor& v,
                                      const DiffTensor& prior_precision);

struct GiBnnLayerSample {
  DiffTensor w;
  DiffTensor increment;  // log p(W) - log q(W | .)
  DiffTensor u_next;     // phi_u W
};
GiBnnLayerSample gi_bnn_layer_sample(const DiffTensor& phi_u, const DiffTensor& lambda, const DiffTensor& v,
                                     const DiffTensor& prior_precision, RngStream& rng);

// Conditional Gram matrix psi(F) Sigma psi(F)^T / nu of the layer above when
// the weights have prior N(0, Sigma / nu) per column; nu = cols(psi_f).
Mat bnn_as_dgp_gram(const Mat& psi_f, const Mat& sigma);

// ------------------------------------------------------- DGP building blocks

// Global-inducing layer of a deep GP.  kuu (M x M) is the prior covariance of
// the inducing outputs, kfu (N x M) the cross covariance and kff_diag (N x 1)
// the prior variances at the propagated points.  q(U) has covariance
// (K^{-1} + diag(lambda))^{-1} and mean S diag(lambda) V.
struct GiGpLayerSample {
  DiffTensor u;          // M x P
  DiffTensor f_mean;     // N x P, per-point conditional p(F | U)
  DiffTensor f_var;      // N x 1
  DiffTensor increment;  // log p(U) - log q(U)
};
GiGpLayerSample gi_gp_layer_sample(const DiffTensor& kuu, const DiffTensor& kfu, const DiffTensor& kff_diag,
                                   const DiffTensor& v, const DiffTensor& lambda, RngStream& rng);

// Mean and covariance of q(U) as plain matrices.
struct GiGpPosterior {
  Mat mean;
  Mat cov;
};
GiGpPosterior gi_gp_posterior(const Mat& kuu, const Mat& v, const Vec& lambda);

// mean + sqrt(var) * xi per entry, var N x 1 shared across columns.
DiffTensor sample_pointwise(const DiffTensor& mean, const DiffTensor& var, RngStream& rng);

// Local-inducing (doubly stochastic) layer: per-point marginals of F given
// the layer input and the KL of q(u) against the prior at Z.
struct DsviLayerSample {
  DiffTensor f_mean;
  DiffTensor f_var;  // N x P
  DiffTensor kl;
};
DsviLayerSample dsvi_layer_marginals(const KernelParams& kp, const DiffTensor& z, const DiffTensor& m,
                                     const std::vector<DiffTensor>& ls, const DiffTensor& input);

// ------------------------------------------------------------------ models

struct BnnConfig {
  std::vector<int> widths;  // input, hidden..., output
  int inducing = 100;
  PriorSpec prior;
  double log_noise_var = -3.0;
  bool learn_noise = true;
};

// Mean-field Gaussian posterior over all weights with the local
// reparameterization for the activations and an analytic KL per layer.
class FacBnnModel : public Model {
 public:
  FacBnnModel(const BnnConfig& cfg, RngStream& rng);
  std::string kind() const override { return "bnn-fac"; }
  ElboEstimate elbo(const ParamView& p, const Mat& x, const Mat& y, double n_total, int samples,
                    RngStream& rng) override;
  Predictive predict(const ParamView& p, const Mat& x, int samples, RngStream& rng) override;
  int noise_id() const { return noise_id_; }
  int mean_id(int layer) const { return mean_ids_.at(layer); }
  int log_std_id(int layer) const { return log_std_ids_.at(layer); }

 private:
  DiffTensor forward(const ParamView& p, const Mat& x, RngStream& rng, DiffTensor* increment) const;
  BnnConfig cfg_;
  std::vector<int> mean_ids_, log_std_ids_;
  std::vector<LayerPrior> priors_;
  int noise_id_ = -1;
};

// Global inducing points propagated through the network; every layer's
// weights have the conditional posterior above.
class GiBnnModel : public Model {
 public:
  // U0 and the last-layer pseudo-outputs come from the first rows of x_init,
  // y_init when there are at least `inducing` of them, otherwise from N(0, 1).
  GiBnnModel(const BnnConfig& cfg, const Mat& x_init, const Mat& y_init, RngStream& rng);
  std::string kind() const override { return "bnn-gi"; }
  ElboEstimate elbo(const ParamView& p, const Mat& x, const Mat& y, double n_total, int samples,
                    RngStream& rng) override;
  Predictive predict(const ParamView& p, const Mat& x, int samples, RngStream& rng) override;
  int noise_id() const { return noise_id_; }
  int u0_id() const { return u0_id_; }
  int v_id(int layer) const { return v_ids_.at(layer); }
  int log_prec_id(int layer) const { return log_prec_ids_.at(layer); }
  int layers() const { return static_cast<int>(v_ids_.size()); }

 private:
  DiffTensor forward(const ParamView& p, const Mat& x, RngStream& rng, DiffTensor* increment) const;
  BnnConfig cfg_;
  int u0_id_ = -1;
  std::vector<int> v_ids_, log_prec_ids_;
  std::vector<LayerPrior> priors_;
  int noise_id_ = -1;
};

struct DgpConfig {
  int input_dim = 1;
  int output_dim = 1;
  int depth = 2;   // number of GP layers including the output layer
  int width = 0;   // hidden width; 0 means the input dimension
  int inducing = 50;
  bool identity_mean = false;  // hidden layers only, requires width == input_dim
  double log_noise_var = -3.0;
  bool learn_noise = true;
  double layer_noise_std = 1e-2;  // white noise added to hidden-layer kernels
  int hidden_width() const { return width > 0 ? width : input_dim; }
};

// Shared per-layer kernel parameters (single lengthscale).
struct DgpKernelIds {
  int log_sf = -1;
  int log_ls = -1;
  int log_noise = -1;  // -1 for the output layer
  KernelParams get(const ParamView& p) const;
};

class GiDgpModel : public Model {
 public:
  GiDgpModel(const DgpConfig& cfg, const Mat& x_init, const Mat& y_init, RngStream& rng);
  std::string kind() const override { return "dgp-gi"; }
  ElboEstimate elbo(const ParamView& p, const Mat& x, const Mat& y, double n_total, int samples,
                    RngStream& rng) override;
  Predictive predict(const ParamView& p, const Mat& x, int samples, RngStream& rng) override;
  int noise_id() const { return noise_id_; }
  int u0_id() const { return u0_id_; }
  int v_id(int layer) const { return v_ids_.at(layer); }
  int log_prec_id(int layer) const { return log_prec_ids_.at(layer); }
  const DgpKernelIds& kernel_ids(int layer) const { return kernels_.at(layer); }

  struct Output {
    DiffTensor mean, var, increment;
  };
  // One posterior sample propagated to the output layer's per-point marginals.
  Output forward(const ParamView& p, const Mat& x, RngStream& rng) const;

 private:
  DgpConfig cfg_;
  int u0_id_ = -1;
  std::vector<int> v_ids_, log_prec_ids_;
  std::vector<DgpKernelIds> kernels_;
  int noise_id_ = -1;
};

class DsviDgpModel : public Model {
 public:
  DsviDgpModel(const DgpConfig& cfg, const Mat& x_init, RngStream& rng);
  std::string kind() const override { return "dgp-dsvi"; }
  ElboEstimate elbo(const ParamView& p, const Mat& x, const Mat& y, double n_total, int samples,
                    RngStream& rng) override;
  Predictive predict(const ParamView& p, const Mat& x, int samples, RngStream& rng) override;
  int noise_id() const { return noise_id_; }
  int z_id(int layer) const { return z_ids_.at(layer); }
  int m_id(int layer) const { return m_ids_.at(layer); }
  const std::vector<int>& chol_ids(int layer) const { return chol_ids_.at(layer); }
  const DgpKernelIds& kernel_ids(int layer) const { return kernels_.at(layer); }

  struct Output {
    DiffTensor mean, var, kl;
  };
  Output forward(const ParamView& p, const Mat& x, RngStream& rng) const;

 private:
  DgpConfig cfg_;
  std::vector<int> z_ids_, m_ids_;
  std::vector<std::vector<int>> chol_ids_;
  std::vector<DgpKernelIds> kernels_;
  int noise_id_ = -1;
};

// Rows 0..m-1 of x when it has at least m rows, otherwise N(0, 1) draws.
Mat init_from_batch(const Mat& x, int m, RngStream& rng);

}  // namespace vbl
