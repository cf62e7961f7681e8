#pragma once

#include "vbl/deep.hpp"
#include "vbl/diff.hpp"
#include "vbl/dist.hpp"
#include "vbl/kernels.hpp"
#include "vbl/model.hpp"
#include "vbl/params.hpp"

#include <string>
#include <vector>

namespace vbl {

GWishVariant parse_gwish_variant(const std::string& name);  // "base", "a", "ab"

// ------------------------------------------------------------------- prior

// G ~ Wishart(K / nu, nu) drawn through the Bartlett factor, with its density.
struct DwpPriorSample {
  Mat g;
  double log_density = 0.0;
};
DwpPriorSample dwp_prior_layer(const Mat& k, int nu, RngStream& rng);
// Same with K = k(G_prev) from the Gram-matrix kernel (plus its layer noise);
// nu_prev is the width that scaled G_prev.
DwpPriorSample dwp_prior_layer(const KernelParams& kp, const Mat& g_prev, double nu_prev, int nu, RngStream& rng);

// ------------------------------------------------------------- posterior

// Effective values of one layer's approximate posterior.
struct GWishLayerValues {
  DiffTensor v;        // M x M
  DiffTensor q;        // 1 x 1 mixing weight in (0, 1)
  DiffTensor alpha;    // ntilde x 1
  DiffTensor beta;     // ntilde x 1
  DiffTensor mu;       // M x ntilde
  DiffTensor sigma;    // M x ntilde
  DiffTensor a_lower;  // M x M, strictly lower part used (A variants)
  DiffTensor a_upper;  // M x M upper factor with positive diagonal (A variants)
  DiffTensor b;        // ntilde x ntilde lower with positive diagonal (AB variant)
  GWishVariant variant = GWishVariant::Base;
  int nu = 0;
};

// Values at which the posterior equals the Wishart with the mixed scale and
// (with q = 0) the prior: alpha_j = (nu - j + 1) / 2, beta = 1/2, mu = 0,
// sigma = 1, A = I, B = I.
GWishLayerValues gwish_reduction_values(int m, int nu, GWishVariant variant, const Mat& v, double q);

struct DwpPosteriorSample {
  DiffTensor g;          // M x M Gram sample at the inducing points
  DiffTensor root;       // M x nu with root root^T = g (imagined features)
  DiffTensor increment;  // log p(G | K) - log q(G)
  DiffTensor log_q;
  DiffTensor log_p;
  DiffTensor shape_log_prob;  // gamma score-function term
};
// k_ii is the kernel matrix K(G_{l-1}) at the inducing points; the posterior
// scale is (1 - q) K / nu + q V V^T.
DwpPosteriorSample dwp_posterior_layer(const DiffTensor& k_ii, const GWishLayerValues& layer, RngStream& rng,
                                       bool stl = false);

// Stored parameters of one layer.  alpha, beta, sigma and the diagonals of the
// A upper factor and of B are stored as logs; q as a logit.
class GWishLayerParams {
 public:
  GWishLayerParams() = default;
  GWishLayerParams(ParamStore& store, const std::string& prefix, int m, int nu, GWishVariant variant,
                   RngStream& rng);
  GWishLayerValues get(const ParamView& p) const;
  int nu() const { return nu_; }
  int v_id() const { return v_id_; }
  int q_id() const { return q_id_; }
  int alpha_id() const { return alpha_id_; }
  int beta_id() const { return beta_id_; }
  int mu_id() const { return mu_id_; }
  int sigma_id() const { return sigma_id_; }
  int a_lower_id() const { return a_lower_id_; }
  int a_upper_id() const { return a_upper_id_; }
  int b_id() const { return b_id_; }

 private:
  int m_ = 0, nu_ = 0;
  GWishVariant variant_ = GWishVariant::Base;
  int v_id_ = -1, q_id_ = -1, alpha_id_ = -1, beta_id_ = -1, mu_id_ = -1, sigma_id_ = -1;
  int a_lower_id_ = -1, a_upper_id_ = -1, b_id_ = -1;
};

// ---------------------------------------------------- test-point conditional

// Imagined test features drawn per point given the inducing features
// f_i (M x nu, f_i f_i^T = G_ii) when rows of (F_i; F_t) share the covariance
// K / nu.  Returns G_ti = F_t F_i^T and the diagonal of G_tt.
struct TestGram {
  DiffTensor g_ti;       // Nt x M
  DiffTensor g_tt_diag;  // Nt x 1
};
TestGram dwp_conditional_testpoints(const DiffTensor& f_i, const DiffTensor& k_ii, const DiffTensor& k_ti,
                                    const DiffTensor& k_tt_diag, int nu, RngStream& rng);

// ------------------------------------------------------------------ model

struct DwpConfig {
  int input_dim = 1;
  int output_dim = 1;
  int gram_layers = 2;  // Wishart layers before the output GP
  int nu = 0;           // 0 means the input dimension
  int inducing = 50;
  GWishVariant variant = GWishVariant::Base;
  double log_noise_var = -3.0;
  bool learn_noise = true;
  double layer_noise_std = 1e-2;
  int width() const { return nu > 0 ? nu : input_dim; }
};

class DwpModel : public Model {
 public:
  DwpModel(const DwpConfig& cfg, const Mat& x_init, const Mat& y_init, RngStream& rng);
  std::string kind() const override;
  ElboEstimate elbo(const ParamView& p, const Mat& x, const Mat& y, double n_total, int samples,
                    RngStream& rng) override;
  Predictive predict(const ParamView& p, const Mat& x, int samples, RngStream& rng) override;

  struct Output {
    DiffTensor mean, var, increment;
    DiffTensor shape_log_prob = DiffTensor::scalar(0.0);  // gamma score terms of all layers
  };
  Output forward(const ParamView& p, const Mat& x, RngStream& rng) const;

  int xi_id() const { return xi_id_; }
  int noise_id() const { return noise_id_; }
  int v_id() const { return v_id_; }
  int log_prec_id() const { return log_prec_id_; }
  const GWishLayerParams& layer(int l) const { return layers_.at(l); }
  const DgpKernelIds& kernel_ids(int l) const { return kernels_.at(l); }  // gram layers then output

 private:
  DwpConfig cfg_;
  int xi_id_ = -1;
  std::vector<GWishLayerParams> layers_;
  std::vector<DgpKernelIds> kernels_;
  int v_id_ = -1, log_prec_id_ = -1;
  int noise_id_ = -1;
};

// ---------------------------------------------------- inducing extension

// Extending q(G_uu) with Psi_uu to a joint Wishart over (u, *) whose
// conditional of * given u equals the prior's.  sigma holds the prior joint
// scale blocks Sigma_uu (M x M), sigma_us (M x 1), sigma_ss (1 x 1).
struct InducingExtension {
  Mat x;  // Psi_uu Sigma_uu^{-1} sigma_us
  double a = 0.0;
  double coef_error = 0.0;   // max |x^T Psi^{-1} - sigma_us^T Sigma^{-1}|
  double schur_error = 0.0;  // |(a - x^T Psi^{-1} x) - (sigma_ss - sigma_us^T Sigma^{-1} sigma_us)|
  double schur = 0.0;        // implied conditional variance
  bool feasible = false;     // schur > 0 so the joint scale is positive definite
};
InducingExtension wishart_inducing_extension(const Mat& sigma_uu, const Mat& sigma_us, double sigma_ss,
                                             const Mat& psi_uu);

// Frobenius norm of g (Psi^{-1} - Sigma^{-1}) with g the prior Schur
// complement: what an inverse-Wishart extension would need to be zero.
double inverse_wishart_extension_residual(const Mat& sigma_uu, const Mat& sigma_us, double sigma_ss,
                                          const Mat& psi_uu);

}  // namespace vbl
