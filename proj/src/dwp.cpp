#include "vbl/dwp.hpp"

#include <cmath>
#include <string>

namespace vbl {

namespace {

DiffTensor zero() { return DiffTensor::scalar(0.0); }

void require(bool ok, const std::string& msg) {
  if (!ok) throw NumericError(msg);
}

std::string layer_name(const std::string& prefix, const char* what, int l) {
  return prefix + "." + what + std::to_string(l);
}

// Upper-triangular factor with positive diagonal from an unconstrained square matrix.
DiffTensor positive_upper(const DiffTensor& raw) { return transpose(positive_lower(transpose(raw))); }

Mat standard_alpha(int nt, int nu) {
  Mat a(nt, 1);
  for (int j = 0; j < nt; ++j) a(j, 0) = 0.5 * (nu - j);
  return a;
}

}  // namespace

GWishVariant parse_gwish_variant(const std::string& name) {
  if (name == "base") return GWishVariant::Base;
  if (name == "a") return GWishVariant::A;
  if (name == "ab") return GWishVariant::AB;
  throw NumericError("unknown generalized Wishart variant '" + name + "' (expected base, a or ab)");
}

// ------------------------------------------------------------------- prior

DwpPriorSample dwp_prior_layer(const Mat& k, int nu, RngStream& rng) {
  require(nu > 0, "dwp_prior_layer: nu must be positive");
  const Mat sigma = k / static_cast<double>(nu);
  Mat l;
  try {
    l = cholesky_value(sigma);
  } catch (const NumericError& e) {
    throw NumericError(std::string("dwp_prior_layer: kernel matrix not positive definite: ") + e.what());
  }
  DwpPriorSample out;
  out.g = wishart_sample_bartlett(l, nu, rng);
  out.log_density = wishart_log_density(DiffTensor(out.g), DiffTensor(sigma), nu, false).item();
  return out;
}

DwpPriorSample dwp_prior_layer(const KernelParams& kp, const Mat& g_prev, double nu_prev, int nu, RngStream& rng) {
  Mat k = add_layer_noise(se_from_gram(kp, DiffTensor(g_prev), nu_prev), kp).value();
  return dwp_prior_layer(k, nu, rng);
}

// ------------------------------------------------------------- posterior

GWishLayerValues gwish_reduction_values(int m, int nu, GWishVariant variant, const Mat& v, double q) {
  require(v.rows() == m && v.cols() == m, "gwish_reduction_values: V must be M x M");
  const int nt = wishart_ntilde(m, nu);
  GWishLayerValues out;
  out.v = DiffTensor(v);
  out.q = DiffTensor::scalar(q);
  out.alpha = DiffTensor(standard_alpha(nt, nu));
  out.beta = DiffTensor(Mat::Constant(nt, 1, 0.5));
  out.mu = DiffTensor(Mat::Zero(m, nt));
  out.sigma = DiffTensor(Mat::Ones(m, nt));
  out.a_lower = DiffTensor(Mat::Zero(m, m));
  out.a_upper = DiffTensor(Mat::Identity(m, m));
  out.b = DiffTensor(Mat::Identity(nt, nt));
  out.variant = variant;
  out.nu = nu;
  return out;
}

DwpPosteriorSample dwp_posterior_layer(const DiffTensor& k_ii, const GWishLayerValues& layer, RngStream& rng,
                                       bool stl) {
  const int m = static_cast<int>(k_ii.rows());
  require(k_ii.cols() == m, "dwp_posterior_layer: K must be square");
  require(layer.nu > 0, "dwp_posterior_layer: nu must be positive");
  require(layer.v.rows() == m && layer.v.cols() == m, "dwp_posterior_layer: V must be M x M");
  const double qv = layer.q.item();
  require(qv >= 0.0 && qv <= 1.0, "dwp_posterior_layer: q must lie in [0, 1]");

  DiffTensor prior_scale = scale(k_ii, 1.0 / layer.nu);
  DiffTensor psi = scale_by(prior_scale, add_scalar(neg(layer.q), 1.0)) +
                   scale_by(matmul(layer.v, transpose(layer.v)), layer.q);
  GWishParams gp;
  gp.nu = layer.nu;
  try {
    gp.l = cholesky_factor(psi);
  } catch (const NumericError& e) {
    throw NumericError(std::string("dwp_posterior_layer: mixed scale not positive definite: ") + e.what());
  }
  gp.alpha = layer.alpha;
  gp.beta = layer.beta;
  gp.mu = layer.mu;
  gp.sigma = layer.sigma;
  gp.variant = layer.variant;
  gp.a_lower = layer.a_lower;
  gp.a_upper = layer.a_upper;
  gp.b = layer.b;

  GWishSample s = gwish_sample_and_logpdf(gp, rng, stl);
  DwpPosteriorSample out;
  out.g = s.g;
  out.root = s.root;
  out.log_q = s.log_density;
  out.log_p = wishart_log_density(s.g, prior_scale, layer.nu, false);
  out.increment = out.log_p - out.log_q;
  out.shape_log_prob = s.shape_log_prob;
  return out;
}

GWishLayerParams::GWishLayerParams(ParamStore& store, const std::string& prefix, int m, int nu,
                                   GWishVariant variant, RngStream& rng)
    : m_(m), nu_(nu), variant_(variant) {
  require(m > 0 && nu > 0, "GWishLayerParams: M and nu must be positive");
  const int nt = wishart_ntilde(m, nu);
  // V V^T starts with diagonal near 1 / nu, the prior scale's at unit signal variance.
  v_id_ = store.add(prefix + ".v", Mat(rng.normal(m, m) / std::sqrt(static_cast<double>(m) * nu)));
  q_id_ = store.add(prefix + ".q_logit", Mat::Constant(1, 1, std::log(0.1 / 0.9)));
  alpha_id_ = store.add(prefix + ".log_alpha", Mat(standard_alpha(nt, nu).array().log()));
  beta_id_ = store.add(prefix + ".log_beta", Mat::Constant(nt, 1, std::log(0.5)));
  mu_id_ = store.add(prefix + ".mu", Mat::Zero(m, nt));
  sigma_id_ = store.add(prefix + ".log_sigma", Mat::Zero(m, nt));
  if (variant != GWishVariant::Base) {
    a_lower_id_ = store.add(prefix + ".a_lower", Mat::Zero(m, m));
    a_upper_id_ = store.add(prefix + ".a_upper", Mat::Zero(m, m));
  }
  if (variant == GWishVariant::AB) b_id_ = store.add(prefix + ".b", Mat::Zero(nt, nt));
}

GWishLayerValues GWishLayerParams::get(const ParamView& p) const {
  GWishLayerValues out;
  out.v = p[v_id_];
  out.q = sigmoid(p[q_id_]);
  out.alpha = exp(p[alpha_id_]);
  out.beta = exp(p[beta_id_]);
  out.mu = p[mu_id_];
  out.sigma = exp(p[sigma_id_]);
  out.variant = variant_;
  out.nu = nu_;
  if (variant_ != GWishVariant::Base) {
    out.a_lower = p[a_lower_id_];
    out.a_upper = positive_upper(p[a_upper_id_]);
  }
  if (variant_ == GWishVariant::AB) out.b = positive_lower(p[b_id_]);
  return out;
}

// ---------------------------------------------------- test-point conditional

TestGram dwp_conditional_testpoints(const DiffTensor& f_i, const DiffTensor& k_ii, const DiffTensor& k_ti,
                                    const DiffTensor& k_tt_diag, int nu, RngStream& rng) {
  require(nu > 0, "dwp_conditional_testpoints: nu must be positive");
  require(f_i.rows() == k_ii.rows() && f_i.cols() == nu, "dwp_conditional_testpoints: features must be M x nu");
  require(k_ti.cols() == k_ii.rows() && k_tt_diag.rows() == k_ti.rows() && k_tt_diag.cols() == 1,
          "dwp_conditional_testpoints: kernel block shape mismatch");
  const double s = 1.0 / nu;
  PointConditional pc =
      matrix_normal_point_conditional(scale(k_ii, s), scale(k_ti, s), scale(k_tt_diag, s), f_i);
  DiffTensor f_t = sample_pointwise(pc.mean, pc.var, rng);
  TestGram out;
  out.g_ti = matmul(f_t, transpose(f_i));
  out.g_tt_diag = row_sums(square(f_t));
  return out;
}

// ------------------------------------------------------------------ model

namespace {

DgpKernelIds add_gram_kernel(ParamStore& store, int l, bool hidden, double noise_std) {
  DgpKernelIds k;
  k.log_sf = store.add(layer_name("kernel", "log_sf", l), Mat::Zero(1, 1));
  k.log_ls = store.add(layer_name("kernel", "log_ls", l), Mat::Zero(1, 1));
  if (hidden)
    k.log_noise = store.add(layer_name("kernel", "log_layer_noise", l), Mat::Constant(1, 1, std::log(noise_std)));
  return k;
}

}  // namespace

DwpModel::DwpModel(const DwpConfig& cfg, const Mat& x_init, const Mat& y_init, RngStream& rng) : cfg_(cfg) {
  require(cfg.gram_layers >= 0, "dwp: gram_layers must be >= 0");
  require(cfg.inducing > 0, "dwp: need at least one inducing point");
  require(cfg.input_dim > 0 && cfg.output_dim > 0, "dwp: dimensions must be positive");
  require(x_init.cols() == cfg.input_dim, "dwp: x_init width mismatch");
  const int m = cfg.inducing;
  xi_id_ = params_.add("dwp.xi", init_from_batch(x_init, m, rng), 3.0);
  for (int l = 0; l < cfg.gram_layers; ++l) {
    kernels_.push_back(add_gram_kernel(params_, l, true, cfg.layer_noise_std));
    layers_.emplace_back(params_, layer_name("dwp", "layer", l), m, cfg.width(), cfg.variant, rng);
  }
  kernels_.push_back(add_gram_kernel(params_, cfg.gram_layers, false, cfg.layer_noise_std));
  Mat v = y_init.rows() >= m && y_init.cols() == cfg.output_dim ? Mat(y_init.topRows(m))
                                                                 : rng.normal(m, cfg.output_dim);
  v_id_ = params_.add("gi.v", v, 3.0);
  log_prec_id_ = params_.add("gi.log_prec", Mat::Zero(m, 1), 3.0);
  noise_id_ = params_.add("lik.log_noise_var", Mat::Constant(1, 1, cfg.log_noise_var), 10.0, cfg.learn_noise);
}

std::string DwpModel::kind() const {
  switch (cfg_.variant) {
    case GWishVariant::Base:
      return "dwp";
    case GWishVariant::A:
      return "dwp-a";
    case GWishVariant::AB:
      return "dwp-ab";
  }
  return "dwp";
}

DwpModel::Output DwpModel::forward(const ParamView& p, const Mat& x, RngStream& rng) const {
  require(x.cols() == cfg_.input_dim, "dwp: input width mismatch");
  const double nu0 = cfg_.input_dim;
  DiffTensor xi = p[xi_id_];
  DiffTensor g_ii = scale(matmul(xi, transpose(xi)), 1.0 / nu0);
  DiffTensor g_ti = scale(matmul(DiffTensor(x), transpose(xi)), 1.0 / nu0);
  DiffTensor g_tt(Mat(x.rowwise().squaredNorm() / nu0));
  double nu_prev = nu0;
  const Index nt = x.rows();

  Output out;
  out.increment = zero();
  for (int l = 0; l < cfg_.gram_layers; ++l) {
    KernelParams kp = kernels_[l].get(p);
    DiffTensor k_ii = add_layer_noise(se_from_gram(kp, g_ii, nu_prev), kp);
    DiffTensor k_ti = se_from_gram_cross(kp, g_tt, diag_part(g_ii), g_ti, nu_prev);
    DiffTensor k_tt = add_by(se_diag(kp, nt), layer_noise_var(kp));
    DwpPosteriorSample post = dwp_posterior_layer(k_ii, layers_[l].get(p), rng, stl_);
    out.increment = out.increment + post.increment;
    out.shape_log_prob = out.shape_log_prob + post.shape_log_prob;
    TestGram tg = dwp_conditional_testpoints(post.root, k_ii, k_ti, k_tt, layers_[l].nu(), rng);
    g_ii = post.g;
    g_ti = tg.g_ti;
    g_tt = tg.g_tt_diag;
    nu_prev = layers_[l].nu();
  }
  KernelParams kp = kernels_.back().get(p);
  DiffTensor kuu = add_layer_noise(se_from_gram(kp, g_ii, nu_prev), kp);
  DiffTensor kfu = se_from_gram_cross(kp, g_tt, diag_part(g_ii), g_ti, nu_prev);
  DiffTensor kff = add_by(se_diag(kp, nt), layer_noise_var(kp));
  GiGpLayerSample s = gi_gp_layer_sample(kuu, kfu, kff, p[v_id_], exp(p[log_prec_id_]), rng);
  out.mean = s.f_mean;
  out.var = s.f_var;
  out.increment = out.increment + s.increment;
  return out;
}

ElboEstimate DwpModel::elbo(const ParamView& p, const Mat& x, const Mat& y, double n_total, int samples,
                            RngStream& rng) {
  if (samples < 1) throw NumericError("elbo: samples must be >= 1");
  DiffTensor noise = exp(p[noise_id_]);
  const double k = static_cast<double>(samples);
  const double lik_scale = x.rows() > 0 ? n_total / static_cast<double>(x.rows()) : 0.0;
  const bool score = gamma_config().gradient == GammaGradient::Score;
  ElboEstimate e;
  for (int s = 0; s < samples; ++s) {
    Output o = forward(p, x, rng);
    DiffTensor ll = expected_gaussian_loglik(y, o.mean, o.var, noise);
    e.loglik = e.loglik + ll;
    e.increment = e.increment + o.increment;
    if (score) {
      // Zero-valued term whose gradient is the score-function estimate for the gamma shapes.
      const double f = lik_scale * ll.item() + o.increment.item();
      e.surrogate = e.surrogate + scale(o.shape_log_prob - detach(o.shape_log_prob), f / k);
    }
  }
  e.loglik = scale(e.loglik, lik_scale / k);
  e.increment = scale(e.increment, 1.0 / k);
  return e;
}

Predictive DwpModel::predict(const ParamView& p, const Mat& x, int samples, RngStream& rng) {
  const double nv = std::exp(p[noise_id_].item());
  Predictive out;
  for (int s = 0; s < samples; ++s) {
    Output o = forward(p, x, rng);
    out.mean.push_back(o.mean.value());
    out.var.push_back((o.var.value().array() + nv).replicate(1, o.mean.cols()));
  }
  return out;
}

// ---------------------------------------------------- inducing extension

InducingExtension wishart_inducing_extension(const Mat& sigma_uu, const Mat& sigma_us, double sigma_ss,
                                             const Mat& psi_uu) {
  const Index m = sigma_uu.rows();
  require(sigma_uu.cols() == m && psi_uu.rows() == m && psi_uu.cols() == m && sigma_us.rows() == m &&
              sigma_us.cols() == 1,
          "wishart_inducing_extension: shape mismatch");
  Eigen::LLT<Mat> ls(sigma_uu), lp(psi_uu);
  require(ls.info() == Eigen::Success, "wishart_inducing_extension: Sigma_uu not positive definite");
  require(lp.info() == Eigen::Success, "wishart_inducing_extension: Psi_uu not positive definite");
  const Mat w = ls.solve(sigma_us);  // Sigma^{-1} sigma
  InducingExtension out;
  out.x = psi_uu * w;
  out.a = sigma_ss - (w.transpose() * (sigma_uu - psi_uu) * w)(0, 0);
  const Mat coef = lp.solve(out.x);  // Psi^{-1} x, the implied regression coefficients
  out.coef_error = (coef - w).cwiseAbs().maxCoeff();
  out.schur = out.a - (out.x.transpose() * coef)(0, 0);
  const double prior_schur = sigma_ss - (sigma_us.transpose() * w)(0, 0);
  out.schur_error = std::abs(out.schur - prior_schur);
  out.feasible = out.schur > 0.0;
  return out;
}

double inverse_wishart_extension_residual(const Mat& sigma_uu, const Mat& sigma_us, double sigma_ss,
                                          const Mat& psi_uu) {
  const Index m = sigma_uu.rows();
  require(sigma_uu.cols() == m && psi_uu.rows() == m && psi_uu.cols() == m && sigma_us.rows() == m &&
              sigma_us.cols() == 1,
          "inverse_wishart_extension_residual: shape mismatch");
  Eigen::LLT<Mat> ls(sigma_uu), lp(psi_uu);
  require(ls.info() == Eigen::Success && lp.info() == Eigen::Success,
          "inverse_wishart_extension_residual: matrices must be positive definite");
  const Mat id = Mat::Identity(m, m);
  const double g = sigma_ss - (sigma_us.transpose() * ls.solve(sigma_us))(0, 0);
  return std::abs(g) * (lp.solve(id) - ls.solve(id)).norm();
}

}  // namespace vbl
