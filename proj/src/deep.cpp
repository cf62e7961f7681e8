#include "vbl/deep.hpp"

#include "vbl/dist.hpp"
#include "vbl/gp.hpp"

#include <cmath>
#include <string>

namespace vbl {

namespace {

DiffTensor zero() { return DiffTensor::scalar(0.0); }

// Inverse of softplus for positive values.
double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

std::string layer_name(const std::string& prefix, const char* what, std::size_t l) {
  return prefix + "." + what + std::to_string(l);
}

}  // namespace

// ------------------------------------------------------------ weight priors

PriorVariant parse_prior_variant(const std::string& name) {
  if (name == "standard") return PriorVariant::Standard;
  if (name == "neal") return PriorVariant::Neal;
  if (name == "scale") return PriorVariant::Scale;
  throw NumericError("unknown prior variant '" + name + "' (expected standard, neal or scale)");
}

std::string prior_variant_name(PriorVariant v) {
  switch (v) {
    case PriorVariant::Standard:
      return "standard";
    case PriorVariant::Neal:
      return "neal";
    case PriorVariant::Scale:
      return "scale";
  }
  return "neal";
}

PriorDraw draw_prior_precision(const PriorSpec& spec, double fan_in, const DiffTensor& alpha, const DiffTensor& beta,
                               RngStream& rng) {
  PriorDraw d;
  switch (spec.variant) {
    case PriorVariant::Standard:
      d.precision = DiffTensor::scalar(1.0);
      return d;
    case PriorVariant::Neal:
      d.precision = DiffTensor::scalar(fan_in);
      return d;
    case PriorVariant::Scale: {
      if (alpha.item() < 0.0 || beta.item() < 0.0) throw NumericError("scale prior: offsets must be non-negative");
      DiffTensor shape = add_scalar(alpha, spec.shape);
      DiffTensor rate = add_scalar(beta, spec.rate);
      GammaDraw s = gamma_sample_reparam(shape, rate, rng);
      d.precision = scale(s.z, fan_in);
      d.kl = kl_gamma(shape, rate, DiffTensor::scalar(spec.shape), DiffTensor::scalar(spec.rate));
      return d;
    }
  }
  throw NumericError("draw_prior_precision: unknown variant");
}

DiffTensor weight_log_prior(const DiffTensor& w, const DiffTensor& precision) {
  const double n = static_cast<double>(w.rows() * w.cols());
  DiffTensor quad = scale(scale_by(sum_squares(w), precision), -0.5);
  return add_scalar(quad + scale(log(precision), 0.5 * n), -0.5 * n * kLog2Pi);
}

ScaleTerms scale_prior_terms(const PriorSpec& spec, double fan_in, const DiffTensor& alpha, const DiffTensor& beta,
                             const DiffTensor& w, RngStream& rng) {
  PriorDraw d = draw_prior_precision(spec, fan_in, alpha, beta, rng);
  return ScaleTerms{weight_log_prior(w, d.precision), d.kl};
}

LayerPrior::LayerPrior(ParamStore& store, const std::string& prefix, const PriorSpec& spec, double fan_in)
    : spec_(spec), fan_in_(fan_in) {
  if (spec.variant == PriorVariant::Scale) {
    const double raw = softplus_inverse(1e-3);
    alpha_id_ = store.add(prefix + ".alpha", Mat::Constant(1, 1, raw));
    beta_id_ = store.add(prefix + ".beta", Mat::Constant(1, 1, raw));
  }
}

PriorDraw LayerPrior::draw(const ParamView& p, RngStream& rng) const {
  if (spec_.variant != PriorVariant::Scale) return draw_prior_precision(spec_, fan_in_, zero(), zero(), rng);
  return draw_prior_precision(spec_, fan_in_, softplus(p[alpha_id_]), softplus(p[beta_id_]), rng);
}

// ------------------------------------------------------- BNN building blocks

DiffTensor bnn_features(const DiffTensor& h, bool first_layer) {
  DiffTensor psi = first_layer ? h : relu(h);
  return hstack(psi, DiffTensor(Mat::Ones(h.rows(), 1)));
}

GiWeightPosterior gi_weight_posterior(const DiffTensor& phi_u, const DiffTensor& lambda, const DiffTensor& v,
                                      const DiffTensor& prior_precision) {
  if (lambda.rows() != phi_u.rows() || lambda.cols() != 1 || v.rows() != phi_u.rows())
    throw NumericError("gi_weight_posterior: shape mismatch");
  DiffTensor weighted = scale_rows(phi_u, lambda);  // diag(lambda) phi
  DiffTensor prec = add_layer_noise(matmul(transpose(weighted), phi_u), prior_precision);
  GiWeightPosterior out;
  out.chol_prec = cholesky_factor(prec);
  out.mean = cholesky_solve(out.chol_prec, matmul(transpose(weighted), v));
  return out;
}

GiBnnLayerSample gi_bnn_layer_sample(const DiffTensor& phi_u, const DiffTensor& lambda, const DiffTensor& v,
                                     const DiffTensor& prior_precision, RngStream& rng) {
  GiWeightPosterior post = gi_weight_posterior(phi_u, lambda, v, prior_precision);
  const Index fan = phi_u.cols(), out = v.cols();
  Mat xi = rng.normal(fan, out);
  GiBnnLayerSample s;
  s.w = post.mean + triangular_solve(post.chol_prec, DiffTensor(xi), true);
  // log q(W) at the sample: the quadratic form is exactly -|xi|^2 / 2.
  DiffTensor log_q = add_scalar(scale(logdet_from_cholesky(post.chol_prec), 0.5 * static_cast<double>(out)),
                                -0.5 * xi.squaredNorm() - 0.5 * static_cast<double>(fan * out) * kLog2Pi);
  s.increment = weight_log_prior(s.w, prior_precision) - log_q;
  s.u_next = matmul(phi_u, s.w);
  return s;
}

Mat bnn_as_dgp_gram(const Mat& psi_f, const Mat& sigma) {
  if (sigma.rows() != psi_f.cols() || sigma.cols() != psi_f.cols())
    throw NumericError("bnn_as_dgp_gram: Sigma must be cols(psi_f) square");
  return psi_f * sigma * psi_f.transpose() / static_cast<double>(psi_f.cols());
}

// ------------------------------------------------------- DGP building blocks

GiGpLayerSample gi_gp_layer_sample(const DiffTensor& kuu, const DiffTensor& kfu, const DiffTensor& kff_diag,
                                   const DiffTensor& v, const DiffTensor& lambda, RngStream& rng) {
  const Index m = kuu.rows();
  if (kuu.cols() != m || kfu.cols() != m || kff_diag.rows() != kfu.rows() || v.rows() != m ||
      lambda.rows() != m || lambda.cols() != 1)
    throw NumericError("gi_gp_layer_sample: shape mismatch");
  DiffTensor lk = cholesky_factor(kuu);
  // R = I + Lk^T diag(lambda) Lk, so q(U) has covariance Lk R^{-1} Lk^T.
  DiffTensor r = add_layer_noise(matmul(transpose(lk), scale_rows(lk, lambda)), DiffTensor::scalar(1.0));
  DiffTensor lr = cholesky_factor(r);
  DiffTensor mean = matmul(lk, cholesky_solve(lr, matmul(transpose(lk), scale_rows(v, lambda))));
  Mat xi = rng.normal(m, v.cols());
  GiGpLayerSample s;
  s.u = mean + matmul(lk, triangular_solve(lr, DiffTensor(xi), true));
  DiffTensor white = triangular_solve(lk, s.u);  // Lk^{-1} U
  s.increment = add_scalar(scale(sum_squares(white), -0.5) -
                               scale(logdet_from_cholesky(lr), 0.5 * static_cast<double>(v.cols())),
                           0.5 * xi.squaredNorm());
  DiffTensor a = triangular_solve(lk, transpose(kfu));  // M x N
  s.f_mean = matmul(transpose(a), white);
  s.f_var = kff_diag - transpose(col_sums(square(a)));
  return s;
}

GiGpPosterior gi_gp_posterior(const Mat& kuu, const Mat& v, const Vec& lambda) {
  const Index m = kuu.rows();
  const Mat lk = cholesky_value(kuu);
  Mat r = Mat::Identity(m, m) + lk.transpose() * lambda.asDiagonal() * lk;
  Eigen::LLT<Mat> llt(0.5 * (r + r.transpose()));
  GiGpPosterior out;
  out.cov = lk * llt.solve(lk.transpose());
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  out.mean = out.cov * lambda.asDiagonal() * v;
  return out;
}

DiffTensor sample_pointwise(const DiffTensor& mean, const DiffTensor& var, RngStream& rng) {
  Mat xi = rng.normal(mean.rows(), mean.cols());
  DiffTensor sd = sqrt(clamp_min(var, 1e-12));
  if (var.cols() == 1 && mean.cols() != 1) return mean + scale_rows(DiffTensor(xi), sd);
  return mean + cmul(sd, DiffTensor(xi));
}

DsviLayerSample dsvi_layer_marginals(const KernelParams& kp, const DiffTensor& z, const DiffTensor& m,
                                     const std::vector<DiffTensor>& ls, const DiffTensor& input) {
  DiffTensor lzz = cholesky_factor(add_layer_noise(se_ard_features(kp, z, z), kp));
  DiffTensor diag = add_by(se_diag(kp, input.rows()), layer_noise_var(kp));
  SparseMarginals mg = sparse_marginals(lzz, se_ard_features(kp, input, z), diag, m, ls);
  return DsviLayerSample{mg.mean, mg.var, sparse_kl(lzz, m, ls)};
}

Mat init_from_batch(const Mat& x, int m, RngStream& rng) {
  if (x.rows() >= m) return x.topRows(m);
  return rng.normal(m, x.cols());
}

// ------------------------------------------------------- factorised BNN

FacBnnModel::FacBnnModel(const BnnConfig& cfg, RngStream& rng) : cfg_(cfg) {
  if (cfg.widths.size() < 2) throw NumericError("bnn: need at least input and output widths");
  for (std::size_t l = 0; l + 1 < cfg.widths.size(); ++l) {
    const int fan = cfg.widths[l] + 1, out = cfg.widths[l + 1];
    const double scaling = 1.0 / std::sqrt(static_cast<double>(fan));
    // Means start as a draw from the Neal prior and are stored scaled up by sqrt(fan-in).
    mean_ids_.push_back(params_.add(layer_name("fac", "mean", l), Mat(rng.normal(fan, out) * scaling), scaling));
    log_std_ids_.push_back(
        params_.add(layer_name("fac", "log_std", l), Mat::Constant(fan, out, 0.5 * std::log(1e-3 * scaling))));
    priors_.emplace_back(params_, layer_name("fac", "prior", l), cfg.prior, static_cast<double>(fan));
  }
  noise_id_ = params_.add("lik.log_noise_var", Mat::Constant(1, 1, cfg.log_noise_var), 10.0, cfg.learn_noise);
}

DiffTensor FacBnnModel::forward(const ParamView& p, const Mat& x, RngStream& rng, DiffTensor* increment) const {
  DiffTensor h(x);
  for (std::size_t l = 0; l < mean_ids_.size(); ++l) {
    DiffTensor phi = bnn_features(h, l == 0);
    DiffTensor m = p[mean_ids_[l]];
    DiffTensor log_s = p[log_std_ids_[l]];
    DiffTensor var = matmul(square(phi), exp(scale(log_s, 2.0)));
    h = matmul(phi, m) + cmul(sqrt(var), DiffTensor(rng.normal(var.rows(), var.cols())));
    if (increment) {
      // -KL(N(m, s^2) || N(0, 1 / tau)) = -tau/2 sum(s^2 + m^2) + n/2 + n/2 log tau + sum log s.
      PriorDraw d = priors_[l].draw(p, rng);
      const double n = static_cast<double>(m.rows() * m.cols());
      DiffTensor quad = scale(scale_by(sum(exp(scale(log_s, 2.0))) + sum_squares(m), d.precision), -0.5);
      DiffTensor neg_kl = add_scalar(quad + scale(log(d.precision), 0.5 * n) + sum(log_s), 0.5 * n);
      *increment = *increment + neg_kl - d.kl;
    }
  }
  return h;
}

ElboEstimate FacBnnModel::elbo(const ParamView& p, const Mat& x, const Mat& y, double n_total, int samples,
                               RngStream& rng) {
  if (samples < 1) throw NumericError("elbo: samples must be >= 1");
  DiffTensor noise = exp(p[noise_id_]);
  ElboEstimate e;
  for (int s = 0; s < samples; ++s) {
    DiffTensor inc = zero();
    DiffTensor f = forward(p, x, rng, &inc);
    e.loglik = e.loglik + gaussian_loglik(y, f, noise);
    e.increment = e.increment + inc;
  }
  const double k = static_cast<double>(samples);
  e.loglik = scale(e.loglik, x.rows() > 0 ? n_total / (static_cast<double>(x.rows()) * k) : 0.0);
  e.increment = scale(e.increment, 1.0 / k);
  return e;
}

Predictive FacBnnModel::predict(const ParamView& p, const Mat& x, int samples, RngStream& rng) {
  const double nv = std::exp(p[noise_id_].item());
  Predictive out;
  for (int s = 0; s < samples; ++s) {
    Mat f = forward(p, x, rng, nullptr).value();
    out.var.push_back(Mat::Constant(f.rows(), f.cols(), nv));
    out.mean.push_back(std::move(f));
  }
  return out;
}

// ------------------------------------------------------ global-inducing BNN

GiBnnModel::GiBnnModel(const BnnConfig& cfg, const Mat& x_init, const Mat& y_init, RngStream& rng) : cfg_(cfg) {
  if (cfg.widths.size() < 2) throw NumericError("bnn: need at least input and output widths");
  if (cfg.inducing < 1) throw NumericError("bnn-gi: need at least one inducing point");
  if (x_init.cols() != cfg.widths.front()) throw NumericError("bnn-gi: x_init width mismatch");
  const int m = cfg.inducing;
  const std::size_t layers = cfg.widths.size() - 1;
  u0_id_ = params_.add("gi.u0", init_from_batch(x_init, m, rng), 3.0);
  for (std::size_t l = 0; l < layers; ++l) {
    const int fan = cfg.widths[l] + 1, out = cfg.widths[l + 1];
    const bool last = l + 1 == layers;
    Mat v = last && y_init.rows() >= m && y_init.cols() == out ? Mat(y_init.topRows(m)) : rng.normal(m, out);
    v_ids_.push_back(params_.add(layer_name("gi", "v", l), v, 3.0));
    log_prec_ids_.push_back(params_.add(layer_name("gi", "log_prec", l), Mat::Constant(m, 1, last ? 0.0 : -4.0), 3.0));
    priors_.emplace_back(params_, layer_name("gi", "prior", l), cfg.prior, static_cast<double>(fan));
  }
  noise_id_ = params_.add("lik.log_noise_var", Mat::Constant(1, 1, cfg.log_noise_var), 10.0, cfg.learn_noise);
}

DiffTensor GiBnnModel::forward(const ParamView& p, const Mat& x, RngStream& rng, DiffTensor* increment) const {
  const Index m = cfg_.inducing, n = x.rows();
  // Inducing inputs and data travel through the network together.
  DiffTensor h = vstack(p[u0_id_], DiffTensor(x));
  for (std::size_t l = 0; l < v_ids_.size(); ++l) {
    DiffTensor phi = bnn_features(h, l == 0);
    PriorDraw d = priors_[l].draw(p, rng);
    GiBnnLayerSample s =
        gi_bnn_layer_sample(block(phi, 0, 0, m, phi.cols()), exp(p[log_prec_ids_[l]]), p[v_ids_[l]], d.precision, rng);
    if (increment) *increment = *increment + s.increment - d.kl;
    h = matmul(phi, s.w);
  }
  return block(h, m, 0, n, h.cols());
}

ElboEstimate GiBnnModel::elbo(const ParamView& p, const Mat& x, const Mat& y, double n_total, int samples,
                              RngStream& rng) {
  if (samples < 1) throw NumericError("elbo: samples must be >= 1");
  DiffTensor noise = exp(p[noise_id_]);
  ElboEstimate e;
  for (int s = 0; s < samples; ++s) {
    DiffTensor inc = zero();
    DiffTensor f = forward(p, x, rng, &inc);
    e.loglik = e.loglik + gaussian_loglik(y, f, noise);
    e.increment = e.increment + inc;
  }
  const double k = static_cast<double>(samples);
  e.loglik = scale(e.loglik, x.rows() > 0 ? n_total / (static_cast<double>(x.rows()) * k) : 0.0);
  e.increment = scale(e.increment, 1.0 / k);
  return e;
}

Predictive GiBnnModel::predict(const ParamView& p, const Mat& x, int samples, RngStream& rng) {
  const double nv = std::exp(p[noise_id_].item());
  Predictive out;
  for (int s = 0; s < samples; ++s) {
    Mat f = forward(p, x, rng, nullptr).value();
    out.var.push_back(Mat::Constant(f.rows(), f.cols(), nv));
    out.mean.push_back(std::move(f));
  }
  return out;
}

// ----------------------------------------------------------------- DGPs

KernelParams DgpKernelIds::get(const ParamView& p) const {
  KernelParams kp;
  kp.log_sf = p[log_sf];
  kp.log_ls = p[log_ls];
  kp.log_noise = log_noise >= 0 ? p[log_noise] : DiffTensor(Mat(0, 0));
  return kp;
}

namespace {

DgpKernelIds add_dgp_kernel(ParamStore& store, const std::string& prefix, std::size_t l, bool hidden,
                            double noise_std) {
  DgpKernelIds k;
  k.log_sf = store.add(layer_name(prefix, "log_sf", l), Mat::Zero(1, 1));
  k.log_ls = store.add(layer_name(prefix, "log_ls", l), Mat::Zero(1, 1));
  if (hidden) k.log_noise = store.add(layer_name(prefix, "log_layer_noise", l), Mat::Constant(1, 1, std::log(noise_std)));
  return k;
}

void check_dgp_config(const DgpConfig& cfg) {
  if (cfg.depth < 1) throw NumericError("dgp: depth must be >= 1");
  if (cfg.inducing < 1) throw NumericError("dgp: need at least one inducing point");
  if (cfg.identity_mean && cfg.depth > 1 && cfg.hidden_width() != cfg.input_dim)
    throw NumericError("dgp: identity mean requires hidden width equal to the input dimension");
}

}  // namespace

GiDgpModel::GiDgpModel(const DgpConfig& cfg, const Mat& x_init, const Mat& y_init, RngStream& rng) : cfg_(cfg) {
  check_dgp_config(cfg);
  if (x_init.cols() != cfg.input_dim) throw NumericError("dgp-gi: x_init width mismatch");
  const int m = cfg.inducing;
  u0_id_ = params_.add("gi.u0", init_from_batch(x_init, m, rng), 3.0);
  for (int l = 0; l < cfg.depth; ++l) {
    const bool last = l + 1 == cfg.depth;
    const int out = last ? cfg.output_dim : cfg.hidden_width();
    Mat v = last && y_init.rows() >= m && y_init.cols() == out ? Mat(y_init.topRows(m)) : rng.normal(m, out);
    v_ids_.push_back(params_.add(layer_name("gi", "v", l), v, 3.0));
    log_prec_ids_.push_back(params_.add(layer_name("gi", "log_prec", l), Mat::Constant(m, 1, last ? 0.0 : -4.0), 3.0));
    kernels_.push_back(add_dgp_kernel(params_, "kernel", l, !last, cfg.layer_noise_std));
  }
  noise_id_ = params_.add("lik.log_noise_var", Mat::Constant(1, 1, cfg.log_noise_var), 10.0, cfg.learn_noise);
}

GiDgpModel::Output GiDgpModel::forward(const ParamView& p, const Mat& x, RngStream& rng) const {
  DiffTensor u = p[u0_id_];
  DiffTensor f(x);
  DiffTensor inc = zero();
  for (int l = 0; l < cfg_.depth; ++l) {
    const bool last = l + 1 == cfg_.depth;
    KernelParams kp = kernels_[l].get(p);
    DiffTensor kuu = add_layer_noise(se_ard_features(kp, u, u), kp);
    DiffTensor kfu = se_ard_features(kp, f, u);
    DiffTensor kff = add_by(se_diag(kp, f.rows()), layer_noise_var(kp));
    GiGpLayerSample s = gi_gp_layer_sample(kuu, kfu, kff, p[v_ids_[l]], exp(p[log_prec_ids_[l]]), rng);
    inc = inc + s.increment;
    if (last) return Output{s.f_mean, s.f_var, inc};
    DiffTensor f_next = sample_pointwise(s.f_mean, s.f_var, rng);
    if (cfg_.identity_mean) {
      u = u + s.u;
      f = f + f_next;
    } else {
      u = s.u;
      f = f_next;
    }
  }
  throw NumericError("dgp-gi: unreachable");
}

ElboEstimate GiDgpModel::elbo(const ParamView& p, const Mat& x, const Mat& y, double n_total, int samples,
                              RngStream& rng) {
  if (samples < 1) throw NumericError("elbo: samples must be >= 1");
  DiffTensor noise = exp(p[noise_id_]);
  ElboEstimate e;
  for (int s = 0; s < samples; ++s) {
    Output o = forward(p, x, rng);
    e.loglik = e.loglik + expected_gaussian_loglik(y, o.mean, o.var, noise);
    e.increment = e.increment + o.increment;
  }
  const double k = static_cast<double>(samples);
  e.loglik = scale(e.loglik, x.rows() > 0 ? n_total / (static_cast<double>(x.rows()) * k) : 0.0);
  e.increment = scale(e.increment, 1.0 / k);
  return e;
}

Predictive GiDgpModel::predict(const ParamView& p, const Mat& x, int samples, RngStream& rng) {
  const double nv = std::exp(p[noise_id_].item());
  Predictive out;
  for (int s = 0; s < samples; ++s) {
    Output o = forward(p, x, rng);
    out.mean.push_back(o.mean.value());
    out.var.push_back((o.var.value().array() + nv).replicate(1, o.mean.cols()));
  }
  return out;
}

DsviDgpModel::DsviDgpModel(const DgpConfig& cfg, const Mat& x_init, RngStream& rng) : cfg_(cfg) {
  check_dgp_config(cfg);
  if (x_init.cols() != cfg.input_dim) throw NumericError("dgp-dsvi: x_init width mismatch");
  const int m = cfg.inducing;
  for (int l = 0; l < cfg.depth; ++l) {
    const bool last = l + 1 == cfg.depth;
    const int out = last ? cfg.output_dim : cfg.hidden_width();
    Mat z = l == 0 ? init_from_batch(x_init, m, rng) : rng.normal(m, cfg.hidden_width());
    z_ids_.push_back(params_.add(layer_name("dsvi", "z", l), z));
    m_ids_.push_back(params_.add(layer_name("dsvi", "m", l), Mat::Zero(m, out)));
    // Hidden layers start nearly deterministic, the output layer at the prior scale.
    const double s0 = last ? 1.0 : std::sqrt(1e-5);
    std::vector<int> ids;
    for (int k = 0; k < out; ++k)
      ids.push_back(params_.add(layer_name("dsvi", "chol", l) + "_" + std::to_string(k),
                                positive_lower_raw(Mat(s0 * Mat::Identity(m, m)))));
    chol_ids_.push_back(ids);
    kernels_.push_back(add_dgp_kernel(params_, "kernel", l, !last, cfg.layer_noise_std));
  }
  noise_id_ = params_.add("lik.log_noise_var", Mat::Constant(1, 1, cfg.log_noise_var), 10.0, cfg.learn_noise);
}

DsviDgpModel::Output DsviDgpModel::forward(const ParamView& p, const Mat& x, RngStream& rng) const {
  DiffTensor f(x);
  DiffTensor kl = zero();
  for (int l = 0; l < cfg_.depth; ++l) {
    const bool last = l + 1 == cfg_.depth;
    std::vector<DiffTensor> ls;
    for (int id : chol_ids_[l]) ls.push_back(positive_lower(p[id]));
    DsviLayerSample s = dsvi_layer_marginals(kernels_[l].get(p), p[z_ids_[l]], p[m_ids_[l]], ls, f);
    kl = kl + s.kl;
    if (last) return Output{s.f_mean, s.f_var, kl};
    DiffTensor f_next = sample_pointwise(s.f_mean, s.f_var, rng);
    f = cfg_.identity_mean ? f + f_next : f_next;
  }
  throw NumericError("dgp-dsvi: unreachable");
}

ElboEstimate DsviDgpModel::elbo(const ParamView& p, const Mat& x, const Mat& y, double n_total, int samples,
                                RngStream& rng) {
  if (samples < 1) throw NumericError("elbo: samples must be >= 1");
  DiffTensor noise = exp(p[noise_id_]);
  ElboEstimate e;
  DiffTensor kl = zero();
  for (int s = 0; s < samples; ++s) {
    Output o = forward(p, x, rng);
    e.loglik = e.loglik + expected_gaussian_loglik(y, o.mean, o.var, noise);
    kl = o.kl;  // deterministic given the parameters
  }
  const double k = static_cast<double>(samples);
  e.loglik = scale(e.loglik, x.rows() > 0 ? n_total / (static_cast<double>(x.rows()) * k) : 0.0);
  e.increment = -kl;
  return e;
}

Predictive DsviDgpModel::predict(const ParamView& p, const Mat& x, int samples, RngStream& rng) {
  const double nv = std::exp(p[noise_id_].item());
  Predictive out;
  for (int s = 0; s < samples; ++s) {
    Output o = forward(p, x, rng);
    out.mean.push_back(o.mean.value());
    out.var.push_back(o.var.value().array() + nv);
  }
  return out;
}

}  // namespace vbl
