#include "vbl/gp.hpp"

#include "vbl/dist.hpp"

#include <cmath>
#include <string>

namespace vbl {

namespace {

Mat lower_solve(const Mat& l, const Mat& b) { return l.triangularView<Eigen::Lower>().solve(b); }

}  // namespace

// ------------------------------------------------------------ linear models

BumpSpec bump_spec_from_range(const Mat& x, int count) {
  if (x.cols() != 1 || x.rows() == 0) throw NumericError("bump_spec_from_range: need a non-empty single column");
  if (count < 2) throw NumericError("bump_spec_from_range: need at least two bumps");
  const double lo = x.minCoeff(), hi = x.maxCoeff();
  BumpSpec spec;
  spec.centers = Vec::LinSpaced(count, lo, hi);
  spec.width = (hi - lo) / (count - 1);
  if (!(spec.width > 0.0)) throw NumericError("bump_spec_from_range: inputs have zero range");
  return spec;
}

Mat bump_features(const Mat& x, const BumpSpec& spec) {
  if (x.cols() != 1) throw NumericError("bump_features: single input column required");
  Mat phi(x.rows(), spec.centers.size());
  for (Index k = 0; k < spec.centers.size(); ++k)
    phi.col(k) = (-(x.col(0).array() - spec.centers(k)).square() / (2.0 * spec.width * spec.width)).exp();
  return phi;
}

DiffTensor bump_features(const DiffTensor& x, const BumpSpec& spec) {
  if (x.cols() != 1) throw NumericError("bump_features: single input column required");
  const Index w = spec.centers.size();
  DiffTensor rep = matmul(x, DiffTensor(Mat::Ones(1, w)));
  DiffTensor diff = add_row(rep, DiffTensor(Mat(-spec.centers.transpose())));
  return exp(scale(square(diff), -0.5 / (spec.width * spec.width)));
}

LmlTerms gaussian_lml_terms(const Mat& c, const Mat& y) {
  if (c.rows() != y.rows()) throw NumericError("gaussian_lml_terms: shape mismatch");
  LmlTerms t;
  if (y.rows() == 0) return t;
  Mat l = cholesky_value(c);
  Mat a = lower_solve(l, y);
  t.data_fit = -0.5 * a.squaredNorm();
  t.complexity = -static_cast<double>(y.cols()) * l.diagonal().array().log().sum();
  t.constant = -0.5 * static_cast<double>(y.size()) * kLog2Pi;
  return t;
}

BlrResult blr_fit_predict_lml(const Mat& phi, const Mat& y, const Mat& phi_star, double alpha, double sigma) {
  if (!(alpha > 0.0) || !(sigma > 0.0)) throw NumericError("blr: alpha and sigma must be positive");
  if (phi.rows() != y.rows() || (phi_star.size() > 0 && phi_star.cols() != phi.cols()))
    throw NumericError("blr: shape mismatch");
  const Index w = phi.cols();
  const double s2 = sigma * sigma, a2 = alpha * alpha;
  Mat prec = Mat::Identity(w, w) / a2 + phi.transpose() * phi / s2;
  const Mat la = cholesky_value(prec);
  const auto lv = la.triangularView<Eigen::Lower>();
  BlrResult r;
  Mat b = phi.transpose() * y / s2;
  Mat inv = lv.transpose().solve(lv.solve(Mat(Mat::Identity(w, w))));
  r.cov = 0.5 * (inv + inv.transpose());
  r.mean = lv.transpose().solve(lv.solve(b));
  r.pred_mean = phi_star * r.mean;
  Mat v = lv.solve(phi_star.transpose());
  r.pred_var = v.colwise().squaredNorm().transpose().array() + s2;

  const double n = static_cast<double>(y.rows()), p = static_cast<double>(y.cols());
  Mat c = lv.solve(b);
  r.lml.data_fit = -0.5 * (y.squaredNorm() / s2 - c.squaredNorm());
  r.lml.complexity = -0.5 * p * (n * std::log(s2) + w * std::log(a2) + 2.0 * la.diagonal().array().log().sum());
  r.lml.constant = -0.5 * n * p * kLog2Pi;
  return r;
}

// ------------------------------------------------------------------ exact GP

GpResult gp_predict_lml(const Mat& k_xx, const Mat& k_sx, const Mat& k_ss, const Mat& y, double noise_var) {
  if (k_xx.rows() != y.rows() || k_sx.cols() != k_xx.rows() || k_ss.rows() != k_sx.rows())
    throw NumericError("gp_predict_lml: shape mismatch");
  GpResult r;
  if (y.rows() == 0) {
    r.mean = Mat::Zero(k_ss.rows(), y.cols());
    r.cov = k_ss;
    return r;
  }
  Mat c = k_xx + noise_var * Mat::Identity(k_xx.rows(), k_xx.rows());
  Mat l = cholesky_value(c);
  const auto lv = l.triangularView<Eigen::Lower>();
  Mat a = lv.solve(y);
  Mat v = lv.solve(k_sx.transpose());
  r.mean = v.transpose() * a;
  r.cov = k_ss - v.transpose() * v;
  r.lml.data_fit = -0.5 * a.squaredNorm();
  r.lml.complexity = -static_cast<double>(y.cols()) * l.diagonal().array().log().sum();
  r.lml.constant = -0.5 * static_cast<double>(y.size()) * kLog2Pi;
  return r;
}

DiffLml gp_lml(const DiffTensor& k_xx, const Mat& y, const DiffTensor& noise_var) {
  if (k_xx.rows() != y.rows()) throw NumericError("gp_lml: shape mismatch");
  DiffTensor l = cholesky_factor(add_layer_noise(k_xx, noise_var));
  DiffLml out;
  out.data_fit = scale(sum_squares(triangular_solve(l, DiffTensor(y))), -0.5);
  out.complexity = scale(logdet_from_cholesky(l), -0.5 * static_cast<double>(y.cols()));
  out.total = add_scalar(out.data_fit + out.complexity, -0.5 * static_cast<double>(y.size()) * kLog2Pi);
  return out;
}

SignalVarianceOptimum signal_variance_optimum(const Mat& k_hat, const Mat& y, double sigma_hat2) {
  if (k_hat.rows() != y.rows() || k_hat.cols() != y.rows()) throw NumericError("signal_variance_optimum: shape mismatch");
  const Index n = y.rows();
  const double np = static_cast<double>(y.size());
  Mat c = k_hat + sigma_hat2 * Mat::Identity(n, n);
  Mat l = cholesky_value(c);
  const double quad = lower_solve(l, y).squaredNorm();
  SignalVarianceOptimum r;
  r.sf2 = quad / np;
  if (!(r.sf2 > 1e-300)) throw NumericError("signal_variance_optimum: optimal signal variance is zero (all-zero targets)");
  Mat ls = cholesky_value(Mat(r.sf2 * c));
  r.data_fit = -0.5 * lower_solve(ls, y).squaredNorm();
  const double p = static_cast<double>(y.cols());
  r.complexity_direct = -p * ls.diagonal().array().log().sum();
  r.complexity_split = -p * (0.5 * n * std::log(r.sf2) + l.diagonal().array().log().sum());
  return r;
}

// --------------------------------------------------------------- sparse GP

SparseMarginals sparse_marginals(const DiffTensor& lzz, const DiffTensor& kxz, const DiffTensor& kxx_diag,
                                 const DiffTensor& m, const std::vector<DiffTensor>& ls) {
  if (static_cast<Index>(ls.size()) != m.cols()) throw NumericError("sparse_marginals: one factor per output");
  if (kxz.cols() != lzz.rows() || kxx_diag.rows() != kxz.rows() || m.rows() != lzz.rows())
    throw NumericError("sparse_marginals: shape mismatch");
  DiffTensor a = triangular_solve(lzz, transpose(kxz));  // M x N
  DiffTensor b = triangular_solve(lzz, a, true);          // Kzz^{-1} Kzx
  SparseMarginals out;
  out.mean = matmul(transpose(b), m);
  DiffTensor base = kxx_diag - transpose(col_sums(square(a)));
  DiffTensor var;
  for (std::size_t k = 0; k < ls.size(); ++k) {
    DiffTensor extra = transpose(col_sums(square(matmul(transpose(tril(ls[k])), b))));
    DiffTensor col = base + extra;
    var = k == 0 ? col : hstack(var, col);
  }
  out.var = var;
  return out;
}

DiffTensor sparse_kl(const DiffTensor& lzz, const DiffTensor& m, const std::vector<DiffTensor>& ls) {
  if (static_cast<Index>(ls.size()) != m.cols()) throw NumericError("sparse_kl: one factor per output");
  DiffTensor zero(Mat::Zero(m.rows(), 1));
  DiffTensor total = DiffTensor::scalar(0.0);
  for (std::size_t k = 0; k < ls.size(); ++k)
    total = total + kl_gaussian_full(block(m, 0, static_cast<Index>(k), m.rows(), 1), ls[k], zero, lzz);
  return total;
}

DiffTensor svgp_elbo(const KernelParams& kp, const DiffTensor& z, const DiffTensor& m,
                     const std::vector<DiffTensor>& ls, const DiffTensor& noise_var, const DiffTensor& xb,
                     const Mat& yb, double n_total) {
  DiffTensor lzz = cholesky_factor(se_ard_features(kp, z, z));
  DiffTensor kl = sparse_kl(lzz, m, ls);
  if (xb.rows() == 0) return -kl;
  SparseMarginals mg = sparse_marginals(lzz, se_ard_features(kp, xb, z), se_diag(kp, xb.rows()), m, ls);
  DiffTensor ell = expected_gaussian_loglik(yb, mg.mean, mg.var, noise_var);
  return scale(ell, n_total / static_cast<double>(xb.rows())) - kl;
}

CollapsedBound svgp_collapsed_bound(const Mat& kxx, const Mat& kxz, const Mat& kzz, const Mat& y, double noise_var) {
  if (kxz.rows() != kxx.rows() || kxz.cols() != kzz.rows() || y.rows() != kxx.rows())
    throw NumericError("svgp_collapsed_bound: shape mismatch");
  const Index n = kxx.rows(), m = kzz.rows();
  Mat lz = cholesky_value(kzz);
  Mat a = lower_solve(lz, kxz.transpose());  // M x N
  Mat q = a.transpose() * a;
  LmlTerms t = gaussian_lml_terms(Mat(q + noise_var * Mat::Identity(n, n)), y);
  CollapsedBound out;
  out.bound = t.total() - static_cast<double>(y.cols()) * (kxx.trace() - a.squaredNorm()) / (2.0 * noise_var);
  Mat sigma_inv = kzz + kxz.transpose() * kxz / noise_var;
  const Mat ls = cholesky_value(Mat(0.5 * (sigma_inv + sigma_inv.transpose())));
  const auto lv = ls.triangularView<Eigen::Lower>();
  Mat sig_kzz = lv.transpose().solve(lv.solve(kzz));  // Sigma Kzz
  out.m = kzz * lv.transpose().solve(lv.solve(Mat(kxz.transpose() * y))) / noise_var;
  out.s = kzz * sig_kzz;
  out.s = 0.5 * (out.s + out.s.transpose());
  (void)m;
  return out;
}

// ------------------------------------------------------------ deep kernels

Mlp::Mlp(ParamStore& store, const std::string& prefix, const std::vector<int>& widths, RngStream& rng)
    : widths_(widths) {
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const int fan_in = widths[k], fan_out = widths[k + 1];
    Mat w = rng.normal(fan_in, fan_out) * std::sqrt(2.0 / fan_in);
    w_ids_.push_back(store.add(prefix + ".w" + std::to_string(k), w));
    b_ids_.push_back(store.add(prefix + ".b" + std::to_string(k), Mat::Zero(1, fan_out)));
  }
}

DiffTensor Mlp::forward(const ParamView& p, const DiffTensor& x) const {
  if (!widths_.empty() && x.cols() != widths_.front())
    throw NumericError("Mlp: input has " + std::to_string(x.cols()) + " columns, expected " +
                       std::to_string(widths_.front()));
  DiffTensor h = x;
  for (std::size_t k = 0; k < w_ids_.size(); ++k) {
    h = add_row(matmul(h, p[w_ids_[k]]), p[b_ids_[k]]);
    if (k + 1 < w_ids_.size()) h = relu(h);
  }
  return h;
}

// --------------------------------------------------------------- models

BlrViModel::BlrViModel(const BumpSpec& spec, int outputs, double alpha, double sigma, RngStream& rng)
    : spec_(spec), alpha_(alpha), sigma_(sigma) {
  const Index w = spec.centers.size();
  mean_id_ = params_.add("blr.mean", Mat(0.1 * rng.normal(w, outputs)));
  chol_id_ = params_.add("blr.chol", positive_lower_raw(Mat(0.1 * alpha * Mat::Identity(w, w))));
}

ElboEstimate BlrViModel::elbo(const ParamView& p, const Mat& x, const Mat& y, double n_total, int, RngStream&) {
  const Index w = spec_.centers.size();
  DiffTensor phi(bump_features(x, spec_));
  DiffTensor m = p[mean_id_];
  DiffTensor l = positive_lower(p[chol_id_]);
  DiffTensor var = row_sums(square(matmul(phi, l)));
  DiffTensor noise = DiffTensor::scalar(sigma_ * sigma_);
  ElboEstimate e;
  if (x.rows() > 0)
    e.loglik = scale(expected_gaussian_loglik(y, matmul(phi, m), var, noise), n_total / static_cast<double>(x.rows()));
  DiffTensor lp(Mat(alpha_ * Mat::Identity(w, w)));
  e.increment = -kl_gaussian_full(m, l, DiffTensor(Mat::Zero(w, m.cols())), lp);
  return e;
}

Predictive BlrViModel::predict(const ParamView& p, const Mat& x, int, RngStream&) {
  Mat phi = bump_features(x, spec_);
  Mat l = positive_lower(p[chol_id_]).value();
  Predictive out;
  out.mean.push_back(phi * p[mean_id_].value());
  Vec v = (phi * l).rowwise().squaredNorm().array() + sigma_ * sigma_;
  out.var.push_back(v.replicate(1, out.mean[0].cols()));
  return out;
}

BlrResult BlrViModel::exact(const Mat& x, const Mat& y, const Mat& x_star) const {
  return blr_fit_predict_lml(bump_features(x, spec_), y, bump_features(x_star, spec_), alpha_, sigma_);
}

ExactGpModel::ExactGpModel(const Mat& x_train, const Mat& y_train, const std::vector<int>& extractor_widths,
                           bool ard, double noise_std, RngStream& rng)
    : x_train_(x_train), y_train_(y_train) {
  Index feat_dim = x_train.cols();
  if (extractor_widths.size() > 1) {
    if (extractor_widths.front() != x_train.cols()) throw NumericError("dkl: extractor input width mismatch");
    extractor_ = Mlp(params_, "dkl.net", extractor_widths, rng);
    has_extractor_ = true;
    feat_dim = extractor_widths.back();
  }
  log_sf_id_ = params_.add("kernel.log_sf", Mat::Zero(1, 1));
  log_ls_id_ = params_.add("kernel.log_ls", Mat::Zero(1, ard ? feat_dim : 1));
  log_noise_id_ = params_.add("lik.log_noise", Mat::Constant(1, 1, std::log(noise_std)));
}

DiffTensor ExactGpModel::features(const ParamView& p, const DiffTensor& x) const {
  return has_extractor_ ? extractor_.forward(p, x) : x;
}

KernelParams ExactGpModel::kernel(const ParamView& p) const {
  KernelParams kp;
  kp.log_sf = p[log_sf_id_];
  kp.log_ls = p[log_ls_id_];
  kp.log_noise = DiffTensor(Mat(0, 0));
  return kp;
}

DiffTensor ExactGpModel::noise_var(const ParamView& p) const { return exp(scale(p[log_noise_id_], 2.0)); }

DiffLml ExactGpModel::lml(const ParamView& p) const {
  DiffTensor f = features(p, DiffTensor(x_train_));
  return gp_lml(se_ard_features(kernel(p), f, f), y_train_, noise_var(p));
}

ElboEstimate ExactGpModel::elbo(const ParamView& p, const Mat& x, const Mat& y, double, int, RngStream&) {
  DiffTensor f = features(p, DiffTensor(x));
  ElboEstimate e;
  e.loglik = gp_lml(se_ard_features(kernel(p), f, f), y, noise_var(p)).total;
  return e;
}

Predictive ExactGpModel::predict(const ParamView& p, const Mat& x, int, RngStream&) {
  KernelParams kp = kernel(p);
  DiffTensor ft = features(p, DiffTensor(x_train_));
  DiffTensor fs = features(p, DiffTensor(x));
  const double nv = noise_var(p).item();
  GpResult r = gp_predict_lml(se_ard_features(kp, ft, ft).value(), se_ard_features(kp, fs, ft).value(),
                              se_ard_features(kp, fs, fs).value(), y_train_, nv);
  Predictive out;
  out.mean.push_back(r.mean);
  Vec v = r.cov.diagonal().array() + nv;
  out.var.push_back(v.replicate(1, r.mean.cols()));
  return out;
}

SvgpModel::SvgpModel(const Mat& z_init, int outputs, bool ard, double noise_std, RngStream&) {
  const Index m = z_init.rows();
  z_id_ = params_.add("svgp.z", z_init);
  m_id_ = params_.add("svgp.m", Mat::Zero(m, outputs));
  for (int k = 0; k < outputs; ++k)
    chol_ids_.push_back(params_.add("svgp.chol" + std::to_string(k), positive_lower_raw(Mat::Identity(m, m))));
  log_sf_id_ = params_.add("kernel.log_sf", Mat::Zero(1, 1));
  log_ls_id_ = params_.add("kernel.log_ls", Mat::Zero(1, ard ? z_init.cols() : 1));
  log_noise_id_ = params_.add("lik.log_noise", Mat::Constant(1, 1, std::log(noise_std)));
}

KernelParams SvgpModel::kernel(const ParamView& p) const {
  KernelParams kp;
  kp.log_sf = p[log_sf_id_];
  kp.log_ls = p[log_ls_id_];
  kp.log_noise = DiffTensor(Mat(0, 0));
  return kp;
}

std::vector<DiffTensor> SvgpModel::chol_factors(const ParamView& p) const {
  std::vector<DiffTensor> ls;
  for (int id : chol_ids_) ls.push_back(positive_lower(p[id]));
  return ls;
}

ElboEstimate SvgpModel::elbo(const ParamView& p, const Mat& x, const Mat& y, double n_total, int, RngStream&) {
  KernelParams kp = kernel(p);
  DiffTensor z = p[z_id_];
  DiffTensor lzz = cholesky_factor(se_ard_features(kp, z, z));
  std::vector<DiffTensor> ls = chol_factors(p);
  ElboEstimate e;
  e.increment = -sparse_kl(lzz, p[m_id_], ls);
  if (x.rows() > 0) {
    DiffTensor xb(x);
    SparseMarginals mg = sparse_marginals(lzz, se_ard_features(kp, xb, z), se_diag(kp, x.rows()), p[m_id_], ls);
    e.loglik = scale(expected_gaussian_loglik(y, mg.mean, mg.var, exp(scale(p[log_noise_id_], 2.0))),
                     n_total / static_cast<double>(x.rows()));
  }
  return e;
}

Predictive SvgpModel::predict(const ParamView& p, const Mat& x, int, RngStream&) {
  KernelParams kp = kernel(p);
  DiffTensor z = p[z_id_];
  DiffTensor lzz = cholesky_factor(se_ard_features(kp, z, z));
  DiffTensor xs(x);
  SparseMarginals mg = sparse_marginals(lzz, se_ard_features(kp, xs, z), se_diag(kp, x.rows()), p[m_id_],
                                        chol_factors(p));
  const double nv = std::exp(2.0 * p[log_noise_id_].item());
  Predictive out;
  out.mean.push_back(mg.mean.value());
  out.var.push_back(mg.var.value().array() + nv);
  return out;
}

}  // namespace vbl
