#include "vbl/dist.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace vbl {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw NumericError(msg);
}

// N x k matrix with d on its leading diagonal.
DiffTensor embed_diag(const DiffTensor& d, Index rows) {
  DiffTensor sq = diag_embed(d);
  if (rows == d.rows()) return sq;
  return vstack(sq, DiffTensor(Mat::Zero(rows - d.rows(), d.rows())));
}

DiffTensor pad_cols(const DiffTensor& a, Index cols) {
  if (a.cols() >= cols) return a;
  return hstack(a, DiffTensor(Mat::Zero(a.rows(), cols - a.cols())));
}

// Upper-triangular part including the diagonal.
DiffTensor triu(const DiffTensor& a) { return transpose(tril(transpose(a))); }

}  // namespace

// ------------------------------------------------------------------ Gaussian

DiffTensor gaussian_sample(const DiffTensor& mean, const DiffTensor& chol, RngStream& rng) {
  require(chol.rows() == chol.cols() && chol.rows() == mean.rows(), "gaussian_sample: shape mismatch");
  Mat xi = rng.normal(mean.rows(), mean.cols());
  return add(mean, matmul(chol, DiffTensor(std::move(xi))));
}

DiffTensor matrix_normal_sample(const DiffTensor& mean, const DiffTensor& row_chol, const DiffTensor& col_chol,
                                RngStream& rng) {
  require(row_chol.rows() == mean.rows() && row_chol.cols() == mean.rows(), "matrix_normal_sample: row shape mismatch");
  Mat xi = rng.normal(mean.rows(), mean.cols());
  DiffTensor noise = matmul(row_chol, DiffTensor(std::move(xi)));
  if (col_chol.rows() > 0) {
    require(col_chol.rows() == mean.cols() && col_chol.cols() == mean.cols(), "matrix_normal_sample: column shape mismatch");
    noise = matmul(noise, transpose(col_chol));
  }
  return add(mean, noise);
}

DiffTensor gaussian_log_density(const DiffTensor& x, const DiffTensor& mean, const DiffTensor& chol) {
  require(x.rows() == mean.rows() && x.cols() == mean.cols(), "gaussian_log_density: shape mismatch");
  const double n = static_cast<double>(x.rows());
  const double k = static_cast<double>(x.cols());
  DiffTensor r = triangular_solve(chol, sub(x, mean));
  DiffTensor out = scale(sum_squares(r), -0.5);
  out = out - scale(logdet_from_cholesky(chol), 0.5 * k);
  return add_scalar(out, -0.5 * n * k * kLog2Pi);
}

DiffTensor normal_log_density(const DiffTensor& x, const DiffTensor& mu, const DiffTensor& sigma) {
  require((sigma.value().array() > 0.0).all(), "normal_log_density: non-positive scale");
  DiffTensor r = cdiv(sub(x, mu), sigma);
  DiffTensor out = scale(sum_squares(r), -0.5) - sum(log(sigma));
  return add_scalar(out, -0.5 * static_cast<double>(x.rows() * x.cols()) * kLog2Pi);
}

// --------------------------------------------------------------------- Gamma

GammaConfig& gamma_config() {
  thread_local GammaConfig cfg;
  return cfg;
}

ScopedGammaConfig::ScopedGammaConfig(GammaConfig cfg) : saved_(gamma_config()) { gamma_config() = cfg; }
ScopedGammaConfig::~ScopedGammaConfig() { gamma_config() = saved_; }

double gamma_shape_derivative(double shape, double g) {
  const double h = std::min(1e-5, 0.5 * shape);
  const double pdf = boost::math::gamma_p_derivative(shape, g);
  if (!(pdf > 0.0)) return 0.0;
  // Difference the smaller tail for accuracy.
  double dcdf;
  if (boost::math::gamma_p(shape, g) < 0.5)
    dcdf = (boost::math::gamma_p(shape + h, g) - boost::math::gamma_p(shape - h, g)) / (2.0 * h);
  else
    dcdf = -(boost::math::gamma_q(shape + h, g) - boost::math::gamma_q(shape - h, g)) / (2.0 * h);
  return -dcdf / pdf;
}

GammaDraw gamma_sample_reparam(const DiffTensor& shape, const DiffTensor& rate, RngStream& rng) {
  require(shape.rows() == rate.rows() && shape.cols() == rate.cols(), "gamma_sample_reparam: shape mismatch");
  require((shape.value().array() > 0.0).all(), "gamma_sample_reparam: non-positive shape");
  require((rate.value().array() > 0.0).all(), "gamma_sample_reparam: non-positive rate");
  const GammaConfig cfg = gamma_config();
  const Mat& a = shape.value();
  Mat g(a.rows(), a.cols());
  for (Index j = 0; j < a.cols(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) {
      if (cfg.sampler == GammaSampler::InverseCdf)
        g(i, j) = boost::math::gamma_p_inv(a(i, j), rng.uniform());
      else
        g(i, j) = rng.gamma(a(i, j));
      // Guard against underflow to exactly zero for tiny shapes.
      g(i, j) = std::max(g(i, j), 1e-300);
    }
  }
  GammaDraw out;
  DiffTensor gc(g);
  if (cfg.gradient == GammaGradient::Score) {
    out.z = cdiv(gc, rate);
    out.shape_log_prob = gamma_log_density(gc, shape, DiffTensor(Mat::Ones(a.rows(), a.cols())));
    return out;
  }
  Mat dg(a.rows(), a.cols());
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i) dg(i, j) = gamma_shape_derivative(a(i, j), g(i, j));
  const Mat b = rate.value();
  Mat z = g.cwiseQuotient(b);
  Mat zc = z;
  out.z = make_op(std::move(z), {shape, rate}, [dg = std::move(dg), b, zc = std::move(zc)](const Mat& gr, GradSlots& s) {
    if (s[0]) s[0]->array() += gr.array() * dg.array() / b.array();
    if (s[1]) s[1]->array() -= gr.array() * zc.array() / b.array();
  });
  out.shape_log_prob = DiffTensor::scalar(0.0);
  return out;
}

DiffTensor gamma_log_density(const DiffTensor& x, const DiffTensor& shape, const DiffTensor& rate) {
  require((x.value().array() > 0.0).all(), "gamma_log_density: non-positive argument");
  DiffTensor t = cmul(shape, log(rate)) - lgamma(shape) + cmul(add_scalar(shape, -1.0), log(x)) - cmul(rate, x);
  return sum(t);
}

// ------------------------------------------------------------------- Wishart

double log_multigamma(double a, int p) {
  double out = 0.25 * p * (p - 1) * kLogPi;
  for (int j = 1; j <= p; ++j) out += std::lgamma(a + 0.5 * (1 - j));
  return out;
}

int wishart_ntilde(int n, double nu) {
  require(nu > 0.0, "wishart: degrees of freedom must be positive");
  if (nu >= n) return n;
  require(std::floor(nu) == nu, "wishart: nu < N requires integer degrees of freedom");
  return static_cast<int>(nu);
}

DiffTensor wishart_log_density(const DiffTensor& g, const DiffTensor& sigma, double nu, bool check_rank) {
  require(g.rows() == g.cols() && sigma.rows() == sigma.cols() && g.rows() == sigma.rows(),
          "wishart_log_density: shape mismatch");
  const int n = static_cast<int>(g.rows());
  const int nt = wishart_ntilde(n, nu);
  if (check_rank) {
    Eigen::JacobiSVD<Mat> svd(g.value());
    const Vec sv = svd.singularValues();
    require(sv(0) > 0.0, "wishart_log_density: zero matrix");
    const bool ok_low = sv(nt - 1) > 1e-8 * sv(0);
    const bool ok_high = nt == n || sv(nt) <= 1e-8 * sv(0);
    require(ok_low && ok_high, "wishart_log_density: rank of G differs from min(nu, N) = " + std::to_string(nt));
  }
  DiffTensor ls;
  try {
    ls = cholesky_factor(sigma);
  } catch (const NumericError& e) {
    throw NumericError(std::string("wishart_log_density: scale not positive definite: ") + e.what());
  }
  DiffTensor x = triangular_solve(ls, g);
  DiffTensor y = triangular_solve(ls, transpose(x));
  DiffTensor tr = trace(y);
  DiffTensor logdet_g = logdet_psd(block(g, 0, 0, nt, nt));
  const double c = 0.5 * nu * (nt - n) * kLogPi - 0.5 * nu * n * std::log(2.0) - log_multigamma(0.5 * nu, nt);
  DiffTensor out = scale(logdet_from_cholesky(ls), -0.5 * nu) + scale(logdet_g, 0.5 * (nu - n - 1)) - scale(tr, 0.5);
  return add_scalar(out, c);
}

DiffTensor inverse_wishart_log_density(const DiffTensor& g, const DiffTensor& sigma, double nu) {
  require(g.rows() == g.cols() && sigma.rows() == sigma.cols() && g.rows() == sigma.rows(),
          "inverse_wishart_log_density: shape mismatch");
  const int n = static_cast<int>(g.rows());
  require(nu >= n, "inverse_wishart_log_density: requires nu >= N");
  DiffTensor lg = cholesky_factor(g);
  DiffTensor ls = cholesky_factor(sigma);
  DiffTensor tr = sum_squares(triangular_solve(lg, ls));
  const double c = -0.5 * nu * n * std::log(2.0) - log_multigamma(0.5 * nu, n);
  DiffTensor out = scale(logdet_from_cholesky(ls), 0.5 * nu) - scale(logdet_from_cholesky(lg), 0.5 * (nu + n + 1)) -
                   scale(tr, 0.5);
  return add_scalar(out, c);
}

Mat BartlettFactor::padded() const {
  Mat out = Mat::Zero(n, nu);
  out.leftCols(ntilde) = t;
  return out;
}

BartlettFactor bartlett_sample(int n, int nu, RngStream& rng) {
  require(n > 0 && nu > 0, "bartlett_sample: N and nu must be positive");
  BartlettFactor f;
  f.n = n;
  f.nu = nu;
  f.ntilde = std::min(n, nu);
  f.t = Mat::Zero(n, f.ntilde);
  Vec diag(f.ntilde);
  for (int j = 0; j < f.ntilde; ++j) diag(j) = std::max(2.0 * rng.gamma(0.5 * (nu - j)), 1e-300);
  Mat xi = rng.normal(n, f.ntilde);
  for (int j = 0; j < f.ntilde; ++j) {
    f.t(j, j) = std::sqrt(diag(j));
    for (int i = j + 1; i < n; ++i) f.t(i, j) = xi(i, j);
  }
  return f;
}

Mat wishart_sample_bartlett(const Mat& sigma_chol, int nu, RngStream& rng) {
  BartlettFactor f = bartlett_sample(static_cast<int>(sigma_chol.rows()), nu, rng);
  Mat r = sigma_chol * f.t;
  return r * r.transpose();
}

Mat wishart_sample_outer(const Mat& sigma_chol, int nu, RngStream& rng) {
  Mat f = sigma_chol * rng.normal(sigma_chol.rows(), nu);
  return f * f.transpose();
}

// ----------------------------------------------------------------- Jacobians

double jacobian_logdet(JacobianVariant variant, const JacobianFactors& f) {
  const int n = f.n;
  const int nu = f.nu;
  const int nt = std::min(n, nu);
  require(n > 0 && nu > 0, "jacobian_logdet: N and nu must be positive");
  double out = 0.0;
  switch (variant) {
    case JacobianVariant::Llt:
      require(f.lambda.rows() == n && f.lambda.cols() >= nt, "jacobian_logdet(llt): factor shape");
      for (int i = 1; i <= nt; ++i) {
        const double d = f.lambda(i - 1, i - 1);
        require(d != 0.0, "jacobian_logdet(llt): singular factor");
        out += std::log(2.0) + (n - i + 1) * std::log(std::abs(d));
      }
      return out;
    case JacobianVariant::LeftMul:
      require(f.l.rows() == n && f.l.cols() == n, "jacobian_logdet(left_mul): factor shape");
      for (int i = 1; i <= n; ++i) {
        const double d = f.l(i - 1, i - 1);
        require(d != 0.0, "jacobian_logdet(left_mul): singular factor");
        out += std::min(i, nu) * std::log(std::abs(d));
      }
      return out;
    case JacobianVariant::RightMul:
      require(f.b.rows() >= nt && f.b.cols() >= nt, "jacobian_logdet(right_mul): factor shape");
      for (int i = 1; i <= nt; ++i) {
        const double d = f.b(i - 1, i - 1);
        require(d != 0.0, "jacobian_logdet(right_mul): singular factor");
        out += (n - i + 1) * std::log(std::abs(d));
      }
      return out;
    case JacobianVariant::Congruence: {
      require(f.a.rows() == n && f.a.cols() == n && f.c.rows() == n && f.c.cols() == n,
              "jacobian_logdet(congruence): factor shape");
      Eigen::PartialPivLU<Mat> lu(f.a);
      const double det = lu.determinant();
      require(det != 0.0, "jacobian_logdet(congruence): singular A");
      const Mat d = f.a * f.c * f.a.transpose();
      const double logdet_c = logdet_psd(DiffTensor(Mat(f.c.topLeftCorner(nt, nt)))).item();
      const Mat dn = d.topLeftCorner(nt, nt);
      const double logdet_d = logdet_psd(DiffTensor(Mat(0.5 * (dn + dn.transpose())))).item();
      return nu * std::log(std::abs(det)) + 0.5 * (nu - n - 1) * (logdet_c - logdet_d);
    }
  }
  return out;
}

// -------------------------------------------------- generalized singular Wishart

GWishParams gwish_standard_params(const Mat& l, int nu) {
  GWishParams p;
  const int n = static_cast<int>(l.rows());
  const int nt = wishart_ntilde(n, nu);
  p.nu = nu;
  p.l = DiffTensor(l);
  Mat alpha(nt, 1);
  for (int j = 0; j < nt; ++j) alpha(j, 0) = 0.5 * (nu - j);
  p.alpha = DiffTensor(alpha);
  p.beta = DiffTensor(Mat::Constant(nt, 1, 0.5));
  p.mu = DiffTensor(Mat::Zero(n, nt));
  p.sigma = DiffTensor(Mat::Ones(n, nt));
  return p;
}

GWishSample gwish_sample_and_logpdf(const GWishParams& p, RngStream& rng, bool stl) {
  const int n = p.n();
  const int nu = p.nu;
  const int nt = p.ntilde();
  require(p.l.cols() == n, "gwish: L must be square");
  require(p.alpha.rows() == nt && p.alpha.cols() == 1 && p.beta.rows() == nt && p.beta.cols() == 1,
          "gwish: alpha/beta must be ntilde x 1");
  require(p.mu.rows() == n && p.mu.cols() == nt && p.sigma.rows() == n && p.sigma.cols() == nt,
          "gwish: mu/sigma must be N x ntilde");
  require((p.alpha.value().array() > 0).all() && (p.beta.value().array() > 0).all(), "gwish: alpha, beta must be positive");
  require((p.sigma.value().array() > 0).all(), "gwish: sigma must be positive");
  require((p.l.value().diagonal().array() > 0).all(), "gwish: L must have a positive diagonal");

  // Bartlett factor: T_jj^2 ~ Gamma(alpha_j, beta_j), T_ij ~ N(mu_ij, sigma_ij^2).
  GammaDraw gd = gamma_sample_reparam(p.alpha, p.beta, rng);
  Mat xi = rng.normal(n, nt);
  DiffTensor tdiag = sqrt(gd.z);
  DiffTensor t = tril(p.mu + cmul(p.sigma, DiffTensor(xi)), true) + embed_diag(tdiag, n);

  const DiffTensor alpha = stl ? detach(p.alpha) : p.alpha;
  const DiffTensor beta = stl ? detach(p.beta) : p.beta;
  const DiffTensor mu = stl ? detach(p.mu) : p.mu;
  const DiffTensor sigma = stl ? detach(p.sigma) : p.sigma;

  // Bartlett entry densities.
  DiffTensor logq = gamma_log_density(gd.z, alpha, beta);
  {
    DiffTensor r = cdiv(t - mu, sigma);
    DiffTensor per = add_scalar(scale(square(r), -0.5) - log(sigma), -0.5 * kLog2Pi);
    logq = logq + sum(tril(per, true));
  }
  // Change of variables from T to G.
  Mat coef_l(n, 1), coef_t(nt, 1);
  for (int j = 1; j <= n; ++j) coef_l(j - 1, 0) = std::min(j, nu) + (j <= nt ? n - j + 1 : 0);
  for (int j = 1; j <= nt; ++j) coef_t(j - 1, 0) = 0.5 * (n - j);
  DiffTensor log_ldiag = log(diag_part(p.l));
  logq = logq - sum(cmul(log_ldiag, DiffTensor(coef_l))) - sum(cmul(log(gd.z), DiffTensor(coef_t)));

  DiffTensor core = t;
  if (p.variant == GWishVariant::AB) {
    require(p.b.rows() == nt && p.b.cols() == nt, "gwish: B must be ntilde x ntilde");
    require((p.b.value().diagonal().array() > 0).all(), "gwish: B must have a positive diagonal");
    DiffTensor b = tril(p.b);
    core = matmul(t, b);
    Mat coef_b(nt, 1);
    for (int j = 1; j <= nt; ++j) coef_b(j - 1, 0) = 2.0 * (n - j + 1);
    logq = logq - sum(cmul(log(diag_part(b)), DiffTensor(coef_b)));
  }
  if (p.variant == GWishVariant::A || p.variant == GWishVariant::AB) {
    require(p.a_lower.rows() == n && p.a_lower.cols() == n && p.a_upper.rows() == n && p.a_upper.cols() == n,
            "gwish: A factors must be N x N");
    require((p.a_upper.value().diagonal().array() != 0).all(), "gwish: A must be invertible");
    DiffTensor a = matmul(tril(p.a_lower, true) + DiffTensor(Mat::Identity(n, n)), triu(p.a_upper));
    DiffTensor c = matmul(core, transpose(core));
    DiffTensor a_top = block(a, 0, 0, nt, n);
    DiffTensor d = matmul(matmul(a_top, c), transpose(a_top));
    DiffTensor logdet_c = logdet_psd(block(c, 0, 0, nt, nt));
    DiffTensor logdet_d = logdet_psd(d);
    DiffTensor log_abs_det_a = scale(sum(log(square(diag_part(p.a_upper)))), 0.5);
    logq = logq + scale(logdet_d - logdet_c, 0.5 * (nu - n - 1)) - scale(log_abs_det_a, static_cast<double>(nu));
    core = matmul(a, core);
  }
  GWishSample out;
  out.t = t;
  out.root = pad_cols(matmul(p.l, core), nu);
  out.g = matmul(out.root, transpose(out.root));
  out.log_density = logq;
  out.shape_log_prob = gd.shape_log_prob;
  return out;
}

// ------------------------------------------------------------ matrix normal

MatrixNormalParams matrix_normal_conditional(const Mat& s_ii, const Mat& s_ti, const Mat& s_tt, const Mat& f_i) {
  require(s_ii.rows() == s_ii.cols() && s_ti.cols() == s_ii.rows() && s_tt.rows() == s_ti.rows() &&
              s_tt.cols() == s_tt.rows() && f_i.rows() == s_ii.rows(),
          "matrix_normal_conditional: shape mismatch");
  Mat l;
  try {
    l = cholesky_value(s_ii);
  } catch (const NumericError& e) {
    throw NumericError(std::string("matrix_normal_conditional: S_ii not positive definite: ") + e.what());
  }
  const auto lv = l.triangularView<Eigen::Lower>();
  Mat w = lv.solve(s_ti.transpose());
  MatrixNormalParams out;
  out.mean = w.transpose() * lv.solve(f_i);
  out.row_cov = s_tt - w.transpose() * w;
  out.col_identity = true;
  return out;
}

PointConditional matrix_normal_point_conditional(const DiffTensor& s_ii, const DiffTensor& s_ti,
                                                 const DiffTensor& s_tt_diag, const DiffTensor& f_i) {
  require(s_ti.cols() == s_ii.rows() && s_tt_diag.rows() == s_ti.rows() && s_tt_diag.cols() == 1 &&
              f_i.rows() == s_ii.rows(),
          "matrix_normal_point_conditional: shape mismatch");
  DiffTensor l = cholesky_factor(s_ii);
  DiffTensor w = triangular_solve(l, transpose(s_ti));
  PointConditional out;
  out.mean = matmul(transpose(w), triangular_solve(l, f_i));
  out.var = s_tt_diag - transpose(col_sums(square(w)));
  return out;
}

// ------------------------------------------------------------------------ KL

DiffTensor kl_gaussian_full(const DiffTensor& mq, const DiffTensor& lq, const DiffTensor& mp, const DiffTensor& lp) {
  require(mq.rows() == mp.rows() && mq.cols() == mp.cols() && lq.rows() == mq.rows() && lp.rows() == mq.rows(),
          "kl_gaussian_full: shape mismatch");
  const double n = static_cast<double>(mq.rows());
  const double k = static_cast<double>(mq.cols());
  DiffTensor tr = sum_squares(triangular_solve(lp, tril(lq)));
  DiffTensor maha = sum_squares(triangular_solve(lp, sub(mp, mq)));
  DiffTensor logdets = logdet_from_cholesky(lp) - logdet_from_cholesky(lq);
  DiffTensor out = scale(tr, k) + maha + scale(logdets, k);
  return scale(add_scalar(out, -n * k), 0.5);
}

DiffTensor kl_gaussian_diag(const DiffTensor& mq, const DiffTensor& sq, const DiffTensor& mp, const DiffTensor& sp) {
  DiffTensor t = log(cdiv(sp, sq)) + cdiv(square(sq) + square(sub(mq, mp)), scale(square(sp), 2.0));
  return add_scalar(sum(t), -0.5 * static_cast<double>(mq.rows() * mq.cols()));
}

DiffTensor kl_gamma(const DiffTensor& aq, const DiffTensor& bq, const DiffTensor& ap, const DiffTensor& bp) {
  DiffTensor t = cmul(sub(aq, ap), digamma(aq)) - lgamma(aq) + lgamma(ap) + cmul(ap, log(bq) - log(bp)) +
                 cmul(aq, cdiv(sub(bp, bq), bq));
  return sum(t);
}

}  // namespace vbl
