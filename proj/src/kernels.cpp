#include "vbl/kernels.hpp"

#include <cmath>
#include <string>

namespace vbl {

KernelParams KernelParams::make(double sf, double ls, Index dims) {
  KernelParams p;
  p.log_sf = DiffTensor(Mat::Constant(1, 1, std::log(sf)));
  p.log_ls = DiffTensor(Mat::Constant(1, dims, std::log(ls)));
  p.log_noise = DiffTensor(Mat(0, 0));
  return p;
}

namespace {

DiffTensor signal_var(const KernelParams& p) { return exp(scale(p.log_sf, 2.0)); }

DiffTensor scale_inputs(const KernelParams& p, const DiffTensor& x) {
  if (p.log_ls.cols() == 1) return scale_by(x, exp(neg(p.log_ls)));
  if (p.log_ls.cols() != x.cols())
    throw NumericError("se_ard_features: " + std::to_string(x.cols()) + " input dims but " +
                       std::to_string(p.log_ls.cols()) + " lengthscales");
  return scale_cols(x, transpose(exp(neg(p.log_ls))));
}

}  // namespace

DiffTensor se_ard_features(const KernelParams& p, const DiffTensor& x, const DiffTensor& y) {
  if (x.cols() != y.cols()) throw NumericError("se_ard_features: input dimension mismatch");
  DiffTensor d2 = sq_dist(scale_inputs(p, x), scale_inputs(p, y));
  return scale_by(exp(scale(d2, -0.5)), signal_var(p));
}

DiffTensor gram_sq_dist(const DiffTensor& diag_a, const DiffTensor& diag_b, const DiffTensor& cross, double nu) {
  if (diag_a.rows() != cross.rows() || diag_b.rows() != cross.cols() || diag_a.cols() != 1 || diag_b.cols() != 1)
    throw NumericError("gram_sq_dist: shape mismatch");
  DiffTensor d = add_row(add_col(scale(cross, -2.0), diag_a), transpose(diag_b));
  d = scale(d, nu);
  const double mag = std::max({1.0, nu * diag_a.value().cwiseAbs().maxCoeff(), nu * diag_b.value().cwiseAbs().maxCoeff()});
  const double worst = d.value().minCoeff();
  if (worst < -1e-10 * mag)
    throw NumericError("gram_sq_dist: negative squared distance " + std::to_string(worst) + " (Gram matrix not PSD)");
  if (worst < 0.0) d = clamp_min(d, 0.0);
  return d;
}

DiffTensor se_from_gram_cross(const KernelParams& p, const DiffTensor& diag_a, const DiffTensor& diag_b,
                              const DiffTensor& cross, double nu) {
  if (p.log_ls.cols() != 1) throw NumericError("se_from_gram: Gram-matrix layers take a single lengthscale");
  DiffTensor d2 = gram_sq_dist(diag_a, diag_b, cross, nu);
  DiffTensor inv_l2 = exp(scale(p.log_ls, -2.0));
  return scale_by(exp(scale_by(d2, scale(inv_l2, -0.5))), signal_var(p));
}

DiffTensor se_from_gram(const KernelParams& p, const DiffTensor& g, double nu) {
  if (g.rows() != g.cols()) throw NumericError("se_from_gram: Gram matrix must be square");
  DiffTensor d = diag_part(g);
  return se_from_gram_cross(p, d, d, g, nu);
}

DiffTensor se_diag(const KernelParams& p, Index n) {
  return matmul(DiffTensor(Mat::Ones(n, 1)), signal_var(p));
}

DiffTensor add_layer_noise(const DiffTensor& k, const DiffTensor& noise_var) {
  if (k.rows() != k.cols()) throw NumericError("add_layer_noise: K must be square");
  return k + scale_by(DiffTensor(Mat::Identity(k.rows(), k.rows())), noise_var);
}

DiffTensor add_layer_noise(const DiffTensor& k, const KernelParams& p) {
  if (!p.has_noise()) return k;
  return add_layer_noise(k, layer_noise_var(p));
}

DiffTensor layer_noise_var(const KernelParams& p) {
  if (!p.has_noise()) return DiffTensor::scalar(0.0);
  return exp(scale(p.log_noise, 2.0));
}

}  // namespace vbl
