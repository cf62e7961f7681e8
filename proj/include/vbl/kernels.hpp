#pragma once

#include "vbl/diff.hpp"

namespace vbl {

// Squared-exponential kernel hyperparameters, all in log space.  log_ls is
// 1 x D for ARD or 1 x 1 for a shared lengthscale; log_noise is an empty
// tensor when the kernel carries no layer noise.
struct KernelParams {
  DiffTensor log_sf;     // 1 x 1, log signal standard deviation
  DiffTensor log_ls;     // 1 x D or 1 x 1
  DiffTensor log_noise;  // 1 x 1 log layer-noise standard deviation, or 0 x 0

  bool has_noise() const { return log_noise.rows() > 0; }
  static KernelParams make(double sf, double ls, Index dims = 1);
};

// sf^2 exp(-1/2 sum_d (x_d - x'_d)^2 / l_d^2) for rows of x and y.
DiffTensor se_ard_features(const KernelParams& p, const DiffTensor& x, const DiffTensor& y);

// SE kernel evaluated through a Gram matrix G = F F^T / nu:
// d^2_ij = nu (G_ii - 2 G_ij + G_jj) with a single lengthscale.
DiffTensor se_from_gram(const KernelParams& p, const DiffTensor& g, double nu);

// Rectangular form for blocks: diag_a (n x 1) and diag_b (m x 1) are the Gram
// diagonals of the two point sets and cross (n x m) their cross Gram block.
DiffTensor se_from_gram_cross(const KernelParams& p, const DiffTensor& diag_a, const DiffTensor& diag_b,
                              const DiffTensor& cross, double nu);

// Squared distances nu (a_i - 2 c_ij + b_j); entries in [-tol, 0) are set to
// zero and anything more negative is an error (tol = 1e-10 max(1, scale)).
DiffTensor gram_sq_dist(const DiffTensor& diag_a, const DiffTensor& diag_b, const DiffTensor& cross, double nu);

// sf^2 (n x 1 constant column), the SE diagonal.
DiffTensor se_diag(const KernelParams& p, Index n);

// K + sigma^2 I.
DiffTensor add_layer_noise(const DiffTensor& k, const DiffTensor& noise_var);
// K + exp(2 log_noise) I when the kernel carries layer noise, else K.
DiffTensor add_layer_noise(const DiffTensor& k, const KernelParams& p);
// Layer-noise variance as a 1 x 1 tensor (zero when absent).
DiffTensor layer_noise_var(const KernelParams& p);

}  // namespace vbl
