#pragma once

#include "vbl/diff.hpp"
#include "vbl/rng.hpp"

#include <optional>

namespace vbl {

inline constexpr double kLog2Pi = 1.8378770664093454836;
inline constexpr double kLogPi = 1.1447298858494001741;

// ------------------------------------------------------------------ Gaussian

// mean + chol * xi, column by column (mean is n x k, chol is n x n).
DiffTensor gaussian_sample(const DiffTensor& mean, const DiffTensor& chol, RngStream& rng);

// Matrix normal MN(mean, row_chol row_chol^T, col_chol col_chol^T); an empty
// col_chol means identity column covariance.
DiffTensor matrix_normal_sample(const DiffTensor& mean, const DiffTensor& row_chol, const DiffTensor& col_chol,
                                RngStream& rng);

// Sum over the columns of x of log N(x_k; mean_k, chol chol^T).
DiffTensor gaussian_log_density(const DiffTensor& x, const DiffTensor& mean, const DiffTensor& chol);

// Sum over entries of log N(x; mu, sigma^2).
DiffTensor normal_log_density(const DiffTensor& x, const DiffTensor& mu, const DiffTensor& sigma);

// --------------------------------------------------------------------- Gamma

enum class GammaSampler { MarsagliaTsang, InverseCdf };
enum class GammaGradient { Implicit, Score };

// Thread-local sampling configuration.  InverseCdf makes samples smooth in the
// shape under fixed random numbers (used by finite-difference checks).
struct GammaConfig {
  GammaSampler sampler = GammaSampler::MarsagliaTsang;
  GammaGradient gradient = GammaGradient::Implicit;
};
GammaConfig& gamma_config();

class ScopedGammaConfig {
 public:
  explicit ScopedGammaConfig(GammaConfig cfg);
  ~ScopedGammaConfig();
  ScopedGammaConfig(const ScopedGammaConfig&) = delete;
  ScopedGammaConfig& operator=(const ScopedGammaConfig&) = delete;

 private:
  GammaConfig saved_;
};

// d g / d shape for a unit-rate gamma sample g, by implicit differentiation of
// the CDF with a central difference in the shape (step 1e-5).
double gamma_shape_derivative(double shape, double g);

struct GammaDraw {
  DiffTensor z;  // samples, same shape as the parameters
  // Log-density of the drawn unit-rate variates with the shape attached and
  // the variates held fixed; the score-function surrogate for the shape.
  DiffTensor shape_log_prob;
};

// Elementwise z ~ Gamma(shape, rate) with rate gradients through z = g / rate.
// Shape gradients use implicit reparameterization, or are left to the caller's
// score-function surrogate when gamma_config().gradient == Score.
GammaDraw gamma_sample_reparam(const DiffTensor& shape, const DiffTensor& rate, RngStream& rng);

// Sum over entries of log Gamma(x; shape, rate) in the shape/rate form.
DiffTensor gamma_log_density(const DiffTensor& x, const DiffTensor& shape, const DiffTensor& rate);

// ------------------------------------------------------------------- Wishart

// log Gamma_p(a)
double log_multigamma(double a, int p);

// min(nu, N); nu < N must be an integer.
int wishart_ntilde(int n, double nu);

// Singular or full-rank Wishart log-density (nats).  When check_rank is set,
// rank(G) must equal min(nu, N) under the 1e-8 relative singular-value rule.
DiffTensor wishart_log_density(const DiffTensor& g, const DiffTensor& sigma, double nu, bool check_rank = true);

DiffTensor inverse_wishart_log_density(const DiffTensor& g, const DiffTensor& sigma, double nu);

// Lower-trapezoidal Bartlett factor of a standard (possibly singular) Wishart.
struct BartlettFactor {
  Mat t;  // N x ntilde; columns beyond ntilde of the N x nu layout are zero
  int n = 0;
  int nu = 0;
  int ntilde = 0;
  // N x nu layout with zero padding.
  Mat padded() const;
};
BartlettFactor bartlett_sample(int n, int nu, RngStream& rng);

// G = L T T^T L^T with T from bartlett_sample.
Mat wishart_sample_bartlett(const Mat& sigma_chol, int nu, RngStream& rng);
// G = F F^T with F = L xi, xi an N x nu standard normal matrix.
Mat wishart_sample_outer(const Mat& sigma_chol, int nu, RngStream& rng);

// ----------------------------------------------------------------- Jacobians

enum class JacobianVariant { Llt, LeftMul, RightMul, Congruence };

struct JacobianFactors {
  int n = 0;
  int nu = 0;
  Mat lambda;  // Llt: N x ntilde lower-trapezoidal factor
  Mat l;       // LeftMul: N x N lower-triangular
  Mat b;       // RightMul: ntilde x ntilde lower-triangular
  Mat a;       // Congruence: N x N invertible
  Mat c;       // Congruence: N x N PSD of rank ntilde
};

// log |det J| of the maps Lambda -> Lambda Lambda^T, T -> L T, T -> T B and
// C -> A C A^T over their functionally independent coordinates.
double jacobian_logdet(JacobianVariant variant, const JacobianFactors& f);

// -------------------------------------------------- generalized singular Wishart

enum class GWishVariant { Base, A, AB };

struct GWishParams {
  int nu = 0;
  DiffTensor l;      // N x N lower-triangular root of the scale
  DiffTensor alpha;  // ntilde x 1, > 0
  DiffTensor beta;   // ntilde x 1, > 0
  DiffTensor mu;     // N x ntilde, entries below the diagonal are used
  DiffTensor sigma;  // N x ntilde, > 0 below the diagonal
  GWishVariant variant = GWishVariant::Base;
  DiffTensor a_lower;  // N x N, strictly lower part of the unit-lower LU factor
  DiffTensor a_upper;  // N x N, upper part (with nonzero diagonal) of the LU factor
  DiffTensor b;        // ntilde x ntilde lower-triangular with positive diagonal

  int n() const { return static_cast<int>(l.rows()); }
  int ntilde() const { return wishart_ntilde(n(), nu); }
};

// Standard-Wishart values for (alpha, beta, mu, sigma): ((nu-j+1)/2, 1/2, 0, 1).
GWishParams gwish_standard_params(const Mat& l, int nu);

struct GWishSample {
  DiffTensor g;       // N x N
  DiffTensor root;    // L [A] T [B], N x nu (zero padded); root root^T = g
  DiffTensor t;       // N x ntilde Bartlett factor
  DiffTensor log_density;
  // Score-function surrogate for gamma shapes (zero unless Score gradients).
  DiffTensor shape_log_prob;
};

// Samples G and evaluates log q(G) at that sample from the same T.  With stl,
// alpha/beta/mu/sigma enter log q only through the sample path.
GWishSample gwish_sample_and_logpdf(const GWishParams& p, RngStream& rng, bool stl = false);

// ------------------------------------------------------------ matrix normal

struct MatrixNormalParams {
  Mat mean;
  Mat row_cov;
  Mat col_cov;  // empty when identity
  bool col_identity = true;
};

// Conditional of F_t given F_i when rows of (F_i; F_t) are jointly Gaussian
// with covariance blocks S_ii, S_ti, S_tt and identity column covariance.
MatrixNormalParams matrix_normal_conditional(const Mat& s_ii, const Mat& s_ti, const Mat& s_tt, const Mat& f_i);

// Differentiable per-test-point form: mean rows and scalar row variances,
// given only the diagonal s_tt_diag (Nt x 1).
struct PointConditional {
  DiffTensor mean;  // Nt x cols(F_i)
  DiffTensor var;   // Nt x 1
};
PointConditional matrix_normal_point_conditional(const DiffTensor& s_ii, const DiffTensor& s_ti,
                                                 const DiffTensor& s_tt_diag, const DiffTensor& f_i);

// ------------------------------------------------------------------------ KL

// Sum over columns of KL(N(mq_k, Lq Lq^T) || N(mp_k, Lp Lp^T)).
DiffTensor kl_gaussian_full(const DiffTensor& mq, const DiffTensor& lq, const DiffTensor& mp, const DiffTensor& lp);
// Sum over entries of KL(N(mq, sq^2) || N(mp, sp^2)).
DiffTensor kl_gaussian_diag(const DiffTensor& mq, const DiffTensor& sq, const DiffTensor& mp, const DiffTensor& sp);
// Sum over entries of KL(Gamma(aq, bq) || Gamma(ap, bp)), shape/rate form.
DiffTensor kl_gamma(const DiffTensor& aq, const DiffTensor& bq, const DiffTensor& ap, const DiffTensor& bp);

}  // namespace vbl
