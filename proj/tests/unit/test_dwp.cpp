#include "vbl/deep.hpp"
#include "vbl/diff.hpp"
#include "vbl/dist.hpp"
#include "vbl/dwp.hpp"
#include "vbl/kernels.hpp"
#include "vbl/rng.hpp"

#include "model_test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <limits>

using namespace vbl;
using namespace vbl::test_util;

namespace {

Mat random_pd(Index n, RngStream& rng, double ridge = 0.5) {
  Mat a = rng.normal(n, n);
  return a * a.transpose() / static_cast<double>(n) + ridge * Mat::Identity(n, n);
}

Mat random_orthogonal(Index n, RngStream& rng) {
  Eigen::HouseholderQR<Mat> qr(rng.normal(n, n));
  return qr.householderQ();
}

Mat se_kernel(const Mat& x, double sf2, double ls) {
  Mat k(x.rows(), x.rows());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.rows(); ++j) k(i, j) = sf2 * std::exp(-0.5 * (x.row(i) - x.row(j)).squaredNorm() / (ls * ls));
  return k;
}

Vec upper_entries(const Mat& g) {
  Vec out(g.rows() * (g.rows() + 1) / 2);
  Index k = 0;
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = i; j < g.cols(); ++j) out(k++) = g(i, j);
  return out;
}

// Replicates each row of a `times` times (row-block order).
Mat repeat_rows(const Mat& a, Index times) { return a.replicate(times, 1); }

double lpdf_gaussian_2x2(const Vec& y, const Mat& cov) {
  Eigen::LLT<Mat> llt(cov);
  const Mat l = llt.matrixL();
  return -0.5 * y.dot(llt.solve(y)) - l.diagonal().array().log().sum() - 0.5 * y.size() * kLog2Pi;
}

void perturb_all(ParamStore& s, RngStream& rng, double scale) {
  for (std::size_t id = 0; id < s.size(); ++id) s.stored(id) += scale * rng.normal(s.stored(id).rows(), s.stored(id).cols());
}

}  // namespace

// ------------------------------------------------------------------- prior

TEST(DwpPrior, MonteCarloMeanIsKernelMatrix) {
  RngStream rng(11);
  const Mat k = random_pd(3, rng);
  for (int nu : {2, 5}) {
    Moments mom(6);
    for (int s = 0; s < 100000; ++s) mom.add(upper_entries(dwp_prior_layer(k, nu, rng).g));
    const Vec want = upper_entries(k);
    for (Index e = 0; e < 6; ++e) EXPECT_LT(std::abs(mom.mean()(e) - want(e)), 3 * mom.se()(e)) << "nu=" << nu << " entry " << e;
  }
}

TEST(DwpPrior, EntrywiseVarianceMatchesWishartFormula) {
  RngStream rng(12);
  const Mat k = random_pd(3, rng);
  const int nu = 3;
  const Mat sig = k / nu;
  std::vector<std::vector<double>> draws(6);
  for (int s = 0; s < 100000; ++s) {
    Vec e = upper_entries(dwp_prior_layer(k, nu, rng).g);
    for (Index i = 0; i < 6; ++i) draws[i].push_back(e(i));
  }
  Index e = 0;
  for (Index i = 0; i < 3; ++i)
    for (Index j = i; j < 3; ++j, ++e) {
      const double want = nu * (sig(i, j) * sig(i, j) + sig(i, i) * sig(j, j));
      // Sample variance and its standard error from the fourth central moment.
      const auto& d = draws[e];
      const double n = static_cast<double>(d.size());
      const double m = std::accumulate(d.begin(), d.end(), 0.0) / n;
      double m2 = 0.0, m4 = 0.0;
      for (double x : d) {
        m2 += std::pow(x - m, 2);
        m4 += std::pow(x - m, 4);
      }
      m2 /= n;
      m4 /= n;
      const double se = std::sqrt((m4 - m2 * m2) / n);
      EXPECT_LT(std::abs(m2 - want), 3 * se) << i << "," << j;
    }
}

TEST(DwpPrior, MatchesZeroMeanDgpLayerMoments) {
  RngStream rng(13);
  const int n = 4, nu = 3, draws = 200000;
  const Mat k = random_pd(n, rng);
  const Mat lk = cholesky_value(k);
  Moments wish(10), dgp(10), wish_sq(10), dgp_sq(10);
  for (int s = 0; s < draws; ++s) {
    const Vec a = upper_entries(dwp_prior_layer(k, nu, rng).g);
    const Mat f = lk * rng.normal(n, nu);
    const Vec b = upper_entries(f * f.transpose() / nu);
    wish.add(a);
    dgp.add(b);
    wish_sq.add(a.cwiseProduct(a));
    dgp_sq.add(b.cwiseProduct(b));
  }
  for (Index e = 0; e < 10; ++e) {
    const double se1 = std::hypot(wish.se()(e), dgp.se()(e));
    EXPECT_LT(std::abs(wish.mean()(e) - dgp.mean()(e)), 3 * se1) << "mean " << e;
    const double se2 = std::hypot(wish_sq.se()(e), dgp_sq.se()(e));
    EXPECT_LT(std::abs(wish_sq.mean()(e) - dgp_sq.mean()(e)), 3 * se2) << "second moment " << e;
  }
}

TEST(DwpPrior, GramKernelOverloadUsesKernelOfPreviousLayer) {
  RngStream rng(14);
  const Mat x = rng.normal(3, 2);
  KernelParams kp = KernelParams::make(1.3, 0.8, 1);
  kp.log_noise = DiffTensor::scalar(std::log(0.1));
  const Mat k = add_layer_noise(se_ard_features(kp, DiffTensor(x), DiffTensor(x)), kp).value();
  RngStream a(5), b(5);
  DwpPriorSample s1 = dwp_prior_layer(kp, Mat(x * x.transpose() / 2.0), 2.0, 4, a);
  DwpPriorSample s2 = dwp_prior_layer(k, 4, b);
  EXPECT_LT(max_abs(s1.g - s2.g), 1e-10);
  EXPECT_NEAR(s1.log_density, s2.log_density, 1e-8);
}

TEST(DwpPrior, NonPositiveDefiniteKernelIsAnError) {
  RngStream rng(15);
  EXPECT_THROW(dwp_prior_layer(Mat(Vec::LinSpaced(3, -1.0, 1.0).asDiagonal()), 2, rng), NumericError);
  EXPECT_THROW(dwp_prior_layer(Mat::Identity(3, 3), 0, rng), NumericError);
}

// ------------------------------------------------------------- posterior

TEST(DwpPosterior, PriorReductionHasZeroIncrement) {
  RngStream rng(21);
  for (int nu : {2, 4}) {
    const Mat k = random_pd(3, rng);
    GWishLayerValues layer = gwish_reduction_values(3, nu, GWishVariant::Base, rng.normal(3, 3), 0.0);
    for (int s = 0; s < 200; ++s) {
      DwpPosteriorSample p = dwp_posterior_layer(DiffTensor(k), layer, rng);
      EXPECT_NEAR(p.increment.item(), 0.0, 1e-8);
    }
  }
}

TEST(DwpPosterior, FullMixingIgnoresPreviousLayer) {
  RngStream rng(22);
  const Mat v = rng.normal(3, 3);
  GWishLayerValues layer = gwish_reduction_values(3, 2, GWishVariant::Base, v, 1.0);
  RngStream a(7), b(7);
  DwpPosteriorSample s1 = dwp_posterior_layer(DiffTensor(random_pd(3, rng)), layer, a);
  DwpPosteriorSample s2 = dwp_posterior_layer(DiffTensor(random_pd(3, rng)), layer, b);
  EXPECT_LT(max_abs(s1.g.value() - s2.g.value()), 1e-12);
  // The sample is a Wishart draw with scale V V^T.
  EXPECT_NEAR(s1.log_q.item(), wishart_log_density(s1.g, DiffTensor(Mat(v * v.transpose())), 2, false).item(), 1e-8);
}

TEST(DwpPosterior, BaseDensityAtReductionIsWishartDensity) {
  RngStream rng(23);
  for (int nu : {2, 3, 5}) {
    const Mat k = random_pd(3, rng);
    const Mat v = rng.normal(3, 3);
    const double q = 0.3;
    const Mat psi = (1 - q) * k / nu + q * v * v.transpose();
    GWishLayerValues layer = gwish_reduction_values(3, nu, GWishVariant::Base, v, q);
    for (int s = 0; s < 20; ++s) {
      DwpPosteriorSample p = dwp_posterior_layer(DiffTensor(k), layer, rng);
      EXPECT_NEAR(p.log_q.item(), wishart_log_density(p.g, DiffTensor(psi), nu, false).item(), 1e-8) << nu;
      EXPECT_NEAR(p.log_p.item(), wishart_log_density(p.g, DiffTensor(Mat(k / nu)), nu, false).item(), 1e-10);
    }
  }
}

TEST(DwpPosterior, VariantsNestAtIdentityFactors) {
  RngStream rng(24);
  const Mat k = random_pd(4, rng);
  for (int nu : {2, 6}) {
    GWishLayerValues base = gwish_reduction_values(4, nu, GWishVariant::Base, rng.normal(4, 4), 0.4);
    const Index nt = base.mu.cols();
    base.mu = DiffTensor(Mat(0.3 * rng.normal(4, nt)));
    base.alpha = DiffTensor(Mat(base.alpha.value().array() + 0.7));
    GWishLayerValues a = base, ab = base;
    a.variant = GWishVariant::A;
    ab.variant = GWishVariant::AB;
    RngStream r1(3), r2(3), r3(3);
    DwpPosteriorSample s0 = dwp_posterior_layer(DiffTensor(k), base, r1);
    DwpPosteriorSample s1 = dwp_posterior_layer(DiffTensor(k), a, r2);
    DwpPosteriorSample s2 = dwp_posterior_layer(DiffTensor(k), ab, r3);
    EXPECT_LT(max_abs(s0.g.value() - s1.g.value()), 1e-12);
    EXPECT_LT(max_abs(s0.g.value() - s2.g.value()), 1e-12);
    EXPECT_NEAR(s0.log_q.item(), s1.log_q.item(), 1e-10);
    EXPECT_NEAR(s0.log_q.item(), s2.log_q.item(), 1e-10);
  }
}

TEST(DwpPosterior, RootReproducesGramWithPadding) {
  RngStream rng(25);
  const Mat k = random_pd(3, rng);
  for (int nu : {2, 3, 5}) {
    GWishLayerValues layer = gwish_reduction_values(3, nu, GWishVariant::Base, rng.normal(3, 3), 0.5);
    DwpPosteriorSample p = dwp_posterior_layer(DiffTensor(k), layer, rng);
    EXPECT_EQ(p.root.rows(), 3);
    EXPECT_EQ(p.root.cols(), nu);
    EXPECT_LT(max_abs(p.root.value() * p.root.value().transpose() - p.g.value()), 1e-12);
  }
}

TEST(DwpPosterior, KlIsNonNegative) {
  RngStream rng(26);
  const Mat k = random_pd(3, rng);
  for (int nu : {2, 4}) {
    GWishLayerValues layer = gwish_reduction_values(3, nu, GWishVariant::AB, rng.normal(3, 3), 0.6);
    const Index nt = layer.mu.cols();
    layer.mu = DiffTensor(Mat(0.4 * rng.normal(3, nt)));
    layer.sigma = DiffTensor(Mat(Mat::Constant(3, nt, 0.7)));
    layer.alpha = DiffTensor(Mat(layer.alpha.value() * 1.5));
    layer.beta = DiffTensor(Mat::Constant(nt, 1, 0.8));
    Mat a_up = Mat::Identity(3, 3) + 0.2 * Mat(rng.normal(3, 3).triangularView<Eigen::StrictlyUpper>());
    layer.a_upper = DiffTensor(a_up);
    layer.a_lower = DiffTensor(Mat(0.3 * rng.normal(3, 3)));
    std::vector<double> kl;
    for (int s = 0; s < 10000; ++s) kl.push_back(-dwp_posterior_layer(DiffTensor(k), layer, rng).increment.item());
    MeanSe m = mean_se(kl);
    EXPECT_GT(m.mean, -3 * m.se) << nu;
  }
}

TEST(DwpPosterior, IndefiniteMixedScaleIsAnError) {
  RngStream rng(27);
  GWishLayerValues layer = gwish_reduction_values(3, 2, GWishVariant::Base, Mat::Zero(3, 3), 0.0);
  EXPECT_THROW(dwp_posterior_layer(DiffTensor(Mat(-Mat::Identity(3, 3))), layer, rng), NumericError);
  layer.q = DiffTensor::scalar(1.5);
  EXPECT_THROW(dwp_posterior_layer(DiffTensor(random_pd(3, rng)), layer, rng), NumericError);
}

// ---------------------------------------------------- test-point conditional

TEST(DwpConditional, TestPointAtInducingPointCopiesItsRow) {
  RngStream rng(31);
  const Mat xi = rng.normal(3, 2);
  const Mat k = se_kernel(xi, 1.0, 1.0);
  GWishLayerValues layer = gwish_reduction_values(3, 2, GWishVariant::Base, rng.normal(3, 3), 0.3);
  DwpPosteriorSample p = dwp_posterior_layer(DiffTensor(k), layer, rng);
  TestGram tg = dwp_conditional_testpoints(p.root, DiffTensor(k), DiffTensor(Mat(k.row(1))),
                                           DiffTensor(Mat::Constant(1, 1, k(1, 1))), 2, rng);
  EXPECT_LT(max_abs(tg.g_ti.value() - p.g.value().row(1)), 1e-5);
  EXPECT_NEAR(tg.g_tt_diag.item(), p.g.value()(1, 1), 1e-5);
}

TEST(DwpConditional, MomentsDoNotDependOnChoiceOfRoot) {
  RngStream rng(32);
  const int m = 3, nu = 2, reps = 50000;
  const Mat xall = rng.normal(m + 2, 2);
  const Mat kall = se_kernel(xall, 1.0, 1.2) + 1e-2 * Mat::Identity(m + 2, m + 2);
  const Mat k_ii = kall.topLeftCorner(m, m);
  GWishLayerValues layer = gwish_reduction_values(m, nu, GWishVariant::Base, rng.normal(m, m), 0.2);
  const Mat root = dwp_posterior_layer(DiffTensor(k_ii), layer, rng).root.value();
  const Mat rotated = root * random_orthogonal(nu, rng);
  const Mat k_ti = repeat_rows(kall.bottomLeftCorner(2, m), reps);
  const Mat k_tt = repeat_rows(kall.bottomRightCorner(2, 2).diagonal(), reps);
  TestGram a = dwp_conditional_testpoints(DiffTensor(root), DiffTensor(k_ii), DiffTensor(k_ti), DiffTensor(k_tt), nu, rng);
  TestGram b =
      dwp_conditional_testpoints(DiffTensor(rotated), DiffTensor(k_ii), DiffTensor(k_ti), DiffTensor(k_tt), nu, rng);
  for (int t = 0; t < 2; ++t) {
    Moments ma(m + 1), mb(m + 1), sa(m + 1), sb(m + 1);
    for (int r = 0; r < reps; ++r) {
      const Index row = static_cast<Index>(r) * 2 + t;
      Vec va(m + 1), vb(m + 1);
      va << a.g_ti.value().row(row).transpose(), a.g_tt_diag.value()(row, 0);
      vb << b.g_ti.value().row(row).transpose(), b.g_tt_diag.value()(row, 0);
      ma.add(va);
      mb.add(vb);
      sa.add(va.cwiseProduct(va));
      sb.add(vb.cwiseProduct(vb));
    }
    for (Index e = 0; e <= m; ++e) {
      EXPECT_LT(std::abs(ma.mean()(e) - mb.mean()(e)), 3 * std::hypot(ma.se()(e), mb.se()(e))) << t << " " << e;
      EXPECT_LT(std::abs(sa.mean()(e) - sb.mean()(e)), 3 * std::hypot(sa.se()(e), sb.se()(e))) << t << " " << e;
    }
  }
}

TEST(DwpConditional, MatchesJointWishartSamplingNearTarget) {
  // Joint Wishart over two inducing points and one test point, conditioned by
  // accepting draws whose inducing block lies in a small box around a target.
  RngStream rng(33);
  const int nu = 2;
  Mat k(3, 3);
  k << 1.0, 0.4, 0.3, 0.4, 1.0, 0.5, 0.3, 0.5, 1.0;
  const Mat s = k / nu;
  const Mat target = k.topLeftCorner(2, 2);  // the prior mean of G_ii
  const double eps = 0.06;
  const Eigen::Matrix3d ls = cholesky_value(s);
  Moments brute(3), brute_sq(3);
  for (long d = 0; d < 30000000L && brute.count < 20000; ++d) {
    Eigen::Matrix<double, 3, 2> z;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) z(i, j) = rng.normal();
    const Eigen::Matrix<double, 3, 2> f = ls * z;
    const Eigen::Matrix3d g = f * f.transpose();
    if (std::abs(g(0, 0) - target(0, 0)) > eps || std::abs(g(1, 1) - target(1, 1)) > eps ||
        std::abs(g(0, 1) - target(0, 1)) > eps)
      continue;
    Vec v(3);
    v << g(2, 0), g(2, 1), g(2, 2);
    brute.add(v);
    brute_sq.add(v.cwiseProduct(v));
  }
  ASSERT_GE(brute.count, 2000);
  const int reps = 100000;
  const Mat root = cholesky_value(target);
  TestGram tg = dwp_conditional_testpoints(DiffTensor(root), DiffTensor(Mat(k.topLeftCorner(2, 2))),
                                           DiffTensor(repeat_rows(k.bottomLeftCorner(1, 2), reps)),
                                           DiffTensor(Mat::Constant(reps, 1, k(2, 2))), nu, rng);
  Moments cond(3), cond_sq(3);
  for (int r = 0; r < reps; ++r) {
    Vec v(3);
    v << tg.g_ti.value()(r, 0), tg.g_ti.value()(r, 1), tg.g_tt_diag.value()(r, 0);
    cond.add(v);
    cond_sq.add(v.cwiseProduct(v));
  }
  for (Index e = 0; e < 3; ++e) {
    // Box-averaging bias is second order in eps; allow a small absolute margin.
    EXPECT_LT(std::abs(cond.mean()(e) - brute.mean()(e)), 3.5 * std::hypot(cond.se()(e), brute.se()(e)) + 5e-3) << e;
    EXPECT_LT(std::abs(cond_sq.mean()(e) - brute_sq.mean()(e)),
              3.5 * std::hypot(cond_sq.se()(e), brute_sq.se()(e)) + 5e-3)
        << e;
  }
}

TEST(DwpConditional, ShapeViolationsAreErrors) {
  RngStream rng(34);
  const Mat k = random_pd(3, rng);
  EXPECT_THROW(dwp_conditional_testpoints(DiffTensor(Mat::Zero(3, 2)), DiffTensor(k), DiffTensor(Mat::Zero(2, 3)),
                                          DiffTensor(Mat::Ones(2, 1)), 3, rng),
               NumericError);
  EXPECT_THROW(dwp_conditional_testpoints(DiffTensor(Mat::Zero(3, 2)), DiffTensor(k), DiffTensor(Mat::Zero(2, 2)),
                                          DiffTensor(Mat::Ones(2, 1)), 2, rng),
               NumericError);
}

// ------------------------------------------------------------------ model

namespace {

struct Toy {
  Mat x, y;
};
Toy toy(Index n, Index d, RngStream& rng) {
  Toy t;
  t.x = rng.normal(n, d);
  t.y = t.x.rowwise().sum().array().sin().matrix() + 0.1 * rng.normal(n, 1);
  return t;
}

DwpConfig small_config(int d, int gram_layers, int m, GWishVariant variant, int nu = 0) {
  DwpConfig cfg;
  cfg.input_dim = d;
  cfg.gram_layers = gram_layers;
  cfg.inducing = m;
  cfg.variant = variant;
  cfg.nu = nu;
  return cfg;
}

}  // namespace

TEST(DwpModel, KindNamesAndVariantParsing) {
  RngStream rng(40);
  Toy t = toy(6, 2, rng);
  EXPECT_EQ(DwpModel(small_config(2, 1, 3, GWishVariant::Base), t.x, t.y, rng).kind(), "dwp");
  EXPECT_EQ(DwpModel(small_config(2, 1, 3, GWishVariant::A), t.x, t.y, rng).kind(), "dwp-a");
  EXPECT_EQ(DwpModel(small_config(2, 1, 3, GWishVariant::AB), t.x, t.y, rng).kind(), "dwp-ab");
  EXPECT_EQ(parse_gwish_variant("ab"), GWishVariant::AB);
  EXPECT_THROW(parse_gwish_variant("c"), NumericError);
}

TEST(DwpModel, ZeroGramLayersEqualsGlobalInducingGp) {
  RngStream rng(41);
  Toy t = toy(12, 2, rng);
  DgpConfig gcfg;
  gcfg.input_dim = 2;
  gcfg.depth = 1;
  gcfg.inducing = 6;
  GiDgpModel gi(gcfg, t.x, t.y, rng);
  DwpModel dwp(small_config(2, 0, 6, GWishVariant::Base), t.x, t.y, rng);
  ParamStore& a = gi.params();
  ParamStore& b = dwp.params();
  a.set_value(a.find("kernel.log_sf0"), Mat::Constant(1, 1, 0.3));
  a.set_value(a.find("kernel.log_ls0"), Mat::Constant(1, 1, -0.2));
  a.set_value(a.find("gi.log_prec0"), Mat(0.5 * rng.normal(6, 1)));
  a.set_value(a.find("gi.u0"), rng.normal(6, 2));
  const std::pair<const char*, const char*> pairs[] = {{"gi.u0", "dwp.xi"},
                                                      {"gi.v0", "gi.v"},
                                                      {"gi.log_prec0", "gi.log_prec"},
                                                      {"kernel.log_sf0", "kernel.log_sf0"},
                                                      {"kernel.log_ls0", "kernel.log_ls0"},
                                                      {"lik.log_noise_var", "lik.log_noise_var"}};
  for (const auto& [from, to] : pairs) b.set_value(b.find(to), a.value(a.find(from)));
  EXPECT_EQ(a.total_scalars(), b.total_scalars());
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const double e1 = elbo_value(gi, t.x, t.y, 4, seed);
    const double e2 = elbo_value(dwp, t.x, t.y, 4, seed);
    EXPECT_NEAR(e1, e2, 1e-10);
  }
  RngStream r1(9), r2(9);
  Predictive p1 = gi.predict(ParamView(a, nullptr), t.x, 3, r1);
  Predictive p2 = dwp.predict(ParamView(b, nullptr), t.x, 3, r2);
  EXPECT_LT(max_abs(p1.average_mean() - p2.average_mean()), 1e-10);
}

TEST(DwpModel, ElboIsInvariantToInputRotation) {
  RngStream rng(42);
  Toy t = toy(9, 3, rng);
  const Mat q = random_orthogonal(3, rng);
  for (GWishVariant v : {GWishVariant::Base, GWishVariant::AB}) {
    DwpModel model(small_config(3, 2, 5, v), t.x, t.y, rng);
    perturb_all(model.params(), rng, 0.05);
    const int xi = model.xi_id();
    const Mat xi0 = model.params().value(xi);
    const double e1 = elbo_value(model, t.x, t.y, 3, 77);
    model.params().set_value(xi, xi0 * q);
    const double e2 = elbo_value(model, t.x * q, t.y, 3, 77);
    EXPECT_NEAR(e1, e2, 1e-10);
  }
}

TEST(DwpModel, PriorReductionElboHasAnalyticMean) {
  // With every layer at the prior and no data precision, the per-point
  // predictive marginal is N(0, sf^2) whatever the Gram matrices are.
  RngStream rng(43);
  Toy t = toy(3, 2, rng);
  DwpModel model(small_config(2, 2, 4, GWishVariant::Base), t.x, t.y, rng);
  ParamStore& s = model.params();
  for (int l = 0; l < 2; ++l) s.set_value(model.layer(l).q_id(), Mat::Constant(1, 1, -40.0));
  s.set_value(model.log_prec_id(), Mat::Constant(4, 1, -60.0));
  const double log_sf = 0.2;
  s.set_value(model.kernel_ids(2).log_sf, Mat::Constant(1, 1, log_sf));
  const double nv = std::exp(s.value(model.noise_id())(0, 0));
  double want = 0.0;
  for (Index n = 0; n < t.y.rows(); ++n)
    want += -0.5 * std::log(2 * M_PI * nv) - 0.5 * (t.y(n, 0) * t.y(n, 0) + std::exp(2 * log_sf)) / nv;
  std::vector<double> v;
  for (int r = 0; r < 10000; ++r) v.push_back(model.elbo(ParamView(s, nullptr), t.x, t.y, 3.0, 1, rng).value());
  MeanSe m = mean_se(v);
  EXPECT_LT(std::abs(m.mean - want), 3 * m.se) << m.mean << " vs " << want;
}

TEST(DwpModel, GradientsMatchFiniteDifferences) {
  ScopedGammaConfig cfg(GammaConfig{GammaSampler::InverseCdf, GammaGradient::Implicit});
  RngStream rng(44);
  Toy t = toy(5, 2, rng);
  struct Case {
    int gram_layers, m, nu;
    GWishVariant v;
  };
  for (Case c : {Case{1, 4, 0, GWishVariant::Base}, Case{1, 4, 0, GWishVariant::A}, Case{1, 3, 0, GWishVariant::AB},
                 Case{2, 3, 4, GWishVariant::AB}}) {
    DwpModel model(small_config(2, c.gram_layers, c.m, c.v, c.nu), t.x, t.y, rng);
    perturb_all(model.params(), rng, 0.1);
    SCOPED_TRACE(model.kind() + " L=" + std::to_string(c.gram_layers));
    expect_model_gradients(model, t.x, t.y, 2, 5, 1e-4);
  }
}

TEST(DwpModel, StickingTheLandingOnlyChangesBartlettGradients) {
  RngStream rng(45);
  Toy t = toy(5, 2, rng);
  DwpModel model(small_config(2, 1, 4, GWishVariant::A), t.x, t.y, rng);
  perturb_all(model.params(), rng, 0.1);
  const double e0 = elbo_value(model, t.x, t.y, 2, 8);
  std::vector<Mat> g0 = elbo_gradients(model, t.x, t.y, 2, 8);
  model.set_stl(true);
  EXPECT_EQ(e0, elbo_value(model, t.x, t.y, 2, 8));
  std::vector<Mat> g1 = elbo_gradients(model, t.x, t.y, 2, 8);
  const GWishLayerParams& layer = model.layer(0);
  for (int id : {layer.v_id(), layer.q_id(), layer.a_lower_id(), layer.a_upper_id(), model.xi_id()})
    EXPECT_LT(max_abs(g0[id] - g1[id]), 1e-10) << model.params().name(id);
  double changed = 0.0;
  for (int id : {layer.alpha_id(), layer.beta_id(), layer.mu_id(), layer.sigma_id()})
    changed = std::max(changed, max_abs(g0[id] - g1[id]));
  EXPECT_GT(changed, 1e-6);
}

TEST(DwpModel, BatchCostIsAffineInBatchSize) {
  RngStream rng(46);
  const int base = 400;
  Toy t = toy(4 * base, 2, rng);
  DwpModel model(small_config(2, 2, 20, GWishVariant::Base), t.x, t.y, rng);
  auto time_batch = [&](int n) {
    std::vector<double> runs;
    for (int r = 0; r < 7; ++r) {
      RngStream er(r);
      const auto t0 = std::chrono::steady_clock::now();
      model.elbo(ParamView(model.params(), nullptr), t.x.topRows(n), t.y.topRows(n), 4.0 * base, 1, er);
      runs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::nth_element(runs.begin(), runs.begin() + 3, runs.end());
    return runs[3];
  };
  time_batch(base);  // warm-up
  const double t1 = time_batch(base), t2 = time_batch(2 * base), t4 = time_batch(4 * base);
  const double predicted = t1 + 3.0 * (t2 - t1);
  EXPECT_LT(std::abs(predicted - t4) / t4, 0.3) << t1 << " " << t2 << " " << t4;
}

// ---------------------------------------------------- inducing extension

TEST(InducingExtension, PriorScaleGivesPriorBlock) {
  RngStream rng(51);
  const Mat joint = random_pd(4, rng);
  const Mat suu = joint.topLeftCorner(3, 3);
  InducingExtension e = wishart_inducing_extension(suu, joint.topRightCorner(3, 1), joint(3, 3), suu);
  EXPECT_LT(max_abs(e.x - joint.topRightCorner(3, 1)), 1e-12);
  EXPECT_NEAR(e.a, joint(3, 3), 1e-12);
  EXPECT_TRUE(e.feasible);
}

TEST(InducingExtension, ConditionalMatchesPriorConditional) {
  RngStream rng(52);
  for (int rep = 0; rep < 20; ++rep) {
    const Mat joint = random_pd(4, rng);
    const Mat psi = random_pd(3, rng);
    InducingExtension e = wishart_inducing_extension(joint.topLeftCorner(3, 3), joint.topRightCorner(3, 1), joint(3, 3), psi);
    EXPECT_LT(e.coef_error, 1e-10);
    EXPECT_LT(e.schur_error, 1e-10);
    EXPECT_TRUE(e.feasible);
    // Direct check: the extended joint scale is positive definite.
    Mat ext(4, 4);
    ext << psi, e.x, e.x.transpose(), e.a;
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat>(ext).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(InducingExtension, InverseWishartAnalogueHasResidual) {
  RngStream rng(53);
  const Mat joint = random_pd(4, rng);
  const Mat suu = joint.topLeftCorner(3, 3);
  EXPECT_LT(inverse_wishart_extension_residual(suu, joint.topRightCorner(3, 1), joint(3, 3), suu), 1e-12);
  const double r = inverse_wishart_extension_residual(suu, joint.topRightCorner(3, 1), joint(3, 3), random_pd(3, rng));
  EXPECT_GT(r, 1e-6);
}

// ------------------------------------------------------- data processing

TEST(DataProcessing, BestGramPosteriorIsAtLeastBestFeaturePosterior) {
  // One layer, N = nu = 2.  Feature posteriors: columns of F iid N(0, nu Psi).
  // Gram posteriors: generalized Wishart with scale Psi and Bartlett offsets.
  // The likelihood depends on G = F F^T / nu through an output GP.
  const int nu = 2, draws = 6000;
  Mat k(2, 2);
  k << 1.0, 0.5, 0.5, 1.0;
  Vec y(2);
  y << 1.2, -0.8;
  const double nv = 0.1;
  const KernelParams kp = KernelParams::make(1.0, 1.0, 1);
  auto loglik = [&](const Mat& g) {
    Mat kout = se_from_gram(kp, DiffTensor(g), nu).value() + nv * Mat::Identity(2, 2);
    return lpdf_gaussian_2x2(y, kout);
  };
  const Mat prior_chol = cholesky_value(k);
  MeanSe best_feat{-std::numeric_limits<double>::infinity(), 0.0}, best_gram = best_feat;
  RngStream rng(61);
  for (double d1 : {0.3, 0.5, 0.8})
    for (double d2 : {0.3, 0.5, 0.8})
      for (double rho : {-0.6, -0.2, 0.2, 0.5}) {
        Mat psi(2, 2);
        psi << d1 * d1, rho * d1 * d2, rho * d1 * d2, d2 * d2;
        const Mat lf = cholesky_value(Mat(nu * psi));
        const double kl = nu * kl_gaussian_full(DiffTensor(Mat::Zero(2, 1)), DiffTensor(lf), DiffTensor(Mat::Zero(2, 1)),
                                               DiffTensor(prior_chol))
                                   .item();
        std::vector<double> fe;
        for (int s = 0; s < draws; ++s) {
          const Mat f = lf * rng.normal(2, nu);
          fe.push_back(loglik(f * f.transpose() / nu) - kl);
        }
        MeanSe mf = mean_se(fe);
        if (mf.mean > best_feat.mean) best_feat = mf;

        // Gram grid: the matched Wishart plus Bartlett offsets.
        for (double mu21 : {0.0, -0.3}) {
          GWishLayerValues layer = gwish_reduction_values(2, nu, GWishVariant::Base, cholesky_value(psi), 1.0);
          layer.mu = DiffTensor(Mat((Mat(2, 2) << 0.0, 0.0, mu21, 0.0).finished()));
          std::vector<double> ge;
          for (int s = 0; s < draws; ++s) {
            DwpPosteriorSample p = dwp_posterior_layer(DiffTensor(k), layer, rng);
            ge.push_back(loglik(p.g.value()) + p.increment.item());
          }
          MeanSe mg = mean_se(ge);
          if (mg.mean > best_gram.mean) best_gram = mg;
        }
      }
  std::printf("data processing: best gram %.4f (se %.4f), best feature %.4f (se %.4f)\n", best_gram.mean, best_gram.se,
              best_feat.mean, best_feat.se);
  EXPECT_GE(best_gram.mean, best_feat.mean - 3 * std::hypot(best_gram.se, best_feat.se))
      << "gram " << best_gram.mean << " feature " << best_feat.mean;
}
