#include "vbl/parallel.hpp"
#include "vbl/dist.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace vbl;

namespace {

// Restores the OpenMP thread count on scope exit.
struct ThreadGuard {
  int saved = par::max_threads();
  ~ThreadGuard() { par::set_threads(saved); }
};

}  // namespace

TEST(Parallel, SqDistMatchesSerialBitwise) {
  ThreadGuard guard;
  RngStream rng(1);
  for (int threads : {1, 2, 4}) {
    par::set_threads(threads);
    for (auto [n, m, d] : {std::tuple{1, 1, 1}, std::tuple{7, 13, 3}, std::tuple{64, 33, 5}}) {
      const par::Mat x = rng.normal(n, d), y = rng.normal(m, d);
      EXPECT_EQ(par::sq_dist_parallel(x, y), par::sq_dist_serial(x, y)) << threads << " threads";
    }
  }
}

TEST(Parallel, SqDistAgreesWithExpandedForm) {
  RngStream rng(2);
  const par::Mat x = rng.normal(9, 4), y = rng.normal(6, 4);
  const par::Mat d = par::sq_dist_serial(x, y);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 6; ++j) EXPECT_NEAR(d(i, j), (x.row(i) - y.row(j)).squaredNorm(), 1e-12);
  EXPECT_GE(d.minCoeff(), 0.0);
}

TEST(Parallel, SqDistGradMatchesSerialBitwise) {
  ThreadGuard guard;
  RngStream rng(3);
  const par::Mat x = rng.normal(20, 3), y = rng.normal(11, 3), g = rng.normal(20, 11);
  par::Mat gx_s, gy_s;
  par::sq_dist_grad_serial(x, y, g, &gx_s, &gy_s);
  for (int threads : {1, 3}) {
    par::set_threads(threads);
    par::Mat gx_p, gy_p;
    par::sq_dist_grad_parallel(x, y, g, &gx_p, &gy_p);
    EXPECT_EQ(gx_p, gx_s);
    EXPECT_EQ(gy_p, gy_s);
    par::Mat only_y;
    par::sq_dist_grad_parallel(x, y, g, nullptr, &only_y);
    EXPECT_EQ(only_y, gy_s);
  }
}

TEST(Parallel, SqDistGradMatchesFiniteDifferences) {
  RngStream rng(4);
  const par::Mat x = rng.normal(4, 2), y = rng.normal(3, 2), g = rng.normal(4, 3);
  par::Mat gx, gy;
  par::sq_dist_grad_serial(x, y, g, &gx, &gy);
  auto loss = [&](const par::Mat& a, const par::Mat& b) { return par::sq_dist_serial(a, b).cwiseProduct(g).sum(); };
  const double h = 1e-6;
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 2; ++k) {
      par::Mat xp = x, xm = x;
      xp(i, k) += h;
      xm(i, k) -= h;
      EXPECT_NEAR(gx(i, k), (loss(xp, y) - loss(xm, y)) / (2 * h), 1e-6);
    }
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 2; ++k) {
      par::Mat yp = y, ym = y;
      yp(j, k) += h;
      ym(j, k) -= h;
      EXPECT_NEAR(gy(j, k), (loss(x, yp) - loss(x, ym)) / (2 * h), 1e-6);
    }
}

TEST(Parallel, MonteCarloMomentsIndependentOfThreadCount) {
  ThreadGuard guard;
  const par::DrawFn draw = [](RngStream& r) {
    par::Mat v(1, 2);
    v(0, 0) = r.normal();
    v(0, 1) = r.gamma(2.5);
    return v;
  };
  const RngStream base(5, 1);
  const par::Moments s = par::mc_moments_serial(draw, base, 20000);
  for (int threads : {1, 2, 5}) {
    par::set_threads(threads);
    const par::Moments p = par::mc_moments_parallel(draw, base, 20000);
    EXPECT_EQ(p.count, s.count);
    // Same draws, different summation order.
    EXPECT_LT((p.mean - s.mean).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((p.var - s.var).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((p.se_var - s.se_var).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Parallel, MonteCarloMomentsAreCalibrated) {
  // N(0, 1): mean 0, var 1; Gamma(2.5, 1): mean 2.5, var 2.5.
  const par::DrawFn draw = [](RngStream& r) {
    par::Mat v(1, 2);
    v(0, 0) = r.normal();
    v(0, 1) = r.gamma(2.5);
    return v;
  };
  const par::Moments m = par::mc_moments_parallel(draw, RngStream(6), 100000);
  EXPECT_LT(std::abs(m.mean(0, 0) - 0.0), 4.0 * m.se_mean(0, 0));
  EXPECT_LT(std::abs(m.mean(0, 1) - 2.5), 4.0 * m.se_mean(0, 1));
  EXPECT_LT(std::abs(m.var(0, 0) - 1.0), 4.0 * m.se_var(0, 0));
  EXPECT_LT(std::abs(m.var(0, 1) - 2.5), 4.0 * m.se_var(0, 1));
}

TEST(Parallel, EmptyAndSingleDrawEdgeCases) {
  const par::Mat x(0, 3), y = par::Mat::Ones(2, 3);
  EXPECT_EQ(par::sq_dist_parallel(x, y).rows(), 0);
  EXPECT_EQ(par::sq_dist_parallel(y, x).cols(), 0);
  const par::DrawFn draw = [](RngStream& r) { return par::Mat::Constant(1, 1, r.normal()); };
  const par::Moments m = par::mc_moments_parallel(draw, RngStream(7), 1);
  EXPECT_EQ(m.count, 1);
  EXPECT_TRUE(std::isfinite(m.mean(0, 0)));
}
