#include "vbl/diff.hpp"
#include "vbl/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace vbl;

namespace {

Mat random_pd(RngStream& rng, Index n, double ridge = 1.0) {
  Mat b = rng.normal(n, n);
  return b * b.transpose() + ridge * Mat::Identity(n, n);
}

// Symmetrized view of a free parameter, so finite differences move s_ij and
// s_ji together.
DiffTensor sym(const DiffTensor& p) { return scale(p + transpose(p), 0.5); }

}  // namespace

TEST(Matmul, IdentityAndHandArithmetic) {
  Mat m(2, 2);
  m << 1.5, -2, 3, 4;
  EXPECT_EQ(matmul(DiffTensor(Mat::Identity(2, 2)), DiffTensor(m)).value(), m);

  Mat a(2, 2), b(2, 1), want(2, 1);
  a << 1, 2, 3, 4;
  b << 5, 6;
  want << 17, 39;
  EXPECT_EQ(matmul(DiffTensor(a), DiffTensor(b)).value(), want);
}

TEST(Matmul, TraceGradientIsTranspose) {
  RngStream rng(3);
  Mat a = rng.normal(3, 3), b = rng.normal(3, 3);
  Tape tape;
  DiffTensor ta = tape.leaf(a);
  DiffTensor loss = trace(matmul(ta, DiffTensor(b)));
  tape.backward(loss);
  EXPECT_LT((tape.grad(ta) - b.transpose()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Matmul, DimensionMismatchThrows) {
  EXPECT_THROW(matmul(DiffTensor(Mat::Zero(2, 3)), DiffTensor(Mat::Zero(2, 3))), NumericError);
}

TEST(Cholesky, IdentityAndTwoByTwo) {
  EXPECT_EQ(cholesky_factor(DiffTensor(Mat::Identity(3, 3))).value(), Mat::Identity(3, 3));
  Mat s(2, 2), want(2, 2);
  s << 4, 2, 2, 5;
  want << 2, 0, 1, 2;
  Mat l = cholesky_factor(DiffTensor(s)).value();
  EXPECT_LT((l - want).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((l * l.transpose() - s).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Cholesky, ReconstructsIllConditioned) {
  RngStream rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::HouseholderQR<Mat> qr(rng.normal(6, 6));
    Mat q = qr.householderQ();
    Vec ev = Vec::LinSpaced(6, 0.0, 6.0).unaryExpr([](double x) { return std::pow(10.0, x); });
    Mat raw = q * ev.asDiagonal() * q.transpose() / ev.maxCoeff();
    Mat s = 0.5 * (raw + raw.transpose());
    Mat l = cholesky_value(s);
    EXPECT_LT((l * l.transpose() - s).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_TRUE((l.diagonal().array() > 0).all());
  }
}

TEST(Cholesky, NotPositiveDefiniteNamesPivot) {
  Mat s = Mat::Identity(3, 3);
  s(2, 2) = -1.0;
  try {
    cholesky_value(s);
    FAIL() << "expected failure";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("pivot 2"), std::string::npos) << e.what();
  }
}

TEST(Cholesky, JitterRescuesSemidefinite) {
  Mat f(3, 2);
  f << 1, 0, 0, 1, 1, 1;
  CholeskyInfo info;
  Mat l = cholesky_value(f * f.transpose(), &info);
  EXPECT_GT(info.jitter, 0.0);
  EXPECT_LE(info.jitter, 1e-4 * (f * f.transpose()).diagonal().mean());
  EXPECT_LT((l * l.transpose() - f * f.transpose()).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Cholesky, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RngStream rng(seed);
    Mat s = random_pd(rng, 4);
    auto rep = finite_diff_check([](const std::vector<DiffTensor>& p) { return sum(cholesky_factor(sym(p[0]))); },
                                 {s}, 1e-5, 1e-5);
    EXPECT_TRUE(rep.pass) << "seed " << seed << " err " << rep.worst;
  }
}

TEST(TriangularSolve, IdentityAndHandCase) {
  Mat b(2, 1);
  b << 3, -1;
  EXPECT_EQ(triangular_solve(DiffTensor(Mat::Identity(2, 2)), DiffTensor(b)).value(), b);
  Mat l(2, 2), rhs(2, 1), want(2, 1);
  l << 2, 0, 1, 2;
  rhs << 2, 5;
  want << 1, 2;
  EXPECT_LT((triangular_solve(DiffTensor(l), DiffTensor(rhs)).value() - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(TriangularSolve, TwoSolvesMatchDenseInverse) {
  RngStream rng(5);
  Mat s = random_pd(rng, 5);
  Mat b = rng.normal(5, 3);
  DiffTensor l = cholesky_factor(DiffTensor(s));
  Mat x = cholesky_solve(l, DiffTensor(b)).value();
  EXPECT_LT((x - s.inverse() * b).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(TriangularSolve, ZeroDiagonalThrows) {
  Mat l = Mat::Identity(2, 2);
  l(1, 1) = 0.0;
  EXPECT_THROW(triangular_solve(DiffTensor(l), DiffTensor(Mat::Ones(2, 1))), NumericError);
}

TEST(TriangularSolve, GradientsBothOrientations) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RngStream rng(seed + 100);
    Mat l = cholesky_value(random_pd(rng, 4));
    Mat b = rng.normal(4, 2);
    Mat w = rng.normal(4, 2);
    for (bool tr : {false, true}) {
      auto rep = finite_diff_check(
          [&](const std::vector<DiffTensor>& p) {
            return sum(cmul(triangular_solve(tril(p[0]), p[1], tr), DiffTensor(w)));
          },
          {l, b}, 1e-5, 1e-5);
      EXPECT_TRUE(rep.pass) << "seed " << seed << " transpose " << tr << " err " << rep.worst;
    }
  }
}

TEST(LogdetPsd, KnownValues) {
  EXPECT_EQ(logdet_psd(DiffTensor(Mat::Identity(4, 4))).item(), 0.0);
  Mat d = Mat::Zero(2, 2);
  d(0, 0) = 2;
  d(1, 1) = 3;
  EXPECT_NEAR(logdet_psd(DiffTensor(d)).item(), std::log(6.0), 1e-15);
}

TEST(LogdetPsd, MatchesEigenvalueSum) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RngStream rng(seed);
    Mat s = random_pd(rng, 5, 0.5);
    Eigen::SelfAdjointEigenSolver<Mat> es(s);
    EXPECT_NEAR(logdet_psd(DiffTensor(s)).item(), es.eigenvalues().array().log().sum(), 1e-9);
  }
}

TEST(LogdetPsd, Gradient) {
  RngStream rng(9);
  Mat s = random_pd(rng, 4);
  auto rep = finite_diff_check([](const std::vector<DiffTensor>& p) { return logdet_psd(sym(p[0])); }, {s}, 1e-5, 1e-5);
  EXPECT_TRUE(rep.pass) << rep.worst;
}

TEST(Elementwise, KnownValues) {
  Mat x(1, 2);
  x << -1, 2;
  Mat r = relu(DiffTensor(x)).value();
  EXPECT_EQ(r(0, 0), 0.0);
  EXPECT_EQ(r(0, 1), 2.0);
  EXPECT_NEAR(softplus(DiffTensor::scalar(0.0)).item(), std::log(2.0), 1e-15);
}

TEST(Elementwise, SoftplusGradientIsSigmoid) {
  RngStream rng(2);
  Mat x = 3.0 * rng.normal(5, 1);
  Tape tape;
  DiffTensor tx = tape.leaf(x);
  tape.backward(sum(softplus(tx)));
  Mat want = x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  EXPECT_LT((tape.grad(tx) - want).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Elementwise, DomainViolationsThrow) {
  EXPECT_THROW(log(DiffTensor::scalar(-1.0)), NumericError);
  EXPECT_THROW(reciprocal(DiffTensor::scalar(0.0)), NumericError);
  EXPECT_THROW(sqrt(DiffTensor::scalar(0.0)), NumericError);
}

TEST(Backward, ConstantLossHasZeroGradients) {
  Tape tape;
  DiffTensor x = tape.leaf(Mat::Ones(3, 2));
  DiffTensor loss = add_scalar(scale(sum(x), 0.0), 7.0);
  tape.backward(loss);
  EXPECT_EQ(tape.grad(x), Mat::Zero(3, 2));
}

TEST(Backward, SquaredNormGradient) {
  RngStream rng(4);
  Mat x = rng.normal(4, 1);
  Tape tape;
  DiffTensor tx = tape.leaf(x);
  tape.backward(sum_squares(tx));
  EXPECT_LT((tape.grad(tx) - 2.0 * x).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Backward, NonScalarLossThrows) {
  Tape tape;
  DiffTensor x = tape.leaf(Mat::Ones(2, 1));
  EXPECT_THROW(tape.backward(x), NumericError);
}

TEST(Backward, CompositeGraphMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RngStream rng(seed + 7);
    Mat a = rng.normal(4, 3), b = rng.normal(3, 4), c = rng.normal(4, 1);
    auto g = [](const std::vector<DiffTensor>& p) {
      DiffTensor k = add(matmul(p[0], transpose(p[0])), DiffTensor(Mat::Identity(4, 4)));
      DiffTensor l = cholesky_factor(k);
      DiffTensor x = triangular_solve(l, p[2]);
      DiffTensor h = softplus(matmul(p[0], p[1]));
      return sum(exp(scale(sigmoid(h), 0.5))) + sum_squares(x) + logdet_psd(k) +
             sum(cmul(relu(p[2]), square(p[2])));
    };
    auto rep = finite_diff_check(g, {a, b, c}, 1e-5, 1e-5);
    EXPECT_TRUE(rep.pass) << "seed " << seed << " err " << rep.worst;
  }
}

TEST(FiniteDiff, LinearFunctionIsExact) {
  // Dyadic inputs and step keep every evaluation exact in binary arithmetic.
  Mat x(3, 1), c(3, 1);
  x << 0.5, -1.25, 2.0;
  c << 3.0, -0.75, 1.5;
  auto rep = finite_diff_check([&](const std::vector<DiffTensor>& p) { return sum(cmul(p[0], DiffTensor(c))); }, {x},
                               1.0 / 65536.0, 1e-12);
  EXPECT_LT(rep.worst, 1e-12);
}

TEST(FiniteDiff, QuadraticWithinTaylorBound) {
  RngStream rng(1);
  Mat x = rng.normal(5, 1);
  Mat a = random_pd(rng, 5);
  auto rep = finite_diff_check(
      [&](const std::vector<DiffTensor>& p) { return matmul(transpose(p[0]), matmul(DiffTensor(a), p[0])); }, {x}, 1e-5,
      1e-6);
  EXPECT_LT(rep.worst, 1e-6);
}

TEST(Determinism, IdenticalInputsGiveBitwiseIdenticalLoss) {
  auto run = [] {
    RngStream rng(42);
    Mat a = rng.normal(5, 5);
    Tape tape;
    DiffTensor ta = tape.leaf(a);
    DiffTensor k = add(matmul(ta, transpose(ta)), DiffTensor(Mat::Identity(5, 5)));
    DiffTensor loss = logdet_psd(k) + sum(softplus(ta));
    tape.backward(loss);
    return std::make_pair(loss.item(), tape.grad(ta));
  };
  auto r1 = run();
  auto r2 = run();
  EXPECT_EQ(r1.first, r2.first);
  EXPECT_EQ(r1.second, r2.second);
}

TEST(Ops, StructuralGradients) {
  RngStream rng(12);
  Mat a = rng.normal(4, 3), v = rng.normal(4, 1), w = rng.normal(3, 1), r = rng.normal(1, 3);
  auto fn = [](const std::vector<DiffTensor>& p) {
    DiffTensor x = scale_rows(p[0], p[1]);
    x = scale_cols(x, p[2]);
    x = add_row(x, p[3]);
    x = add_col(x, p[1]);
    DiffTensor st = vstack(x, block(x, 1, 0, 2, 3));
    DiffTensor hs = hstack(st, row_sums(st));
    DiffTensor sq = matmul(transpose(hs), hs);
    DiffTensor d = diag_embed(diag_part(sq));
    DiffTensor t = tril(sq, true);
    DiffTensor g = gather_rows(hs, {0, 2, 2});
    return sum(cdiv(d + t, add_scalar(square(sq), 1.0))) + sum(col_sums(g)) + trace(sq) +
           sum(scale_by(p[0], sum(p[2]))) + sum(add_by(p[1], sum(p[3]))) + sum(lgamma(add_scalar(square(p[2]), 0.5))) +
           sum(digamma(add_scalar(square(p[2]), 0.5))) + sum(reciprocal(add_scalar(square(p[1]), 1.0))) +
           sum(sqrt(add_scalar(square(p[1]), 1.0))) + sum(log(add_scalar(square(p[1]), 1.0))) +
           sum(affine(p[1], 2.0, 1.0)) + sum(clamp_min(p[0], 0.1));
  };
  auto rep = finite_diff_check(fn, {a, v, w, r}, 1e-5, 1e-5);
  EXPECT_TRUE(rep.pass) << rep.worst;
}

TEST(Ops, SqDistMatchesDirectAndGradient) {
  RngStream rng(13);
  Mat x = rng.normal(5, 3), y = rng.normal(4, 3);
  Mat d = sq_dist(DiffTensor(x), DiffTensor(y)).value();
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 4; ++j) EXPECT_NEAR(d(i, j), (x.row(i) - y.row(j)).squaredNorm(), 1e-14);
  Mat w = rng.normal(5, 4);
  auto rep = finite_diff_check(
      [&](const std::vector<DiffTensor>& p) { return sum(cmul(sq_dist(p[0], p[1]), DiffTensor(w))); }, {x, y}, 1e-5,
      1e-5);
  EXPECT_TRUE(rep.pass) << rep.worst;
}

TEST(Ops, ConstantsStayOffTape) {
  DiffTensor a(Mat::Ones(2, 2));
  DiffTensor b = matmul(a, a);
  EXPECT_TRUE(b.is_constant());
  Tape tape;
  DiffTensor c = tape.leaf(Mat::Ones(2, 2));
  EXPECT_FALSE(matmul(a, c).is_constant());
}
