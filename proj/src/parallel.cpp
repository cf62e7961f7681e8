#include "vbl/parallel.hpp"

#include <omp.h>

#include <vector>

namespace vbl::par {

void set_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

int max_threads() { return omp_get_max_threads(); }

namespace {

inline double row_dist(const Mat& x, Eigen::Index i, const Mat& y, Eigen::Index j) {
  double d = 0.0;
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    const double t = x(i, k) - y(j, k);
    d += t * t;
  }
  return d;
}

// Raw power sums of the draws, combined into moments at the end.
struct PowerSums {
  Mat s1, s2, s3, s4;
  long n = 0;

  void add(const Mat& v) {
    if (n == 0) {
      s1 = Mat::Zero(v.rows(), v.cols());
      s2 = s1;
      s3 = s1;
      s4 = s1;
    }
    const auto a = v.array();
    s1.array() += a;
    s2.array() += a.square();
    s3.array() += a.cube();
    s4.array() += a.square().square();
    ++n;
  }

  void merge(const PowerSums& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    s1 += o.s1;
    s2 += o.s2;
    s3 += o.s3;
    s4 += o.s4;
    n += o.n;
  }

  Moments finish() const {
    Moments m;
    m.count = n;
    const double dn = static_cast<double>(n);
    const Eigen::ArrayXXd mu = s1.array() / dn;
    const Eigen::ArrayXXd e2 = s2.array() / dn;
    const Eigen::ArrayXXd e3 = s3.array() / dn;
    const Eigen::ArrayXXd e4 = s4.array() / dn;
    const Eigen::ArrayXXd c2 = e2 - mu.square();
    const Eigen::ArrayXXd c4 = e4 - 4.0 * mu * e3 + 6.0 * mu.square() * e2 - 3.0 * mu.square().square();
    m.mean = mu.matrix();
    m.var = (c2 * dn / (dn - 1.0)).matrix();
    m.se_mean = (m.var.array() / dn).sqrt().matrix();
    m.se_var = ((c4 - c2.square()).max(0.0) / dn).sqrt().matrix();
    return m;
  }
};

}  // namespace

Mat sq_dist_serial(const Mat& x, const Mat& y) {
  Mat d(x.rows(), y.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j) d(i, j) = row_dist(x, i, y, j);
  return d;
}

Mat sq_dist_parallel(const Mat& x, const Mat& y) {
  Mat d(x.rows(), y.rows());
  const Eigen::Index n = x.rows();
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j) d(i, j) = row_dist(x, i, y, j);
  return d;
}

// d d_ij / d x_ik = 2 (x_ik - y_jk), d d_ij / d y_jk = -2 (x_ik - y_jk)
void sq_dist_grad_serial(const Mat& x, const Mat& y, const Mat& g, Mat* gx, Mat* gy) {
  if (gx) {
    gx->setZero(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < y.rows(); ++j)
        for (Eigen::Index k = 0; k < x.cols(); ++k) (*gx)(i, k) += 2.0 * g(i, j) * (x(i, k) - y(j, k));
  }
  if (gy) {
    gy->setZero(y.rows(), y.cols());
    for (Eigen::Index j = 0; j < y.rows(); ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index k = 0; k < x.cols(); ++k) (*gy)(j, k) -= 2.0 * g(i, j) * (x(i, k) - y(j, k));
  }
}

void sq_dist_grad_parallel(const Mat& x, const Mat& y, const Mat& g, Mat* gx, Mat* gy) {
  if (gx) {
    gx->setZero(x.rows(), x.cols());
    const Eigen::Index n = x.rows();
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < y.rows(); ++j)
        for (Eigen::Index k = 0; k < x.cols(); ++k) (*gx)(i, k) += 2.0 * g(i, j) * (x(i, k) - y(j, k));
  }
  if (gy) {
    gy->setZero(y.rows(), y.cols());
    const Eigen::Index m = y.rows();
#pragma omp parallel for schedule(static)
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index k = 0; k < x.cols(); ++k) (*gy)(j, k) -= 2.0 * g(i, j) * (x(i, k) - y(j, k));
  }
}

Moments mc_moments_serial(const DrawFn& draw, const RngStream& base, long n) {
  PowerSums acc;
  for (long i = 0; i < n; ++i) {
    RngStream s = base.split(static_cast<std::uint64_t>(i));
    acc.add(draw(s));
  }
  return acc.finish();
}

Moments mc_moments_parallel(const DrawFn& draw, const RngStream& base, long n) {
  std::vector<PowerSums> partial(static_cast<std::size_t>(omp_get_max_threads()));
#pragma omp parallel
  {
    PowerSums& mine = partial[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(static)
    for (long i = 0; i < n; ++i) {
      RngStream s = base.split(static_cast<std::uint64_t>(i));
      mine.add(draw(s));
    }
  }
  PowerSums total;
  for (const auto& p : partial) total.merge(p);
  return total.finish();
}

}  // namespace vbl::par
