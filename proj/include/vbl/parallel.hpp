#pragma once

#include "vbl/rng.hpp"

#include <Eigen/Dense>

#include <functional>

// OpenMP kernels.  Each parallel routine has a serial reference with the same
// arithmetic per output entry, kept for tests and the benchmark target.
namespace vbl::par {

using Mat = Eigen::MatrixXd;

void set_threads(int n);
int max_threads();

// d_ij = sum_k (x_ik - y_jk)^2
Mat sq_dist_serial(const Mat& x, const Mat& y);
Mat sq_dist_parallel(const Mat& x, const Mat& y);

// Reverse pass of sq_dist for upstream gradient g; either output may be null.
void sq_dist_grad_serial(const Mat& x, const Mat& y, const Mat& g, Mat* gx, Mat* gy);
void sq_dist_grad_parallel(const Mat& x, const Mat& y, const Mat& g, Mat* gx, Mat* gy);

// Entrywise Monte-Carlo moments of a matrix-valued draw.  Draw i always uses
// base.split(i), so serial and parallel runs see identical samples.
struct Moments {
  Mat mean;
  Mat var;      // unbiased sample variance
  Mat se_mean;  // sqrt(var / n)
  Mat se_var;   // sqrt((m4 - var^2) / n)
  long count = 0;
};
using DrawFn = std::function<Mat(RngStream&)>;
Moments mc_moments_serial(const DrawFn& draw, const RngStream& base, long n);
Moments mc_moments_parallel(const DrawFn& draw, const RngStream& base, long n);

}  // namespace vbl::par
