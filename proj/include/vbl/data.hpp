#pragma once

#include "vbl/diff.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace vbl {

// Per-column affine standardization fitted on training rows.
struct Normalizer {
  Mat mean;  // 1 x D
  Mat std;   // 1 x D, columns with zero spread get 1
  static Normalizer fit(const Mat& a);
  static Normalizer identity(Index cols);
  Mat apply(const Mat& a) const;
  Mat invert(const Mat& a) const;
  // Predictive variances back on the raw scale.
  Mat invert_var(const Mat& var) const;
};

struct Dataset {
  std::string name;
  Mat x_raw, y_raw;  // every row as generated or read
  std::vector<Index> train_idx, test_idx;
  Normalizer x_norm, y_norm;  // fitted on train rows only
  Mat x_train, y_train, x_test, y_test;  // normalized
  // Exact log marginal likelihood per training point of the generating
  // model, when one exists (on the normalized scale).
  double reference_lml = std::numeric_limits<double>::quiet_NaN();

  Index n_train() const { return x_train.rows(); }
  Index n_test() const { return x_test.rows(); }
  Index input_dim() const { return x_raw.cols(); }
  Index output_dim() const { return y_raw.cols(); }
};

// Splits rows into train/test and normalizes both with train statistics.
Dataset make_dataset(std::string name, Mat x, Mat y, std::vector<Index> train_idx, std::vector<Index> test_idx);

// 40 points, x ~ U([-4, -2] u [2, 4]), y = x^3 + N(0, 3^2); all rows are training rows.
Dataset gen_cubic_toy(std::uint64_t seed);

// 1000 train / 100 test rows, 5 standard-normal inputs, weights ~ N(0, 1/5),
// noise variance 0.1.  Inputs are left unnormalized (they are already
// standard) and targets unnormalized so the generating model's LML applies.
Dataset gen_deep_linear(std::uint64_t seed);
// Log-density of y under N(0, x x^T / 5 + 0.1 I), divided by N.
double deep_linear_lml(const Mat& x, const Mat& y);

// Smooth nonlinear regression in d dimensions with n rows split 90/10:
// y = sin(3 x_1) + 0.5 x_2^2 - 0.3 x_1 x_3 (terms present while d allows) + N(0, 0.1^2).
Dataset gen_synthetic_regression(std::uint64_t seed, int n = 200, int d = 3);

// Named toy: "cubic", "deep-linear" or "synthetic".
Dataset make_toy(const std::string& name, std::uint64_t seed);

// CSV with a header row, numeric cells and the target in the last column;
// split 90/10 by a seeded shuffle.
Dataset load_csv(const std::string& path, std::uint64_t split_seed = 0);

// Writes every raw row as CSV (header x1..xD,y), readable by load_csv.
void write_csv(const Dataset& d, const std::string& path);

// Sum of squares of normalized values used to checksum normalization constants.
double normalization_checksum(const Normalizer& n);

}  // namespace vbl
