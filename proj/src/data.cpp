#include "vbl/data.hpp"

#include "vbl/dist.hpp"
#include "vbl/rng.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

namespace vbl {

namespace {

Mat take_rows(const Mat& a, const std::vector<Index>& idx) {
  Mat out(static_cast<Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = a.row(idx[i]);
  return out;
}

// Seeded shuffle with ceil(n / 10) rows held out (none when n < 2).
void split_90_10(Index n, std::uint64_t seed, std::vector<Index>& train, std::vector<Index>& test) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  RngStream rng(seed, 0x5b11);
  std::shuffle(order.begin(), order.end(), rng);
  const Index n_test = n < 2 ? 0 : static_cast<Index>(std::ceil(0.1 * static_cast<double>(n)));
  test.assign(order.begin(), order.begin() + n_test);
  train.assign(order.begin() + n_test, order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
}

std::vector<Index> all_rows(Index n) {
  std::vector<Index> r(static_cast<std::size_t>(n));
  std::iota(r.begin(), r.end(), Index{0});
  return r;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

// ------------------------------------------------------------- Normalizer

Normalizer Normalizer::fit(const Mat& a) {
  if (a.rows() == 0) throw NumericError("Normalizer: no rows to fit");
  Normalizer n;
  n.mean = a.colwise().mean();
  const Mat centered = a.rowwise() - n.mean.row(0);
  n.std = (centered.array().square().colwise().sum() / static_cast<double>(a.rows())).sqrt().matrix();
  for (Index j = 0; j < n.std.cols(); ++j)
    if (!(n.std(0, j) > 0.0)) n.std(0, j) = 1.0;
  return n;
}

Normalizer Normalizer::identity(Index cols) {
  Normalizer n;
  n.mean = Mat::Zero(1, cols);
  n.std = Mat::Ones(1, cols);
  return n;
}

Mat Normalizer::apply(const Mat& a) const {
  if (a.cols() != mean.cols()) throw NumericError("Normalizer: column count mismatch");
  return ((a.rowwise() - mean.row(0)).array().rowwise() / std.row(0).array()).matrix();
}

Mat Normalizer::invert(const Mat& a) const {
  if (a.cols() != mean.cols()) throw NumericError("Normalizer: column count mismatch");
  return ((a.array().rowwise() * std.row(0).array()).rowwise() + mean.row(0).array()).matrix();
}

Mat Normalizer::invert_var(const Mat& var) const {
  if (var.cols() != std.cols()) throw NumericError("Normalizer: column count mismatch");
  return (var.array().rowwise() * std.row(0).array().square()).matrix();
}

double normalization_checksum(const Normalizer& n) { return n.mean.squaredNorm() + n.std.squaredNorm(); }

// ---------------------------------------------------------------- datasets

Dataset make_dataset(std::string name, Mat x, Mat y, std::vector<Index> train_idx, std::vector<Index> test_idx) {
  if (x.rows() != y.rows()) throw NumericError("dataset: x and y row counts differ");
  if (train_idx.empty()) throw NumericError("dataset: no training rows");
  Dataset d;
  d.name = std::move(name);
  d.x_raw = std::move(x);
  d.y_raw = std::move(y);
  d.train_idx = std::move(train_idx);
  d.test_idx = std::move(test_idx);
  const Mat xt = take_rows(d.x_raw, d.train_idx), yt = take_rows(d.y_raw, d.train_idx);
  d.x_norm = Normalizer::fit(xt);
  d.y_norm = Normalizer::fit(yt);
  d.x_train = d.x_norm.apply(xt);
  d.y_train = d.y_norm.apply(yt);
  d.x_test = d.x_norm.apply(take_rows(d.x_raw, d.test_idx));
  d.y_test = d.y_norm.apply(take_rows(d.y_raw, d.test_idx));
  return d;
}

Dataset gen_cubic_toy(std::uint64_t seed) {
  RngStream rng(seed, 0xc0b1c);
  const Index n = 40;
  Mat x(n, 1), y(n, 1);
  for (Index i = 0; i < n; ++i) {
    const double mag = 2.0 + 2.0 * rng.uniform();
    x(i, 0) = rng.uniform() < 0.5 ? -mag : mag;
    y(i, 0) = std::pow(x(i, 0), 3) + 3.0 * rng.normal();
  }
  return make_dataset("cubic", std::move(x), std::move(y), all_rows(n), {});
}

double deep_linear_lml(const Mat& x, const Mat& y) {
  const Index n = x.rows();
  Mat c = x * x.transpose() / 5.0;
  c.diagonal().array() += 0.1;
  Eigen::LLT<Mat> llt(c);
  if (llt.info() != Eigen::Success) throw NumericError("deep_linear_lml: covariance not positive definite");
  const Mat l = llt.matrixL();
  double total = 0.0;
  for (Index k = 0; k < y.cols(); ++k) {
    const Vec a = l.triangularView<Eigen::Lower>().solve(y.col(k));
    total += -0.5 * a.squaredNorm() - l.diagonal().array().log().sum() - 0.5 * static_cast<double>(n) * kLog2Pi;
  }
  return total / static_cast<double>(n);
}

Dataset gen_deep_linear(std::uint64_t seed) {
  RngStream rng(seed, 0xd11e);
  const Index n_train = 1000, n_test = 100, d = 5;
  const Mat x = rng.normal(n_train + n_test, d);
  const Mat w = rng.normal(d, 1) / std::sqrt(5.0);
  const Mat y = x * w + std::sqrt(0.1) * rng.normal(n_train + n_test, 1);
  std::vector<Index> train = all_rows(n_train), test(static_cast<std::size_t>(n_test));
  std::iota(test.begin(), test.end(), n_train);
  Dataset ds;
  ds.name = "deep-linear";
  ds.x_raw = x;
  ds.y_raw = y;
  ds.train_idx = train;
  ds.test_idx = test;
  ds.x_norm = Normalizer::identity(d);
  ds.y_norm = Normalizer::identity(1);
  ds.x_train = x.topRows(n_train);
  ds.y_train = y.topRows(n_train);
  ds.x_test = x.bottomRows(n_test);
  ds.y_test = y.bottomRows(n_test);
  ds.reference_lml = deep_linear_lml(ds.x_train, ds.y_train);
  return ds;
}

Dataset gen_synthetic_regression(std::uint64_t seed, int n, int d) {
  if (n < 2 || d < 1) throw NumericError("gen_synthetic_regression: need n >= 2 and d >= 1");
  RngStream rng(seed, 0x5e7);
  Mat x(n, d), y(n, 1);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) x(i, j) = -2.0 + 4.0 * rng.uniform();
    double f = std::sin(3.0 * x(i, 0));
    if (d > 1) f += 0.5 * x(i, 1) * x(i, 1);
    if (d > 2) f -= 0.3 * x(i, 0) * x(i, 2);
    y(i, 0) = f + 0.1 * rng.normal();
  }
  std::vector<Index> train, test;
  split_90_10(n, seed, train, test);
  return make_dataset("synthetic", std::move(x), std::move(y), std::move(train), std::move(test));
}

Dataset make_toy(const std::string& name, std::uint64_t seed) {
  if (name == "cubic") return gen_cubic_toy(seed);
  if (name == "deep-linear") return gen_deep_linear(seed);
  if (name == "synthetic") return gen_synthetic_regression(seed);
  throw NumericError("unknown toy dataset '" + name + "' (expected cubic, deep-linear or synthetic)");
}

// -------------------------------------------------------------------- CSV

Dataset load_csv(const std::string& path, std::uint64_t split_seed) {
  std::ifstream in(path);
  if (!in) throw NumericError("load_csv: cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  std::size_t cols = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      cols = split_commas(line).size();
      break;
    }
  }
  if (cols == 0) throw NumericError("load_csv: '" + path + "' is empty");
  if (cols < 2) throw NumericError("load_csv: need at least one input column and a target column");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_commas(line);
    if (cells.size() != cols)
      throw NumericError("load_csv: row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                         " columns, expected " + std::to_string(cols));
    std::vector<double> row(cols);
    for (std::size_t c = 0; c < cols; ++c) {
      const std::string& s = cells[c];
      char* end = nullptr;
      errno = 0;
      const double v = s.empty() ? 0.0 : std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v))
        throw NumericError("load_csv: non-numeric cell '" + s + "' at row " + std::to_string(line_no) + ", column " +
                           std::to_string(c + 1));
      row[c] = v;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw NumericError("load_csv: '" + path + "' has a header but no data rows");
  const Index n = static_cast<Index>(rows.size());
  const Index d = static_cast<Index>(cols) - 1;
  Mat x(n, d), y(n, 1);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) x(i, j) = rows[i][j];
    y(i, 0) = rows[i][d];
  }
  std::vector<Index> train, test;
  split_90_10(n, split_seed, train, test);
  return make_dataset(path, std::move(x), std::move(y), std::move(train), std::move(test));
}

void write_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw NumericError("write_csv: cannot open '" + path + "'");
  for (Index j = 0; j < d.input_dim(); ++j) out << 'x' << j + 1 << ',';
  out << "y\n";
  out.precision(17);
  for (Index i = 0; i < d.x_raw.rows(); ++i) {
    for (Index j = 0; j < d.input_dim(); ++j) out << d.x_raw(i, j) << ',';
    out << d.y_raw(i, 0) << '\n';
  }
  if (!out) throw NumericError("write_csv: failed writing '" + path + "'");
}

}  // namespace vbl
