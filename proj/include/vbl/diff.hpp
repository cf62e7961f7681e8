#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace vbl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

class Tape;

// Raised for shape errors, domain violations and failed factorizations.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A dense real matrix.  Tensors created by a Tape carry a node id and take
// part in reverse-mode differentiation; tensors without a tape are constants
// and every operation on constants only computes values.
class DiffTensor {
 public:
  DiffTensor();
  DiffTensor(Mat value);  // NOLINT: implicit constant construction is intended
  static DiffTensor scalar(double v);

  const Mat& value() const { return *val_; }
  Index rows() const { return val_->rows(); }
  Index cols() const { return val_->cols(); }
  double item() const;

  bool is_constant() const { return tape_ == nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  std::shared_ptr<const Mat> val_;
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Parent gradient slots handed to a backward closure; null when the parent
// does not need a gradient.
using GradSlots = std::vector<Mat*>;
using BackwardFn = std::function<void(const Mat& grad_out, GradSlots& parent_grads)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A differentiable input.
  DiffTensor leaf(Mat value);

  // Records an operation; called by the ops below.
  DiffTensor record(Mat value, const std::vector<DiffTensor>& parents, BackwardFn fn);

  // Accumulates d(loss)/d(node) for every node; loss must be 1x1.
  void backward(const DiffTensor& loss);

  // Gradient of the last backward pass with respect to t (zeros if t did not
  // influence the loss).
  Mat grad(const DiffTensor& t) const;

  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    std::vector<int> parents;
    BackwardFn fn;
    Mat grad;
    Index rows = 0;
    Index cols = 0;
  };
  std::vector<Node> nodes_;
};

// Result construction shared by all ops: constant if every parent is constant.
DiffTensor make_op(Mat value, const std::vector<DiffTensor>& parents, BackwardFn fn);

// ---- structural / arithmetic ops ----
DiffTensor add(const DiffTensor& a, const DiffTensor& b);
DiffTensor sub(const DiffTensor& a, const DiffTensor& b);
DiffTensor neg(const DiffTensor& a);
DiffTensor cmul(const DiffTensor& a, const DiffTensor& b);  // elementwise
DiffTensor cdiv(const DiffTensor& a, const DiffTensor& b);  // elementwise
DiffTensor scale(const DiffTensor& a, double s);
DiffTensor add_scalar(const DiffTensor& a, double s);
DiffTensor affine(const DiffTensor& a, double s, double b);  // s*a + b
// Multiplies every entry of a by the 1x1 tensor s.
DiffTensor scale_by(const DiffTensor& a, const DiffTensor& s);
// Adds the 1x1 tensor s to every entry of a.
DiffTensor add_by(const DiffTensor& a, const DiffTensor& s);
DiffTensor matmul(const DiffTensor& a, const DiffTensor& b);
DiffTensor transpose(const DiffTensor& a);

DiffTensor operator+(const DiffTensor& a, const DiffTensor& b);
DiffTensor operator-(const DiffTensor& a, const DiffTensor& b);
DiffTensor operator-(const DiffTensor& a);
DiffTensor operator*(double s, const DiffTensor& a);

// Broadcasting: v is a column (rows x 1) or row (1 x cols) vector.
DiffTensor scale_rows(const DiffTensor& a, const DiffTensor& v);  // diag(v) a
DiffTensor scale_cols(const DiffTensor& a, const DiffTensor& v);  // a diag(v), v is cols x 1
DiffTensor add_row(const DiffTensor& a, const DiffTensor& r);     // r is 1 x cols
DiffTensor add_col(const DiffTensor& a, const DiffTensor& c);     // c is rows x 1

// ---- reductions ----
DiffTensor sum(const DiffTensor& a);        // 1x1
DiffTensor row_sums(const DiffTensor& a);   // rows x 1
DiffTensor col_sums(const DiffTensor& a);   // 1 x cols
DiffTensor trace(const DiffTensor& a);      // 1x1
DiffTensor sum_squares(const DiffTensor& a);

// ---- slicing / assembly ----
DiffTensor block(const DiffTensor& a, Index r, Index c, Index nr, Index nc);
DiffTensor vstack(const DiffTensor& a, const DiffTensor& b);
DiffTensor hstack(const DiffTensor& a, const DiffTensor& b);
DiffTensor diag_part(const DiffTensor& a);   // n x 1
DiffTensor diag_embed(const DiffTensor& v);  // n x n from n x 1
DiffTensor tril(const DiffTensor& a, bool strict = false);
DiffTensor detach(const DiffTensor& a);
// Rows of a selected by idx (gradient scatters back).
DiffTensor gather_rows(const DiffTensor& a, const std::vector<Index>& idx);

// ---- elementwise functions ----
enum class Elem { Exp, Log, Softplus, Relu, Square, Reciprocal, Sqrt, Sigmoid, LogGamma, Digamma };
DiffTensor elementwise(Elem op, const DiffTensor& x);
DiffTensor exp(const DiffTensor& x);
DiffTensor log(const DiffTensor& x);
DiffTensor softplus(const DiffTensor& x);
DiffTensor relu(const DiffTensor& x);
DiffTensor square(const DiffTensor& x);
DiffTensor reciprocal(const DiffTensor& x);
DiffTensor sqrt(const DiffTensor& x);
DiffTensor sigmoid(const DiffTensor& x);
DiffTensor lgamma(const DiffTensor& x);
DiffTensor digamma(const DiffTensor& x);
// max(x, lo) with gradient passed only where x > lo.
DiffTensor clamp_min(const DiffTensor& x, double lo);

// ---- linear algebra ----
struct CholeskyInfo {
  double jitter = 0.0;
};
// Value-level Cholesky of a symmetric PD matrix under the jitter policy:
// on failure add 1e-8*mean(diag), doubling up to 1e-4*mean(diag).
Mat cholesky_value(const Mat& s, CholeskyInfo* info = nullptr);
DiffTensor cholesky_factor(const DiffTensor& s, CholeskyInfo* info = nullptr);
// Solves l x = b, or l^T x = b when transpose is set.  l is lower-triangular.
DiffTensor triangular_solve(const DiffTensor& l, const DiffTensor& b, bool transpose = false);
// (l l^T)^{-1} b
DiffTensor cholesky_solve(const DiffTensor& l, const DiffTensor& b);
DiffTensor logdet_psd(const DiffTensor& s);
// 2 * sum(log(diag(l))) for a triangular factor with positive diagonal.
DiffTensor logdet_from_cholesky(const DiffTensor& l);

// Fused pairwise squared distances d_ij = |x_i - y_j|^2 (rows are points).
DiffTensor sq_dist(const DiffTensor& x, const DiffTensor& y);

// ---- finite differences ----
struct FdReport {
  std::vector<double> max_rel_error;  // one per parameter
  double worst = 0.0;
  bool pass = false;
};
using ScalarFn = std::function<DiffTensor(const std::vector<DiffTensor>&)>;
// Compares reverse-mode gradients of fn against central differences with
// step h.  Relative error is |a - n| / max(1, |a|, |n|).
FdReport finite_diff_check(const ScalarFn& fn, const std::vector<Mat>& params, double h, double tol);

}  // namespace vbl
