#include "vbl/diff.hpp"

#include "vbl/parallel.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vbl {

namespace {

std::string shape_str(const Mat& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw NumericError(msg);
}

void require_same_shape(const DiffTensor& a, const DiffTensor& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " + shape_str(b.value()));
}

Tape* common_tape(const std::vector<DiffTensor>& xs) {
  Tape* t = nullptr;
  for (const auto& x : xs) {
    if (x.is_constant()) continue;
    if (t && t != x.tape()) throw NumericError("operands recorded on different tapes");
    t = x.tape();
  }
  return t;
}

Mat lower_with_half_diag(const Mat& a) {
  Mat p = a.triangularView<Eigen::Lower>();
  p.diagonal() *= 0.5;
  return p;
}

}  // namespace

// ---------------------------------------------------------------- DiffTensor

DiffTensor::DiffTensor() : val_(std::make_shared<const Mat>(Mat(0, 0))) {}

DiffTensor::DiffTensor(Mat value) : val_(std::make_shared<const Mat>(std::move(value))) {}

DiffTensor DiffTensor::scalar(double v) { return DiffTensor(Mat::Constant(1, 1, v)); }

double DiffTensor::item() const {
  require(rows() == 1 && cols() == 1, "item() on non-scalar tensor " + shape_str(value()));
  return (*val_)(0, 0);
}

// ---------------------------------------------------------------------- Tape

DiffTensor Tape::leaf(Mat value) { return record(std::move(value), {}, nullptr); }

DiffTensor Tape::record(Mat value, const std::vector<DiffTensor>& parents, BackwardFn fn) {
  Node n;
  n.rows = value.rows();
  n.cols = value.cols();
  n.fn = std::move(fn);
  n.parents.reserve(parents.size());
  for (const auto& p : parents) n.parents.push_back(p.is_constant() ? -1 : p.id());
  nodes_.push_back(std::move(n));
  DiffTensor out(std::move(value));
  out.tape_ = this;
  out.id_ = static_cast<int>(nodes_.size()) - 1;
  return out;
}

void Tape::backward(const DiffTensor& loss) {
  require(!loss.is_constant() && loss.tape() == this, "backward: loss is not recorded on this tape");
  require(loss.rows() == 1 && loss.cols() == 1, "backward: loss must be scalar, got " + shape_str(loss.value()));
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[static_cast<std::size_t>(loss.id())].grad = Mat::Ones(1, 1);
  GradSlots slots;
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0 || !n.fn) continue;
    slots.assign(n.parents.size(), nullptr);
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      const int p = n.parents[k];
      if (p < 0) continue;
      Node& pn = nodes_[static_cast<std::size_t>(p)];
      if (pn.grad.size() == 0) pn.grad = Mat::Zero(pn.rows, pn.cols);
      slots[k] = &pn.grad;
    }
    n.fn(n.grad, slots);
  }
}

Mat Tape::grad(const DiffTensor& t) const {
  if (t.is_constant() || t.tape() != this) return Mat::Zero(t.rows(), t.cols());
  const Node& n = nodes_[static_cast<std::size_t>(t.id())];
  if (n.grad.size() == 0) return Mat::Zero(n.rows, n.cols);
  return n.grad;
}

void Tape::clear() { nodes_.clear(); }

DiffTensor make_op(Mat value, const std::vector<DiffTensor>& parents, BackwardFn fn) {
  require(value.allFinite(), "operation produced non-finite values");
  Tape* t = common_tape(parents);
  if (!t) return DiffTensor(std::move(value));
  return t->record(std::move(value), parents, std::move(fn));
}

// ---------------------------------------------------------------- arithmetic

DiffTensor add(const DiffTensor& a, const DiffTensor& b) {
  require_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [](const Mat& g, GradSlots& s) {
    if (s[0]) *s[0] += g;
    if (s[1]) *s[1] += g;
  });
}

DiffTensor sub(const DiffTensor& a, const DiffTensor& b) {
  require_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [](const Mat& g, GradSlots& s) {
    if (s[0]) *s[0] += g;
    if (s[1]) *s[1] -= g;
  });
}

DiffTensor neg(const DiffTensor& a) {
  return make_op(-a.value(), {a}, [](const Mat& g, GradSlots& s) { *s[0] -= g; });
}

DiffTensor cmul(const DiffTensor& a, const DiffTensor& b) {
  require_same_shape(a, b, "cmul");
  auto av = a.value();
  auto bv = b.value();
  return make_op(av.cwiseProduct(bv), {a, b}, [av, bv](const Mat& g, GradSlots& s) {
    if (s[0]) *s[0] += g.cwiseProduct(bv);
    if (s[1]) *s[1] += g.cwiseProduct(av);
  });
}

DiffTensor cdiv(const DiffTensor& a, const DiffTensor& b) {
  require_same_shape(a, b, "cdiv");
  require((b.value().array() != 0.0).all(), "cdiv: division by zero");
  auto av = a.value();
  auto bv = b.value();
  return make_op(av.cwiseQuotient(bv), {a, b}, [av, bv](const Mat& g, GradSlots& s) {
    if (s[0]) *s[0] += g.cwiseQuotient(bv);
    if (s[1]) s[1]->array() -= g.array() * av.array() / bv.array().square();
  });
}

DiffTensor scale(const DiffTensor& a, double k) {
  return make_op(a.value() * k, {a}, [k](const Mat& g, GradSlots& s) { *s[0] += k * g; });
}

DiffTensor add_scalar(const DiffTensor& a, double k) {
  return make_op(a.value().array() + k, {a}, [](const Mat& g, GradSlots& s) { *s[0] += g; });
}

DiffTensor affine(const DiffTensor& a, double k, double b) {
  return make_op((a.value().array() * k + b).matrix(), {a}, [k](const Mat& g, GradSlots& s) { *s[0] += k * g; });
}

DiffTensor scale_by(const DiffTensor& a, const DiffTensor& k) {
  require(k.rows() == 1 && k.cols() == 1, "scale_by: factor must be 1x1");
  auto av = a.value();
  const double kv = k.item();
  return make_op(av * kv, {a, k}, [av, kv](const Mat& g, GradSlots& s) {
    if (s[0]) *s[0] += kv * g;
    if (s[1]) (*s[1])(0, 0) += g.cwiseProduct(av).sum();
  });
}

DiffTensor add_by(const DiffTensor& a, const DiffTensor& k) {
  require(k.rows() == 1 && k.cols() == 1, "add_by: shift must be 1x1");
  return make_op(a.value().array() + k.item(), {a, k}, [](const Mat& g, GradSlots& s) {
    if (s[0]) *s[0] += g;
    if (s[1]) (*s[1])(0, 0) += g.sum();
  });
}

DiffTensor matmul(const DiffTensor& a, const DiffTensor& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ " + shape_str(a.value()) + " * " + shape_str(b.value()));
  auto av = a.value();
  auto bv = b.value();
  Mat out = av * bv;
  return make_op(std::move(out), {a, b}, [av, bv](const Mat& g, GradSlots& s) {
    if (s[0]) s[0]->noalias() += g * bv.transpose();
    if (s[1]) s[1]->noalias() += av.transpose() * g;
  });
}

DiffTensor transpose(const DiffTensor& a) {
  return make_op(a.value().transpose(), {a}, [](const Mat& g, GradSlots& s) { *s[0] += g.transpose(); });
}

DiffTensor operator+(const DiffTensor& a, const DiffTensor& b) { return add(a, b); }
DiffTensor operator-(const DiffTensor& a, const DiffTensor& b) { return sub(a, b); }
DiffTensor operator-(const DiffTensor& a) { return neg(a); }
DiffTensor operator*(double k, const DiffTensor& a) { return scale(a, k); }

DiffTensor scale_rows(const DiffTensor& a, const DiffTensor& v) {
  require(v.cols() == 1 && v.rows() == a.rows(), "scale_rows: need a rows x 1 vector");
  auto av = a.value();
  Vec vv = v.value().col(0);
  return make_op(vv.asDiagonal() * av, {a, v}, [av, vv](const Mat& g, GradSlots& s) {
    if (s[0]) *s[0] += vv.asDiagonal() * g;
    if (s[1]) *s[1] += g.cwiseProduct(av).rowwise().sum();
  });
}

DiffTensor scale_cols(const DiffTensor& a, const DiffTensor& v) {
  require(v.cols() == 1 && v.rows() == a.cols(), "scale_cols: need a cols x 1 vector");
  auto av = a.value();
  Vec vv = v.value().col(0);
  return make_op(av * vv.asDiagonal(), {a, v}, [av, vv](const Mat& g, GradSlots& s) {
    if (s[0]) *s[0] += g * vv.asDiagonal();
    if (s[1]) *s[1] += g.cwiseProduct(av).colwise().sum().transpose();
  });
}

DiffTensor add_row(const DiffTensor& a, const DiffTensor& r) {
  require(r.rows() == 1 && r.cols() == a.cols(), "add_row: need a 1 x cols vector");
  Mat out = a.value();
  out.rowwise() += r.value().row(0);
  return make_op(std::move(out), {a, r}, [](const Mat& g, GradSlots& s) {
    if (s[0]) *s[0] += g;
    if (s[1]) *s[1] += g.colwise().sum();
  });
}

DiffTensor add_col(const DiffTensor& a, const DiffTensor& c) {
  require(c.cols() == 1 && c.rows() == a.rows(), "add_col: need a rows x 1 vector");
  Mat out = a.value();
  out.colwise() += c.value().col(0);
  return make_op(std::move(out), {a, c}, [](const Mat& g, GradSlots& s) {
    if (s[0]) *s[0] += g;
    if (s[1]) *s[1] += g.rowwise().sum();
  });
}

// ---------------------------------------------------------------- reductions

DiffTensor sum(const DiffTensor& a) {
  return make_op(Mat::Constant(1, 1, a.value().sum()), {a},
                 [](const Mat& g, GradSlots& s) { s[0]->array() += g(0, 0); });
}

DiffTensor row_sums(const DiffTensor& a) {
  return make_op(a.value().rowwise().sum(), {a}, [](const Mat& g, GradSlots& s) { s[0]->colwise() += g.col(0); });
}

DiffTensor col_sums(const DiffTensor& a) {
  return make_op(a.value().colwise().sum(), {a}, [](const Mat& g, GradSlots& s) { s[0]->rowwise() += g.row(0); });
}

DiffTensor trace(const DiffTensor& a) {
  require(a.rows() == a.cols(), "trace: matrix must be square");
  return make_op(Mat::Constant(1, 1, a.value().trace()), {a},
                 [](const Mat& g, GradSlots& s) { s[0]->diagonal().array() += g(0, 0); });
}

DiffTensor sum_squares(const DiffTensor& a) {
  auto av = a.value();
  return make_op(Mat::Constant(1, 1, av.squaredNorm()), {a},
                 [av](const Mat& g, GradSlots& s) { *s[0] += 2.0 * g(0, 0) * av; });
}

// ------------------------------------------------------------------ slicing

DiffTensor block(const DiffTensor& a, Index r, Index c, Index nr, Index nc) {
  require(r >= 0 && c >= 0 && r + nr <= a.rows() && c + nc <= a.cols(), "block: out of range");
  return make_op(a.value().block(r, c, nr, nc), {a},
                 [r, c, nr, nc](const Mat& g, GradSlots& s) { s[0]->block(r, c, nr, nc) += g; });
}

DiffTensor vstack(const DiffTensor& a, const DiffTensor& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  require(a.cols() == b.cols(), "vstack: column counts differ");
  Mat out(a.rows() + b.rows(), a.cols());
  out << a.value(), b.value();
  const Index ra = a.rows();
  const Index rb = b.rows();
  return make_op(std::move(out), {a, b}, [ra, rb](const Mat& g, GradSlots& s) {
    if (s[0]) *s[0] += g.topRows(ra);
    if (s[1]) *s[1] += g.bottomRows(rb);
  });
}

DiffTensor hstack(const DiffTensor& a, const DiffTensor& b) {
  if (a.cols() == 0) return b;
  if (b.cols() == 0) return a;
  require(a.rows() == b.rows(), "hstack: row counts differ");
  Mat out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const Index ca = a.cols();
  const Index cb = b.cols();
  return make_op(std::move(out), {a, b}, [ca, cb](const Mat& g, GradSlots& s) {
    if (s[0]) *s[0] += g.leftCols(ca);
    if (s[1]) *s[1] += g.rightCols(cb);
  });
}

DiffTensor diag_part(const DiffTensor& a) {
  require(a.rows() == a.cols(), "diag_part: matrix must be square");
  return make_op(a.value().diagonal(), {a}, [](const Mat& g, GradSlots& s) { s[0]->diagonal() += g.col(0); });
}

DiffTensor diag_embed(const DiffTensor& v) {
  require(v.cols() == 1, "diag_embed: need a column vector");
  Mat out = v.value().col(0).asDiagonal();
  return make_op(std::move(out), {v}, [](const Mat& g, GradSlots& s) { *s[0] += g.diagonal(); });
}

DiffTensor tril(const DiffTensor& a, bool strict) {
  // Works for rectangular a: keeps entries with i > j (or i >= j).
  Mat mask(a.rows(), a.cols());
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i) mask(i, j) = (strict ? i > j : i >= j) ? 1.0 : 0.0;
  Mat out = a.value().cwiseProduct(mask);
  return make_op(std::move(out), {a}, [mask = std::move(mask)](const Mat& g, GradSlots& s) {
    *s[0] += g.cwiseProduct(mask);
  });
}

DiffTensor detach(const DiffTensor& a) { return DiffTensor(a.value()); }

DiffTensor gather_rows(const DiffTensor& a, const std::vector<Index>& idx) {
  Mat out(static_cast<Index>(idx.size()), a.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    require(idx[k] >= 0 && idx[k] < a.rows(), "gather_rows: index out of range");
    out.row(static_cast<Index>(k)) = a.value().row(idx[k]);
  }
  return make_op(std::move(out), {a}, [idx](const Mat& g, GradSlots& s) {
    for (std::size_t k = 0; k < idx.size(); ++k) s[0]->row(idx[k]) += g.row(static_cast<Index>(k));
  });
}

// -------------------------------------------------------------- elementwise

namespace {

double softplus_value(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

DiffTensor elementwise(Elem op, const DiffTensor& x) {
  const Mat& xv = x.value();
  Mat out(xv.rows(), xv.cols());
  Mat deriv(xv.rows(), xv.cols());
  for (Index j = 0; j < xv.cols(); ++j) {
    for (Index i = 0; i < xv.rows(); ++i) {
      const double v = xv(i, j);
      double f = 0.0;
      double d = 0.0;
      switch (op) {
        case Elem::Exp:
          f = std::exp(v);
          d = f;
          break;
        case Elem::Log:
          require(v > 0.0, "log: non-positive argument");
          f = std::log(v);
          d = 1.0 / v;
          break;
        case Elem::Softplus:
          f = softplus_value(v);
          d = sigmoid_value(v);
          break;
        case Elem::Relu:
          f = v > 0.0 ? v : 0.0;
          d = v > 0.0 ? 1.0 : 0.0;
          break;
        case Elem::Square:
          f = v * v;
          d = 2.0 * v;
          break;
        case Elem::Reciprocal:
          require(v != 0.0, "reciprocal: zero argument");
          f = 1.0 / v;
          d = -f * f;
          break;
        case Elem::Sqrt:
          require(v > 0.0, "sqrt: non-positive argument");
          f = std::sqrt(v);
          d = 0.5 / f;
          break;
        case Elem::Sigmoid:
          f = sigmoid_value(v);
          d = f * (1.0 - f);
          break;
        case Elem::LogGamma:
          require(v > 0.0, "lgamma: non-positive argument");
          f = std::lgamma(v);
          d = boost::math::digamma(v);
          break;
        case Elem::Digamma:
          require(v > 0.0, "digamma: non-positive argument");
          f = boost::math::digamma(v);
          d = boost::math::trigamma(v);
          break;
      }
      out(i, j) = f;
      deriv(i, j) = d;
    }
  }
  return make_op(std::move(out), {x}, [deriv = std::move(deriv)](const Mat& g, GradSlots& s) {
    *s[0] += g.cwiseProduct(deriv);
  });
}

DiffTensor exp(const DiffTensor& x) { return elementwise(Elem::Exp, x); }
DiffTensor log(const DiffTensor& x) { return elementwise(Elem::Log, x); }
DiffTensor softplus(const DiffTensor& x) { return elementwise(Elem::Softplus, x); }
DiffTensor relu(const DiffTensor& x) { return elementwise(Elem::Relu, x); }
DiffTensor square(const DiffTensor& x) { return elementwise(Elem::Square, x); }
DiffTensor reciprocal(const DiffTensor& x) { return elementwise(Elem::Reciprocal, x); }
DiffTensor sqrt(const DiffTensor& x) { return elementwise(Elem::Sqrt, x); }
DiffTensor sigmoid(const DiffTensor& x) { return elementwise(Elem::Sigmoid, x); }
DiffTensor lgamma(const DiffTensor& x) { return elementwise(Elem::LogGamma, x); }
DiffTensor digamma(const DiffTensor& x) { return elementwise(Elem::Digamma, x); }

DiffTensor clamp_min(const DiffTensor& x, double lo) {
  Mat out = x.value().cwiseMax(lo);
  Mat mask = (x.value().array() > lo).cast<double>().matrix();
  return make_op(std::move(out), {x}, [mask = std::move(mask)](const Mat& g, GradSlots& s) {
    *s[0] += g.cwiseProduct(mask);
  });
}

// ------------------------------------------------------------ linear algebra

namespace {

// Index of the first non-positive pivot of an unblocked Cholesky, or -1.
Index failing_pivot(const Mat& s) {
  const Index n = s.rows();
  Mat l = Mat::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    double d = s(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 0.0)) return j;
    l(j, j) = std::sqrt(d);
    for (Index i = j + 1; i < n; ++i) l(i, j) = (s(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
  }
  return -1;
}

bool try_llt(const Mat& s, Mat* out) {
  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success) return false;
  Mat l = llt.matrixL();
  if (!l.allFinite() || !(l.diagonal().array() > 0.0).all()) return false;
  *out = std::move(l);
  return true;
}

}  // namespace

Mat cholesky_value(const Mat& s, CholeskyInfo* info) {
  require(s.rows() == s.cols(), "cholesky: matrix must be square, got " + shape_str(s));
  require(s.allFinite(), "cholesky: non-finite input");
  const double asym = (s - s.transpose()).cwiseAbs().maxCoeff();
  const double scale_ = std::max(1.0, s.cwiseAbs().maxCoeff());
  require(s.size() == 0 || asym <= 1e-10 * scale_, "cholesky: input not symmetric (max asymmetry " + std::to_string(asym) + ")");
  if (info) info->jitter = 0.0;
  Mat l;
  if (s.size() == 0 || try_llt(s, &l)) return l;
  const double mean_diag = std::max(s.diagonal().mean(), 1e-300);
  const double max_jitter = 1e-4 * mean_diag * (1.0 + 1e-12);
  for (double j = 1e-8 * mean_diag; j <= max_jitter; j *= 2.0) {
    Mat sj = s;
    sj.diagonal().array() += j;
    if (try_llt(sj, &l)) {
      if (info) info->jitter = j;
      return l;
    }
  }
  Mat sj = s;
  sj.diagonal().array() += 1e-4 * mean_diag;
  throw NumericError("cholesky: matrix not positive definite after maximum jitter; pivot " +
                     std::to_string(failing_pivot(sj)) + " of " + std::to_string(s.rows()));
}

DiffTensor cholesky_factor(const DiffTensor& s, CholeskyInfo* info) {
  Mat l = cholesky_value(s.value(), info);
  Mat lc = l;
  return make_op(std::move(l), {s}, [lc = std::move(lc)](const Mat& g, GradSlots& slots) {
    // P = Phi(L^T Lbar); Sbar = sym(L^{-T} P L^{-1})
    Mat p = lower_with_half_diag(lc.transpose() * g.triangularView<Eigen::Lower>());
    const auto lv = lc.triangularView<Eigen::Lower>();
    Mat tmp = lv.transpose().solve(p);                          // L^{-T} P
    Mat sbar = lv.transpose().solve(tmp.transpose()).transpose();  // (L^{-T} (L^{-T} P)^T)^T = L^{-T} P L^{-1}
    *slots[0] += 0.5 * (sbar + sbar.transpose());
  });
}

DiffTensor triangular_solve(const DiffTensor& l, const DiffTensor& b, bool transpose_flag) {
  require(l.rows() == l.cols(), "triangular_solve: l must be square");
  require(l.rows() == b.rows(), "triangular_solve: dimension mismatch " + shape_str(l.value()) + " vs " + shape_str(b.value()));
  require((l.value().diagonal().array() != 0.0).all(), "triangular_solve: zero diagonal element");
  auto lv = l.value();
  Mat x = transpose_flag ? Mat(lv.triangularView<Eigen::Lower>().transpose().solve(b.value()))
                         : Mat(lv.triangularView<Eigen::Lower>().solve(b.value()));
  Mat xc = x;
  return make_op(std::move(x), {l, b}, [lv, xc = std::move(xc), transpose_flag](const Mat& g, GradSlots& s) {
    const auto tv = lv.triangularView<Eigen::Lower>();
    if (!transpose_flag) {
      Mat bbar = tv.transpose().solve(g);
      if (s[1]) *s[1] += bbar;
      if (s[0]) *s[0] -= Mat((bbar * xc.transpose()).triangularView<Eigen::Lower>());
    } else {
      Mat bbar = tv.solve(g);
      if (s[1]) *s[1] += bbar;
      if (s[0]) *s[0] -= Mat((xc * bbar.transpose()).triangularView<Eigen::Lower>());
    }
  });
}

DiffTensor cholesky_solve(const DiffTensor& l, const DiffTensor& b) {
  return triangular_solve(l, triangular_solve(l, b, false), true);
}

DiffTensor logdet_psd(const DiffTensor& s) {
  Mat l = cholesky_value(s.value());
  const double v = 2.0 * l.diagonal().array().log().sum();
  return make_op(Mat::Constant(1, 1, v), {s}, [l = std::move(l)](const Mat& g, GradSlots& slots) {
    const Index n = l.rows();
    const auto lv = l.triangularView<Eigen::Lower>();
    Mat inv = lv.transpose().solve(lv.solve(Mat::Identity(n, n)));
    *slots[0] += g(0, 0) * 0.5 * (inv + inv.transpose());
  });
}

DiffTensor logdet_from_cholesky(const DiffTensor& l) {
  require(l.rows() == l.cols(), "logdet_from_cholesky: factor must be square");
  require((l.value().diagonal().array() > 0.0).all(), "logdet_from_cholesky: non-positive diagonal");
  return scale(sum(log(diag_part(l))), 2.0);
}

DiffTensor sq_dist(const DiffTensor& x, const DiffTensor& y) {
  require(x.cols() == y.cols(), "sq_dist: feature dimensions differ");
  auto xv = x.value();
  auto yv = y.value();
  return make_op(par::sq_dist_parallel(xv, yv), {x, y}, [xv, yv](const Mat& g, GradSlots& s) {
    Mat gx, gy;
    par::sq_dist_grad_parallel(xv, yv, g, s[0] ? &gx : nullptr, s[1] ? &gy : nullptr);
    if (s[0]) *s[0] += gx;
    if (s[1]) *s[1] += gy;
  });
}

// ----------------------------------------------------------- finite diffs

FdReport finite_diff_check(const ScalarFn& fn, const std::vector<Mat>& params, double h, double tol) {
  FdReport rep;
  std::vector<Mat> analytic;
  {
    Tape tape;
    std::vector<DiffTensor> leaves;
    for (const auto& p : params) leaves.push_back(tape.leaf(p));
    DiffTensor loss = fn(leaves);
    if (!loss.is_constant()) {
      tape.backward(loss);
      for (const auto& l : leaves) analytic.push_back(tape.grad(l));
    } else {
      for (const auto& p : params) analytic.push_back(Mat::Zero(p.rows(), p.cols()));
    }
  }
  auto eval = [&](const std::vector<Mat>& ps) {
    std::vector<DiffTensor> cs(ps.begin(), ps.end());
    return fn(cs).item();
  };
  std::vector<Mat> work = params;
  for (std::size_t k = 0; k < params.size(); ++k) {
    double worst = 0.0;
    for (Index j = 0; j < params[k].cols(); ++j) {
      for (Index i = 0; i < params[k].rows(); ++i) {
        const double orig = work[k](i, j);
        work[k](i, j) = orig + h;
        const double fp = eval(work);
        work[k](i, j) = orig - h;
        const double fm = eval(work);
        work[k](i, j) = orig;
        const double num = (fp - fm) / (2.0 * h);
        const double a = analytic[k](i, j);
        const double err = std::abs(a - num) / std::max({1.0, std::abs(a), std::abs(num)});
        worst = std::max(worst, err);
      }
    }
    rep.max_rel_error.push_back(worst);
    rep.worst = std::max(rep.worst, worst);
  }
  rep.pass = rep.worst <= tol;
  return rep;
}

}  // namespace vbl
