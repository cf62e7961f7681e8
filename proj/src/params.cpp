#include "vbl/params.hpp"

#include <cmath>

namespace vbl {

int ParamStore::add(const std::string& name, const Mat& value, double factor, bool trainable) {
  if (factor == 0.0) throw NumericError("ParamStore: zero factor for " + name);
  if (find(name) >= 0) throw NumericError("ParamStore: duplicate parameter " + name);
  entries_.push_back({name, value / factor, factor, trainable});
  return static_cast<int>(entries_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return static_cast<int>(i);
  return -1;
}

Mat ParamStore::value(int id) const {
  const Entry& e = entries_.at(id);
  return e.factor * e.stored;
}

void ParamStore::set_value(int id, const Mat& effective) {
  Entry& e = entries_.at(id);
  if (effective.rows() != e.stored.rows() || effective.cols() != e.stored.cols())
    throw NumericError("ParamStore: shape change for " + e.name);
  e.stored = effective / e.factor;
}

std::size_t ParamStore::total_scalars() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += static_cast<std::size_t>(e.stored.size());
  return n;
}

ParamView::ParamView(const ParamStore& store, Tape* tape) : store_(&store), tape_(tape) {
  leaves_.reserve(store.size());
  effective_.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const int id = static_cast<int>(i);
    DiffTensor leaf = (tape && store.trainable(id)) ? tape->leaf(store.stored(id)) : DiffTensor(store.stored(id));
    leaves_.push_back(leaf);
    effective_.push_back(store.factor(id) == 1.0 ? leaf : scale(leaf, store.factor(id)));
  }
}

std::vector<Mat> ParamView::stored_grads() const {
  std::vector<Mat> out;
  out.reserve(leaves_.size());
  for (std::size_t i = 0; i < leaves_.size(); ++i) {
    if (tape_ && !leaves_[i].is_constant())
      out.push_back(tape_->grad(leaves_[i]));
    else
      out.push_back(Mat::Zero(leaves_[i].rows(), leaves_[i].cols()));
  }
  return out;
}

DiffTensor positive_lower(const DiffTensor& raw) {
  if (raw.rows() != raw.cols()) throw NumericError("positive_lower: square input required");
  return tril(raw, true) + diag_embed(exp(diag_part(raw)));
}

Mat positive_lower_raw(const Mat& lower) {
  Mat raw = lower.triangularView<Eigen::StrictlyLower>();
  for (Index i = 0; i < lower.rows(); ++i) {
    if (!(lower(i, i) > 0.0)) throw NumericError("positive_lower_raw: non-positive diagonal");
    raw(i, i) = std::log(lower(i, i));
  }
  return raw;
}

}  // namespace vbl
