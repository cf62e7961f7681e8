#pragma once

#include "vbl/diff.hpp"

#include <string>
#include <vector>

namespace vbl {

// Named trainable parameters.  Each parameter is stored as `stored` and used
// as factor * stored, so a factor rescales the step Adam takes in the
// parameter's natural units (factor < 1 shrinks it, factor > 1 grows it).
class ParamStore {
 public:
  // Adds a parameter whose effective initial value is `value`; returns its id.
  int add(const std::string& name, const Mat& value, double factor = 1.0, bool trainable = true);

  int find(const std::string& name) const;  // -1 if absent
  std::size_t size() const { return entries_.size(); }
  const std::string& name(int id) const { return entries_.at(id).name; }
  double factor(int id) const { return entries_.at(id).factor; }
  bool trainable(int id) const { return entries_.at(id).trainable; }
  void set_trainable(int id, bool on) { entries_.at(id).trainable = on; }

  Mat value(int id) const;  // effective value
  void set_value(int id, const Mat& effective);
  const Mat& stored(int id) const { return entries_.at(id).stored; }
  Mat& stored(int id) { return entries_.at(id).stored; }

  std::size_t total_scalars() const;

 private:
  struct Entry {
    std::string name;
    Mat stored;
    double factor = 1.0;
    bool trainable = true;
  };
  std::vector<Entry> entries_;
};

// Parameters bound for one evaluation.  With a tape, trainable parameters
// are leaves of that tape; without one, every parameter is a constant.
class ParamView {
 public:
  ParamView(const ParamStore& store, Tape* tape);
  DiffTensor operator[](int id) const { return effective_.at(id); }
  bool on_tape() const { return tape_ != nullptr; }
  // Gradients with respect to the stored values after tape->backward().
  std::vector<Mat> stored_grads() const;

 private:
  const ParamStore* store_;
  Tape* tape_;
  std::vector<DiffTensor> leaves_;
  std::vector<DiffTensor> effective_;
};

// Lower-triangular factor with positive diagonal from an unconstrained
// square matrix: strict lower part kept, diagonal exponentiated.
DiffTensor positive_lower(const DiffTensor& raw);
// Inverse of positive_lower on values (the input must have a positive diagonal).
Mat positive_lower_raw(const Mat& lower);

}  // namespace vbl
