#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <random>

namespace vbl {

// Counter-based splittable generator.  The k-th 64-bit draw of a stream is a
// pure function of (key, k), and key is derived from (seed, stream path), so
// every draw is addressable and split streams never share state.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream = 0);

  // Independent child stream; the parent is left untouched.
  RngStream split(std::uint64_t index) const;

  result_type operator()();
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  double uniform();  // (0, 1)
  double normal();
  Eigen::MatrixXd normal(Eigen::Index rows, Eigen::Index cols);
  // Standard gamma (unit rate) by Marsaglia-Tsang, with the shape-augmented
  // variant for shape < 1 (as in std::gamma_distribution).
  double gamma(double shape);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t mix64(std::uint64_t z);

}  // namespace vbl
