#pragma once

#include "vbl/data.hpp"
#include "vbl/model.hpp"
#include "vbl/params.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vbl {

// Piecewise-constant learning rate: initial * factor^k after the k-th step-down point.
struct LrSchedule {
  double initial = 1e-2;
  double factor = 0.1;
  std::vector<int> step_downs{10000};
  double at(int step) const;
};

struct TrainConfig {
  LrSchedule lr;
  int steps = 20000;
  int anneal_steps = 0;  // 0 disables annealing
  int batch_size = 0;    // 0 or >= N means full batch
  int train_samples = 10;
  int eval_samples = 100;
  std::uint64_t seed = 0;
  bool stl = false;
  int eval_every = 250;
  double clip_norm = 100.0;
  void validate() const;
};

// Bias-corrected Adam over every trainable parameter of a store.
class Adam {
 public:
  explicit Adam(const ParamStore& store, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  // Throws NumericError naming the parameter when a gradient is not finite.
  void step(ParamStore& store, const std::vector<Mat>& grads, double lr);
  int steps() const { return t_; }
  const Mat& first_moment(int id) const { return m_.at(id); }
  const Mat& second_moment(int id) const { return v_.at(id); }

 private:
  double beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<Mat> m_, v_;
};

// Multiplies the ELBO increment (the KL part) during the first anneal_steps steps.
double kl_anneal_factor(int step, int anneal_steps);

// Scales grads in place so their joint Euclidean norm is at most max_norm;
// returns the norm before clipping.
double clip_global_norm(std::vector<Mat>& grads, double max_norm);

struct EvalRecord {
  int step = 0;
  double elbo = 0.0;     // per training point, anneal factor 1, fresh samples
  double test_ll = 0.0;  // per test point (NaN without a test set)
  double rmse = 0.0;     // NaN without a test set
};

struct TrainResult {
  std::vector<EvalRecord> records;
  EvalRecord final_eval;
  std::vector<double> step_elbo;  // per-point training ELBO estimate at each step
  int steps_done = 0;
  bool aborted = false;
  std::string abort_reason;
  double seconds = 0.0;
};

// Full-data ELBO per point and test metrics with eval_samples posterior samples.
EvalRecord evaluate(Model& model, const Dataset& data, int samples, RngStream& rng, int step = 0);

// Maximizes the ELBO with Adam.  A non-finite loss or gradient, or a failed
// factorization, stops training with the parameters of the last good step.
TrainResult train_loop(Model& model, const Dataset& data, const TrainConfig& cfg);

}  // namespace vbl
