#include "vbl/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace vbl {

double LrSchedule::at(int step) const {
  double lr = initial;
  for (int s : step_downs)
    if (step >= s) lr *= factor;
  return lr;
}

void TrainConfig::validate() const {
  if (steps <= 0) throw NumericError("train config: steps must be positive");
  if (anneal_steps < 0 || anneal_steps > steps) throw NumericError("train config: anneal steps must lie in [0, steps]");
  if (train_samples < 1 || eval_samples < 1) throw NumericError("train config: sample counts must be >= 1");
  if (batch_size < 0) throw NumericError("train config: batch size must be >= 0");
  if (eval_every < 1) throw NumericError("train config: eval_every must be >= 1");
  if (!(lr.initial > 0.0) || !(lr.factor > 0.0)) throw NumericError("train config: learning rates must be positive");
  if (!(clip_norm > 0.0)) throw NumericError("train config: clip norm must be positive");
}

// ------------------------------------------------------------------ Adam

Adam::Adam(const ParamStore& store, double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (std::size_t id = 0; id < store.size(); ++id) {
    const Mat& s = store.stored(static_cast<int>(id));
    m_.push_back(Mat::Zero(s.rows(), s.cols()));
    v_.push_back(Mat::Zero(s.rows(), s.cols()));
  }
}

void Adam::step(ParamStore& store, const std::vector<Mat>& grads, double lr) {
  if (grads.size() != m_.size()) throw NumericError("Adam: gradient count does not match the parameter store");
  for (std::size_t id = 0; id < grads.size(); ++id) {
    if (!store.trainable(static_cast<int>(id))) continue;
    if (!grads[id].allFinite()) throw NumericError("Adam: non-finite gradient for '" + store.name(static_cast<int>(id)) + "'");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t id = 0; id < grads.size(); ++id) {
    const int i = static_cast<int>(id);
    if (!store.trainable(i)) continue;
    m_[id] = beta1_ * m_[id] + (1.0 - beta1_) * grads[id];
    v_[id] = beta2_ * v_[id] + (1.0 - beta2_) * grads[id].cwiseProduct(grads[id]);
    store.stored(i).array() -= lr * (m_[id].array() / c1) / ((v_[id].array() / c2).sqrt() + eps_);
  }
}

double kl_anneal_factor(int step, int anneal_steps) {
  if (step < 0) throw NumericError("kl_anneal_factor: step must be >= 0");
  if (anneal_steps <= 0) return 1.0;
  return std::min(1.0, static_cast<double>(step) / anneal_steps);
}

double clip_global_norm(std::vector<Mat>& grads, double max_norm) {
  double sq = 0.0;
  for (const Mat& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm)
    for (Mat& g : grads) g *= max_norm / norm;
  return norm;
}

// -------------------------------------------------------------- evaluation

EvalRecord evaluate(Model& model, const Dataset& data, int samples, RngStream& rng, int step) {
  const ParamView p(model.params(), nullptr);
  EvalRecord r;
  r.step = step;
  const double n = static_cast<double>(data.n_train());
  r.elbo = model.elbo(p, data.x_train, data.y_train, n, samples, rng).value() / n;
  if (data.n_test() > 0) {
    Predictive pred = model.predict(p, data.x_test, samples, rng);
    r.test_ll = pred.test_loglik(data.y_test);
    r.rmse = pred.rmse(data.y_test);
  } else {
    r.test_ll = r.rmse = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

// ---------------------------------------------------------------- training

namespace {

// Epoch-wise shuffled minibatches.
class BatchSampler {
 public:
  BatchSampler(Index n, int batch, RngStream rng) : n_(n), batch_(batch), rng_(rng), order_(static_cast<std::size_t>(n)) {
    std::iota(order_.begin(), order_.end(), Index{0});
    pos_ = order_.size();
  }
  bool full() const { return batch_ <= 0 || batch_ >= n_; }
  std::vector<Index> next() {
    std::vector<Index> out;
    while (static_cast<int>(out.size()) < batch_) {
      if (pos_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  Index n_;
  int batch_;
  RngStream rng_;
  std::vector<Index> order_;
  std::size_t pos_;
};

Mat rows_of(const Mat& a, const std::vector<Index>& idx) {
  Mat out(static_cast<Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = a.row(idx[i]);
  return out;
}

}  // namespace

TrainResult train_loop(Model& model, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const RngStream master(cfg.seed, 0x7a1);
  BatchSampler batches(data.n_train(), cfg.batch_size, master.split(0));
  RngStream mc = master.split(1);
  RngStream eval_rng = master.split(2);
  model.set_stl(cfg.stl);
  ParamStore& store = model.params();
  Adam adam(store);
  const double n = static_cast<double>(data.n_train());

  TrainResult result;
  auto record_eval = [&](int step) {
    EvalRecord r = evaluate(model, data, cfg.eval_samples, eval_rng, step);
    result.records.push_back(r);
    return r;
  };

  for (int step = 0; step < cfg.steps; ++step) {
    Mat xb, yb;
    if (batches.full()) {
      xb = data.x_train;
      yb = data.y_train;
    } else {
      const std::vector<Index> idx = batches.next();
      xb = rows_of(data.x_train, idx);
      yb = rows_of(data.y_train, idx);
    }
    try {
      Tape tape;
      ParamView p(store, &tape);
      ElboEstimate e = model.elbo(p, xb, yb, n, cfg.train_samples, mc);
      const double anneal = kl_anneal_factor(step, cfg.anneal_steps);
      DiffTensor objective = e.loglik + scale(e.increment, anneal) + e.surrogate;
      if (!std::isfinite(objective.item()))
        throw NumericError("non-finite loss");
      tape.backward(-objective);
      std::vector<Mat> grads = p.stored_grads();
      for (std::size_t id = 0; id < grads.size(); ++id)
        if (!store.trainable(static_cast<int>(id))) grads[id].setZero();
      // Adam rejects non-finite gradients before touching any parameter.
      for (std::size_t id = 0; id < grads.size(); ++id)
        if (!grads[id].allFinite())
          throw NumericError("non-finite gradient for '" + store.name(static_cast<int>(id)) + "'");
      clip_global_norm(grads, cfg.clip_norm);
      adam.step(store, grads, cfg.lr.at(step));
      result.step_elbo.push_back(e.value() / n);
      result.steps_done = step + 1;
    } catch (const NumericError& err) {
      result.aborted = true;
      result.abort_reason = "step " + std::to_string(step) + ": " + err.what();
      break;
    }
    if (result.steps_done % cfg.eval_every == 0 && result.steps_done < cfg.steps) {
      try {
        record_eval(result.steps_done);
      } catch (const NumericError& err) {
        result.aborted = true;
        result.abort_reason = std::string("evaluation failed: ") + err.what();
        break;
      }
    }
  }
  try {
    result.final_eval = record_eval(result.steps_done);
  } catch (const NumericError& err) {
    result.final_eval.step = result.steps_done;
    result.final_eval.elbo = result.final_eval.test_ll = result.final_eval.rmse =
        std::numeric_limits<double>::quiet_NaN();
    if (!result.aborted) {
      result.aborted = true;
      result.abort_reason = std::string("final evaluation failed: ") + err.what();
    }
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace vbl
