#pragma once

#include "vbl/data.hpp"
#include "vbl/model.hpp"
#include "vbl/train.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vbl {

// Invalid or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Model settings.  Which keys are meaningful depends on the kind; parsing
// rejects keys that do not apply to the chosen kind.
struct ModelSettings {
  std::string kind = "bnn-gi";
  int depth = 2;                  // dgp-*: GP layers; dwp*: Gram layers + 1
  int width = 0;                  // dgp-*: hidden width, dwp*: degrees of freedom; 0 = input dim
  std::vector<int> widths{50, 50};  // bnn-*: hidden widths; dkl: extractor hidden + feature widths
  int inducing = 100;
  std::string prior = "neal";
  double prior_shape = 2.0;
  double prior_rate = 2.0;
  bool ard = false;
  double layer_noise_std = 1e-2;
  bool identity_mean = false;
  std::optional<double> noise_var;      // initial likelihood variance, normalized scale
  std::optional<double> noise_raw_std;  // same, given as a std on the raw target scale
  bool learn_noise = true;
  int bumps = 12;                 // blr
  double prior_std = 1.0;   // blr
};

struct DataSettings {
  std::string toy = "cubic";  // used when csv is empty
  std::string csv;
  std::optional<std::uint64_t> seed;  // toy generator / CSV split seed; defaults to the run seed
};

struct ExperimentConfig {
  std::string name = "run";
  std::uint64_t seed = 0;
  ModelSettings model;
  DataSettings data;
  TrainConfig train;
  int plot_points = 200;

  std::uint64_t data_seed() const { return data.seed.value_or(seed); }
  void validate() const;
};

// Strict JSON mapping: unknown keys and keys that do not apply to the model
// kind are errors.  Missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path);

Dataset load_experiment_data(const ExperimentConfig& c);
// Builds the model for c on d, with its initial state drawn from the run seed.
std::unique_ptr<Model> build_model(const ExperimentConfig& c, const Dataset& d);

// Gaussian summary of a predictive mixture on a grid (raw scale), for 1-D inputs.
struct PlotData {
  Mat x, mean, lo1, hi1, lo2, hi2;  // column vectors
};
PlotData plot_data(Model& model, const Dataset& d, int points, int samples, RngStream& rng);

struct ExperimentResult {
  ExperimentConfig config;
  std::string dataset;
  Index n_train = 0, n_test = 0;
  double x_checksum = 0.0, y_checksum = 0.0;  // normalization constants
  double reference_lml = std::numeric_limits<double>::quiet_NaN();
  TrainResult train;
  std::optional<double> test_ll_raw, rmse_raw;  // CSV datasets only
  std::optional<PlotData> plot;
};

ExperimentResult run_experiment(const ExperimentConfig& c);

// Everything except wall-clock time, so identical configs give identical files.
nlohmann::json result_to_json(const ExperimentResult& r);

// Writes <out>/<name>.result.json, <out>/<name>.timing.json and, for 1-D
// inputs, <out>/<name>.plot.tsv.  Returns the result file path.
std::string write_result(const ExperimentResult& r, const std::string& out_dir);

}  // namespace vbl
