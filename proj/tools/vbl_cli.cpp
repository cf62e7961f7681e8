#include "criteria.hpp"
#include "vbl/data.hpp"
#include "vbl/experiment.hpp"
#include "vbl/parallel.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

int cmd_run(const std::string& config_path, const std::string& out_dir, std::optional<std::uint64_t> seed) {
  vbl::ExperimentConfig cfg = vbl::load_config(config_path);
  if (seed) cfg.seed = *seed;
  const vbl::ExperimentResult r = vbl::run_experiment(cfg);
  std::filesystem::create_directories(out_dir);
  const std::string path = vbl::write_result(r, out_dir);
  const vbl::EvalRecord& e = r.train.final_eval;
  std::cout << cfg.name << " (" << cfg.model.kind << ", seed " << cfg.seed << "): " << r.train.steps_done
            << " steps, elbo/pt " << e.elbo;
  if (r.n_test > 0) std::cout << ", test ll/pt " << e.test_ll << ", rmse " << e.rmse;
  std::cout << ", " << r.train.seconds << " s\n";
  if (r.train.aborted) std::cout << "aborted: " << r.train.abort_reason << "\n";
  std::cout << "wrote " << path << "\n";
  return r.train.aborted ? 2 : 0;
}

int cmd_toy(const std::string& name, std::uint64_t seed, const std::string& out) {
  const vbl::Dataset d = vbl::make_toy(name, seed);
  const std::string path = out.empty() ? name + "-" + std::to_string(seed) + ".csv" : out;
  vbl::write_csv(d, path);
  std::cout << "wrote " << d.x_raw.rows() << " rows to " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational deep kernel and Wishart process experiments"};
  app.require_subcommand(1);
  app.fallthrough();  // --threads may follow the subcommand

  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (0 keeps the default)");

  auto* run = app.add_subcommand("run", "Train and evaluate the model described by a JSON config");
  std::string config_path, out_dir = "results";
  std::optional<std::uint64_t> seed;
  run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--seed", seed, "Override the config seed");

  auto* toy = app.add_subcommand("toy", "Write a generated dataset as CSV");
  std::string toy_name, toy_out;
  std::uint64_t toy_seed = 0;
  toy->add_option("name", toy_name, "cubic, deep-linear or synthetic")
      ->required()
      ->check(CLI::IsMember({"cubic", "deep-linear", "synthetic"}));
  toy->add_option("--seed", toy_seed, "Generator seed");
  toy->add_option("--out", toy_out, "Output path (default <name>-<seed>.csv)");

  auto* check = app.add_subcommand("check", "Run the acceptance criteria");
  std::vector<int> only;
  check->add_option("--only", only, "Criterion ids to run (default: all)")->check(CLI::Range(1, 15));

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) vbl::par::set_threads(threads);

  try {
    if (*run) return cmd_run(config_path, out_dir, seed);
    if (*toy) return cmd_toy(toy_name, toy_seed, toy_out);
    if (*check) return vbl::acceptance::run_criteria(only, std::cout) == 0 ? 0 : 1;
  } catch (const vbl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
