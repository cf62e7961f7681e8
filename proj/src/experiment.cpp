#include "vbl/experiment.hpp"

#include "vbl/deep.hpp"
#include "vbl/dwp.hpp"
#include "vbl/gp.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>

namespace vbl {

using nlohmann::json;

namespace {

const std::set<std::string> kKinds{"blr",     "gp",     "svgp",   "dkl", "bnn-fac", "bnn-gi",
                                   "dgp-dsvi", "dgp-gi", "dwp", "dwp-a",  "dwp-ab"};

bool is_dwp(const std::string& k) { return k == "dwp" || k == "dwp-a" || k == "dwp-ab"; }
bool is_dgp(const std::string& k) { return k == "dgp-dsvi" || k == "dgp-gi"; }
bool is_bnn(const std::string& k) { return k == "bnn-fac" || k == "bnn-gi"; }

// Model keys accepted for each kind, besides the shared ones.
std::set<std::string> model_keys(const std::string& kind) {
  std::set<std::string> keys{"kind", "noise_var", "noise_raw_std"};
  auto add = [&](std::initializer_list<const char*> ks) {
    for (const char* k : ks) keys.insert(k);
  };
  if (kind == "blr") {
    add({"bumps", "prior_std"});
    return keys;  // the noise is fixed
  }
  keys.insert("learn_noise");
  if (kind == "gp") add({"ard"});
  if (kind == "dkl") add({"ard", "widths"});
  if (kind == "svgp") add({"ard", "inducing"});
  if (kind == "bnn-fac") add({"widths", "prior", "prior_shape", "prior_rate"});
  if (kind == "bnn-gi") add({"widths", "inducing", "prior", "prior_shape", "prior_rate"});
  if (is_dgp(kind)) add({"depth", "width", "inducing", "layer_noise_std", "identity_mean"});
  if (is_dwp(kind)) add({"depth", "width", "inducing", "layer_noise_std"});
  return keys;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& section) {
  if (!j.is_object()) throw ConfigError("config: '" + section + "' must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("config: key '" + k + "' is not valid in '" + section + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

template <typename T>
void read(const json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  T v{};
  read(j, key, v);
  out = v;
}

Mat mixture_var(const Predictive& p, const Mat& mean) {
  Mat second = Mat::Zero(mean.rows(), mean.cols());
  for (std::size_t s = 0; s < p.mean.size(); ++s) {
    const Mat& v = p.var[s];
    const Mat vv = v.cols() == mean.cols() ? v : Mat(v.replicate(1, mean.cols()));
    second += vv + p.mean[s].cwiseProduct(p.mean[s]);
  }
  second /= static_cast<double>(p.mean.size());
  return (second - mean.cwiseProduct(mean)).cwiseMax(0.0);
}

json record_json(const EvalRecord& r) {
  return json{{"step", r.step}, {"elbo", r.elbo}, {"test_ll", r.test_ll}, {"rmse", r.rmse}};
}

}  // namespace

// ------------------------------------------------------------------ config

void ExperimentConfig::validate() const {
  const ModelSettings& m = model;
  if (!kKinds.count(m.kind)) throw ConfigError("config: unknown model kind '" + m.kind + "'");
  if (m.noise_var && m.noise_raw_std) throw ConfigError("config: give noise_var or noise_raw_std, not both");
  if (m.noise_var && !(*m.noise_var > 0.0)) throw ConfigError("config: noise_var must be positive");
  if (m.noise_raw_std && !(*m.noise_raw_std > 0.0)) throw ConfigError("config: noise_raw_std must be positive");
  if ((is_dgp(m.kind) || is_dwp(m.kind)) && m.depth < 1) throw ConfigError("config: depth must be >= 1");
  if (m.width < 0) throw ConfigError("config: width must be >= 0");
  if ((is_bnn(m.kind) || m.kind == "dkl") && m.widths.empty())
    throw ConfigError("config: " + m.kind + " needs at least one entry in widths");
  for (int w : m.widths)
    if (w < 1) throw ConfigError("config: widths must be positive");
  if (m.inducing < 1) throw ConfigError("config: inducing must be >= 1");
  if (m.kind == "blr" && (m.bumps < 1 || !(m.prior_std > 0.0)))
    throw ConfigError("config: blr needs bumps >= 1 and a positive prior_std");
  if (is_bnn(m.kind)) {
    try {
      parse_prior_variant(m.prior);
    } catch (const NumericError& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  if (!(m.layer_noise_std > 0.0)) throw ConfigError("config: layer_noise_std must be positive");
  if (data.csv.empty()) {
    if (data.toy != "cubic" && data.toy != "deep-linear" && data.toy != "synthetic")
      throw ConfigError("config: unknown toy '" + data.toy + "'");
  }
  if (plot_points < 2) throw ConfigError("config: plot_points must be >= 2");
  try {
    train.validate();
  } catch (const NumericError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  check_keys(j, {"name", "seed", "model", "data", "train", "plot_points"}, "top level");
  read(j, "name", c.name);
  read(j, "seed", c.seed);
  read(j, "plot_points", c.plot_points);
  if (j.contains("model")) {
    const json& m = j.at("model");
    if (!m.is_object()) throw ConfigError("config: 'model' must be an object");
    read(m, "kind", c.model.kind);
    if (!kKinds.count(c.model.kind)) throw ConfigError("config: unknown model kind '" + c.model.kind + "'");
    check_keys(m, model_keys(c.model.kind), "model (kind " + c.model.kind + ")");
    ModelSettings& s = c.model;
    read(m, "depth", s.depth);
    read(m, "width", s.width);
    read(m, "widths", s.widths);
    read(m, "inducing", s.inducing);
    read(m, "prior", s.prior);
    read(m, "prior_shape", s.prior_shape);
    read(m, "prior_rate", s.prior_rate);
    read(m, "ard", s.ard);
    read(m, "layer_noise_std", s.layer_noise_std);
    read(m, "identity_mean", s.identity_mean);
    read(m, "noise_var", s.noise_var);
    read(m, "noise_raw_std", s.noise_raw_std);
    read(m, "learn_noise", s.learn_noise);
    read(m, "bumps", s.bumps);
    read(m, "prior_std", s.prior_std);
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, {"toy", "csv", "seed"}, "data");
    if (d.contains("toy") && d.contains("csv")) throw ConfigError("config: give data.toy or data.csv, not both");
    read(d, "toy", c.data.toy);
    read(d, "csv", c.data.csv);
    read(d, "seed", c.data.seed);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t,
               {"lr", "lr_factor", "lr_steps", "steps", "anneal_steps", "batch_size", "train_samples", "eval_samples",
                "stl", "eval_every", "clip_norm"},
               "train");
    TrainConfig& tc = c.train;
    read(t, "lr", tc.lr.initial);
    read(t, "lr_factor", tc.lr.factor);
    read(t, "lr_steps", tc.lr.step_downs);
    read(t, "steps", tc.steps);
    read(t, "anneal_steps", tc.anneal_steps);
    read(t, "batch_size", tc.batch_size);
    read(t, "train_samples", tc.train_samples);
    read(t, "eval_samples", tc.eval_samples);
    read(t, "stl", tc.stl);
    read(t, "eval_every", tc.eval_every);
    read(t, "clip_norm", tc.clip_norm);
  }
  c.train.seed = c.seed;
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  const ModelSettings& s = c.model;
  json m{{"kind", s.kind}};
  const std::set<std::string> keys = model_keys(s.kind);
  auto put = [&](const char* k, const json& v) {
    if (keys.count(k)) m[k] = v;
  };
  put("depth", s.depth);
  put("width", s.width);
  put("widths", s.widths);
  put("inducing", s.inducing);
  put("prior", s.prior);
  put("prior_shape", s.prior_shape);
  put("prior_rate", s.prior_rate);
  put("ard", s.ard);
  put("layer_noise_std", s.layer_noise_std);
  put("identity_mean", s.identity_mean);
  if (s.noise_var) m["noise_var"] = *s.noise_var;
  if (s.noise_raw_std) m["noise_raw_std"] = *s.noise_raw_std;
  put("learn_noise", s.learn_noise);
  put("bumps", s.bumps);
  put("prior_std", s.prior_std);

  json d = json::object();
  if (c.data.csv.empty())
    d["toy"] = c.data.toy;
  else
    d["csv"] = c.data.csv;
  if (c.data.seed) d["seed"] = *c.data.seed;

  const TrainConfig& t = c.train;
  json tr{{"lr", t.lr.initial},
          {"lr_factor", t.lr.factor},
          {"lr_steps", t.lr.step_downs},
          {"steps", t.steps},
          {"anneal_steps", t.anneal_steps},
          {"batch_size", t.batch_size},
          {"train_samples", t.train_samples},
          {"eval_samples", t.eval_samples},
          {"stl", t.stl},
          {"eval_every", t.eval_every},
          {"clip_norm", t.clip_norm}};
  return json{{"name", c.name}, {"seed", c.seed}, {"model", m}, {"data", d}, {"train", tr},
              {"plot_points", c.plot_points}};
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, true);  // comments allowed
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return config_from_json(j);
}

// ------------------------------------------------------------ construction

Dataset load_experiment_data(const ExperimentConfig& c) {
  if (!c.data.csv.empty()) return load_csv(c.data.csv, c.data_seed());
  return make_toy(c.data.toy, c.data_seed());
}

std::unique_ptr<Model> build_model(const ExperimentConfig& c, const Dataset& d) {
  const ModelSettings& s = c.model;
  const int in = static_cast<int>(d.input_dim());
  const int out = static_cast<int>(d.output_dim());
  double noise_var = std::exp(-3.0);
  if (s.noise_var) noise_var = *s.noise_var;
  if (s.noise_raw_std) {
    if (out != 1) throw ConfigError("config: noise_raw_std needs a single target column");
    noise_var = std::pow(*s.noise_raw_std / d.y_norm.std(0, 0), 2);
  }
  RngStream rng(c.seed, 0x30de1);
  std::unique_ptr<Model> model;
  const std::string& k = s.kind;
  if (k == "blr") {
    if (in != 1) throw ConfigError("config: blr uses bump features of a single input column");
    model = std::make_unique<BlrViModel>(bump_spec_from_range(d.x_train, s.bumps), out, s.prior_std,
                                         std::sqrt(noise_var), rng);
  } else if (k == "gp" || k == "dkl") {
    std::vector<int> extractor;
    if (k == "dkl") {
      extractor.push_back(in);
      extractor.insert(extractor.end(), s.widths.begin(), s.widths.end());
    }
    model = std::make_unique<ExactGpModel>(d.x_train, d.y_train, extractor, s.ard, std::sqrt(noise_var), rng);
  } else if (k == "svgp") {
    model = std::make_unique<SvgpModel>(init_from_batch(d.x_train, s.inducing, rng), out, s.ard,
                                        std::sqrt(noise_var), rng);
  } else if (is_bnn(k)) {
    BnnConfig b;
    b.widths.push_back(in);
    b.widths.insert(b.widths.end(), s.widths.begin(), s.widths.end());
    b.widths.push_back(out);
    b.inducing = s.inducing;
    b.prior.variant = parse_prior_variant(s.prior);
    b.prior.shape = s.prior_shape;
    b.prior.rate = s.prior_rate;
    b.log_noise_var = std::log(noise_var);
    b.learn_noise = s.learn_noise;
    if (k == "bnn-fac")
      model = std::make_unique<FacBnnModel>(b, rng);
    else
      model = std::make_unique<GiBnnModel>(b, d.x_train, d.y_train, rng);
  } else if (is_dgp(k)) {
    DgpConfig g;
    g.input_dim = in;
    g.output_dim = out;
    g.depth = s.depth;
    g.width = s.width;
    g.inducing = s.inducing;
    g.identity_mean = s.identity_mean;
    g.log_noise_var = std::log(noise_var);
    g.learn_noise = s.learn_noise;
    g.layer_noise_std = s.layer_noise_std;
    if (k == "dgp-gi")
      model = std::make_unique<GiDgpModel>(g, d.x_train, d.y_train, rng);
    else
      model = std::make_unique<DsviDgpModel>(g, d.x_train, rng);
  } else {
    DwpConfig w;
    w.input_dim = in;
    w.output_dim = out;
    w.gram_layers = s.depth - 1;
    w.nu = s.width;
    w.inducing = s.inducing;
    w.variant = parse_gwish_variant(k == "dwp" ? "base" : k == "dwp-a" ? "a" : "ab");
    w.log_noise_var = std::log(noise_var);
    w.learn_noise = s.learn_noise;
    w.layer_noise_std = s.layer_noise_std;
    model = std::make_unique<DwpModel>(w, d.x_train, d.y_train, rng);
  }
  if (!s.learn_noise) {
    const int id = model->params().find("lik.log_noise");
    if (id >= 0) model->params().set_trainable(id, false);
  }
  return model;
}

// ------------------------------------------------------------------ output

PlotData plot_data(Model& model, const Dataset& d, int points, int samples, RngStream& rng) {
  if (d.input_dim() != 1) throw ConfigError("plot data needs a single input column");
  Mat raw_train(static_cast<Index>(d.train_idx.size()), 1);
  for (std::size_t i = 0; i < d.train_idx.size(); ++i) raw_train(static_cast<Index>(i), 0) = d.x_raw(d.train_idx[i], 0);
  const double lo = raw_train.minCoeff(), hi = raw_train.maxCoeff();
  const double pad = 0.25 * std::max(hi - lo, 1e-8);
  PlotData out;
  out.x = Vec::LinSpaced(points, lo - pad, hi + pad);
  const Predictive pred = model.predict(ParamView(model.params(), nullptr), d.x_norm.apply(out.x), samples, rng);
  const Mat mean = pred.average_mean();
  const Mat var = mixture_var(pred, mean);
  out.mean = d.y_norm.invert(mean).col(0);
  const Vec sd = d.y_norm.invert_var(var).col(0).array().sqrt();
  out.lo1 = out.mean - sd;
  out.hi1 = out.mean + sd;
  out.lo2 = out.mean - 2.0 * sd;
  out.hi2 = out.mean + 2.0 * sd;
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.train.seed = c.seed;
  c.validate();
  const Dataset d = load_experiment_data(c);
  ExperimentResult r;
  r.config = c;
  r.dataset = d.name;
  r.n_train = d.n_train();
  r.n_test = d.n_test();
  r.x_checksum = normalization_checksum(d.x_norm);
  r.y_checksum = normalization_checksum(d.y_norm);
  r.reference_lml = d.reference_lml;
  std::unique_ptr<Model> model = build_model(c, d);
  r.train = train_loop(*model, d, c.train);
  const RngStream post(c.seed, 0x9057);
  if (!c.data.csv.empty() && d.n_test() > 0) {
    RngStream rng = post.split(0);
    Predictive pred = model->predict(ParamView(model->params(), nullptr), d.x_test, c.train.eval_samples, rng);
    for (std::size_t s = 0; s < pred.mean.size(); ++s) {
      pred.mean[s] = d.y_norm.invert(pred.mean[s]);
      pred.var[s] = d.y_norm.invert_var(pred.var[s]);
    }
    Mat y_raw(static_cast<Index>(d.test_idx.size()), d.output_dim());
    for (std::size_t i = 0; i < d.test_idx.size(); ++i) y_raw.row(static_cast<Index>(i)) = d.y_raw.row(d.test_idx[i]);
    r.test_ll_raw = pred.test_loglik(y_raw);
    r.rmse_raw = pred.rmse(y_raw);
  }
  if (d.input_dim() == 1 && d.output_dim() == 1) {
    RngStream rng = post.split(1);
    r.plot = plot_data(*model, d, c.plot_points, c.train.eval_samples, rng);
  }
  return r;
}

json result_to_json(const ExperimentResult& r) {
  json records = json::array();
  for (const EvalRecord& e : r.train.records) records.push_back(record_json(e));
  json fin = record_json(r.train.final_eval);
  fin["steps_done"] = r.train.steps_done;
  fin["aborted"] = r.train.aborted;
  fin["abort_reason"] = r.train.abort_reason;
  if (r.test_ll_raw) fin["test_ll_raw"] = *r.test_ll_raw;
  if (r.rmse_raw) fin["rmse_raw"] = *r.rmse_raw;
  json data{{"name", r.dataset},
            {"n_train", r.n_train},
            {"n_test", r.n_test},
            {"x_norm_checksum", r.x_checksum},
            {"y_norm_checksum", r.y_checksum}};
  if (std::isfinite(r.reference_lml)) data["reference_lml"] = r.reference_lml;
  return json{{"config", config_to_json(r.config)}, {"seed", r.config.seed}, {"dataset", data},
              {"records", records},                {"final", fin},            {"train_elbo_trace", r.train.step_elbo}};
}

std::string write_result(const ExperimentResult& r, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path base = fs::path(out_dir) / r.config.name;
  const std::string result_path = base.string() + ".result.json";
  {
    std::ofstream f(result_path);
    if (!f) throw ConfigError("cannot write '" + result_path + "'");
    f << result_to_json(r).dump(2) << "\n";
  }
  {
    std::ofstream f(base.string() + ".timing.json");
    f << json{{"train_seconds", r.train.seconds}}.dump(2) << "\n";
  }
  if (r.plot) {
    std::ofstream f(base.string() + ".plot.tsv");
    f << "# x\tmean\tlo1\thi1\tlo2\thi2\n" << std::setprecision(10);
    const PlotData& p = *r.plot;
    for (Index i = 0; i < p.x.rows(); ++i)
      f << p.x(i, 0) << '\t' << p.mean(i, 0) << '\t' << p.lo1(i, 0) << '\t' << p.hi1(i, 0) << '\t' << p.lo2(i, 0)
        << '\t' << p.hi2(i, 0) << '\n';
  }
  return result_path;
}

}  // namespace vbl
