#pragma once

// Experiment configuration, seeded suite execution and CSV output.
//
// Configuration files are line oriented:
//
//   # comment
//   experiment = log2d        (optional when given on the command line)
//   [run]
//   num_iter = 100
//   algorithms = RGD, RRGD, RPPerfGD
//   [model]
//   sigma = 0.5
//   [sweep]
//   gamma = 0, 0.5, 1
//
// Keys not defined for the selected experiment are rejected.

#include "performa/datagen.hpp"
#include "performa/estimators.hpp"
#include "performa/optimizers.hpp"
#include "performa/risk.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace performa {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Experiment { log2d, quad7d, pricing, housing, estimator_variance, convexity_profile };

inline std::string_view to_string(Experiment e) {
  switch (e) {
    case Experiment::log2d: return "log2d";
    case Experiment::quad7d: return "quad7d";
    case Experiment::pricing: return "pricing";
    case Experiment::housing: return "housing";
    case Experiment::estimator_variance: return "estimator-variance";
    case Experiment::convexity_profile: return "convexity-profile";
  }
  return "?";
}

inline std::optional<Experiment> parse_experiment(std::string_view name) {
  for (auto e : {Experiment::log2d, Experiment::quad7d, Experiment::pricing, Experiment::housing,
                 Experiment::estimator_variance, Experiment::convexity_profile})
    if (name == to_string(e)) return e;
  return std::nullopt;
}

inline constexpr const char* kDataDirEnv = "PERFORMA_DATA_DIR";

struct ExperimentConfig {
  Experiment experiment = Experiment::log2d;

  // [run]
  std::vector<Algorithm> algorithms;
  std::size_t num_iter = 100;
  std::size_t n = 1000;
  std::size_t n_runs = 100;
  double step_size = 0.1;
  double reg_lambda = 3e-2;
  double pi_lambda = 1e-1;
  double divergence_threshold = 1e6;
  std::uint64_t master_seed = 0;
  bool track_pi = false;
  bool rrm_separate = true;

  // [model]
  double sigma = 0.5;
  double gamma = 1.0;
  Vector class0_mean;
  Vector class1_mean;
  Vector mu;
  Vector pi_diag;
  std::string csv_path = "houses.csv";
  bool standardize = true;
  bool intercept = false;
  std::vector<Eigen::Index> shift_coords{0, 4, 6};
  double a_norm = 0.0;
  std::size_t replications = 100000;
  Vector direction;
  double t_min = -2.0;
  double t_max = 2.0;
  std::size_t t_steps = 81;

  // [sweep]
  std::string sweep_key = "none";
  std::vector<double> sweep_values{0.0};
};

/// Defaults taken from the published parameter tables where they exist.
inline ExperimentConfig default_config(Experiment e) {
  ExperimentConfig c;
  c.experiment = e;
  using A = Algorithm;
  switch (e) {
    case Experiment::log2d:
      c.num_iter = 100; c.n = 1000; c.sigma = 0.5; c.step_size = 0.1; c.reg_lambda = 3e-2;
      c.n_runs = 100;
      c.algorithms = {A::RGD, A::RRGD, A::SFPerfGD, A::RPPerfGD, A::RRM};
      c.class0_mean = Vector::Constant(2, -1.0);
      c.class1_mean = Vector::Zero(2);
      c.sweep_key = "gamma"; c.sweep_values = {0.0, 0.5, 1.0};
      break;
    case Experiment::quad7d:
      c.num_iter = 25; c.n = 1000; c.step_size = 0.1; c.reg_lambda = 1e-1; c.pi_lambda = 1e-1;
      c.n_runs = 100; c.track_pi = true;
      c.algorithms = {A::RGD, A::RRGD, A::SFPerfGD, A::RPPerfGD, A::RPPerfGD_learn, A::RRM};
      c.class1_mean = Vector::Zero(7);
      c.sweep_key = "sigma"; c.sweep_values = {0.1, 0.5, 1.0};
      break;
    case Experiment::pricing:
      c.num_iter = 500; c.n = 1000; c.step_size = 0.1; c.n_runs = 10; c.sigma = 1.0;
      c.reg_lambda = 0.0;
      c.algorithms = {A::RPPerfGD, A::RGD, A::RRM};
      c.mu = (Vector(2) << 1.0, 2.0).finished();
      c.pi_diag = (Vector(2) << 0.5, 1.0).finished();
      break;
    case Experiment::housing:
      c.num_iter = 15; c.n = 18000; c.n_runs = 20; c.step_size = 0.2; c.reg_lambda = 5e-3;
      c.algorithms = {A::RGD, A::RRGD, A::RPPerfGD, A::RRM};
      c.sweep_key = "shift_lambda"; c.sweep_values = {0.0, 0.5, 1.0};
      break;
    case Experiment::estimator_variance:
      c.sigma = 1.0; c.n = 1; c.replications = 100000;
      c.sweep_key = "d"; c.sweep_values = {2, 8, 32};
      break;
    case Experiment::convexity_profile:
      c.sigma = 0.5;
      c.class0_mean = Vector::Zero(2);
      c.class1_mean = (Vector(2) << -1.0, 1.0).finished();
      c.direction = (Vector(2) << -1.0, 1.0).finished();
      c.sweep_key = "lambda"; c.sweep_values = {-1.0, -0.5, 0.0, 0.5, 1.0};
      break;
  }
  return c;
}

namespace detail {

enum class KeyType { size, real, seed, boolean, text, vector, list, algorithms, coords };

struct KeySpec {
  const char* section;
  const char* key;
  KeyType type;
  std::vector<Experiment> experiments;
};

inline const std::vector<KeySpec>& key_table() {
  using E = Experiment;
  const std::vector<E> optim{E::log2d, E::quad7d, E::pricing, E::housing};
  static const std::vector<KeySpec> table = {
      {"run", "algorithms", KeyType::algorithms, optim},
      {"run", "num_iter", KeyType::size, optim},
      {"run", "n", KeyType::size, {E::log2d, E::quad7d, E::pricing, E::housing, E::estimator_variance}},
      {"run", "n_runs", KeyType::size, optim},
      {"run", "step_size", KeyType::real, optim},
      {"run", "reg_lambda", KeyType::real, optim},
      {"run", "pi_lambda", KeyType::real, optim},
      {"run", "divergence_threshold", KeyType::real, optim},
      {"run", "master_seed", KeyType::seed,
       {E::log2d, E::quad7d, E::pricing, E::housing, E::estimator_variance}},
      {"run", "track_pi", KeyType::boolean, optim},
      {"run", "replications", KeyType::size, {E::estimator_variance}},
      {"output", "rrm_separate", KeyType::boolean, optim},
      {"model", "sigma", KeyType::real,
       {E::log2d, E::quad7d, E::pricing, E::estimator_variance, E::convexity_profile}},
      {"model", "gamma", KeyType::real, {E::log2d}},
      {"model", "class0_mean", KeyType::vector, {E::log2d, E::convexity_profile}},
      {"model", "class1_mean", KeyType::vector, {E::log2d, E::quad7d, E::convexity_profile}},
      {"model", "mu", KeyType::vector, {E::pricing}},
      {"model", "pi_diag", KeyType::vector, {E::pricing}},
      {"model", "csv_path", KeyType::text, {E::housing}},
      {"model", "standardize", KeyType::boolean, {E::housing}},
      {"model", "intercept", KeyType::boolean, {E::housing}},
      {"model", "shift_coords", KeyType::coords, {E::housing}},
      {"model", "shift_lambda", KeyType::real, {E::housing}},
      {"model", "a_norm", KeyType::real, {E::estimator_variance}},
      {"model", "direction", KeyType::vector, {E::convexity_profile}},
      {"model", "t_min", KeyType::real, {E::convexity_profile}},
      {"model", "t_max", KeyType::real, {E::convexity_profile}},
      {"model", "t_steps", KeyType::size, {E::convexity_profile}},
      {"sweep", "gamma", KeyType::list, {E::log2d}},
      {"sweep", "sigma", KeyType::list, {E::quad7d, E::pricing}},
      {"sweep", "shift_lambda", KeyType::list, {E::housing}},
      {"sweep", "d", KeyType::list, {E::estimator_variance}},
      {"sweep", "lambda", KeyType::list, {E::convexity_profile}},
  };
  return table;
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_real(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || !std::isfinite(v)) throw std::invalid_argument("expected a number");
  return v;
}

inline std::uint64_t parse_unsigned(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw std::invalid_argument("expected a non-negative integer");
  return std::stoull(s);
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("expected true or false");
}

inline Vector parse_vector(const std::string& s) {
  const auto items = split_list(s);
  if (items.empty()) throw std::invalid_argument("expected a comma-separated list of numbers");
  Vector v(static_cast<Eigen::Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) v[static_cast<Eigen::Index>(i)] = parse_real(items[i]);
  return v;
}

inline void apply_key(ExperimentConfig& c, const KeySpec& spec, const std::string& value) {
  const std::string section = spec.section;
  const std::string key = spec.key;
  switch (spec.type) {
    case KeyType::size: {
      const auto v = static_cast<std::size_t>(parse_unsigned(value));
      if (key == "num_iter") c.num_iter = v;
      else if (key == "n") c.n = v;
      else if (key == "n_runs") c.n_runs = v;
      else if (key == "replications") c.replications = v;
      else if (key == "t_steps") c.t_steps = v;
      return;
    }
    case KeyType::seed: c.master_seed = parse_unsigned(value); return;
    case KeyType::real: {
      const double v = parse_real(value);
      if (key == "step_size") c.step_size = v;
      else if (key == "reg_lambda") c.reg_lambda = v;
      else if (key == "pi_lambda") c.pi_lambda = v;
      else if (key == "divergence_threshold") c.divergence_threshold = v;
      else if (key == "sigma") c.sigma = v;
      else if (key == "gamma") { c.gamma = v; c.sweep_values = {v}; }
      else if (key == "shift_lambda") c.sweep_values = {v};
      else if (key == "a_norm") c.a_norm = v;
      else if (key == "t_min") c.t_min = v;
      else if (key == "t_max") c.t_max = v;
      return;
    }
    case KeyType::boolean: {
      const bool v = parse_bool(value);
      if (key == "track_pi") c.track_pi = v;
      else if (key == "rrm_separate") c.rrm_separate = v;
      else if (key == "standardize") c.standardize = v;
      else if (key == "intercept") c.intercept = v;
      return;
    }
    case KeyType::text: c.csv_path = value; return;
    case KeyType::vector: {
      Vector v = parse_vector(value);
      if (key == "class0_mean") c.class0_mean = std::move(v);
      else if (key == "class1_mean") c.class1_mean = std::move(v);
      else if (key == "mu") c.mu = std::move(v);
      else if (key == "pi_diag") c.pi_diag = std::move(v);
      else if (key == "direction") c.direction = std::move(v);
      return;
    }
    case KeyType::list: {
      Vector v = parse_vector(value);
      c.sweep_key = key;
      c.sweep_values.assign(v.data(), v.data() + v.size());
      return;
    }
    case KeyType::algorithms: {
      c.algorithms.clear();
      for (const auto& name : split_list(value)) c.algorithms.push_back(parse_algorithm(name));
      if (c.algorithms.empty()) throw std::invalid_argument("empty algorithm list");
      return;
    }
    case KeyType::coords: {
      c.shift_coords.clear();
      for (const auto& item : split_list(value))
        c.shift_coords.push_back(static_cast<Eigen::Index>(parse_unsigned(item)));
      return;
    }
  }
  (void)section;
}

}  // namespace detail

/// Checks cross-key consistency after parsing.
inline void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
  const bool optim = c.experiment == Experiment::log2d || c.experiment == Experiment::quad7d ||
                     c.experiment == Experiment::pricing || c.experiment == Experiment::housing;
  if (optim) {
    if (c.algorithms.empty()) fail("no algorithms selected");
    if (c.num_iter == 0) fail("num_iter must be >= 1");
    if (c.n_runs == 0) fail("n_runs must be >= 1");
    if (!(c.step_size >= 0.0)) fail("step_size must be >= 0");
  }
  if (c.n == 0) fail("n must be >= 1");
  if (c.sweep_values.empty()) fail("empty sweep");
  switch (c.experiment) {
    case Experiment::log2d:
      if (c.class0_mean.size() != 2 || c.class1_mean.size() != 2) fail("log2d means must be 2-dimensional");
      if (!(c.sigma > 0.0)) fail("sigma must be > 0");
      for (double g : c.sweep_values) if (g < 0.0) fail("gamma must be >= 0");
      break;
    case Experiment::quad7d:
      if (c.class1_mean.size() != 7) fail("quad7d class1_mean must be 7-dimensional");
      for (double s : c.sweep_values) if (!(s > 0.0)) fail("sigma sweep values must be > 0");
      break;
    case Experiment::pricing:
      if (c.mu.size() == 0 || c.mu.size() != c.pi_diag.size()) fail("pricing mu and pi_diag must have equal length");
      if ((c.pi_diag.array() <= 0.0).any()) fail("pricing pi_diag must be positive");
      break;
    case Experiment::housing:
      for (const auto a : c.algorithms)
        if (a == Algorithm::SFPerfGD) fail("SFPerfGD needs an analytic density; not available for housing");
      break;
    case Experiment::estimator_variance:
      if (!(c.sigma > 0.0)) fail("sigma must be > 0");
      if (c.replications < 2) fail("replications must be >= 2");
      for (double d : c.sweep_values)
        if (d < 1.0 || d != std::floor(d)) fail("dimension sweep values must be positive integers");
      break;
    case Experiment::convexity_profile:
      if (c.class0_mean.size() != c.class1_mean.size() || c.direction.size() != c.class0_mean.size())
        fail("convexity-profile means and direction must share one dimension");
      if (c.t_steps < 2) fail("t_steps must be >= 2");
      break;
  }
}

inline ExperimentConfig parse_config_text(const std::string& text, std::optional<Experiment> experiment,
                                          const std::string& origin = "<config>") {
  struct Entry {
    std::size_t line;
    std::string section, key, value;
  };
  std::vector<Entry> entries;
  std::optional<Experiment> declared;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  auto fail = [&](std::size_t line, const std::string& m) {
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + m);
  };
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw.substr(0, raw.find('#'));
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(lineno, "malformed section header '" + line + "'");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section != "run" && section != "model" && section != "sweep" && section != "output")
        fail(lineno, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(lineno, "expected 'key = value'");
    Entry e{lineno, section, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1))};
    if (e.key.empty()) fail(lineno, "missing key");
    if (e.section.empty() && e.key == "experiment") {
      declared = parse_experiment(e.value);
      if (!declared) fail(lineno, "unknown experiment '" + e.value + "'");
      continue;
    }
    if (e.section.empty()) fail(lineno, "key '" + e.key + "' outside of a section");
    entries.push_back(std::move(e));
  }
  if (declared && experiment && *declared != *experiment)
    throw ConfigError(origin + ": file declares experiment '" + std::string(to_string(*declared)) +
                      "' but '" + std::string(to_string(*experiment)) + "' was requested");
  const auto exp = experiment ? experiment : declared;
  if (!exp) throw ConfigError(origin + ": missing required key 'experiment'");

  ExperimentConfig c = default_config(*exp);
  for (const auto& e : entries) {
    const detail::KeySpec* spec = nullptr;
    for (const auto& s : detail::key_table())
      if (e.section == s.section && e.key == s.key) spec = &s;
    if (!spec || std::find(spec->experiments.begin(), spec->experiments.end(), *exp) == spec->experiments.end())
      fail(e.line, "unknown key '" + e.key + "' in [" + e.section + "] for experiment " +
                       std::string(to_string(*exp)));
    try {
      detail::apply_key(c, *spec, e.value);
    } catch (const std::invalid_argument& err) {
      fail(e.line, "key '" + e.key + "': " + err.what() + " (got '" + e.value + "')");
    }
  }
  validate(c);
  return c;
}

inline ExperimentConfig parse_config(const std::string& path, std::optional<Experiment> experiment = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), experiment, path);
}

// --- suite execution -------------------------------------------------------

inline constexpr const char* kRunCsvHeader =
    "experiment,algorithm,sweep_key,sweep_value,run,iteration,theta_norm,risk,accuracy,pi_error,diverged";

struct RunJob {
  Algorithm algorithm;
  double sweep_value;
  std::size_t run;
};

struct RunResult {
  RunJob job;
  RunRecord record;
};

/// Per-run seed from (master seed, algorithm, sweep value, run index).
inline std::uint64_t run_seed(std::uint64_t master, Algorithm a, double sweep_value, std::size_t run) {
  std::uint64_t h = mix64(master);
  h = mix64(h ^ hash_string(to_string(a)));
  h = mix64(h ^ hash_string(detail::format_double(sweep_value)));
  return mix64(h ^ static_cast<std::uint64_t>(run));
}

inline std::string data_dir() {
  const char* env = std::getenv(kDataDirEnv);
  return env && *env ? std::string(env) : std::string("data");
}

inline std::string resolve_data_path(const std::string& csv_path) {
  std::filesystem::path p(csv_path);
  if (p.is_absolute() || std::filesystem::exists(p)) return p.string();
  return (std::filesystem::path(data_dir()) / p).string();
}

/// Model and loss for one sweep value of an optimization experiment.
inline Task make_task(const ExperimentConfig& c, double sweep_value,
                      const std::optional<HousingTable>& housing = std::nullopt) {
  switch (c.experiment) {
    case Experiment::log2d: return build_gauss2d(sweep_value, c.sigma, c.class0_mean, c.class1_mean);
    case Experiment::quad7d: return build_gauss7d(sweep_value, c.class1_mean);
    case Experiment::pricing:
      return build_pricing(c.mu, c.pi_diag, c.sweep_key == "sigma" ? sweep_value : c.sigma);
    case Experiment::housing: {
      HousingTaskSpec spec;
      spec.csv_path = resolve_data_path(c.csv_path);
      spec.lambda_shift = sweep_value;
      spec.shifted_coords = c.shift_coords;
      spec.standardize = c.standardize;
      spec.intercept = c.intercept;
      return housing ? housing_task(*housing, spec) : load_housing(spec);
    }
    default: throw ConfigError("experiment has no optimization task");
  }
}

inline OptimizerConfig optimizer_config(const ExperimentConfig& c, Algorithm a, Eigen::Index d,
                                        std::uint64_t seed) {
  OptimizerConfig o;
  o.algorithm = a;
  o.step_size = c.step_size;
  o.reg_lambda = c.reg_lambda;
  o.pi_lambda = c.pi_lambda;
  o.num_iter = c.num_iter;
  o.n = c.n;
  o.theta0 = Vector::Zero(d);
  o.seed = seed;
  o.divergence_threshold = c.divergence_threshold;
  o.track_pi = c.track_pi;
  return o;
}

/// Runs jobs on a fixed pool of threads; results land in job order.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(count, std::thread::hardware_concurrency()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

inline std::vector<RunResult> run_jobs(const ExperimentConfig& c) {
  std::optional<HousingTable> housing;
  if (c.experiment == Experiment::housing)
    housing = parse_housing_csv(resolve_data_path(c.csv_path));

  std::vector<RunJob> jobs;
  for (auto a : c.algorithms)
    for (double v : c.sweep_values)
      for (std::size_t r = 0; r < c.n_runs; ++r) jobs.push_back({a, v, r});

  std::vector<RunResult> results(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    const auto& job = jobs[i];
    const Task task = make_task(c, job.sweep_value, housing);
    const auto seed = run_seed(c.master_seed, job.algorithm, job.sweep_value, job.run);
    results[i] = {job, run(task.model, task.loss, optimizer_config(c, job.algorithm, task.model.dim(), seed))};
  });
  return results;
}

namespace detail {

inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct RowKey {
  std::string algorithm;
  double sweep_value;
  std::size_t run;
  std::size_t iteration;
  auto tie() const { return std::tie(algorithm, sweep_value, run, iteration); }
  bool operator<(const RowKey& o) const { return tie() < o.tie(); }
};

}  // namespace detail

/// CSV rows for the given results, sorted by (algorithm, sweep value, run, iteration).
inline std::string format_run_csv(const ExperimentConfig& c, const std::vector<RunResult>& results,
                                  bool with_header = true) {
  std::vector<std::pair<detail::RowKey, std::string>> rows;
  for (const auto& r : results) {
    for (const auto& it : r.record.iterations) {
      std::string line;
      line += std::string(to_string(c.experiment)) + ',' + std::string(to_string(r.job.algorithm)) + ',' +
              c.sweep_key + ',' + detail::fmt_num(r.job.sweep_value) + ',' + std::to_string(r.job.run) + ',' +
              std::to_string(it.iteration) + ',' + detail::fmt_num(it.theta.norm()) + ',' +
              detail::fmt_num(it.train_risk) + ',' + detail::fmt_num(it.accuracy) + ',' +
              (it.pi_error ? detail::fmt_num(*it.pi_error) : std::string()) + ',' + (it.diverged ? "1" : "0");
      rows.push_back({{std::string(to_string(r.job.algorithm)), r.job.sweep_value, r.job.run, it.iteration},
                      std::move(line)});
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string out = with_header ? std::string(kRunCsvHeader) + '\n' : std::string();
  for (const auto& [key, line] : rows) out += line + '\n';
  return out;
}

/// Parameter trajectories: one row per iteration with every coordinate of theta.
inline std::string format_trajectory_csv(const ExperimentConfig& c, const std::vector<RunResult>& results) {
  Eigen::Index d = 0;
  for (const auto& r : results)
    if (!r.record.iterations.empty()) d = r.record.iterations.front().theta.size();
  std::string out = "experiment,algorithm,sweep_key,sweep_value,run,iteration";
  for (Eigen::Index j = 0; j < d; ++j) out += ",theta_" + std::to_string(j);
  out += '\n';
  std::vector<std::pair<detail::RowKey, std::string>> rows;
  for (const auto& r : results)
    for (const auto& it : r.record.iterations) {
      std::string line = std::string(to_string(c.experiment)) + ',' + std::string(to_string(r.job.algorithm)) +
                         ',' + c.sweep_key + ',' + detail::fmt_num(r.job.sweep_value) + ',' +
                         std::to_string(r.job.run) + ',' + std::to_string(it.iteration);
      for (Eigen::Index j = 0; j < it.theta.size(); ++j) line += ',' + detail::fmt_num(it.theta[j]);
      rows.push_back({{std::string(to_string(r.job.algorithm)), r.job.sweep_value, r.job.run, it.iteration},
                      std::move(line)});
    }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [key, line] : rows) out += line + '\n';
  return out;
}

// --- estimator variance and convexity profile ------------------------------

struct VarianceRow {
  std::string estimator;
  Eigen::Index d;
  double empirical_trace;
  double analytic_trace;
};

/// Empirical vs analytic covariance traces of RP, SF and SF with the optimal
/// baseline in the Gaussian mean-estimation case with Pi = I.
inline std::vector<VarianceRow> estimator_variance(Eigen::Index d, double sigma, double a_norm,
                                                   std::size_t n, std::size_t replications,
                                                   std::uint64_t seed) {
  GaussianMeanCase gm{Matrix::Identity(d, d), sigma, Vector::Zero(d), Vector::Zero(d)};
  gm.theta_prime[0] = -a_norm;  // a = Pi theta - theta' = a_norm e_0
  const auto opt = cov_sf_baseline_optimal(gm, n);
  const auto reps = replicate_gaussian_mean(gm, n, replications, seed);
  return {{"RP", d, empirical_covariance(reps.rp).trace(), cov_rp_analytic(gm, n).trace()},
          {"SF", d, empirical_covariance(reps.sf).trace(), cov_sf_analytic(gm, n).trace()},
          {"SF_baseline", d, empirical_covariance(reps.sf_baseline).trace(), opt.covariance.trace()}};
}

struct ProfileRow {
  double lambda;
  double t;
  double risk;
};

/// Quadratic closed-form PR along theta = t * direction for Pi = lambda I.
inline std::vector<ProfileRow> convexity_profile_rows(const ExperimentConfig& c) {
  std::vector<ProfileRow> rows;
  const auto d = c.direction.size();
  GaussianClassModel g{c.class0_mean, c.class1_mean, c.sigma, {}, {}, 0.5};
  for (double lambda : c.sweep_values) {
    const PerformativeModel model(g, ShiftOperator(lambda * Matrix::Identity(d, d)));
    for (std::size_t k = 0; k < c.t_steps; ++k) {
      const double t = c.t_min + (c.t_max - c.t_min) * static_cast<double>(k) / static_cast<double>(c.t_steps - 1);
      rows.push_back({lambda, t, pr_closed_quadratic(model, t * c.direction)});
    }
  }
  return rows;
}

// --- summaries --------------------------------------------------------------

struct SummaryRow {
  std::string experiment, algorithm, sweep_key;
  double sweep_value = 0.0;
  std::size_t iteration = 0;
  std::size_t n_runs = 0;
  double mean_accuracy = 0.0, std_accuracy = 0.0;
  double mean_risk = 0.0, std_risk = 0.0;
  double mean_theta_norm = 0.0;
  std::size_t n_diverged = 0;
};

namespace detail {
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  std::vector<double> x;
  for (double e : v) if (!std::isnan(e)) x.push_back(e);
  if (x.empty()) return {std::nan(""), std::nan("")};
  double m = 0.0;
  for (double e : x) m += e;
  m /= static_cast<double>(x.size());
  if (x.size() < 2) return {m, 0.0};
  double s = 0.0;
  for (double e : x) s += (e - m) * (e - m);
  return {m, std::sqrt(s / static_cast<double>(x.size() - 1))};
}
}  // namespace detail

/// Mean and sample standard deviation over runs per (algorithm, sweep, iteration),
/// with the number of diverged runs of each (algorithm, sweep) group.
inline std::vector<SummaryRow> summarize_csv_text(const std::string& text, const std::string& origin = "<csv>") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kRunCsvHeader)
    throw DataError(origin + ": malformed run CSV (unexpected header)");
  using GroupKey = std::tuple<std::string, std::string, std::string, double>;
  struct Acc {
    std::vector<double> acc, risk, norm;
  };
  std::map<std::pair<GroupKey, std::size_t>, Acc> cells;
  std::map<GroupKey, std::map<std::size_t, bool>> runs;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> f;
    {
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) f.push_back(cell);
      if (!line.empty() && line.back() == ',') f.emplace_back();
    }
    if (f.size() != 11) throw DataError(origin + ":" + std::to_string(lineno) + ": expected 11 fields");
    try {
      auto num = [](const std::string& s) { return s.empty() ? std::nan("") : detail::parse_real(s); };
      GroupKey g{f[0], f[1], f[2], detail::parse_real(f[3])};
      const auto run = static_cast<std::size_t>(detail::parse_unsigned(f[4]));
      const auto iter = static_cast<std::size_t>(detail::parse_unsigned(f[5]));
      auto& a = cells[{g, iter}];
      a.norm.push_back(num(f[6]));
      a.risk.push_back(num(f[7]));
      a.acc.push_back(num(f[8]));
      if (f[10] != "0" && f[10] != "1") throw std::invalid_argument("diverged must be 0 or 1");
      runs[g][run] = runs[g][run] || f[10] == "1";
    } catch (const std::invalid_argument& e) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  std::vector<SummaryRow> out;
  for (const auto& [key, a] : cells) {
    const auto& [g, iter] = key;
    SummaryRow s;
    std::tie(s.experiment, s.algorithm, s.sweep_key, s.sweep_value) = g;
    s.iteration = iter;
    s.n_runs = a.acc.size();
    std::tie(s.mean_accuracy, s.std_accuracy) = detail::mean_std(a.acc);
    std::tie(s.mean_risk, s.std_risk) = detail::mean_std(a.risk);
    s.mean_theta_norm = detail::mean_std(a.norm).first;
    for (const auto& [run, div] : runs.at(g)) s.n_diverged += div;
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<SummaryRow> summarize(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot read " + csv_path);
  std::stringstream ss;
  ss << in.rdbuf();
  return summarize_csv_text(ss.str(), csv_path);
}

inline std::string format_summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out =
      "experiment,algorithm,sweep_key,sweep_value,iteration,n_runs,mean_accuracy,std_accuracy,"
      "mean_risk,std_risk,mean_theta_norm,n_diverged\n";
  for (const auto& s : rows)
    out += s.experiment + ',' + s.algorithm + ',' + s.sweep_key + ',' + detail::fmt_num(s.sweep_value) + ',' +
           std::to_string(s.iteration) + ',' + std::to_string(s.n_runs) + ',' + detail::fmt_num(s.mean_accuracy) +
           ',' + detail::fmt_num(s.std_accuracy) + ',' + detail::fmt_num(s.mean_risk) + ',' +
           detail::fmt_num(s.std_risk) + ',' + detail::fmt_num(s.mean_theta_norm) + ',' +
           std::to_string(s.n_diverged) + '\n';
  return out;
}

// --- top level ----------------------------------------------------------------

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

/// Runs the configured experiment and writes its CSV files into out_dir.
/// Returns the paths written.
inline std::vector<std::string> run_suite(const ExperimentConfig& c, const std::string& out_dir) {
  validate(c);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  const std::string name(to_string(c.experiment));
  std::vector<std::string> written;
  auto emit = [&](const std::string& file, const std::string& text) {
    write_text(dir / file, text);
    written.push_back((dir / file).string());
  };

  if (c.experiment == Experiment::estimator_variance) {
    std::string out = "experiment,estimator,d,sigma,a_norm,n,replications,empirical_trace,analytic_trace\n";
    for (double dv : c.sweep_values) {
      const auto d = static_cast<Eigen::Index>(dv);
      for (const auto& r : estimator_variance(d, c.sigma, c.a_norm, c.n, c.replications,
                                              derive_seed(c.master_seed, static_cast<std::uint64_t>(d))))
        out += name + ',' + r.estimator + ',' + std::to_string(d) + ',' + detail::fmt_num(c.sigma) + ',' +
               detail::fmt_num(c.a_norm) + ',' + std::to_string(c.n) + ',' + std::to_string(c.replications) +
               ',' + detail::fmt_num(r.empirical_trace) + ',' + detail::fmt_num(r.analytic_trace) + '\n';
    }
    emit("estimator_variance.csv", out);
    return written;
  }
  if (c.experiment == Experiment::convexity_profile) {
    std::string out = "lambda,t,risk\n";
    for (const auto& r : convexity_profile_rows(c))
      out += detail::fmt_num(r.lambda) + ',' + detail::fmt_num(r.t) + ',' + detail::fmt_num(r.risk) + '\n';
    emit("convexity_profile.csv", out);
    return written;
  }

  const auto results = run_jobs(c);
  std::vector<RunResult> main, rrm;
  for (const auto& r : results)
    (c.rrm_separate && r.job.algorithm == Algorithm::RRM ? rrm : main).push_back(r);
  for (const auto& [suffix, part] : {std::pair<std::string, const std::vector<RunResult>*>{"", &main},
                                     {"_rrm", &rrm}}) {
    if (part->empty()) continue;
    const std::string csv = format_run_csv(c, *part);
    emit(name + suffix + ".csv", csv);
    emit(name + suffix + "_summary.csv", format_summary_csv(summarize_csv_text(csv, name + suffix + ".csv")));
    emit(name + suffix + "_trajectory.csv", format_trajectory_csv(c, *part));
  }
  return written;
}

}  // namespace performa
