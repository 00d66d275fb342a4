#include "sburgers/harness.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>

#include "sburgers/parallel.hpp"

#ifndef SBURGERS_BUILD_VERSION
#define SBURGERS_BUILD_VERSION "unknown"
#endif

namespace sburgers {

using nlohmann::json;

// ---------------------------------------------------------------- config I/O

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {
      "simulate", "ou-check", "alpha-scaling", "expmoment",  "lambda-scan", "variational",
      "gradient", "lipschitz", "invariant",   "convergence", "selftest"};
  return names;
}

ExperimentSpec default_spec(const std::string& subcommand) {
  ExperimentSpec spec;
  spec.subcommand = subcommand;
  spec.name = subcommand;
  auto& sim = spec.sim;
  auto& est = spec.estimator;
  if (subcommand == "simulate") {
    sim.n = 32;
    est.x0 = {"sawtooth", 1.0, {}};
  } else if (subcommand == "ou-check") {
    sim.n = 64;
    sim.dt = 0.01;
    sim.horizon = 2.0;
    est.paths = 2000;
  } else if (subcommand == "alpha-scaling") {
    sim.n = 64;
    est.paths = 500;
  } else if (subcommand == "expmoment") {
    sim.n = 8;
    est.paths = 2000;
  } else if (subcommand == "lambda-scan") {
    sim.n = 16;
    est.paths = 1000;
  } else if (subcommand == "variational") {
    sim.n = 8;
    sim.horizon = 0.25;
    sim.nonlinear = false;
    est.x0 = {"e_1", 1.0, {}};
    est.paths = 4000;
  } else if (subcommand == "gradient") {
    sim.horizon = 0.5;
    est.x0 = {"e_1", 1.0, {}};
    est.paths = 2000;
  } else if (subcommand == "lipschitz") {
    est.phi = "mode_sine:1:4";
    est.paths = 2000;
  } else if (subcommand == "invariant") {
    sim.horizon = 200.0;
  } else if (subcommand == "convergence") {
    sim.n = 16;
    sim.horizon = 0.25;
    est.paths = 4;
  } else if (subcommand == "selftest") {
    sim.n = 16;
  } else {
    throw UsageError("unknown subcommand '" + subcommand + "'");
  }
  sim.seed = spec.master_seed;
  return spec;
}

namespace {

json to_json(const InitialCondition& ic) {
  return {{"preset", ic.preset}, {"scale", ic.scale}, {"coeffs", ic.coeffs}};
}

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  void allow(std::initializer_list<const char*> keys) {
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& item : j_.items())
      if (!allowed.count(item.key())) fail(child(item.key()), "unknown field");
  }

  template <typename T>
  void get(const char* key, T& out) const {
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    convert(*it, out, child(key));
  }

  const json* find(const char* key) const {
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] static void fail(const std::string& path, const std::string& why) {
    throw UsageError("config field '" + path + "': " + why);
  }

 private:
  static void convert(const json& v, double& out, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    out = v.get<double>();
  }
  static void convert(const json& v, int& out, const std::string& path) {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    out = v.get<int>();
  }
  static void convert(const json& v, std::int64_t& out, const std::string& path) {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    out = v.get<std::int64_t>();
  }
  static void convert(const json& v, std::uint64_t& out, const std::string& path) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      fail(path, "expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  static void convert(const json& v, bool& out, const std::string& path) {
    if (!v.is_boolean()) fail(path, "expected true or false");
    out = v.get<bool>();
  }
  static void convert(const json& v, std::string& out, const std::string& path) {
    if (!v.is_string()) fail(path, "expected a string");
    out = v.get<std::string>();
  }
  template <typename T>
  static void convert(const json& v, std::vector<T>& out, const std::string& path) {
    if (!v.is_array()) fail(path, "expected an array");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      T item{};
      convert(v[i], item, path + "[" + std::to_string(i) + "]");
      out.push_back(item);
    }
  }

  const json& j_;
  std::string path_;
};

InitialCondition read_ic(const json& j, const std::string& path, InitialCondition ic) {
  Reader r(j, path);
  r.allow({"preset", "scale", "coeffs"});
  r.get("preset", ic.preset);
  r.get("scale", ic.scale);
  r.get("coeffs", ic.coeffs);
  return ic;
}

}  // namespace

json to_json(const ExperimentSpec& spec) {
  const auto& s = spec.sim;
  const auto& e = spec.estimator;
  return {
      {"name", spec.name},
      {"subcommand", spec.subcommand},
      {"seed", spec.master_seed},
      {"workers", spec.workers},
      {"output_dir", spec.output_dir},
      {"sim",
       {{"gamma", s.gamma},
        {"n", s.n},
        {"dt", s.dt},
        {"horizon", s.horizon},
        {"m_quad", s.m_quad},
        {"nonlinear", s.nonlinear}}},
      {"estimator",
       {{"paths", e.paths},
        {"repetitions", e.repetitions},
        {"path_index", e.path_index},
        {"functional", e.functional},
        {"lambda", e.lambda},
        {"lambdas", e.lambdas},
        {"functional_alpha", e.functional_alpha},
        {"phi", e.phi},
        {"x0", to_json(e.x0)},
        {"x_prime", to_json(e.x_prime)},
        {"direction", to_json(e.direction)},
        {"t", e.t},
        {"times", e.times},
        {"eps", e.eps},
        {"shift_alpha", e.shift_alpha},
        {"alphas", e.alphas},
        {"kappa", e.kappa},
        {"eps1", e.eps1},
        {"eps_prime", e.eps_prime},
        {"burn_in", e.burn_in},
        {"sample_horizon", e.sample_horizon},
        {"thinning", e.thinning},
        {"mode_counts", e.mode_counts},
        {"fine_dt", e.fine_dt},
        {"dt_levels", e.dt_levels},
        {"dump_coefficients", e.dump_coefficients}}},
  };
}

ExperimentSpec from_json(const json& j, ExperimentSpec spec) {
  Reader top(j, "");
  top.allow({"name", "subcommand", "seed", "workers", "output_dir", "sim", "estimator"});
  top.get("name", spec.name);
  top.get("subcommand", spec.subcommand);
  top.get("seed", spec.master_seed);
  top.get("workers", spec.workers);
  top.get("output_dir", spec.output_dir);
  if (const json* sim = top.find("sim")) {
    Reader r(*sim, "sim");
    r.allow({"gamma", "n", "dt", "horizon", "m_quad", "nonlinear"});
    r.get("gamma", spec.sim.gamma);
    r.get("n", spec.sim.n);
    r.get("dt", spec.sim.dt);
    r.get("horizon", spec.sim.horizon);
    r.get("m_quad", spec.sim.m_quad);
    r.get("nonlinear", spec.sim.nonlinear);
  }
  if (const json* est = top.find("estimator")) {
    Reader r(*est, "estimator");
    r.allow({"paths", "repetitions", "path_index", "functional", "lambda", "lambdas",
             "functional_alpha", "phi", "x0", "x_prime", "direction", "t", "times", "eps",
             "shift_alpha", "alphas", "kappa", "eps1", "eps_prime", "burn_in", "sample_horizon",
             "thinning", "mode_counts", "fine_dt", "dt_levels", "dump_coefficients"});
    auto& e = spec.estimator;
    r.get("paths", e.paths);
    r.get("repetitions", e.repetitions);
    r.get("path_index", e.path_index);
    r.get("functional", e.functional);
    r.get("lambda", e.lambda);
    r.get("lambdas", e.lambdas);
    r.get("functional_alpha", e.functional_alpha);
    r.get("phi", e.phi);
    if (const json* v = r.find("x0")) e.x0 = read_ic(*v, "estimator.x0", e.x0);
    if (const json* v = r.find("x_prime")) e.x_prime = read_ic(*v, "estimator.x_prime", e.x_prime);
    if (const json* v = r.find("direction"))
      e.direction = read_ic(*v, "estimator.direction", e.direction);
    r.get("t", e.t);
    r.get("times", e.times);
    r.get("eps", e.eps);
    r.get("shift_alpha", e.shift_alpha);
    r.get("alphas", e.alphas);
    r.get("kappa", e.kappa);
    r.get("eps1", e.eps1);
    r.get("eps_prime", e.eps_prime);
    r.get("burn_in", e.burn_in);
    r.get("sample_horizon", e.sample_horizon);
    r.get("thinning", e.thinning);
    r.get("mode_counts", e.mode_counts);
    r.get("fine_dt", e.fine_dt);
    r.get("dt_levels", e.dt_levels);
    r.get("dump_coefficients", e.dump_coefficients);
  }
  spec.sim.seed = spec.master_seed;
  return spec;
}

std::string serialize(const ExperimentSpec& spec) { return to_json(spec).dump(2) + "\n"; }

ExperimentSpec parse_spec(const std::string& text, ExperimentSpec base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j, std::move(base));
}

ExperimentSpec load_spec(const std::string& path, ExperimentSpec base) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_spec(buffer.str(), std::move(base));
}

std::string spec_hash(const ExperimentSpec& spec) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json(spec).dump()) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << hash;
  return out.str();
}

std::string build_version() { return SBURGERS_BUILD_VERSION; }

std::string format_number(double value) {
  std::ostringstream out;
  out << std::setprecision(17) << value;
  return out.str();
}

std::string format_number(std::int64_t value) { return std::to_string(value); }

std::string to_csv(const CsvTable& table, const ExperimentSpec& spec) {
  std::ostringstream out;
  out << "# build_version=" << build_version() << " spec_hash=" << spec_hash(spec)
      << " seed=" << spec.master_seed << "\n";
  for (std::size_t i = 0; i < table.columns.size(); ++i)
    out << (i ? "," : "") << table.columns[i];
  out << "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  return out.str();
}

void write_bundle(const ResultBundle& bundle, const ExperimentSpec& spec) {
  namespace fs = std::filesystem;
  const fs::path dir(spec.output_dir);
  fs::create_directories(dir);
  std::ofstream(dir / "summary.json") << bundle.summary.dump(2) << "\n";
  for (const auto& table : bundle.tables)
    std::ofstream(dir / (table.name + ".csv")) << to_csv(table, spec);
}

// ---------------------------------------------------------------- experiments

namespace {

std::string fmt(double v) { return format_number(v); }

class Experiment {
 public:
  explicit Experiment(const ExperimentSpec& spec)
      : spec_(spec), workers_(resolve_workers(spec.workers)) {
    spec_.sim.seed = spec_.master_seed;
  }

  const ExperimentSpec& spec() const { return spec_; }
  const SimConfig& sim() const { return spec_.sim; }
  const EstimatorParams& params() const { return spec_.estimator; }
  int workers() const { return workers_; }

  GalerkinSystem system() const { return GalerkinSystem(spec_.sim); }
  GalerkinSystem system(SimConfig cfg) const {
    cfg.seed = spec_.master_seed;
    return GalerkinSystem(cfg);
  }

  json& results() { return results_; }
  void verdict(const std::string& name, bool ok) { verdicts_[name] = ok; }
  void excluded(std::int64_t count) { excluded_ += count; }
  CsvTable& table(const std::string& name, std::vector<std::string> columns) {
    tables_.push_back({name, std::move(columns), {}});
    return tables_.back();
  }

  template <typename Fn>
  void phase(const std::string& name, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    timings_[name] += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }

  ResultBundle finish() {
    ResultBundle bundle;
    bool passed = true;
    for (const auto& [name, ok] : verdicts_) passed = passed && ok;
    bundle.exit_status = excluded_ > 0 ? kExitBlowUp : (passed ? kExitSuccess : kExitPropertyFailure);
    bundle.summary = {{"build_version", build_version()},
                      {"spec_hash", spec_hash(spec_)},
                      {"seed", spec_.master_seed},
                      {"experiment", to_json(spec_)},
                      {"results", results_},
                      {"verdicts", verdicts_},
                      {"excluded_paths", excluded_},
                      {"passed", passed && excluded_ == 0},
                      {"exit_status", bundle.exit_status},
                      {"timings", timings_}};
    bundle.tables = tables_;
    bundle.timings = timings_;
    return bundle;
  }

 private:
  ExperimentSpec spec_;
  int workers_;
  json results_ = json::object();
  std::map<std::string, bool> verdicts_;
  std::int64_t excluded_ = 0;
  std::vector<CsvTable> tables_;
  std::map<std::string, double> timings_;
};

json moment_json(const MomentEstimate& m) {
  return {{"estimate", m.estimate}, {"se", m.se},       {"heaviness", m.heaviness},
          {"mean_g", m.mean_g},     {"paths", m.paths}, {"excluded", m.excluded},
          {"unstable", m.unstable}};
}

PathFunctional functional_from(const EstimatorParams& p) {
  PathFunctional f;
  f.kind = PathFunctional::parse_kind(p.functional);
  f.lambda = p.lambda;
  f.alpha = p.functional_alpha;
  f.custom = TestFunctional::parse(p.phi);
  f.validate();
  return f;
}

// -- simulate

void run_simulate(Experiment& ex) {
  const auto system = ex.system();
  const SpectralField x0 = ex.params().x0.expand(system.modes());
  StatePath path;
  ex.phase("simulate", [&] { path = simulate_path(system, x0, system.noise_for(ex.params().path_index)); });
  auto& norms = ex.table("trajectory", {"t", "norm_l2", "norm_h1", "norm_l4"});
  double max_l2 = 0;
  for (const auto& row : norm_table(path, system.basis())) {
    norms.add_row({fmt(row.t), fmt(row.l2), fmt(row.h1), fmt(row.l4)});
    max_l2 = std::max(max_l2, row.l2);
  }
  if (ex.params().dump_coefficients) {
    auto& coeffs = ex.table("coefficients", {"t", "k", "coeff"});
    for (int m = 0; m <= path.steps(); ++m)
      for (int k = 1; k <= path.modes(); ++k)
        coeffs.add_row({fmt(path.times[m]), std::to_string(k), fmt(path.states(k - 1, m))});
  }
  ex.results()["terminal_l2"] = path.terminal().norm();
  ex.results()["max_l2"] = max_l2;
  ex.results()["steps"] = path.steps();
}

// -- ou-check

struct ModeMoments {
  double mean, mean_se, variance, variance_se;
};

void run_ou_check(Experiment& ex) {
  const auto& sim = ex.sim();
  const auto& p = ex.params();
  const int n = sim.n;
  const double h = sim.dt;
  const double alpha = p.shift_alpha;

  // Single exact step from a fixed state.
  OuState start = OuState::origin(n, alpha, sim.gamma);
  for (int i = 0; i < n; ++i) start.coeffs[i] = 1.0 / (i + 1);
  const auto reps = static_cast<std::size_t>(p.repetitions);
  std::vector<SpectralField> draws;
  ex.phase("exact_step", [&] {
    draws = parallel_map<SpectralField>(reps, ex.workers(), [&](std::size_t r) {
      NormalStream normal(seed_stream(ex.spec().master_seed, r), StreamTag::ou_exact);
      SpectralField w(n);
      for (int i = 0; i < n; ++i) w[i] = normal();
      return ou_exact_step(start, h, w).coeffs;
    });
  });
  auto& table = ex.table("exact_step", {"k", "mean", "expected_mean", "mean_se", "variance",
                                        "expected_variance", "variance_se"});
  bool moments_ok = true;
  for (int i = 0; i < n; ++i) {
    std::vector<double> column(reps);
    for (std::size_t r = 0; r < reps; ++r) column[r] = draws[r][i];
    const auto s = summarize(column);
    const double rate = eigenvalue(i + 1) + alpha;
    const double expected_mean = std::exp(-rate * h) * start.coeffs[i];
    const double expected_var = ou_step_variance(i + 1, alpha, sim.gamma, h);
    const double var_se = expected_var * std::sqrt(2.0 / static_cast<double>(reps - 1));
    moments_ok = moments_ok && std::abs(s.mean - expected_mean) <= 4.0 * s.standard_error &&
                 std::abs(s.variance - expected_var) <= 4.0 * var_se;
    table.add_row({std::to_string(i + 1), fmt(s.mean), fmt(expected_mean), fmt(s.standard_error),
                   fmt(s.variance), fmt(expected_var), fmt(var_se)});
  }
  ex.verdict("exact_step_moments", moments_ok);

  // Second moment of the shared-noise convolution at the horizon.
  const auto system = ex.system();
  std::vector<double> energy;
  ex.phase("trace", [&] {
    energy = parallel_map<double>(static_cast<std::size_t>(p.paths), ex.workers(), [&](std::size_t i) {
      const OuPath z = ou_path(system.noise_for(i), alpha, sim.gamma, system.basis().spec());
      return z.coeffs.col(z.steps()).squaredNorm();
    });
  });
  const auto s = summarize(energy);
  const double expected = transient_second_moment(alpha, sim.gamma, n, sim.horizon);
  ex.results()["trace"] = {{"mean", s.mean},
                           {"se", s.standard_error},
                           {"expected", expected},
                           {"stationary", stationary_second_moment(alpha, sim.gamma, n)}};
  ex.verdict("trace_oracle", std::abs(s.mean - expected) <= 3.0 * s.standard_error);
}

// -- alpha-scaling

void run_alpha_scaling(Experiment& ex) {
  const auto system = ex.system();
  const auto& p = ex.params();
  const auto& sim = ex.sim();
  std::vector<std::vector<double>> stats;
  ex.phase("paths", [&] {
    stats = parallel_map<std::vector<double>>(static_cast<std::size_t>(p.paths), ex.workers(), [&](std::size_t i) {
      return sup_l4_statistics(system.noise_for(i), p.alphas, sim.gamma, p.kappa, system.basis(),
                               sim.horizon);
    });
  });
  auto& table = ex.table("alpha_scaling", {"alpha", "mean_sup_l4", "se"});
  std::vector<double> log_alpha, log_mean;
  for (std::size_t a = 0; a < p.alphas.size(); ++a) {
    std::vector<double> column;
    for (const auto& row : stats) column.push_back(row[a]);
    const auto s = summarize(column);
    table.add_row({fmt(p.alphas[a]), fmt(s.mean), fmt(s.standard_error)});
    log_alpha.push_back(std::log(p.alphas[a]));
    log_mean.push_back(std::log(s.mean));
  }
  const auto fit = fit_line(log_alpha, log_mean);
  const double bound = -(0.25 - sim.gamma - p.kappa) + 0.1;
  const double k_hat =
      estimate_k_hat(system.noise_for(0), sim.gamma, p.eps1, system.basis(), sim.horizon, p.alphas);
  const auto selection = select_alpha(k_hat, sim.gamma, p.eps1, p.eps_prime);
  ex.results()["slope"] = fit.slope;
  ex.results()["intercept"] = fit.intercept;
  ex.results()["slope_bound"] = bound;
  ex.results()["k_hat_path0"] = k_hat;
  ex.results()["alpha_selected_path0"] = selection.alpha;
  ex.verdict("scaling_slope", fit.slope <= bound);
}

// -- expmoment

void run_expmoment(Experiment& ex) {
  const auto system = ex.system();
  const auto& p = ex.params();
  const auto functional = functional_from(p);
  const SpectralField x0 = p.x0.expand(system.modes());
  MomentEstimate m;
  ex.phase("paths", [&] { m = exp_moment(system, x0, functional, p.paths, ex.workers()); });
  ex.excluded(m.excluded);
  ex.results()["functional"] = functional.name();
  ex.results()["lambda"] = functional.lambda;
  ex.results()["moment"] = moment_json(m);
  ex.verdict("not_heavy", !m.unstable);
  const auto& sim = ex.sim();
  if (!sim.nonlinear && functional.kind == PathFunctional::Kind::terminal_l2_sq) {
    const double oracle = linear_oracle_moment(sim.gamma, 0.0, sim.n, sim.horizon, functional.lambda, x0);
    ex.results()["oracle"] = oracle;
    ex.verdict("linear_oracle", std::abs(m.estimate - oracle) <= 3.0 * m.se);
  }
}

// -- lambda-scan

void run_lambda_scan(Experiment& ex) {
  const auto system = ex.system();
  const auto& p = ex.params();
  const auto& sim = ex.sim();
  const auto functional = functional_from(p);
  const SpectralField x0 = p.x0.expand(system.modes());
  LambdaScan scan;
  ex.phase("paths", [&] { scan = lambda_scan(system, x0, functional, p.lambdas, p.paths, ex.workers()); });
  const bool oracle_available = !sim.nonlinear && functional.kind == PathFunctional::Kind::terminal_l2_sq;
  const double critical = critical_lambda(sim.gamma, 0.0, sim.n, sim.horizon);
  auto& table = ex.table("lambda_scan", {"lambda", "estimate", "se", "heaviness", "estimate_half",
                                         "se_half", "stable", "oracle"});
  bool oracle_ok = true;
  json rows = json::array();
  for (const auto& row : scan.rows) {
    double oracle = std::nan("");
    if (oracle_available && row.lambda < critical) {
      oracle = linear_oracle_moment(sim.gamma, 0.0, sim.n, sim.horizon, row.lambda, x0);
      if (row.stable) oracle_ok = oracle_ok && std::abs(row.full.estimate - oracle) <= 3.0 * row.full.se;
    }
    ex.excluded(row.full.excluded);
    table.add_row({fmt(row.lambda), fmt(row.full.estimate), fmt(row.full.se), fmt(row.full.heaviness),
                   fmt(row.half.estimate), fmt(row.half.se), row.stable ? "1" : "0", fmt(oracle)});
    rows.push_back({{"lambda", row.lambda}, {"full", moment_json(row.full)},
                    {"half", moment_json(row.half)}, {"stable", row.stable}});
  }
  ex.results()["rows"] = rows;
  ex.results()["critical_lambda_linear"] = critical;
  if (oracle_available) ex.verdict("linear_oracle", oracle_ok);
}

// -- variational

std::vector<LabeledControl> default_controls(const GalerkinSystem& system, const SpectralField& x0,
                                             const PathFunctional& functional) {
  const int n = system.modes();
  const auto steps = system.steps();
  std::vector<LabeledControl> controls;
  controls.push_back({"zero", ControlFunction::zero(n, steps, system.dt())});
  if (!system.config().nonlinear && functional.kind == PathFunctional::Kind::terminal_l2_sq) {
    const auto lq = lq_oracle_control(system, x0, functional.lambda);
    controls.push_back({"lq_oracle", lq});
    ControlFunction half = lq, twice = lq;
    half.values *= 0.5;
    twice.values *= 2.0;
    controls.push_back({"lq_half", half});
    controls.push_back({"lq_double", twice});
  } else {
    ControlFunction push = ControlFunction::zero(n, steps, system.dt());
    push.values.row(0).setConstant(1.0);
    controls.push_back({"mode1_push", push});
    ControlFunction late = ControlFunction::zero(n, steps, system.dt());
    late.values.row(0).tail(steps / 2).setConstant(2.0);
    controls.push_back({"mode1_late", late});
  }
  ControlFunction pulse = ControlFunction::zero(n, steps, system.dt());
  if (n >= 2) pulse.values.row(1).head(std::max<std::int64_t>(1, steps / 2)).setConstant(1.0);
  controls.push_back({"mode2_pulse", pulse});
  return controls;
}

void run_variational(Experiment& ex) {
  const auto system = ex.system();
  const auto& p = ex.params();
  const auto functional = functional_from(p);
  const SpectralField x0 = p.x0.expand(system.modes());
  const auto controls = default_controls(system, x0, functional);
  VariationalReport report;
  ex.phase("paths", [&] {
    report = variational_check(system, x0, functional, controls, p.paths, ex.workers());
  });
  ex.excluded(report.uncontrolled.excluded);
  auto& table = ex.table("variational", {"control", "mean", "se", "control_cost", "combined_se", "violates"});
  json scores = json::array();
  for (const auto& s : report.scores) {
    table.add_row({s.label, fmt(s.mean), fmt(s.se), fmt(s.control_cost), fmt(s.combined_se),
                   s.violates ? "1" : "0"});
    scores.push_back({{"control", s.label}, {"mean", s.mean}, {"se", s.se},
                      {"control_cost", s.control_cost}, {"combined_se", s.combined_se},
                      {"violates", s.violates}});
    if (s.label == "lq_oracle") {
      const double gap = report.uncontrolled.estimate - s.mean;
      ex.results()["lq_gap"] = gap;
      ex.verdict("lq_gap_within_3se", std::abs(gap) <= 3.0 * s.combined_se);
    }
  }
  ex.results()["log_mean_exp"] = moment_json(report.uncontrolled);
  ex.results()["scores"] = scores;
  ex.results()["best_lower_bound"] = report.best_lower_bound;
  ex.results()["duality_gap"] = report.duality_gap;
  ex.verdict("no_violation", !report.violation);
}

// -- gradient

void run_gradient(Experiment& ex) {
  const auto system = ex.system();
  const auto& p = ex.params();
  GradientQuery query;
  query.x = p.x0.expand(system.modes());
  query.h = p.direction.expand(system.modes());
  if (query.h.norm() > 0) query.h /= query.h.norm();
  query.t = p.t;
  query.phi = TestFunctional::parse(p.phi);
  GradientEstimate bel, fd;
  ex.phase("bel", [&] { bel = bel_gradient(query, system, p.paths, ex.workers()); });
  ex.phase("finite_difference", [&] { fd = fd_gradient(query, system, p.eps, p.paths, ex.workers()); });
  ex.results()["bel"] = {{"estimate", bel.estimate}, {"se", bel.se}};
  ex.results()["finite_difference"] = {{"estimate", fd.estimate}, {"se", fd.se}, {"eps", p.eps}};
  ex.verdict("ci_overlap", std::abs(bel.estimate - fd.estimate) <= 1.96 * (bel.se + fd.se));
}

// -- lipschitz

void run_lipschitz(Experiment& ex) {
  const auto system = ex.system();
  const auto& p = ex.params();
  const SpectralField x = p.x0.expand(system.modes());
  const SpectralField xp = p.x_prime.expand(system.modes());
  LipschitzReport report;
  ex.phase("paths", [&] {
    report = lipschitz_probe(system, x, xp, TestFunctional::parse(p.phi), p.times, p.paths, ex.workers());
  });
  auto& table = ex.table("lipschitz", {"t", "ratio", "se"});
  for (const auto& row : report.rows) table.add_row({fmt(row.t), fmt(row.ratio), fmt(row.se)});
  ex.results()["slope"] = report.fit_valid ? json(report.fit.slope) : json(nullptr);
  ex.results()["fit_valid"] = report.fit_valid;
  ex.results()["constant"] = report.constant;
  ex.verdict("slope_in_range",
             report.fit_valid && report.fit.slope >= -0.75 && report.fit.slope <= 0.0);
}

// -- invariant

void run_invariant(Experiment& ex) {
  const auto system = ex.system();
  const auto& p = ex.params();
  TailFit fit;
  ex.phase("trajectory", [&] {
    fit = invariant_tail(system, p.burn_in, p.sample_horizon, p.thinning, p.path_index);
  });
  auto& table = ex.table("tail", {"threshold", "log_survival"});
  for (std::size_t i = 0; i < fit.thresholds.size(); ++i)
    table.add_row({fmt(fit.thresholds[i]), fmt(fit.log_survival[i])});
  ex.results()["slope"] = fit.slope;
  ex.results()["intercept"] = fit.intercept;
  ex.results()["r_squared"] = fit.r_squared;
  ex.results()["samples"] = fit.samples;
  ex.verdict("exponential_tail", fit.exponential);
  const auto& sim = ex.sim();
  if (!sim.nonlinear && sim.n == 1) {
    const double analytic = -1.0 / (2.0 * stationary_second_moment(0.0, sim.gamma, 1));
    ex.results()["analytic_slope"] = analytic;
    ex.verdict("analytic_slope_15pct", std::abs(fit.slope - analytic) <= 0.15 * std::abs(analytic));
  }
}

// -- convergence

double sup_difference(const StatePath& fine, const StatePath& coarse, int stride) {
  double sup = 0;
  const int n = std::min(fine.modes(), coarse.modes());
  for (int m = 0; m <= coarse.steps(); ++m) {
    const SpectralField a = fine.states.col(m * stride);
    const SpectralField b = coarse.states.col(m);
    SpectralField diff = resize_modes(a, std::max(fine.modes(), coarse.modes())) -
                         resize_modes(b, std::max(fine.modes(), coarse.modes()));
    (void)n;
    sup = std::max(sup, diff.norm());
  }
  return sup;
}

void run_convergence(Experiment& ex) {
  const auto& p = ex.params();
  const auto& sim = ex.sim();
  const auto paths = static_cast<std::size_t>(std::max<std::int64_t>(1, p.paths));

  // Galerkin: X^{2n} against X^n on one Wiener path.
  auto& galerkin = ex.table("galerkin", {"n", "sup_l2_difference"});
  std::vector<double> diffs;
  ex.phase("galerkin", [&] {
    for (int n : p.mode_counts) {
      SimConfig lo = sim, hi = sim;
      lo.n = n;
      lo.m_quad = 0;
      hi.n = 2 * n;
      hi.m_quad = 0;
      const auto sys_lo = ex.system(lo);
      const auto sys_hi = ex.system(hi);
      const auto per_path = parallel_map<double>(paths, ex.workers(), [&](std::size_t i) {
        const NoisePath noise_hi = sys_hi.noise_for(i);
        const SpectralField x0_hi = p.x0.expand(2 * n);
        const auto a = simulate_path(sys_hi, x0_hi, noise_hi);
        const auto b = simulate_path(sys_lo, resize_modes(x0_hi, n), noise_hi.with_modes(n));
        return sup_difference(a, b, 1);
      });
      double mean = 0;
      for (double d : per_path) mean += d / static_cast<double>(per_path.size());
      diffs.push_back(mean);
      galerkin.add_row({std::to_string(n), fmt(mean)});
    }
  });
  bool decreasing = true;
  for (std::size_t i = 1; i < diffs.size(); ++i) decreasing = decreasing && diffs[i] < diffs[i - 1];
  ex.results()["galerkin_differences"] = diffs;
  ex.verdict("galerkin_decreasing", decreasing);

  // Time: coarse dt against a fine reference on the same Wiener path.
  auto& temporal = ex.table("temporal", {"dt", "sup_l2_difference"});
  std::vector<double> log_dt, log_err;
  ex.phase("temporal", [&] {
    SimConfig fine_cfg = sim;
    fine_cfg.dt = p.fine_dt;
    const auto sys_fine = ex.system(fine_cfg);
    std::vector<StatePath> references = parallel_map<StatePath>(paths, ex.workers(), [&](std::size_t i) {
      return simulate_path(sys_fine, p.x0.expand(sim.n), sys_fine.noise_for(i));
    });
    for (double dt : p.dt_levels) {
      const int factor = static_cast<int>(std::llround(dt / p.fine_dt));
      SimConfig cfg = sim;
      cfg.dt = dt;
      const auto sys = ex.system(cfg);
      const auto per_path = parallel_map<double>(paths, ex.workers(), [&](std::size_t i) {
        const auto coarse = simulate_path(sys, p.x0.expand(sim.n), sys_fine.noise_for(i).coarsened(factor));
        return sup_difference(references[i], coarse, factor);
      });
      double mean = 0;
      for (double d : per_path) mean += d / static_cast<double>(per_path.size());
      temporal.add_row({fmt(dt), fmt(mean)});
      log_dt.push_back(std::log(dt));
      log_err.push_back(std::log(mean));
    }
  });
  if (log_dt.size() >= 2) {
    const auto fit = fit_line(log_dt, log_err);
    ex.results()["temporal_order"] = fit.slope;
    ex.verdict("temporal_order_at_least_half", fit.slope >= 0.5);
  }
}

// -- selftest

void run_selftest(Experiment& ex) {
  const int n = ex.sim().n;
  const BasisD basis(BasisSpec::dealiased(n));
  NormalStream normal(seed_stream(ex.spec().master_seed, 0), StreamTag::auxiliary);
  auto random_field = [&](int modes) {
    SpectralField x(modes);
    for (int i = 0; i < modes; ++i) x[i] = normal();
    return x;
  };
  bool parseval = true, round_trip = true, semigroup = true, skew = true, powers = true,
       poincare = true;
  double worst_skew = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const SpectralField x = random_field(n);
    const SpectralField g = basis.to_grid(x);
    parseval = parseval && std::abs(basis.lebesgue_norm(x, 2.0) - x.norm()) <= 1e-12 * x.norm();
    round_trip = round_trip && (basis.to_spectral(g) - x).cwiseAbs().maxCoeff() <= 1e-10;
    const SpectralField a = apply_shifted_heat(apply_shifted_heat(x, 0.013, 2.0), 0.021, 2.0);
    const SpectralField b = apply_shifted_heat(x, 0.034, 2.0);
    semigroup = semigroup && (a - b).norm() <= 1e-12 * b.norm();
    const double s = std::abs(basis.burgers_nonlinearity(x).dot(x)) / std::pow(x.norm(), 3);
    worst_skew = std::max(worst_skew, s);
    skew = skew && s <= 1e-10;
    const SpectralField c = apply_frac_laplacian(apply_frac_laplacian(x, 0.3), -0.55);
    const SpectralField d = apply_frac_laplacian(x, -0.25);
    powers = powers && (c - d).norm() <= 1e-12 * d.norm();
    poincare = poincare && norm_sobolev(x, 1.0) >= std::numbers::pi * x.norm() * (1 - 1e-14);
  }
  ex.verdict("parseval", parseval);
  ex.verdict("transform_round_trip", round_trip);
  ex.verdict("semigroup_law", semigroup);
  ex.verdict("skew_identity", skew);
  ex.verdict("fractional_powers", powers);
  ex.verdict("poincare", poincare);
  ex.results()["worst_skew_ratio"] = worst_skew;

  // Noise engine: determinism and the stationary limit of the trace.
  const NoisePath a({ex.spec().master_seed, 7}, 0.01, 50, n);
  const NoisePath b({ex.spec().master_seed, 7}, 0.01, 50, n);
  ex.verdict("noise_determinism", a.increments() == b.increments());
  const double stationary = stationary_second_moment(0.0, ex.sim().gamma, n);
  const double late = transient_second_moment(0.0, ex.sim().gamma, n, 50.0);
  ex.verdict("trace_limit", std::abs(stationary - late) <= 1e-12 * stationary);
  const auto selection = select_alpha(2.0, 0.0, 0.05, 0.5);
  ex.verdict("alpha_selection", std::abs(selection.alpha - 66.0) <= 1e-9);

  // Exact OU step, 20000 draws per mode.
  OuState start = OuState::origin(n, 10.0, ex.sim().gamma);
  for (int i = 0; i < n; ++i) start.coeffs[i] = 0.5;
  const int reps = 20000;
  Matrix<double> samples(n, reps);
  NormalStream draws(seed_stream(ex.spec().master_seed, 1), StreamTag::ou_exact);
  for (int r = 0; r < reps; ++r) {
    SpectralField w(n);
    for (int i = 0; i < n; ++i) w[i] = draws();
    samples.col(r) = ou_exact_step(start, 0.01, w).coeffs;
  }
  bool ou_ok = true;
  for (int i = 0; i < n; ++i) {
    std::vector<double> row(samples.row(i).data(), samples.row(i).data() + 0);
    row.assign(reps, 0.0);
    for (int r = 0; r < reps; ++r) row[r] = samples(i, r);
    const auto s = summarize(row);
    const double mean = std::exp(-(eigenvalue(i + 1) + 10.0) * 0.01) * 0.5;
    const double var = ou_step_variance(i + 1, 10.0, ex.sim().gamma, 0.01);
    ou_ok = ou_ok && std::abs(s.mean - mean) <= 4.0 * s.standard_error &&
            std::abs(s.variance - var) <= 4.0 * var * std::sqrt(2.0 / (reps - 1));
  }
  ex.verdict("ou_exact_step", ou_ok);
}

using Runner = std::function<void(Experiment&)>;

const std::map<std::string, Runner>& registry() {
  static const std::map<std::string, Runner> runners = {
      {"simulate", run_simulate},       {"ou-check", run_ou_check},
      {"alpha-scaling", run_alpha_scaling}, {"expmoment", run_expmoment},
      {"lambda-scan", run_lambda_scan}, {"variational", run_variational},
      {"gradient", run_gradient},       {"lipschitz", run_lipschitz},
      {"invariant", run_invariant},     {"convergence", run_convergence},
      {"selftest", run_selftest}};
  return runners;
}

}  // namespace

ResultBundle run(const std::string& subcommand, const ExperimentSpec& spec) {
  const auto& runners = registry();
  const auto it = runners.find(subcommand);
  if (it == runners.end()) throw UsageError("unknown subcommand '" + subcommand + "'");
  ExperimentSpec effective = spec;
  effective.subcommand = subcommand;
  try {
    effective.sim.seed = effective.master_seed;
    effective.sim.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("invalid sim configuration: ") + e.what());
  }
  Experiment ex(effective);
  const auto start = std::chrono::steady_clock::now();
  try {
    it->second(ex);
  } catch (const BlowUpError& e) {
    ex.results()["error"] = e.what();
    ex.excluded(1);
  }
  ex.phase("total", [&] {});
  auto bundle = ex.finish();
  bundle.timings["total"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  bundle.summary["timings"] = bundle.timings;
  return bundle;
}

}  // namespace sburgers
