#include "sburgers/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "sburgers/parallel.hpp"

namespace sburgers {

// ---------------------------------------------------------------- aggregate

void LogMeanExpAggregate::add(double g) {
  if (g > running_max_) {
    shifted_sum_ = shifted_sum_ * std::exp(running_max_ - g) + 1.0;
    running_max_ = g;
  } else {
    shifted_sum_ += std::exp(g - running_max_);
  }
  ++count_;
  sum_g_ += g;
  sum_g_sq_ += g * g;
}

void LogMeanExpAggregate::merge(const LogMeanExpAggregate& other) {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double top = std::max(running_max_, other.running_max_);
  shifted_sum_ = shifted_sum_ * std::exp(running_max_ - top) +
                 other.shifted_sum_ * std::exp(other.running_max_ - top);
  running_max_ = top;
  count_ += other.count_;
  sum_g_ += other.sum_g_;
  sum_g_sq_ += other.sum_g_sq_;
}

double LogMeanExpAggregate::mean() const {
  return count_ > 0 ? sum_g_ / static_cast<double>(count_) : 0.0;
}

double LogMeanExpAggregate::variance() const {
  if (count_ < 2) return 0.0;
  const double n = static_cast<double>(count_);
  return std::max(0.0, (sum_g_sq_ - sum_g_ * sum_g_ / n) / (n - 1.0));
}

double LogMeanExpAggregate::log_mean_exp() const {
  if (count_ == 0) throw std::logic_error("log_mean_exp: empty aggregate");
  const double raw = running_max_ + std::log(shifted_sum_ / static_cast<double>(count_));
  return std::max(raw, mean());
}

// ---------------------------------------------------------------- functionals

double TestFunctional::operator()(const SpectralField& x) const {
  switch (kind) {
    case Kind::constant:
      return value;
    case Kind::gaussian_energy:
      return std::exp(-x.squaredNorm());
    case Kind::mode_sine:
      return mode <= x.size() ? std::sin(value * x[mode - 1]) : 0.0;
    case Kind::halfspace:
      return (mode <= x.size() && x[mode - 1] > 0) ? 1.0 : 0.0;
  }
  return 0.0;
}

std::string TestFunctional::name() const {
  std::ostringstream out;
  out.precision(17);
  switch (kind) {
    case Kind::constant:
      out << "constant:" << value;
      break;
    case Kind::gaussian_energy:
      out << "gaussian_energy";
      break;
    case Kind::mode_sine:
      out << "mode_sine:" << mode << ":" << value;
      break;
    case Kind::halfspace:
      out << "halfspace:" << mode;
      break;
  }
  return out.str();
}

TestFunctional TestFunctional::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ':');) parts.push_back(item);
  if (parts.empty()) throw std::invalid_argument("test functional: empty descriptor");
  try {
    if (parts[0] == "gaussian_energy" && parts.size() == 1) return gaussian_energy();
    if (parts[0] == "constant" && parts.size() == 2) return constant(std::stod(parts[1]));
    if (parts[0] == "mode_sine" && parts.size() == 3)
      return mode_sine(std::stoi(parts[1]), std::stod(parts[2]));
    if (parts[0] == "halfspace" && parts.size() == 2) return halfspace(std::stoi(parts[1]));
  } catch (const std::logic_error&) {
  }
  throw std::invalid_argument("test functional: cannot parse '" + text + "'");
}

void PathFunctional::validate() const {
  if (!std::isfinite(lambda)) throw std::invalid_argument("functional: lambda must be finite");
  if (kind == Kind::y_dissipation && !(alpha >= 1.0))
    throw std::invalid_argument("functional: y_dissipation needs alpha >= 1");
}

std::string PathFunctional::name() const {
  switch (kind) {
    case Kind::sup_l2_sq:
      return "sup_l2_sq";
    case Kind::terminal_l2_sq:
      return "terminal_l2_sq";
    case Kind::y_dissipation:
      return "y_dissipation";
    case Kind::custom_bounded:
      return "custom_bounded";
  }
  return "?";
}

PathFunctional::Kind PathFunctional::parse_kind(const std::string& text) {
  if (text == "sup_l2_sq") return Kind::sup_l2_sq;
  if (text == "terminal_l2_sq") return Kind::terminal_l2_sq;
  if (text == "y_dissipation") return Kind::y_dissipation;
  if (text == "custom_bounded") return Kind::custom_bounded;
  throw std::invalid_argument("functional: unknown kind '" + text + "'");
}

namespace {

SpectralField terminal_state(const GalerkinSystem& system, const SpectralField& x0,
                             const NoisePath& noise, const ControlFunction* control = nullptr) {
  SpectralField last;
  system.integrate(x0, noise, control, [&](std::int64_t m, double, const SpectralField& x) {
    if (m == noise.steps()) last = x;
    return true;
  });
  return last;
}

std::int64_t steps_for_time(const GalerkinSystem& system, double t) {
  const double ratio = t / system.dt();
  const auto steps = static_cast<std::int64_t>(std::llround(ratio));
  if (steps < 1 || std::abs(ratio - static_cast<double>(steps)) > 1e-9 * ratio)
    throw std::invalid_argument("time " + std::to_string(t) + " is not on the dt grid");
  return steps;
}

}  // namespace

double evaluate_functional(const GalerkinSystem& system, const SpectralField& x0,
                           const PathFunctional& functional, const NoisePath& noise,
                           const ControlFunction* control) {
  using Kind = PathFunctional::Kind;
  switch (functional.kind) {
    case Kind::terminal_l2_sq:
      return terminal_state(system, x0, noise, control).squaredNorm();
    case Kind::custom_bounded:
      return functional.custom(terminal_state(system, x0, noise, control));
    case Kind::sup_l2_sq: {
      double sup = 0;
      system.integrate(x0, noise, control, [&](std::int64_t, double, const SpectralField& x) {
        sup = std::max(sup, x.squaredNorm());
        return true;
      });
      return sup;
    }
    case Kind::y_dissipation: {
      const OuStepper shifted(system.modes(), functional.alpha, system.config().gamma, noise.dt());
      const Vector<double>& ak = system.basis().eigenvalues();
      SpectralField z = SpectralField::Zero(system.modes());
      SpectralField db(system.modes());
      double total = 0;
      system.integrate(x0, noise, control, [&](std::int64_t m, double, const SpectralField& x) {
        if (m == noise.steps()) return true;
        total += ak.dot((x - z).cwiseAbs2()) * noise.dt();
        noise.increment(m, std::span<double>(db.data(), db.size()));
        shifted.advance(z, db);
        return true;
      });
      return total;
    }
  }
  return 0.0;
}

PathValues functional_values(const GalerkinSystem& system, const SpectralField& x0,
                             const PathFunctional& functional, std::int64_t paths, int workers,
                             std::uint64_t first_index) {
  functional.validate();
  const auto raw = parallel_map<std::optional<double>>(
      static_cast<std::size_t>(paths), workers, [&](std::size_t i) -> std::optional<double> {
        try {
          return evaluate_functional(system, x0, functional, system.noise_for(first_index + i));
        } catch (const BlowUpError&) {
          return std::nullopt;
        }
      });
  PathValues out;
  out.values.reserve(raw.size());
  for (const auto& v : raw) {
    if (v) {
      out.values.push_back(*v);
    } else {
      ++out.excluded;
    }
  }
  return out;
}

// ---------------------------------------------------------------- moments

MomentEstimate summarize_log_moment(std::span<const double> g, int batches) {
  if (g.empty()) throw std::invalid_argument("summarize_log_moment: no samples");
  MomentEstimate out;
  out.paths = static_cast<std::int64_t>(g.size());
  LogMeanExpAggregate total;
  std::vector<double> batch_estimates;
  const auto b_count = static_cast<std::size_t>(std::max(1, batches));
  for (std::size_t b = 0; b < b_count; ++b) {
    const auto range = batch_range(g.size(), b_count, b);
    if (range.end == range.begin) continue;
    LogMeanExpAggregate batch;
    for (std::size_t i = range.begin; i < range.end; ++i) batch.add(g[i]);
    batch_estimates.push_back(batch.log_mean_exp());
    total.merge(batch);
  }
  out.estimate = total.log_mean_exp();
  out.mean_g = total.mean();
  if (batch_estimates.size() > 1) {
    const auto s = summarize(batch_estimates);
    out.se = std::sqrt(s.variance / static_cast<double>(batch_estimates.size()));
  }
  std::vector<double> mass(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) mass[i] = std::exp(g[i] - total.running_max());
  std::sort(mass.begin(), mass.end(), std::greater<>());
  const auto top = static_cast<std::size_t>(std::ceil(0.01 * static_cast<double>(g.size())));
  double top_mass = 0, all_mass = 0;
  for (std::size_t i = 0; i < mass.size(); ++i) {
    all_mass += mass[i];
    if (i < top) top_mass += mass[i];
  }
  out.heaviness = top_mass / all_mass;
  out.unstable = out.heaviness > kHeavinessLimit;
  return out;
}

namespace {

std::vector<double> scaled(std::span<const double> values, double lambda) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = lambda * values[i];
  return out;
}

}  // namespace

MomentEstimate exp_moment(const GalerkinSystem& system, const SpectralField& x0,
                          const PathFunctional& functional, std::int64_t paths, int workers) {
  if (paths < 100) throw std::invalid_argument("exp_moment: need at least 100 paths");
  const PathValues values = functional_values(system, x0, functional, paths, workers);
  if (values.values.empty()) throw BlowUpError(-1);
  MomentEstimate out = summarize_log_moment(scaled(values.values, functional.lambda));
  out.excluded = values.excluded;
  return out;
}

double linear_terminal_variance(int k, double gamma, double alpha, double horizon) {
  return ou_step_variance(k, alpha, gamma, horizon);
}

double critical_lambda(double gamma, double alpha, int n, double horizon) {
  double top = 0;
  for (int k = 1; k <= n; ++k) top = std::max(top, linear_terminal_variance(k, gamma, alpha, horizon));
  return 1.0 / (2.0 * top);
}

double linear_oracle_moment(double gamma, double alpha, int n, double horizon, double lambda,
                            const SpectralField& x0) {
  validate_gamma(gamma);
  const double critical = critical_lambda(gamma, alpha, n, horizon);
  if (!(lambda < critical)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "linear_oracle_moment: lambda=" << lambda << " at or beyond critical value "
        << critical;
    throw std::domain_error(msg.str());
  }
  double total = 0;
  for (int k = 1; k <= n; ++k) {
    const double var = linear_terminal_variance(k, gamma, alpha, horizon);
    const double denom = 1.0 - 2.0 * lambda * var;
    total += -0.5 * std::log(denom);
    if (k <= x0.size()) {
      const double mu = std::exp(-(eigenvalue(k) + alpha) * horizon) * x0[k - 1];
      total += lambda * mu * mu / denom;
    }
  }
  return total;
}

LambdaScan lambda_scan(const GalerkinSystem& system, const SpectralField& x0,
                       const PathFunctional& functional, std::span<const double> lambdas,
                       std::int64_t paths, int workers) {
  if (!std::is_sorted(lambdas.begin(), lambdas.end()))
    throw std::invalid_argument("lambda_scan: grid must be sorted ascending");
  if (paths < 100) throw std::invalid_argument("lambda_scan: need at least 100 paths");
  PathFunctional unit = functional;
  unit.lambda = 1.0;
  const PathValues values = functional_values(system, x0, unit, 2 * paths, workers);
  const std::size_t half = std::min<std::size_t>(static_cast<std::size_t>(paths), values.values.size());
  LambdaScan scan;
  for (double lambda : lambdas) {
    LambdaRow row;
    row.lambda = lambda;
    const auto g = scaled(values.values, lambda);
    row.full = summarize_log_moment(g);
    row.half = summarize_log_moment(std::span<const double>(g).first(half));
    row.full.excluded = values.excluded;
    const double combined = std::hypot(row.full.se, row.half.se);
    row.stable = std::abs(row.full.estimate - row.half.estimate) <= 2.0 * combined &&
                 !row.full.unstable;
    scan.rows.push_back(row);
  }
  return scan;
}

// ---------------------------------------------------------------- variational

ControlFunction lq_oracle_control(const GalerkinSystem& system, const SpectralField& x0,
                                  double lambda) {
  if (system.config().nonlinear)
    throw std::invalid_argument("lq_oracle_control: requires the linear system");
  const int n = system.modes();
  const auto steps = system.steps();
  const double dt = system.dt();
  const Matrix<double> decay = system.linear().decay().asDiagonal();
  const Matrix<double> input =
      system.drift_weight().cwiseProduct(system.noise_color()).asDiagonal();

  Matrix<double> gramian = Matrix<double>::Zero(n, n);
  Matrix<double> flow = Matrix<double>::Identity(n, n);
  for (std::int64_t j = 0; j < steps; ++j) {
    gramian = decay * gramian * decay.transpose() + input * input.transpose();
    flow = decay * flow;
  }
  const SpectralField mean = flow * resize_modes(x0, n);
  const Matrix<double> system_matrix =
      Matrix<double>::Identity(n, n) - (2.0 * lambda / dt) * gramian;
  const Eigen::LLT<Matrix<double>> factor(system_matrix);
  if (factor.info() != Eigen::Success)
    throw std::domain_error("lq_oracle_control: lambda beyond the concave range");
  const SpectralField target = factor.solve(mean);

  ControlFunction u = ControlFunction::zero(n, steps, dt);
  Matrix<double> propagate = Matrix<double>::Identity(n, n);
  for (std::int64_t m = steps - 1; m >= 0; --m) {
    u.values.col(m) = (2.0 * lambda / dt) * (propagate * input).transpose() * target;
    propagate = propagate * decay;
  }
  return u;
}

VariationalReport variational_check(const GalerkinSystem& system, const SpectralField& x0,
                                    const PathFunctional& functional,
                                    std::span<const LabeledControl> controls, std::int64_t paths,
                                    int workers) {
  functional.validate();
  if (paths < 100) throw std::invalid_argument("variational_check: need at least 100 paths");
  PathFunctional unit = functional;
  unit.lambda = 1.0;
  std::vector<double> costs;
  for (const auto& c : controls) costs.push_back(0.5 * c.control.squared_norm());

  using Row = std::optional<std::vector<double>>;
  const auto raw = parallel_map<Row>(static_cast<std::size_t>(paths), workers, [&](std::size_t i) -> Row {
    const NoisePath noise = system.noise_for(i);
    std::vector<double> row;
    row.reserve(controls.size() + 1);
    try {
      row.push_back(functional.lambda * evaluate_functional(system, x0, unit, noise));
      for (std::size_t c = 0; c < controls.size(); ++c)
        row.push_back(functional.lambda *
                          evaluate_functional(system, x0, unit, noise, &controls[c].control) -
                      costs[c]);
    } catch (const BlowUpError&) {
      return std::nullopt;
    }
    return row;
  });

  std::vector<std::vector<double>> columns(controls.size() + 1);
  std::int64_t excluded = 0;
  for (const auto& row : raw) {
    if (!row) {
      ++excluded;
      continue;
    }
    for (std::size_t c = 0; c < row->size(); ++c) columns[c].push_back((*row)[c]);
  }
  if (columns[0].empty()) throw BlowUpError(-1);

  VariationalReport report;
  report.uncontrolled = summarize_log_moment(columns[0]);
  report.uncontrolled.excluded = excluded;
  report.best_lower_bound = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < controls.size(); ++c) {
    const auto s = summarize(columns[c + 1]);
    ControlScore score;
    score.label = controls[c].label;
    score.mean = s.mean;
    score.se = s.standard_error;
    score.control_cost = costs[c];
    score.combined_se = std::hypot(report.uncontrolled.se, s.standard_error);
    score.violates = score.mean > report.uncontrolled.estimate + 3.0 * score.combined_se;
    report.violation = report.violation || score.violates;
    report.best_lower_bound = std::max(report.best_lower_bound, score.mean);
    report.scores.push_back(score);
  }
  report.duality_gap = report.uncontrolled.estimate - report.best_lower_bound;
  return report;
}

// ---------------------------------------------------------------- gradients

double bel_path_value(const GradientQuery& query, const GalerkinSystem& system,
                      const NoisePath& noise) {
  if (!(query.t > 0)) throw std::invalid_argument("bel_gradient: t must be positive");
  const StatePath path = simulate_path(system, query.x, noise);
  const DerivativeState eta = derivative_flow(path, query.h, system);
  const Vector<double> inverse_gain = system.linear().noise_gain().cwiseInverse();
  SpectralField db(system.modes());
  double weight = 0;
  for (std::int64_t m = 0; m < noise.steps(); ++m) {
    noise.increment(m, std::span<double>(db.data(), db.size()));
    weight += inverse_gain.cwiseProduct(eta.path.col(m + 1)).dot(db);
  }
  return query.phi(path.terminal()) * weight / query.t;
}

GradientEstimate bel_gradient(const GradientQuery& query, const GalerkinSystem& system,
                              std::int64_t paths, int workers) {
  if (!(query.t > 0)) throw std::invalid_argument("bel_gradient: t must be positive");
  const auto steps = steps_for_time(system, query.t);
  const auto values = parallel_map<double>(static_cast<std::size_t>(paths), workers, [&](std::size_t i) {
    return bel_path_value(query, system, system.noise_for(i).truncated(steps));
  });
  const auto s = summarize(values);
  return {s.mean, s.standard_error, paths};
}

GradientEstimate fd_gradient(const GradientQuery& query, const GalerkinSystem& system,
                             double eps, std::int64_t paths, int workers) {
  if (!(eps > 0)) throw std::invalid_argument("fd_gradient: eps must be positive");
  const auto steps = steps_for_time(system, query.t);
  const SpectralField h = resize_modes(query.h, system.modes());
  const SpectralField x = resize_modes(query.x, system.modes());
  const auto values = parallel_map<double>(static_cast<std::size_t>(paths), workers, [&](std::size_t i) {
    const NoisePath noise = system.noise_for(i).truncated(steps);
    const double up = query.phi(terminal_state(system, x + eps * h, noise));
    const double down = query.phi(terminal_state(system, x - eps * h, noise));
    return (up - down) / (2.0 * eps);
  });
  const auto s = summarize(values);
  return {s.mean, s.standard_error, paths};
}

LipschitzReport lipschitz_probe(const GalerkinSystem& system, const SpectralField& x,
                                const SpectralField& x_prime, const TestFunctional& phi,
                                std::span<const double> times, std::int64_t paths, int workers) {
  const SpectralField a = resize_modes(x, system.modes());
  const SpectralField b = resize_modes(x_prime, system.modes());
  const double distance = (a - b).norm();
  if (!(distance > 0)) throw std::invalid_argument("lipschitz_probe: x and x' coincide");
  if (times.empty()) throw std::invalid_argument("lipschitz_probe: empty time grid");
  std::vector<std::int64_t> marks;
  for (double t : times) marks.push_back(steps_for_time(system, t));
  const auto last = *std::max_element(marks.begin(), marks.end());

  const auto diffs = parallel_map<std::vector<double>>(
      static_cast<std::size_t>(paths), workers, [&](std::size_t i) {
        const NoisePath noise = system.noise_for(i).truncated(last);
        std::vector<double> out(marks.size(), 0.0);
        auto record = [&](double sign) {
          return [&, sign](std::int64_t m, double, const SpectralField& state) {
            for (std::size_t j = 0; j < marks.size(); ++j)
              if (marks[j] == m) out[j] += sign * phi(state);
            return true;
          };
        };
        system.integrate(a, noise, nullptr, record(1.0));
        system.integrate(b, noise, nullptr, record(-1.0));
        return out;
      });

  LipschitzReport report;
  report.fit_valid = true;
  std::vector<double> log_t, log_ratio;
  for (std::size_t j = 0; j < marks.size(); ++j) {
    std::vector<double> column(diffs.size());
    for (std::size_t i = 0; i < diffs.size(); ++i) column[i] = diffs[i][j];
    const auto s = summarize(column);
    LipschitzRow row{times[j], std::abs(s.mean) / distance, s.standard_error / distance};
    report.constant = std::max(report.constant, row.ratio * std::sqrt(row.t));
    if (row.ratio > 0) {
      log_t.push_back(std::log(row.t));
      log_ratio.push_back(std::log(row.ratio));
    } else {
      report.fit_valid = false;
    }
    report.rows.push_back(row);
  }
  if (report.fit_valid && log_t.size() >= 2) {
    report.fit = fit_line(log_t, log_ratio);
  } else {
    report.fit_valid = false;
  }
  return report;
}

// ---------------------------------------------------------------- invariant measure

TailFit fit_tail(std::span<const double> samples, int thresholds) {
  if (samples.size() < kMinTailSamples)
    throw std::invalid_argument("fit_tail: need at least " + std::to_string(kMinTailSamples) +
                                " samples, got " + std::to_string(samples.size()));
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = quantile(sorted, 0.005);
  const double hi = quantile(sorted, 0.995);
  TailFit fit;
  fit.samples = sorted.size();
  const double n = static_cast<double>(sorted.size());
  for (int i = 0; i < thresholds; ++i) {
    const double r = lo + (hi - lo) * i / (thresholds - 1);
    const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), r);
    fit.thresholds.push_back(r);
    fit.log_survival.push_back(std::log(static_cast<double>(above) / n));
  }
  const auto line = fit_line(fit.thresholds, fit.log_survival);
  fit.slope = line.slope;
  fit.intercept = line.intercept;
  fit.r_squared = line.r_squared;
  fit.exponential = fit.slope < 0 && fit.r_squared >= 0.9;
  return fit;
}

std::vector<double> invariant_samples(const GalerkinSystem& system, double burn_in,
                                      double sample_horizon, double thinning,
                                      std::uint64_t path_index) {
  if (!(burn_in >= 10.0)) throw std::invalid_argument("invariant_tail: burn_in must be >= 10");
  if (!(sample_horizon > 0) || !(thinning > 0))
    throw std::invalid_argument("invariant_tail: horizon and thinning must be positive");
  const auto burn_steps = steps_for_time(system, burn_in);
  const auto thin_steps = steps_for_time(system, thinning);
  const auto sample_steps = steps_for_time(system, sample_horizon);
  const auto expected = static_cast<std::size_t>(sample_steps / thin_steps);
  if (expected < kMinTailSamples)
    throw std::invalid_argument("invariant_tail: only " + std::to_string(expected) +
                                " post-burn-in samples; need " + std::to_string(kMinTailSamples));
  const NoisePath noise(seed_stream(system.config().seed, path_index), system.dt(),
                        burn_steps + sample_steps, system.modes());
  std::vector<double> samples;
  samples.reserve(expected);
  system.integrate(SpectralField::Zero(system.modes()), noise, nullptr,
                   [&](std::int64_t m, double, const SpectralField& x) {
                     if (m > burn_steps && (m - burn_steps) % thin_steps == 0)
                       samples.push_back(x.squaredNorm());
                     return true;
                   });
  return samples;
}

TailFit invariant_tail(const GalerkinSystem& system, double burn_in, double sample_horizon,
                       double thinning, std::uint64_t path_index) {
  return fit_tail(invariant_samples(system, burn_in, sample_horizon, thinning, path_index));
}

}  // namespace sburgers
