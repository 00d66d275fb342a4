#include "sburgers/dynamics.hpp"

#include <cmath>
#include <numbers>

namespace sburgers {

std::int64_t SimConfig::steps() const {
  if (!(dt > 0) || !(horizon > 0))
    throw std::invalid_argument("config: dt and horizon must be positive");
  const double ratio = horizon / dt;
  const auto steps = static_cast<std::int64_t>(std::llround(ratio));
  if (steps < 1 || std::abs(static_cast<double>(steps) * dt - horizon) > 1e-9 * horizon)
    throw std::invalid_argument("config: horizon must be an integer multiple of dt");
  return steps;
}

void SimConfig::validate() const {
  validate_gamma(gamma);
  basis().validate();
  (void)steps();
}

ControlFunction ControlFunction::zero(int n, std::int64_t steps, double dt) {
  return {dt, Matrix<double>::Zero(n, steps)};
}

std::vector<NormRow> norm_table(const StatePath& path, const BasisD& basis) {
  std::vector<NormRow> rows;
  rows.reserve(path.times.size());
  for (int m = 0; m <= path.steps(); ++m) {
    const SpectralField x = path.at(m);
    rows.push_back({path.times[m], x.norm(), norm_sobolev(x, 1.0), basis.lebesgue_norm(x, 4.0)});
  }
  return rows;
}

SpectralField InitialCondition::expand(int n) const {
  SpectralField x = SpectralField::Zero(n);
  if (!coeffs.empty()) {
    for (int i = 0; i < n && i < static_cast<int>(coeffs.size()); ++i) x[i] = coeffs[i];
  } else if (preset == "zero") {
    // nothing
  } else if (preset == "sawtooth") {
    // xi = sum_k sqrt(2) (-1)^{k+1} / (k pi) e_k
    for (int k = 1; k <= n; ++k)
      x[k - 1] = std::numbers::sqrt2 * ((k % 2 == 1) ? 1.0 : -1.0) / (k * std::numbers::pi);
  } else if (preset.rfind("e_", 0) == 0) {
    int k = 0;
    try {
      k = std::stoi(preset.substr(2));
    } catch (const std::exception&) {
      throw std::invalid_argument("initial condition: bad mode preset '" + preset + "'");
    }
    if (k < 1) throw std::invalid_argument("initial condition: bad mode preset '" + preset + "'");
    if (k <= n) x[k - 1] = 1.0;
  } else {
    throw std::invalid_argument("initial condition: unknown preset '" + preset + "'");
  }
  return scale * x;
}

GalerkinSystem::GalerkinSystem(SimConfig cfg)
    : cfg_((cfg.validate(), cfg)),
      basis_(cfg_.basis()),
      linear_(cfg_.n, 0.0, cfg_.gamma, cfg_.dt),
      steps_(cfg_.steps()),
      drift_weight_(cfg_.n),
      color_(cfg_.n) {
  for (int i = 0; i < cfg_.n; ++i) {
    const double ak = basis_.eigenvalues()[i];
    drift_weight_[i] = -std::expm1(-ak * cfg_.dt) / ak;
    color_[i] = std::pow(ak, cfg_.gamma);
  }
}

SpectralField GalerkinSystem::drift(const SpectralField& x) const {
  if (!cfg_.nonlinear) return SpectralField::Zero(cfg_.n);
  return basis_.burgers_nonlinearity(x);
}

SpectralField GalerkinSystem::linearized_drift(const SpectralField& x,
                                               const SpectralField& h) const {
  if (!cfg_.nonlinear) return SpectralField::Zero(cfg_.n);
  return basis_.linearized_nonlinearity(x, h);
}

SpectralField GalerkinSystem::step(const SpectralField& x, const SpectralField& dbeta,
                                   const SpectralField* control, std::int64_t step_index) const {
  SpectralField forcing = drift(x);
  if (control != nullptr) forcing += color_.cwiseProduct(*control);
  SpectralField next = linear_.decay().cwiseProduct(x) + drift_weight_.cwiseProduct(forcing) +
                       linear_.noise_gain().cwiseProduct(dbeta);
  if (!next.allFinite()) throw BlowUpError(step_index);
  return next;
}

void GalerkinSystem::check_noise(const NoisePath& noise) const {
  if (noise.modes() != cfg_.n) throw std::invalid_argument("noise path: mode count mismatch");
  if (std::abs(noise.dt() - cfg_.dt) > 1e-12 * cfg_.dt)
    throw std::invalid_argument("noise path: time step does not match the configuration");
}

NoisePath GalerkinSystem::noise_for(std::uint64_t path_index) const {
  return {seed_stream(cfg_.seed, path_index), cfg_.dt, steps_, cfg_.n};
}

SpectralField step_burgers(const SpectralField& x, const SpectralField& dbeta,
                           const SpectralField* control, const GalerkinSystem& system) {
  return system.step(x, dbeta, control);
}

StatePath simulate_path(const GalerkinSystem& system, const SpectralField& x0,
                        const NoisePath& noise, const ControlFunction* control) {
  StatePath path;
  path.times.resize(noise.steps() + 1);
  path.states.resize(system.modes(), noise.steps() + 1);
  system.integrate(x0, noise, control, [&](std::int64_t m, double t, const SpectralField& x) {
    path.times[m] = t;
    path.states.col(m) = x;
    return true;
  });
  return path;
}

YDecomposition decompose_y(const StatePath& path, double alpha, const NoisePath& noise,
                           const GalerkinSystem& system) {
  system.check_noise(noise);
  if (noise.steps() != path.steps())
    throw std::invalid_argument("decompose_y: noise grid does not match the path");
  YDecomposition out;
  out.z = ou_path(noise, alpha, system.config().gamma, system.basis().spec());
  out.y = path.states - out.z.coeffs;
  const Vector<double>& ak = system.basis().eigenvalues();
  for (int m = 0; m < path.steps(); ++m)
    out.dissipation += ak.dot(out.y.col(m).cwiseAbs2()) * noise.dt();
  return out;
}

DerivativeState derivative_flow(const StatePath& path, const SpectralField& h,
                                const GalerkinSystem& system) {
  if (path.modes() != system.modes())
    throw std::invalid_argument("derivative_flow: path/system mode mismatch");
  DerivativeState out;
  out.direction = resize_modes(h, system.modes());
  out.path.resize(system.modes(), path.steps() + 1);
  SpectralField eta = out.direction;
  out.path.col(0) = eta;
  const auto& decay = system.linear().decay();
  const auto& weight = system.drift_weight();
  for (int m = 0; m < path.steps(); ++m) {
    const SpectralField x = path.at(m);
    eta = decay.cwiseProduct(eta) + weight.cwiseProduct(system.linearized_drift(x, eta));
    if (!eta.allFinite()) throw BlowUpError(m);
    out.path.col(m + 1) = eta;
  }
  return out;
}

EnergyReport energy_diagnostic(const Matrix<double>& y, const OuPath& z,
                               const ControlFunction* control, const GalerkinSystem& system) {
  if (y.cols() != z.coeffs.cols() || y.rows() != z.coeffs.rows())
    throw std::invalid_argument("energy_diagnostic: Y and z grids differ");
  const double dt = system.dt();
  const auto& basis = system.basis();
  const Vector<double>& ak = basis.eigenvalues();
  EnergyReport report;
  report.rows.reserve(y.cols() - 1);
  for (Eigen::Index m = 0; m + 1 < y.cols(); ++m) {
    const SpectralField ym = y.col(m);
    const SpectralField zm = z.coeffs.col(m);
    EnergyRow row{};
    row.t = z.times[m];
    row.rate = (y.col(m + 1).squaredNorm() - ym.squaredNorm()) / (2.0 * dt);
    row.dissipation = -ak.dot(ym.cwiseAbs2());
    row.shift = z.alpha * ym.dot(zm);
    if (control != nullptr)
      row.control = system.noise_color().cwiseProduct(ym).dot(control->values.col(m));
    row.transport = system.drift(ym + zm).dot(ym);
    row.residual = row.rate - (row.dissipation + row.shift + row.control + row.transport);
    report.max_abs_residual = std::max(report.max_abs_residual, std::abs(row.residual));
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace sburgers
