#include "sburgers/noise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sburgers {

NoisePath::NoisePath(GeneratorKey key, double dt, std::int64_t steps, int modes, int stride)
    : key_(key), dt_(dt), steps_(steps), modes_(modes), stride_(stride) {
  if (!(dt > 0)) throw std::invalid_argument("noise path: dt must be positive");
  if (steps < 1) throw std::invalid_argument("noise path: steps must be >= 1");
  if (modes < 1) throw std::invalid_argument("noise path: modes must be >= 1");
  if (stride < 1) throw std::invalid_argument("noise path: stride must be >= 1");
}

NoisePath NoisePath::silent(double dt, std::int64_t steps, int modes) {
  NoisePath path({0, 0}, dt, steps, modes);
  path.silent_ = true;
  return path;
}

void NoisePath::increment(std::int64_t step, std::span<double> out) const {
  if (static_cast<int>(out.size()) != modes_)
    throw std::invalid_argument("noise path: output length mismatch");
  if (step < 0 || step >= steps_) throw std::out_of_range("noise path: step out of range");
  std::fill(out.begin(), out.end(), 0.0);
  if (silent_) return;
  const double scale = std::sqrt(dt_ / stride_);
  const int blocks = (modes_ + 3) / 4;
  for (int i = 0; i < stride_; ++i) {
    const auto fine = static_cast<std::uint64_t>(step * stride_ + i);
    for (int b = 0; b < blocks; ++b) {
      const auto z = normal_block(key_, StreamTag::wiener, fine, static_cast<std::uint64_t>(b));
      const int first = 4 * b;
      const int count = std::min(4, modes_ - first);
      for (int j = 0; j < count; ++j) out[first + j] += scale * z[j];
    }
  }
}

SpectralField NoisePath::increment(std::int64_t step) const {
  SpectralField out(modes_);
  increment(step, std::span<double>(out.data(), out.size()));
  return out;
}

Matrix<double> NoisePath::increments() const {
  Matrix<double> out(steps_, modes_);
  SpectralField row(modes_);
  for (std::int64_t s = 0; s < steps_; ++s) {
    increment(s, std::span<double>(row.data(), row.size()));
    out.row(s) = row.transpose();
  }
  return out;
}

NoisePath NoisePath::coarsened(int factor) const {
  if (factor < 1 || steps_ % factor != 0)
    throw std::invalid_argument("noise path: coarsening factor must divide the step count");
  NoisePath out = *this;
  out.dt_ = dt_ * factor;
  out.steps_ = steps_ / factor;
  out.stride_ = stride_ * factor;
  return out;
}

NoisePath NoisePath::with_modes(int modes) const {
  if (modes < 1) throw std::invalid_argument("noise path: modes must be >= 1");
  NoisePath out = *this;
  out.modes_ = modes;
  return out;
}

NoisePath NoisePath::truncated(std::int64_t steps) const {
  if (steps < 1 || steps > steps_) throw std::invalid_argument("noise path: bad truncation");
  NoisePath out = *this;
  out.steps_ = steps;
  return out;
}

double shared_noise_weight(double rate, double h) {
  const double x = 2.0 * rate * h;
  if (x < 1e-300) return 1.0;
  return std::sqrt(-std::expm1(-x) / x);
}

void validate_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 0.25))
    throw std::invalid_argument("gamma must lie in [0, 1/4), got " + std::to_string(gamma));
}

double ou_step_variance(int k, double alpha, double gamma, double h) {
  const double ak = eigenvalue(k);
  const double rate = ak + alpha;
  return std::pow(ak, 2.0 * gamma) * (-std::expm1(-2.0 * rate * h)) / (2.0 * rate);
}

OuState OuState::origin(int n, double alpha, double gamma) {
  validate_gamma(gamma);
  if (alpha < 0) throw std::invalid_argument("ou: negative shift");
  return {0.0, alpha, gamma, SpectralField::Zero(n)};
}

OuState ou_exact_step(const OuState& state, double h, const SpectralField& w) {
  if (!(h > 0)) throw std::invalid_argument("ou_exact_step: h must be positive");
  if (w.size() != state.coeffs.size())
    throw std::invalid_argument("ou_exact_step: draw count mismatch");
  validate_gamma(state.gamma);
  OuState next = state;
  next.t = state.t + h;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const int k = static_cast<int>(i) + 1;
    const double rate = eigenvalue(k) + state.alpha;
    next.coeffs[i] = std::exp(-rate * h) * state.coeffs[i] +
                     std::sqrt(ou_step_variance(k, state.alpha, state.gamma, h)) * w[i];
  }
  return next;
}

OuStepper::OuStepper(int n, double alpha, double gamma, double dt)
    : alpha_(alpha), gamma_(gamma), dt_(dt), decay_(n), gain_(n) {
  validate_gamma(gamma);
  if (alpha < 0) throw std::invalid_argument("ou: negative shift");
  if (!(dt > 0)) throw std::invalid_argument("ou: dt must be positive");
  for (int i = 0; i < n; ++i) {
    const double ak = eigenvalue(i + 1);
    const double rate = ak + alpha;
    decay_[i] = std::exp(-rate * dt);
    gain_[i] = std::pow(ak, gamma) * shared_noise_weight(rate, dt);
  }
}

OuPath ou_path(const NoisePath& noise, double alpha, double gamma, const BasisSpec& basis) {
  if (noise.modes() != basis.n) throw std::invalid_argument("ou_path: noise/basis mode mismatch");
  const OuStepper stepper(basis.n, alpha, gamma, noise.dt());
  OuPath path;
  path.alpha = alpha;
  path.gamma = gamma;
  const auto steps = noise.steps();
  path.times.resize(steps + 1);
  path.coeffs.resize(basis.n, steps + 1);
  SpectralField z = SpectralField::Zero(basis.n);
  SpectralField db(basis.n);
  path.times[0] = 0;
  path.coeffs.col(0) = z;
  for (std::int64_t s = 0; s < steps; ++s) {
    noise.increment(s, std::span<double>(db.data(), db.size()));
    stepper.advance(z, db);
    path.times[s + 1] = static_cast<double>(s + 1) * noise.dt();
    path.coeffs.col(s + 1) = z;
  }
  return path;
}

double stationary_second_moment(double alpha, double gamma, int n) {
  double sum = 0;
  for (int k = n; k >= 1; --k) {
    const double pk = std::numbers::pi * k;
    sum += std::pow(pk, 4.0 * gamma) / (2.0 * (pk * pk + alpha));
  }
  return sum;
}

double transient_second_moment(double alpha, double gamma, int n, double t) {
  double sum = 0;
  for (int k = n; k >= 1; --k) sum += ou_step_variance(k, alpha, gamma, t);
  return sum;
}

std::vector<double> sup_l4_statistics(const NoisePath& noise, std::span<const double> alphas,
                                      double gamma, double kappa, const BasisD& basis,
                                      double horizon) {
  validate_gamma(gamma);
  if (kappa < 0 || kappa + gamma >= 0.25)
    throw std::invalid_argument("sup_l4_statistic: need 0 <= kappa and kappa + gamma < 1/4");
  if (noise.modes() != basis.modes())
    throw std::invalid_argument("sup_l4_statistic: noise/basis mode mismatch");
  if (!(horizon > 0)) throw std::invalid_argument("sup_l4_statistic: horizon must be positive");
  const auto steps = static_cast<std::int64_t>(std::llround(horizon / noise.dt()));
  if (steps < 1 || steps > noise.steps())
    throw std::invalid_argument("sup_l4_statistic: horizon not covered by the noise path");

  const int n = basis.modes();
  const Vector<double> smoothing = basis.eigenvalues().array().pow(kappa);
  std::vector<OuStepper> steppers;
  std::vector<SpectralField> states;
  for (double a : alphas) {
    if (a < 1.0) throw std::invalid_argument("sup_l4_statistic: alpha must be >= 1");
    steppers.emplace_back(n, a, gamma, noise.dt());
    states.push_back(SpectralField::Zero(n));
  }
  std::vector<double> sup(alphas.size(), 0.0);
  SpectralField db(n);
  for (std::int64_t s = 0; s < steps; ++s) {
    noise.increment(s, std::span<double>(db.data(), db.size()));
    for (std::size_t i = 0; i < steppers.size(); ++i) {
      steppers[i].advance(states[i], db);
      const SpectralField smoothed = smoothing.cwiseProduct(states[i]);
      sup[i] = std::max(sup[i], basis.lebesgue_norm(smoothed, 4.0));
    }
  }
  return sup;
}

double sup_l4_statistic(const NoisePath& noise, double alpha, double gamma, double kappa,
                        const BasisD& basis, double horizon) {
  const double a[] = {alpha};
  return sup_l4_statistics(noise, a, gamma, kappa, basis, horizon).front();
}

std::vector<double> default_alpha_grid() { return {1, 2, 4, 8, 16, 32, 64}; }

double estimate_k_hat(const NoisePath& noise, double gamma, double eps1, const BasisD& basis,
                      double horizon, std::span<const double> alphas) {
  if (!(eps1 > 0 && eps1 < 0.25 - gamma))
    throw std::invalid_argument("estimate_k_hat: need 0 < eps1 < 1/4 - gamma");
  const auto sups = sup_l4_statistics(noise, alphas, gamma, 0.0, basis, horizon);
  const double exponent = 0.25 - eps1 - gamma;
  double k_hat = 0;
  for (std::size_t i = 0; i < sups.size(); ++i)
    k_hat = std::max(k_hat, std::pow(alphas[i], exponent) * sups[i] / (1.0 + std::sqrt(horizon)));
  return k_hat;
}

AlphaSelection select_alpha(double k_hat, double gamma, double eps1, double eps_prime) {
  validate_gamma(gamma);
  if (!(k_hat >= 0)) throw std::invalid_argument("select_alpha: k_hat must be >= 0");
  if (!(eps1 > 0 && eps1 < 0.25 - gamma))
    throw std::invalid_argument("select_alpha: need 0 < eps1 < 1/4 - gamma");
  if (!(eps_prime > 0 && eps_prime <= 1))
    throw std::invalid_argument("select_alpha: need 0 < eps' <= 1");
  const double exponent = 1.0 / (0.25 - eps1 - gamma);
  return {eps1, eps_prime, k_hat, (std::pow(k_hat, exponent) + 1.0) / eps_prime};
}

}  // namespace sburgers
