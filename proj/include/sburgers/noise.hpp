#pragma once

// Cylindrical Wiener increments and the shifted stochastic convolution
//   z_alpha(t) = int_0^t e^{(A - alpha)(t-s)} (-A)^gamma dW_s,
// sampled mode by mode.

#include <cstdint>
#include <span>
#include <vector>

#include "sburgers/random.hpp"
#include "sburgers/spectral.hpp"

namespace sburgers {

/// Per-mode Brownian increments Delta beta_k on a uniform time grid.
///
/// Increments are regenerated on demand from the key: fine step s, mode k is
/// addressed as Philox counter (s, (k-1)/4, wiener). Coarsening sums `stride`
/// consecutive fine increments, so paths at different dt (or different mode
/// counts) see the same Wiener path.
class NoisePath {
 public:
  NoisePath(GeneratorKey key, double dt, std::int64_t steps, int modes, int stride = 1);

  /// All increments identically zero (deterministic dynamics).
  static NoisePath silent(double dt, std::int64_t steps, int modes);

  const GeneratorKey& key() const { return key_; }
  double dt() const { return dt_; }
  std::int64_t steps() const { return steps_; }
  int modes() const { return modes_; }
  int stride() const { return stride_; }
  bool is_silent() const { return silent_; }

  /// Increments of step `step` (0-based) into out (length modes()).
  void increment(std::int64_t step, std::span<double> out) const;
  SpectralField increment(std::int64_t step) const;

  /// steps x modes matrix of all increments.
  Matrix<double> increments() const;

  /// Same Wiener path sampled every `factor` steps.
  NoisePath coarsened(int factor) const;

  /// Same Wiener path restricted or extended to `modes` modes.
  NoisePath with_modes(int modes) const;

  /// Same Wiener path truncated to its first `steps` steps.
  NoisePath truncated(std::int64_t steps) const;

 private:
  GeneratorKey key_;
  double dt_;
  std::int64_t steps_;
  int modes_;
  int stride_;
  bool silent_ = false;
};

/// Variance-matched weight of a shared increment for a mode relaxing at
/// `rate` over a step h: sqrt((1 - e^{-2 rate h}) / (2 rate h)).
double shared_noise_weight(double rate, double h);

/// Exact one-step variance alpha_k^{2 gamma} (1 - e^{-2 (alpha_k+alpha) h}) / (2 (alpha_k+alpha)).
double ou_step_variance(int k, double alpha, double gamma, double h);

struct OuState {
  double t = 0;
  double alpha = 0;
  double gamma = 0;
  SpectralField coeffs;

  static OuState origin(int n, double alpha, double gamma);
};

/// Exact transition: coeff_k <- e^{-(alpha_k+alpha) h} coeff_k + sigma_k(h) w_k
/// with w_k standard normal.
OuState ou_exact_step(const OuState& state, double h, const SpectralField& w);

/// One shared-noise step of z_alpha with precomputed per-mode factors.
/// Used by both the convolution sampler and the Galerkin integrator (alpha = 0),
/// which keeps z and X on the same code path.
class OuStepper {
 public:
  OuStepper(int n, double alpha, double gamma, double dt);

  double alpha() const { return alpha_; }
  double gamma() const { return gamma_; }
  double dt() const { return dt_; }
  /// e^{-(alpha_k + alpha) dt}
  const Vector<double>& decay() const { return decay_; }
  /// alpha_k^gamma times the shared-noise weight.
  const Vector<double>& noise_gain() const { return gain_; }

  void advance(SpectralField& z, const SpectralField& dbeta) const {
    z = decay_.cwiseProduct(z) + gain_.cwiseProduct(dbeta);
  }

 private:
  double alpha_;
  double gamma_;
  double dt_;
  Vector<double> decay_;
  Vector<double> gain_;
};

struct OuPath {
  double alpha = 0;
  double gamma = 0;
  std::vector<double> times;
  Matrix<double> coeffs;  // n x (steps + 1); column m is z_alpha(t_m)

  int steps() const { return static_cast<int>(times.size()) - 1; }
  OuState state(int m) const { return {times[m], alpha, gamma, coeffs.col(m)}; }
};

void validate_gamma(double gamma);

/// z_alpha on the noise grid, driven by the shared increments.
OuPath ou_path(const NoisePath& noise, double alpha, double gamma, const BasisSpec& basis);

/// sum_{k<=n} (pi k)^{4 gamma} / (2 (pi^2 k^2 + alpha)): the t -> infinity limit
/// of E ||z_alpha(t)||^2 in n modes.
double stationary_second_moment(double alpha, double gamma, int n);

/// Finite-time counterpart of stationary_second_moment at time t.
double transient_second_moment(double alpha, double gamma, int n, double t);

/// sup over grid times in [0, horizon] of || (-A)^kappa z_alpha(t) ||_{L^4}.
double sup_l4_statistic(const NoisePath& noise, double alpha, double gamma, double kappa,
                        const BasisD& basis, double horizon);

/// The same statistic for several shifts on one noise path.
std::vector<double> sup_l4_statistics(const NoisePath& noise, std::span<const double> alphas,
                                      double gamma, double kappa, const BasisD& basis,
                                      double horizon);

/// Geometric grid {1, 2, 4, ..., 64}.
std::vector<double> default_alpha_grid();

/// Realized constant K-hat: max over the alpha grid of
/// alpha^{1/4 - eps1 - gamma} sup_t ||z_alpha(t)||_{L^4} / (1 + sqrt(T)).
double estimate_k_hat(const NoisePath& noise, double gamma, double eps1, const BasisD& basis,
                      double horizon, std::span<const double> alphas);

struct AlphaSelection {
  double eps1 = 0;
  double eps_prime = 0;
  double k_hat = 0;
  double alpha = 1;
};

/// alpha = (k_hat^{1/(1/4 - eps1 - gamma)} + 1) / eps'.
AlphaSelection select_alpha(double k_hat, double gamma, double eps1, double eps_prime);

}  // namespace sburgers
