#pragma once

// Galerkin approximation of the stochastic Burgers equation
//   dX = (A X + 1/2 d/dxi X^2 + (-A)^gamma u) dt + (-A)^gamma dW,   X_0 = x,
// integrated with exponential Euler: exact linear flow per mode, phi_1-weighted
// drift, and the shared-noise increment of OuStepper.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sburgers/noise.hpp"
#include "sburgers/spectral.hpp"

namespace sburgers {

struct SimConfig {
  double gamma = 0.0;
  int n = 32;
  double dt = 1e-3;
  double horizon = 1.0;
  int m_quad = 0;  // 0 selects the dealiasing minimum
  bool nonlinear = true;
  std::uint64_t seed = 0;

  BasisSpec basis() const { return {n, m_quad > 0 ? m_quad : min_quadrature_points(n)}; }
  std::int64_t steps() const;
  void validate() const;

  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

/// Thrown when a trajectory leaves the finite range.
class BlowUpError : public std::runtime_error {
 public:
  explicit BlowUpError(std::int64_t step)
      : std::runtime_error("non-finite state at step " + std::to_string(step)), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

/// Deterministic control u(t_m), held constant on [t_m, t_{m+1}).
struct ControlFunction {
  double dt = 0;
  Matrix<double> values;  // n x steps

  static ControlFunction zero(int n, std::int64_t steps, double dt);
  int modes() const { return static_cast<int>(values.rows()); }
  std::int64_t steps() const { return values.cols(); }
  /// sum_m ||u(t_m)||^2 dt
  double squared_norm() const { return values.squaredNorm() * dt; }
};

struct StatePath {
  std::vector<double> times;
  Matrix<double> states;  // n x (steps + 1); column m is X(t_m)

  int steps() const { return static_cast<int>(times.size()) - 1; }
  int modes() const { return static_cast<int>(states.rows()); }
  SpectralField at(int m) const { return states.col(m); }
  SpectralField terminal() const { return states.col(states.cols() - 1); }
};

struct NormRow {
  double t, l2, h1, l4;
};
std::vector<NormRow> norm_table(const StatePath& path, const BasisD& basis);

/// Initial conditions: explicit coefficients, or a named preset expanded
/// analytically ("zero", "e_<k>", "sawtooth" = xi on (0,1)).
struct InitialCondition {
  std::string preset = "zero";
  double scale = 1.0;
  std::vector<double> coeffs;

  SpectralField expand(int n) const;
  friend bool operator==(const InitialCondition&, const InitialCondition&) = default;
};

/// Immutable integrator state for one SimConfig; shared by all worker threads.
class GalerkinSystem {
 public:
  explicit GalerkinSystem(SimConfig cfg);

  const SimConfig& config() const { return cfg_; }
  const BasisD& basis() const { return basis_; }
  const OuStepper& linear() const { return linear_; }
  int modes() const { return cfg_.n; }
  double dt() const { return cfg_.dt; }
  std::int64_t steps() const { return steps_; }

  /// B_n(x), or zero when the nonlinearity is disabled.
  SpectralField drift(const SpectralField& x) const;
  /// pi_n d/dxi(x h), or zero when the nonlinearity is disabled.
  SpectralField linearized_drift(const SpectralField& x, const SpectralField& h) const;

  /// (1 - e^{-alpha_k dt}) / alpha_k, i.e. phi_1 times dt.
  const Vector<double>& drift_weight() const { return drift_weight_; }
  /// alpha_k^gamma
  const Vector<double>& noise_color() const { return color_; }

  /// One exponential Euler step. Throws BlowUpError if the result is not finite.
  SpectralField step(const SpectralField& x, const SpectralField& dbeta,
                     const SpectralField* control = nullptr, std::int64_t step_index = 0) const;

  /// Runs from pi_n x0 across the noise grid, calling visit(m, t_m, X_m) for
  /// m = 0..steps. Stops early if visit returns false.
  template <typename Visitor>
  void integrate(const SpectralField& x0, const NoisePath& noise, const ControlFunction* control,
                 Visitor&& visit) const;

  void check_noise(const NoisePath& noise) const;
  NoisePath noise_for(std::uint64_t path_index) const;

 private:
  SimConfig cfg_;
  BasisD basis_;
  OuStepper linear_;
  std::int64_t steps_;
  Vector<double> drift_weight_;
  Vector<double> color_;
};

SpectralField step_burgers(const SpectralField& x, const SpectralField& dbeta,
                           const SpectralField* control, const GalerkinSystem& system);

StatePath simulate_path(const GalerkinSystem& system, const SpectralField& x0,
                        const NoisePath& noise, const ControlFunction* control = nullptr);

struct YDecomposition {
  OuPath z;
  Matrix<double> y;  // n x (steps + 1)
  /// sum_m ||Y(t_m)||_{H^1}^2 dt over m = 0..steps-1
  double dissipation = 0;
};

/// Y = X - z_alpha on the same noise path.
YDecomposition decompose_y(const StatePath& path, double alpha, const NoisePath& noise,
                           const GalerkinSystem& system);

struct DerivativeState {
  SpectralField direction;
  Matrix<double> path;  // n x (steps + 1); column m is eta(t_m)
};

/// Tangent of the discrete flow: eta' = A eta + pi_n d/dxi(X eta), eta_0 = pi_n h.
DerivativeState derivative_flow(const StatePath& path, const SpectralField& h,
                                const GalerkinSystem& system);

/// Per-step terms of
///   1/2 d||Y||^2/dt = -||grad Y||^2 + alpha <Y, z> + <(-A)^gamma Y, u> - 1/2 int (Y+z)^2 dY,
/// with the forward difference on the left and the right side at t_m.
struct EnergyRow {
  double t;
  double rate;         // (||Y_{m+1}||^2 - ||Y_m||^2) / (2 dt)
  double dissipation;  // -||Y_m||_{H^1}^2
  double shift;        // alpha <Y_m, z_m>
  double control;      // <(-A)^gamma Y_m, u_m>
  double transport;    // <B_n(Y_m + z_m), Y_m>
  double residual;
};

struct EnergyReport {
  std::vector<EnergyRow> rows;
  double max_abs_residual = 0;
};

EnergyReport energy_diagnostic(const Matrix<double>& y, const OuPath& z,
                               const ControlFunction* control, const GalerkinSystem& system);

// ---------------------------------------------------------------------------

template <typename Visitor>
void GalerkinSystem::integrate(const SpectralField& x0, const NoisePath& noise,
                               const ControlFunction* control, Visitor&& visit) const {
  check_noise(noise);
  if (control != nullptr && (control->modes() != cfg_.n || control->steps() < noise.steps()))
    throw std::invalid_argument("integrate: control does not cover the time grid");
  SpectralField x = resize_modes(x0, cfg_.n);
  SpectralField db(cfg_.n);
  SpectralField u(cfg_.n);
  if (!visit(std::int64_t{0}, 0.0, static_cast<const SpectralField&>(x))) return;
  for (std::int64_t s = 0; s < noise.steps(); ++s) {
    noise.increment(s, std::span<double>(db.data(), db.size()));
    if (control != nullptr) {
      u = control->values.col(s);
      x = step(x, db, &u, s);
    } else {
      x = step(x, db, nullptr, s);
    }
    if (!visit(s + 1, static_cast<double>(s + 1) * noise.dt(), static_cast<const SpectralField&>(x)))
      return;
  }
}

}  // namespace sburgers
