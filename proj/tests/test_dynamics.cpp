#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "sburgers/dynamics.hpp"
#include "sburgers/statistics.hpp"

using namespace sburgers;
using std::numbers::pi;

namespace {

SimConfig config(int n, double dt, double horizon, bool nonlinear = true, double gamma = 0.0) {
  SimConfig cfg;
  cfg.n = n;
  cfg.dt = dt;
  cfg.horizon = horizon;
  cfg.nonlinear = nonlinear;
  cfg.gamma = gamma;
  cfg.seed = 17;
  return cfg;
}

}  // namespace

TEST_CASE("configuration") {
  CHECK(config(8, 0.01, 1.0).steps() == 100);
  CHECK_THROWS(config(8, 0.03, 1.0).validate());
  CHECK_THROWS(config(0, 0.01, 1.0).validate());
  CHECK_THROWS(config(8, 0.01, 1.0, true, 0.3).validate());
  SimConfig cfg = config(8, 0.01, 1.0);
  cfg.m_quad = 5;
  CHECK_THROWS(cfg.validate());
  CHECK(config(8, 0.01, 1.0).basis().m_quad == min_quadrature_points(8));
}

TEST_CASE("initial conditions") {
  CHECK(InitialCondition{}.expand(4).isZero());
  CHECK(InitialCondition{"e_3", 2.0, {}}.expand(4) == 2.0 * unit_mode(4, 3));
  CHECK(InitialCondition{"custom", 1.0, {1, 2}}.expand(3) == SpectralField((SpectralField(3) << 1, 2, 0).finished()));
  const SpectralField saw = InitialCondition{"sawtooth", 1.0, {}}.expand(200);
  CHECK(saw[0] == doctest::Approx(std::sqrt(2.0) / pi));
  CHECK(saw[1] == doctest::Approx(-std::sqrt(2.0) / (2 * pi)));
  // ||xi||^2 on (0,1) is 1/3
  CHECK(saw.squaredNorm() == doctest::Approx(1.0 / 3).epsilon(2e-3));
  CHECK(InitialCondition{"e_9", 1.0, {}}.expand(4).isZero());
  CHECK_THROWS(InitialCondition{"bogus", 1.0, {}}.expand(4));
}

TEST_CASE("single step examples") {
  const GalerkinSystem system(config(8, 0.01, 1.0));
  const SpectralField zero = SpectralField::Zero(8);
  CHECK(step_burgers(zero, zero, nullptr, system).isZero());

  for (double gamma : {0.0, 0.2}) {
    const GalerkinSystem sys(config(8, 0.01, 1.0, true, gamma));
    const SpectralField x = step_burgers(unit_mode(8, 1), zero, nullptr, sys);
    CHECK(x[0] == doctest::Approx(std::exp(-0.01 * pi * pi)));
    CHECK(x[0] == doctest::Approx(0.906018).epsilon(1e-6));
    const double phi2 = (1 - std::exp(-0.04 * pi * pi)) / (0.04 * pi * pi);
    CHECK(x[1] == doctest::Approx(phi2 * pi / std::sqrt(2.0) * 0.01));
    CHECK(x.tail(6).cwiseAbs().maxCoeff() < 1e-14);
  }

  const SpectralField db = NoisePath({1, 2}, 0.01, 1, 8).increment(0);
  const SpectralField u = SpectralField::Zero(8);
  const SpectralField x0 = unit_mode(8, 2);
  CHECK(step_burgers(x0, db, &u, system) == step_burgers(x0, db, nullptr, system));
}

TEST_CASE("paths are deterministic") {
  const GalerkinSystem system(config(16, 1e-3, 0.2));
  const SpectralField x0 = InitialCondition{"sawtooth", 1.0, {}}.expand(16);
  const StatePath a = simulate_path(system, x0, system.noise_for(3));
  const StatePath b = simulate_path(system, x0, system.noise_for(3));
  CHECK(a.states == b.states);
  CHECK(a.steps() == 200);
  CHECK(!(simulate_path(system, x0, system.noise_for(4)).states == a.states));
  const NoisePath quiet = NoisePath::silent(1e-3, 200, 16);
  CHECK(simulate_path(system, SpectralField::Zero(16), quiet).states.isZero());
  CHECK_THROWS(simulate_path(system, x0, NoisePath({1, 1}, 2e-3, 100, 16)));
}

TEST_CASE("deterministic contraction") {
  const GalerkinSystem system(config(32, 1e-3, 1.0));
  const NoisePath quiet = NoisePath::silent(1e-3, 1000, 32);
  NormalStream normal(seed_stream(3, 0), StreamTag::initial_condition);
  for (int trial = 0; trial < 20; ++trial) {
    SpectralField x0(32);
    for (int k = 1; k <= 32; ++k) x0[k - 1] = normal() / k;
    const StatePath path = simulate_path(system, x0, quiet);
    for (int m = 0; m <= path.steps(); ++m)
      CHECK(path.at(m).norm() <= std::exp(-pi * pi * path.times[m]) * x0.norm() * (1 + 1e-6));
  }
}

TEST_CASE("linear dynamics: mean follows the heat semigroup") {
  const GalerkinSystem system(config(4, 0.01, 0.5, false));
  const SpectralField x0 = InitialCondition{"e_1", 1.0, {}}.expand(4);
  const StatePath path = simulate_path(system, x0, NoisePath::silent(0.01, 50, 4));
  CHECK((path.terminal() - apply_shifted_heat(x0, 0.5, 0.0)).norm() < 1e-13);
}

TEST_CASE("Galerkin refinement on shared noise") {
  SimConfig lo_cfg = config(8, 1e-3, 0.1), hi_cfg = config(16, 1e-3, 0.1);
  const GalerkinSystem lo(lo_cfg), hi(hi_cfg);
  const SpectralField x0 = InitialCondition{"sawtooth", 1.0, {}}.expand(16);
  const NoisePath noise = hi.noise_for(0);
  const StatePath a = simulate_path(hi, x0, noise);
  const StatePath b = simulate_path(lo, resize_modes(x0, 8), noise.with_modes(8));
  // low modes agree to leading order; differences stay bounded by the tail energy
  CHECK((a.terminal().head(8) - b.terminal()).norm() < 0.1);
}

TEST_CASE("Y decomposition") {
  const GalerkinSystem system(config(8, 1e-3, 0.2));
  const SpectralField x0 = InitialCondition{"e_1", 1.0, {}}.expand(8);
  const NoisePath noise = system.noise_for(2);
  const StatePath path = simulate_path(system, x0, noise);
  const YDecomposition d = decompose_y(path, 3.0, noise, system);
  CHECK(((d.y + d.z.coeffs) - path.states).cwiseAbs().maxCoeff() < 1e-14);
  double dissipation = 0;
  for (int m = 0; m < path.steps(); ++m) dissipation += std::pow(norm_sobolev(SpectralField(d.y.col(m)), 1.0), 2) * 1e-3;
  CHECK(d.dissipation == doctest::Approx(dissipation));

  const NoisePath quiet = NoisePath::silent(1e-3, 200, 8);
  const StatePath calm = simulate_path(system, x0, quiet);
  CHECK(decompose_y(calm, 3.0, quiet, system).y == calm.states);

  // alpha = 0 with the nonlinearity off: Y is the deterministic heat flow
  const GalerkinSystem linear(config(8, 1e-3, 0.2, false));
  const StatePath lp = simulate_path(linear, x0, noise);
  const YDecomposition ld = decompose_y(lp, 0.0, noise, linear);
  CHECK((SpectralField(ld.y.col(200)) - apply_shifted_heat(x0, 0.2, 0.0)).norm() < 1e-12);

  // continuity in alpha
  const double d1 = (decompose_y(path, 3.1, noise, system).y - d.y).cwiseAbs().maxCoeff();
  const double d2 = (decompose_y(path, 3.01, noise, system).y - d.y).cwiseAbs().maxCoeff();
  CHECK(d2 < d1);
  CHECK(d2 / 0.01 < 2 * d1 / 0.1);
}

TEST_CASE("derivative flow") {
  const GalerkinSystem system(config(32, 1e-3, 0.5));
  const SpectralField x0 = InitialCondition{"sawtooth", 1.0, {}}.expand(32);
  const NoisePath noise = system.noise_for(5);
  const StatePath path = simulate_path(system, x0, noise);
  const SpectralField h = unit_mode(32, 1), g = unit_mode(32, 3);

  CHECK(derivative_flow(path, SpectralField::Zero(32), system).path.isZero());

  const auto eh = derivative_flow(path, h, system).path;
  const auto eg = derivative_flow(path, g, system).path;
  const auto combo = derivative_flow(path, 2.0 * h - 0.5 * g, system).path;
  CHECK((combo - (2.0 * eh - 0.5 * eg)).norm() <= 1e-10 * combo.norm());

  const double eps = 1e-4;
  const SpectralField fd = (simulate_path(system, x0 + eps * h, noise).terminal() - path.terminal()) / eps;
  const SpectralField eta = eh.rightCols(1);
  CHECK((eta - fd).norm() / eta.norm() <= 0.02);

  // along the zero path the tangent is the heat flow
  const NoisePath quiet = NoisePath::silent(1e-3, 500, 32);
  const StatePath rest = simulate_path(system, SpectralField::Zero(32), quiet);
  const SpectralField heat = derivative_flow(rest, g, system).path.rightCols(1);
  CHECK((heat - apply_shifted_heat(g, 0.5, 0.0)).norm() < 1e-13);
}

TEST_CASE("energy diagnostic") {
  SimConfig cfg = config(16, 1e-3, 0.1);
  const SpectralField x0 = InitialCondition{"sawtooth", 1.0, {}}.expand(16);
  auto residual = [&](double dt) {
    cfg.dt = dt;
    const GalerkinSystem system(cfg);
    const NoisePath quiet = NoisePath::silent(dt, system.steps(), 16);
    const StatePath path = simulate_path(system, x0, quiet);
    const YDecomposition d = decompose_y(path, 0.0, quiet, system);
    return energy_diagnostic(d.y, d.z, nullptr, system).max_abs_residual;
  };
  // first order needs alpha_n dt << 1 (alpha_16 dt = 0.25 at the coarsest level)
  const double r1 = residual(1e-4), r2 = residual(5e-5), r3 = residual(2.5e-5);
  const std::vector<double> lx = {std::log(1e-4), std::log(5e-5), std::log(2.5e-5)};
  const std::vector<double> ly = {std::log(r1), std::log(r2), std::log(r3)};
  CHECK(fit_line(lx, ly).slope >= 0.8);

  const GalerkinSystem system(config(8, 1e-2, 0.1));
  const OuPath z = ou_path(NoisePath::silent(1e-2, 10, 8), 0.0, 0.0, system.basis().spec());
  const auto report = energy_diagnostic(Matrix<double>::Zero(8, 11), z, nullptr, system);
  CHECK(report.max_abs_residual == 0.0);
  for (const auto& row : report.rows) CHECK(row.transport == 0.0);
}

TEST_CASE("blow-up is reported with the step index") {
  SimConfig cfg = config(8, 0.1, 1.0);
  const GalerkinSystem system(cfg);
  SpectralField x = SpectralField::Zero(8);
  x[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(step_burgers(x, SpectralField::Zero(8), nullptr, system), BlowUpError);
}
