#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "sburgers/estimators.hpp"

using namespace sburgers;
using std::numbers::pi;

namespace {

GalerkinSystem make(int n, double dt, double horizon, bool nonlinear) {
  SimConfig cfg;
  cfg.n = n;
  cfg.dt = dt;
  cfg.horizon = horizon;
  cfg.nonlinear = nonlinear;
  cfg.seed = 99;
  return GalerkinSystem(cfg);
}

PathFunctional terminal(double lambda) {
  PathFunctional f;
  f.kind = PathFunctional::Kind::terminal_l2_sq;
  f.lambda = lambda;
  return f;
}

std::vector<double> normals(std::size_t n, std::uint64_t index, double scale) {
  NormalStream normal(seed_stream(1, index), StreamTag::auxiliary);
  std::vector<double> out(n);
  for (auto& v : out) v = scale * normal();
  return out;
}

}  // namespace

TEST_CASE("log-mean-exp aggregate") {
  const auto g = normals(3000, 0, 3.0);
  LogMeanExpAggregate all;
  for (double v : g) all.add(v);
  double direct = 0;
  for (double v : g) direct += std::exp(v);
  CHECK(all.log_mean_exp() == doctest::Approx(std::log(direct / g.size())));
  CHECK(all.log_mean_exp() >= all.mean());

  // merge is associative and matches sequential accumulation
  LogMeanExpAggregate a, b, c;
  for (std::size_t i = 0; i < g.size(); ++i) (i < 1000 ? a : i < 2000 ? b : c).add(g[i]);
  LogMeanExpAggregate left = a, right = b;
  left.merge(b);
  left.merge(c);
  right.merge(c);
  LogMeanExpAggregate other = a;
  other.merge(right);
  CHECK(left.log_mean_exp() == doctest::Approx(other.log_mean_exp()).epsilon(1e-14));
  CHECK(left.log_mean_exp() == doctest::Approx(all.log_mean_exp()).epsilon(1e-14));
  CHECK(left.count() == 3000);

  // no overflow far beyond exp's range
  LogMeanExpAggregate big;
  big.add(1000.0);
  big.add(1000.0);
  CHECK(big.log_mean_exp() == doctest::Approx(1000.0));
  LogMeanExpAggregate empty;
  big.merge(empty);
  CHECK(big.count() == 2);

  // Jensen holds on every sub-aggregate
  for (std::uint64_t s = 1; s < 30; ++s) {
    LogMeanExpAggregate x;
    for (double v : normals(5, s, 1e-9)) x.add(v + 7.0);
    CHECK(x.log_mean_exp() >= x.mean());
  }
}

TEST_CASE("test functionals") {
  const SpectralField e1 = unit_mode(4, 1);
  CHECK(TestFunctional::constant(2.5)(e1) == 2.5);
  CHECK(TestFunctional::gaussian_energy()(e1) == doctest::Approx(std::exp(-1.0)));
  CHECK(TestFunctional::mode_sine(1, 4.0)(0.5 * e1) == doctest::Approx(std::sin(2.0)));
  CHECK(TestFunctional::halfspace(1)(e1) == 1.0);
  CHECK(TestFunctional::halfspace(1)(-e1) == 0.0);
  CHECK(TestFunctional::parse("mode_sine:1:4") == TestFunctional::mode_sine(1, 4.0));
  CHECK(TestFunctional::parse("gaussian_energy") == TestFunctional::gaussian_energy());
  CHECK(TestFunctional::parse("constant:3") == TestFunctional::constant(3.0));
  CHECK(TestFunctional::parse(TestFunctional::halfspace(2).name()) == TestFunctional::halfspace(2));
  CHECK_THROWS(TestFunctional::parse("nope"));
  PathFunctional f;
  f.kind = PathFunctional::Kind::y_dissipation;
  f.alpha = 0.5;
  CHECK_THROWS(f.validate());
  CHECK(PathFunctional::parse_kind("sup_l2_sq") == PathFunctional::Kind::sup_l2_sq);
  CHECK_THROWS(PathFunctional::parse_kind("x"));
}

TEST_CASE("path functionals on a quiet path") {
  const auto system = make(4, 0.01, 0.5, false);
  const NoisePath quiet = NoisePath::silent(0.01, 50, 4);
  const SpectralField x0 = unit_mode(4, 1);
  PathFunctional sup;
  sup.kind = PathFunctional::Kind::sup_l2_sq;
  CHECK(evaluate_functional(system, x0, sup, quiet) == doctest::Approx(1.0));
  CHECK(evaluate_functional(system, x0, terminal(1.0), quiet) == doctest::Approx(std::exp(-pi * pi)));
  PathFunctional dis;
  dis.kind = PathFunctional::Kind::y_dissipation;
  dis.alpha = 2.0;
  // sum_m pi^2 e^{-2 pi^2 t_m} dt, m = 0..49
  double expected = 0;
  for (int m = 0; m < 50; ++m) expected += pi * pi * std::exp(-2 * pi * pi * 0.01 * m) * 0.01;
  CHECK(evaluate_functional(system, x0, dis, quiet) == doctest::Approx(expected));
}

TEST_CASE("linear oracle") {
  CHECK(linear_oracle_moment(0.0, 0.0, 4, 1.0, 0.0) == 0.0);
  CHECK(linear_oracle_moment(0.0, 0.0, 2, 1.0, 0.5) == doctest::Approx(0.0323675).epsilon(1e-6));
  CHECK(linear_oracle_moment(0.0, 0.0, 1, 1.0, 2.0, unit_mode(1, 1)) == doctest::Approx(0.113226).epsilon(1e-5));
  CHECK(linear_oracle_moment(0.0, 0.0, 1, 50.0, 3.0) == doctest::Approx(-0.5 * std::log(1 - 3.0 / (pi * pi))));
  const double crit = critical_lambda(0.0, 0.0, 3, 1.0);
  CHECK(crit == doctest::Approx(1.0 / (2 * linear_terminal_variance(1, 0.0, 0.0, 1.0))));
  CHECK(linear_oracle_moment(0.0, 0.0, 3, 1.0, crit * (1 - 1e-9)) > 5.0);
  CHECK_THROWS_AS(linear_oracle_moment(0.0, 0.0, 3, 1.0, crit), std::domain_error);
}

TEST_CASE("exponential moments") {
  const auto system = make(2, 0.01, 1.0, false);
  const SpectralField x0 = SpectralField::Zero(2);
  const auto zero = exp_moment(system, x0, terminal(0.0), 200, 1);
  CHECK(zero.estimate == 0.0);
  const auto m = exp_moment(system, x0, terminal(0.5), 20000, 2);
  CHECK(std::abs(m.estimate - 0.0323675) <= 3 * m.se);
  CHECK(m.excluded == 0);
  CHECK(!m.unstable);
  const auto doubled = exp_moment(system, x0, terminal(1.0), 20000, 2);
  CHECK(doubled.estimate > m.estimate);
  CHECK_THROWS(exp_moment(system, x0, terminal(0.5), 50, 1));
}

TEST_CASE("heavy samples are flagged") {
  std::vector<double> g(1000, 0.0);
  g[0] = 50.0;
  const auto m = summarize_log_moment(g);
  CHECK(m.unstable);
  CHECK(m.heaviness > 0.99);
  const auto calm = summarize_log_moment(normals(1000, 3, 0.1));
  CHECK(!calm.unstable);
}

TEST_CASE("lambda scan") {
  const auto system = make(2, 0.01, 1.0, false);
  const std::vector<double> lambdas = {0.0, 0.5, 1.0};
  const auto scan = lambda_scan(system, SpectralField::Zero(2), terminal(1.0), lambdas, 5000, 2);
  REQUIRE(scan.rows.size() == 3);
  CHECK(scan.rows[0].full.estimate == 0.0);
  CHECK(scan.rows[0].full.se == 0.0);
  CHECK(scan.rows[0].stable);
  for (const auto& row : scan.rows) {
    const double oracle = linear_oracle_moment(0.0, 0.0, 2, 1.0, row.lambda);
    CHECK(std::abs(row.full.estimate - oracle) <= 3 * row.full.se + 1e-15);
  }
  const std::vector<double> unsorted = {1.0, 0.5};
  CHECK_THROWS(lambda_scan(system, SpectralField::Zero(2), terminal(1.0), unsorted, 200, 1));
}

TEST_CASE("variational inequality") {
  const auto system = make(4, 0.01, 0.5, false);
  const SpectralField x0 = unit_mode(4, 1);
  PathFunctional constant;
  constant.kind = PathFunctional::Kind::custom_bounded;
  constant.custom = TestFunctional::constant(0.7);
  constant.lambda = 1.0;
  ControlFunction push = ControlFunction::zero(4, system.steps(), system.dt());
  push.values.row(0).setConstant(1.0);
  const std::vector<LabeledControl> controls = {
      {"zero", ControlFunction::zero(4, system.steps(), system.dt())}, {"push", push}};
  const auto report = variational_check(system, x0, constant, controls, 200, 1);
  CHECK(report.uncontrolled.estimate == doctest::Approx(0.7));
  CHECK(report.scores[0].mean == doctest::Approx(0.7));
  CHECK(report.scores[1].mean == doctest::Approx(0.7 - 0.5 * push.squared_norm()));
  CHECK(report.scores[1].mean < 0.7);
  CHECK(!report.violation);

  const auto lq = lq_oracle_control(system, x0, 0.5);
  const std::vector<LabeledControl> with_lq = {{"zero", controls[0].control}, {"lq", lq}};
  const auto r = variational_check(system, x0, terminal(0.5), with_lq, 4000, 2);
  CHECK(!r.violation);
  CHECK(r.uncontrolled.estimate >= r.scores[0].mean);
  CHECK(std::abs(r.uncontrolled.estimate - r.scores[1].mean) <= 3 * r.scores[1].combined_se);
  CHECK(r.scores[1].mean > r.scores[0].mean);
}

TEST_CASE("LQ control maximizes the deterministic objective") {
  const auto system = make(3, 0.01, 0.3, false);
  const SpectralField x0 = unit_mode(3, 1);
  const double lambda = 0.8;
  auto objective = [&](const ControlFunction& u) {
    // E[lambda ||X_T||^2] - 1/2 ||u||^2 = lambda (||mean||^2 + trace) - 1/2 ||u||^2; the
    // trace does not depend on u, so compare the mean part only.
    const NoisePath quiet = NoisePath::silent(system.dt(), system.steps(), 3);
    const SpectralField mean = simulate_path(system, x0, quiet, &u).terminal();
    return lambda * mean.squaredNorm() - 0.5 * u.squared_norm();
  };
  const auto lq = lq_oracle_control(system, x0, lambda);
  const double best = objective(lq);
  NormalStream normal(seed_stream(2, 2), StreamTag::auxiliary);
  for (int trial = 0; trial < 10; ++trial) {
    ControlFunction u = lq;
    for (Eigen::Index i = 0; i < u.values.size(); ++i) u.values.data()[i] += 0.05 * normal();
    CHECK(objective(u) < best);
  }
  CHECK_THROWS(lq_oracle_control(make(3, 0.01, 0.3, true), x0, lambda));
}

TEST_CASE("Bismut-Elworthy-Li estimator") {
  const auto system = make(8, 0.01, 0.5, true);
  GradientQuery q;
  q.x = unit_mode(8, 1);
  q.h = unit_mode(8, 2);
  q.t = 0.3;
  q.phi = TestFunctional::constant(1.0);
  const auto flat = bel_gradient(q, system, 2000, 2);
  CHECK(std::abs(flat.estimate) <= 3 * flat.se);

  q.phi = TestFunctional::mode_sine(1, 3.0);
  const NoisePath noise = system.noise_for(7);
  const double up = bel_path_value(q, system, noise);
  GradientQuery flipped = q;
  flipped.h = -q.h;
  CHECK(bel_path_value(flipped, system, noise) == doctest::Approx(-up).epsilon(1e-12));
  q.t = 0.0;
  CHECK_THROWS(bel_gradient(q, system, 100, 1));
}

TEST_CASE("BEL matches finite differences on a linear system") {
  // linear dynamics: D_h P_t phi(x) for phi = sin(3 x_1) is available in closed form
  const auto system = make(4, 0.01, 0.2, false);
  GradientQuery q;
  q.x = 0.3 * unit_mode(4, 1);
  q.h = unit_mode(4, 1);
  q.t = 0.2;
  q.phi = TestFunctional::mode_sine(1, 3.0);
  const double decay = std::exp(-pi * pi * 0.2);
  const double var = linear_terminal_variance(1, 0.0, 0.0, 0.2);
  const double exact = 3 * decay * std::cos(3 * 0.3 * decay) * std::exp(-4.5 * var);
  const auto bel = bel_gradient(q, system, 20000, 2);
  const auto fd = fd_gradient(q, system, 1e-3, 2000, 2);
  CHECK(std::abs(bel.estimate - exact) <= 4 * bel.se);
  CHECK(std::abs(fd.estimate - exact) <= 4 * fd.se + 1e-6);
}

TEST_CASE("Lipschitz probe") {
  const auto system = make(8, 0.01, 0.5, true);
  const std::vector<double> times = {0.1, 0.5};
  const SpectralField x = SpectralField::Zero(8), xp = 0.1 * unit_mode(8, 1);
  CHECK_THROWS(lipschitz_probe(system, x, x, TestFunctional::gaussian_energy(), times, 100, 1));
  const auto flat = lipschitz_probe(system, x, xp, TestFunctional::constant(1.0), times, 100, 1);
  for (const auto& row : flat.rows) CHECK(row.ratio == 0.0);
  CHECK(!flat.fit_valid);
  const auto r = lipschitz_probe(system, x, xp, TestFunctional::mode_sine(1, 4.0), times, 500, 2);
  CHECK(r.rows[0].ratio > r.rows[1].ratio);
  CHECK(r.constant > 0);
}

TEST_CASE("tail fit") {
  // exponential(rate 2) samples: log survival = -2 r
  NormalStream normal(seed_stream(4, 0), StreamTag::auxiliary);
  std::vector<double> s(20000);
  for (auto& v : s) {
    const double a = normal(), b = normal();
    v = 0.25 * (a * a + b * b);  // chi-square(2)/4 is exponential with rate 2
  }
  const auto fit = fit_tail(s);
  CHECK(fit.slope == doctest::Approx(-2.0).epsilon(0.1));
  CHECK(fit.exponential);
  CHECK(fit.thresholds.size() == kTailThresholds);
  CHECK_THROWS(fit_tail(std::vector<double>(100, 1.0)));

  const auto system = make(2, 0.01, 30.0, false);
  CHECK_THROWS(invariant_samples(system, 30.0, 1.0, 0.1));
  CHECK_THROWS(invariant_samples(system, 5.0, 25.0, 0.1));
  CHECK(invariant_samples(system, 10.0, 20.0, 0.1).size() == 200);
}
