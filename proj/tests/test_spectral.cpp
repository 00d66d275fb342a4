#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "sburgers/random.hpp"
#include "sburgers/spectral.hpp"

using namespace sburgers;
using std::numbers::pi;

namespace {

SpectralField random_field(int n, std::uint64_t index) {
  NormalStream normal(seed_stream(7, index), StreamTag::auxiliary);
  SpectralField x(n);
  for (int i = 0; i < n; ++i) x[i] = normal();
  return x;
}

}  // namespace

TEST_CASE("eigenvalues") {
  CHECK(eigenvalue(1) == doctest::Approx(9.8696044011));
  CHECK(eigenvalue(2) == doctest::Approx(39.4784176044));
  CHECK(eigenvalue(10) == doctest::Approx(100 * pi * pi));
  const auto all = eigenvalues(5);
  for (int k = 1; k <= 5; ++k) CHECK(all[k - 1] == eigenvalue(k));
  CHECK_THROWS(eigenvalue(0));
}

TEST_CASE("basis evaluation") {
  CHECK(eval_basis(1, 0.5) == doctest::Approx(std::sqrt(2.0)));
  CHECK(std::abs(eval_basis(2, 0.5)) < 1e-15);
  CHECK(eval_basis(3, 1.0 / 6) == doctest::Approx(std::sqrt(2.0)));
  CHECK(eval_basis(4, 0.0) == 0.0);
  CHECK_THROWS(eval_basis(1, 1.5));
  CHECK_THROWS(eval_basis(1, -0.1));
}

TEST_CASE("quadrature sizing") {
  CHECK(min_quadrature_points(8) == 13);
  CHECK(min_quadrature_points(1) == 3);
  for (int n : {1, 2, 3, 7, 8, 16, 33, 64}) {
    const int m = min_quadrature_points(n);
    CHECK(3 * n < 2 * (m + 1));
    CHECK(m >= (3 * n + 1) / 2 + 1);
  }
  CHECK_THROWS((BasisSpec{16, 10}.validate()));
  CHECK_NOTHROW((BasisSpec{8, 16}.validate()));
}

TEST_CASE("transform round trip") {
  const BasisD basis(BasisSpec{8, 16});
  const SpectralField e1 = unit_mode(8, 1);
  const GridField g = basis.to_grid(e1);
  for (int j = 0; j < basis.points(); ++j)
    CHECK(g[j] == doctest::Approx(std::sqrt(2.0) * std::sin(pi * basis.nodes()[j])));
  CHECK((basis.to_spectral(g) - e1).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(basis.to_grid(SpectralField::Zero(8)).isZero());
  for (std::uint64_t t = 0; t < 20; ++t) {
    const SpectralField x = random_field(8, t);
    CHECK((basis.to_spectral(basis.to_grid(x)) - x).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("shifted heat semigroup") {
  const SpectralField e1 = unit_mode(4, 1);
  CHECK(apply_shifted_heat(e1, 0.1, 0.0)[0] == doctest::Approx(0.372708).epsilon(1e-6));
  CHECK(apply_shifted_heat(e1, 0.1, 10.0)[0] == doctest::Approx(0.1371116).epsilon(1e-6));
  const SpectralField x = random_field(16, 3);
  CHECK(apply_shifted_heat(x, 0.0, 5.0) == x);
  CHECK_THROWS(apply_shifted_heat(x, -1.0, 0.0));
  for (double alpha : {0.0, 3.0}) {
    const SpectralField a = apply_shifted_heat(apply_shifted_heat(x, 0.02, alpha), 0.05, alpha);
    const SpectralField b = apply_shifted_heat(x, 0.07, alpha);
    CHECK((a - b).norm() <= 1e-14 * b.norm());
  }
}

TEST_CASE("fractional Laplacian") {
  CHECK(apply_frac_laplacian(unit_mode(3, 1), 0.5)[0] == doctest::Approx(pi));
  CHECK(apply_frac_laplacian(unit_mode(3, 2), 0.2)[1] == doctest::Approx(2.0858).epsilon(1e-4));
  const SpectralField x = random_field(32, 4);
  CHECK(apply_frac_laplacian(x, 0.0) == x);
  for (auto [s, t] : {std::pair{0.3, -0.1}, {-0.25, 0.75}, {0.5, 0.5}}) {
    const SpectralField a = apply_frac_laplacian(apply_frac_laplacian(x, s), t);
    const SpectralField b = apply_frac_laplacian(x, s + t);
    CHECK((a - b).norm() <= 1e-12 * b.norm());
  }
}

TEST_CASE("Burgers nonlinearity") {
  const BasisD basis(BasisSpec::dealiased(8));
  const SpectralField b = basis.burgers_nonlinearity(unit_mode(8, 1));
  SpectralField expected = SpectralField::Zero(8);
  expected[1] = pi / std::sqrt(2.0);
  CHECK((b - expected).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(expected[1] == doctest::Approx(2.221441));
  CHECK(basis.burgers_nonlinearity(SpectralField::Zero(8)).isZero());

  // e_2^2 = 1 - cos(4 pi xi), so 1/2 d/dxi e_2^2 = 2 pi sin(4 pi xi) = sqrt(2) pi e_4
  const SpectralField b2 = basis.burgers_nonlinearity(unit_mode(8, 2));
  CHECK(b2[3] == doctest::Approx(std::sqrt(2.0) * pi));
  CHECK(b2.norm() == doctest::Approx(std::sqrt(2.0) * pi));
}

TEST_CASE("skew identity") {
  for (int n : {8, 16, 32, 64}) {
    const BasisD basis(BasisSpec::dealiased(n));
    for (std::uint64_t t = 0; t < 100; ++t) {
      const SpectralField x = random_field(n, 100 + t);
      CHECK(std::abs(basis.burgers_nonlinearity(x).dot(x)) <= 1e-10 * std::pow(x.norm(), 3));
    }
  }
}

TEST_CASE("linearized nonlinearity is the derivative of B") {
  const BasisD basis(BasisSpec::dealiased(16));
  const SpectralField x = random_field(16, 8);
  const SpectralField h = random_field(16, 9);
  const double eps = 1e-6;
  const SpectralField fd =
      (basis.burgers_nonlinearity(x + eps * h) - basis.burgers_nonlinearity(x - eps * h)) / (2 * eps);
  const SpectralField exact = basis.linearized_nonlinearity(x, h);
  CHECK((fd - exact).norm() <= 1e-7 * exact.norm());
  // symmetric bilinear form: B(x) = 1/2 L(x, x)
  CHECK((basis.linearized_nonlinearity(x, x) - 2 * basis.burgers_nonlinearity(x)).norm() <=
        1e-12 * x.squaredNorm() * 100);
}

TEST_CASE("norms") {
  const BasisD basis(BasisSpec::dealiased(8));
  const SpectralField e1 = unit_mode(8, 1);
  CHECK(norm_l2(e1) == doctest::Approx(1.0));
  CHECK(norm_sobolev(e1, 1.0) == doctest::Approx(pi));
  CHECK(basis.lebesgue_norm(e1, 4.0) == doctest::Approx(std::pow(1.5, 0.25)));
  CHECK(basis.lebesgue_norm(e1, 4.0) == doctest::Approx(1.10668).epsilon(1e-5));
  CHECK(basis.norm(e1, NormKind::sobolev(1.0)) == doctest::Approx(pi));
  CHECK(basis.norm(e1, NormKind::l2()) == doctest::Approx(1.0));
  CHECK_THROWS(basis.lebesgue_norm(e1, 0.5));
  for (std::uint64_t t = 0; t < 20; ++t) {
    const SpectralField x = random_field(8, 200 + t);
    CHECK(basis.lebesgue_norm(x, 2.0) == doctest::Approx(x.norm()).epsilon(1e-12));
    CHECK(norm_sobolev(x, 1.0) >= pi * x.norm());
    CHECK(basis.lebesgue_norm(x, 4.0) >= basis.lebesgue_norm(x, 2.0) * (1 - 1e-12));
  }
}

TEST_CASE("projection") {
  SpectralField x = unit_mode(8, 1) + unit_mode(8, 5);
  const SpectralField p = project(x, 3);
  CHECK(p.size() == 8);
  CHECK(p == unit_mode(8, 1));
  CHECK(project(p, 3) == p);
  CHECK(project(x, 8) == x);
  CHECK_THROWS(project(x, 9));
  const SpectralField y = random_field(16, 11);
  CHECK(norm_l2(SpectralField(project(y, 8))) <= norm_l2(y));
  const SpectralField r = resize_modes(y, 20);
  CHECK(r.size() == 20);
  CHECK(r.head(16) == y);
  CHECK(r.tail(4).isZero());
  CHECK(resize_modes(y, 4) == y.head(4));
}
