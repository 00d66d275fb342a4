#pragma once

// Dirichlet sine-basis spectral representation on (0,1).
//
// A field is stored as its coefficient vector against the orthonormal basis
// e_k(xi) = sqrt(2) sin(k pi xi), k = 1..n, so index i of a vector holds mode
// k = i + 1. Physical-space work happens on the interior collocation points
// xi_j = j / (m + 1), j = 1..m, with equal weights 1 / (m + 1).

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace sburgers {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using SpectralField = Vector<double>;
using GridField = Vector<double>;

/// Smallest collocation count that integrates cubic products of n-mode
/// fields exactly.
constexpr int min_quadrature_points(int n) { return (3 * n + 1) / 2 + 1; }

struct BasisSpec {
  int n = 0;
  int m_quad = 0;

  static BasisSpec dealiased(int n) { return {n, min_quadrature_points(n)}; }

  void validate() const {
    if (n < 1) throw std::invalid_argument("basis: mode count must be >= 1");
    if (m_quad < min_quadrature_points(n))
      throw std::invalid_argument("basis: m_quad=" + std::to_string(m_quad) +
                                  " below dealiasing minimum " +
                                  std::to_string(min_quadrature_points(n)));
  }

  friend bool operator==(const BasisSpec&, const BasisSpec&) = default;
};

/// alpha_k = pi^2 k^2.
template <typename Scalar = double>
Scalar eigenvalue(int k) {
  if (k < 1) throw std::invalid_argument("eigenvalue: mode index must be >= 1");
  const Scalar pk = std::numbers::pi_v<Scalar> * Scalar(k);
  return pk * pk;
}

template <typename Scalar = double>
Scalar eval_basis(int k, Scalar xi) {
  if (k < 1) throw std::invalid_argument("eval_basis: mode index must be >= 1");
  if (!(xi >= Scalar(0) && xi <= Scalar(1)))
    throw std::invalid_argument("eval_basis: xi outside [0,1]");
  if (xi == Scalar(0) || xi == Scalar(1)) return Scalar(0);
  return std::numbers::sqrt2_v<Scalar> *
         std::sin(Scalar(k) * std::numbers::pi_v<Scalar> * xi);
}

/// (alpha_1, ..., alpha_n).
template <typename Scalar = double>
Vector<Scalar> eigenvalues(int n) {
  Vector<Scalar> out(n);
  for (int i = 0; i < n; ++i) out[i] = eigenvalue<Scalar>(i + 1);
  return out;
}

/// Coefficient k scaled by exp(-(alpha_k + shift) t). Exact semigroup.
template <typename Derived>
auto apply_shifted_heat(const Eigen::MatrixBase<Derived>& x,
                        typename Derived::Scalar t,
                        typename Derived::Scalar shift = 0) {
  using Scalar = typename Derived::Scalar;
  if (t < Scalar(0)) throw std::invalid_argument("apply_shifted_heat: negative time");
  if (shift < Scalar(0)) throw std::invalid_argument("apply_shifted_heat: negative shift");
  const Vector<Scalar> rates = eigenvalues<Scalar>(static_cast<int>(x.size())).array() + shift;
  return Vector<Scalar>((-rates.array() * t).exp() * x.array());
}

/// (-A)^power: coefficient k scaled by alpha_k^power.
template <typename Derived>
auto apply_frac_laplacian(const Eigen::MatrixBase<Derived>& x,
                          typename Derived::Scalar power) {
  using Scalar = typename Derived::Scalar;
  const Vector<Scalar> ak = eigenvalues<Scalar>(static_cast<int>(x.size()));
  return Vector<Scalar>(ak.array().pow(power) * x.array());
}

/// pi_m: zeroes every coefficient above mode m.
template <typename Derived>
auto project(const Eigen::MatrixBase<Derived>& x, int m) {
  using Scalar = typename Derived::Scalar;
  if (m < 0 || m > x.size())
    throw std::invalid_argument("project: target mode count exceeds field size");
  Vector<Scalar> out = x;
  out.tail(x.size() - m).setZero();
  return out;
}

/// Embeds an n-mode field into n_out modes (truncating or zero-padding).
template <typename Derived>
auto resize_modes(const Eigen::MatrixBase<Derived>& x, int n_out) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> out = Vector<Scalar>::Zero(n_out);
  const auto keep = std::min<Eigen::Index>(n_out, x.size());
  out.head(keep) = x.head(keep);
  return out;
}

template <typename Derived>
typename Derived::Scalar norm_l2(const Eigen::MatrixBase<Derived>& x) {
  return x.norm();
}

/// || (-A)^{s/2} x ||.
template <typename Derived>
typename Derived::Scalar norm_sobolev(const Eigen::MatrixBase<Derived>& x,
                                      typename Derived::Scalar s) {
  return apply_frac_laplacian(x, s / 2).norm();
}

struct NormKind {
  enum class Tag { l2, sobolev, lebesgue };
  Tag tag = Tag::l2;
  double order = 0;  // s for Sobolev, p for Lebesgue

  static NormKind l2() { return {Tag::l2, 0}; }
  static NormKind sobolev(double s) { return {Tag::sobolev, s}; }
  static NormKind lebesgue(double p) { return {Tag::lebesgue, p}; }
};

/// Precomputed transforms for a fixed (n, m_quad). Immutable once built, so
/// one instance is shared by every worker thread.
template <typename Scalar>
class Basis {
 public:
  explicit Basis(BasisSpec spec) : spec_(spec) {
    spec_.validate();
    const int n = spec_.n;
    const int m = spec_.m_quad;
    const Scalar pi = std::numbers::pi_v<Scalar>;
    const Scalar sqrt2 = std::numbers::sqrt2_v<Scalar>;
    weight_ = Scalar(1) / Scalar(m + 1);
    nodes_.resize(m);
    synthesis_.resize(m, n);
    analysis_.resize(n, m);
    derivative_.resize(n, m);
    for (int j = 0; j < m; ++j) nodes_[j] = Scalar(j + 1) * weight_;
    for (int k = 1; k <= n; ++k) {
      for (int j = 0; j < m; ++j) {
        const Scalar arg = Scalar(k) * pi * nodes_[j];
        synthesis_(j, k - 1) = sqrt2 * std::sin(arg);
        // <1/2 d/dxi g, e_k> = -1/2 <g, e_k'> for g vanishing at the ends.
        derivative_(k - 1, j) = -(Scalar(k) * pi / sqrt2) * weight_ * std::cos(arg);
      }
    }
    analysis_ = weight_ * synthesis_.transpose();
    eigenvalues_ = sburgers::eigenvalues<Scalar>(n);
  }

  const BasisSpec& spec() const { return spec_; }
  int modes() const { return spec_.n; }
  int points() const { return spec_.m_quad; }
  Scalar weight() const { return weight_; }
  const Vector<Scalar>& nodes() const { return nodes_; }
  const Vector<Scalar>& eigenvalues() const { return eigenvalues_; }

  Vector<Scalar> to_grid(const Vector<Scalar>& x) const {
    check_modes(x, "to_grid");
    return synthesis_ * x;
  }

  Vector<Scalar> to_spectral(const Vector<Scalar>& g) const {
    if (g.size() != spec_.m_quad)
      throw std::invalid_argument("to_spectral: grid length mismatch");
    return analysis_ * g;
  }

  /// pi_n (1/2 d/dxi (f g)) from grid values of f and g. The cosine moments
  /// of f g are integrated exactly, so no grid differencing is involved.
  Vector<Scalar> half_derivative_of_product(const Vector<Scalar>& f_grid,
                                            const Vector<Scalar>& g_grid) const {
    return derivative_ * (f_grid.array() * g_grid.array()).matrix();
  }

  /// B_n(x) = pi_n(1/2 d/dxi x^2). Satisfies <B_n(x), x> = 0 to round-off.
  Vector<Scalar> burgers_nonlinearity(const Vector<Scalar>& x) const {
    check_modes(x, "burgers_nonlinearity");
    const Vector<Scalar> g = synthesis_ * x;
    return derivative_ * g.array().square().matrix();
  }

  /// pi_n d/dxi (x y), the derivative of B_n at x in direction y.
  Vector<Scalar> linearized_nonlinearity(const Vector<Scalar>& x,
                                         const Vector<Scalar>& y) const {
    check_modes(x, "linearized_nonlinearity");
    check_modes(y, "linearized_nonlinearity");
    return Scalar(2) * half_derivative_of_product(synthesis_ * x, synthesis_ * y);
  }

  /// (sum_j w |g_j|^p)^{1/p}.
  Scalar lebesgue_norm(const Vector<Scalar>& x, Scalar p) const {
    if (!(p >= Scalar(1))) throw std::invalid_argument("norm: Lp requires p >= 1");
    const Vector<Scalar> g = to_grid(x);
    if (p == Scalar(2)) return std::sqrt(weight_ * g.squaredNorm());
    if (p == Scalar(4)) return std::sqrt(std::sqrt(weight_ * g.array().square().square().sum()));
    return std::pow(weight_ * g.array().abs().pow(p).sum(), Scalar(1) / p);
  }

  Scalar norm(const Vector<Scalar>& x, NormKind kind) const {
    switch (kind.tag) {
      case NormKind::Tag::l2:
        return x.norm();
      case NormKind::Tag::sobolev:
        return norm_sobolev(x, Scalar(kind.order));
      case NormKind::Tag::lebesgue:
        return lebesgue_norm(x, Scalar(kind.order));
    }
    return Scalar(0);
  }

  /// sup over the collocation points, a proxy for the C(Lambda) norm.
  Scalar sup_norm(const Vector<Scalar>& x) const {
    return to_grid(x).cwiseAbs().maxCoeff();
  }

 private:
  void check_modes(const Vector<Scalar>& x, const char* what) const {
    if (x.size() != spec_.n)
      throw std::invalid_argument(std::string(what) + ": field has " +
                                  std::to_string(x.size()) + " modes, basis has " +
                                  std::to_string(spec_.n));
  }

  BasisSpec spec_;
  Scalar weight_{};
  Vector<Scalar> nodes_;
  Vector<Scalar> eigenvalues_;
  Matrix<Scalar> synthesis_;   // m x n, grid values of e_k
  Matrix<Scalar> analysis_;    // n x m, quadrature projection onto e_k
  Matrix<Scalar> derivative_;  // n x m, grid product -> pi_n(1/2 d/dxi .)
};

using BasisD = Basis<double>;

/// Unit vector for mode k (1-based) in n modes.
inline SpectralField unit_mode(int n, int k) {
  if (k < 1 || k > n) throw std::invalid_argument("unit_mode: k outside 1..n");
  SpectralField x = SpectralField::Zero(n);
  x[k - 1] = 1.0;
  return x;
}

}  // namespace sburgers
