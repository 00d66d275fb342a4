#pragma once

// Monte Carlo layer: exponential moments, variational (Boue-Dupuis) checks,
// Bismut-Elworthy-Li gradients, Lipschitz probes and invariant-measure tails.
//
// Every estimator evaluates paths 0..N-1 of the configured seed through
// parallel_map and reduces in path order, so results do not depend on the
// worker count. Difference-based estimators reuse one NoisePath for both
// trajectories (common random numbers).

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sburgers/dynamics.hpp"
#include "sburgers/statistics.hpp"

namespace sburgers {

/// Streaming estimator of log E[exp(G)] stored as
///   running_max + log(shifted_sum / count),  shifted_sum = sum exp(g_i - running_max),
/// so merging never overflows.
class LogMeanExpAggregate {
 public:
  void add(double g);
  void merge(const LogMeanExpAggregate& other);

  std::int64_t count() const { return count_; }
  double running_max() const { return running_max_; }
  double shifted_sum() const { return shifted_sum_; }
  double sum_g() const { return sum_g_; }
  double sum_g_sq() const { return sum_g_sq_; }

  /// Never below mean(): Jensen's inequality holds on every aggregate.
  double log_mean_exp() const;
  double mean() const;
  double variance() const;

 private:
  std::int64_t count_ = 0;
  double running_max_ = -std::numeric_limits<double>::infinity();
  double shifted_sum_ = 0;
  double sum_g_ = 0;
  double sum_g_sq_ = 0;
};

/// Bounded test function phi on the state space.
struct TestFunctional {
  enum class Kind { constant, gaussian_energy, mode_sine, halfspace };
  Kind kind = Kind::gaussian_energy;
  double value = 1.0;      // constant: the constant; mode_sine: the frequency
  int mode = 1;            // mode_sine, halfspace: coefficient index (1-based)

  static TestFunctional constant(double c) { return {Kind::constant, c, 1}; }
  /// exp(-||x||^2)
  static TestFunctional gaussian_energy() { return {Kind::gaussian_energy, 1.0, 1}; }
  /// sin(frequency * x_mode)
  static TestFunctional mode_sine(int mode, double frequency) {
    return {Kind::mode_sine, frequency, mode};
  }
  /// 1{x_mode > 0}
  static TestFunctional halfspace(int mode) { return {Kind::halfspace, 1.0, mode}; }

  double operator()(const SpectralField& x) const;
  std::string name() const;
  static TestFunctional parse(const std::string& text);

  friend bool operator==(const TestFunctional&, const TestFunctional&) = default;
};

struct PathFunctional {
  enum class Kind { sup_l2_sq, terminal_l2_sq, y_dissipation, custom_bounded };
  Kind kind = Kind::terminal_l2_sq;
  double lambda = 1.0;
  double alpha = 1.0;     // y_dissipation only, >= 1
  TestFunctional custom;  // custom_bounded only

  void validate() const;
  std::string name() const;
  static Kind parse_kind(const std::string& text);
  friend bool operator==(const PathFunctional&, const PathFunctional&) = default;
};

/// Per-path values of the unscaled functional (lambda = 1), in path order.
struct PathValues {
  std::vector<double> values;  // blown-up paths are omitted
  std::int64_t excluded = 0;
};

PathValues functional_values(const GalerkinSystem& system, const SpectralField& x0,
                             const PathFunctional& functional, std::int64_t paths, int workers,
                             std::uint64_t first_index = 0);

/// Unscaled functional of one path under an optional control.
double evaluate_functional(const GalerkinSystem& system, const SpectralField& x0,
                           const PathFunctional& functional, const NoisePath& noise,
                           const ControlFunction* control = nullptr);

struct MomentEstimate {
  double estimate = 0;   // log-mean-exp of G
  double se = 0;         // batch means, 20 batches
  double heaviness = 0;  // share of sum exp(G) carried by the top 1% of paths
  double mean_g = 0;
  std::int64_t paths = 0;
  std::int64_t excluded = 0;
  bool unstable = false;  // heaviness > 1/2
};

inline constexpr int kBatchCount = 20;
inline constexpr double kHeavinessLimit = 0.5;

MomentEstimate summarize_log_moment(std::span<const double> g, int batches = kBatchCount);

MomentEstimate exp_moment(const GalerkinSystem& system, const SpectralField& x0,
                          const PathFunctional& functional, std::int64_t paths, int workers);

/// Variance of mode k of the linear system at time T (shift alpha):
/// alpha_k^{2 gamma} (1 - e^{-2(alpha_k + alpha) T}) / (2 (alpha_k + alpha)).
double linear_terminal_variance(int k, double gamma, double alpha, double horizon);

/// 1 / (2 max_k sigma_k^2): the radius of convergence in lambda.
double critical_lambda(double gamma, double alpha, int n, double horizon);

/// Exact log E[exp(lambda ||X_T||^2)] for the linear Galerkin system:
///   sum_k [ -1/2 log(1 - 2 lambda sigma_k^2) + lambda mu_k^2 / (1 - 2 lambda sigma_k^2) ],
/// mu_k = e^{-(alpha_k + alpha) T} x0_k. Throws if lambda >= critical_lambda.
double linear_oracle_moment(double gamma, double alpha, int n, double horizon, double lambda,
                            const SpectralField& x0 = {});

struct LambdaRow {
  double lambda = 0;
  MomentEstimate full;  // 2N paths
  MomentEstimate half;  // first N paths
  bool stable = false;
};

struct LambdaScan {
  std::vector<LambdaRow> rows;
};

/// Evaluates 2N paths once and rescales per lambda. A row is stable when the
/// N- and 2N-path estimates differ by less than 2 combined SE and the 2N
/// estimate is not heavy.
LambdaScan lambda_scan(const GalerkinSystem& system, const SpectralField& x0,
                       const PathFunctional& functional, std::span<const double> lambdas,
                       std::int64_t paths, int workers);

/// Deterministic maximizer of E[lambda ||X_T^u||^2] - 1/2 ||u||^2 for the
/// linear system, from the dense controllability Gramian recursion
///   W <- E W E^T + (psi Lambda^gamma)(psi Lambda^gamma)^T.
ControlFunction lq_oracle_control(const GalerkinSystem& system, const SpectralField& x0,
                                  double lambda);

struct ControlScore {
  std::string label;
  double mean = 0;          // E[G(X^u) - 1/2 ||u||^2]
  double se = 0;
  double control_cost = 0;  // 1/2 ||u||^2
  double combined_se = 0;
  bool violates = false;    // mean > log-mean-exp + 3 combined SE
};

struct VariationalReport {
  MomentEstimate uncontrolled;
  std::vector<ControlScore> scores;
  double best_lower_bound = 0;
  double duality_gap = 0;
  bool violation = false;
};

struct LabeledControl {
  std::string label;
  ControlFunction control;
};

VariationalReport variational_check(const GalerkinSystem& system, const SpectralField& x0,
                                    const PathFunctional& functional,
                                    std::span<const LabeledControl> controls, std::int64_t paths,
                                    int workers);

struct GradientQuery {
  SpectralField x;
  SpectralField h;
  double t = 0;
  TestFunctional phi;
};

struct GradientEstimate {
  double estimate = 0;
  double se = 0;
  std::int64_t paths = 0;
};

/// Per-path Bismut-Elworthy-Li weight phi(X_t) (1/t) sum_m <C^{-1} eta_{m+1}, dbeta_m>
/// with C the per-mode noise gain; eta_{m+1} depends on X_m only, so the sum is adapted.
double bel_path_value(const GradientQuery& query, const GalerkinSystem& system,
                      const NoisePath& noise);

GradientEstimate bel_gradient(const GradientQuery& query, const GalerkinSystem& system,
                              std::int64_t paths, int workers);

/// (P_t phi(x + eps h) - P_t phi(x - eps h)) / (2 eps) on common noise.
GradientEstimate fd_gradient(const GradientQuery& query, const GalerkinSystem& system,
                             double eps, std::int64_t paths, int workers);

struct LipschitzRow {
  double t = 0;
  double ratio = 0;
  double se = 0;
};

struct LipschitzReport {
  std::vector<LipschitzRow> rows;
  LinearFit fit;          // log ratio against log t
  bool fit_valid = false; // false when some ratio is zero
  double constant = 0;    // max_t ratio(t) sqrt(t)
};

LipschitzReport lipschitz_probe(const GalerkinSystem& system, const SpectralField& x,
                                const SpectralField& x_prime, const TestFunctional& phi,
                                std::span<const double> times, std::int64_t paths, int workers);

struct TailFit {
  std::vector<double> thresholds;
  std::vector<double> log_survival;
  double slope = 0;
  double intercept = 0;
  double r_squared = 0;
  std::size_t samples = 0;
  bool exponential = false;  // slope < 0 and R^2 >= 0.9
};

inline constexpr int kTailThresholds = 50;
inline constexpr std::size_t kMinTailSamples = 200;

/// Log survival of the samples at thresholds evenly spaced over their
/// central 99% range, with a straight-line fit.
TailFit fit_tail(std::span<const double> samples, int thresholds = kTailThresholds);

/// ||X_t||^2 sampled every `thinning` after `burn_in` along one trajectory
/// from 0 of length burn_in + sample_horizon.
std::vector<double> invariant_samples(const GalerkinSystem& system, double burn_in,
                                      double sample_horizon, double thinning,
                                      std::uint64_t path_index = 0);

TailFit invariant_tail(const GalerkinSystem& system, double burn_in, double sample_horizon,
                       double thinning, std::uint64_t path_index = 0);

}  // namespace sburgers
