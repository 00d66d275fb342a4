#pragma once

#include <span>
#include <vector>

namespace sburgers {

struct SampleSummary {
  double mean = 0;
  double variance = 0;  // unbiased
  double standard_error = 0;
  std::size_t count = 0;
};

SampleSummary summarize(std::span<const double> values);

/// Ordinary least squares y = intercept + slope x.
struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r_squared = 0;
};

LinearFit fit_line(std::span<const double> x, std::span<const double> y);

/// Linear-interpolated empirical quantile, q in [0,1].
double quantile(std::vector<double> values, double q);

/// Half-open index range [begin, end) of batch b out of `batches` over n items.
struct BatchRange {
  std::size_t begin, end;
};
BatchRange batch_range(std::size_t n, std::size_t batches, std::size_t b);

}  // namespace sburgers
