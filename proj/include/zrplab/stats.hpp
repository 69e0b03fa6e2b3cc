#pragma once

// Small statistics toolkit for the experiment reports.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "zrplab/rng.hpp"

namespace zrp {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Two-sided standard normal quantile for confidence `level` (0.95 -> 1.96).
double normal_two_sided(double level);
// Upper quantile z with P[Z > z] = alpha.
double normal_upper(double alpha);

Interval wilson_interval(std::uint64_t successes, std::uint64_t n, double level = 0.95);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};
MeanSe mean_se(std::span<const double> xs);

// Percentile bootstrap for a statistic of resampled index sets. `stat`
// receives a multiset of indices into the sample (size n).
Interval bootstrap_interval(std::size_t n, const std::function<double(std::span<const std::size_t>)>& stat,
                            int resamples, double level, Stream& rng);

struct ChiSquare {
  double statistic = 0.0;
  long dof = 0;
  double p_value = 1.0;
};
// Goodness of fit of observed counts against probabilities (same length,
// summing to 1). Bins are merged from the top until each expected count is
// at least min_expected.
ChiSquare chi_square_gof(std::span<const std::uint64_t> observed, std::span<const double> probs,
                         double min_expected = 5.0);

struct TrendPoint {
  double value = 0.0;
  double se = 0.0;
};
// One-sided test of "non-increasing": fails at the first consecutive pair
// with (v[j+1] - v[j]) / sqrt(se_j^2 + se_{j+1}^2) > z_{1-alpha}. Pairs
// with zero combined SE fail iff v[j+1] > v[j].
struct TrendResult {
  bool non_increasing = true;
  std::vector<double> z;  // per consecutive pair
};
TrendResult non_increasing_trend(std::span<const TrendPoint> pts, double alpha = 0.05);

// Least-squares slope and intercept of y on x.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};
LineFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace zrp
