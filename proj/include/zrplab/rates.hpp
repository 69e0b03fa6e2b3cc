#pragma once

// Rate functions g with certified increment bounds, the product invariant
// marginals nu_phi(k) = phi^k / (Z(phi) g(k)!), the density map R and its
// inverse, exact marginal sampling and exponential-moment (Chernoff) bounds.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "zrplab/rng.hpp"

namespace zrp {

class RateFunction {
 public:
  // Certifies g(k) - g(k-1) in [gamma_minus, gamma_plus] for 1 <= k <= k_max
  // where k_max = table.size() - 1. Beyond k_max, g grows affinely with slope
  // gamma_tail when a tail is given; otherwise evaluating past the table
  // throws TableOverflow.
  static RateFunction validate(std::vector<double> table, double gamma_minus, double gamma_plus,
                               std::optional<double> gamma_tail = 1.0);

  // g(k) = scale * k, certified with gamma_minus = min(scale, 1) and
  // gamma_plus = max(scale, 1).
  static RateFunction linear(double scale = 1.0);

  double operator()(long k) const;
  double increment(long n) const { return (*this)(n) - (*this)(n - 1); }
  // Thinning probability of a candidate mark addressed at height n.
  double acceptance(long n) const {
    if (n >= 1 && n < static_cast<long>(acceptance_.size())) return acceptance_[static_cast<std::size_t>(n)];
    return increment(n) / gamma_plus_;
  }

  double gamma_minus() const noexcept { return gamma_minus_; }
  double gamma_plus() const noexcept { return gamma_plus_; }
  std::optional<double> gamma_tail() const noexcept { return gamma_tail_; }
  long k_max() const noexcept { return static_cast<long>(table_.size()) - 1; }
  const std::vector<double>& table() const noexcept { return table_; }

  // Stable 64-bit digest of (table, gammas, tail), used in reports.
  std::uint64_t digest() const noexcept;
  std::string describe() const;

 private:
  RateFunction() = default;
  std::vector<double> table_;
  std::vector<double> acceptance_;  // cached acceptance for heights 1..k_max
  double gamma_minus_ = 1.0;
  double gamma_plus_ = 1.0;
  std::optional<double> gamma_tail_;
};

// Structured text loader. Accepted JSON forms:
//   {"table": [[0, 0], [1, 1], [2, 2.4]], "gamma_minus": 0.5, "gamma_plus": 1.5,
//    "gamma_tail": 1.0}
//   {"kind": "linear", "scale": 1.0}
// A "gamma_tail" of null disables the tail rule.
RateFunction load_rate_function(const std::filesystem::path& path);
RateFunction rate_function_from_json_text(const std::string& text);

inline constexpr double kDefaultSeriesTol = 1e-13;
inline constexpr long kSeriesHardCap = 10000;
inline constexpr double kDefaultFugacityCap = 512.0;

struct SeriesSums {
  double z = 1.0;   // sum phi^k / g(k)!
  double z1 = 0.0;  // sum k phi^k / g(k)!  (= phi Z'(phi))
  double z2 = 0.0;  // sum k^2 phi^k / g(k)!
  long terms = 1;   // number of terms summed (k = 0 .. terms-1)
};

// Truncated sums with remainders certified through g(k)! >= gamma_minus^k k!.
SeriesSums partition_sums(const RateFunction& rate, double phi, double tol = kDefaultSeriesTol);

double partition_function(const RateFunction& rate, double phi, double tol = kDefaultSeriesTol);
double density_of_fugacity(const RateFunction& rate, double phi, double tol = kDefaultSeriesTol);
double fugacity_of_density(const RateFunction& rate, double rho, double tol = 1e-10,
                           double fugacity_cap = kDefaultFugacityCap);

struct FugacityDensityPair {
  double phi = 0.0;
  double rho = 0.0;
  double z = 1.0;
  double tolerance = 0.0;
};

FugacityDensityPair fugacity_density_pair(const RateFunction& rate, double rho, double tol = 1e-10);

// Inverse-CDF sampler for the marginal nu_phi with phi = R^{-1}(rho).
class MarginalSampler {
 public:
  MarginalSampler(const RateFunction& rate, double rho);

  double rho() const noexcept { return rho_; }
  double phi() const noexcept { return phi_; }
  double pmf(long k) const;
  double tail(long k) const;  // P[X >= k]
  long quantile(double u) const;

  long sample(Stream& rng) const { return quantile(rng.uniform()); }
  // Exact draw from nu_phi conditioned on X >= k_min (P[X >= k_min] > 0).
  long sample_at_least(Stream& rng, long k_min) const;

 private:
  double rho_ = 0.0;
  double phi_ = 0.0;
  std::vector<double> pmf_;
  std::vector<double> cdf_;
};

struct ChernoffBound {
  double rho = 0.0;
  double epsilon = 0.0;
  long n = 0;
  double bound_upper = 1.0;  // bound on P[sum X >= (rho + eps) n]
  double bound_lower = 1.0;  // bound on P[sum X <= (rho - eps) n]
  double lambda_upper = 0.0; // optimizing lambda
  double lambda_lower = 0.0;
  // -log(bound) / (eps^2 n): the exponent achieved, reported in place of the
  // non-explicit constant c(rho).
  double exponent_upper = 0.0;
  double exponent_lower = 0.0;
  // Large-deviation constant with Z(e phi)/Z(phi) e^{-c rho} <= 1 for all
  // densities in (0, rho], certified on a 64-point grid.
  double c_ld = 0.0;
};

ChernoffBound chernoff_bounds(const RateFunction& rate, double rho, double epsilon, long n);

// log E[e^{lambda X}] under mu_rho.
double log_mgf(const RateFunction& rate, double phi, double lambda);

double large_deviation_constant(const RateFunction& rate, double rho_max);

}  // namespace zrp
