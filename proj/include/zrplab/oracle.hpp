#pragma once

// Exact reference chain for tiny tori: enumerated state space at fixed
// particle number, sparse generator, canonical stationarity residual and
// transient laws by uniformization.

#include <cstdint>
#include <vector>

#include "zrplab/rates.hpp"

namespace zrp {

inline constexpr long kDefaultStateCap = 200000;

class StateSpace {
 public:
  StateSpace(long sites, long particles, long cap = kDefaultStateCap);

  long sites() const noexcept { return sites_; }
  long particles() const noexcept { return particles_; }
  long size() const noexcept { return static_cast<long>(codes_.size()); }
  // Occupancy vector of state i.
  std::vector<int> state(long i) const;
  // Index of an occupancy vector, -1 when it is not in the space.
  long index(const std::vector<int>& eta) const;

 private:
  std::uint64_t encode(const std::vector<int>& eta) const;

  long sites_;
  long particles_;
  std::vector<std::uint64_t> codes_;  // sorted
};

// Number of compositions of m into n non-negative parts, C(m + n - 1, n - 1).
double composition_count(long n, long m);

struct GeneratorMatrix {
  StateSpace space;
  // Off-diagonal entries in compressed-row form; diag holds -row sums.
  std::vector<long> row_ptr;
  std::vector<long> col;
  std::vector<double> val;
  std::vector<double> diag;

  double entry(long i, long j) const;
  double max_exit_rate() const;
};

// Transitions eta -> eta^{x, x+-1} at rate g(eta(x)) / 2 on the N-torus.
GeneratorMatrix build_generator(const RateFunction& rate, long sites, long particles,
                                long cap = kDefaultStateCap);

// w(eta) proportional to prod_x 1 / g(eta(x))!, normalised to sum 1.
std::vector<double> canonical_weights(const RateFunction& rate, const StateSpace& space);

// ||w^T Q||_inf / ||w||_1.
double stationarity_residual(const GeneratorMatrix& q, const std::vector<double>& w);
double check_canonical_stationarity(const RateFunction& rate, long sites, long particles,
                                    long cap = kDefaultStateCap);

// initial * exp(Q t) by uniformization, truncation error at most tol in l1.
std::vector<double> transient_distribution(const GeneratorMatrix& q, const std::vector<double>& initial,
                                           double t, double tol = 1e-10);

double total_variation(const std::vector<double>& p, const std::vector<double>& q);

}  // namespace zrp
