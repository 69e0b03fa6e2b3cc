#pragma once

// Infected/healthy overlay on a zero range trajectory. Particles at or left
// of the origin start infected; a healthy particle is infected as soon as it
// shares a site with an infected one. The front is the rightmost infected
// site. Healthy particles always sit strictly right of the front, so the
// front moves by +-1 only: up when an infected particle jumps right from it,
// down when its last particle jumps left.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <vector>

#include "zrplab/simulator.hpp"

namespace zrp {

inline constexpr long kNoFront = std::numeric_limits<long>::min();

struct InfectionState {
  std::vector<long> xi;    // infected counts per internal index
  std::vector<long> zeta;  // healthy counts
  long front = kNoFront;   // internal index of the rightmost infected site
  long infected = 0;

  // Sites with index <= origin are infected.
  static InfectionState init(const std::vector<long>& counts, long origin);

  bool has_front() const noexcept { return front != kNoFront; }
  // Applies one candidate mark. Rejected marks leave the state unchanged.
  void apply(const MarkEvent& ev);
  // Throws InconsistentState unless xi + zeta = counts, the all-or-nothing
  // rule holds and the front is the rightmost infected site.
  void check(const std::vector<long>& counts) const;
};

struct FrontPath {
  std::vector<double> times;  // change times, first entry is the start time
  std::vector<long> values;   // lattice coordinates, right-continuous
  long origin_x = 0;
  double origin_s = 0.0;

  long value_at(double t) const;
  long sup_until(double t) const;
  long inf_until(double t) const;
};

struct FrontMartingale {
  // M is piecewise linear: after times[i] it equals values[i] and decreases
  // at rate integrand[i] until the next record.
  std::vector<double> times;
  std::vector<double> values;
  std::vector<double> integrand;
  bool valid = true;

  double value_at(double t) const;
};

// Observer that carries the overlay along a simulation and records the
// front path and the martingale
//   M_t = r_t - r_0 - int_0^t (1/2) g(eta_s(r_s)) 1{eta_s(r_s) >= 2} ds
// exactly between events. The run is flagged as escaped once the front comes
// within `buffer` sites of either end of the domain.
class InfectionTracker : public Observer {
 public:
  InfectionTracker(const Simulator& sim, long origin_index, long buffer, bool check_each_event = false);

  void on_event(const Simulator& sim, const MarkEvent& ev) override;

  const InfectionState& state() const noexcept { return state_; }
  const FrontPath& front_path() const noexcept { return path_; }
  const FrontMartingale& martingale() const noexcept { return mart_; }
  bool escaped() const noexcept { return escaped_; }
  std::uint64_t checks() const noexcept { return checks_; }
  long front_coord() const;

 private:
  double integrand_now(const Simulator& sim) const;
  void update_escape(const Simulator& sim);

  InfectionState state_;
  FrontPath path_;
  FrontMartingale mart_;
  double rate_now_ = 0.0;   // current integrand
  double last_t_ = 0.0;
  double m_now_ = 0.0;
  long r0_ = 0;
  long buffer_;
  bool check_each_event_;
  bool escaped_ = false;
  std::uint64_t checks_ = 0;
};

struct ScaleInterval {
  long anchor = 0;  // gamma(0)
  long lo = 0;      // allowed interval, lattice coordinates
  long hi = 0;
};

// True iff path(0) = anchor, the path stays in [lo, hi], moves by +-1 only,
// and every move at time tau coincides with an accepted jump, at tau, of a
// particle from the path's current site in the same direction.
bool eta_allowed_check(const FrontPath& path, const std::vector<MarkEvent>& events, const Domain& domain,
                       const ScaleInterval& scale);

struct OccupationStat {
  long radius = 0;
  double horizon = 0.0;
  double value = 0.0;
};

// Fraction of s in [0, t] with sum_{|x - path(s)| <= R} eta_s(x) >= 2, exact
// for the piecewise-constant configuration replayed from `initial` and the
// accepted events.
OccupationStat occupation_fraction(const FrontPath& path, const std::vector<long>& initial,
                                   const std::vector<MarkEvent>& events, const Domain& domain, long radius,
                                   double t);

void write_front_csv(std::ostream& os, const FrontPath& path);
void write_martingale_csv(std::ostream& os, const FrontMartingale& m);

}  // namespace zrp
