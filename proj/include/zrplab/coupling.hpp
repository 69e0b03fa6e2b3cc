#pragma once

// Couplings between zero range processes.
//
//  * BasicCoupling: one mark field drives a two-class pile system. Cores sit
//    below extras; cores form eta, cores plus extras form eta'. Since a mark
//    addressed at height n moves the particle there, eta and eta' are both
//    zero range processes and eta <= eta' holds sitewise at every time.
//
//  * CouplingEngine: a reference process R driven by its own mark field and
//    a follower process S whose particles are matched to R particles inside
//    subintervals of an interval H. Met S particles copy the jumps of their
//    partners (the pair sits at equal heights at the bottom of both piles);
//    unmet S particles use an independent field addressed at the heights
//    above the met region. Matchings are rebuilt at epoch times, keeping met
//    pairs. With single-class piles this is the sprinkled coupling; with two
//    classes per side and a phase switch it is the four-process coupling.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "zrplab/event_queue.hpp"
#include "zrplab/rates.hpp"
#include "zrplab/rng.hpp"
#include "zrplab/simulator.hpp"

namespace zrp {

// Common-uniform (quantile) coupling of mu_low and mu_high per site. Since
// nu_phi' / nu_phi is increasing in k for phi <= phi', the quantiles are
// ordered and the result satisfies low <= high sitewise.
struct MonotonePair {
  std::vector<long> low;
  std::vector<long> high;
};
MonotonePair sample_monotone_pair(const MarginalSampler& low, const MarginalSampler& high, long sites,
                                  const SeedPath& seed, StreamTag tag = StreamTag::InitialConfig);

struct TwoClassEvent {
  MarkEvent mark;
  bool core = false;  // class of the mover (valid when accepted)
};

class BasicCoupling {
 public:
  BasicCoupling(const RateFunction& rate, Domain domain, std::vector<long> cores, std::vector<long> totals,
                const SeedPath& seed, StreamTag tag = StreamTag::MarkField);

  double time() const noexcept { return now_; }
  const Domain& domain() const noexcept { return domain_; }
  long cores(long x) const noexcept { return core_[static_cast<std::size_t>(x)]; }
  long totals(long x) const noexcept { return core_[static_cast<std::size_t>(x)] + extra_[static_cast<std::size_t>(x)]; }
  std::vector<long> core_counts() const { return core_; }
  std::vector<long> total_counts() const;
  bool dominated() const;

  std::optional<TwoClassEvent> step(double t_limit);

 private:
  void reschedule(long x);

  const RateFunction* rate_;
  Domain domain_;
  std::vector<long> core_;
  std::vector<long> extra_;
  std::vector<Stream> streams_;
  EventQueue queue_;
  double now_ = 0.0;
};

struct BasicCouplingRun {
  std::vector<long> initial_low, initial_high;
  std::vector<MarkEvent> low_events;   // accepted core moves
  std::vector<MarkEvent> high_events;  // all accepted moves
  std::vector<long> final_low, final_high;
  std::uint64_t events = 0;
  std::uint64_t domination_violations = 0;
};

// Draws (eta_0, eta'_0) by the quantile coupling and evolves both with one
// field. Domination is checked after every event when `check` is set.
BasicCouplingRun basic_monotone_coupling(const RateFunction& rate, double rho, double rho_prime,
                                         const Domain& domain, double t_end, const SeedPath& seed,
                                         bool record_events = false, bool check = true);

// Matching inside H = [h_lo, h_hi] (array positions, length a multiple of L)
// split into subintervals of length L. Sparse particles are paired to dense
// particles of the same subinterval: first as many same-site pairs as
// possible, then the leftover sparse particles left to right with the
// leftover dense particles left to right. Particles at a site are addressed
// by their rank among the available particles there.
struct MatchPair {
  long sparse_site = 0;
  long sparse_rank = 0;
  long dense_site = 0;
  long dense_rank = 0;
};

struct MatchingResult {
  std::vector<MatchPair> pairs;
  std::vector<long> unmatchable;  // subinterval indices j with sigma_j(sparse) > sigma_j(dense)
  long subintervals = 0;
  long unmatched_sparse = 0;
};

MatchingResult build_matching(const std::vector<long>& sparse, const std::vector<long>& dense, long h_lo,
                              long h_hi, long L);

// Matching snapshot in terms of particle identities.
struct MatchingState {
  struct Pair {
    std::uint32_t follower = 0;
    std::uint32_t reference = 0;
    bool met = false;
  };
  std::vector<Pair> pairs;
  std::vector<std::uint32_t> unmatched;  // follower ids without partner
  long epoch = 0;
};

// Coupling geometry for an interval I = [a, b] and horizon t:
//   H = [a - ceil(3 gamma_plus t), b + ceil(3 gamma_plus t)], right end padded
//   so |H| is a multiple of L = floor(t^{1/4}); matching times t_k = k t^{3/4},
//   k = 0..floor(t^{1/4}); a torus margin of ceil(4 sqrt t) + L sites on each
//   side of H.
struct CouplingGeometry {
  long a = 0, b = 0;
  long h_lo = 0, h_hi = 0;  // coordinates
  long L = 1;
  long margin = 0;
  std::vector<double> epochs;
  Domain domain;

  static CouplingGeometry make(long a, long b, double t, double gamma_plus);
  long h_lo_index() const { return domain.index(h_lo); }
  long h_hi_index() const { return domain.index(h_hi); }
  bool in_h(long index) const;
};

struct CouplingSeeds {
  SeedPath reference_field;
  SeedPath follower_field;
  SeedPath reference_init;
  SeedPath follower_init;

  static CouplingSeeds from(const SeedPath& p) { return {p, p, p, p}; }
};

struct ReferenceEvent {
  double t = 0.0;
  long x = 0;
  long y = 0;
  long n = 0;
  bool core = false;
  bool operator==(const ReferenceEvent&) const = default;
};

struct EngineChecks {
  std::uint64_t events = 0;
  std::uint64_t met_separations = 0;     // met pair found on different sites
  std::uint64_t pile_violations = 0;     // layout / class order / projection mismatches
  std::uint64_t far_pairs = 0;           // matched pair farther than L at an epoch
};

class CouplingEngine {
 public:
  enum Side : int { Reference = 0, Follower = 1 };

  // Counts are per internal index. core counts <= totals.
  CouplingEngine(const RateFunction& rate, const CouplingGeometry& geom, std::vector<long> ref_cores,
                 std::vector<long> ref_totals, std::vector<long> fol_cores, std::vector<long> fol_totals,
                 const CouplingSeeds& seeds, bool check_invariants);

  // Rebuilds the matching. In core mode reference cores (sparse) are matched
  // to follower cores (dense); otherwise every follower particle (sparse) is
  // matched to reference particles (dense). Returns the matching result.
  MatchingResult rematch(bool core_mode, long epoch);
  // Advances to time t_limit.
  void run_until(double t_limit);

  double time() const noexcept { return now_; }
  long count(Side s, long x) const noexcept { return static_cast<long>(piles_[s][static_cast<std::size_t>(x)].size()); }
  long cores(Side s, long x) const;
  long met(long x) const noexcept { return met_[static_cast<std::size_t>(x)]; }
  std::vector<long> counts(Side s) const;
  std::vector<long> core_counts(Side s) const;
  const EngineChecks& checks() const noexcept { return checks_; }
  // Follower particles currently in [lo, hi] (indices) that are unmet, and
  // the total there.
  std::pair<long, long> unmet_in(long lo, long hi) const;
  // Whether some follower particle that ever stood outside H is in [lo, hi].
  bool b_event(long lo, long hi) const;
  MatchingState matching_state() const;

  void record_reference_events(bool on) { record_ref_ = on; }
  const std::vector<ReferenceEvent>& reference_events() const noexcept { return ref_log_; }
  // Full consistency audit; throws InconsistentState on failure.
  void audit() const;

 private:
  struct Particle {
    std::int32_t site = 0;
    std::int32_t partner = -1;
    bool met = false;
    bool core = true;
    bool left_h = false;
  };

  void reschedule_reference(long x);
  void reschedule_follower(long x);
  void reference_mark(long x);
  void follower_mark(long x);
  // Removes particle at pile index i of side s at site x.
  std::uint32_t take(Side s, long x, std::size_t i);
  void land_alone(Side s, long y, std::uint32_t id);
  void land_pair(long y, std::uint32_t ref_id, std::uint32_t fol_id);
  void normalise(long x);
  void swap_roles(Side s, long x, std::size_t met_pos, std::size_t unmet_pos);
  void check_site(long x);

  const RateFunction* rate_;
  CouplingGeometry geom_;
  bool two_class_ = false;
  bool check_ = false;
  bool record_ref_ = false;
  std::vector<Particle> parts_[2];
  std::vector<std::vector<std::uint32_t>> piles_[2];
  std::vector<long> met_;
  std::vector<Stream> ref_streams_;
  std::vector<Stream> fol_streams_;
  std::vector<double> fol_rate_;
  EventQueue queue_;  // channels [0, N) reference, [N, 2N) follower
  double now_ = 0.0;
  EngineChecks checks_;
  std::vector<ReferenceEvent> ref_log_;
};

struct CouplingRun {
  std::vector<long> eta;      // follower counts at t (internal indices)
  std::vector<long> eta_bar;  // reference counts at t
  long i_lo = 0, i_hi = 0;    // I in coordinates
  double t = 0.0;
  double epsilon = 0.0;
  bool domination_ok = true;
  std::vector<long> failure_sites;  // coordinates
  double unmet_fraction = 0.0;      // unmet follower particles in I at t / follower particles in I
  long unmatchable_epochs = 0;
  bool b_event = false;
  EngineChecks checks;
  std::vector<ReferenceEvent> reference_log;
};

struct CouplingOptions {
  bool check_invariants = false;
  bool record_reference = false;
};

// eta_0 ~ mu_rho, eta_bar_0 ~ mu_{rho + eps}, independent; eta_bar follows
// the reference field only.
CouplingRun sprinkled_coupling_run(const RateFunction& rate, double rho, double epsilon, long a, long b,
                                   double t, const CouplingSeeds& seeds, const CouplingOptions& opt = {});

struct SimultaneousRun {
  CouplingRun base;                // eta = follower cores, eta_bar = reference cores
  std::vector<long> eta_prime;     // follower totals
  std::vector<long> eta_bar_prime; // reference totals
  long phase_one_epochs = 0;
  bool joint_failure = false;      // eta < eta_bar or eta' > eta_bar' somewhere in I
  std::uint64_t order_violations = 0;  // eta > eta' or eta_bar > eta_bar' at some checked event
};

// (eta, eta') ~ P_{rho, rho'} follows; (eta_bar, eta_bar') ~ P_{rho - eps,
// rho' + eps} is the reference. The first ceil((floor(t^{1/4}) + 1) / 2)
// epochs match reference cores to follower cores, later epochs match every
// follower particle to reference particles.
SimultaneousRun simultaneous_coupling_run(const RateFunction& rate, double rho, double rho_prime,
                                          double epsilon, long a, long b, double t, const CouplingSeeds& seeds,
                                          const CouplingOptions& opt = {}, double rho_minus = 0.0);

long phase_one_epoch_count(double t);

void write_coupling_csv_header(std::ostream& os);
void write_coupling_csv_row(std::ostream& os, long replica, const CouplingRun& run);

}  // namespace zrp
