#pragma once

// Event-driven graphical construction on a finite domain. Each site carries
// a candidate-mark clock of rate gamma_plus * k (k = current occupancy); a
// candidate picks a height n uniformly in 1..k, a uniform u and a direction h,
// and is accepted iff u <= (g(n) - g(n-1)) / gamma_plus. The accepted particle
// leaves its pile (particles above shift down) and lands on top of the
// neighbouring pile. Marks addressed above the pile are never generated, so
// the net jump rate of a site is exactly g(k).

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zrplab/event_queue.hpp"
#include "zrplab/rates.hpp"
#include "zrplab/rng.hpp"

namespace zrp {

enum class DomainKind { Torus, Interval };

// What happens to an accepted jump that would leave an interval domain.
// Reflect suppresses it (the bond to the outside is closed, which keeps every
// product measure reversible); Absorb removes the particle.
enum class EdgePolicy { Reflect, Absorb };

struct Domain {
  DomainKind kind = DomainKind::Torus;
  long size = 0;
  long origin_offset = 0;  // internal index of lattice coordinate 0
  EdgePolicy edge = EdgePolicy::Reflect;

  static Domain torus(long n, long origin_offset = 0);
  static Domain interval(long n, long origin_offset = 0, EdgePolicy edge = EdgePolicy::Reflect);

  long coord(long index) const noexcept { return index - origin_offset; }
  // Internal index of a lattice coordinate, wrapped on a torus; -1 when the
  // coordinate lies outside an interval.
  long index(long coordinate) const noexcept;
  // Neighbour of index i in direction h, or -1 past an interval edge.
  long neighbour(long i, int h) const noexcept;
  bool is_torus() const noexcept { return kind == DomainKind::Torus; }
  void validate() const;
  std::string describe() const;
};

struct SiteConfig {
  std::vector<long> counts;
  long total = 0;

  static SiteConfig from_counts(std::vector<long> counts);
  bool consistent() const;
};

using ParticleId = std::uint32_t;

struct PileConfig {
  std::vector<std::vector<ParticleId>> piles;  // bottom to top
  ParticleId next_id = 0;

  static PileConfig from_counts(const std::vector<long>& counts);
  static PileConfig empty(long sites);
  SiteConfig project() const;
  long total() const;
};

struct MarkEvent {
  double t = 0.0;
  long x = 0;        // internal site index
  long n = 0;        // addressed height, 1-based
  double u = 0.0;
  int h = 1;         // direction
  bool accepted = false;
  long y = -1;       // destination index, -1 if the particle left the domain
  ParticleId id = 0; // moving particle (valid when accepted)
};

struct Snapshot {
  double t = 0.0;
  std::vector<long> counts;
};

struct Trajectory {
  std::vector<long> initial;
  std::vector<Snapshot> snapshots;
  std::vector<MarkEvent> event_log;  // accepted events (plus rejected if requested)
  std::uint64_t seed = 0;
  std::uint64_t replica = 0;
  double t_end = 0.0;
};

class Simulator;

class Observer {
 public:
  virtual ~Observer() = default;
  // Called after every candidate mark has been applied.
  virtual void on_event(const Simulator& sim, const MarkEvent& ev) = 0;
};

class Simulator {
 public:
  Simulator(const RateFunction& rate, Domain domain, PileConfig config, const SeedPath& seed,
            StreamTag tag = StreamTag::MarkField);

  double time() const noexcept { return now_; }
  const Domain& domain() const noexcept { return domain_; }
  const RateFunction& rate() const noexcept { return *rate_; }
  long count(long x) const noexcept { return static_cast<long>(piles_[static_cast<std::size_t>(x)].size()); }
  const std::vector<ParticleId>& pile(long x) const noexcept { return piles_[static_cast<std::size_t>(x)]; }
  const std::vector<std::vector<ParticleId>>& piles() const noexcept { return piles_; }
  std::vector<long> counts() const;
  long total() const noexcept { return total_; }
  std::uint64_t candidates() const noexcept { return candidates_; }
  std::uint64_t accepted() const noexcept { return accepted_; }

  // Processes the next candidate mark if it falls at or before t_limit;
  // otherwise advances the clock to t_limit and returns nothing.
  std::optional<MarkEvent> step(double t_limit);
  void run_until(double t_end, std::span<Observer* const> observers = {});

 private:
  void reschedule(long x);

  const RateFunction* rate_;
  Domain domain_;
  std::vector<std::vector<ParticleId>> piles_;
  std::vector<Stream> streams_;
  EventQueue queue_;
  double now_ = 0.0;
  long total_ = 0;
  std::uint64_t candidates_ = 0;
  std::uint64_t accepted_ = 0;
};

struct SimOptions {
  std::vector<double> snapshot_times;  // strictly increasing, within [0, t_end]
  bool record_events = false;
  bool record_rejected = false;
  bool check_conservation = false;     // assert the particle total after every event
  StreamTag tag = StreamTag::MarkField;
};

Trajectory evolve(PileConfig config, const RateFunction& rate, const Domain& domain, double t_end,
                  const SeedPath& seed, const SimOptions& options = {},
                  std::span<Observer* const> observers = {});

// Independent mu_rho draws per site, one stream per site.
PileConfig sample_stationary_config(const RateFunction& rate, double rho, const Domain& domain,
                                    const SeedPath& seed, StreamTag tag = StreamTag::InitialConfig);
PileConfig sample_stationary_config(const MarginalSampler& sampler, const Domain& domain,
                                    const SeedPath& seed, StreamTag tag = StreamTag::InitialConfig);

// A(u, t) = (2u + 4 gamma_plus t)(rho + 1) + 1.
double excursion_level(double u, double t, double rho, double gamma_plus);

// Whether the occupancy of `site` reaches `level` at some time in [0, t],
// replayed from the trajectory's initial counts and accepted event log.
bool occupancy_reaches(const Trajectory& traj, long site, double level, double t);

// Candidate marks at a site frozen at occupancy k: returns the number of
// accepted marks among `candidates`. Expected fraction g(k) / (gamma_plus k).
std::uint64_t acceptance_harness(const RateFunction& rate, long k, std::uint64_t candidates,
                                 Stream& rng);

void write_snapshots_csv(std::ostream& os, const Trajectory& traj, const Domain& domain);
// Record layout (little-endian host order): double t, int64 x, int64 n,
// double u, int8 h, uint8 accepted.
void write_event_log_binary(std::ostream& os, const std::vector<MarkEvent>& events);
std::vector<MarkEvent> read_event_log_binary(std::istream& is);

}  // namespace zrp
