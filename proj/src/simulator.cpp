#include "zrplab/simulator.hpp"

#include <algorithm>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "zrplab/errors.hpp"

namespace zrp {

Domain Domain::torus(long n, long origin_offset) {
  Domain d{DomainKind::Torus, n, origin_offset, EdgePolicy::Reflect};
  d.validate();
  return d;
}

Domain Domain::interval(long n, long origin_offset, EdgePolicy edge) {
  Domain d{DomainKind::Interval, n, origin_offset, edge};
  d.validate();
  return d;
}

long Domain::index(long coordinate) const noexcept {
  const long i = coordinate + origin_offset;
  if (kind == DomainKind::Torus) return ((i % size) + size) % size;
  return (i < 0 || i >= size) ? -1 : i;
}

long Domain::neighbour(long i, int h) const noexcept {
  const long j = i + h;
  if (kind == DomainKind::Torus) {
    if (j < 0) return size - 1;
    if (j >= size) return 0;
    return j;
  }
  return (j < 0 || j >= size) ? -1 : j;
}

void Domain::validate() const {
  if (size < 2) throw ConfigError("domain.size must be >= 2");
}

std::string Domain::describe() const {
  std::ostringstream os;
  os << (kind == DomainKind::Torus ? "torus" : "interval") << " N=" << size << " origin=" << origin_offset;
  return os.str();
}

SiteConfig SiteConfig::from_counts(std::vector<long> counts) {
  SiteConfig c;
  for (long v : counts) {
    if (v < 0) throw ConfigError("occupancy counts must be non-negative");
    c.total += v;
  }
  c.counts = std::move(counts);
  return c;
}

bool SiteConfig::consistent() const {
  long s = 0;
  for (long v : counts) {
    if (v < 0) return false;
    s += v;
  }
  return s == total;
}

PileConfig PileConfig::from_counts(const std::vector<long>& counts) {
  PileConfig p;
  p.piles.resize(counts.size());
  for (std::size_t x = 0; x < counts.size(); ++x) {
    if (counts[x] < 0) throw ConfigError("occupancy counts must be non-negative");
    for (long i = 0; i < counts[x]; ++i) p.piles[x].push_back(p.next_id++);
  }
  return p;
}

PileConfig PileConfig::empty(long sites) {
  PileConfig p;
  p.piles.resize(static_cast<std::size_t>(sites));
  return p;
}

SiteConfig PileConfig::project() const {
  SiteConfig c;
  c.counts.reserve(piles.size());
  for (const auto& pile : piles) {
    c.counts.push_back(static_cast<long>(pile.size()));
    c.total += static_cast<long>(pile.size());
  }
  return c;
}

long PileConfig::total() const {
  long s = 0;
  for (const auto& pile : piles) s += static_cast<long>(pile.size());
  return s;
}

Simulator::Simulator(const RateFunction& rate, Domain domain, PileConfig config, const SeedPath& seed,
                     StreamTag tag)
    : rate_(&rate), domain_(domain), piles_(std::move(config.piles)) {
  domain_.validate();
  if (static_cast<long>(piles_.size()) != domain_.size)
    throw ConfigError("configuration has " + std::to_string(piles_.size()) + " sites, domain has " +
                      std::to_string(domain_.size));
  streams_.reserve(piles_.size());
  for (std::size_t x = 0; x < piles_.size(); ++x) streams_.emplace_back(seed, tag, x);
  queue_.reset(piles_.size());
  for (std::size_t x = 0; x < piles_.size(); ++x) {
    total_ += static_cast<long>(piles_[x].size());
    reschedule(static_cast<long>(x));
  }
}

std::vector<long> Simulator::counts() const {
  std::vector<long> c(piles_.size());
  for (std::size_t x = 0; x < piles_.size(); ++x) c[x] = static_cast<long>(piles_[x].size());
  return c;
}

void Simulator::reschedule(long x) {
  const long k = count(x);
  if (k == 0) {
    queue_.set(static_cast<std::size_t>(x), EventQueue::kNever);
    return;
  }
  if (k > rate_->k_max() && !rate_->gamma_tail())
    throw TableOverflow("site " + std::to_string(domain_.coord(x)) + " reached occupancy " +
                        std::to_string(k) + " beyond the rate table and no tail rule is set");
  const double rate = rate_->gamma_plus() * static_cast<double>(k);
  queue_.set(static_cast<std::size_t>(x), now_ + streams_[static_cast<std::size_t>(x)].exponential(rate));
}

std::optional<MarkEvent> Simulator::step(double t_limit) {
  const double t = queue_.top_time();
  if (!(t <= t_limit)) {
    now_ = std::max(now_, t_limit);
    return std::nullopt;
  }
  const long x = static_cast<long>(queue_.top());
  now_ = t;
  ++candidates_;
  auto& pile = piles_[static_cast<std::size_t>(x)];
  auto& s = streams_[static_cast<std::size_t>(x)];
  const long k = static_cast<long>(pile.size());

  MarkEvent ev;
  ev.t = t;
  ev.x = x;
  ev.n = 1 + static_cast<long>(s.below(static_cast<std::uint64_t>(k)));
  ev.u = s.uniform();
  ev.h = s.sign();
  ev.accepted = ev.u <= rate_->acceptance(ev.n);
  if (ev.accepted) {
    ev.y = domain_.neighbour(x, ev.h);
    if (ev.y < 0 && domain_.edge == EdgePolicy::Reflect) ev.accepted = false;
  }
  if (!ev.accepted) {
    ev.y = -1;
    reschedule(x);
    return ev;
  }
  ++accepted_;
  ev.id = pile[static_cast<std::size_t>(ev.n - 1)];
  pile.erase(pile.begin() + (ev.n - 1));
  reschedule(x);
  if (ev.y >= 0) {
    piles_[static_cast<std::size_t>(ev.y)].push_back(ev.id);
    reschedule(ev.y);
  } else {
    --total_;
  }
  return ev;
}

void Simulator::run_until(double t_end, std::span<Observer* const> observers) {
  while (auto ev = step(t_end))
    for (auto* o : observers) o->on_event(*this, *ev);
}

Trajectory evolve(PileConfig config, const RateFunction& rate, const Domain& domain, double t_end,
                  const SeedPath& seed, const SimOptions& options, std::span<Observer* const> observers) {
  if (!(t_end >= 0.0)) throw ConfigError("t_end must be >= 0");
  for (std::size_t i = 0; i < options.snapshot_times.size(); ++i) {
    const double s = options.snapshot_times[i];
    if (s < 0.0 || s > t_end) throw ConfigError("snapshot times must lie in [0, t_end]");
    if (i > 0 && !(s > options.snapshot_times[i - 1]))
      throw ConfigError("snapshot times must be strictly increasing");
  }
  Trajectory traj;
  traj.seed = seed.seed;
  traj.replica = seed.replica;
  traj.t_end = t_end;
  traj.initial = config.project().counts;
  const long total0 = config.total();
  Simulator sim(rate, domain, std::move(config), seed, options.tag);

  auto advance = [&](double until) {
    while (auto ev = sim.step(until)) {
      if (options.check_conservation && domain.is_torus() && sim.total() != total0)
        throw InconsistentState("particle total changed on a torus");
      if (options.record_events && (ev->accepted || options.record_rejected)) traj.event_log.push_back(*ev);
      for (auto* o : observers) o->on_event(sim, *ev);
    }
  };
  for (double s : options.snapshot_times) {
    advance(s);
    traj.snapshots.push_back({s, sim.counts()});
  }
  advance(t_end);
  return traj;
}

PileConfig sample_stationary_config(const MarginalSampler& sampler, const Domain& domain,
                                    const SeedPath& seed, StreamTag tag) {
  domain.validate();
  std::vector<long> counts(static_cast<std::size_t>(domain.size));
  for (long x = 0; x < domain.size; ++x) {
    Stream s(seed, tag, static_cast<std::uint64_t>(x));
    counts[static_cast<std::size_t>(x)] = sampler.sample(s);
  }
  return PileConfig::from_counts(counts);
}

PileConfig sample_stationary_config(const RateFunction& rate, double rho, const Domain& domain,
                                    const SeedPath& seed, StreamTag tag) {
  return sample_stationary_config(MarginalSampler(rate, rho), domain, seed, tag);
}

double excursion_level(double u, double t, double rho, double gamma_plus) {
  return (2.0 * u + 4.0 * gamma_plus * t) * (rho + 1.0) + 1.0;
}

bool occupancy_reaches(const Trajectory& traj, long site, double level, double t) {
  if (site < 0 || site >= static_cast<long>(traj.initial.size())) throw ConfigError("site outside trajectory");
  long k = traj.initial[static_cast<std::size_t>(site)];
  if (static_cast<double>(k) >= level) return true;
  for (const auto& ev : traj.event_log) {
    if (ev.t > t) break;
    if (!ev.accepted) continue;
    if (ev.x == site) --k;
    if (ev.y == site) ++k;
    if (static_cast<double>(k) >= level) return true;
  }
  return false;
}

std::uint64_t acceptance_harness(const RateFunction& rate, long k, std::uint64_t candidates, Stream& rng) {
  if (k < 1) throw ConfigError("acceptance harness needs occupancy >= 1");
  std::uint64_t acc = 0;
  for (std::uint64_t i = 0; i < candidates; ++i) {
    const long n = 1 + static_cast<long>(rng.below(static_cast<std::uint64_t>(k)));
    if (rng.uniform() <= rate.acceptance(n)) ++acc;
  }
  return acc;
}

void write_snapshots_csv(std::ostream& os, const Trajectory& traj, const Domain& domain) {
  os << "time,site,count\n";
  os.precision(17);
  for (const auto& snap : traj.snapshots)
    for (std::size_t x = 0; x < snap.counts.size(); ++x)
      os << snap.t << ',' << domain.coord(static_cast<long>(x)) << ',' << snap.counts[x] << '\n';
}

namespace {

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
bool get(std::istream& is, T& v) {
  return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof v));
}

}  // namespace

void write_event_log_binary(std::ostream& os, const std::vector<MarkEvent>& events) {
  for (const auto& ev : events) {
    put(os, ev.t);
    put(os, static_cast<std::int64_t>(ev.x));
    put(os, static_cast<std::int64_t>(ev.n));
    put(os, ev.u);
    put(os, static_cast<std::int8_t>(ev.h));
    put(os, static_cast<std::uint8_t>(ev.accepted ? 1 : 0));
  }
}

std::vector<MarkEvent> read_event_log_binary(std::istream& is) {
  std::vector<MarkEvent> out;
  for (;;) {
    MarkEvent ev;
    std::int64_t x = 0, n = 0;
    std::int8_t h = 0;
    std::uint8_t acc = 0;
    if (!get(is, ev.t)) break;
    if (!get(is, x) || !get(is, n) || !get(is, ev.u) || !get(is, h) || !get(is, acc))
      throw InconsistentState("truncated event log record");
    ev.x = x;
    ev.n = n;
    ev.h = h;
    ev.accepted = acc != 0;
    out.push_back(ev);
  }
  return out;
}

}  // namespace zrp
