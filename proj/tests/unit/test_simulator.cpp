#include <catch_amalgamated.hpp>
#include <cmath>
#include <set>
#include <sstream>

#include "test_support.hpp"
#include "zrplab/errors.hpp"
#include "zrplab/simulator.hpp"
#include "zrplab/stats.hpp"

using namespace zrp;

namespace {

// Checks every event against the mark rules and the pile bookkeeping.
class Auditor : public Observer {
 public:
  explicit Auditor(long total) : total_(total) {}
  void on_event(const Simulator& sim, const MarkEvent& ev) override {
    ++events;
    const bool rule = ev.u <= sim.rate().acceptance(ev.n);
    if (rule != ev.accepted && sim.domain().is_torus()) ++mark_errors;
    if (ev.n < 1) ++mark_errors;
    if (ev.accepted && ev.y >= 0 && sim.pile(ev.y).back() != ev.id) ++top_errors;
    std::set<ParticleId> ids;
    long sum = 0;
    for (const auto& p : sim.piles()) {
      sum += static_cast<long>(p.size());
      ids.insert(p.begin(), p.end());
    }
    if (sim.domain().is_torus() && (sum != total_ || static_cast<long>(ids.size()) != total_)) ++conservation_errors;
  }
  long events = 0, mark_errors = 0, top_errors = 0, conservation_errors = 0;

 private:
  long total_;
};

}  // namespace

TEST_CASE("domains map coordinates and neighbours") {
  const auto t = Domain::torus(5, 2);
  CHECK(t.index(0) == 2);
  CHECK(t.index(3) == 0);
  CHECK(t.index(-3) == 4);
  CHECK(t.neighbour(4, 1) == 0);
  CHECK(t.neighbour(0, -1) == 4);
  const auto i = Domain::interval(5, 2);
  CHECK(i.index(3) == -1);
  CHECK(i.neighbour(4, 1) == -1);
  CHECK(i.coord(0) == -2);
  CHECK_THROWS_AS(Domain::torus(1).validate(), ConfigError);
}

TEST_CASE("empty configuration never moves") {
  const auto traj = evolve(PileConfig::empty(8), RateFunction::linear(), Domain::torus(8), 10.0, SeedPath{1, 0},
                           SimOptions{{10.0}, true});
  CHECK(traj.event_log.empty());
  REQUIRE(traj.snapshots.size() == 1);
  for (long c : traj.snapshots[0].counts) CHECK(c == 0);
}

TEST_CASE("property: random torus runs obey the mark rule, top landing and conservation") {
  test::Gen gen(21);
  for (int trial = 0; trial < 60; ++trial) {
    const auto rate = gen.rate();
    const long n = gen.integer(2, 12);
    const auto counts = gen.counts(n, 4);
    long total = 0;
    for (long c : counts) total += c;
    Simulator sim(rate, Domain::torus(n), PileConfig::from_counts(counts), SeedPath{static_cast<std::uint64_t>(trial), 3});
    Auditor audit(total);
    Observer* obs[] = {&audit};
    sim.run_until(gen.real(0.5, 5.0), obs);
    CHECK(audit.mark_errors == 0);
    CHECK(audit.top_errors == 0);
    CHECK(audit.conservation_errors == 0);
    CHECK(sim.total() == total);
  }
}

TEST_CASE("replay from the same seed is bit-exact") {
  const auto rate = test::bumpy_rate();
  const auto dom = Domain::torus(16);
  SimOptions opt;
  opt.record_events = true;
  opt.record_rejected = true;
  const auto cfg = sample_stationary_config(rate, 1.0, dom, SeedPath{9, 4});
  const auto a = evolve(cfg, rate, dom, 5.0, SeedPath{9, 4}, opt);
  const auto b = evolve(cfg, rate, dom, 5.0, SeedPath{9, 4}, opt);
  const auto c = evolve(cfg, rate, dom, 5.0, SeedPath{9, 5}, opt);
  REQUIRE(a.event_log.size() == b.event_log.size());
  for (std::size_t i = 0; i < a.event_log.size(); ++i) {
    CHECK(a.event_log[i].t == b.event_log[i].t);
    CHECK(a.event_log[i].u == b.event_log[i].u);
    CHECK(a.event_log[i].x == b.event_log[i].x);
    CHECK(a.event_log[i].accepted == b.event_log[i].accepted);
  }
  CHECK((c.event_log.size() != a.event_log.size() || c.event_log.front().t != a.event_log.front().t));
}

TEST_CASE("single particle performs a rate-1 symmetric walk") {
  // Variance of a continuous-time simple walk with total jump rate 1 is t.
  const auto rate = RateFunction::linear();
  const auto dom = Domain::torus(100, 50);
  std::vector<double> disp2, disp;
  for (std::uint64_t r = 0; r < 100000; ++r) {
    std::vector<long> c(100, 0);
    c[50] = 1;
    Simulator sim(rate, dom, PileConfig::from_counts(c), SeedPath{31, r});
    sim.run_until(10.0);
    const auto cs = sim.counts();
    const long x = static_cast<long>(std::find(cs.begin(), cs.end(), 1) - cs.begin()) - 50;
    disp.push_back(static_cast<double>(x));
    disp2.push_back(static_cast<double>(x * x));
  }
  const auto m1 = mean_se(disp);
  const auto m2 = mean_se(disp2);
  CHECK(std::abs(m1.mean) <= 3.0 * m1.se);
  CHECK(std::abs(m2.mean - 10.0) <= 3.0 * m2.se);
}

TEST_CASE("acceptance harness thins at rate g(k) / (gamma_plus k)") {
  const auto rate = test::bumpy_rate();
  for (long k : {1L, 2L, 3L, 6L}) {
    Stream rng(SeedPath{41, 0}, StreamTag::Auxiliary, static_cast<std::uint64_t>(k));
    const std::uint64_t n = 1000000;
    const auto acc = acceptance_harness(rate, k, n, rng);
    const double p = rate(k) / (rate.gamma_plus() * static_cast<double>(k));
    const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    CHECK(std::abs(static_cast<double>(acc) / static_cast<double>(n) - p) <= 3.0 * se + 1e-12);
  }
}

TEST_CASE("stationary product configurations") {
  const auto rate = RateFunction::linear();
  const auto empty = sample_stationary_config(rate, 0.0, Domain::torus(50), SeedPath{1, 0});
  CHECK(empty.total() == 0);

  const auto big = sample_stationary_config(rate, 1.2, Domain::torus(10000), SeedPath{2, 0}).project();
  std::vector<double> xs(big.counts.begin(), big.counts.end());
  const auto m = mean_se(xs);
  CHECK(std::abs(m.mean - 1.2) <= 3.0 * m.se);

  const auto cfg = sample_stationary_config(rate, 1.0, Domain::torus(20000), SeedPath{3, 0}).project();
  std::vector<double> prod;
  for (std::size_t i = 0; i + 1 < cfg.counts.size(); i += 2)
    prod.push_back((static_cast<double>(cfg.counts[i]) - 1.0) * (static_cast<double>(cfg.counts[i + 1]) - 1.0));
  const auto c = mean_se(prod);
  CHECK(std::abs(c.mean) <= 3.0 * c.se);
}

TEST_CASE("interval edges: reflect conserves, absorb drains") {
  const auto rate = RateFunction::linear();
  std::vector<long> c{3, 0, 0, 0, 3};
  Simulator refl(rate, Domain::interval(5, 0, EdgePolicy::Reflect), PileConfig::from_counts(c), SeedPath{5, 0});
  refl.run_until(50.0);
  CHECK(refl.total() == 6);
  Simulator abs(rate, Domain::interval(5, 0, EdgePolicy::Absorb), PileConfig::from_counts(c), SeedPath{5, 0});
  abs.run_until(200.0);
  CHECK(abs.total() < 6);
}

TEST_CASE("excursion level and occupancy replay") {
  CHECK(excursion_level(2.0, 5.0, 1.0, 1.0) == Catch::Approx((4.0 + 20.0) * 2.0 + 1.0));
  const auto rate = RateFunction::linear();
  const auto dom = Domain::torus(8);
  SimOptions opt;
  opt.record_events = true;
  const auto cfg = sample_stationary_config(rate, 1.0, dom, SeedPath{8, 0});
  const auto traj = evolve(cfg, rate, dom, 3.0, SeedPath{8, 0}, opt);
  long max0 = traj.initial[0];
  std::vector<long> counts = traj.initial;
  for (const auto& ev : traj.event_log) {
    --counts[static_cast<std::size_t>(ev.x)];
    ++counts[static_cast<std::size_t>(ev.y)];
    max0 = std::max(max0, counts[0]);
  }
  CHECK(occupancy_reaches(traj, 0, static_cast<double>(max0), 3.0));
  CHECK_FALSE(occupancy_reaches(traj, 0, static_cast<double>(max0) + 0.5, 3.0));
  CHECK_FALSE(occupancy_reaches(traj, 0, 1e9, 3.0));
}

TEST_CASE("event log binary round trip and snapshot CSV") {
  const auto rate = RateFunction::linear();
  const auto dom = Domain::torus(6, 3);
  SimOptions opt;
  opt.record_events = true;
  opt.snapshot_times = {0.0, 1.0};
  const auto traj = evolve(sample_stationary_config(rate, 1.0, dom, SeedPath{4, 0}), rate, dom, 1.0, SeedPath{4, 0}, opt);
  std::stringstream bin;
  write_event_log_binary(bin, traj.event_log);
  const auto back = read_event_log_binary(bin);
  REQUIRE(back.size() == traj.event_log.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].t == traj.event_log[i].t);
    CHECK(back[i].x == traj.event_log[i].x);
    CHECK(back[i].n == traj.event_log[i].n);
    CHECK(back[i].h == traj.event_log[i].h);
    CHECK(back[i].accepted == traj.event_log[i].accepted);
  }
  std::stringstream csv;
  write_snapshots_csv(csv, traj, dom);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "time,site,count");
  long lines = 0;
  for (std::string l; std::getline(csv, l);) ++lines;
  CHECK(lines == 12);
}

TEST_CASE("table overflow surfaces without a tail rule") {
  const auto rate = RateFunction::validate({0.0, 1.0, 2.0}, 0.5, 1.5, std::nullopt);
  std::vector<long> c{5, 0};
  CHECK_THROWS_AS(evolve(PileConfig::from_counts(c), rate, Domain::torus(2), 1.0, SeedPath{1, 0}), TableOverflow);
}
