#include <catch_amalgamated.hpp>
#include <cmath>
#include <set>
#include <sstream>

#include "test_support.hpp"
#include "zrplab/coupling.hpp"
#include "zrplab/errors.hpp"
#include "zrplab/stats.hpp"

using namespace zrp;

TEST_CASE("monotone initial pairs dominate sitewise with the right marginals") {
  const auto rate = RateFunction::linear();
  const MarginalSampler lo(rate, 0.5), hi(rate, 1.0);
  const auto pair = sample_monotone_pair(lo, hi, 20000, SeedPath{1, 0});
  std::vector<double> a, b;
  for (std::size_t i = 0; i < pair.low.size(); ++i) {
    REQUIRE(pair.low[i] <= pair.high[i]);
    a.push_back(static_cast<double>(pair.low[i]));
    b.push_back(static_cast<double>(pair.high[i]));
  }
  const auto ma = mean_se(a), mb = mean_se(b);
  CHECK(std::abs(ma.mean - 0.5) <= 3.0 * ma.se);
  CHECK(std::abs(mb.mean - 1.0) <= 3.0 * mb.se);
}

TEST_CASE("basic coupling: equal densities give identical processes") {
  const auto rate = test::bumpy_rate();
  const auto run = basic_monotone_coupling(rate, 0.8, 0.8, Domain::torus(30), 10.0, SeedPath{2, 0}, true);
  CHECK(run.initial_low == run.initial_high);
  CHECK(run.final_low == run.final_high);
  CHECK(run.low_events.size() == run.high_events.size());
}

TEST_CASE("property: basic coupling never breaks domination") {
  test::Gen gen(61);
  for (std::uint64_t r = 0; r < 200; ++r) {
    const auto rate = gen.rate();
    const double rho = gen.real(0.0, 1.5);
    const double rho2 = rho + gen.real(0.0, 1.0);
    const auto dom = gen.coin() ? Domain::torus(gen.integer(2, 30)) : Domain::interval(gen.integer(2, 30), 0);
    const auto run = basic_monotone_coupling(rate, rho, rho2, dom, gen.real(0.5, 8.0), SeedPath{62, r});
    CHECK(run.domination_violations == 0);
    for (std::size_t x = 0; x < run.final_low.size(); ++x) CHECK(run.final_low[x] <= run.final_high[x]);
  }
}

TEST_CASE("matching examples") {
  const auto same = build_matching({2, 1}, {2, 1}, 0, 1, 2);
  CHECK(same.pairs.size() == 3);
  for (const auto& p : same.pairs) CHECK(p.sparse_site == p.dense_site);
  CHECK(same.unmatchable.empty());

  const auto cross = build_matching({1, 0}, {0, 1}, 0, 1, 2);
  REQUIRE(cross.pairs.size() == 1);
  CHECK(cross.pairs[0].sparse_site == 0);
  CHECK(cross.pairs[0].dense_site == 1);

  const auto bad = build_matching({3}, {2}, 0, 0, 1);
  REQUIRE(bad.unmatchable.size() == 1);
  CHECK(bad.unmatchable[0] == 0);
  CHECK(bad.unmatched_sparse == 1);

  CHECK_THROWS_AS(build_matching({1, 1, 1}, {1, 1, 1}, 0, 2, 2), ConfigError);
}

TEST_CASE("property: matchings are injective, local and maximal") {
  test::Gen gen(63);
  for (int trial = 0; trial < 500; ++trial) {
    const long L = gen.integer(1, 5);
    const long blocks = gen.integer(1, 6);
    const long n = L * blocks + 4;
    const auto s = gen.counts(n, 3);
    const auto d = gen.counts(n, 4);
    const auto m = build_matching(s, d, 2, 2 + L * blocks - 1, L);
    std::set<std::pair<long, long>> used_s, used_d;
    for (const auto& p : m.pairs) {
      CHECK(used_s.insert({p.sparse_site, p.sparse_rank}).second);
      CHECK(used_d.insert({p.dense_site, p.dense_rank}).second);
      CHECK((p.sparse_site - 2) / L == (p.dense_site - 2) / L);
      CHECK(p.sparse_rank < s[static_cast<std::size_t>(p.sparse_site)]);
      CHECK(p.dense_rank < d[static_cast<std::size_t>(p.dense_site)]);
    }
    long sparse_in_h = 0;
    for (long x = 2; x < 2 + L * blocks; ++x) sparse_in_h += s[static_cast<std::size_t>(x)];
    CHECK(static_cast<long>(m.pairs.size()) + m.unmatched_sparse == sparse_in_h);
    if (m.unmatchable.empty()) CHECK(m.unmatched_sparse == 0);
  }
}

TEST_CASE("geometry follows the scale rules") {
  const auto g = CouplingGeometry::make(-10, 10, 256.0, 1.0);
  CHECK(g.L == 4);
  CHECK(g.h_lo <= -10 - 768);
  CHECK(g.h_hi >= 10 + 768);
  CHECK((g.h_hi - g.h_lo + 1) % g.L == 0);
  REQUIRE(g.epochs.size() == 4);
  CHECK(g.epochs[1] == 64.0);
  CHECK(g.h_lo_index() >= 0);
  CHECK(g.h_hi_index() < g.domain.size);
  CHECK(phase_one_epoch_count(16.0) == 2);
  CHECK(phase_one_epoch_count(256.0) == 3);
  CHECK(phase_one_epoch_count(1.0) == 1);
}

TEST_CASE("sprinkled coupling input checks and degenerate cases") {
  const auto rate = RateFunction::linear();
  const auto seeds = CouplingSeeds::from(SeedPath{3, 0});
  CHECK_THROWS_AS(sprinkled_coupling_run(rate, 1.0, 1.5, -10, 10, 16.0, seeds), ConfigError);
  CHECK_THROWS_AS(sprinkled_coupling_run(rate, 1.0, 0.0, -10, 10, 16.0, seeds), ConfigError);
  const auto empty = sprinkled_coupling_run(rate, 0.0, 1.0, -10, 10, 4.0, seeds);
  CHECK(empty.domination_ok);
  for (long c : empty.eta) CHECK(c == 0);
}

TEST_CASE("property: sprinkled coupling keeps met pairs together and replays the reference") {
  const auto rate = test::bumpy_rate();
  CouplingOptions opt;
  opt.check_invariants = true;
  opt.record_reference = true;
  for (std::uint64_t r = 0; r < 30; ++r) {
    auto seeds = CouplingSeeds::from(SeedPath{70, r});
    const auto a = sprinkled_coupling_run(rate, 0.8, 0.5, -4, 4, 16.0, seeds, opt);
    CHECK(a.checks.met_separations == 0);
    CHECK(a.checks.pile_violations == 0);
    CHECK(a.checks.far_pairs == 0);
    CHECK(a.checks.events > 0);
    seeds.follower_field = SeedPath{71, r};
    const auto b = sprinkled_coupling_run(rate, 0.8, 0.5, -4, 4, 16.0, seeds, opt);
    CHECK(a.reference_log == b.reference_log);
    CHECK(a.eta_bar == b.eta_bar);
  }
}

TEST_CASE("simultaneous coupling keeps the pair orders") {
  const auto rate = RateFunction::linear();
  const auto seeds = CouplingSeeds::from(SeedPath{4, 0});
  CHECK_THROWS_AS(simultaneous_coupling_run(rate, 1.0, 1.0, 0.0, -5, 5, 16.0, seeds), ConfigError);
  CHECK_THROWS_AS(simultaneous_coupling_run(rate, 1.2, 1.0, 0.5, -5, 5, 16.0, seeds), ConfigError);
  CHECK_THROWS_AS(simultaneous_coupling_run(rate, 1.0, 1.5, 0.5, -5, 5, 16.0, seeds, {}, 0.8), ConfigError);
  CouplingOptions opt;
  opt.check_invariants = true;
  for (std::uint64_t r = 0; r < 20; ++r) {
    const auto run = simultaneous_coupling_run(rate, 1.0, 1.3, 0.5, -5, 5, 16.0,
                                               CouplingSeeds::from(SeedPath{80, r}), opt);
    CHECK(run.order_violations == 0);
    CHECK(run.base.checks.met_separations == 0);
    CHECK(run.base.checks.pile_violations == 0);
    CHECK(run.phase_one_epochs == 2);
    for (std::size_t x = 0; x < run.eta_prime.size(); ++x) {
      CHECK(run.base.eta[x] <= run.eta_prime[x]);
      CHECK(run.base.eta_bar[x] <= run.eta_bar_prime[x]);
    }
  }
}

TEST_CASE("coupling CSV layout") {
  std::ostringstream os;
  write_coupling_csv_header(os);
  CHECK(os.str() == "replica,t,epsilon,domination_ok,unmet_fraction,unmatchable_epochs,b_event\n");
}
