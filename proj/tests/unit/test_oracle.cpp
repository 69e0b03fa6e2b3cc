#include <catch_amalgamated.hpp>
#include <cmath>
#include <map>

#include "test_support.hpp"
#include "zrplab/errors.hpp"
#include "zrplab/oracle.hpp"

using namespace zrp;
using Catch::Approx;

namespace {

// Independent enumeration: all occupancy vectors with the given sum, by recursion.
void enumerate(long sites, long left, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (static_cast<long>(cur.size()) == sites - 1) {
    cur.push_back(static_cast<int>(left));
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (long k = 0; k <= left; ++k) {
    cur.push_back(static_cast<int>(k));
    enumerate(sites, left - k, cur, out);
    cur.pop_back();
  }
}

struct Dense {
  std::vector<std::vector<int>> states;
  std::map<std::vector<int>, std::size_t> index;
  std::vector<std::vector<double>> q;
};

Dense dense_generator(const RateFunction& g, long n, long m) {
  Dense d;
  std::vector<int> cur;
  enumerate(n, m, cur, d.states);
  for (std::size_t i = 0; i < d.states.size(); ++i) d.index[d.states[i]] = i;
  d.q.assign(d.states.size(), std::vector<double>(d.states.size(), 0.0));
  for (std::size_t i = 0; i < d.states.size(); ++i) {
    const auto& eta = d.states[i];
    for (long x = 0; x < n; ++x) {
      if (eta[static_cast<std::size_t>(x)] == 0) continue;
      for (long h : {-1L, 1L}) {
        auto to = eta;
        --to[static_cast<std::size_t>(x)];
        ++to[static_cast<std::size_t>(((x + h) % n + n) % n)];
        const double r = 0.5 * g(eta[static_cast<std::size_t>(x)]);
        d.q[i][d.index.at(to)] += r;
        d.q[i][i] -= r;
      }
    }
  }
  return d;
}

// Row vector p exp(Q t) by classical RK4 with a fine step.
std::vector<double> rk4(const Dense& d, std::vector<double> p, double t, int steps) {
  const double h = t / steps;
  const std::size_t s = p.size();
  auto f = [&](const std::vector<double>& v) {
    std::vector<double> out(s, 0.0);
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j) out[j] += v[i] * d.q[i][j];
    return out;
  };
  for (int k = 0; k < steps; ++k) {
    auto k1 = f(p);
    std::vector<double> tmp(s);
    for (std::size_t i = 0; i < s; ++i) tmp[i] = p[i] + 0.5 * h * k1[i];
    auto k2 = f(tmp);
    for (std::size_t i = 0; i < s; ++i) tmp[i] = p[i] + 0.5 * h * k2[i];
    auto k3 = f(tmp);
    for (std::size_t i = 0; i < s; ++i) tmp[i] = p[i] + h * k3[i];
    auto k4 = f(tmp);
    for (std::size_t i = 0; i < s; ++i) p[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  return p;
}

double log_factorial_g(const RateFunction& g, int k) {
  double s = 0.0;
  for (int i = 1; i <= k; ++i) s += std::log(g(i));
  return s;
}

}  // namespace

TEST_CASE("smallest torus: one particle on two sites") {
  const auto q = build_generator(RateFunction::linear(), 2, 1);
  REQUIRE(q.space.size() == 2);
  CHECK(q.diag[0] == Approx(-1.0));
  CHECK(q.diag[1] == Approx(-1.0));
  CHECK(q.entry(0, 1) == Approx(1.0));
  CHECK(q.max_exit_rate() == Approx(1.0));
}

TEST_CASE("generator matches an independent dense construction") {
  for (const auto& g : {RateFunction::linear(), test::bumpy_rate()})
    for (auto [n, m] : {std::pair{3L, 2L}, std::pair{4L, 3L}, std::pair{5L, 3L}}) {
      const auto q = build_generator(g, n, m);
      const auto d = dense_generator(g, n, m);
      REQUIRE(q.space.size() == static_cast<long>(d.states.size()));
      CHECK(static_cast<double>(q.space.size()) == composition_count(n, m));
      for (long i = 0; i < q.space.size(); ++i) {
        const auto si = q.space.state(i);
        CHECK(q.space.index(si) == i);
        const auto di = d.index.at(si);
        double row = q.diag[static_cast<std::size_t>(i)];
        for (long j = 0; j < q.space.size(); ++j) {
          const auto dj = d.index.at(q.space.state(j));
          CHECK(q.entry(i, j) == Approx(d.q[di][dj]).margin(1e-14));
          if (j != i) row += q.entry(i, j);
        }
        CHECK(std::abs(row) <= 1e-12);
      }
    }
  CHECK(composition_count(3, 2) == 6.0);
}

TEST_CASE("canonical measure is stationary, a perturbed one is not") {
  for (const auto& g : {RateFunction::linear(), test::bumpy_rate()})
    for (auto [n, m] : {std::pair{3L, 2L}, std::pair{4L, 3L}, std::pair{5L, 3L}}) {
      CHECK(check_canonical_stationarity(g, n, m) <= 1e-12);
      const auto q = build_generator(g, n, m);
      auto w = canonical_weights(g, q.space);
      // Independent weights.
      double z = 0.0;
      std::vector<double> ref(w.size());
      for (long i = 0; i < q.space.size(); ++i) {
        double lw = 0.0;
        for (int k : q.space.state(i)) lw -= log_factorial_g(g, k);
        ref[static_cast<std::size_t>(i)] = std::exp(lw);
        z += ref[static_cast<std::size_t>(i)];
      }
      for (std::size_t i = 0; i < w.size(); ++i) CHECK(w[i] == Approx(ref[i] / z).epsilon(1e-12));
      w[0] *= 1.5;
      CHECK(stationarity_residual(q, w) > 1e-3);
    }
}

TEST_CASE("property: random certified rates have zero canonical residual") {
  test::Gen gen(101);
  for (int trial = 0; trial < 40; ++trial) {
    const auto g = gen.rate();
    const long n = gen.integer(2, 5);
    const long m = gen.integer(1, 4);
    CHECK(check_canonical_stationarity(g, n, m) <= 1e-12);
  }
}

TEST_CASE("transient laws") {
  const auto g = test::bumpy_rate();
  const auto q = build_generator(g, 4, 3);
  const auto d = dense_generator(g, 4, 3);
  std::vector<double> init(static_cast<std::size_t>(q.space.size()), 0.0);
  init[static_cast<std::size_t>(q.space.index({3, 0, 0, 0}))] = 1.0;

  CHECK(transient_distribution(q, init, 0.0) == init);

  // Against RK4 on the dense generator, in the dense state order.
  const auto p1 = transient_distribution(q, init, 1.0, 1e-13);
  std::vector<double> dinit(d.states.size(), 0.0);
  dinit[d.index.at({3, 0, 0, 0})] = 1.0;
  const auto r1 = rk4(d, dinit, 1.0, 4000);
  double sum = 0.0;
  for (long i = 0; i < q.space.size(); ++i) {
    const double v = p1[static_cast<std::size_t>(i)];
    CHECK(v >= 0.0);
    sum += v;
    CHECK(v == Approx(r1[d.index.at(q.space.state(i))]).margin(1e-10));
  }
  CHECK(sum == Approx(1.0).margin(1e-10));

  const auto p50 = transient_distribution(q, init, 50.0);
  CHECK(total_variation(p50, canonical_weights(g, q.space)) <= 1e-6);
}

TEST_CASE("total variation and caps") {
  CHECK(total_variation({0.5, 0.5}, {1.0, 0.0}) == Approx(0.5));
  CHECK(total_variation({0.2, 0.8}, {0.2, 0.8}) == 0.0);
  CHECK_THROWS_AS(StateSpace(20, 20, 1000), StateSpaceTooLarge);
  CHECK_THROWS_AS(build_generator(RateFunction::linear(), 20, 20, 1000), StateSpaceTooLarge);
  const StateSpace s(3, 2);
  CHECK(s.index({1, 1, 1}) == -1);
}
