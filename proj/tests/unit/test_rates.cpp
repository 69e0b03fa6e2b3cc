#include <catch_amalgamated.hpp>
#include <cmath>

#include "test_support.hpp"
#include "zrplab/errors.hpp"
#include "zrplab/rates.hpp"
#include "zrplab/stats.hpp"

using namespace zrp;
using Catch::Approx;

TEST_CASE("validation accepts certified tables and rejects bad increments") {
  std::vector<double> lin(51);
  for (std::size_t k = 0; k < lin.size(); ++k) lin[k] = static_cast<double>(k);
  CHECK_NOTHROW(RateFunction::validate(lin, 1.0, 1.0));
  CHECK_NOTHROW(RateFunction::validate({0.0, 1.0, 2.4, 3.1}, 0.5, 1.5));

  try {
    RateFunction::validate({0.0, 1.0, 1.0, 1.0}, 0.5, 1.5);
    FAIL("expected IncrementViolation");
  } catch (const IncrementViolation& e) {
    CHECK(e.k() == 2);
  }
  CHECK_THROWS_AS(RateFunction::validate({0.5, 1.0}, 0.5, 1.5), NonzeroAtZero);
  // A tail slope outside the bounds is an increment violation past k_max.
  CHECK_THROWS_AS(RateFunction::validate({0.0, 1.0}, 0.5, 1.5, 3.0), IncrementViolation);
}

TEST_CASE("tail rule extends the table affinely, or overflows when disabled") {
  const auto g = test::bumpy_rate();
  CHECK(g(3) == Approx(3.1));
  CHECK(g(5) == Approx(5.1));
  const auto no_tail = RateFunction::validate({0.0, 1.0, 2.0}, 0.5, 1.5, std::nullopt);
  CHECK(no_tail(2) == 2.0);
  CHECK_THROWS_AS(no_tail(3), TableOverflow);
}

TEST_CASE("rate functions load from JSON text") {
  const auto g = rate_function_from_json_text(
      R"({"table": [[0, 0], [1, 1], [2, 2.4], [3, 3.1]], "gamma_minus": 0.5, "gamma_plus": 1.5, "gamma_tail": 1.0})");
  CHECK(g(2) == Approx(2.4));
  CHECK(g.gamma_plus() == 1.5);
  CHECK(g.digest() == test::bumpy_rate().digest());
  const auto lin = rate_function_from_json_text(R"({"kind": "linear", "scale": 2.0})");
  CHECK(lin(3) == Approx(6.0));
  CHECK_THROWS_AS(rate_function_from_json_text(R"({"table": [[0, 1]], "gamma_minus": 1, "gamma_plus": 1})"),
                  NonzeroAtZero);
}

TEST_CASE("partition function closed forms") {
  const auto lin = RateFunction::linear();
  CHECK(partition_function(lin, 0.0) == 1.0);
  CHECK(partition_function(lin, 1.3) == Approx(std::exp(1.3)).epsilon(1e-12));
  CHECK(partition_function(RateFunction::linear(2.0), 2.0) == Approx(std::exp(1.0)).epsilon(1e-12));
}

TEST_CASE("density map and its inverse") {
  const auto lin = RateFunction::linear();
  CHECK(density_of_fugacity(lin, 1.0) == Approx(1.0).epsilon(1e-12));
  CHECK(density_of_fugacity(test::bumpy_rate(), 0.0) == 0.0);
  CHECK(fugacity_of_density(lin, 2.5) == Approx(2.5).epsilon(1e-9));

  const auto g = test::bumpy_rate();
  for (double rho = 0.1; rho <= 5.0001; rho += 0.1) {
    const double phi = fugacity_of_density(g, rho);
    CHECK(std::abs(density_of_fugacity(g, phi) - rho) <= 2e-10);
  }
}

TEST_CASE("property: Z and R are increasing in phi for random certified rates") {
  test::Gen gen(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = gen.rate();
    double prev_z = 0.0, prev_r = -1.0;
    for (double phi = 0.0; phi <= 4.0; phi += 0.25) {
      const double z = partition_function(g, phi);
      const double r = density_of_fugacity(g, phi);
      CHECK(z >= 1.0);
      CHECK(z > prev_z);
      CHECK(r > prev_r);
      prev_z = z;
      prev_r = r;
    }
  }
}

TEST_CASE("property: random increments inside the bounds certify, one outside does not") {
  test::Gen gen(12);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> t{0.0};
    const long k = gen.integer(2, 12);
    for (long i = 1; i <= k; ++i) t.push_back(t.back() + gen.real(0.5, 1.5));
    CHECK_NOTHROW(RateFunction::validate(t, 0.5, 1.5));
    const long bad = gen.integer(1, k);
    const double shift = gen.coin() ? 0.6 : -0.6;
    for (long i = bad; i <= k; ++i) t[static_cast<std::size_t>(i)] += shift;
    // Moving the tail from `bad` on changes only that increment.
    const double inc = t[static_cast<std::size_t>(bad)] - t[static_cast<std::size_t>(bad - 1)];
    if (inc < 0.5 || inc > 1.5) {
      try {
        RateFunction::validate(t, 0.5, 1.5);
        FAIL("expected IncrementViolation");
      } catch (const IncrementViolation& e) {
        CHECK(e.k() == bad);
      }
    }
  }
}

TEST_CASE("marginal sampler matches Poisson for the linear rate") {
  const auto lin = RateFunction::linear();
  const MarginalSampler s(lin, 1.0);
  // phi is recovered by bisection to 1e-10, so the pmf agrees to about k 1e-10.
  for (long k = 0; k < 15; ++k) CHECK(s.pmf(k) == Approx(test::poisson_pmf(1.0, k)).epsilon(1e-8));
  CHECK(s.tail(0) == Approx(1.0));
  CHECK(s.tail(2) == Approx(1.0 - test::poisson_pmf(1.0, 0) - test::poisson_pmf(1.0, 1)).epsilon(1e-8));

  Stream rng(SeedPath{5, 0}, StreamTag::Auxiliary, 0);
  std::vector<std::uint64_t> obs(20, 0);
  std::vector<double> probs(20);
  for (long k = 0; k < 20; ++k) probs[static_cast<std::size_t>(k)] = test::poisson_pmf(1.0, k);
  double tail = 1.0;
  for (double p : probs) tail -= p;
  probs.back() += tail;
  for (int i = 0; i < 200000; ++i) ++obs[static_cast<std::size_t>(std::min(19L, s.sample(rng)))];
  CHECK(chi_square_gof(obs, probs).p_value > 0.001);
}

TEST_CASE("sampler edge cases and conditioned draws") {
  const auto g = test::bumpy_rate();
  Stream rng(SeedPath{6, 0}, StreamTag::Auxiliary, 0);
  const MarginalSampler zero(g, 0.0);
  for (int i = 0; i < 100; ++i) CHECK(zero.sample(rng) == 0);

  const MarginalSampler s(g, 0.7);
  std::vector<double> xs;
  for (int i = 0; i < 100000; ++i) xs.push_back(static_cast<double>(s.sample(rng)));
  const auto m = mean_se(xs);
  CHECK(std::abs(m.mean - 0.7) <= 3.0 * m.se);

  // Conditioned on X >= 1: the law is pmf(k) / tail(1).
  std::vector<std::uint64_t> obs(8, 0);
  std::vector<double> probs(8);
  for (long k = 1; k < 8; ++k) probs[static_cast<std::size_t>(k)] = s.pmf(k) / s.tail(1);
  probs[7] = s.tail(7) / s.tail(1);
  for (int i = 0; i < 100000; ++i) {
    const long k = s.sample_at_least(rng, 1);
    REQUIRE(k >= 1);
    ++obs[static_cast<std::size_t>(std::min(7L, k))];
  }
  std::vector<std::uint64_t> o(obs.begin() + 1, obs.end());
  std::vector<double> p(probs.begin() + 1, probs.end());
  CHECK(chi_square_gof(o, p).p_value > 0.001);
}

TEST_CASE("Chernoff bound agrees with the closed-form Poisson value") {
  const auto lin = RateFunction::linear();
  for (double eps : {0.25, 0.5, 1.0})
    for (long n : {50L, 100L, 200L}) {
      const auto b = chernoff_bounds(lin, 1.0, eps, n);
      // min over lambda of exp(n (e^l - 1 - l (1 + eps))) is attained at l = log(1 + eps).
      const double a = 1.0 + eps;
      const double closed = std::exp(static_cast<double>(n) * (a - 1.0 - a * std::log(a)));
      CHECK(b.bound_upper == Approx(closed).epsilon(1e-6));
      CHECK(b.bound_upper <= 1.0);
      CHECK(b.bound_lower <= 1.0);
      CHECK(b.bound_lower > 0.0);
    }
}

TEST_CASE("large-deviation constant satisfies its defining inequality") {
  const auto g = test::bumpy_rate();
  const auto b = chernoff_bounds(g, 1.0, 0.5, 100);
  REQUIRE(b.c_ld > 0.0);
  for (double rho = 0.05; rho <= 1.0; rho += 0.05) {
    const double phi = fugacity_of_density(g, rho);
    const double lhs = partition_function(g, std::exp(1.0) * phi) / partition_function(g, phi) *
                       std::exp(-b.c_ld * rho);
    CHECK(lhs <= 1.0 + 1e-9);
  }
}

TEST_CASE("invalid Chernoff inputs are rejected") {
  const auto lin = RateFunction::linear();
  CHECK_THROWS_AS(chernoff_bounds(lin, 1.0, 0.0, 10), ConfigError);
  CHECK_THROWS_AS(chernoff_bounds(lin, 1.0, 1.5, 10), ConfigError);
  CHECK_THROWS_AS(chernoff_bounds(lin, 1.0, 0.5, 0), ConfigError);
}
