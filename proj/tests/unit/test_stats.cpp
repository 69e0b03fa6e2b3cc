#include <catch_amalgamated.hpp>
#include <cmath>

#include "test_support.hpp"
#include "zrplab/errors.hpp"
#include "zrplab/stats.hpp"

using namespace zrp;
using Catch::Approx;

TEST_CASE("normal quantiles") {
  CHECK(normal_two_sided(0.95) == Approx(1.959963985).epsilon(1e-8));
  CHECK(normal_upper(0.05) == Approx(1.644853627).epsilon(1e-8));
  CHECK_THROWS_AS(normal_two_sided(1.0), ConfigError);
}

TEST_CASE("Wilson interval reference values") {
  // Zero successes: upper end z^2 / (n + z^2).
  const double z2 = 1.959963985 * 1.959963985;
  const auto zero = wilson_interval(0, 10);
  CHECK(zero.lo == 0.0);
  CHECK(zero.hi == Approx(z2 / (10.0 + z2)).epsilon(1e-8));
  const auto all = wilson_interval(10, 10);
  CHECK(all.hi == 1.0);
  CHECK(all.lo == Approx(10.0 / (10.0 + z2)).epsilon(1e-8));
  // 50 of 100: centre 0.5, half-width z sqrt(0.25/100 + z^2/40000) / (1 + z^2/100).
  const auto half = wilson_interval(50, 100);
  const double hw = 1.959963985 * std::sqrt(0.0025 + z2 / 40000.0) / (1.0 + z2 / 100.0);
  CHECK(half.lo == Approx(0.5 - hw).epsilon(1e-8));
  CHECK(half.hi == Approx(0.5 + hw).epsilon(1e-8));
}

TEST_CASE("property: Wilson intervals contain the point estimate") {
  test::Gen gen(81);
  for (int i = 0; i < 2000; ++i) {
    const auto n = static_cast<std::uint64_t>(gen.integer(1, 100000));
    const auto s = static_cast<std::uint64_t>(gen.integer(0, static_cast<long>(n)));
    const auto ci = wilson_interval(s, n);
    const double p = static_cast<double>(s) / static_cast<double>(n);
    CHECK(ci.lo <= p);
    CHECK(p <= ci.hi);
    CHECK(ci.lo >= 0.0);
    CHECK(ci.hi <= 1.0);
  }
}

TEST_CASE("mean and standard error") {
  const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
  const auto m = mean_se(xs);
  CHECK(m.mean == 2.5);
  CHECK(m.sd == Approx(std::sqrt(5.0 / 3.0)));
  CHECK(m.se == Approx(std::sqrt(5.0 / 3.0) / 2.0));
}

TEST_CASE("chi-square reference p-values") {
  // Two equiprobable bins, 60 vs 40 of 100: statistic 4, dof 1, p = 0.0455.
  const std::vector<std::uint64_t> obs{60, 40};
  const std::vector<double> probs{0.5, 0.5};
  const auto c = chi_square_gof(obs, probs);
  CHECK(c.statistic == Approx(4.0));
  CHECK(c.dof == 1);
  CHECK(c.p_value == Approx(0.0455003).epsilon(1e-5));
  // Sparse top bins are merged until the last bin has expected count >= 5.
  const std::vector<std::uint64_t> obs2{50, 48, 1, 1};
  const std::vector<double> probs2{0.5, 0.48, 0.01, 0.01};
  const auto merged = chi_square_gof(obs2, probs2);
  CHECK(merged.dof == 1);
  CHECK(merged.statistic == Approx(0.0));
  const std::vector<std::uint64_t> obs3{40, 40, 10, 10};
  const std::vector<double> probs3{0.4, 0.4, 0.1, 0.1};
  CHECK(chi_square_gof(obs3, probs3).dof == 3);
}

TEST_CASE("trend test") {
  const std::vector<TrendPoint> down{{0.5, 0.01}, {0.3, 0.01}, {0.1, 0.01}};
  CHECK(non_increasing_trend(down).non_increasing);
  const std::vector<TrendPoint> flat{{0.3, 0.05}, {0.32, 0.05}};
  CHECK(non_increasing_trend(flat).non_increasing);
  const std::vector<TrendPoint> up{{0.1, 0.01}, {0.2, 0.01}};
  const auto r = non_increasing_trend(up);
  CHECK_FALSE(r.non_increasing);
  CHECK(r.z[0] == Approx(0.1 / std::sqrt(2e-4)));
  const std::vector<TrendPoint> exact_up{{0.0, 0.0}, {0.1, 0.0}};
  CHECK_FALSE(non_increasing_trend(exact_up).non_increasing);
}

TEST_CASE("line fit is exact on a line") {
  const std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
  const auto f = fit_line(x, y);
  CHECK(f.slope == Approx(2.0));
  CHECK(f.intercept == Approx(1.0));
  const std::vector<double> one{1};
  CHECK_THROWS_AS(fit_line(one, one), ConfigError);
}

TEST_CASE("bootstrap interval covers the mean of a symmetric sample") {
  test::Gen gen(82);
  std::vector<double> xs;
  for (int i = 0; i < 400; ++i) xs.push_back(gen.real(-1.0, 1.0));
  const auto m = mean_se(xs);
  Stream rng(SeedPath{83, 0}, StreamTag::Bootstrap, 0);
  const auto ci = bootstrap_interval(
      xs.size(),
      [&](std::span<const std::size_t> idx) {
        double s = 0.0;
        for (auto i : idx) s += xs[i];
        return s / static_cast<double>(idx.size());
      },
      1000, 0.95, rng);
  CHECK(ci.lo < m.mean);
  CHECK(m.mean < ci.hi);
  // Percentile width is close to the normal width.
  CHECK((ci.hi - ci.lo) == Approx(2.0 * 1.96 * m.se).epsilon(0.2));
}
