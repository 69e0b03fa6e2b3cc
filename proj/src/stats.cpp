#include "zrplab/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "zrplab/errors.hpp"

namespace zrp {

double normal_two_sided(double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal(), 0.5 + level / 2.0);
}

double normal_upper(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  return boost::math::quantile(boost::math::complement(boost::math::normal(), alpha));
}

Interval wilson_interval(std::uint64_t successes, std::uint64_t n, double level) {
  if (n == 0) return {0.0, 1.0};
  const double z = normal_two_sided(level);
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double denom = 1.0 + z * z / nn;
  const double centre = (p + z * z / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z * z / (4.0 * nn * nn)) / denom;
  // Clamp so that the interval always contains p despite rounding.
  return {std::min(p, std::max(0.0, centre - half)), std::max(p, std::min(1.0, centre + half))};
}

MeanSe mean_se(std::span<const double> xs) {
  MeanSe out;
  out.n = xs.size();
  if (xs.empty()) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  out.se = out.sd / std::sqrt(static_cast<double>(xs.size()));
  return out;
}

Interval bootstrap_interval(std::size_t n, const std::function<double(std::span<const std::size_t>)>& stat,
                            int resamples, double level, Stream& rng) {
  if (n == 0 || resamples < 2) throw ConfigError("bootstrap needs a non-empty sample and >= 2 resamples");
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(resamples));
  std::vector<std::size_t> idx(n);
  for (int r = 0; r < resamples; ++r) {
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
    values.push_back(stat(idx));
  }
  std::sort(values.begin(), values.end());
  const double a = (1.0 - level) / 2.0;
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {at(a), at(1.0 - a)};
}

ChiSquare chi_square_gof(std::span<const std::uint64_t> observed, std::span<const double> probs,
                         double min_expected) {
  if (observed.size() != probs.size() || observed.empty()) throw ConfigError("chi-square needs matching bins");
  std::uint64_t total = 0;
  for (auto o : observed) total += o;
  const double n = static_cast<double>(total);
  // Merge the upper tail into the last bin that still has enough mass.
  std::vector<double> obs(observed.begin(), observed.end());
  std::vector<double> exp(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) exp[i] = probs[i] * n;
  while (exp.size() > 1 && exp.back() < min_expected) {
    exp[exp.size() - 2] += exp.back();
    obs[obs.size() - 2] += obs.back();
    exp.pop_back();
    obs.pop_back();
  }
  // And the lower tail.
  std::size_t first = 0;
  while (exp.size() - first > 1 && exp[first] < min_expected) {
    exp[first + 1] += exp[first];
    obs[first + 1] += obs[first];
    ++first;
  }
  ChiSquare out;
  for (std::size_t i = first; i < exp.size(); ++i)
    if (exp[i] > 0.0) out.statistic += (obs[i] - exp[i]) * (obs[i] - exp[i]) / exp[i];
  out.dof = static_cast<long>(exp.size() - first) - 1;
  if (out.dof < 1) return out;
  out.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(static_cast<double>(out.dof)),
                                                         out.statistic));
  return out;
}

TrendResult non_increasing_trend(std::span<const TrendPoint> pts, double alpha) {
  TrendResult out;
  const double crit = normal_upper(alpha);
  for (std::size_t j = 0; j + 1 < pts.size(); ++j) {
    const double diff = pts[j + 1].value - pts[j].value;
    const double se = std::sqrt(pts[j].se * pts[j].se + pts[j + 1].se * pts[j + 1].se);
    double z;
    if (se > 0.0)
      z = diff / se;
    else
      z = diff > 0.0 ? INFINITY : (diff < 0.0 ? -INFINITY : 0.0);
    out.z.push_back(z);
    if (z > crit) out.non_increasing = false;
  }
  return out;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("line fit needs >= 2 matching points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double d = n * sxx - sx * sx;
  if (d == 0.0) throw ConfigError("line fit needs distinct x values");
  LineFit f;
  f.slope = (n * sxy - sx * sy) / d;
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

}  // namespace zrp
