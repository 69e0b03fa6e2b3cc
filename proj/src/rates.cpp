#include "zrplab/rates.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "zrplab/digest.hpp"
#include "zrplab/errors.hpp"

namespace zrp {

namespace {

constexpr double kIncrementSlack = 1e-12;

bool within(double v, double lo, double hi) {
  const double slack = kIncrementSlack * std::max({1.0, std::abs(lo), std::abs(hi)});
  return v >= lo - slack && v <= hi + slack;
}

}  // namespace

RateFunction RateFunction::validate(std::vector<double> table, double gamma_minus, double gamma_plus,
                                    std::optional<double> gamma_tail) {
  if (table.empty()) throw ConfigError("rate table must contain at least g(0)");
  if (!(gamma_minus > 0.0) || !(gamma_plus > 0.0))
    throw ConfigError("gamma_minus and gamma_plus must be positive");
  if (gamma_minus > 1.0 || gamma_plus < 1.0)
    throw ConfigError("rate bounds must satisfy gamma_minus <= 1 <= gamma_plus");
  if (table[0] != 0.0) throw NonzeroAtZero();
  for (std::size_t k = 1; k < table.size(); ++k) {
    const double inc = table[k] - table[k - 1];
    if (!std::isfinite(inc) || !within(inc, gamma_minus, gamma_plus))
      throw IncrementViolation(static_cast<long>(k), inc);
  }
  if (gamma_tail && (!std::isfinite(*gamma_tail) || !within(*gamma_tail, gamma_minus, gamma_plus)))
    throw IncrementViolation(static_cast<long>(table.size()), *gamma_tail);

  RateFunction r;
  r.table_ = std::move(table);
  r.gamma_minus_ = gamma_minus;
  r.gamma_plus_ = gamma_plus;
  r.gamma_tail_ = gamma_tail;
  r.acceptance_.assign(r.table_.size(), 0.0);
  for (std::size_t k = 1; k < r.table_.size(); ++k)
    r.acceptance_[k] = (r.table_[k] - r.table_[k - 1]) / gamma_plus;
  return r;
}

RateFunction RateFunction::linear(double scale) {
  if (!(scale > 0.0)) throw ConfigError("linear rate scale must be positive");
  return validate({0.0, scale}, std::min(scale, 1.0), std::max(scale, 1.0), scale);
}

double RateFunction::operator()(long k) const {
  if (k <= 0) return 0.0;
  const long km = k_max();
  if (k <= km) return table_[static_cast<std::size_t>(k)];
  if (!gamma_tail_)
    throw TableOverflow("occupancy " + std::to_string(k) + " exceeds rate table k_max = " +
                        std::to_string(km) + " and no tail rule is configured");
  return table_.back() + static_cast<double>(k - km) * *gamma_tail_;
}

std::uint64_t RateFunction::digest() const noexcept {
  Fnv1a h;
  for (double v : table_) h.update(v);
  h.update(gamma_minus_);
  h.update(gamma_plus_);
  h.update(gamma_tail_ ? *gamma_tail_ : -1.0);
  return h.value();
}

std::string RateFunction::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "g table k<=" << k_max() << ", gamma_minus=" << gamma_minus_ << ", gamma_plus=" << gamma_plus_;
  if (gamma_tail_)
    os << ", tail slope " << *gamma_tail_;
  else
    os << ", no tail";
  return os.str();
}

RateFunction rate_function_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("rate file is not valid JSON: ") + e.what());
  }
  try {
    if (j.contains("kind")) {
      const auto kind = j.at("kind").get<std::string>();
      if (kind != "linear") throw ConfigError("unknown rate kind '" + kind + "'");
      return RateFunction::linear(j.value("scale", 1.0));
    }
    if (!j.contains("table")) throw ConfigError("rate: missing 'table' or 'kind'");
    std::vector<std::pair<long, double>> pairs;
    for (const auto& row : j.at("table")) {
      if (!row.is_array() || row.size() != 2) throw ConfigError("rate.table rows must be [k, g(k)]");
      pairs.emplace_back(row[0].get<long>(), row[1].get<double>());
    }
    std::sort(pairs.begin(), pairs.end());
    std::vector<double> table;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (pairs[i].first != static_cast<long>(i))
        throw ConfigError("rate.table must cover occupancies 0..k_max without gaps");
      table.push_back(pairs[i].second);
    }
    if (!j.contains("gamma_minus") || !j.contains("gamma_plus"))
      throw ConfigError("rate: gamma_minus and gamma_plus are required");
    std::optional<double> tail = 1.0;
    if (j.contains("gamma_tail")) {
      if (j.at("gamma_tail").is_null())
        tail.reset();
      else
        tail = j.at("gamma_tail").get<double>();
    }
    return RateFunction::validate(std::move(table), j.at("gamma_minus").get<double>(),
                                  j.at("gamma_plus").get<double>(), tail);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("rate file: ") + e.what());
  }
}

RateFunction load_rate_function(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open rate file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return rate_function_from_json_text(ss.str());
}

SeriesSums partition_sums(const RateFunction& rate, double phi, double tol) {
  if (!(phi >= 0.0) || !std::isfinite(phi)) throw ConfigError("fugacity must be finite and >= 0");
  if (!(tol > 0.0)) throw ConfigError("series tolerance must be positive");
  SeriesSums s;
  if (phi == 0.0) return s;

  // b_k = x^k / k! dominates the k-th term with x = phi / gamma_minus.
  const double x = phi / rate.gamma_minus();
  double term = 1.0, b = 1.0, b_prev = 0.0;
  for (long k = 1; k <= kSeriesHardCap; ++k) {
    term *= phi / rate(k);
    b_prev = b;
    b *= x / static_cast<double>(k);
    const double kd = static_cast<double>(k);
    s.z += term;
    s.z1 += kd * term;
    s.z2 += kd * kd * term;
    s.terms = k + 1;
    if (kd + 2.0 > x) {
      // Tail sums over j > k of b_j, j b_j and j^2 b_j.
      const double r0 = b * (x / (kd + 1.0)) / (1.0 - x / (kd + 2.0));
      const double r1 = x * (b + r0);
      const double r2 = x * (x * (b_prev + b + r0) + b + r0);
      if (r0 <= tol && r1 <= tol && r2 <= tol * std::max(1.0, s.z2)) return s;
    }
  }
  throw ToleranceUnreachable("partition series at phi = " + std::to_string(phi) +
                             " needs more than " + std::to_string(kSeriesHardCap) + " terms");
}

double partition_function(const RateFunction& rate, double phi, double tol) {
  return partition_sums(rate, phi, tol).z;
}

double density_of_fugacity(const RateFunction& rate, double phi, double tol) {
  const auto s = partition_sums(rate, phi, tol);
  return s.z1 / s.z;
}

double fugacity_of_density(const RateFunction& rate, double rho, double tol, double fugacity_cap) {
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw ConfigError("density must be finite and >= 0");
  if (!(tol > 0.0)) throw ConfigError("tolerance must be positive");
  if (rho == 0.0) return 0.0;
  const double series_tol = std::min(kDefaultSeriesTol, tol * 1e-3);
  auto R = [&](double phi) { return density_of_fugacity(rate, phi, series_tol); };

  double lo = 0.0, hi = 1.0;
  while (R(hi) < rho) {
    lo = hi;
    hi *= 2.0;
    if (hi > fugacity_cap)
      throw BracketFailure("no fugacity below cap " + std::to_string(fugacity_cap) +
                           " reaches density " + std::to_string(rho));
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r = R(mid);
    if (std::abs(r - rho) <= 0.25 * tol) return mid;
    if (r < rho)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
  }
  return 0.5 * (lo + hi);
}

FugacityDensityPair fugacity_density_pair(const RateFunction& rate, double rho, double tol) {
  FugacityDensityPair p;
  p.phi = fugacity_of_density(rate, rho, tol);
  const auto s = partition_sums(rate, p.phi, kDefaultSeriesTol);
  p.rho = s.z1 / s.z;
  p.z = s.z;
  p.tolerance = tol;
  return p;
}

MarginalSampler::MarginalSampler(const RateFunction& rate, double rho)
    : rho_(rho), phi_(fugacity_of_density(rate, rho)) {
  if (phi_ == 0.0) {
    pmf_ = {1.0};
    cdf_ = {1.0};
    return;
  }
  // Unnormalised terms until the certified tail is negligible in double
  // precision relative to the running total.
  const double x = phi_ / rate.gamma_minus();
  std::vector<double> terms{1.0};
  double term = 1.0, b = 1.0, total = 1.0;
  for (long k = 1;; ++k) {
    if (k > kSeriesHardCap)
      throw ToleranceUnreachable("marginal table at rho = " + std::to_string(rho) + " too long");
    term *= phi_ / rate(k);
    b *= x / static_cast<double>(k);
    terms.push_back(term);
    total += term;
    const double kd = static_cast<double>(k);
    if (kd + 2.0 > x) {
      const double r0 = b * (x / (kd + 1.0)) / (1.0 - x / (kd + 2.0));
      if (r0 <= 1e-18 * total) break;
    }
  }
  pmf_.resize(terms.size());
  cdf_.resize(terms.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    pmf_[k] = terms[k] / total;
    acc += pmf_[k];
    cdf_[k] = acc;
  }
  cdf_.back() = 1.0;
}

double MarginalSampler::pmf(long k) const {
  if (k < 0 || k >= static_cast<long>(pmf_.size())) return 0.0;
  return pmf_[static_cast<std::size_t>(k)];
}

double MarginalSampler::tail(long k) const {
  if (k <= 0) return 1.0;
  double s = 0.0;
  for (long j = static_cast<long>(pmf_.size()) - 1; j >= k; --j) s += pmf_[static_cast<std::size_t>(j)];
  return s;
}

long MarginalSampler::quantile(double u) const {
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  const auto idx = std::min<std::ptrdiff_t>(it - cdf_.begin(), static_cast<std::ptrdiff_t>(cdf_.size()) - 1);
  return static_cast<long>(idx);
}

long MarginalSampler::sample_at_least(Stream& rng, long k_min) const {
  if (k_min <= 0) return sample(rng);
  if (tail(k_min) <= 0.0)
    throw SupportViolation("conditioning on an occupancy of at least " + std::to_string(k_min) +
                           " that has zero probability");
  const double lo = cdf_[static_cast<std::size_t>(k_min - 1)];
  const double u = lo + rng.uniform() * (1.0 - lo);
  return std::max(k_min, quantile(u));
}

double log_mgf(const RateFunction& rate, double phi, double lambda) {
  if (phi == 0.0) return 0.0;
  return std::log(partition_function(rate, std::exp(lambda) * phi)) -
         std::log(partition_function(rate, phi));
}

namespace {

struct Minimum {
  double lambda = 0.0;
  double value = 0.0;
};

// Minimises a convex function of lambda >= 0 with f(0) = 0: geometric grid
// of 512 points, then golden-section refinement around the best grid point.
template <class F>
Minimum minimise_convex(F f, double lambda_cap) {
  double lmax = std::min(1.0, lambda_cap);
  while (lmax < lambda_cap && f(lmax) < f(0.5 * lmax)) lmax = std::min(2.0 * lmax, lambda_cap);

  constexpr int kGrid = 512;
  std::vector<double> grid{0.0};
  const double lmin = lmax * 1e-6;
  for (int i = 0; i < kGrid; ++i)
    grid.push_back(lmin * std::pow(lmax / lmin, static_cast<double>(i) / (kGrid - 1)));
  Minimum best{0.0, 0.0};
  std::size_t best_i = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double v = f(grid[i]);
    if (v < best.value) {
      best = {grid[i], v};
      best_i = i;
    }
  }
  double a = grid[best_i == 0 ? 0 : best_i - 1];
  double b = grid[std::min(best_i + 1, grid.size() - 1)];
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, b); ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double lm = 0.5 * (a + b);
  const double vm = f(lm);
  if (vm < best.value) best = {lm, vm};
  return best;
}

}  // namespace

ChernoffBound chernoff_bounds(const RateFunction& rate, double rho, double epsilon, long n) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in (0, 1]");
  if (n < 1) throw ConfigError("sample count n must be >= 1");
  if (!(rho >= 0.0)) throw ConfigError("density must be >= 0");
  ChernoffBound out;
  out.rho = rho;
  out.epsilon = epsilon;
  out.n = n;
  const double nd = static_cast<double>(n);
  const double phi = fugacity_of_density(rate, rho);
  out.c_ld = large_deviation_constant(rate, std::max(rho, 1e-3));

  auto exponent = [&](double bound) {
    return bound > 0.0 ? -std::log(bound) / (epsilon * epsilon * nd)
                       : std::numeric_limits<double>::infinity();
  };

  if (phi == 0.0) {
    // X = 0 almost surely: both deviation events are empty.
    out.bound_upper = 0.0;
    out.bound_lower = 0.0;
    out.exponent_upper = exponent(0.0);
    out.exponent_lower = exponent(0.0);
    return out;
  }

  const double log_z = std::log(partition_function(rate, phi));
  auto up = [&](double l) {
    return std::log(partition_function(rate, std::exp(l) * phi)) - log_z - l * (rho + epsilon);
  };
  const double up_cap = std::log(kDefaultFugacityCap / phi);
  const auto mu = minimise_convex(up, std::max(up_cap, 1e-6));
  out.lambda_upper = mu.lambda;
  out.bound_upper = std::min(1.0, std::exp(nd * mu.value));
  out.exponent_upper = exponent(out.bound_upper);

  const double lower_target = rho - epsilon;
  if (lower_target < 0.0) {
    out.bound_lower = 0.0;
  } else if (lower_target == 0.0) {
    out.bound_lower = std::exp(-nd * log_z);  // P[all X = 0]
    out.lambda_lower = std::numeric_limits<double>::infinity();
  } else {
    auto lo = [&](double l) {
      return std::log(partition_function(rate, std::exp(-l) * phi)) - log_z + l * lower_target;
    };
    const auto ml = minimise_convex(lo, 700.0);
    out.lambda_lower = ml.lambda;
    out.bound_lower = std::min(1.0, std::exp(nd * ml.value));
  }
  out.exponent_lower = exponent(out.bound_lower);
  return out;
}

double large_deviation_constant(const RateFunction& rate, double rho_max) {
  if (!(rho_max > 0.0)) throw ConfigError("large-deviation density range must be positive");
  double c = 0.0;
  for (int i = 1; i <= 64; ++i) {
    const double rho = rho_max * i / 64.0;
    const double phi = fugacity_of_density(rate, rho);
    const double ratio = std::log(partition_function(rate, std::exp(1.0) * phi)) -
                         std::log(partition_function(rate, phi));
    c = std::max(c, ratio / rho);
  }
  return c * (1.0 + 1e-3);
}

}  // namespace zrp
