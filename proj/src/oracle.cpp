#include "zrplab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "zrplab/errors.hpp"

namespace zrp {

double composition_count(long n, long m) {
  // C(m + n - 1, n - 1) in floating point; only used for cap checks.
  double c = 1.0;
  for (long i = 1; i <= n - 1; ++i) c = c * static_cast<double>(m + i) / static_cast<double>(i);
  return c;
}

StateSpace::StateSpace(long sites, long particles, long cap) : sites_(sites), particles_(particles) {
  if (sites < 2) throw ConfigError("oracle needs at least 2 sites");
  if (particles < 0) throw ConfigError("particle number must be >= 0");
  if (composition_count(sites, particles) > static_cast<double>(cap))
    throw StateSpaceTooLarge("C(M+N-1, N-1) = " + std::to_string(composition_count(sites, particles)) +
                             " exceeds the state cap " + std::to_string(cap));
  if (static_cast<double>(sites) * std::log2(static_cast<double>(particles) + 1.0) > 63.0)
    throw StateSpaceTooLarge("state encoding does not fit in 64 bits");

  std::vector<int> eta(static_cast<std::size_t>(sites), 0);
  // Enumerate compositions recursively, site by site.
  auto rec = [&](auto&& self, long x, long left) -> void {
    if (x == sites - 1) {
      eta[static_cast<std::size_t>(x)] = static_cast<int>(left);
      codes_.push_back(encode(eta));
      return;
    }
    for (long k = 0; k <= left; ++k) {
      eta[static_cast<std::size_t>(x)] = static_cast<int>(k);
      self(self, x + 1, left - k);
    }
  };
  rec(rec, 0, particles);
  std::sort(codes_.begin(), codes_.end());
}

std::uint64_t StateSpace::encode(const std::vector<int>& eta) const {
  std::uint64_t c = 0;
  const auto base = static_cast<std::uint64_t>(particles_ + 1);
  for (long x = sites_ - 1; x >= 0; --x) c = c * base + static_cast<std::uint64_t>(eta[static_cast<std::size_t>(x)]);
  return c;
}

std::vector<int> StateSpace::state(long i) const {
  std::vector<int> eta(static_cast<std::size_t>(sites_));
  std::uint64_t c = codes_[static_cast<std::size_t>(i)];
  const auto base = static_cast<std::uint64_t>(particles_ + 1);
  for (long x = 0; x < sites_; ++x) {
    eta[static_cast<std::size_t>(x)] = static_cast<int>(c % base);
    c /= base;
  }
  return eta;
}

long StateSpace::index(const std::vector<int>& eta) const {
  if (static_cast<long>(eta.size()) != sites_) return -1;
  long s = 0;
  for (int v : eta) {
    if (v < 0) return -1;
    s += v;
  }
  if (s != particles_) return -1;
  const auto c = encode(eta);
  const auto it = std::lower_bound(codes_.begin(), codes_.end(), c);
  if (it == codes_.end() || *it != c) return -1;
  return static_cast<long>(it - codes_.begin());
}

double GeneratorMatrix::entry(long i, long j) const {
  if (i == j) return diag[static_cast<std::size_t>(i)];
  double v = 0.0;
  for (long p = row_ptr[static_cast<std::size_t>(i)]; p < row_ptr[static_cast<std::size_t>(i) + 1]; ++p)
    if (col[static_cast<std::size_t>(p)] == j) v += val[static_cast<std::size_t>(p)];
  return v;
}

double GeneratorMatrix::max_exit_rate() const {
  double m = 0.0;
  for (double d : diag) m = std::max(m, -d);
  return m;
}

GeneratorMatrix build_generator(const RateFunction& rate, long sites, long particles, long cap) {
  GeneratorMatrix q{StateSpace(sites, particles, cap), {}, {}, {}, {}};
  const long n = q.space.size();
  q.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  q.diag.assign(static_cast<std::size_t>(n), 0.0);
  for (long i = 0; i < n; ++i) {
    auto eta = q.space.state(i);
    // Merge moves landing on the same target (the two directions coincide
    // on a 2-torus).
    std::vector<std::pair<long, double>> row;
    double exit = 0.0;
    for (long x = 0; x < sites; ++x) {
      const int k = eta[static_cast<std::size_t>(x)];
      if (k == 0) continue;
      const double r = 0.5 * rate(k);
      for (int h : {-1, 1}) {
        const long y = ((x + h) % sites + sites) % sites;
        --eta[static_cast<std::size_t>(x)];
        ++eta[static_cast<std::size_t>(y)];
        const long j = q.space.index(eta);
        ++eta[static_cast<std::size_t>(x)];
        --eta[static_cast<std::size_t>(y)];
        row.emplace_back(j, r);
        exit += r;
      }
    }
    std::sort(row.begin(), row.end());
    for (std::size_t p = 0; p < row.size(); ++p) {
      if (!q.col.empty() && static_cast<long>(q.col.size()) > q.row_ptr[static_cast<std::size_t>(i)] &&
          q.col.back() == row[p].first) {
        q.val.back() += row[p].second;
      } else {
        q.col.push_back(row[p].first);
        q.val.push_back(row[p].second);
      }
    }
    q.row_ptr[static_cast<std::size_t>(i) + 1] = static_cast<long>(q.col.size());
    q.diag[static_cast<std::size_t>(i)] = -exit;
  }
  return q;
}

std::vector<double> canonical_weights(const RateFunction& rate, const StateSpace& space) {
  std::vector<double> log_fact(static_cast<std::size_t>(space.particles()) + 1, 0.0);
  for (long k = 1; k <= space.particles(); ++k)
    log_fact[static_cast<std::size_t>(k)] = log_fact[static_cast<std::size_t>(k) - 1] + std::log(rate(k));
  std::vector<double> w(static_cast<std::size_t>(space.size()));
  long double total = 0.0L;
  for (long i = 0; i < space.size(); ++i) {
    double lw = 0.0;
    for (int k : space.state(i)) lw -= log_fact[static_cast<std::size_t>(k)];
    w[static_cast<std::size_t>(i)] = std::exp(lw);
    total += w[static_cast<std::size_t>(i)];
  }
  for (auto& v : w) v = static_cast<double>(v / total);
  return w;
}

double stationarity_residual(const GeneratorMatrix& q, const std::vector<double>& w) {
  const long n = q.space.size();
  std::vector<long double> out(static_cast<std::size_t>(n), 0.0L);
  long double norm = 0.0L;
  for (long i = 0; i < n; ++i) {
    const long double wi = w[static_cast<std::size_t>(i)];
    norm += std::abs(wi);
    out[static_cast<std::size_t>(i)] += wi * q.diag[static_cast<std::size_t>(i)];
    for (long p = q.row_ptr[static_cast<std::size_t>(i)]; p < q.row_ptr[static_cast<std::size_t>(i) + 1]; ++p)
      out[static_cast<std::size_t>(q.col[static_cast<std::size_t>(p)])] += wi * q.val[static_cast<std::size_t>(p)];
  }
  long double m = 0.0L;
  for (auto v : out) m = std::max(m, std::abs(v));
  return static_cast<double>(m / norm);
}

double check_canonical_stationarity(const RateFunction& rate, long sites, long particles, long cap) {
  const auto q = build_generator(rate, sites, particles, cap);
  return stationarity_residual(q, canonical_weights(rate, q.space));
}

std::vector<double> transient_distribution(const GeneratorMatrix& q, const std::vector<double>& initial,
                                           double t, double tol) {
  const long n = q.space.size();
  if (static_cast<long>(initial.size()) != n) throw ConfigError("initial distribution has wrong length");
  if (!(t >= 0.0)) throw ConfigError("time must be >= 0");
  if (!(tol > 0.0)) throw ConfigError("tolerance must be positive");
  std::vector<double> v = initial;
  const double lambda = q.max_exit_rate();
  if (t == 0.0 || lambda == 0.0) return v;

  // Chunks with lambda * dt <= 50 keep the Poisson weights away from underflow.
  const long chunks = std::max(1L, static_cast<long>(std::ceil(lambda * t / 50.0)));
  const double dt = t / static_cast<double>(chunks);
  const double a = lambda * dt;
  const double chunk_tol = tol / static_cast<double>(chunks);

  std::vector<double> term(static_cast<std::size_t>(n)), next(static_cast<std::size_t>(n)),
      acc(static_cast<std::size_t>(n));
  for (long c = 0; c < chunks; ++c) {
    term = v;
    double weight = std::exp(-a);
    double mass = weight;
    for (long i = 0; i < n; ++i) acc[static_cast<std::size_t>(i)] = weight * term[static_cast<std::size_t>(i)];
    for (long k = 1; 1.0 - mass > chunk_tol; ++k) {
      if (k > 100000) throw ToleranceUnreachable("uniformization did not converge");
      // next = term * (I + Q / lambda)
      for (long i = 0; i < n; ++i)
        next[static_cast<std::size_t>(i)] =
            term[static_cast<std::size_t>(i)] * (1.0 + q.diag[static_cast<std::size_t>(i)] / lambda);
      for (long i = 0; i < n; ++i) {
        const double ti = term[static_cast<std::size_t>(i)] / lambda;
        if (ti == 0.0) continue;
        for (long p = q.row_ptr[static_cast<std::size_t>(i)]; p < q.row_ptr[static_cast<std::size_t>(i) + 1]; ++p)
          next[static_cast<std::size_t>(q.col[static_cast<std::size_t>(p)])] += ti * q.val[static_cast<std::size_t>(p)];
      }
      term.swap(next);
      weight *= a / static_cast<double>(k);
      mass += weight;
      for (long i = 0; i < n; ++i) acc[static_cast<std::size_t>(i)] += weight * term[static_cast<std::size_t>(i)];
    }
    v = acc;
  }
  return v;
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ConfigError("distributions have different lengths");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

}  // namespace zrp
