#include "zrplab/renorm.hpp"

#include <algorithm>
#include <cmath>

#include "zrplab/errors.hpp"

namespace zrp {

namespace {

constexpr long kExactLimit = 1L << 53;

long isqrt(long n) {
  long r = static_cast<long>(std::sqrt(static_cast<double>(n)));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r;
}

}  // namespace

RenormSchedule RenormSchedule::make(long L0, int growth, int k_max, double v0, double rho0, double eps0) {
  if (L0 < 2) throw ConfigError("L0 must be >= 2");
  if (growth < 2) throw ConfigError("growth exponent must be >= 2");
  if (k_max < 0) throw ConfigError("k_max must be >= 0");
  if (!(rho0 > 0.0)) throw ConfigError("rho_0 must be > 0");
  if (!(eps0 > 0.0 && eps0 <= 1.0)) throw ConfigError("eps_0 must lie in (0, 1]");
  RenormSchedule s;
  s.L0 = L0;
  s.growth = growth;
  s.k_max = k_max;
  // One extra level so that M_k and G_k can refer to scale k + 1.
  const int levels = k_max + 2;
  s.L.push_back(L0);
  s.v.push_back(v0);
  s.rho.push_back(rho0);
  s.rho_prime.push_back(rho0);
  s.eps.push_back(eps0);
  for (int k = 0; k + 1 < levels; ++k) {
    long next = 1;
    for (int i = 0; i < growth; ++i) {
      if (next > kExactLimit / s.L[static_cast<std::size_t>(k)])
        throw ConfigError("scale L_" + std::to_string(k + 1) + " exceeds 2^53; lower L0, growth or k_max");
      next *= s.L[static_cast<std::size_t>(k)];
    }
    const double lk = static_cast<double>(s.L[static_cast<std::size_t>(k)]);
    const double f = 1.0 + std::pow(lk, -1.0 / 16.0);
    const double kk = static_cast<double>(k + 1);
    s.L.push_back(next);
    s.v.push_back(s.v.back() + 1.0 / (kk * kk));
    s.rho.push_back(s.rho.back() / f);
    s.rho_prime.push_back(s.rho_prime.back() * f);
    s.eps.push_back(s.eps.back() * (1.0 - 1.0 / (kk * kk)));
  }
  for (long l : s.L) s.ell.push_back(isqrt(l));
  return s;
}

double RenormSchedule::recursion_residual() const {
  double worst = 0.0;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1e-300, std::max(std::abs(a), std::abs(b))); };
  for (std::size_t k = 0; k + 1 < L.size(); ++k) {
    long p = 1;
    for (int i = 0; i < growth; ++i) p *= L[k];
    if (p != L[k + 1]) return INFINITY;
    const double f = 1.0 + std::pow(static_cast<double>(L[k]), -1.0 / 16.0);
    const double kk = static_cast<double>(k + 1);
    worst = std::max(worst, rel(v[k + 1], v[k] + 1.0 / (kk * kk)));
    worst = std::max(worst, rel(rho[k], rho[k + 1] * f));
    worst = std::max(worst, rel(rho_prime[k + 1], rho_prime[k] * f));
    if (eps[k + 1] != 0.0 || eps[k] * (1.0 - 1.0 / (kk * kk)) != 0.0)
      worst = std::max(worst, rel(eps[k + 1], eps[k] * (1.0 - 1.0 / (kk * kk))));
  }
  for (std::size_t k = 0; k < L.size(); ++k)
    if (ell[k] * ell[k] > L[k] || (ell[k] + 1) * (ell[k] + 1) <= L[k]) return INFINITY;
  return worst;
}

long box_half_width(const RenormSchedule& s, int k) {
  const auto i = static_cast<std::size_t>(k);
  if (k < 0 || i >= s.L.size()) throw ConfigError("scale index out of range");
  return s.ell[i] * s.L[i] * s.L[i];
}

long interval_half_width(const RenormSchedule& s, int k) { return box_half_width(s, k) / 4; }

SpaceTimeBox box_k(const RenormSchedule& s, int k, long mx, double ms) {
  const double w = static_cast<double>(box_half_width(s, k));
  return {static_cast<double>(mx) - w, static_cast<double>(mx) + w, ms,
          ms + static_cast<double>(s.L[static_cast<std::size_t>(k)])};
}

double dist_V(const SpaceTimeBox& a, const SpaceTimeBox& b) {
  return std::max(0.0, std::max(a.t_lo - b.t_hi, b.t_lo - a.t_hi));
}

double dist_H(const SpaceTimeBox& a, const SpaceTimeBox& b) {
  return std::max(0.0, std::max(a.x_lo - b.x_hi, b.x_lo - a.x_hi));
}

bool in_index_set(const RenormSchedule& s, int k, long x, long j) {
  if (j < 0) return false;
  const long reach = box_half_width(s, k) + box_half_width(s, k + 1);
  return std::labs(x) <= reach && j * s.L[static_cast<std::size_t>(k)] <= s.L[static_cast<std::size_t>(k + 1)];
}

std::uint64_t index_set_size(const RenormSchedule& s, int k) {
  const long reach = box_half_width(s, k) + box_half_width(s, k + 1);
  const long times = s.L[static_cast<std::size_t>(k + 1)] / s.L[static_cast<std::size_t>(k)] + 1;
  return static_cast<std::uint64_t>(2 * reach + 1) * static_cast<std::uint64_t>(times);
}

bool in_boundary_piece(const RenormSchedule& s, int k, double x, double t) {
  const double w = static_cast<double>(box_half_width(s, k));
  const double L = static_cast<double>(s.L[static_cast<std::size_t>(k)]);
  const double v = s.v[static_cast<std::size_t>(k)];
  if (x == w && t >= 0.0 && t <= L) return true;
  return t == L && x >= v * L && x <= w;
}

BoxExit first_exit(const FrontPath& path, long anchor, long half_width, double horizon) {
  for (std::size_t i = 0; i < path.times.size() && path.times[i] <= horizon; ++i) {
    const long rel = path.values[i] - anchor;
    if (rel >= half_width) return {ExitSide::Right, path.times[i], half_width};
    if (rel <= -half_width) return {ExitSide::Left, path.times[i], -half_width};
  }
  return {ExitSide::Top, horizon, path.value_at(horizon) - anchor};
}

bool event_E_velocity(const FrontPath& path, const RenormSchedule& s, int k, double v, long anchor) {
  if (path.values.empty() || path.values.front() != anchor) return false;
  const double L = static_cast<double>(s.L[static_cast<std::size_t>(k)]);
  const auto exit = first_exit(path, anchor, box_half_width(s, k), L);
  switch (exit.side) {
    case ExitSide::Right:
      return true;
    case ExitSide::Left:
      return false;
    case ExitSide::Top:
      return static_cast<double>(exit.position) >= v * L;
  }
  return false;
}

bool event_E(const FrontPath& path, const RenormSchedule& s, int k, long anchor) {
  return event_E_velocity(path, s, k, s.v[static_cast<std::size_t>(k)], anchor);
}

bool event_D(const FrontPath& path, const RenormSchedule& s, int k, long anchor) {
  if (path.values.empty()) return false;
  const long w = box_half_width(s, k);
  const double L = static_cast<double>(s.L[static_cast<std::size_t>(k)]);
  for (std::size_t i = 0; i < path.times.size() && path.times[i] <= L; ++i)
    if (std::labs(path.values[i] - anchor) > w) return false;
  return true;
}

FrontPath allowed_path(PathRule rule, const std::vector<MarkEvent>& upper, const std::vector<long>& lower_initial,
                       const std::vector<MarkEvent>& lower_events, const Domain& domain, long start, long lo,
                       long hi, double horizon) {
  FrontPath path;
  path.origin_x = start;
  path.times.push_back(0.0);
  path.values.push_back(start);
  if (rule == PathRule::Stay) return path;
  std::vector<long> lower = lower_initial;
  std::size_t li = 0;
  long pos = start;
  for (const auto& ev : upper) {
    if (ev.t > horizon) break;
    if (rule == PathRule::GreedyLowest) {
      while (li < lower_events.size() && lower_events[li].t < ev.t) {
        const auto& le = lower_events[li++];
        if (!le.accepted) continue;
        --lower[static_cast<std::size_t>(le.x)];
        if (le.y >= 0) ++lower[static_cast<std::size_t>(le.y)];
      }
    }
    if (!ev.accepted || ev.y < 0 || domain.coord(ev.x) != pos) continue;
    const long dest = pos + ev.h;
    if (dest < lo || dest > hi) continue;
    bool move = false;
    switch (rule) {
      case PathRule::AlwaysLeft:
        move = ev.h < 0;
        break;
      case PathRule::AlwaysRight:
        move = ev.h > 0;
        break;
      case PathRule::GreedyLowest:
        move = lower[static_cast<std::size_t>(ev.y)] < lower[static_cast<std::size_t>(ev.x)];
        break;
      case PathRule::Stay:
        break;
    }
    if (move) {
      pos = dest;
      path.times.push_back(ev.t);
      path.values.push_back(pos);
    }
  }
  return path;
}

FrontPath front_path_of(const std::vector<long>& initial, const std::vector<MarkEvent>& events,
                        const Domain& domain, long origin, double horizon) {
  FrontPath path;
  path.origin_x = origin;
  const long oi = domain.index(origin);
  if (oi < 0) throw ConfigError("infection origin outside the domain");
  auto st = InfectionState::init(initial, oi);
  if (!st.has_front()) return path;
  path.times.push_back(0.0);
  path.values.push_back(domain.coord(st.front));
  for (const auto& ev : events) {
    if (ev.t > horizon) break;
    if (!ev.accepted) continue;
    const long before = st.front;
    st.apply(ev);
    if (st.front != before) {
      if (!st.has_front()) break;
      path.times.push_back(ev.t);
      path.values.push_back(domain.coord(st.front));
    }
  }
  return path;
}

}  // namespace zrp
