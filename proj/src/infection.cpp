#include "zrplab/infection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ostream>

#include "zrplab/errors.hpp"

namespace zrp {

InfectionState InfectionState::init(const std::vector<long>& counts, long origin) {
  InfectionState s;
  s.xi.assign(counts.size(), 0);
  s.zeta.assign(counts.size(), 0);
  for (std::size_t x = 0; x < counts.size(); ++x) {
    if (static_cast<long>(x) <= origin) {
      s.xi[x] = counts[x];
      s.infected += counts[x];
      if (counts[x] > 0) s.front = static_cast<long>(x);
    } else {
      s.zeta[x] = counts[x];
    }
  }
  return s;
}

void InfectionState::apply(const MarkEvent& ev) {
  if (!ev.accepted) return;
  const auto x = static_cast<std::size_t>(ev.x);
  if (xi[x] > 0 && zeta[x] > 0) throw InconsistentState("mixed pile at source site");
  if (xi[x] > 0) {
    --xi[x];
    if (ev.y >= 0) {
      const auto y = static_cast<std::size_t>(ev.y);
      if (zeta[y] > 0) {
        infected += zeta[y];
        xi[y] += zeta[y];
        zeta[y] = 0;
      }
      ++xi[y];
      if (front == kNoFront || ev.y > front) front = ev.y;
    } else {
      --infected;
    }
    if (xi[x] == 0 && ev.x == front) {
      front = kNoFront;
      for (long z = ev.x; z >= 0; --z)
        if (xi[static_cast<std::size_t>(z)] > 0) {
          front = z;
          break;
        }
    }
  } else if (zeta[x] > 0) {
    --zeta[x];
    if (ev.y >= 0) {
      const auto y = static_cast<std::size_t>(ev.y);
      if (xi[y] > 0) {
        ++xi[y];
        ++infected;
      } else {
        ++zeta[y];
      }
    }
  } else {
    throw InconsistentState("jump from an empty site");
  }
}

void InfectionState::check(const std::vector<long>& counts) const {
  if (counts.size() != xi.size()) throw InconsistentState("overlay size mismatch");
  long rightmost = kNoFront;
  for (std::size_t x = 0; x < counts.size(); ++x) {
    if (xi[x] < 0 || zeta[x] < 0) throw InconsistentState("negative overlay count");
    if (xi[x] + zeta[x] != counts[x]) throw InconsistentState("xi + zeta differs from eta");
    if (std::min(xi[x], zeta[x]) != 0) throw InconsistentState("all-or-nothing rule violated");
    if (xi[x] > 0) rightmost = static_cast<long>(x);
  }
  if (rightmost != front) throw InconsistentState("front is not the rightmost infected site");
}

long FrontPath::value_at(double t) const {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return values.front();
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

long FrontPath::sup_until(double t) const {
  long m = values.front();
  for (std::size_t i = 0; i < times.size() && times[i] <= t; ++i) m = std::max(m, values[i]);
  return m;
}

long FrontPath::inf_until(double t) const {
  long m = values.front();
  for (std::size_t i = 0; i < times.size() && times[i] <= t; ++i) m = std::min(m, values[i]);
  return m;
}

double FrontMartingale::value_at(double t) const {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0.0;
  const auto i = static_cast<std::size_t>(it - times.begin()) - 1;
  return values[i] - integrand[i] * (t - times[i]);
}

InfectionTracker::InfectionTracker(const Simulator& sim, long origin_index, long buffer, bool check_each_event)
    : state_(InfectionState::init(sim.counts(), origin_index)),
      last_t_(sim.time()),
      buffer_(buffer),
      check_each_event_(check_each_event) {
  path_.origin_x = sim.domain().coord(origin_index);
  path_.origin_s = sim.time();
  if (!state_.has_front()) {
    escaped_ = true;
    mart_.valid = false;
    return;
  }
  r0_ = sim.domain().coord(state_.front);
  path_.times.push_back(sim.time());
  path_.values.push_back(r0_);
  rate_now_ = integrand_now(sim);
  mart_.times.push_back(sim.time());
  mart_.values.push_back(0.0);
  mart_.integrand.push_back(rate_now_);
  update_escape(sim);
}

long InfectionTracker::front_coord() const {
  return path_.values.empty() ? kNoFront : path_.values.back();
}

double InfectionTracker::integrand_now(const Simulator& sim) const {
  if (!state_.has_front()) return 0.0;
  const long k = sim.count(state_.front);
  return k >= 2 ? 0.5 * sim.rate()(k) : 0.0;
}

void InfectionTracker::update_escape(const Simulator& sim) {
  if (escaped_) return;
  const long n = sim.domain().size;
  if (!state_.has_front() || state_.front < buffer_ || state_.front > n - 1 - buffer_) {
    escaped_ = true;
    mart_.valid = false;
  }
}

void InfectionTracker::on_event(const Simulator& sim, const MarkEvent& ev) {
  if (!ev.accepted || path_.values.empty()) return;
  m_now_ -= rate_now_ * (ev.t - last_t_);
  last_t_ = ev.t;
  const long old_front = state_.front;
  state_.apply(ev);
  if (check_each_event_) {
    state_.check(sim.counts());
    ++checks_;
  }
  const bool moved = state_.front != old_front;
  if (moved && state_.has_front()) {
    const long c = sim.domain().coord(state_.front);
    m_now_ += static_cast<double>(c - path_.values.back());
    path_.times.push_back(ev.t);
    path_.values.push_back(c);
  }
  const double r = integrand_now(sim);
  if (moved || r != rate_now_) {
    mart_.times.push_back(ev.t);
    mart_.values.push_back(m_now_);
    mart_.integrand.push_back(r);
  }
  rate_now_ = r;
  update_escape(sim);
}

bool eta_allowed_check(const FrontPath& path, const std::vector<MarkEvent>& events, const Domain& domain,
                       const ScaleInterval& scale) {
  if (path.values.empty() || path.values.size() != path.times.size()) return false;
  if (path.values.front() != scale.anchor) return false;
  for (long v : path.values)
    if (v < scale.lo || v > scale.hi) return false;
  std::size_t j = 0;
  for (std::size_t i = 1; i < path.values.size(); ++i) {
    const long from = path.values[i - 1];
    const long step = path.values[i] - from;
    if (step != 1 && step != -1) return false;
    const double tau = path.times[i];
    while (j < events.size() && events[j].t < tau) ++j;
    bool found = false;
    for (std::size_t e = j; e < events.size() && events[e].t == tau; ++e) {
      const auto& ev = events[e];
      if (ev.accepted && domain.coord(ev.x) == from && ev.h == step) {
        found = true;
        break;
      }
    }
    if (!found) return false;
  }
  return true;
}

namespace {

class WindowSum {
 public:
  WindowSum(const Domain& d, long radius) : d_(d), r_(radius) {}

  bool inside(long index, long centre) const {
    long dist = std::labs(d_.coord(index) - centre);
    if (d_.is_torus()) dist = std::min(dist % d_.size, d_.size - dist % d_.size);
    return dist <= r_;
  }

  long recompute(const std::vector<long>& counts, long centre) const {
    long s = 0;
    if (d_.is_torus() && 2 * r_ + 1 >= d_.size) {
      for (long x = 0; x < d_.size; ++x)
        if (inside(x, centre)) s += counts[static_cast<std::size_t>(x)];
      return s;
    }
    for (long c = centre - r_; c <= centre + r_; ++c) {
      const long x = d_.index(c);
      if (x >= 0) s += counts[static_cast<std::size_t>(x)];
    }
    return s;
  }

 private:
  const Domain& d_;
  long r_;
};

}  // namespace

OccupationStat occupation_fraction(const FrontPath& path, const std::vector<long>& initial,
                                   const std::vector<MarkEvent>& events, const Domain& domain, long radius,
                                   double t) {
  OccupationStat out{radius, t, 0.0};
  if (!(t > 0.0) || path.values.empty()) return out;
  std::vector<long> counts = initial;
  WindowSum window(domain, radius);
  std::size_t pi = 0;  // index of the current path value
  long centre = path.values[0];
  while (pi + 1 < path.times.size() && path.times[pi + 1] <= 0.0) centre = path.values[++pi];
  long sum = window.recompute(counts, centre);

  double covered = 0.0;
  double now = 0.0;
  std::size_t ei = 0;
  for (;;) {
    const double next_event = ei < events.size() ? events[ei].t : INFINITY;
    const double next_move = pi + 1 < path.times.size() ? path.times[pi + 1] : INFINITY;
    const double next = std::min({next_event, next_move, t});
    if (sum >= 2) covered += next - now;
    now = next;
    if (now >= t) break;
    if (next_event <= next_move) {
      const auto& ev = events[ei++];
      if (!ev.accepted) continue;
      --counts[static_cast<std::size_t>(ev.x)];
      if (window.inside(ev.x, centre)) --sum;
      if (ev.y >= 0) {
        ++counts[static_cast<std::size_t>(ev.y)];
        if (window.inside(ev.y, centre)) ++sum;
      }
    } else {
      centre = path.values[++pi];
      sum = window.recompute(counts, centre);
    }
  }
  out.value = std::clamp(covered / t, 0.0, 1.0);
  return out;
}

void write_front_csv(std::ostream& os, const FrontPath& path) {
  os << "time,front\n";
  os.precision(17);
  for (std::size_t i = 0; i < path.times.size(); ++i) os << path.times[i] << ',' << path.values[i] << '\n';
}

void write_martingale_csv(std::ostream& os, const FrontMartingale& m) {
  os << "time,M,integrand\n";
  os.precision(17);
  for (std::size_t i = 0; i < m.times.size(); ++i)
    os << m.times[i] << ',' << m.values[i] << ',' << m.integrand[i] << '\n';
}

}  // namespace zrp
