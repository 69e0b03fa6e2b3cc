#include "zrplab/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "zrplab/errors.hpp"

namespace zrp {

MonotonePair sample_monotone_pair(const MarginalSampler& low, const MarginalSampler& high, long sites,
                                  const SeedPath& seed, StreamTag tag) {
  if (low.rho() > high.rho()) throw ConfigError("monotone pair needs rho <= rho'");
  MonotonePair p;
  p.low.resize(static_cast<std::size_t>(sites));
  p.high.resize(static_cast<std::size_t>(sites));
  for (long x = 0; x < sites; ++x) {
    Stream s(seed, tag, static_cast<std::uint64_t>(x));
    const double u = s.uniform();
    const long lo = low.quantile(u);
    // The quantiles are ordered exactly; max() only guards CDF rounding in
    // the last few ulps below 1.
    p.low[static_cast<std::size_t>(x)] = lo;
    p.high[static_cast<std::size_t>(x)] = std::max(lo, high.quantile(u));
  }
  return p;
}

BasicCoupling::BasicCoupling(const RateFunction& rate, Domain domain, std::vector<long> cores,
                             std::vector<long> totals, const SeedPath& seed, StreamTag tag)
    : rate_(&rate), domain_(domain), core_(std::move(cores)) {
  domain_.validate();
  if (static_cast<long>(core_.size()) != domain_.size || totals.size() != core_.size())
    throw ConfigError("coupled configurations do not match the domain");
  extra_.resize(core_.size());
  for (std::size_t x = 0; x < core_.size(); ++x) {
    if (core_[x] < 0 || totals[x] < core_[x]) throw ConfigError("coupled configurations are not ordered");
    extra_[x] = totals[x] - core_[x];
  }
  for (std::size_t x = 0; x < core_.size(); ++x) streams_.emplace_back(seed, tag, x);
  queue_.reset(core_.size());
  for (std::size_t x = 0; x < core_.size(); ++x) reschedule(static_cast<long>(x));
}

std::vector<long> BasicCoupling::total_counts() const {
  std::vector<long> t(core_.size());
  for (std::size_t x = 0; x < core_.size(); ++x) t[x] = core_[x] + extra_[x];
  return t;
}

bool BasicCoupling::dominated() const {
  for (std::size_t x = 0; x < core_.size(); ++x)
    if (core_[x] < 0 || extra_[x] < 0) return false;
  return true;
}

void BasicCoupling::reschedule(long x) {
  const long k = totals(x);
  if (k == 0) {
    queue_.set(static_cast<std::size_t>(x), EventQueue::kNever);
    return;
  }
  if (k > rate_->k_max() && !rate_->gamma_tail())
    throw TableOverflow("occupancy beyond the rate table and no tail rule is set");
  queue_.set(static_cast<std::size_t>(x),
             now_ + streams_[static_cast<std::size_t>(x)].exponential(rate_->gamma_plus() * static_cast<double>(k)));
}

std::optional<TwoClassEvent> BasicCoupling::step(double t_limit) {
  const double t = queue_.top_time();
  if (!(t <= t_limit)) {
    now_ = std::max(now_, t_limit);
    return std::nullopt;
  }
  const long x = static_cast<long>(queue_.top());
  now_ = t;
  auto& s = streams_[static_cast<std::size_t>(x)];
  const long k = totals(x);
  TwoClassEvent ev;
  ev.mark.t = t;
  ev.mark.x = x;
  ev.mark.n = 1 + static_cast<long>(s.below(static_cast<std::uint64_t>(k)));
  ev.mark.u = s.uniform();
  ev.mark.h = s.sign();
  ev.mark.accepted = ev.mark.u <= rate_->acceptance(ev.mark.n);
  ev.core = ev.mark.n <= core_[static_cast<std::size_t>(x)];
  if (ev.mark.accepted) {
    ev.mark.y = domain_.neighbour(x, ev.mark.h);
    if (ev.mark.y < 0 && domain_.edge == EdgePolicy::Reflect) ev.mark.accepted = false;
  }
  if (!ev.mark.accepted) {
    ev.mark.y = -1;
    reschedule(x);
    return ev;
  }
  auto& from = ev.core ? core_ : extra_;
  --from[static_cast<std::size_t>(x)];
  reschedule(x);
  if (ev.mark.y >= 0) {
    ++from[static_cast<std::size_t>(ev.mark.y)];
    reschedule(ev.mark.y);
  }
  return ev;
}

BasicCouplingRun basic_monotone_coupling(const RateFunction& rate, double rho, double rho_prime,
                                         const Domain& domain, double t_end, const SeedPath& seed,
                                         bool record_events, bool check) {
  if (!(rho >= 0.0) || !(rho <= rho_prime)) throw ConfigError("basic coupling needs 0 <= rho <= rho'");
  if (!(t_end >= 0.0)) throw ConfigError("t_end must be >= 0");
  const MarginalSampler low(rate, rho), high(rate, rho_prime);
  auto pair = sample_monotone_pair(low, high, domain.size, seed);
  BasicCouplingRun run;
  run.initial_low = pair.low;
  run.initial_high = pair.high;
  BasicCoupling c(rate, domain, std::move(pair.low), std::move(pair.high), seed);
  while (auto ev = c.step(t_end)) {
    ++run.events;
    if (!ev->mark.accepted) continue;
    if (record_events) {
      if (ev->core) run.low_events.push_back(ev->mark);
      run.high_events.push_back(ev->mark);
    }
    if (check) {
      for (long z : {ev->mark.x, ev->mark.y})
        if (z >= 0 && (c.cores(z) < 0 || c.cores(z) > c.totals(z))) ++run.domination_violations;
    }
  }
  run.final_low = c.core_counts();
  run.final_high = c.total_counts();
  return run;
}

namespace {

long fourth_root_floor(double t) {
  long L = 0;
  while (static_cast<double>(L + 1) * (L + 1) * (L + 1) * (L + 1) <= t) ++L;
  return L;
}

}  // namespace

long phase_one_epoch_count(double t) {
  const long epochs = fourth_root_floor(t) + 1;
  return (epochs + 1) / 2;
}

CouplingGeometry CouplingGeometry::make(long a, long b, double t, double gamma_plus) {
  if (a > b) throw ConfigError("interval I = [a, b] needs a <= b");
  if (!(t >= 1.0)) throw ConfigError("coupling horizon t must be >= 1");
  CouplingGeometry g;
  g.a = a;
  g.b = b;
  g.L = std::max(1L, fourth_root_floor(t));
  const long pad = static_cast<long>(std::ceil(3.0 * gamma_plus * t));
  g.h_lo = a - pad;
  g.h_hi = b + pad;
  const long len = g.h_hi - g.h_lo + 1;
  g.h_hi += (g.L - len % g.L) % g.L;
  g.margin = static_cast<long>(std::ceil(4.0 * std::sqrt(t))) + g.L;
  const long size = (g.h_hi - g.h_lo + 1) + 2 * g.margin;
  g.domain = Domain::torus(size, g.margin - g.h_lo);
  const double step = std::pow(t, 0.75);
  for (long k = 0; k <= fourth_root_floor(t); ++k) {
    const double tk = static_cast<double>(k) * step;
    if (tk < t) g.epochs.push_back(tk);
  }
  return g;
}

bool CouplingGeometry::in_h(long index) const {
  const long c = domain.coord(index);
  return c >= h_lo && c <= h_hi;
}

CouplingEngine::CouplingEngine(const RateFunction& rate, const CouplingGeometry& geom, std::vector<long> ref_cores,
                               std::vector<long> ref_totals, std::vector<long> fol_cores,
                               std::vector<long> fol_totals, const CouplingSeeds& seeds, bool check_invariants)
    : rate_(&rate), geom_(geom), check_(check_invariants) {
  const auto n = static_cast<std::size_t>(geom_.domain.size);
  const std::vector<long>* cores[2] = {&ref_cores, &fol_cores};
  const std::vector<long>* totals[2] = {&ref_totals, &fol_totals};
  for (int s = 0; s < 2; ++s) {
    if (cores[s]->size() != n || totals[s]->size() != n) throw ConfigError("coupling configuration size mismatch");
    piles_[s].resize(n);
    for (std::size_t x = 0; x < n; ++x) {
      const long c = (*cores[s])[x], tot = (*totals[s])[x];
      if (c < 0 || tot < c) throw ConfigError("coupling configuration is not ordered");
      if (tot > c) two_class_ = true;
      for (long i = 0; i < tot; ++i) {
        Particle p;
        p.site = static_cast<std::int32_t>(x);
        p.core = i < c;
        p.left_h = s == Follower && !geom_.in_h(static_cast<long>(x));
        piles_[s][x].push_back(static_cast<std::uint32_t>(parts_[s].size()));
        parts_[s].push_back(p);
      }
    }
  }
  met_.assign(n, 0);
  fol_rate_.assign(n, -1.0);
  for (std::size_t x = 0; x < n; ++x) {
    ref_streams_.emplace_back(seeds.reference_field, StreamTag::ReferenceField, x);
    fol_streams_.emplace_back(seeds.follower_field, StreamTag::FollowerField, x);
  }
  queue_.reset(2 * n);
  for (std::size_t x = 0; x < n; ++x) {
    reschedule_reference(static_cast<long>(x));
    reschedule_follower(static_cast<long>(x));
  }
}

long CouplingEngine::cores(Side s, long x) const {
  long c = 0;
  for (auto id : piles_[s][static_cast<std::size_t>(x)]) c += parts_[s][id].core ? 1 : 0;
  return c;
}

std::vector<long> CouplingEngine::counts(Side s) const {
  std::vector<long> c(piles_[s].size());
  for (std::size_t x = 0; x < c.size(); ++x) c[x] = static_cast<long>(piles_[s][x].size());
  return c;
}

std::vector<long> CouplingEngine::core_counts(Side s) const {
  std::vector<long> c(piles_[s].size());
  for (std::size_t x = 0; x < c.size(); ++x) c[x] = cores(s, static_cast<long>(x));
  return c;
}

void CouplingEngine::reschedule_reference(long x) {
  const long k = count(Reference, x);
  if (k == 0) {
    queue_.set(static_cast<std::size_t>(x), EventQueue::kNever);
    return;
  }
  if (k > rate_->k_max() && !rate_->gamma_tail())
    throw TableOverflow("occupancy beyond the rate table and no tail rule is set");
  queue_.set(static_cast<std::size_t>(x),
             now_ + ref_streams_[static_cast<std::size_t>(x)].exponential(rate_->gamma_plus() * static_cast<double>(k)));
}

// Redraws the follower clock of x. Only the unmet part of the pile is
// addressed by the follower field.
void CouplingEngine::reschedule_follower(long x) {
  const auto xs = static_cast<std::size_t>(x);
  const long k = count(Follower, x) - met_[xs];
  const double rate = rate_->gamma_plus() * static_cast<double>(k);
  fol_rate_[xs] = rate;
  const std::size_t ch = piles_[0].size() + xs;
  if (k == 0) {
    queue_.set(ch, EventQueue::kNever);
    return;
  }
  if (count(Follower, x) > rate_->k_max() && !rate_->gamma_tail())
    throw TableOverflow("occupancy beyond the rate table and no tail rule is set");
  queue_.set(ch, now_ + fol_streams_[xs].exponential(rate));
}

std::uint32_t CouplingEngine::take(Side s, long x, std::size_t i) {
  auto& pile = piles_[s][static_cast<std::size_t>(x)];
  const auto id = pile[i];
  pile.erase(pile.begin() + static_cast<std::ptrdiff_t>(i));
  return id;
}

void CouplingEngine::land_alone(Side s, long y, std::uint32_t id) {
  piles_[s][static_cast<std::size_t>(y)].push_back(id);
  auto& p = parts_[s][id];
  p.site = static_cast<std::int32_t>(y);
  p.met = false;
  if (s == Follower && !geom_.in_h(y)) p.left_h = true;
}

void CouplingEngine::land_pair(long y, std::uint32_t ref_id, std::uint32_t fol_id) {
  const auto ys = static_cast<std::size_t>(y);
  piles_[Reference][ys].insert(piles_[Reference][ys].begin(), ref_id);
  piles_[Follower][ys].insert(piles_[Follower][ys].begin(), fol_id);
  ++met_[ys];
  auto& r = parts_[Reference][ref_id];
  auto& f = parts_[Follower][fol_id];
  r.site = f.site = static_cast<std::int32_t>(y);
  r.met = f.met = true;
  r.partner = static_cast<std::int32_t>(fol_id);
  f.partner = static_cast<std::int32_t>(ref_id);
  if (!geom_.in_h(y)) f.left_h = true;
}

void CouplingEngine::swap_roles(Side s, long x, std::size_t met_pos, std::size_t unmet_pos) {
  auto& pile = piles_[s][static_cast<std::size_t>(x)];
  const int o = 1 - s;
  const auto a = pile[met_pos], b = pile[unmet_pos];
  const auto pa = parts_[s][a].partner;
  const auto pb = parts_[s][b].partner;
  parts_[s][b].partner = pa;
  parts_[s][b].met = true;
  parts_[o][static_cast<std::size_t>(pa)].partner = static_cast<std::int32_t>(b);
  parts_[s][a].partner = pb;
  parts_[s][a].met = false;
  if (pb >= 0) parts_[o][static_cast<std::size_t>(pb)].partner = static_cast<std::int32_t>(a);
  std::swap(pile[met_pos], pile[unmet_pos]);
}

// Restores the pile layout at x: on both sides the met region sits at the
// bottom with pairs at equal heights, and within every region cores are
// below extras. A met extra above which an unmet core waits hands its
// partner to that core.
void CouplingEngine::normalise(long x) {
  if (!two_class_) return;
  const auto xs = static_cast<std::size_t>(x);
  const auto m = static_cast<std::size_t>(met_[xs]);
  for (bool swapped = true; swapped;) {
    swapped = false;
    for (Side s : {Follower, Reference}) {
      auto& pile = piles_[s][xs];
      std::size_t i = 0, j = m;
      while (i < m && parts_[s][pile[i]].core) ++i;
      while (j < pile.size() && !parts_[s][pile[j]].core) ++j;
      if (i < m && j < pile.size()) {
        swap_roles(s, x, i, j);
        swapped = true;
      }
    }
  }
  for (Side s : {Follower, Reference}) {
    auto& pile = piles_[s][xs];
    auto is_core = [&](std::uint32_t id) { return parts_[s][id].core; };
    std::stable_partition(pile.begin(), pile.begin() + static_cast<std::ptrdiff_t>(m), is_core);
    std::stable_partition(pile.begin() + static_cast<std::ptrdiff_t>(m), pile.end(), is_core);
  }
  for (std::size_t i = 0; i < m; ++i) {
    const auto f = piles_[Follower][xs][i], r = piles_[Reference][xs][i];
    parts_[Follower][f].partner = static_cast<std::int32_t>(r);
    parts_[Reference][r].partner = static_cast<std::int32_t>(f);
  }
}

void CouplingEngine::reference_mark(long x) {
  const auto xs = static_cast<std::size_t>(x);
  auto& s = ref_streams_[xs];
  const long k = count(Reference, x);
  const long n = 1 + static_cast<long>(s.below(static_cast<std::uint64_t>(k)));
  const double u = s.uniform();
  const int h = s.sign();
  if (!(u <= rate_->acceptance(n))) {
    reschedule_reference(x);
    return;
  }
  const long y = geom_.domain.neighbour(x, h);
  const auto i = static_cast<std::size_t>(n - 1);
  const auto id = piles_[Reference][xs][i];
  if (record_ref_) ref_log_.push_back({now_, x, y, n, parts_[Reference][id].core});

  if (n <= met_[xs]) {
    const auto fid = piles_[Follower][xs][i];
    if (parts_[Follower][fid].partner != static_cast<std::int32_t>(id)) ++checks_.pile_violations;
    take(Reference, x, i);
    take(Follower, x, i);
    --met_[xs];
    land_pair(y, id, fid);
  } else {
    take(Reference, x, i);
    const auto p = parts_[Reference][id].partner;
    const auto ys = static_cast<std::size_t>(y);
    if (p >= 0 && !parts_[Follower][static_cast<std::size_t>(p)].met &&
        parts_[Follower][static_cast<std::size_t>(p)].site == y) {
      auto& fp = piles_[Follower][ys];
      const auto it = std::find(fp.begin() + met_[ys], fp.end(), static_cast<std::uint32_t>(p));
      fp.erase(it);
      land_pair(y, id, static_cast<std::uint32_t>(p));
    } else {
      land_alone(Reference, y, id);
    }
  }
  normalise(x);
  normalise(y);
  reschedule_reference(x);
  reschedule_reference(y);
  for (long z : {x, y})
    if (fol_rate_[static_cast<std::size_t>(z)] !=
        rate_->gamma_plus() * static_cast<double>(count(Follower, z) - met_[static_cast<std::size_t>(z)]))
      reschedule_follower(z);
  if (check_) {
    check_site(x);
    check_site(y);
  }
}

void CouplingEngine::follower_mark(long x) {
  const auto xs = static_cast<std::size_t>(x);
  auto& s = fol_streams_[xs];
  const long m = met_[xs];
  const long k = count(Follower, x) - m;
  const long n = m + 1 + static_cast<long>(s.below(static_cast<std::uint64_t>(k)));
  const double u = s.uniform();
  const int h = s.sign();
  if (!(u <= rate_->acceptance(n))) {
    reschedule_follower(x);
    return;
  }
  const long y = geom_.domain.neighbour(x, h);
  const auto id = take(Follower, x, static_cast<std::size_t>(n - 1));
  const auto p = parts_[Follower][id].partner;
  const auto ys = static_cast<std::size_t>(y);
  if (p >= 0 && !parts_[Reference][static_cast<std::size_t>(p)].met &&
      parts_[Reference][static_cast<std::size_t>(p)].site == y) {
    auto& rp = piles_[Reference][ys];
    const auto it = std::find(rp.begin() + met_[ys], rp.end(), static_cast<std::uint32_t>(p));
    rp.erase(it);
    land_pair(y, static_cast<std::uint32_t>(p), id);
  } else {
    land_alone(Follower, y, id);
  }
  normalise(x);
  normalise(y);
  reschedule_follower(x);
  if (fol_rate_[ys] != rate_->gamma_plus() * static_cast<double>(count(Follower, y) - met_[ys]))
    reschedule_follower(y);
  if (check_) {
    check_site(x);
    check_site(y);
  }
}

void CouplingEngine::run_until(double t_limit) {
  const std::size_t n = piles_[0].size();
  for (;;) {
    const double t = queue_.top_time();
    if (!(t <= t_limit)) break;
    const auto ch = queue_.top();
    now_ = t;
    ++checks_.events;
    if (ch < n)
      reference_mark(static_cast<long>(ch));
    else
      follower_mark(static_cast<long>(ch - n));
  }
  now_ = std::max(now_, t_limit);
}

MatchingResult CouplingEngine::rematch(bool core_mode, long epoch) {
  (void)epoch;
  const std::size_t n = piles_[0].size();
  for (int s = 0; s < 2; ++s)
    for (auto& p : parts_[s])
      if (!p.met) p.partner = -1;

  const Side sparse_side = core_mode ? Reference : Follower;
  const Side dense_side = core_mode ? Follower : Reference;
  std::vector<std::vector<std::uint32_t>> avail[2];
  std::vector<long> cnt[2];
  for (Side s : {sparse_side, dense_side}) {
    avail[s].resize(n);
    cnt[s].assign(n, 0);
    for (std::size_t x = 0; x < n; ++x) {
      const auto& pile = piles_[s][x];
      for (std::size_t i = static_cast<std::size_t>(met_[x]); i < pile.size(); ++i)
        if (!core_mode || parts_[s][pile[i]].core) avail[s][x].push_back(pile[i]);
      cnt[s][x] = static_cast<long>(avail[s][x].size());
    }
  }
  auto res = build_matching(cnt[sparse_side], cnt[dense_side], geom_.h_lo_index(), geom_.h_hi_index(), geom_.L);

  std::vector<long> touched;
  for (const auto& pr : res.pairs) {
    const auto sp = avail[sparse_side][static_cast<std::size_t>(pr.sparse_site)][static_cast<std::size_t>(pr.sparse_rank)];
    const auto dn = avail[dense_side][static_cast<std::size_t>(pr.dense_site)][static_cast<std::size_t>(pr.dense_rank)];
    parts_[sparse_side][sp].partner = static_cast<std::int32_t>(dn);
    parts_[dense_side][dn].partner = static_cast<std::int32_t>(sp);
    if (std::labs(pr.sparse_site - pr.dense_site) > geom_.L) ++checks_.far_pairs;
    if (pr.sparse_site == pr.dense_site) {
      const long x = pr.sparse_site;
      const auto ref = sparse_side == Reference ? sp : dn;
      const auto fol = sparse_side == Follower ? sp : dn;
      auto& rp = piles_[Reference][static_cast<std::size_t>(x)];
      auto& fp = piles_[Follower][static_cast<std::size_t>(x)];
      rp.erase(std::find(rp.begin() + met_[static_cast<std::size_t>(x)], rp.end(), ref));
      fp.erase(std::find(fp.begin() + met_[static_cast<std::size_t>(x)], fp.end(), fol));
      land_pair(x, ref, fol);
      touched.push_back(x);
    }
  }
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  for (long x : touched) {
    normalise(x);
    reschedule_follower(x);
  }
  if (check_) audit();
  return res;
}

void CouplingEngine::check_site(long x) {
  const auto xs = static_cast<std::size_t>(x);
  const auto m = static_cast<std::size_t>(met_[xs]);
  const auto& rp = piles_[Reference][xs];
  const auto& fp = piles_[Follower][xs];
  if (m > rp.size() || m > fp.size()) {
    ++checks_.pile_violations;
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const auto& f = parts_[Follower][fp[i]];
    const auto& r = parts_[Reference][rp[i]];
    if (f.site != r.site || f.site != static_cast<std::int32_t>(x)) ++checks_.met_separations;
    if (!f.met || !r.met || f.partner != static_cast<std::int32_t>(rp[i]) ||
        r.partner != static_cast<std::int32_t>(fp[i]))
      ++checks_.pile_violations;
  }
  for (int s = 0; s < 2; ++s) {
    const auto& pile = piles_[s][xs];
    bool seen_extra = false;
    for (std::size_t i = 0; i < pile.size(); ++i) {
      const auto& p = parts_[s][pile[i]];
      if (p.site != static_cast<std::int32_t>(x)) ++checks_.pile_violations;
      if (i >= m && p.met) ++checks_.pile_violations;
      if (!p.core) seen_extra = true;
      if (p.core && seen_extra) ++checks_.pile_violations;
    }
  }
}

void CouplingEngine::audit() const {
  const std::size_t n = piles_[0].size();
  for (int s = 0; s < 2; ++s) {
    std::size_t seen = 0;
    for (std::size_t x = 0; x < n; ++x) {
      const auto& pile = piles_[s][x];
      seen += pile.size();
      bool seen_extra = false;
      for (std::size_t i = 0; i < pile.size(); ++i) {
        const auto& p = parts_[s][pile[i]];
        if (p.site != static_cast<std::int32_t>(x)) throw InconsistentState("particle site differs from its pile");
        if ((i < static_cast<std::size_t>(met_[x])) != p.met) throw InconsistentState("met region mismatch");
        if (!p.core) seen_extra = true;
        if (p.core && seen_extra) throw InconsistentState("core particle above an extra particle");
        if (p.met) {
          const auto& q = parts_[1 - s][static_cast<std::size_t>(p.partner)];
          if (q.site != p.site || !q.met) throw InconsistentState("met pair separated");
          if (piles_[1 - s][x][i] != static_cast<std::uint32_t>(p.partner))
            throw InconsistentState("met pair at different heights");
        }
        if (p.partner >= 0 && parts_[1 - s][static_cast<std::size_t>(p.partner)].partner !=
                                  static_cast<std::int32_t>(pile[i]))
          throw InconsistentState("matching is not symmetric");
      }
    }
    if (seen != parts_[s].size()) throw InconsistentState("particle count not conserved");
  }
}

std::pair<long, long> CouplingEngine::unmet_in(long lo, long hi) const {
  long unmet = 0, total = 0;
  for (long x = lo; x <= hi; ++x) {
    total += count(Follower, x);
    unmet += count(Follower, x) - met_[static_cast<std::size_t>(x)];
  }
  return {unmet, total};
}

bool CouplingEngine::b_event(long lo, long hi) const {
  for (long x = lo; x <= hi; ++x)
    for (auto id : piles_[Follower][static_cast<std::size_t>(x)])
      if (parts_[Follower][id].left_h) return true;
  return false;
}

MatchingState CouplingEngine::matching_state() const {
  MatchingState st;
  for (std::size_t i = 0; i < parts_[Follower].size(); ++i) {
    const auto& p = parts_[Follower][i];
    if (p.partner >= 0)
      st.pairs.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(p.partner), p.met});
    else
      st.unmatched.push_back(static_cast<std::uint32_t>(i));
  }
  return st;
}

namespace {

std::vector<long> sample_counts(const MarginalSampler& s, long sites, const SeedPath& seed, StreamTag tag) {
  std::vector<long> c(static_cast<std::size_t>(sites));
  for (long x = 0; x < sites; ++x) {
    Stream st(seed, tag, static_cast<std::uint64_t>(x));
    c[static_cast<std::size_t>(x)] = s.sample(st);
  }
  return c;
}

void fill_summary(CouplingRun& run, const CouplingEngine& e, const CouplingGeometry& g) {
  const long lo = g.domain.index(g.a), hi = g.domain.index(g.b);
  const auto [unmet, total] = e.unmet_in(lo, hi);
  run.unmet_fraction = total > 0 ? static_cast<double>(unmet) / static_cast<double>(total) : 0.0;
  run.b_event = e.b_event(lo, hi);
  run.checks = e.checks();
  run.reference_log = e.reference_events();
}

}  // namespace

CouplingRun sprinkled_coupling_run(const RateFunction& rate, double rho, double epsilon, long a, long b, double t,
                                   const CouplingSeeds& seeds, const CouplingOptions& opt) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in (0, 1]");
  if (!(rho >= 0.0)) throw ConfigError("rho must be >= 0");
  const auto g = CouplingGeometry::make(a, b, t, rate.gamma_plus());
  const MarginalSampler fol(rate, rho), ref(rate, rho + epsilon);
  auto fc = sample_counts(fol, g.domain.size, seeds.follower_init, StreamTag::InitialConfig);
  auto rc = sample_counts(ref, g.domain.size, seeds.reference_init, StreamTag::InitialConfigB);
  CouplingEngine e(rate, g, rc, rc, fc, fc, seeds, opt.check_invariants);
  e.record_reference_events(opt.record_reference);

  CouplingRun run;
  run.i_lo = a;
  run.i_hi = b;
  run.t = t;
  run.epsilon = epsilon;
  for (std::size_t k = 0; k < g.epochs.size(); ++k) {
    e.run_until(g.epochs[k]);
    if (!e.rematch(false, static_cast<long>(k)).unmatchable.empty()) ++run.unmatchable_epochs;
  }
  e.run_until(t);
  if (opt.check_invariants) e.audit();
  run.eta = e.counts(CouplingEngine::Follower);
  run.eta_bar = e.counts(CouplingEngine::Reference);
  for (long c = a; c <= b; ++c) {
    const auto x = static_cast<std::size_t>(g.domain.index(c));
    if (run.eta[x] > run.eta_bar[x]) {
      run.domination_ok = false;
      run.failure_sites.push_back(c);
    }
  }
  fill_summary(run, e, g);
  return run;
}

SimultaneousRun simultaneous_coupling_run(const RateFunction& rate, double rho, double rho_prime, double epsilon,
                                          long a, long b, double t, const CouplingSeeds& seeds,
                                          const CouplingOptions& opt, double rho_minus) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in (0, 1]");
  if (!(rho <= rho_prime)) throw ConfigError("simultaneous coupling needs rho <= rho'");
  if (!(rho - epsilon >= std::max(0.0, rho_minus)))
    throw ConfigError("simultaneous coupling needs rho - epsilon >= rho_minus (and >= 0)");
  const auto g = CouplingGeometry::make(a, b, t, rate.gamma_plus());
  const MarginalSampler f_lo(rate, rho), f_hi(rate, rho_prime);
  const MarginalSampler r_lo(rate, rho - epsilon), r_hi(rate, rho_prime + epsilon);
  auto fp = sample_monotone_pair(f_lo, f_hi, g.domain.size, seeds.follower_init, StreamTag::InitialConfig);
  auto rp = sample_monotone_pair(r_lo, r_hi, g.domain.size, seeds.reference_init, StreamTag::InitialConfigB);
  CouplingEngine e(rate, g, rp.low, rp.high, fp.low, fp.high, seeds, opt.check_invariants);
  e.record_reference_events(opt.record_reference);

  SimultaneousRun out;
  auto& run = out.base;
  run.i_lo = a;
  run.i_hi = b;
  run.t = t;
  run.epsilon = epsilon;
  out.phase_one_epochs = phase_one_epoch_count(t);
  for (std::size_t k = 0; k < g.epochs.size(); ++k) {
    e.run_until(g.epochs[k]);
    const bool core_mode = static_cast<long>(k) < out.phase_one_epochs;
    if (!e.rematch(core_mode, static_cast<long>(k)).unmatchable.empty()) ++run.unmatchable_epochs;
  }
  e.run_until(t);
  if (opt.check_invariants) e.audit();
  run.eta = e.core_counts(CouplingEngine::Follower);
  run.eta_bar = e.core_counts(CouplingEngine::Reference);
  out.eta_prime = e.counts(CouplingEngine::Follower);
  out.eta_bar_prime = e.counts(CouplingEngine::Reference);
  for (long c = a; c <= b; ++c) {
    const auto x = static_cast<std::size_t>(g.domain.index(c));
    if (run.eta[x] < run.eta_bar[x] || out.eta_prime[x] > out.eta_bar_prime[x]) {
      out.joint_failure = true;
      run.failure_sites.push_back(c);
    }
  }
  for (std::size_t x = 0; x < run.eta.size(); ++x)
    if (run.eta[x] > out.eta_prime[x] || run.eta_bar[x] > out.eta_bar_prime[x]) ++out.order_violations;
  run.domination_ok = !out.joint_failure;
  fill_summary(run, e, g);
  return out;
}

void write_coupling_csv_header(std::ostream& os) {
  os << "replica,t,epsilon,domination_ok,unmet_fraction,unmatchable_epochs,b_event\n";
}

void write_coupling_csv_row(std::ostream& os, long replica, const CouplingRun& run) {
  os.precision(17);
  os << replica << ',' << run.t << ',' << run.epsilon << ',' << (run.domination_ok ? 1 : 0) << ','
     << run.unmet_fraction << ',' << run.unmatchable_epochs << ',' << (run.b_event ? 1 : 0) << '\n';
}

}  // namespace zrp
