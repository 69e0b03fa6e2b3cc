#include "zrplab/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>

#include "zrplab/errors.hpp"

namespace zrp {

using nlohmann::json;

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt(long v) { return std::to_string(v); }

namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

void Table::write_csv(std::ostream& os) const {
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << csv_cell(cells[i]);
    os << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

json ExperimentReport::to_json() const {
  return json{{"kind", kind},
              {"label", label},
              {"estimate", finite_or_null(estimate)},
              {"ci_low", finite_or_null(ci_low)},
              {"ci_high", finite_or_null(ci_high)},
              {"ci_method", ci_method},
              {"replicas", replicas},
              {"excluded", excluded},
              {"seed", seed},
              {"parameters", parameters},
              {"details", details}};
}

JointBootstrap summarise_bootstrap(const std::vector<std::vector<double>>& draws, double level) {
  JointBootstrap out;
  if (draws.empty()) return out;
  const std::size_t m = draws.front().size();
  const double a = (1.0 - level) / 2.0;
  auto quant = [&](std::vector<double>& v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  std::vector<double> col(draws.size());
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t b = 0; b < draws.size(); ++b) col[b] = draws[b][j];
    out.se.push_back(mean_se(col).sd);
    out.ci.push_back({quant(col, a), quant(col, 1.0 - a)});
  }
  for (std::size_t j = 0; j + 1 < m; ++j) {
    for (std::size_t b = 0; b < draws.size(); ++b) col[b] = draws[b][j + 1] - draws[b][j];
    out.diff_se.push_back(mean_se(col).sd);
  }
  return out;
}

JointBootstrap joint_bootstrap(std::size_t n,
                               const std::function<std::vector<double>(std::span<const std::size_t>)>& stats,
                               int resamples, double level, Stream& rng) {
  if (n == 0 || resamples < 2) throw ConfigError("bootstrap needs a non-empty sample and >= 2 resamples");
  std::vector<std::vector<double>> draws;
  draws.reserve(static_cast<std::size_t>(resamples));
  std::vector<std::size_t> idx(n);
  for (int b = 0; b < resamples; ++b) {
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
    draws.push_back(stats(idx));
  }
  return summarise_bootstrap(draws, level);
}

namespace {

// Paired trend test: z_j = (stat_{j+1} - stat_j) / bootstrap SE of the
// difference.
TrendResult paired_trend(const std::vector<double>& est, const std::vector<double>& diff_se, double alpha = 0.05) {
  TrendResult out;
  const double crit = normal_upper(alpha);
  for (std::size_t j = 0; j + 1 < est.size(); ++j) {
    const double d = est[j + 1] - est[j];
    const double se = diff_se[j];
    const double z = se > 0.0 ? d / se : (d > 0.0 ? INFINITY : (d < 0.0 ? -INFINITY : 0.0));
    out.z.push_back(z);
    if (z > crit) out.non_increasing = false;
  }
  return out;
}

json z_json(const std::vector<double>& z) {
  json a = json::array();
  for (double v : z) a.push_back(finite_or_null(v));
  return a;
}

ExperimentReport frequency_report(const std::string& kind, const std::string& label, std::uint64_t hits,
                                  std::uint64_t n, std::uint64_t seed) {
  ExperimentReport r;
  r.kind = kind;
  r.label = label;
  r.estimate = n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
  const auto ci = wilson_interval(hits, n);
  r.ci_low = ci.lo;
  r.ci_high = ci.hi;
  r.ci_method = "wilson95";
  r.replicas = static_cast<long>(n);
  r.seed = seed;
  r.details["hits"] = hits;
  return r;
}

ExperimentReport mean_report(const std::string& kind, const std::string& label, const std::vector<double>& xs,
                             std::uint64_t seed) {
  ExperimentReport r;
  r.kind = kind;
  r.label = label;
  const auto m = mean_se(xs);
  const double z = normal_two_sided(0.95);
  r.estimate = m.mean;
  r.ci_low = m.mean - z * m.se;
  r.ci_high = m.mean + z * m.se;
  r.ci_method = "normal95";
  r.replicas = static_cast<long>(xs.size());
  r.seed = seed;
  r.details["se"] = m.se;
  r.details["sd"] = m.sd;
  return r;
}

std::string label_of(const std::string& name, double v) { return name + "=" + fmt(v); }

std::vector<long> sample_counts(const MarginalSampler& s, const Domain& d, const SeedPath& seed, StreamTag tag) {
  std::vector<long> c(static_cast<std::size_t>(d.size));
  for (long x = 0; x < d.size; ++x) {
    Stream st(seed, tag, static_cast<std::uint64_t>(x));
    c[static_cast<std::size_t>(x)] = s.sample(st);
  }
  return c;
}

class EventRecorder : public Observer {
 public:
  explicit EventRecorder(std::vector<MarkEvent>& out) : out_(out) {}
  void on_event(const Simulator&, const MarkEvent& ev) override {
    if (ev.accepted) out_.push_back(ev);
  }

 private:
  std::vector<MarkEvent>& out_;
};

class InfectedAudit : public Observer {
 public:
  explicit InfectedAudit(const InfectionTracker& tr) : tr_(tr), last_(tr.state().infected) {}
  void on_event(const Simulator&, const MarkEvent&) override {
    const long now = tr_.state().infected;
    if (now < last_) ++decreases;
    last_ = now;
  }
  std::uint64_t decreases = 0;

 private:
  const InfectionTracker& tr_;
  long last_;
};

void require_replicas(long replicas) {
  if (replicas < 1) throw ConfigError("replicas must be >= 1");
}

void require_sorted_positive(const std::vector<double>& g, const std::string& name, bool allow_zero) {
  if (g.empty()) throw ConfigError(name + " must not be empty");
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(allow_zero ? g[i] >= 0.0 : g[i] > 0.0)) throw ConfigError(name + " entries must be positive");
    if (i && !(g[i] > g[i - 1])) throw ConfigError(name + " must be strictly increasing");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

long front_half_width(const RateFunction& rate, double horizon, long window) {
  return static_cast<long>(std::ceil(2.0 * rate.gamma_plus() * horizon)) + window;
}

FrontRun run_front(const RateFunction& rate, const MarginalSampler& sampler, const FrontRunOptions& opt,
                   const SeedPath& seed) {
  if (opt.half_width < 1) throw ConfigError("front half-width must be >= 1");
  FrontRun out;
  out.domain = Domain::interval(2 * opt.half_width + 1, opt.half_width, EdgePolicy::Reflect);
  out.initial = sample_counts(sampler, out.domain, seed, StreamTag::InitialConfig);
  const long origin = opt.half_width;
  if (opt.condition_r0) {
    Stream rs(seed, StreamTag::Resample, 0);
    out.initial[static_cast<std::size_t>(origin)] = sampler.sample_at_least(rs, 1);
  }
  Simulator sim(rate, out.domain, PileConfig::from_counts(out.initial), seed);
  InfectionTracker tracker(sim, origin, opt.buffer, opt.check_overlay);
  InfectedAudit audit(tracker);
  EventRecorder rec(out.events);
  std::vector<Observer*> obs{&tracker, &audit};
  if (opt.record_events) obs.push_back(&rec);
  if (!tracker.escaped()) sim.run_until(opt.horizon, obs);
  out.path = tracker.front_path();
  out.martingale = tracker.martingale();
  out.escaped = tracker.escaped();
  out.checks = tracker.checks();
  out.infected_decreases = audit.decreases;
  return out;
}

// ---------------------------------------------------------------------------

ExperimentOutput estimate_front_velocity(const RateFunction& rate, const FrontVelocityParams& p,
                                         const RunContext& ctx) {
  require_replicas(p.replicas);
  require_sorted_positive(p.t_grid, "t_grid", false);
  if (!(p.rho > 0.0)) throw ConfigError("front velocity needs rho > 0");
  const MarginalSampler sampler(rate, p.rho);
  FrontRunOptions opt;
  opt.horizon = p.t_grid.back();
  opt.half_width = front_half_width(rate, opt.horizon, p.window);

  struct Rep {
    std::vector<long> r;
    bool escaped;
  };
  auto reps = run_replicas<Rep>(p.replicas, ctx, [&](long r) {
    const auto run = run_front(rate, sampler, opt, SeedPath{p.seed, static_cast<std::uint64_t>(r)});
    Rep out{{}, run.escaped || run.path.values.empty()};
    for (double t : p.t_grid) out.r.push_back(out.escaped ? 0 : run.path.value_at(t) - run.path.values.front());
    return out;
  });

  ExperimentOutput out;
  out.table.header = {"replica", "t", "r_t", "escaped"};
  long excluded = 0;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    if (reps[i].escaped) ++excluded;
    for (std::size_t j = 0; j < p.t_grid.size(); ++j)
      out.table.add({fmt(static_cast<long>(i)), fmt(p.t_grid[j]), fmt(reps[i].r[j]), fmt(reps[i].escaped)});
  }
  for (std::size_t j = 0; j < p.t_grid.size(); ++j) {
    std::vector<double> v;
    for (const auto& rep : reps)
      if (!rep.escaped) v.push_back(static_cast<double>(rep.r[j]) / p.t_grid[j]);
    auto rep = mean_report("front-velocity", label_of("t", p.t_grid[j]), v, p.seed);
    rep.excluded = excluded;
    rep.parameters = {{"rho", p.rho}, {"t", p.t_grid[j]}, {"half_width", opt.half_width}};
    out.reports.push_back(rep);
    out.samples.push_back(std::move(v));
  }
  const auto& last = out.reports.back();
  out.summary["positive_finite_at_largest_t"] = last.ci_low > 0.0 && std::isfinite(last.ci_high);
  out.summary["excluded"] = excluded;
  out.summary["domain"] = Domain::interval(2 * opt.half_width + 1, opt.half_width).describe();
  return out;
}

ExperimentOutput martingale_concentration_test(const RateFunction& rate, const MartingaleParams& p,
                                               const RunContext& ctx) {
  require_replicas(p.replicas);
  require_sorted_positive(p.L_grid, "L_grid", false);
  if (!(p.delta > 0.0)) throw ConfigError("delta must be > 0");
  if (!(p.rho > 0.0)) throw ConfigError("martingale test needs rho > 0");
  const MarginalSampler sampler(rate, p.rho);
  FrontRunOptions opt;
  opt.horizon = p.L_grid.back();
  opt.half_width = front_half_width(rate, opt.horizon, p.window);

  struct Rep {
    std::vector<double> m;
    bool escaped;
  };
  auto reps = run_replicas<Rep>(p.replicas, ctx, [&](long r) {
    const auto run = run_front(rate, sampler, opt, SeedPath{p.seed, static_cast<std::uint64_t>(r)});
    Rep out{{}, run.escaped || !run.martingale.valid || run.martingale.values.empty()};
    for (double L : p.L_grid) out.m.push_back(out.escaped ? 0.0 : run.martingale.value_at(L));
    return out;
  });

  ExperimentOutput out;
  out.table.header = {"replica", "L", "M_L", "escaped"};
  std::vector<const Rep*> kept;
  long excluded = 0;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    if (reps[i].escaped)
      ++excluded;
    else
      kept.push_back(&reps[i]);
    for (std::size_t j = 0; j < p.L_grid.size(); ++j)
      out.table.add({fmt(static_cast<long>(i)), fmt(p.L_grid[j]), fmt(reps[i].m[j]), fmt(reps[i].escaped)});
  }
  const std::size_t m = p.L_grid.size();
  std::vector<std::vector<double>> hit(m), vals(m);
  for (const auto* rep : kept)
    for (std::size_t j = 0; j < m; ++j) {
      vals[j].push_back(rep->m[j]);
      hit[j].push_back(std::abs(rep->m[j]) >= p.delta * p.L_grid[j] ? 1.0 : 0.0);
    }
  std::vector<double> freq;
  bool zero_mean_all = true;
  for (std::size_t j = 0; j < m; ++j) {
    std::uint64_t h = 0;
    for (double x : hit[j]) h += x > 0.0 ? 1 : 0;
    auto rep = frequency_report("martingale-concentration", label_of("L", p.L_grid[j]), h, hit[j].size(), p.seed);
    const auto ms = mean_se(vals[j]);
    const bool ok = std::abs(ms.mean) <= 3.0 * ms.se || (ms.mean == 0.0 && ms.se == 0.0);
    zero_mean_all = zero_mean_all && ok;
    rep.details["mean_M"] = ms.mean;
    rep.details["se_M"] = ms.se;
    rep.details["zero_mean_within_3se"] = ok;
    rep.excluded = excluded;
    rep.parameters = {{"rho", p.rho}, {"L", p.L_grid[j]}, {"delta", p.delta}};
    freq.push_back(rep.estimate);
    out.reports.push_back(rep);
    out.samples.push_back(vals[j]);
  }
  TrendResult trend;
  if (!kept.empty() && m > 1) {
    Stream rng(SeedPath{p.seed, 0}, StreamTag::Bootstrap, 1);
    const auto bs = joint_bootstrap(
        kept.size(),
        [&](std::span<const std::size_t> idx) {
          std::vector<double> f(m, 0.0);
          for (auto i : idx)
            for (std::size_t j = 0; j < m; ++j) f[j] += hit[j][i];
          for (auto& x : f) x /= static_cast<double>(idx.size());
          return f;
        },
        p.bootstrap, 0.95, rng);
    trend = paired_trend(freq, bs.diff_se);
  }
  out.summary["frequency_non_increasing"] = trend.non_increasing;
  out.summary["trend_z"] = z_json(trend.z);
  out.summary["zero_mean_all"] = zero_mean_all;
  out.summary["excluded"] = excluded;
  return out;
}

ExperimentOutput displacement_tail_report(const RateFunction& rate, const DisplacementParams& p,
                                          const RunContext& ctx) {
  require_replicas(p.replicas);
  require_sorted_positive(p.t_grid, "t_grid", true);
  if (!(p.rho > 0.0)) throw ConfigError("displacement tails need rho > 0");
  const MarginalSampler sampler(rate, p.rho);
  const double gp = rate.gamma_plus();
  const double c_a = (2.0 + 4.0 * gp) * (p.rho + 1.0) + 1.0;
  FrontRunOptions opt;
  opt.horizon = p.t_grid.back();
  // The first event looks for displacements of order t^2; only the region
  // the front can reach matters, the rest is covered by the escape flag.
  opt.half_width = front_half_width(rate, opt.horizon, p.window);
  opt.condition_r0 = false;

  struct Rep {
    std::vector<std::array<bool, 3>> ev;
    bool escaped;
  };
  auto reps = run_replicas<Rep>(p.replicas, ctx, [&](long r) {
    Rep out{{}, false};
    if (opt.horizon > 0.0) {
      const auto run = run_front(rate, sampler, opt, SeedPath{p.seed, static_cast<std::uint64_t>(r)});
      out.escaped = run.escaped || run.path.values.empty();
      for (double t : p.t_grid) {
        std::array<bool, 3> e{false, false, false};
        if (!out.escaped && t > 0.0) {
          const long r0 = run.path.values.front();
          const long up = run.path.sup_until(t) - r0;
          const long down = r0 - run.path.inf_until(t);
          const long back = run.path.sup_until(t) - run.path.value_at(t);
          const double lin = (2.0 * gp + 1.0) * t;
          e = {up > 0 && static_cast<double>(up) >= c_a * t * t, down > 0 && static_cast<double>(down) >= lin,
               back > 0 && static_cast<double>(back) >= lin};
        }
        out.ev.push_back(e);
      }
    } else {
      out.ev.assign(p.t_grid.size(), {false, false, false});
    }
    return out;
  });

  ExperimentOutput out;
  out.table.header = {"replica", "t", "sup_minus_r0", "r0_minus_inf", "sup_minus_rt", "escaped"};
  long excluded = 0;
  std::vector<const Rep*> kept;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    if (reps[i].escaped)
      ++excluded;
    else
      kept.push_back(&reps[i]);
    for (std::size_t j = 0; j < p.t_grid.size(); ++j)
      out.table.add({fmt(static_cast<long>(i)), fmt(p.t_grid[j]), fmt(reps[i].ev[j][0]), fmt(reps[i].ev[j][1]),
                     fmt(reps[i].ev[j][2]), fmt(reps[i].escaped)});
  }
  const char* names[3] = {"sup-minus-start", "start-minus-inf", "sup-minus-end"};
  std::vector<double> backward;
  for (std::size_t j = 0; j < p.t_grid.size(); ++j)
    for (int e = 0; e < 3; ++e) {
      std::uint64_t h = 0;
      for (const auto* rep : kept) h += rep->ev[j][static_cast<std::size_t>(e)] ? 1 : 0;
      auto rep = frequency_report(std::string("displacement-tail/") + names[e], label_of("t", p.t_grid[j]), h,
                                  kept.size(), p.seed);
      const double t = p.t_grid[j];
      rep.parameters = {{"rho", p.rho}, {"t", t},
                        {"threshold", e == 0 ? c_a * t * t : (2.0 * gp + 1.0) * t}};
      rep.excluded = excluded;
      if (e == 1) backward.push_back(rep.estimate);
      out.reports.push_back(rep);
    }
  TrendResult trend;
  if (kept.size() > 0 && p.t_grid.size() > 1) {
    Stream rng(SeedPath{p.seed, 0}, StreamTag::Bootstrap, 2);
    const auto bs = joint_bootstrap(
        kept.size(),
        [&](std::span<const std::size_t> idx) {
          std::vector<double> f(p.t_grid.size(), 0.0);
          for (auto i : idx)
            for (std::size_t j = 0; j < f.size(); ++j) f[j] += kept[i]->ev[j][1] ? 1.0 : 0.0;
          for (auto& x : f) x /= static_cast<double>(idx.size());
          return f;
        },
        400, 0.95, rng);
    trend = paired_trend(backward, bs.diff_se);
  }
  out.summary["c_A"] = c_a;
  out.summary["start_minus_inf_non_increasing"] = trend.non_increasing;
  out.summary["trend_z"] = z_json(trend.z);
  out.summary["excluded"] = excluded;
  return out;
}

namespace {

class SiteMax : public Observer {
 public:
  SiteMax(const Simulator& sim, long site) : site_(site), max_(sim.count(site)) {}
  void on_event(const Simulator& sim, const MarkEvent& ev) override {
    if (ev.accepted && ev.y == site_) max_ = std::max(max_, sim.count(site_));
  }
  long max() const { return max_; }

 private:
  long site_;
  long max_;
};

}  // namespace

ExperimentOutput occupancy_excursion_check(const RateFunction& rate, const ExcursionParams& p,
                                           const RunContext& ctx) {
  require_replicas(p.replicas);
  require_sorted_positive(p.u_grid, "u_grid", true);
  if (!(p.t >= 0.0)) throw ConfigError("t must be >= 0");
  if (!(p.rho >= 0.0)) throw ConfigError("rho must be >= 0");
  const MarginalSampler sampler(rate, p.rho);
  const long n = p.sites > 0 ? p.sites
                             : std::max(32L, static_cast<long>(std::ceil(4.0 * (rate.gamma_plus() * p.t + 8.0))));
  const Domain domain = Domain::torus(n, 0);

  auto maxes = run_replicas<long>(p.replicas, ctx, [&](long r) {
    const SeedPath seed{p.seed, static_cast<std::uint64_t>(r)};
    Simulator sim(rate, domain, PileConfig::from_counts(sample_counts(sampler, domain, seed, StreamTag::InitialConfig)),
                  seed);
    SiteMax obs(sim, 0);
    std::vector<Observer*> o{&obs};
    sim.run_until(p.t, o);
    return obs.max();
  });

  ExperimentOutput out;
  out.table.header = {"replica", "max_occupancy"};
  for (std::size_t i = 0; i < maxes.size(); ++i) out.table.add({fmt(static_cast<long>(i)), fmt(maxes[i])});
  std::vector<double> xs, ys;
  for (double u : p.u_grid) {
    const double level = excursion_level(u, p.t, p.rho, rate.gamma_plus());
    std::uint64_t h = 0;
    for (long m : maxes) h += static_cast<double>(m) >= level ? 1 : 0;
    auto rep = frequency_report("occupancy-excursion", label_of("u", u), h, maxes.size(), p.seed);
    rep.parameters = {{"rho", p.rho}, {"t", p.t}, {"u", u}, {"level", level}, {"sites", n}};
    if (p.t == 0.0) rep.details["exact_tail"] = sampler.tail(static_cast<long>(std::ceil(level)));
    if (h > 0) {
      xs.push_back(u);
      ys.push_back(std::log(rep.estimate));
    }
    out.reports.push_back(rep);
  }
  if (xs.size() >= 2) {
    const auto f = fit_line(xs, ys);
    out.summary["log_frequency_slope"] = f.slope;
    out.summary["fitted_c"] = f.slope < 0.0 ? json(-1.0 / f.slope) : json(nullptr);
  } else {
    out.summary["log_frequency_slope"] = nullptr;
  }
  return out;
}

// ---------------------------------------------------------------------------

ExperimentOutput estimate_event_Ek(const RateFunction& rate, const EkParams& p, const RunContext& ctx) {
  require_replicas(p.replicas);
  if (p.v0_grid.empty()) throw ConfigError("v0_grid must not be empty");
  if (p.k < 0) throw ConfigError("k must be >= 0");
  ExperimentOutput out;
  out.table.header = {"L0", "replica", "E_per_v0", "D"};

  auto run_scale = [&](long L0, bool with_e) {
    const auto s = RenormSchedule::make(L0, p.growth, p.k, p.v0_grid.front(), p.rho0, p.eps0);
    const auto k = static_cast<std::size_t>(p.k);
    const MarginalSampler sampler(rate, s.rho[k]);
    const double L = static_cast<double>(s.L[k]);
    FrontRunOptions opt;
    opt.horizon = L;
    opt.half_width = box_half_width(s, p.k) + front_half_width(rate, L, p.window);
    opt.condition_r0 = false;
    struct Rep {
      std::vector<bool> e;
      bool d;
    };
    auto reps = run_replicas<Rep>(p.replicas, ctx, [&](long r) {
      const auto run = run_front(rate, sampler, opt, SeedPath{p.seed, static_cast<std::uint64_t>(r)});
      Rep rep{{}, !run.path.values.empty() && event_D(run.path, s, p.k)};
      for (double v0 : p.v0_grid)
        rep.e.push_back(event_E_velocity(run.path, s, p.k, v0 + (s.v[k] - s.v[0]), 0));
      return rep;
    });
    for (std::size_t i = 0; i < reps.size(); ++i) {
      std::string es;
      for (bool b : reps[i].e) es += b ? '1' : '0';
      out.table.add({fmt(L0), fmt(static_cast<long>(i)), es, fmt(reps[i].d)});
    }
    const json params = {{"L0", L0}, {"growth", p.growth}, {"k", p.k}, {"L_k", s.L[k]}, {"ell_k", s.ell[k]},
                         {"rho_k", s.rho[k]}, {"half_width", box_half_width(s, p.k)}};
    if (with_e) {
      for (std::size_t j = 0; j < p.v0_grid.size(); ++j) {
        std::uint64_t h = 0;
        for (const auto& rep : reps) h += rep.e[j] ? 1 : 0;
        auto rep = frequency_report("event-Ek", label_of("v0", p.v0_grid[j]), h, reps.size(), p.seed);
        rep.parameters = params;
        rep.parameters["v0"] = p.v0_grid[j];
        rep.parameters["v_k"] = p.v0_grid[j] + (s.v[k] - s.v[0]);
        out.reports.push_back(rep);
      }
    }
    std::uint64_t hd = 0;
    for (const auto& rep : reps) hd += rep.d ? 1 : 0;
    auto rep = frequency_report("event-Dk", label_of("L0", static_cast<double>(L0)), hd, reps.size(), p.seed);
    rep.parameters = params;
    out.reports.push_back(rep);
  };
  run_scale(p.L0, true);
  for (long L0 : p.L0_grid)
    if (L0 != p.L0) run_scale(L0, false);

  std::vector<double> pk;
  for (const auto& r : out.reports)
    if (r.kind == "event-Ek") pk.push_back(r.estimate);
  bool monotone = true;
  for (std::size_t j = 0; j + 1 < pk.size(); ++j) monotone = monotone && pk[j + 1] <= pk[j];
  out.summary["p_k_non_increasing_in_v0"] = p.v0_grid.size() > 1 ? json(monotone) : json(nullptr);
  return out;
}

ExperimentOutput estimate_event_Fk(const RateFunction& rate, const FkParams& p, const RunContext& ctx) {
  require_replicas(p.replicas);
  if (p.R_grid.empty()) throw ConfigError("R_grid must not be empty");
  for (std::size_t i = 0; i < p.R_grid.size(); ++i)
    if (p.R_grid[i] < 0 || (i && p.R_grid[i] <= p.R_grid[i - 1]))
      throw ConfigError("R_grid must be non-negative and strictly increasing");
  if (p.k < 0) throw ConfigError("k must be >= 0");
  const auto s = RenormSchedule::make(p.L0, p.growth, p.k, 0.0, p.rho0, p.eps0);
  const auto k = static_cast<std::size_t>(p.k);
  const double L = static_cast<double>(s.L[k]);
  const long ik = interval_half_width(s, p.k);
  const long half = ik + p.R_grid.back() + front_half_width(rate, L, p.window);
  const Domain domain = Domain::interval(2 * half + 1, half, EdgePolicy::Reflect);
  const double eps_k = s.eps[k];

  struct Rep {
    std::vector<bool> f;
    bool g;
    bool front_allowed;
  };
  auto reps = run_replicas<Rep>(p.replicas, ctx, [&](long r) {
    const SeedPath seed{p.seed, static_cast<std::uint64_t>(r)};
    const auto run = basic_monotone_coupling(rate, s.rho[k], s.rho_prime[k], domain, L, seed, true, false);
    std::vector<FrontPath> family;
    for (auto rule : {PathRule::Stay, PathRule::AlwaysLeft, PathRule::AlwaysRight, PathRule::GreedyLowest})
      family.push_back(allowed_path(rule, run.high_events, run.initial_low, run.low_events, domain, 0, -ik, ik, L));
    Rep rep{{}, true, false};
    auto front = front_path_of(run.initial_high, run.high_events, domain, 0, L);
    if (eta_allowed_check(front, run.high_events, domain, {0, -ik, ik})) {
      rep.front_allowed = true;
      family.push_back(std::move(front));
    }
    for (long R : p.R_grid) {
      bool any = false;
      for (const auto& g : family) {
        if (occupation_fraction(g, run.initial_low, run.low_events, domain, R, L).value <= eps_k) {
          any = true;
          break;
        }
      }
      rep.f.push_back(any);
    }
    // Extremal paths for scale k + 1; leaving I_k shows up as reaching +-(ik + 1).
    for (auto rule : {PathRule::AlwaysLeft, PathRule::AlwaysRight}) {
      const auto g = allowed_path(rule, run.high_events, run.initial_low, run.low_events, domain, 0, -ik - 1,
                                  ik + 1, L);
      for (long v : g.values)
        if (std::labs(v) > ik) rep.g = false;
    }
    return rep;
  });

  ExperimentOutput out;
  out.table.header = {"replica", "F_per_R", "G", "front_allowed"};
  for (std::size_t i = 0; i < reps.size(); ++i) {
    std::string fs;
    for (bool b : reps[i].f) fs += b ? '1' : '0';
    out.table.add({fmt(static_cast<long>(i)), fs, fmt(reps[i].g), fmt(reps[i].front_allowed)});
  }
  const json params = {{"L0", p.L0}, {"growth", p.growth}, {"k", p.k}, {"L_k", s.L[k]}, {"rho_k", s.rho[k]},
                       {"rho_prime_k", s.rho_prime[k]}, {"eps_k", eps_k}, {"I_k_half_width", ik}};
  std::vector<double> est;
  for (std::size_t j = 0; j < p.R_grid.size(); ++j) {
    std::uint64_t h = 0;
    for (const auto& rep : reps) h += rep.f[j] ? 1 : 0;
    auto rep = frequency_report("event-Fk", label_of("R", static_cast<double>(p.R_grid[j])), h, reps.size(), p.seed);
    rep.parameters = params;
    rep.parameters["R"] = p.R_grid[j];
    rep.details["meaning"] = "lower estimate of q_k (finite path family)";
    est.push_back(rep.estimate);
    out.reports.push_back(rep);
  }
  std::uint64_t hg = 0;
  for (const auto& rep : reps) hg += rep.g ? 1 : 0;
  auto rep = frequency_report("event-Gk", "extremal paths", hg, reps.size(), p.seed);
  rep.parameters = params;
  rep.details["meaning"] = "always-left and always-right paths stay in I_k up to L_k";
  out.reports.push_back(rep);
  bool monotone = true;
  for (std::size_t j = 0; j + 1 < est.size(); ++j) monotone = monotone && est[j + 1] <= est[j];
  out.summary["F_non_increasing_in_R"] = monotone;
  out.summary["estimate_meaning"] = "lower estimate of q_k";
  return out;
}

// ---------------------------------------------------------------------------

int FunctionalSpec::monotonicity() const {
  switch (kind) {
    case FunctionalKind::Constant:
      return 0;
    case FunctionalKind::MaxOccupancy:
    case FunctionalKind::IntegratedOccupancy:
      return 1;
    case FunctionalKind::EmptyBox:
      return -1;
  }
  return 0;
}

std::string FunctionalSpec::describe() const {
  switch (kind) {
    case FunctionalKind::Constant:
      return "constant";
    case FunctionalKind::MaxOccupancy:
      return "max-occupancy>=" + fmt(threshold);
    case FunctionalKind::IntegratedOccupancy:
      return "integrated-occupancy>=" + fmt(threshold);
    case FunctionalKind::EmptyBox:
      return "empty-box";
  }
  return "?";
}

FunctionalSpec FunctionalSpec::parse(const json& j) {
  FunctionalSpec f;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "constant")
    f.kind = FunctionalKind::Constant;
  else if (kind == "max-occupancy")
    f.kind = FunctionalKind::MaxOccupancy;
  else if (kind == "integrated-occupancy")
    f.kind = FunctionalKind::IntegratedOccupancy;
  else if (kind == "empty-box")
    f.kind = FunctionalKind::EmptyBox;
  else
    throw ConfigError("unknown functional kind '" + kind +
                      "' (expected constant, max-occupancy, integrated-occupancy, empty-box)");
  f.threshold = j.value("threshold", 1.0);
  return f;
}

std::vector<double> evaluate_box_functionals(const std::vector<long>& initial, const std::vector<MarkEvent>& events,
                                             const Domain& domain, double horizon,
                                             const std::vector<SiteBox>& boxes,
                                             const std::vector<FunctionalSpec>& specs) {
  if (boxes.size() != specs.size()) throw ConfigError("one functional per box is required");
  const std::size_t nb = boxes.size();
  std::vector<std::vector<char>> member(nb, std::vector<char>(static_cast<std::size_t>(domain.size), 0));
  for (std::size_t b = 0; b < nb; ++b) {
    const auto& bx = boxes[b];
    if (bx.x_hi < bx.x_lo || bx.x_hi - bx.x_lo + 1 > domain.size || bx.t_lo < 0.0 || bx.t_hi < bx.t_lo ||
        bx.t_hi > horizon)
      throw SupportViolation("functional box does not fit the simulated domain or horizon");
    for (long c = bx.x_lo; c <= bx.x_hi; ++c) {
      const long i = domain.index(c);
      if (i < 0) throw SupportViolation("functional box reaches outside the domain");
      member[b][static_cast<std::size_t>(i)] = 1;
    }
  }
  struct Acc {
    long sum = 0, max_seen = 0;
    double integral = 0.0, last_t = 0.0;
    bool nonempty = false, open = false;
  };
  std::vector<Acc> acc(nb);
  std::vector<long> counts = initial;

  struct Boundary {
    double t;
    std::size_t box;
    bool open;
  };
  std::vector<Boundary> bounds;
  for (std::size_t b = 0; b < nb; ++b) {
    bounds.push_back({boxes[b].t_lo, b, true});
    bounds.push_back({boxes[b].t_hi, b, false});
  }
  std::stable_sort(bounds.begin(), bounds.end(), [](const Boundary& a, const Boundary& b) {
    return a.t < b.t || (a.t == b.t && a.open && !b.open);
  });
  auto handle = [&](const Boundary& bd) {
    auto& a = acc[bd.box];
    if (bd.open) {
      a.open = true;
      a.last_t = bd.t;
      a.sum = 0;
      for (std::size_t x = 0; x < counts.size(); ++x)
        if (member[bd.box][x]) {
          a.sum += counts[x];
          a.max_seen = std::max(a.max_seen, counts[x]);
        }
      a.nonempty = a.sum > 0;
    } else {
      a.integral += static_cast<double>(a.sum) * (bd.t - a.last_t);
      a.open = false;
    }
  };
  std::size_t bi = 0;
  for (const auto& ev : events) {
    if (ev.t > horizon) break;
    while (bi < bounds.size() && bounds[bi].t < ev.t) handle(bounds[bi++]);
    if (!ev.accepted) continue;
    const auto x = static_cast<std::size_t>(ev.x);
    --counts[x];
    if (ev.y >= 0) ++counts[static_cast<std::size_t>(ev.y)];
    for (std::size_t b = 0; b < nb; ++b) {
      auto& a = acc[b];
      if (!a.open) continue;
      a.integral += static_cast<double>(a.sum) * (ev.t - a.last_t);
      a.last_t = ev.t;
      if (member[b][x]) --a.sum;
      if (ev.y >= 0 && member[b][static_cast<std::size_t>(ev.y)]) {
        ++a.sum;
        a.max_seen = std::max(a.max_seen, counts[static_cast<std::size_t>(ev.y)]);
      }
      if (a.sum > 0) a.nonempty = true;
    }
  }
  while (bi < bounds.size()) handle(bounds[bi++]);

  std::vector<double> out(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const auto& a = acc[b];
    switch (specs[b].kind) {
      case FunctionalKind::Constant:
        out[b] = 1.0;
        break;
      case FunctionalKind::MaxOccupancy:
        out[b] = static_cast<double>(a.max_seen) >= specs[b].threshold ? 1.0 : 0.0;
        break;
      case FunctionalKind::IntegratedOccupancy:
        out[b] = a.integral >= specs[b].threshold ? 1.0 : 0.0;
        break;
      case FunctionalKind::EmptyBox:
        out[b] = a.nonempty ? 0.0 : 1.0;
        break;
    }
  }
  return out;
}

namespace {

void check_sprinkling_sign(const FunctionalSpec& f1, const FunctionalSpec& f2, double eps) {
  const int m1 = f1.monotonicity(), m2 = f2.monotonicity();
  if (m1 * m2 < 0) throw ConfigError("f1 and f2 must have the same monotonicity");
  const int m = m1 != 0 ? m1 : m2;
  if (m >= 0 && !(eps > 0.0 && eps <= 1.0))
    throw ConfigError("epsilon must lie in (0, 1] for non-decreasing functionals");
  if (m < 0 && !(eps >= -1.0 && eps < 0.0))
    throw ConfigError("epsilon must lie in [-1, 0) for non-increasing functionals");
}

struct BoxRun {
  std::vector<double> values;
};

std::vector<double> simulate_boxes(const RateFunction& rate, const MarginalSampler& sampler, const Domain& domain,
                                   double horizon, const std::vector<SiteBox>& boxes,
                                   const std::vector<FunctionalSpec>& specs, const SeedPath& seed) {
  const auto init = sample_counts(sampler, domain, seed, StreamTag::InitialConfig);
  SimOptions so;
  so.record_events = true;
  const auto traj = evolve(PileConfig::from_counts(init), rate, domain, horizon, seed, so);
  return evaluate_box_functionals(init, traj.event_log, domain, horizon, boxes, specs);
}

}  // namespace

ExperimentOutput vertical_decoupling_test(const RateFunction& rate, const VerticalParams& p,
                                          const RunContext& ctx) {
  require_replicas(p.replicas);
  if (p.s < 1) throw ConfigError("box side s must be >= 1");
  if (p.dV_grid.empty()) throw ConfigError("dV_grid must not be empty");
  for (std::size_t i = 0; i < p.dV_grid.size(); ++i)
    if (p.dV_grid[i] < 1 || (i && p.dV_grid[i] <= p.dV_grid[i - 1]))
      throw ConfigError("dV_grid entries must be >= 1 and strictly increasing");
  check_sprinkling_sign(p.f1, p.f2, p.epsilon);
  if (!(p.rho >= 0.0) || !(p.rho + p.epsilon >= 0.0)) throw ConfigError("densities must be >= 0");

  const double s = static_cast<double>(p.s);
  const double T = 2.0 * s + static_cast<double>(p.dV_grid.back());
  const long n = p.sites > 0 ? p.sites
                             : std::max(64L, p.s + 1 +
                                                 2 * (static_cast<long>(std::ceil(4.0 * std::sqrt(T))) +
                                                      static_cast<long>(std::ceil(2.0 * rate.gamma_plus() * s)) + 16));
  const Domain domain = Domain::torus(n, (n - p.s) / 2);
  const std::size_t m = p.dV_grid.size();

  std::vector<SiteBox> boxes{{0, p.s, 0.0, s}};
  std::vector<FunctionalSpec> specs{p.f1};
  for (long d : p.dV_grid) {
    boxes.push_back({0, p.s, s + static_cast<double>(d), 2.0 * s + static_cast<double>(d)});
    specs.push_back(p.f2);
  }
  const MarginalSampler low(rate, p.rho), high(rate, p.rho + p.epsilon);
  auto joint = run_replicas<std::vector<double>>(p.replicas, ctx, [&](long r) {
    return simulate_boxes(rate, low, domain, T, boxes, specs, SeedPath{p.seed, static_cast<std::uint64_t>(r)});
  });
  // Independent runs at the sprinkled density; by stationarity both
  // functionals are read on the first box.
  const std::uint64_t rhs_seed = hash_combine(p.seed, 0x52485321ULL);
  const std::vector<SiteBox> rhs_boxes{{0, p.s, 0.0, s}, {0, p.s, 0.0, s}};
  const std::vector<FunctionalSpec> rhs_specs{p.f1, p.f2};
  auto indep = run_replicas<std::vector<double>>(p.replicas, ctx, [&](long r) {
    return simulate_boxes(rate, high, domain, s, rhs_boxes, rhs_specs,
                          SeedPath{rhs_seed, static_cast<std::uint64_t>(r)});
  });

  ExperimentOutput out;
  out.table.header = {"sample", "replica", "f1", "f2_per_dV"};
  for (std::size_t i = 0; i < joint.size(); ++i) {
    std::string f2s;
    for (std::size_t j = 0; j < m; ++j) f2s += joint[i][j + 1] > 0.5 ? '1' : '0';
    out.table.add({"joint", fmt(static_cast<long>(i)), fmt(joint[i][0]), f2s});
  }
  for (std::size_t i = 0; i < indep.size(); ++i)
    out.table.add({"sprinkled", fmt(static_cast<long>(i)), fmt(indep[i][0]), fmt(indep[i][1])});

  auto stats = [&](std::span<const std::size_t> ia, std::span<const std::size_t> ib) {
    double m1 = 0.0, m2 = 0.0;
    for (auto i : ib) {
      m1 += indep[i][0];
      m2 += indep[i][1];
    }
    m1 /= static_cast<double>(ib.size());
    m2 /= static_cast<double>(ib.size());
    std::vector<double> v(m, 0.0);
    for (auto i : ia)
      for (std::size_t j = 0; j < m; ++j) v[j] += joint[i][0] * joint[i][j + 1];
    for (auto& x : v) x = x / static_cast<double>(ia.size()) - m1 * m2;
    return v;
  };
  std::vector<std::size_t> all_a(joint.size()), all_b(indep.size());
  for (std::size_t i = 0; i < all_a.size(); ++i) all_a[i] = i;
  for (std::size_t i = 0; i < all_b.size(); ++i) all_b[i] = i;
  const auto est = stats(all_a, all_b);

  Stream rng(SeedPath{p.seed, 0}, StreamTag::Bootstrap, 3);
  std::vector<std::vector<double>> draws;
  std::vector<std::size_t> ia(joint.size()), ib(indep.size());
  for (int b = 0; b < p.bootstrap; ++b) {
    for (auto& i : ia) i = static_cast<std::size_t>(rng.below(joint.size()));
    for (auto& i : ib) i = static_cast<std::size_t>(rng.below(indep.size()));
    draws.push_back(stats(ia, ib));
  }
  const auto bs = summarise_bootstrap(draws, 0.95);

  double rhs1 = 0.0, rhs2 = 0.0;
  for (const auto& v : indep) {
    rhs1 += v[0];
    rhs2 += v[1];
  }
  rhs1 /= static_cast<double>(indep.size());
  rhs2 /= static_cast<double>(indep.size());
  std::vector<double> upper;
  for (std::size_t j = 0; j < m; ++j) {
    ExperimentReport rep;
    rep.kind = "vertical-decoupling";
    rep.label = label_of("dV", static_cast<double>(p.dV_grid[j]));
    rep.estimate = est[j];
    rep.ci_low = std::min(est[j], bs.ci[j].lo);
    rep.ci_high = std::max(est[j], bs.ci[j].hi);
    rep.ci_method = "bootstrap95";
    rep.replicas = static_cast<long>(joint.size());
    rep.seed = p.seed;
    const double d = static_cast<double>(p.dV_grid[j]);
    const double shape = d * (d + s + 1.0) * std::exp(-p.epsilon * p.epsilon * std::pow(d, 0.25));
    rep.parameters = {{"rho", p.rho}, {"epsilon", p.epsilon}, {"s", p.s}, {"dV", p.dV_grid[j]},
                      {"f1", p.f1.describe()}, {"f2", p.f2.describe()}, {"sites", n}};
    rep.details = {{"lhs", est[j] + rhs1 * rhs2}, {"rhs", rhs1 * rhs2}, {"rhs_f1", rhs1}, {"rhs_f2", rhs2},
                   {"bootstrap_se", bs.se[j]}, {"error_shape_unit_constant", shape},
                   {"vacuous_with_unit_constant", shape >= 1.0}};
    upper.push_back(rep.ci_high);
    out.reports.push_back(rep);
  }
  const auto trend = paired_trend(est, bs.diff_se);
  bool upper_monotone = true;
  for (std::size_t j = 0; j + 1 < upper.size(); ++j) upper_monotone = upper_monotone && upper[j + 1] <= upper[j];
  out.summary["gap_non_increasing"] = trend.non_increasing;
  out.summary["trend_z"] = z_json(trend.z);
  out.summary["upper_ci_strictly_ordered"] = upper_monotone;
  out.summary["upper_ci_at_largest_dV"] = upper.back();
  std::vector<double> lx, ly;
  for (std::size_t j = 0; j < m; ++j)
    if (est[j] > 0.0) {
      lx.push_back(std::log(static_cast<double>(p.dV_grid[j])));
      ly.push_back(std::log(est[j]));
    }
  // Log-log slope of the positive part of the gap; null when fewer than two
  // positive points.
  out.summary["positive_gap_decay_exponent"] = lx.size() >= 2 ? json(-fit_line(lx, ly).slope) : json(nullptr);
  out.summary["sites"] = n;
  return out;
}

ExperimentOutput horizontal_decoupling_test(const RateFunction& rate, const HorizontalParams& p,
                                            const RunContext& ctx) {
  require_replicas(p.replicas);
  if (p.s < 1) throw ConfigError("box side s must be >= 1");
  if (p.dH_grid.empty()) throw ConfigError("dH_grid must not be empty");
  for (std::size_t i = 0; i < p.dH_grid.size(); ++i)
    if (p.dH_grid[i] < 1 || (i && p.dH_grid[i] <= p.dH_grid[i - 1]))
      throw ConfigError("dH_grid entries must be >= 1 and strictly increasing");
  if (!(p.rho >= 0.0)) throw ConfigError("rho must be >= 0");
  const double s = static_cast<double>(p.s);
  const long margin = static_cast<long>(std::ceil(2.0 * rate.gamma_plus() * s)) + 16;
  // Both ways round the torus keep the boxes at least d_max apart.
  const long n = p.sites > 0 ? p.sites : 2 * (p.s + 1) + 2 * p.dH_grid.back() + 2 * margin;
  const Domain domain = Domain::torus(n, margin);
  const std::size_t m = p.dH_grid.size();
  std::vector<SiteBox> boxes{{0, p.s, 0.0, s}};
  std::vector<FunctionalSpec> specs{p.f1};
  for (long d : p.dH_grid) {
    boxes.push_back({p.s + d, 2 * p.s + d, 0.0, s});
    specs.push_back(p.f2);
  }
  const MarginalSampler sampler(rate, p.rho);
  auto vals = run_replicas<std::vector<double>>(p.replicas, ctx, [&](long r) {
    return simulate_boxes(rate, sampler, domain, s, boxes, specs, SeedPath{p.seed, static_cast<std::uint64_t>(r)});
  });

  ExperimentOutput out;
  out.table.header = {"replica", "f1", "f2_per_dH"};
  for (std::size_t i = 0; i < vals.size(); ++i) {
    std::string f2s;
    for (std::size_t j = 0; j < m; ++j) f2s += vals[i][j + 1] > 0.5 ? '1' : '0';
    out.table.add({fmt(static_cast<long>(i)), fmt(vals[i][0]), f2s});
  }
  auto cov = [&](std::span<const std::size_t> idx) {
    const double nn = static_cast<double>(idx.size());
    double a = 0.0;
    std::vector<double> b(m, 0.0), ab(m, 0.0);
    for (auto i : idx) {
      a += vals[i][0];
      for (std::size_t j = 0; j < m; ++j) {
        b[j] += vals[i][j + 1];
        ab[j] += vals[i][0] * vals[i][j + 1];
      }
    }
    std::vector<double> c(2 * m);
    for (std::size_t j = 0; j < m; ++j) {
      c[j] = ab[j] / nn - (a / nn) * (b[j] / nn);
      c[m + j] = std::abs(c[j]);
    }
    return c;
  };
  std::vector<std::size_t> all(vals.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto est = cov(all);
  Stream rng(SeedPath{p.seed, 0}, StreamTag::Bootstrap, 4);
  const auto bs = joint_bootstrap(vals.size(), cov, p.bootstrap, 0.95, rng);
  std::vector<double> abs_est, abs_diff_se, abs_upper;
  for (std::size_t j = 0; j < m; ++j) {
    ExperimentReport rep;
    rep.kind = "horizontal-decoupling";
    rep.label = label_of("dH", static_cast<double>(p.dH_grid[j]));
    rep.estimate = est[j];
    rep.ci_low = std::min(est[j], bs.ci[j].lo);
    rep.ci_high = std::max(est[j], bs.ci[j].hi);
    rep.ci_method = "bootstrap95";
    rep.replicas = static_cast<long>(vals.size());
    rep.seed = p.seed;
    rep.parameters = {{"rho", p.rho}, {"s", p.s}, {"dH", p.dH_grid[j]}, {"f1", p.f1.describe()},
                      {"f2", p.f2.describe()}, {"sites", n}};
    const double up = std::max(std::abs(rep.ci_low), std::abs(rep.ci_high));
    rep.details = {{"abs_covariance", est[m + j]}, {"abs_upper", up}, {"bootstrap_se", bs.se[j]}};
    abs_est.push_back(est[m + j]);
    abs_upper.push_back(up);
    if (j + 1 < m) abs_diff_se.push_back(bs.diff_se[m + j]);
    out.reports.push_back(rep);
  }
  const auto trend = paired_trend(abs_est, abs_diff_se);
  out.summary["abs_covariance_non_increasing"] = trend.non_increasing;
  out.summary["trend_z"] = z_json(trend.z);
  out.summary["sites"] = n;
  return out;
}

// ---------------------------------------------------------------------------

ExperimentOutput sprinkled_coupling_experiment(const RateFunction& rate, const SprinkledParams& p,
                                               const RunContext& ctx) {
  require_replicas(p.replicas);
  require_sorted_positive(p.t_grid, "t_grid", false);
  if (!(p.epsilon > 0.0 && p.epsilon <= 1.0)) throw ConfigError("epsilon must lie in (0, 1]");
  if (!(p.rho >= 0.0)) throw ConfigError("rho must be >= 0");
  if (p.a > p.b) throw ConfigError("interval I = [a, b] needs a <= b");
  if (p.t_grid.front() < 1.0) throw ConfigError("coupling horizon t must be >= 1");

  struct Rep {
    bool ok;
    double unmet;
    long unmatchable;
    bool b_event;
    EngineChecks checks;
  };
  ExperimentOutput out;
  out.table.header = {"replica", "t", "epsilon", "domination_ok", "unmet_fraction", "unmatchable_epochs", "b_event"};
  std::vector<TrendPoint> pts;
  EngineChecks total;
  for (double t : p.t_grid) {
    auto reps = run_replicas<Rep>(p.replicas, ctx, [&](long r) {
      CouplingOptions opt;
      opt.check_invariants = p.check_invariants;
      const auto run = sprinkled_coupling_run(rate, p.rho, p.epsilon, p.a, p.b, t,
                                              CouplingSeeds::from(SeedPath{p.seed, static_cast<std::uint64_t>(r)}), opt);
      return Rep{run.domination_ok, run.unmet_fraction, run.unmatchable_epochs, run.b_event, run.checks};
    });
    std::uint64_t fail = 0, bev = 0;
    double unmet = 0.0, unm = 0.0;
    for (std::size_t i = 0; i < reps.size(); ++i) {
      const auto& r = reps[i];
      fail += r.ok ? 0 : 1;
      bev += r.b_event ? 1 : 0;
      unmet += r.unmet;
      unm += static_cast<double>(r.unmatchable);
      total.events += r.checks.events;
      total.met_separations += r.checks.met_separations;
      total.pile_violations += r.checks.pile_violations;
      total.far_pairs += r.checks.far_pairs;
      out.table.add({fmt(static_cast<long>(i)), fmt(t), fmt(p.epsilon), fmt(r.ok), fmt(r.unmet),
                     fmt(r.unmatchable), fmt(r.b_event)});
    }
    auto rep = frequency_report("sprinkled-coupling", label_of("t", t), fail, reps.size(), p.seed);
    const double nn = static_cast<double>(std::max<std::size_t>(1, reps.size()));
    rep.parameters = {{"rho", p.rho}, {"epsilon", p.epsilon}, {"a", p.a}, {"b", p.b}, {"t", t}};
    rep.details = {{"failures", fail}, {"mean_unmet_fraction", unmet / nn}, {"mean_unmatchable_epochs", unm / nn},
                   {"b_event_frequency", static_cast<double>(bev) / nn}};
    pts.push_back({rep.estimate, std::sqrt(rep.estimate * (1.0 - rep.estimate) / nn)});
    out.reports.push_back(rep);
  }
  const auto trend = non_increasing_trend(pts);
  out.summary["failure_non_increasing"] = trend.non_increasing;
  out.summary["trend_z"] = z_json(trend.z);
  out.summary["checks"] = {{"events", total.events}, {"met_separations", total.met_separations},
                           {"pile_violations", total.pile_violations}, {"far_pairs", total.far_pairs}};
  return out;
}

ExperimentOutput simultaneous_coupling_experiment(const RateFunction& rate, const SimultaneousParams& p,
                                                  const RunContext& ctx) {
  require_replicas(p.replicas);
  require_sorted_positive(p.t_grid, "t_grid", false);
  if (!(p.epsilon > 0.0 && p.epsilon <= 1.0)) throw ConfigError("epsilon must lie in (0, 1]");
  if (!(p.rho <= p.rho_prime)) throw ConfigError("rho must be <= rho_prime");
  if (!(p.rho - p.epsilon >= std::max(0.0, p.rho_minus))) throw ConfigError("rho - epsilon must be >= rho_minus");
  if (p.a > p.b) throw ConfigError("interval I = [a, b] needs a <= b");
  if (p.t_grid.front() < 1.0) throw ConfigError("coupling horizon t must be >= 1");

  struct Rep {
    bool fail;
    std::uint64_t order;
    EngineChecks checks;
  };
  ExperimentOutput out;
  out.table.header = {"replica", "t", "epsilon", "joint_failure", "order_violations"};
  std::vector<TrendPoint> pts;
  std::uint64_t order_total = 0, pile_total = 0, sep_total = 0;
  for (double t : p.t_grid) {
    auto reps = run_replicas<Rep>(p.replicas, ctx, [&](long r) {
      CouplingOptions opt;
      opt.check_invariants = p.check_invariants;
      const auto run =
          simultaneous_coupling_run(rate, p.rho, p.rho_prime, p.epsilon, p.a, p.b, t,
                                    CouplingSeeds::from(SeedPath{p.seed, static_cast<std::uint64_t>(r)}), opt,
                                    p.rho_minus);
      return Rep{run.joint_failure, run.order_violations, run.base.checks};
    });
    std::uint64_t fail = 0;
    for (std::size_t i = 0; i < reps.size(); ++i) {
      fail += reps[i].fail ? 1 : 0;
      order_total += reps[i].order;
      pile_total += reps[i].checks.pile_violations;
      sep_total += reps[i].checks.met_separations;
      out.table.add({fmt(static_cast<long>(i)), fmt(t), fmt(p.epsilon), fmt(reps[i].fail),
                     fmt(static_cast<long>(reps[i].order))});
    }
    auto rep = frequency_report("simultaneous-coupling", label_of("t", t), fail, reps.size(), p.seed);
    rep.parameters = {{"rho", p.rho}, {"rho_prime", p.rho_prime}, {"epsilon", p.epsilon}, {"a", p.a},
                      {"b", p.b}, {"t", t}, {"phase_one_epochs", phase_one_epoch_count(t)}};
    const double nn = static_cast<double>(std::max<std::size_t>(1, reps.size()));
    pts.push_back({rep.estimate, std::sqrt(rep.estimate * (1.0 - rep.estimate) / nn)});
    out.reports.push_back(rep);
  }
  const auto trend = non_increasing_trend(pts);
  out.summary["failure_non_increasing"] = trend.non_increasing;
  out.summary["trend_z"] = z_json(trend.z);
  out.summary["order_violations"] = order_total;
  out.summary["pile_violations"] = pile_total;
  out.summary["met_separations"] = sep_total;
  return out;
}

}  // namespace zrp
