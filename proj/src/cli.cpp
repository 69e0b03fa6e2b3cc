#include "zrplab/cli.hpp"

#include <CLI11.hpp>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "zrplab/digest.hpp"
#include "zrplab/errors.hpp"
#include "zrplab/experiments.hpp"
#include "zrplab/oracle.hpp"
#include "zrplab/rates.hpp"
#include "zrplab/simulator.hpp"

namespace zrp::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_cancel{false};

extern "C" void on_sigint(int) { g_cancel.store(true); }

// Reads typed fields out of the "parameters" object with field-level errors.
class Params {
 public:
  explicit Params(const json& j) : j_(j) {}

  template <class T>
  void get(const char* name, T& dst) {
    auto it = j_.find(name);
    if (it == j_.end()) return;
    try {
      dst = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("parameters.") + name + ": expected " + expected<T>() + ", got " + it->dump());
    }
  }

  void get(const char* name, FunctionalSpec& dst) {
    auto it = j_.find(name);
    if (it == j_.end()) return;
    try {
      dst = FunctionalSpec::parse(*it);
    } catch (const json::exception&) {
      throw ConfigError(std::string("parameters.") + name + ": expected {\"kind\": ..., \"threshold\": number}");
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("parameters.") + name + ": " + e.what());
    }
  }

 private:
  template <class T>
  static std::string expected() {
    if constexpr (std::is_same_v<T, bool>)
      return "boolean";
    else if constexpr (std::is_integral_v<T>)
      return "integer";
    else if constexpr (std::is_floating_point_v<T>)
      return "number";
    else
      return "array of numbers";
  }
  const json& j_;
};

const char* functional_name(FunctionalKind k) {
  switch (k) {
    case FunctionalKind::Constant:
      return "constant";
    case FunctionalKind::MaxOccupancy:
      return "max-occupancy";
    case FunctionalKind::IntegratedOccupancy:
      return "integrated-occupancy";
    case FunctionalKind::EmptyBox:
      return "empty-box";
  }
  return "?";
}

json functional_json(const FunctionalSpec& f) { return {{"kind", functional_name(f.kind)}, {"threshold", f.threshold}}; }

struct RunArgs {
  std::uint64_t seed = 0;
  long replicas = 1;
  RunContext ctx;
};

using Runner = std::function<ExperimentOutput(const RateFunction&, const json&, const RunArgs&)>;

struct Entry {
  std::string kind;
  std::string description;
  json defaults;
  Runner run;
};

// ---------------------------------------------------------------------------
// raw-simulate and oracle-check live here; the rest forward to experiments.

struct RawParams {
  long sites = 16;
  double rho = 1.0;
  double t = 1.0;
  std::vector<double> snapshot_times;
};

ExperimentOutput raw_simulate(const RateFunction& rate, const RawParams& p, const RunArgs& a) {
  if (p.sites < 1) throw ConfigError("parameters.sites: must be >= 1");
  if (!(p.rho >= 0.0)) throw ConfigError("parameters.rho: must be >= 0");
  if (!(p.t >= 0.0)) throw ConfigError("parameters.t: must be >= 0");
  std::vector<double> snaps = p.snapshot_times.empty() ? std::vector<double>{p.t} : p.snapshot_times;
  for (std::size_t i = 0; i < snaps.size(); ++i)
    if (snaps[i] < 0.0 || snaps[i] > p.t || (i && snaps[i] <= snaps[i - 1]))
      throw ConfigError("parameters.snapshot_times: must be strictly increasing within [0, t]");
  const Domain domain = Domain::torus(p.sites, 0);
  const MarginalSampler sampler(rate, p.rho);
  auto trajs = run_replicas<Trajectory>(a.replicas, a.ctx, [&](long r) {
    const SeedPath seed{a.seed, static_cast<std::uint64_t>(r)};
    SimOptions so;
    so.snapshot_times = snaps;
    so.check_conservation = true;
    return evolve(sample_stationary_config(sampler, domain, seed), rate, domain, p.t, seed, so);
  });
  ExperimentOutput out;
  out.table.header = {"replica", "time", "site", "count"};
  double mean = 0.0;
  long cells = 0;
  for (std::size_t i = 0; i < trajs.size(); ++i)
    for (const auto& s : trajs[i].snapshots)
      for (std::size_t x = 0; x < s.counts.size(); ++x) {
        out.table.add({fmt(static_cast<long>(i)), fmt(s.t), fmt(domain.coord(static_cast<long>(x))),
                       fmt(s.counts[x])});
        mean += static_cast<double>(s.counts[x]);
        ++cells;
      }
  out.summary["mean_occupancy"] = cells ? mean / static_cast<double>(cells) : 0.0;
  out.summary["replicas_completed"] = trajs.size();
  return out;
}

struct OracleParams {
  long sites = 4;
  long particles = 3;
  std::vector<double> t_grid{0.5, 1.0, 2.0};
  std::vector<long> initial;  // default: all particles on site 0
};

ExperimentOutput oracle_check(const RateFunction& rate, const OracleParams& p, const RunArgs& a) {
  if (p.sites < 1 || p.particles < 0) throw ConfigError("parameters.sites >= 1 and parameters.particles >= 0");
  std::vector<long> init = p.initial;
  if (init.empty()) {
    init.assign(static_cast<std::size_t>(p.sites), 0);
    init[0] = p.particles;
  }
  long total = 0;
  for (long c : init) total += c < 0 ? -1'000'000 : c;
  if (static_cast<long>(init.size()) != p.sites || total != p.particles)
    throw ConfigError("parameters.initial: needs `sites` non-negative entries summing to `particles`");
  for (std::size_t i = 0; i < p.t_grid.size(); ++i)
    if (p.t_grid[i] < 0.0 || (i && p.t_grid[i] <= p.t_grid[i - 1]))
      throw ConfigError("parameters.t_grid: must be non-negative and strictly increasing");

  const auto q = build_generator(rate, p.sites, p.particles);
  const double residual = stationarity_residual(q, canonical_weights(rate, q.space));
  std::vector<int> eta0(init.begin(), init.end());
  std::vector<double> start(static_cast<std::size_t>(q.space.size()), 0.0);
  start[static_cast<std::size_t>(q.space.index(eta0))] = 1.0;

  const Domain domain = Domain::torus(p.sites, 0);
  auto states = run_replicas<std::vector<long>>(a.replicas, a.ctx, [&](long r) {
    SimOptions so;
    so.snapshot_times = p.t_grid;
    const auto tr = evolve(PileConfig::from_counts(init), rate, domain, p.t_grid.empty() ? 0.0 : p.t_grid.back(),
                           SeedPath{a.seed, static_cast<std::uint64_t>(r)}, so);
    std::vector<long> idx;
    for (const auto& s : tr.snapshots) idx.push_back(q.space.index(std::vector<int>(s.counts.begin(), s.counts.end())));
    return idx;
  });

  ExperimentOutput out;
  out.table.header = {"t", "state", "configuration", "oracle", "empirical"};
  json tv_table = json::array();
  for (std::size_t j = 0; j < p.t_grid.size(); ++j) {
    const auto law = transient_distribution(q, start, p.t_grid[j]);
    std::vector<double> emp(law.size(), 0.0);
    for (const auto& s : states) emp[static_cast<std::size_t>(s[j])] += 1.0;
    for (auto& e : emp) e /= static_cast<double>(std::max<std::size_t>(1, states.size()));
    const double tv = total_variation(law, emp);
    tv_table.push_back({{"t", p.t_grid[j]}, {"tv", tv}});
    for (long i = 0; i < q.space.size(); ++i) {
      std::string cfg;
      for (int c : q.space.state(i)) cfg += (cfg.empty() ? "" : " ") + std::to_string(c);
      out.table.add({fmt(p.t_grid[j]), fmt(i), cfg, fmt(law[static_cast<std::size_t>(i)]),
                     fmt(emp[static_cast<std::size_t>(i)])});
    }
    ExperimentReport rep;
    rep.kind = "oracle-check";
    rep.label = "t=" + fmt(p.t_grid[j]);
    rep.estimate = tv;
    rep.ci_low = tv;
    rep.ci_high = tv;
    rep.ci_method = "none";
    rep.replicas = static_cast<long>(states.size());
    rep.seed = a.seed;
    rep.parameters = {{"N", p.sites}, {"M", p.particles}, {"t", p.t_grid[j]}};
    out.reports.push_back(rep);
  }
  out.summary = {{"N", p.sites},
                 {"M", p.particles},
                 {"states", q.space.size()},
                 {"rate_hash", rate.digest()},
                 {"residual", residual},
                 {"tv", tv_table}};
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Entry> make_entries() {
  std::vector<Entry> e;

  {
    RawParams d;
    e.push_back({"raw-simulate", "stationary torus simulation with occupancy snapshots",
                 {{"sites", d.sites}, {"rho", d.rho}, {"t", d.t}, {"snapshot_times", d.snapshot_times}},
                 [](const RateFunction& rate, const json& j, const RunArgs& a) {
                   RawParams p;
                   Params g(j);
                   g.get("sites", p.sites);
                   g.get("rho", p.rho);
                   g.get("t", p.t);
                   g.get("snapshot_times", p.snapshot_times);
                   return raw_simulate(rate, p, a);
                 }});
  }
  {
    OracleParams d;
    e.push_back({"oracle-check", "exact generator on a small torus: stationarity residual and simulator TV table",
                 {{"sites", d.sites}, {"particles", d.particles}, {"t_grid", d.t_grid}, {"initial", d.initial}},
                 [](const RateFunction& rate, const json& j, const RunArgs& a) {
                   OracleParams p;
                   Params g(j);
                   g.get("sites", p.sites);
                   g.get("particles", p.particles);
                   g.get("t_grid", p.t_grid);
                   g.get("initial", p.initial);
                   return oracle_check(rate, p, a);
                 }});
  }
  {
    FrontVelocityParams d;
    e.push_back({"front-velocity", "r_t / t of the infection front with normal confidence intervals",
                 {{"rho", d.rho}, {"t_grid", d.t_grid}, {"window", d.window}},
                 [](const RateFunction& rate, const json& j, const RunArgs& a) {
                   FrontVelocityParams p;
                   Params g(j);
                   g.get("rho", p.rho);
                   g.get("t_grid", p.t_grid);
                   g.get("window", p.window);
                   p.seed = a.seed;
                   p.replicas = a.replicas;
                   return estimate_front_velocity(rate, p, a.ctx);
                 }});
  }
  {
    MartingaleParams d;
    e.push_back({"martingale-concentration", "frequency of |M_L| >= delta L and the mean of M_L",
                 {{"rho", d.rho}, {"L_grid", d.L_grid}, {"delta", d.delta}, {"window", d.window},
                  {"bootstrap", d.bootstrap}},
                 [](const RateFunction& rate, const json& j, const RunArgs& a) {
                   MartingaleParams p;
                   Params g(j);
                   g.get("rho", p.rho);
                   g.get("L_grid", p.L_grid);
                   g.get("delta", p.delta);
                   g.get("window", p.window);
                   g.get("bootstrap", p.bootstrap);
                   p.seed = a.seed;
                   p.replicas = a.replicas;
                   return martingale_concentration_test(rate, p, a.ctx);
                 }});
  }
  {
    DisplacementParams d;
    e.push_back({"displacement-tails", "tail frequencies of the front displacement",
                 {{"rho", d.rho}, {"t_grid", d.t_grid}, {"window", d.window}},
                 [](const RateFunction& rate, const json& j, const RunArgs& a) {
                   DisplacementParams p;
                   Params g(j);
                   g.get("rho", p.rho);
                   g.get("t_grid", p.t_grid);
                   g.get("window", p.window);
                   p.seed = a.seed;
                   p.replicas = a.replicas;
                   return displacement_tail_report(rate, p, a.ctx);
                 }});
  }
  {
    ExcursionParams d;
    e.push_back({"occupancy-excursion", "frequency of eta_s(0) >= A(u, t) for some s <= t",
                 {{"rho", d.rho}, {"t", d.t}, {"u_grid", d.u_grid}, {"sites", d.sites}},
                 [](const RateFunction& rate, const json& j, const RunArgs& a) {
                   ExcursionParams p;
                   Params g(j);
                   g.get("rho", p.rho);
                   g.get("t", p.t);
                   g.get("u_grid", p.u_grid);
                   g.get("sites", p.sites);
                   p.seed = a.seed;
                   p.replicas = a.replicas;
                   return occupancy_excursion_check(rate, p, a.ctx);
                 }});
  }
  {
    EkParams d;
    e.push_back({"event-ek", "box exit event E_k and confinement event D_k of the front",
                 {{"L0", d.L0}, {"growth", d.growth}, {"k", d.k}, {"v0_grid", d.v0_grid}, {"rho0", d.rho0},
                  {"eps0", d.eps0}, {"L0_grid", d.L0_grid}, {"window", d.window}},
                 [](const RateFunction& rate, const json& j, const RunArgs& a) {
                   EkParams p;
                   Params g(j);
                   g.get("L0", p.L0);
                   g.get("growth", p.growth);
                   g.get("k", p.k);
                   g.get("v0_grid", p.v0_grid);
                   g.get("rho0", p.rho0);
                   g.get("eps0", p.eps0);
                   g.get("L0_grid", p.L0_grid);
                   g.get("window", p.window);
                   for (long L0 : p.L0_grid) RenormSchedule::make(L0, p.growth, p.k, 0.0, p.rho0, p.eps0);
                   p.seed = a.seed;
                   p.replicas = a.replicas;
                   return estimate_event_Ek(rate, p, a.ctx);
                 }});
  }
  {
    FkParams d;
    e.push_back({"event-fk", "path event F_k^R on a finite allowed-path family (lower estimate) and G_k",
                 {{"L0", d.L0}, {"growth", d.growth}, {"k", d.k}, {"R_grid", d.R_grid}, {"rho0", d.rho0},
                  {"eps0", d.eps0}, {"window", d.window}},
                 [](const RateFunction& rate, const json& j, const RunArgs& a) {
                   FkParams p;
                   Params g(j);
                   g.get("L0", p.L0);
                   g.get("growth", p.growth);
                   g.get("k", p.k);
                   g.get("R_grid", p.R_grid);
                   g.get("rho0", p.rho0);
                   g.get("eps0", p.eps0);
                   g.get("window", p.window);
                   p.seed = a.seed;
                   p.replicas = a.replicas;
                   return estimate_event_Fk(rate, p, a.ctx);
                 }});
  }
  {
    VerticalParams d;
    e.push_back({"vertical-decoupling", "E_rho[f1 f2] - E_{rho+eps}[f1] E_{rho+eps}[f2] over time separations",
                 {{"rho", d.rho}, {"epsilon", d.epsilon}, {"s", d.s}, {"dV_grid", d.dV_grid},
                  {"f1", functional_json(d.f1)}, {"f2", functional_json(d.f2)}, {"bootstrap", d.bootstrap},
                  {"sites", d.sites}},
                 [](const RateFunction& rate, const json& j, const RunArgs& a) {
                   VerticalParams p;
                   Params g(j);
                   g.get("rho", p.rho);
                   g.get("epsilon", p.epsilon);
                   g.get("s", p.s);
                   g.get("dV_grid", p.dV_grid);
                   g.get("f1", p.f1);
                   g.get("f2", p.f2);
                   g.get("bootstrap", p.bootstrap);
                   g.get("sites", p.sites);
                   p.seed = a.seed;
                   p.replicas = a.replicas;
                   return vertical_decoupling_test(rate, p, a.ctx);
                 }});
  }
  {
    HorizontalParams d;
    e.push_back({"horizontal-decoupling", "covariance of box functionals over space separations",
                 {{"rho", d.rho}, {"s", d.s}, {"dH_grid", d.dH_grid}, {"f1", functional_json(d.f1)},
                  {"f2", functional_json(d.f2)}, {"bootstrap", d.bootstrap}, {"sites", d.sites}},
                 [](const RateFunction& rate, const json& j, const RunArgs& a) {
                   HorizontalParams p;
                   Params g(j);
                   g.get("rho", p.rho);
                   g.get("s", p.s);
                   g.get("dH_grid", p.dH_grid);
                   g.get("f1", p.f1);
                   g.get("f2", p.f2);
                   g.get("bootstrap", p.bootstrap);
                   g.get("sites", p.sites);
                   p.seed = a.seed;
                   p.replicas = a.replicas;
                   return horizontal_decoupling_test(rate, p, a.ctx);
                 }});
  }
  {
    SprinkledParams d;
    e.push_back({"sprinkled-coupling", "domination failure frequency of the sprinkled coupling on I = [a, b]",
                 {{"rho", d.rho}, {"epsilon", d.epsilon}, {"a", d.a}, {"b", d.b}, {"t_grid", d.t_grid},
                  {"check_invariants", d.check_invariants}},
                 [](const RateFunction& rate, const json& j, const RunArgs& a) {
                   SprinkledParams p;
                   Params g(j);
                   g.get("rho", p.rho);
                   g.get("epsilon", p.epsilon);
                   g.get("a", p.a);
                   g.get("b", p.b);
                   g.get("t_grid", p.t_grid);
                   g.get("check_invariants", p.check_invariants);
                   p.seed = a.seed;
                   p.replicas = a.replicas;
                   return sprinkled_coupling_experiment(rate, p, a.ctx);
                 }});
  }
  {
    SimultaneousParams d;
    e.push_back({"simultaneous-coupling", "joint failure frequency of the four-process coupling on I = [a, b]",
                 {{"rho", d.rho}, {"rho_prime", d.rho_prime}, {"epsilon", d.epsilon}, {"rho_minus", d.rho_minus},
                  {"a", d.a}, {"b", d.b}, {"t_grid", d.t_grid}, {"check_invariants", d.check_invariants}},
                 [](const RateFunction& rate, const json& j, const RunArgs& a) {
                   SimultaneousParams p;
                   Params g(j);
                   g.get("rho", p.rho);
                   g.get("rho_prime", p.rho_prime);
                   g.get("epsilon", p.epsilon);
                   g.get("rho_minus", p.rho_minus);
                   g.get("a", p.a);
                   g.get("b", p.b);
                   g.get("t_grid", p.t_grid);
                   g.get("check_invariants", p.check_invariants);
                   p.seed = a.seed;
                   p.replicas = a.replicas;
                   return simultaneous_coupling_experiment(rate, p, a.ctx);
                 }});
  }
  return e;
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> e = make_entries();
  return e;
}

const Entry& find_entry(const std::string& kind) {
  for (const auto& e : entries())
    if (e.kind == kind) return e;
  std::string known;
  for (const auto& e : entries()) known += (known.empty() ? "" : ", ") + e.kind;
  throw ConfigError("kind: unknown experiment '" + kind + "' (known: " + known + ")");
}

std::string type_name(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "string";
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<long> replicas;
  std::optional<int> workers;
  std::optional<std::string> out;
  std::string format = "csv";
};

struct Prepared {
  const Entry* entry = nullptr;
  json effective;  // everything that determines the results
  RateFunction rate = RateFunction::linear(1.0);
  RunArgs args;
  fs::path out_dir;
};

Prepared prepare(const Overrides& o) {
  json cfg;
  {
    std::ifstream in(o.config);
    if (!in) throw ConfigError("config: cannot read '" + o.config + "'");
    try {
      cfg = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config: not valid JSON (" + std::string(e.what()) + ")");
    }
  }
  if (!cfg.is_object()) throw ConfigError("config: top level must be an object");
  static const std::vector<std::string> allowed{"kind", "seed", "replicas", "workers", "out", "rate", "parameters"};
  for (auto it = cfg.begin(); it != cfg.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError("config: unknown field '" + it.key() + "'");
  if (!cfg.contains("kind") || !cfg["kind"].is_string()) throw ConfigError("kind: required string field");

  Prepared p;
  p.entry = &find_entry(cfg["kind"].get<std::string>());

  auto read_int = [&](const char* name, auto& dst) {
    if (!cfg.contains(name)) return false;
    if (!cfg[name].is_number_integer()) throw ConfigError(std::string(name) + ": expected integer");
    dst = cfg[name].get<std::remove_reference_t<decltype(dst)>>();
    return true;
  };
  std::uint64_t seed = 0;
  bool have_seed = false;
  if (cfg.contains("seed")) {
    if (!cfg["seed"].is_number_unsigned()) throw ConfigError("seed: expected unsigned integer");
    seed = cfg["seed"].get<std::uint64_t>();
    have_seed = true;
  }
  if (o.seed) {
    seed = *o.seed;
    have_seed = true;
  }
  if (!have_seed) throw ConfigError("seed: required (config field or --seed); runs are never seeded from the clock");
  long replicas = 1;
  read_int("replicas", replicas);
  if (o.replicas) replicas = *o.replicas;
  if (replicas < 1) throw ConfigError("replicas: must be >= 1");
  int workers = 1;
  read_int("workers", workers);
  if (o.workers) workers = *o.workers;
  if (workers < 1) throw ConfigError("workers: must be >= 1");

  std::string out = "results";
  if (const char* env = std::getenv("ZRPLAB_OUT"); env && *env) out = env;
  if (cfg.contains("out")) {
    if (!cfg["out"].is_string()) throw ConfigError("out: expected string");
    out = cfg["out"].get<std::string>();
  }
  if (o.out) out = *o.out;
  p.out_dir = out;

  json rate_json = {{"kind", "linear"}, {"scale", 1.0}};
  if (cfg.contains("rate")) {
    const auto& r = cfg["rate"];
    if (r.is_string()) {
      fs::path rp = r.get<std::string>();
      if (rp.is_relative()) rp = fs::path(o.config).parent_path() / rp;
      std::ifstream in(rp);
      if (!in) throw ConfigError("rate: cannot read '" + rp.string() + "'");
      try {
        rate_json = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ConfigError("rate: not valid JSON (" + std::string(e.what()) + ")");
      }
    } else if (r.is_object()) {
      rate_json = r;
    } else {
      throw ConfigError("rate: expected an object or a file path");
    }
  }
  p.rate = rate_function_from_json_text(rate_json.dump());

  json params = p.entry->defaults;
  if (cfg.contains("parameters")) {
    const auto& given = cfg["parameters"];
    if (!given.is_object()) throw ConfigError("parameters: expected an object");
    for (auto it = given.begin(); it != given.end(); ++it) {
      if (!params.contains(it.key()))
        throw ConfigError("parameters." + it.key() + ": unknown parameter for " + p.entry->kind);
      params[it.key()] = it.value();
    }
  }
  p.args.seed = seed;
  p.args.replicas = replicas;
  p.args.ctx.workers = workers;
  p.args.ctx.cancel = &g_cancel;
  // Worker count and output location do not change results, so they stay
  // out of the digest.
  p.effective = {{"kind", p.entry->kind}, {"seed", seed}, {"replicas", replicas}, {"rate", rate_json},
                 {"parameters", params}};
  return p;
}

void write_outputs(const Prepared& p, const ExperimentOutput& res, const std::string& format, bool interrupted,
                   fs::path& table_path, fs::path& summary_path) {
  fs::create_directories(p.out_dir);
  const std::string stem = p.entry->kind;
  table_path = p.out_dir / (stem + (format == "json" ? ".table.json" : ".csv"));
  summary_path = p.out_dir / (stem + ".json");
  {
    std::ofstream t(table_path, std::ios::binary);
    if (format == "json") {
      json rows = json::array();
      for (const auto& r : res.table.rows) {
        json row = json::object();
        for (std::size_t i = 0; i < r.size() && i < res.table.header.size(); ++i) row[res.table.header[i]] = r[i];
        rows.push_back(row);
      }
      t << rows.dump(2) << '\n';
    } else {
      res.table.write_csv(t);
    }
    if (!t) throw Error("cannot write " + table_path.string());
  }
  json reports = json::array();
  for (const auto& r : res.reports) reports.push_back(r.to_json());
  const json summary = {{"kind", p.entry->kind},
                        {"config_digest", hex64(fnv1a64(p.effective.dump()))},
                        {"config", p.effective},
                        {"rate", p.rate.describe()},
                        {"rate_digest", hex64(p.rate.digest())},
                        {"interrupted", interrupted},
                        {"reports", reports},
                        {"summary", res.summary}};
  std::ofstream s(summary_path, std::ios::binary);
  s << summary.dump(2) << '\n';
  if (!s) throw Error("cannot write " + summary_path.string());
}

int run_command(const Overrides& o, std::ostream& out, std::ostream& err) {
  Prepared p;
  try {
    p = prepare(o);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IncrementViolation& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NonzeroAtZero& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  g_cancel.store(false);
  auto previous = std::signal(SIGINT, on_sigint);
  struct Restore {
    decltype(previous) h;
    ~Restore() { std::signal(SIGINT, h); }
  } restore{previous};

  const auto t0 = std::chrono::steady_clock::now();
  ExperimentOutput res;
  try {
    res = p.entry->run(p.rate, p.effective["parameters"], p.args);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    if (g_cancel.load()) {
      err << "interrupted before any result could be summarised (" << e.what() << ")\n";
      return kExitRuntime;
    }
    err << "runtime error in " << p.entry->kind << ": " << e.what() << '\n';
    return kExitRuntime;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (auto& r : res.reports) r.wall_time = wall;
  const bool interrupted = g_cancel.load();

  fs::path table_path, summary_path;
  try {
    write_outputs(p, res, o.format, interrupted, table_path, summary_path);
  } catch (const std::exception& e) {
    err << "runtime error writing results: " << e.what() << '\n';
    return kExitRuntime;
  }
  out << p.entry->kind << ": " << res.reports.size() << " report(s)";
  if (!res.reports.empty()) {
    const auto& r = res.reports.front();
    out << ", " << r.label << " estimate " << fmt(r.estimate) << " [" << fmt(r.ci_low) << ", " << fmt(r.ci_high)
        << "]";
  }
  out << ", wall " << fmt(std::round(wall * 1000.0) / 1000.0) << "s, wrote " << table_path.string() << " and "
      << summary_path.string() << (interrupted ? " (interrupted, partial)" : "") << '\n';
  return interrupted ? kExitRuntime : kExitOk;
}

}  // namespace

std::vector<std::string> experiment_kinds() {
  std::vector<std::string> k;
  for (const auto& e : entries()) k.push_back(e.kind);
  return k;
}

json experiment_schema() {
  json kinds = json::array();
  for (const auto& e : entries()) {
    json params = json::object();
    for (auto it = e.defaults.begin(); it != e.defaults.end(); ++it)
      params[it.key()] = {{"type", type_name(it.value())}, {"default", it.value()}};
    kinds.push_back({{"kind", e.kind}, {"description", e.description}, {"parameters", params}});
  }
  return {{"kinds", kinds},
          {"common", {{"seed", "unsigned integer, required"},
                      {"replicas", "integer >= 1, default 1"},
                      {"workers", "integer >= 1, default 1"},
                      {"out", "output directory, default $ZRPLAB_OUT or ./results"},
                      {"rate", "rate function object or path, default {\"kind\": \"linear\", \"scale\": 1}"}}}};
}

int main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"zrplab: zero range process experiments", "zrplab"};
  app.require_subcommand(1);
  Overrides o;
  auto* run = app.add_subcommand("run", "run one experiment from a JSON config");
  run->add_option("--config", o.config, "config file")->required();
  std::uint64_t seed = 0;
  long replicas = 0;
  int workers = 0;
  std::string outdir;
  auto* seed_opt = run->add_option("--seed", seed, "seed (overrides the config)");
  auto* rep_opt = run->add_option("--replicas", replicas, "replica count");
  auto* work_opt = run->add_option("--workers", workers, "worker threads");
  auto* out_opt = run->add_option("--out", outdir, "output directory");
  run->add_option("--format", o.format, "table format")->check(CLI::IsMember({"csv", "json"}));
  bool as_json = false;
  auto* list = app.add_subcommand("list", "list experiment kinds and their parameters");
  list->add_flag("--json", as_json, "machine-readable schema");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  if (list->parsed()) {
    if (as_json) {
      out << experiment_schema().dump(2) << '\n';
    } else {
      for (const auto& e : entries()) {
        out << e.kind << "  " << e.description << '\n';
        for (auto it = e.defaults.begin(); it != e.defaults.end(); ++it)
          out << "    " << it.key() << " (" << type_name(it.value()) << ", default " << it.value().dump() << ")\n";
      }
    }
    return kExitOk;
  }
  if (*seed_opt) o.seed = seed;
  if (*rep_opt) o.replicas = replicas;
  if (*work_opt) o.workers = workers;
  if (*out_opt) o.out = outdir;
  return run_command(o, out, err);
}

int main(int argc, char** argv) { return main(argc, argv, std::cout, std::cerr); }

}  // namespace zrp::cli
