// Acceptance runner. Prints one PASS/FAIL line per criterion; the exit code
// is non-zero when any selected criterion fails.
//
//   acceptance [--criterion N] [--workers N]

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "zrplab/cli.hpp"
#include "zrplab/coupling.hpp"
#include "zrplab/errors.hpp"
#include "zrplab/experiments.hpp"
#include "zrplab/infection.hpp"
#include "zrplab/oracle.hpp"
#include "zrplab/rates.hpp"
#include "zrplab/simulator.hpp"
#include "zrplab/stats.hpp"

using namespace zrp;

namespace {

// Tolerances and sizes.
constexpr double kResidualTol = 1e-12;
constexpr double kLawTv = 0.02;
constexpr long kLawReplicas = 100000;
constexpr long kInvariantReplicas = 1000;
constexpr std::uint64_t kChiDraws = 1000000;
constexpr double kChiMinP = 0.01;
constexpr double kInverseTol = 2e-10;
constexpr long kChernoffReplicas = 100000;
constexpr double kChernoffSe = 3.0;
constexpr double kChernoffClosedRel = 1e-6;
constexpr long kVelocityReplicas = 10000;
constexpr long kVelocitySmall = 1000;
constexpr double kVelocityUpper = 5.0;
constexpr double kRatioLo = 0.27, kRatioHi = 0.37;
constexpr long kStatReplicas = 10000;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

RateFunction nonlinear_rate() { return RateFunction::validate({0.0, 1.0, 2.4, 3.1}, 0.5, 1.5, 1.0); }

int g_workers = 1;

// 1. Canonical stationarity of the exact generator.
Verdict oracle_stationarity() {
  double worst = 0.0;
  for (const auto& g : {RateFunction::linear(), nonlinear_rate()})
    for (auto [n, m] : {std::pair{3L, 2L}, std::pair{4L, 3L}, std::pair{5L, 3L}})
      worst = std::max(worst, check_canonical_stationarity(g, n, m));
  return {worst <= kResidualTol, "max residual " + num(worst) + " (tol " + num(kResidualTol) + ")"};
}

// 2. Empirical law at t = 1 against uniformization.
Verdict simulator_law() {
  const auto g = RateFunction::linear();
  const long N = 4, M = 3;
  const auto q = build_generator(g, N, M);
  const std::vector<long> start{3, 0, 0, 0};
  std::vector<double> init(static_cast<std::size_t>(q.space.size()), 0.0);
  init[static_cast<std::size_t>(q.space.index({3, 0, 0, 0}))] = 1.0;
  const auto exact = transient_distribution(q, init, 1.0, 1e-13);
  const auto idx = run_replicas<long>(kLawReplicas, RunContext{g_workers}, [&](long r) {
    Simulator sim(g, Domain::torus(N), PileConfig::from_counts(start), SeedPath{2024, static_cast<std::uint64_t>(r)});
    sim.run_until(1.0);
    const auto c = sim.counts();
    return q.space.index(std::vector<int>(c.begin(), c.end()));
  });
  std::vector<double> emp(exact.size(), 0.0);
  for (long i : idx) {
    if (i < 0) return {false, "simulated state outside the state space"};
    emp[static_cast<std::size_t>(i)] += 1.0 / static_cast<double>(idx.size());
  }
  const double tv = total_variation(emp, exact);
  return {tv <= kLawTv, "TV " + num(tv) + " over " + std::to_string(idx.size()) + " replicas (tol " + num(kLawTv) + ")"};
}

// 3. Zero-tolerance invariants.
class ConservationAudit : public Observer {
 public:
  explicit ConservationAudit(long total) : total_(total) {}
  void on_event(const Simulator& sim, const MarkEvent&) override {
    std::set<ParticleId> ids;
    long sum = 0;
    for (const auto& p : sim.piles()) {
      sum += static_cast<long>(p.size());
      ids.insert(p.begin(), p.end());
    }
    if (sum != total_ || static_cast<long>(ids.size()) != total_) ++violations;
  }
  long violations = 0;

 private:
  long total_;
};

class MixedSiteAudit : public Observer {
 public:
  explicit MixedSiteAudit(const InfectionTracker& t) : t_(t) {}
  void on_event(const Simulator&, const MarkEvent&) override {
    const auto& s = t_.state();
    for (std::size_t x = 0; x < s.xi.size(); ++x)
      if (std::min(s.xi[x], s.zeta[x]) != 0) ++violations;
    ++events;
  }
  long violations = 0, events = 0;

 private:
  const InfectionTracker& t_;
};

Verdict exact_invariants() {
  const auto lin = RateFunction::linear();
  const auto bumpy = nonlinear_rate();
  const RunContext ctx{g_workers};
  std::ostringstream detail;
  bool ok = true;

  auto conservation = run_replicas<long>(kInvariantReplicas, ctx, [&](long r) {
    const auto& g = r % 2 ? bumpy : lin;
    const auto dom = Domain::torus(16);
    const auto cfg = sample_stationary_config(g, 1.0, dom, SeedPath{31, static_cast<std::uint64_t>(r)});
    Simulator sim(g, dom, cfg, SeedPath{31, static_cast<std::uint64_t>(r)});
    ConservationAudit a(cfg.total());
    std::vector<Observer*> obs{&a};
    sim.run_until(5.0, obs);
    return a.violations + (sim.total() != cfg.total() ? 1 : 0);
  });
  long v = 0;
  for (long x : conservation) v += x;
  detail << "conservation " << v;
  ok = ok && v == 0 && static_cast<long>(conservation.size()) == kInvariantReplicas;

  auto mixed = run_replicas<long>(kInvariantReplicas, ctx, [&](long r) {
    const auto& g = r % 2 ? bumpy : lin;
    const long n = 81, origin = 40;
    const MarginalSampler sampler(g, 1.0);
    const SeedPath seed{32, static_cast<std::uint64_t>(r)};
    auto cfg = sample_stationary_config(sampler, Domain::interval(n, origin), seed);
    auto counts = cfg.project().counts;
    if (counts[origin] == 0) counts[origin] = 1;
    Simulator sim(g, Domain::interval(n, origin, EdgePolicy::Reflect), PileConfig::from_counts(counts), seed);
    InfectionTracker tracker(sim, origin, 0, true);
    MixedSiteAudit audit(tracker);
    std::vector<Observer*> obs{&tracker, &audit};
    try {
      sim.run_until(10.0, obs);
    } catch (const InconsistentState&) {
      return audit.violations + 1;
    }
    return audit.violations;
  });
  v = 0;
  for (long x : mixed) v += x;
  detail << ", all-or-nothing " << v;
  ok = ok && v == 0 && static_cast<long>(mixed.size()) == kInvariantReplicas;

  auto domination = run_replicas<long>(kInvariantReplicas, ctx, [&](long r) {
    const auto& g = r % 2 ? bumpy : lin;
    const auto run = basic_monotone_coupling(g, 0.6, 1.2, Domain::torus(32), 10.0,
                                             SeedPath{33, static_cast<std::uint64_t>(r)});
    long bad = static_cast<long>(run.domination_violations);
    for (std::size_t x = 0; x < run.final_low.size(); ++x) bad += run.final_low[x] > run.final_high[x] ? 1 : 0;
    return bad;
  });
  v = 0;
  for (long x : domination) v += x;
  detail << ", basic domination " << v;
  ok = ok && v == 0 && static_cast<long>(domination.size()) == kInvariantReplicas;

  CouplingOptions opt;
  opt.check_invariants = true;
  opt.record_reference = true;
  auto sprinkled = run_replicas<std::pair<long, long>>(kInvariantReplicas, ctx, [&](long r) {
    const auto& g = r % 2 ? bumpy : lin;
    auto seeds = CouplingSeeds::from(SeedPath{34, static_cast<std::uint64_t>(r)});
    const auto a = sprinkled_coupling_run(g, 1.0, 0.5, -10, 10, 16.0, seeds, opt);
    seeds.follower_field = SeedPath{35, static_cast<std::uint64_t>(r)};
    const auto b = sprinkled_coupling_run(g, 1.0, 0.5, -10, 10, 16.0, seeds, opt);
    const long sep = static_cast<long>(a.checks.met_separations + b.checks.met_separations);
    const long replay = (a.reference_log == b.reference_log && a.eta_bar == b.eta_bar) ? 0 : 1;
    return std::pair{sep, replay};
  });
  long sep = 0, replay = 0;
  for (auto [s, rp] : sprinkled) {
    sep += s;
    replay += rp;
  }
  detail << ", met-pair separations " << sep << ", replay mismatches " << replay;
  ok = ok && sep == 0 && replay == 0 && static_cast<long>(sprinkled.size()) == kInvariantReplicas;
  detail << " (" << kInvariantReplicas << " replicas each)";
  return {ok, detail.str()};
}

// 4. Sampler goodness of fit and density inversion.
Verdict marginal_sampler() {
  const auto lin = RateFunction::linear();
  const MarginalSampler s(lin, 1.0);
  Stream rng(SeedPath{41, 0}, StreamTag::Auxiliary, 0);
  const std::size_t bins = 12;
  std::vector<std::uint64_t> obs(bins, 0);
  for (std::uint64_t i = 0; i < kChiDraws; ++i)
    ++obs[static_cast<std::size_t>(std::min<long>(static_cast<long>(bins) - 1, s.sample(rng)))];
  // Poisson(1) reference computed here, not by the sampler.
  std::vector<double> probs(bins);
  double p = std::exp(-1.0), acc = 0.0;
  for (std::size_t k = 0; k + 1 < bins; ++k) {
    probs[k] = p;
    acc += p;
    p /= static_cast<double>(k + 1);
  }
  probs.back() = 1.0 - acc;
  const auto chi = chi_square_gof(obs, probs);

  double worst = 0.0;
  for (const auto& g : {lin, nonlinear_rate()})
    for (double rho = 0.05; rho <= 5.0 + 1e-9; rho += 0.05)
      worst = std::max(worst, std::abs(density_of_fugacity(g, fugacity_of_density(g, rho)) - rho));
  const bool ok = chi.p_value > kChiMinP && worst <= kInverseTol;
  return {ok, "chi-square p " + num(chi.p_value) + " (dof " + std::to_string(chi.dof) + ", need > " +
                  num(kChiMinP) + "), max |R(R^-1(rho)) - rho| " + num(worst) + " (tol " + num(kInverseTol) + ")"};
}

// 5. Chernoff bound against empirical tails.
Verdict concentration() {
  std::ostringstream detail;
  bool ok = true;
  const double rho = 1.0;
  for (const auto& g : {RateFunction::linear(), nonlinear_rate()}) {
    const MarginalSampler s(g, rho);
    for (double eps : {0.25, 0.5})
      for (long n : {50L, 200L}) {
        const auto b = chernoff_bounds(g, rho, eps, n);
        const double level = (rho + eps) * static_cast<double>(n);
        const auto hits = run_replicas<int>(kChernoffReplicas, RunContext{g_workers}, [&](long r) {
          Stream st(SeedPath{51, static_cast<std::uint64_t>(r)}, StreamTag::Auxiliary,
                    static_cast<std::uint64_t>(n * 10 + static_cast<long>(eps * 4)));
          long sum = 0;
          for (long i = 0; i < n; ++i) sum += s.sample(st);
          return static_cast<double>(sum) >= level ? 1 : 0;
        });
        long h = 0;
        for (int x : hits) h += x;
        const double N = static_cast<double>(hits.size());
        const double f = static_cast<double>(h) / N;
        const double se = std::sqrt(f * (1.0 - f) / N);
        const bool pass = f <= b.bound_upper + kChernoffSe * se;
        ok = ok && pass;
        detail << (detail.tellp() ? "; " : "") << (g.digest() == RateFunction::linear().digest() ? "linear" : "bumpy")
               << " eps=" << eps << " n=" << n << ": " << num(f) << " <= " << num(b.bound_upper);
      }
  }
  for (double eps : {0.25, 0.5})
    for (long n : {50L, 200L}) {
      const double a = rho + eps;
      const double closed = std::exp(static_cast<double>(n) * (a - 1.0 - a * std::log(a)));
      const double got = chernoff_bounds(RateFunction::linear(), rho, eps, n).bound_upper;
      const double rel = std::abs(got - closed) / closed;
      ok = ok && rel <= kChernoffClosedRel;
      detail << "; closed-form rel err eps=" << eps << " n=" << n << ": " << num(rel);
    }
  return {ok, detail.str()};
}

// 6. Front velocity at t = 200.
Verdict front_velocity() {
  FrontVelocityParams p;
  p.rho = 1.0;
  p.t_grid = {200.0};
  p.seed = 61;
  p.replicas = kVelocityReplicas;
  const auto big = estimate_front_velocity(RateFunction::linear(), p, RunContext{g_workers});
  p.replicas = kVelocitySmall;
  const auto small = estimate_front_velocity(RateFunction::linear(), p, RunContext{g_workers});
  const auto& rb = big.reports.front();
  const auto& rs = small.reports.front();
  const double ratio = (rb.ci_high - rb.ci_low) / (rs.ci_high - rs.ci_low);
  const bool ok = rb.ci_low > 0.0 && rb.ci_high < kVelocityUpper && ratio >= kRatioLo && ratio <= kRatioHi;
  return {ok, "r_t/t = " + num(rb.estimate) + " CI [" + num(rb.ci_low) + ", " + num(rb.ci_high) +
                  "] (need > 0 and < 5), half-width ratio 1e3->1e4 " + num(ratio) + " (band [0.27, 0.37]), excluded " +
                  std::to_string(rb.excluded)};
}

// 7. Martingale mean and concentration trend.
Verdict martingale() {
  MartingaleParams p;
  p.rho = 1.0;
  p.L_grid = {25.0, 50.0, 100.0};
  p.delta = 0.5;
  p.replicas = kStatReplicas;
  p.seed = 71;
  const auto o = martingale_concentration_test(RateFunction::linear(), p, RunContext{g_workers});
  std::ostringstream d;
  for (const auto& r : o.reports)
    d << r.label << ": mean M " << num(r.details["mean_M"].get<double>()) << " (se "
      << num(r.details["se_M"].get<double>()) << "), freq " << num(r.estimate) << "; ";
  const bool zero = o.summary["zero_mean_all"].get<bool>();
  const bool trend = o.summary["frequency_non_increasing"].get<bool>();
  d << "zero mean within 3 SE: " << (zero ? "yes" : "no") << ", frequency non-increasing: " << (trend ? "yes" : "no")
    << ", trend z " << o.summary["trend_z"].dump();
  return {zero && trend, d.str()};
}

// 8. Sprinkled coupling failure trend.
Verdict sprinkled() {
  SprinkledParams p;
  p.rho = 1.0;
  p.epsilon = 0.5;
  p.a = -10;
  p.b = 10;
  p.t_grid = {16.0, 64.0, 256.0};
  p.replicas = kStatReplicas;
  p.seed = 81;
  const auto o = sprinkled_coupling_experiment(RateFunction::linear(), p, RunContext{g_workers});
  std::ostringstream d;
  for (const auto& r : o.reports) d << r.label << ": " << num(r.estimate) << "; ";
  const bool trend = o.summary["failure_non_increasing"].get<bool>();
  d << "non-increasing: " << (trend ? "yes" : "no") << ", trend z " << o.summary["trend_z"].dump();
  return {trend, d.str()};
}

// 9. Decoupling trends.
Verdict decoupling() {
  VerticalParams v;
  v.rho = 1.0;
  v.epsilon = 0.5;
  v.dV_grid = {8, 32, 128};
  v.replicas = kStatReplicas;
  v.seed = 91;
  const auto vo = vertical_decoupling_test(RateFunction::linear(), v, RunContext{g_workers});
  HorizontalParams h;
  h.rho = 1.0;
  h.dH_grid = {32, 128, 512};
  h.replicas = kStatReplicas;
  h.seed = 92;
  const auto ho = horizontal_decoupling_test(RateFunction::linear(), h, RunContext{g_workers});
  std::ostringstream d;
  d << "vertical gap upper CI:";
  for (const auto& r : vo.reports) d << " " << r.label << " " << num(r.ci_high);
  const bool v_trend = vo.summary["gap_non_increasing"].get<bool>();
  const double v_last = vo.summary["upper_ci_at_largest_dV"].get<double>();
  d << "; gap non-increasing (one-sided 0.05): " << (v_trend ? "yes" : "no")
    << ", literal upper-CI order: " << (vo.summary["upper_ci_strictly_ordered"].get<bool>() ? "yes" : "no")
    << ", upper CI at dV=128 <= 0: " << (v_last <= 0.0 ? "yes" : "no");
  d << "; horizontal |cov| upper:";
  for (const auto& r : ho.reports) d << " " << r.label << " " << num(r.details["abs_upper"].get<double>());
  const bool h_trend = ho.summary["abs_covariance_non_increasing"].get<bool>();
  bool h_literal = true;
  for (std::size_t j = 0; j + 1 < ho.reports.size(); ++j)
    h_literal = h_literal && ho.reports[j + 1].details["abs_upper"].get<double>() <=
                                 ho.reports[j].details["abs_upper"].get<double>();
  d << "; |cov| non-increasing (one-sided 0.05): " << (h_trend ? "yes" : "no")
    << ", literal upper order: " << (h_literal ? "yes" : "no");
  return {v_trend && v_last <= 0.0 && h_trend, d.str()};
}

// 10. Byte-identical CLI outputs.
std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict cli_determinism() {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "zrplab_acceptance_cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::vector<std::string> configs{
      R"({"kind": "front-velocity", "seed": 7, "replicas": 200, "parameters": {"t_grid": [10, 20]}})",
      R"({"kind": "vertical-decoupling", "seed": 8, "replicas": 200, "parameters": {"dV_grid": [2, 8], "bootstrap": 100}})",
      R"({"kind": "sprinkled-coupling", "seed": 9, "replicas": 50, "parameters": {"t_grid": [4, 16]}})",
      R"({"kind": "oracle-check", "seed": 10, "replicas": 2000, "parameters": {"sites": 3, "particles": 2}})"};
  std::ostringstream detail;
  bool ok = true;
  int compared = 0;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    const auto cfg = dir / ("c" + std::to_string(c) + ".json");
    std::ofstream(cfg) << configs[c];
    const auto kind = nlohmann::json::parse(configs[c])["kind"].get<std::string>();
    std::vector<fs::path> outs;
    for (const char* w : {"1", "1", "4", "4"}) {
      const auto out = dir / (kind + "_" + std::to_string(outs.size()));
      std::vector<std::string> args{"zrplab", "run", "--config", cfg.string(), "--out", out.string(), "--workers", w};
      std::vector<char*> argv;
      for (auto& a : args) argv.push_back(a.data());
      std::ostringstream so, se;
      const int code = cli::main(static_cast<int>(argv.size()), argv.data(), so, se);
      if (code != 0) {
        ok = false;
        detail << kind << " exit " << code << " " << se.str() << "; ";
      }
      outs.push_back(out);
    }
    for (const auto& f : {kind + ".csv", kind + ".json"}) {
      const auto ref = slurp(outs[0] / f);
      bool same = !ref.empty();
      for (std::size_t i = 1; i < outs.size(); ++i) same = same && slurp(outs[i] / f) == ref;
      ++compared;
      if (!same) {
        ok = false;
        detail << f << " differs; ";
      }
    }
  }
  fs::remove_all(dir);
  detail << compared << " files compared over runs {1, 1, 4, 4} workers";
  return {ok, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--criterion", only, "run a single criterion (1-10)")->check(CLI::Range(1, 10));
  app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  g_workers = workers;

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"oracle stationarity", oracle_stationarity},
      {"simulator law", simulator_law},
      {"exact invariants", exact_invariants},
      {"marginal sampler", marginal_sampler},
      {"concentration", concentration},
      {"front velocity", front_velocity},
      {"martingale", martingale},
      {"sprinkled coupling", sprinkled},
      {"decoupling trends", decoupling},
      {"cli determinism", cli_determinism}};
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && static_cast<int>(i + 1) != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    all = all && v.pass;
    std::cout << "criterion " << (i + 1) << " [" << criteria[i].first << "]: " << (v.pass ? "PASS" : "FAIL") << " - "
              << v.detail << " (" << num(secs) << " s)" << std::endl;
  }
  return all ? 0 : 1;
}
