#pragma once

// Statistical experiments. Every experiment fans replicas out over a worker
// pool; replica r is driven by SeedPath{seed, r} only, and results are merged
// in replica order, so the output depends on (parameters, seed) alone.

#include <atomic>
#include <cstdint>
#include <algorithm>
#include <exception>
#include <functional>
#include <iosfwd>
#include <json.hpp>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "zrplab/coupling.hpp"
#include "zrplab/infection.hpp"
#include "zrplab/rates.hpp"
#include "zrplab/renorm.hpp"
#include "zrplab/simulator.hpp"
#include "zrplab/stats.hpp"

namespace zrp {

struct RunContext {
  int workers = 1;
  const std::atomic<bool>* cancel = nullptr;
};

// Runs f(r) for r in [0, replicas). Worker w takes the replicas with
// r % workers == w. Returns the results of the completed replicas in
// replica order (all of them unless cancelled). The exception of the lowest
// failing replica is rethrown.
template <class R, class F>
std::vector<R> run_replicas(long replicas, const RunContext& ctx, F&& f) {
  const int workers = std::max(1, std::min<int>(ctx.workers, static_cast<int>(std::max(1L, replicas))));
  std::vector<std::optional<R>> slots(static_cast<std::size_t>(std::max(0L, replicas)));
  std::vector<std::exception_ptr> errors(slots.size());
  auto work = [&](int w) {
    for (long r = w; r < replicas; r += workers) {
      if (ctx.cancel && ctx.cancel->load(std::memory_order_relaxed)) return;
      try {
        slots[static_cast<std::size_t>(r)].emplace(f(r));
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
        return;
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<R> out;
  out.reserve(slots.size());
  for (auto& s : slots)
    if (s) out.push_back(std::move(*s));
  return out;
}

struct ExperimentReport {
  std::string kind;
  std::string label;
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::string ci_method;
  long replicas = 0;
  long excluded = 0;
  std::uint64_t seed = 0;
  nlohmann::json parameters = nlohmann::json::object();
  nlohmann::json details = nlohmann::json::object();
  double wall_time = 0.0;  // seconds; printed, never written to result files

  nlohmann::json to_json() const;
};

// Plain table; cells are preformatted so the CSV is byte-stable.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
  void write_csv(std::ostream& os) const;
};

std::string fmt(double v);
std::string fmt(long v);
inline std::string fmt(int v) { return fmt(static_cast<long>(v)); }
inline std::string fmt(bool v) { return v ? "1" : "0"; }

struct ExperimentOutput {
  std::vector<ExperimentReport> reports;
  Table table;
  nlohmann::json summary = nlohmann::json::object();
  // Per-report replica samples where a report is a mean; used by callers
  // that need sub-sample statistics.
  std::vector<std::vector<double>> samples;
};

// Joint percentile bootstrap of several statistics over one replica sample.
struct JointBootstrap {
  std::vector<Interval> ci;
  std::vector<double> se;
  std::vector<double> diff_se;  // SE of stat[j+1] - stat[j]
};
// Summarises bootstrap draws (draws[b][j] = statistic j in resample b).
JointBootstrap summarise_bootstrap(const std::vector<std::vector<double>>& draws, double level);
JointBootstrap joint_bootstrap(std::size_t n,
                               const std::function<std::vector<double>(std::span<const std::size_t>)>& stats,
                               int resamples, double level, Stream& rng);

// ---------------------------------------------------------------------------
// Front runs.

struct FrontRunOptions {
  double horizon = 0.0;
  long half_width = 0;        // interval [-half_width, half_width], reflecting edges
  bool condition_r0 = true;   // eta_0(0) >= 1, drawn exactly from the conditioned marginal
  long buffer = 2;            // escape flag when the front comes this close to an edge
  bool record_events = false;
  bool check_overlay = false; // assert the overlay invariants after every event
};

struct FrontRun {
  Domain domain;
  std::vector<long> initial;
  FrontPath path;
  FrontMartingale martingale;
  std::vector<MarkEvent> events;
  bool escaped = false;
  std::uint64_t checks = 0;
  std::uint64_t infected_decreases = 0;
};

// Default half-width for a horizon: ceil(2 gamma_plus t) + window.
long front_half_width(const RateFunction& rate, double horizon, long window = 16);

FrontRun run_front(const RateFunction& rate, const MarginalSampler& sampler, const FrontRunOptions& opt,
                   const SeedPath& seed);

// ---------------------------------------------------------------------------
// Experiments.

struct FrontVelocityParams {
  double rho = 1.0;
  std::vector<double> t_grid{200.0};
  long replicas = 1000;
  std::uint64_t seed = 1;
  long window = 16;
};
ExperimentOutput estimate_front_velocity(const RateFunction& rate, const FrontVelocityParams& p,
                                         const RunContext& ctx = {});

struct MartingaleParams {
  double rho = 1.0;
  std::vector<double> L_grid{25.0, 50.0, 100.0};
  double delta = 0.5;
  long replicas = 1000;
  std::uint64_t seed = 1;
  long window = 16;
  int bootstrap = 400;
};
ExperimentOutput martingale_concentration_test(const RateFunction& rate, const MartingaleParams& p,
                                               const RunContext& ctx = {});

struct DisplacementParams {
  double rho = 1.0;
  std::vector<double> t_grid{10.0};
  long replicas = 1000;
  std::uint64_t seed = 1;
  long window = 16;
};
// Frequencies of sup r - r_0 >= c_A t^2, r_0 - inf r >= (2 gamma_plus + 1) t
// and sup r - r_t >= (2 gamma_plus + 1) t, with
// c_A = (2 + 4 gamma_plus)(rho + 1) + 1 (so that A(t, t) <= c_A t for t >= 1).
// Displacements must be strictly positive, so t = 0 gives frequency 0.
ExperimentOutput displacement_tail_report(const RateFunction& rate, const DisplacementParams& p,
                                          const RunContext& ctx = {});

struct ExcursionParams {
  double rho = 1.0;
  double t = 5.0;
  std::vector<double> u_grid{2.0, 4.0, 8.0, 16.0};
  long replicas = 1000;
  std::uint64_t seed = 1;
  long sites = 0;  // torus size; 0 = max(32, 4 (gamma_plus t + 8))
};
// Frequency of {eta_s(0) >= A(u, t) for some s <= t} per u, with a fit of
// log-frequency against u over the non-zero frequencies.
ExperimentOutput occupancy_excursion_check(const RateFunction& rate, const ExcursionParams& p,
                                           const RunContext& ctx = {});

struct EkParams {
  long L0 = 8;
  int growth = 2;
  int k = 0;
  std::vector<double> v0_grid{0.0};
  double rho0 = 1.0;
  double eps0 = 0.5;
  std::vector<long> L0_grid;  // optional extra scales for the D_k frequency
  long replicas = 1000;
  std::uint64_t seed = 1;
  long window = 16;
};
ExperimentOutput estimate_event_Ek(const RateFunction& rate, const EkParams& p, const RunContext& ctx = {});

struct FkParams {
  long L0 = 8;
  int growth = 2;
  int k = 0;
  std::vector<long> R_grid{1, 2, 4};
  double rho0 = 1.0;
  double eps0 = 0.5;
  long replicas = 1000;
  std::uint64_t seed = 1;
  long window = 16;
};
// Lower estimate of q_k: the event is evaluated on a finite family of
// allowed paths (stay, always-left, always-right, greedy, recorded front),
// which can only miss paths, never add them.
ExperimentOutput estimate_event_Fk(const RateFunction& rate, const FkParams& p, const RunContext& ctx = {});

// Box functionals. All read the occupancy field on a space-time box only.
enum class FunctionalKind { Constant, MaxOccupancy, IntegratedOccupancy, EmptyBox };

struct FunctionalSpec {
  FunctionalKind kind = FunctionalKind::MaxOccupancy;
  double threshold = 1.0;

  // +1 non-decreasing, -1 non-increasing, 0 constant.
  int monotonicity() const;
  std::string describe() const;
  static FunctionalSpec parse(const nlohmann::json& j);
};

// Integer-site box [x_lo, x_hi] x [t_lo, t_hi] in lattice coordinates.
struct SiteBox {
  long x_lo = 0, x_hi = 0;
  double t_lo = 0.0, t_hi = 0.0;
};

// Evaluates the functionals on their boxes by replaying a trajectory from
// `initial` and its accepted events up to `horizon`. Throws SupportViolation
// when a box does not fit the domain or extends past the horizon.
std::vector<double> evaluate_box_functionals(const std::vector<long>& initial, const std::vector<MarkEvent>& events,
                                             const Domain& domain, double horizon,
                                             const std::vector<SiteBox>& boxes,
                                             const std::vector<FunctionalSpec>& specs);

struct VerticalParams {
  double rho = 1.0;
  double epsilon = 0.5;
  long s = 4;
  std::vector<long> dV_grid{8, 32, 128};
  FunctionalSpec f1{FunctionalKind::MaxOccupancy, 3.0};
  FunctionalSpec f2{FunctionalKind::MaxOccupancy, 3.0};
  long replicas = 1000;
  std::uint64_t seed = 1;
  int bootstrap = 400;
  long sites = 0;  // torus size; 0 = automatic
};
// LHS = E_rho[f1(B1) f2(B2)] with B1 = [0, s] x [0, s] and
// B2 = [0, s] x [s + d, 2s + d]; RHS = E_{rho+eps}[f1] E_{rho+eps}[f2] from
// independent runs. Reports LHS - RHS per d with bootstrap intervals.
ExperimentOutput vertical_decoupling_test(const RateFunction& rate, const VerticalParams& p,
                                          const RunContext& ctx = {});

struct HorizontalParams {
  double rho = 1.0;
  long s = 4;
  std::vector<long> dH_grid{32, 128, 512};
  FunctionalSpec f1{FunctionalKind::MaxOccupancy, 3.0};
  FunctionalSpec f2{FunctionalKind::MaxOccupancy, 3.0};
  long replicas = 1000;
  std::uint64_t seed = 1;
  int bootstrap = 400;
  long sites = 0;  // torus size; 0 = automatic
};
// Covariance of f1(B1) and f2(B2) with B1 = [0, s] x [0, s] and
// B2 = [s + d, 2s + d] x [0, s], per d, from one joint run per replica.
ExperimentOutput horizontal_decoupling_test(const RateFunction& rate, const HorizontalParams& p,
                                            const RunContext& ctx = {});

struct SprinkledParams {
  double rho = 1.0;
  double epsilon = 0.5;
  long a = -10, b = 10;
  std::vector<double> t_grid{16.0};
  long replicas = 1000;
  std::uint64_t seed = 1;
  bool check_invariants = false;
};
ExperimentOutput sprinkled_coupling_experiment(const RateFunction& rate, const SprinkledParams& p,
                                               const RunContext& ctx = {});

struct SimultaneousParams {
  double rho = 1.0;
  double rho_prime = 1.0;
  double epsilon = 0.5;
  double rho_minus = 0.0;
  long a = -5, b = 5;
  std::vector<double> t_grid{16.0};
  long replicas = 1000;
  std::uint64_t seed = 1;
  bool check_invariants = false;
};
ExperimentOutput simultaneous_coupling_experiment(const RateFunction& rate, const SimultaneousParams& p,
                                                  const RunContext& ctx = {});

}  // namespace zrp
