#pragma once

// Multiscale bookkeeping: the scale sequence, space-time boxes, the boundary
// piece R_k, and evaluators for the box events on recorded paths.

#include <cstdint>
#include <vector>

#include "zrplab/infection.hpp"
#include "zrplab/simulator.hpp"

namespace zrp {

struct RenormSchedule {
  long L0 = 16;
  int growth = 2;
  int k_max = 0;
  std::vector<long> L;       // L_k
  std::vector<long> ell;     // floor(sqrt(L_k))
  std::vector<double> v;     // v_k
  std::vector<double> rho;   // rho_k (decreasing)
  std::vector<double> rho_prime;
  std::vector<double> eps;

  // L_{k+1} = L_k^growth (exact integers, at most 2^53), ell_k = floor(L_k^{1/2}),
  // v_{k+1} = v_k + 1/(k+1)^2, rho_{k+1} = rho_k / (1 + L_k^{-1/16}),
  // rho'_0 = rho_0, rho'_{k+1} = rho'_k (1 + L_k^{-1/16}),
  // eps_{k+1} = eps_k (1 - 1/(k+1)^2).
  static RenormSchedule make(long L0, int growth, int k_max, double v0, double rho0, double eps0);

  // Largest relative residual of the recursions (0 up to rounding).
  double recursion_residual() const;
};

struct SpaceTimeBox {
  double x_lo = 0, x_hi = 0;
  double t_lo = 0, t_hi = 0;
};

// B_k(m) = m + [-ell L^2, ell L^2] x [0, L].
SpaceTimeBox box_k(const RenormSchedule& s, int k, long mx = 0, double ms = 0.0);
// Half-width ell_k L_k^2 of B_k.
long box_half_width(const RenormSchedule& s, int k);
// I_k = [-ell L^2 / 4, ell L^2 / 4] as integer coordinates (floor).
long interval_half_width(const RenormSchedule& s, int k);

double dist_V(const SpaceTimeBox& a, const SpaceTimeBox& b);
double dist_H(const SpaceTimeBox& a, const SpaceTimeBox& b);

// Whether m = (x, j L_k) belongs to M_k, i.e. B_k(m) meets B_{k+1}.
bool in_index_set(const RenormSchedule& s, int k, long x, long j);
// |M_k|.
std::uint64_t index_set_size(const RenormSchedule& s, int k);

// Whether (x, t) lies in R_k (relative to the box anchor).
bool in_boundary_piece(const RenormSchedule& s, int k, double x, double t);

enum class ExitSide { Left, Right, Top };
struct BoxExit {
  ExitSide side = ExitSide::Top;
  double time = 0.0;
  long position = 0;  // relative to the anchor
};
// First contact of a path (relative to anchor) with the boundary of
// [-w, w] x [0, horizon], ignoring the starting edge t = 0.
BoxExit first_exit(const FrontPath& path, long anchor, long half_width, double horizon);

// E_k: r_0 = anchor and the path first touches the boundary of B_k in R_k.
bool event_E(const FrontPath& path, const RenormSchedule& s, int k, long anchor = 0);
// Same, with the velocity v_k replaced by v.
bool event_E_velocity(const FrontPath& path, const RenormSchedule& s, int k, double v, long anchor = 0);
// D_k: r_t in B_k for all t in [0, L_k].
bool event_D(const FrontPath& path, const RenormSchedule& s, int k, long anchor = 0);

// Path families used to probe the existential path events.
enum class PathRule { Stay, AlwaysLeft, AlwaysRight, GreedyLowest };

// Builds the path of `rule` started at coordinate `start` and driven by the
// accepted jumps `upper` of the process that allows moves: at an accepted
// jump from the path's site in direction h the path may move to the
// destination. AlwaysLeft / AlwaysRight follow every jump in their
// direction; GreedyLowest follows a jump iff the lower process `lower`
// (replayed from `lower_initial` and `lower_events`) has strictly fewer
// particles at the destination than at the current site. Moves that would
// leave [lo, hi] are skipped. Paths are in lattice coordinates.
FrontPath allowed_path(PathRule rule, const std::vector<MarkEvent>& upper, const std::vector<long>& lower_initial,
                       const std::vector<MarkEvent>& lower_events, const Domain& domain, long start, long lo,
                       long hi, double horizon);

// Replays the infection overlay (origin coordinate `origin`) on a recorded
// trajectory and returns its front path.
FrontPath front_path_of(const std::vector<long>& initial, const std::vector<MarkEvent>& events,
                        const Domain& domain, long origin, double horizon);

}  // namespace zrp
