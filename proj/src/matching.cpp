#include <algorithm>

#include "zrplab/coupling.hpp"
#include "zrplab/errors.hpp"

namespace zrp {

MatchingResult build_matching(const std::vector<long>& sparse, const std::vector<long>& dense, long h_lo,
                              long h_hi, long L) {
  if (sparse.size() != dense.size()) throw ConfigError("matching configurations differ in size");
  if (L < 1) throw ConfigError("subinterval length must be >= 1");
  if (h_lo < 0 || h_hi >= static_cast<long>(sparse.size()) || h_hi < h_lo)
    throw ConfigError("matching interval outside the configuration");
  if ((h_hi - h_lo + 1) % L != 0) throw ConfigError("matching interval length must be a multiple of L");

  MatchingResult out;
  out.subintervals = (h_hi - h_lo + 1) / L;
  std::vector<std::pair<long, long>> left_sparse, left_dense;  // (site, rank)
  for (long j = 0; j < out.subintervals; ++j) {
    const long lo = h_lo + j * L, hi = lo + L - 1;
    long sigma_s = 0, sigma_d = 0;
    left_sparse.clear();
    left_dense.clear();
    for (long x = lo; x <= hi; ++x) {
      const long s = sparse[static_cast<std::size_t>(x)], d = dense[static_cast<std::size_t>(x)];
      if (s < 0 || d < 0) throw ConfigError("negative occupancy in matching");
      sigma_s += s;
      sigma_d += d;
      const long same = std::min(s, d);
      for (long r = 0; r < same; ++r) out.pairs.push_back({x, r, x, r});
      for (long r = same; r < s; ++r) left_sparse.emplace_back(x, r);
      for (long r = same; r < d; ++r) left_dense.emplace_back(x, r);
    }
    if (sigma_s > sigma_d) out.unmatchable.push_back(j);
    const std::size_t m = std::min(left_sparse.size(), left_dense.size());
    for (std::size_t i = 0; i < m; ++i)
      out.pairs.push_back({left_sparse[i].first, left_sparse[i].second, left_dense[i].first, left_dense[i].second});
    out.unmatched_sparse += static_cast<long>(left_sparse.size() - m);
  }
  return out;
}

}  // namespace zrp
