#pragma once

// Redundant (coded) packet allocation. For each path i the split is re-solved
// as if path i's delay fluctuations were a factor gamma smaller; the packet
// count that re-solve assigns to path i becomes path i's send total. Any n of
// the packets sent decode the object.

#include <cstdint>
#include <span>
#include <vector>

#include "sos/errors.hpp"
#include "sos/scheduler_core.hpp"

namespace sos {

inline constexpr double kDefaultGamma = 0.5;

struct FecAllocation {
  SplitVector base;
  std::vector<std::uint64_t> totals;
  double gamma = 1.0;
  std::uint64_t redundancy = 0;
};

inline FecAllocation solve_fec_split(std::uint64_t n, std::span<const PathParams> paths,
                                     double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("gamma must lie in [0, 1]");
  FecAllocation out;
  out.gamma = gamma;
  out.base = split_object(n, paths);
  out.totals = out.base.counts;
  if (gamma == 1.0) return out;

  std::vector<PathParams> discounted(paths.begin(), paths.end());
  for (std::size_t i = 0; i < paths.size(); ++i) {
    discounted[i].w = gamma * paths[i].w;
    const auto lucky = split_object(n, discounted);
    out.totals[i] = lucky.counts[i];
    discounted[i].w = paths[i].w;
  }
  std::uint64_t sent = 0;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (out.totals[i] < out.base.counts[i]) {
      throw InfeasibleError("internal: discounted split assigned fewer packets than the base");
    }
    sent += out.totals[i];
  }
  out.redundancy = sent - out.base.total;
  return out;
}

/// Packets that must arrive before the object decodes.
inline std::uint64_t decode_threshold(const FecAllocation& allocation) {
  return allocation.base.total;
}

}  // namespace sos
