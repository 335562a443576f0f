#pragma once

// Object split across m paths minimising the high-probability delivery bound
//
//   D_U(n) = max_j  (n_j + u_j) mu_j + sqrt(n_j + u_j) w_j + P_j
//
// subject to sum_j n_j = n, where u_j is the path backlog (packets already in
// flight). The continuous relaxation is solved by bisection on the common
// delay level; the integer problem is then solved exactly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "sos/errors.hpp"

namespace sos {

/// Per-path statistics consumed by the schedulers. All times in ms.
struct PathParams {
  double mu_ms = 0.0;   // mean inter-packet delay
  double a_ms = 0.0;    // lower bound on the inter-packet delay
  double b_ms = 0.0;    // upper bound (95th percentile in practice)
  double w = 0.0;       // variability term, ms * sqrt(packet)
  double prop_ms = 0.0;
  std::uint64_t in_flight = 0;
};

struct SplitVector {
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;

  std::size_t paths() const noexcept { return counts.size(); }
  friend bool operator==(const SplitVector&, const SplitVector&) = default;
};

struct SchedulerConfig {
  double epsilon = 0.05;
  std::size_t max_paths = 4;

  /// Per-path violation budget epsilon / m.
  double epsilon_per_path(std::size_t m) const { return epsilon / static_cast<double>(m); }
};

/// Counts how many candidate splits had their bound evaluated.
struct SolveStats {
  std::size_t bound_evaluations = 0;
};

/// Chernoff-Hoeffding variability term sqrt(-ln(eps_j) (b - a)^2 / 2).
inline double compute_w(double epsilon_j, double a_ms, double b_ms) {
  if (!(epsilon_j > 0.0) || epsilon_j > 1.0) {
    throw DomainError("per-path epsilon must lie in (0, 1]");
  }
  if (a_ms > b_ms) throw ValidationError("lower delay bound exceeds upper bound");
  const double range = b_ms - a_ms;
  return std::sqrt(-std::log(epsilon_j) * range * range / 2.0);
}

/// Upper bound on the time to drain n_j new packets behind u_j queued ones.
/// Excludes propagation delay.
inline double t_upper(std::uint64_t n_j, std::uint64_t u_j, const PathParams& p) {
  const double k = static_cast<double>(n_j + u_j);
  return k * p.mu_ms + std::sqrt(k) * p.w;
}

namespace detail {

inline void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw ValidationError("split length does not match number of paths");
}

inline bool is_zero_cost(const PathParams& p) { return p.mu_ms == 0.0 && p.w == 0.0; }

// Bound on path j with k new packets, including its backlog and propagation.
inline double path_bound(std::uint64_t k, const PathParams& p, bool with_backlog) {
  return t_upper(k, with_backlog ? p.in_flight : 0, p) + p.prop_ms;
}

inline double bound(std::span<const std::uint64_t> counts, std::span<const PathParams> paths,
                    bool with_backlog) {
  check_lengths(counts.size(), paths.size());
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < paths.size(); ++j) {
    worst = std::max(worst, path_bound(counts[j], paths[j], with_backlog));
  }
  return worst;
}

// Continuous packet count x >= 0 at which the path bound reaches `level`.
// Solves mu s^2 + w s = level - P - ... in s = sqrt(x + u), then removes the
// backlog. Uses the cancellation-free root 2c / (w + sqrt(w^2 + 4 mu c)).
inline double invert_bound(double level, const PathParams& p, bool with_backlog) {
  const double c = level - p.prop_ms;
  if (c <= 0.0) return 0.0;
  const double s = 2.0 * c / (p.w + std::sqrt(p.w * p.w + 4.0 * p.mu_ms * c));
  const double backlog = with_backlog ? static_cast<double>(p.in_flight) : 0.0;
  return std::max(0.0, s * s - backlog);
}

inline std::vector<double> relaxed(std::uint64_t n, std::span<const PathParams> paths,
                                   bool with_backlog) {
  const std::size_t m = paths.size();
  if (m == 0) throw ValidationError("at least one path is required");
  std::vector<double> x(m, 0.0);
  if (n == 0) return x;

  if (std::all_of(paths.begin(), paths.end(), is_zero_cost)) {
    throw DegenerateInputError("inter-packet delay is identically zero on every path");
  }
  // A zero-cost path absorbs any load without raising its bound.
  for (std::size_t j = 0; j < m; ++j) {
    if (is_zero_cost(paths[j])) {
      x[j] = static_cast<double>(n);
      return x;
    }
  }

  const double target = static_cast<double>(n);
  auto mass = [&](double level) {
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) total += invert_bound(level, paths[j], with_backlog);
    return total;
  };

  double lo = std::numeric_limits<double>::infinity();
  for (const auto& p : paths) lo = std::min(lo, path_bound(0, p, with_backlog));
  double step = 1.0;
  for (const auto& p : paths) step = std::max({step, p.mu_ms, p.w});
  double hi = lo + step;
  while (mass(hi) < target) {
    lo = hi;
    step *= 2.0;
    hi = lo + step;
  }
  for (int iter = 0; iter < 4096 && hi - lo > 1e-12 * std::abs(hi); ++iter) {
    const double mid = lo + (hi - lo) / 2.0;
    if (mid <= lo || mid >= hi) break;
    if (mass(mid) < target) lo = mid; else hi = mid;
  }

  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    x[j] = invert_bound(hi, paths[j], with_backlog);
    total += x[j];
  }
  if (total > 0.0) {
    for (double& v : x) v *= target / total;
  }
  return x;
}

// Largest k <= n with path_bound(k) <= level, or nullopt if even k = 0 fails.
inline std::optional<std::uint64_t> capacity_at(double level, std::uint64_t n,
                                                std::uint64_t from, const PathParams& p,
                                                bool with_backlog) {
  if (path_bound(0, p, with_backlog) > level) return std::nullopt;
  std::uint64_t lo = std::min(from, n);
  if (path_bound(lo, p, with_backlog) > level) lo = 0;
  // Exponential search for an upper bracket, then bisection.
  std::uint64_t stride = 1;
  std::uint64_t hi = lo;
  while (hi < n) {
    const std::uint64_t probe = std::min(n, lo + stride);
    if (path_bound(probe, p, with_backlog) > level) {
      hi = probe;
      break;
    }
    lo = probe;
    hi = probe;
    stride *= 2;
  }
  if (hi == lo) return lo;  // reached n, everything fits
  while (hi - lo > 1) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    if (path_bound(mid, p, with_backlog) <= level) lo = mid; else hi = mid;
  }
  return lo;
}

// Among splits whose bound does not exceed `level`, the one giving the most
// packets to the lowest-index paths.
inline SplitVector lex_fill(std::uint64_t n, double level, std::span<const PathParams> paths,
                            std::span<const std::uint64_t> hint, bool with_backlog) {
  SplitVector out{std::vector<std::uint64_t>(paths.size(), 0), n};
  std::uint64_t remaining = n;
  for (std::size_t j = 0; j < paths.size(); ++j) {
    const auto cap = capacity_at(level, n, hint[j], paths[j], with_backlog);
    const std::uint64_t take = std::min(cap.value_or(0), remaining);
    out.counts[j] = take;
    remaining -= take;
  }
  // The hint is feasible at `level`, so the fill always places everything.
  if (remaining != 0) throw InfeasibleError("internal: level admits no feasible split");
  return out;
}

// m = 2: the bound on path 1 rises and on path 2 falls as path 1 takes more
// packets, so the max is minimised next to the crossing point.
inline SplitVector solve_two(std::uint64_t n, std::span<const PathParams> paths,
                             bool with_backlog, SolveStats& stats) {
  const PathParams& p1 = paths[0];
  const PathParams& p2 = paths[1];
  auto eval = [&](std::uint64_t k, double& first, double& second) {
    ++stats.bound_evaluations;
    first = path_bound(k, p1, with_backlog);
    second = path_bound(n - k, p2, with_backlog);
  };

  std::uint64_t lo = 0;
  std::uint64_t hi = n + 1;  // sentinel: crossing beyond n
  while (lo < hi) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    double f1 = 0.0, f2 = 0.0;
    eval(mid, f1, f2);
    if (f1 >= f2) hi = mid; else lo = mid + 1;
  }

  std::uint64_t best = 0;
  double best_value = std::numeric_limits<double>::infinity();
  const std::uint64_t first = lo == 0 ? 0 : lo - 1;
  const std::uint64_t last = std::min(lo, n);
  for (std::uint64_t k = first; k <= last; ++k) {
    double f1 = 0.0, f2 = 0.0;
    eval(k, f1, f2);
    const double value = std::max(f1, f2);
    // Later k wins ties: more packets on the lower-index path.
    if (value <= best_value) {
      best_value = value;
      best = k;
    }
  }
  return SplitVector{{best, n - best}, n};
}

inline SplitVector solve(std::uint64_t n, std::span<const PathParams> paths, bool with_backlog,
                         SolveStats& stats) {
  const std::size_t m = paths.size();
  if (m == 0) throw ValidationError("at least one path is required");
  if (n == 0) return SplitVector{std::vector<std::uint64_t>(m, 0), 0};
  if (m == 1) return SplitVector{{n}, n};
  if (std::all_of(paths.begin(), paths.end(), is_zero_cost)) {
    throw DegenerateInputError("inter-packet delay is identically zero on every path");
  }

  const bool has_zero_cost = std::any_of(paths.begin(), paths.end(), is_zero_cost);
  if (m == 2 && !has_zero_cost) return solve_two(n, paths, with_backlog, stats);

  std::vector<std::uint64_t> counts(m, 0);
  if (has_zero_cost) {
    // Every path's bound is at least its empty-path value; a zero-cost path
    // takes the whole object without exceeding that.
    double level = 0.0;
    for (const auto& p : paths) level = std::max(level, path_bound(0, p, with_backlog));
    const auto zero = static_cast<std::size_t>(
        std::find_if(paths.begin(), paths.end(), is_zero_cost) - paths.begin());
    counts[zero] = n;
    ++stats.bound_evaluations;
    return lex_fill(n, level, paths, counts, with_backlog);
  }

  // Start one packet below the relaxed optimum on every path so that floating
  // error in the relaxation cannot admit a packet above the optimal level, then
  // place the rest greedily on whichever path's next packet is cheapest.
  const auto x = relaxed(n, paths, with_backlog);
  std::uint64_t placed = 0;
  for (std::size_t j = 0; j < m; ++j) {
    const double fl = std::floor(x[j]);
    counts[j] = fl >= 1.0 ? static_cast<std::uint64_t>(fl) - 1 : 0;
    placed += counts[j];
  }
  while (placed < n) {
    std::size_t pick = 0;
    double pick_value = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      const double next = path_bound(counts[j] + 1, paths[j], with_backlog);
      if (next < pick_value) {
        pick_value = next;
        pick = j;
      }
    }
    ++counts[pick];
    ++placed;
  }
  ++stats.bound_evaluations;
  const double level = bound(counts, paths, with_backlog);
  return lex_fill(n, level, paths, counts, with_backlog);
}

}  // namespace detail

/// Bound D_U of a split, ignoring path backlogs.
inline double d_upper(const SplitVector& split, std::span<const PathParams> paths) {
  return detail::bound(split.counts, paths, false);
}

/// Bound of a split of new packets queued behind each path's in-flight count.
inline double d_upper_with_backlog(const SplitVector& split, std::span<const PathParams> paths) {
  return detail::bound(split.counts, paths, true);
}

/// Fractional split equalising T_U + P over every used path.
inline std::vector<double> solve_relaxed(std::uint64_t n, std::span<const PathParams> paths) {
  return detail::relaxed(n, paths, false);
}

/// Integer split minimising D_U. Ties go to the split giving more packets to
/// lower-index paths.
inline SplitVector solve_integer(std::uint64_t n, std::span<const PathParams> paths,
                                 SolveStats& stats) {
  return detail::solve(n, paths, false, stats);
}

inline SplitVector solve_integer(std::uint64_t n, std::span<const PathParams> paths) {
  SolveStats stats;
  return solve_integer(n, paths, stats);
}

/// As solve_integer, with each path's bound shifted by its in-flight count.
/// The returned counts are new packets only.
inline SplitVector split_object(std::uint64_t n, std::span<const PathParams> paths,
                                SolveStats& stats) {
  return detail::solve(n, paths, true, stats);
}

inline SplitVector split_object(std::uint64_t n, std::span<const PathParams> paths) {
  SolveStats stats;
  return split_object(n, paths, stats);
}

/// Best split among the ceil/floor roundings of the relaxed solution that sum
/// to n (2^m candidates). solve_integer is never worse than this.
inline SplitVector best_rounding_corner(std::uint64_t n, std::span<const PathParams> paths) {
  const auto x = solve_relaxed(n, paths);
  const std::size_t m = paths.size();
  std::optional<SplitVector> best;
  double best_value = std::numeric_limits<double>::infinity();
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
    SplitVector s{std::vector<std::uint64_t>(m), n};
    std::uint64_t sum = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const double v = (mask >> j) & 1 ? std::ceil(x[j]) : std::floor(x[j]);
      s.counts[j] = static_cast<std::uint64_t>(std::max(0.0, v));
      sum += s.counts[j];
    }
    if (sum != n) continue;
    const double value = d_upper(s, paths);
    if (value < best_value) {
      best_value = value;
      best = std::move(s);
    }
  }
  if (!best) throw InfeasibleError("no rounding corner sums to n");
  return *best;
}

}  // namespace sos
