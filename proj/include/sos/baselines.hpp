#pragma once

// Per-packet comparison schedulers.
//
// EDF sends each packet on the path with the earliest expected delivery.
// SEDPF models each path's backlog as a Gaussian and picks the path that
// minimises the expected maximum delivery time across all paths, using
// Clark's moment-matching approximation for the max of Gaussians.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include "sos/errors.hpp"

namespace sos {

struct PathQueueState {
  std::vector<std::uint64_t> in_flight;
  std::vector<double> mean_ms;
  std::vector<double> stddev_ms;
  std::vector<double> prop_ms;

  std::size_t paths() const noexcept { return in_flight.size(); }

  void assign(std::size_t path) { ++in_flight.at(path); }
  void deliver(std::size_t path) {
    if (in_flight.at(path) == 0) throw ValidationError("delivery on a path with nothing in flight");
    --in_flight[path];
  }
};

namespace detail {

inline void check_state(const PathQueueState& s) {
  const std::size_t m = s.in_flight.size();
  if (m == 0) throw ValidationError("at least one path is required");
  if (s.mean_ms.size() != m || s.stddev_ms.size() != m || s.prop_ms.size() != m) {
    throw ValidationError("path queue state vectors differ in length");
  }
}

inline double expected_delivery(const PathQueueState& s, std::size_t j) {
  return static_cast<double>(s.in_flight[j] + 1) * s.mean_ms[j] + s.prop_ms[j];
}

}  // namespace detail

inline std::size_t edf_assign(const PathQueueState& state) {
  detail::check_state(state);
  std::size_t best = 0;
  double best_value = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < state.paths(); ++j) {
    const double v = detail::expected_delivery(state, j);
    if (v < best_value) {
      best_value = v;
      best = j;
    }
  }
  return best;
}

struct Gaussian {
  double mean = 0.0;
  double var = 0.0;
};

/// Clark (1961): first two moments of max(X, Y) for independent Gaussians,
/// returned as a moment-matched Gaussian.
inline Gaussian clark_max(const Gaussian& x, const Gaussian& y) {
  const double a2 = x.var + y.var;
  if (a2 <= 0.0) return x.mean >= y.mean ? x : y;
  const double a = std::sqrt(a2);
  const double alpha = (x.mean - y.mean) / a;
  const double cdf = 0.5 * std::erfc(-alpha / std::numbers::sqrt2);
  const double cdf_neg = 1.0 - cdf;
  const double pdf = std::exp(-0.5 * alpha * alpha) / std::sqrt(2.0 * std::numbers::pi);
  const double m1 = x.mean * cdf + y.mean * cdf_neg + a * pdf;
  const double m2 = (x.mean * x.mean + x.var) * cdf + (y.mean * y.mean + y.var) * cdf_neg +
                    (x.mean + y.mean) * a * pdf;
  return {m1, std::max(0.0, m2 - m1 * m1)};
}

/// Expected maximum delivery time if the next packet goes to `candidate`.
inline double sedpf_expected_max(const PathQueueState& state, std::size_t candidate) {
  Gaussian acc;
  for (std::size_t j = 0; j < state.paths(); ++j) {
    const double k = static_cast<double>(state.in_flight[j] + (j == candidate ? 1 : 0));
    const Gaussian g{k * state.mean_ms[j] + state.prop_ms[j],
                     k * state.stddev_ms[j] * state.stddev_ms[j]};
    acc = j == 0 ? g : clark_max(acc, g);
  }
  return acc.mean;
}

/// Ties on the expected maximum fall back to the candidate's own expected
/// delivery, then to the lowest index, so that with zero variance the choice
/// coincides with edf_assign.
inline std::size_t sedpf_assign(const PathQueueState& state) {
  detail::check_state(state);
  std::size_t best = 0;
  double best_max = std::numeric_limits<double>::infinity();
  double best_own = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < state.paths(); ++c) {
    const double v = sedpf_expected_max(state, c);
    const double own = detail::expected_delivery(state, c);
    if (v < best_max || (v == best_max && own < best_own)) {
      best_max = v;
      best_own = own;
      best = c;
    }
  }
  return best;
}

}  // namespace sos
