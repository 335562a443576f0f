#pragma once

// Rolling-window estimates of per-path delay statistics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <vector>

#include "sos/delay_sources.hpp"
#include "sos/errors.hpp"
#include "sos/scheduler_core.hpp"

namespace sos {

inline constexpr std::size_t kDefaultWindow = 5000;

class RollingWindow {
 public:
  explicit RollingWindow(std::size_t capacity = kDefaultWindow) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("window capacity must be positive");
  }

  void record(double delay_ms) {
    if (!(delay_ms >= 0.0)) throw ValidationError("delay sample must be nonnegative");
    if (samples_.size() == capacity_) samples_.pop_front();
    samples_.push_back(delay_ms);
  }

  std::size_t size() const noexcept { return samples_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  bool empty() const noexcept { return samples_.empty(); }
  const std::deque<double>& samples() const noexcept { return samples_; }

 private:
  std::size_t capacity_;
  std::deque<double> samples_;
};

inline RollingWindow record_sample(RollingWindow window, double delay_ms) {
  window.record(delay_ms);
  return window;
}

/// mean, min and nearest-rank 95th percentile of the window, with w derived
/// from the (min, p95) range.
inline PathParams snapshot_params(const RollingWindow& window, double epsilon_j, double prop_ms) {
  if (window.empty()) throw NoDataError("no delay samples recorded for this path");
  std::vector<double> sorted(window.samples().begin(), window.samples().end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double v : sorted) sum += v;
  PathParams p;
  p.mu_ms = sum / static_cast<double>(sorted.size());
  p.a_ms = sorted.front();
  p.b_ms = nearest_rank(sorted, 0.95);
  // Summation rounding can push the mean of a constant window off its value.
  if (p.a_ms == p.b_ms && sorted.front() == sorted.back()) p.mu_ms = p.a_ms;
  p.mu_ms = std::max(p.mu_ms, p.a_ms);
  p.w = compute_w(epsilon_j, p.a_ms, p.b_ms);
  p.prop_ms = prop_ms;
  return p;
}

inline double window_stddev(const RollingWindow& window) {
  if (window.empty()) throw NoDataError("no delay samples recorded for this path");
  double sum = 0.0;
  for (double v : window.samples()) sum += v;
  const double mean = sum / static_cast<double>(window.size());
  double ss = 0.0;
  for (double v : window.samples()) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(window.size()));
}

/// What a scheduler knows about one path at dispatch time.
struct LinkEstimate {
  PathParams params;
  double stddev_ms = 0.0;
};

/// Starting statistics used until the window holds data.
struct PathPrior {
  double mu_ms = 0.0;
  double a_ms = 0.0;
  double b_ms = 0.0;
  double stddev_ms = 0.0;
};

/// One path's knowledge source: either frozen (oracle parameters) or a
/// rolling window fed by ACK observations.
class PathEstimator {
 public:
  static PathEstimator frozen(const PathPrior& truth, double prop_ms) {
    return PathEstimator(truth, prop_ms, true, kDefaultWindow);
  }

  static PathEstimator rolling(const PathPrior& prior, double prop_ms,
                               std::size_t capacity = kDefaultWindow) {
    return PathEstimator(prior, prop_ms, false, capacity);
  }

  void record(double delay_ms) {
    if (!frozen_) window_.record(delay_ms);
  }

  LinkEstimate estimate(double epsilon_j) const {
    LinkEstimate e;
    if (frozen_ || window_.empty()) {
      e.params.mu_ms = prior_.mu_ms;
      e.params.a_ms = prior_.a_ms;
      e.params.b_ms = prior_.b_ms;
      e.params.w = compute_w(epsilon_j, prior_.a_ms, prior_.b_ms);
      e.params.prop_ms = prop_ms_;
      e.stddev_ms = prior_.stddev_ms;
      return e;
    }
    e.params = snapshot_params(window_, epsilon_j, prop_ms_);
    e.stddev_ms = window_stddev(window_);
    return e;
  }

  bool is_frozen() const noexcept { return frozen_; }
  const RollingWindow& window() const noexcept { return window_; }

 private:
  PathEstimator(const PathPrior& prior, double prop_ms, bool frozen, std::size_t capacity)
      : prior_(prior), prop_ms_(prop_ms), frozen_(frozen), window_(capacity) {}

  PathPrior prior_;
  double prop_ms_;
  bool frozen_;
  RollingWindow window_;
};

}  // namespace sos
