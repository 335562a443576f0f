#pragma once

// Per-packet inter-packet delay generators: constant, Gamma (moment
// matched), and trace replay with wrap-around.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <fstream>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <boost/math/distributions/gamma.hpp>

#include "sos/errors.hpp"

namespace sos {

/// Anything the simulator can pull inter-packet delays from.
template <typename S>
concept DelaySampler = requires(S s) {
  { s.next_delay() } -> std::convertible_to<double>;
};

enum class SourceKind { deterministic, gamma, trace };

struct DelaySourceSpec {
  SourceKind kind = SourceKind::deterministic;
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  std::string trace_path;
  double propagation_ms = 0.0;
  std::uint64_t seed = 0;
};

struct GammaShape {
  double shape;
  double scale;
};

/// Moment matching: shape*scale = mean, shape*scale^2 = stddev^2.
inline GammaShape gamma_moment_match(double mean_ms, double stddev_ms) {
  if (!(mean_ms > 0.0) || !(stddev_ms > 0.0)) {
    throw ConfigError("gamma source requires mean_ms > 0 and stddev_ms > 0");
  }
  const double ratio = mean_ms / stddev_ms;
  return {ratio * ratio, stddev_ms * stddev_ms / mean_ms};
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

inline bool parse_u64(std::string_view s, std::uint64_t& out) {
  s = trim(s);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace detail

/// Parses the `seq,delay_ms` trace format from an in-memory string.
inline std::vector<double> parse_trace(std::string_view text) {
  std::vector<double> samples;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos) {
      throw ParseError("expected two comma-separated columns `seq,delay_ms`", line_no);
    }
    const auto seq = detail::trim(line.substr(0, comma));
    const auto delay = detail::trim(line.substr(comma + 1));
    if (line_no == 1 && seq == "seq" && delay == "delay_ms") continue;
    std::uint64_t seq_value = 0;
    double delay_value = 0.0;
    if (!detail::parse_u64(seq, seq_value)) throw ParseError("bad sequence number", line_no);
    if (!detail::parse_double(delay, delay_value)) throw ParseError("bad delay_ms value", line_no);
    if (delay_value < 0.0) {
      throw ValidationError("line " + std::to_string(line_no) + ": negative delay " +
                            std::string(delay));
    }
    samples.push_back(delay_value);
  }
  return samples;
}

inline std::vector<double> read_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open trace file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto samples = parse_trace(text);
  if (samples.empty()) throw ConfigError("trace file has no samples: " + path);
  return samples;
}

/// Stateful delay generator for one path. Movable, not shared between runs.
class DelaySource {
 public:
  static DelaySource deterministic(double mean_ms) {
    if (!(mean_ms >= 0.0)) throw ConfigError("deterministic source requires mean_ms >= 0");
    return DelaySource(Constant{mean_ms});
  }

  static DelaySource gamma(double mean_ms, double stddev_ms, std::uint64_t seed) {
    const auto g = gamma_moment_match(mean_ms, stddev_ms);
    return DelaySource(Gamma{std::mt19937_64(seed), std::gamma_distribution<double>(g.shape, g.scale)});
  }

  /// Replays `samples` starting at `offset` (mod size), wrapping at the end.
  static DelaySource trace(std::shared_ptr<const std::vector<double>> samples,
                           std::size_t offset = 0) {
    if (!samples || samples->empty()) throw ConfigError("trace source has no samples");
    const std::size_t start = offset % samples->size();
    return DelaySource(Trace{std::move(samples), start});
  }

  static DelaySource from_spec(const DelaySourceSpec& spec) {
    switch (spec.kind) {
      case SourceKind::deterministic:
        return deterministic(spec.mean_ms);
      case SourceKind::gamma:
        return gamma(spec.mean_ms, spec.stddev_ms, spec.seed);
      case SourceKind::trace:
        return trace(std::make_shared<const std::vector<double>>(read_trace_file(spec.trace_path)));
    }
    throw ConfigError("unknown source kind");
  }

  double next_delay() {
    return std::visit([](auto& s) { return s.next(); }, state_);
  }

  SourceKind kind() const noexcept {
    switch (state_.index()) {
      case 0: return SourceKind::deterministic;
      case 1: return SourceKind::gamma;
      default: return SourceKind::trace;
    }
  }

  /// Number of samples in a trace source, 0 for synthetic kinds.
  std::size_t trace_length() const noexcept {
    if (const auto* t = std::get_if<Trace>(&state_)) return t->samples->size();
    return 0;
  }

 private:
  struct Constant {
    double value;
    double next() const { return value; }
  };
  struct Gamma {
    std::mt19937_64 rng;
    std::gamma_distribution<double> dist;
    double next() { return dist(rng); }
  };
  struct Trace {
    std::shared_ptr<const std::vector<double>> samples;
    std::size_t pos;
    double next() {
      const double v = (*samples)[pos];
      pos = (pos + 1) % samples->size();
      return v;
    }
  };

  using State = std::variant<Constant, Gamma, Trace>;
  explicit DelaySource(State s) : state_(std::move(s)) {}

  State state_;
};

static_assert(DelaySampler<DelaySource>);

/// Loads a trace file into a replay source.
inline DelaySource load_trace(const std::string& path) {
  return DelaySource::trace(std::make_shared<const std::vector<double>>(read_trace_file(path)));
}

/// Statistics of a delay source as an estimator over a window of recent
/// samples would report them: mean, window minimum, 95th percentile, stddev.
struct SourceMoments {
  double mean_ms = 0.0;
  double min_ms = 0.0;
  double p95_ms = 0.0;
  double stddev_ms = 0.0;
};

/// Nearest-rank percentile (index ceil(q*size) in 1-based sorted order).
inline double nearest_rank(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw NoDataError("percentile of an empty sample");
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

inline SourceMoments sample_moments(std::span<const double> samples) {
  if (samples.empty()) throw NoDataError("no samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double v : sorted) sum += v;
  const double mean = sum / static_cast<double>(sorted.size());
  double ss = 0.0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  return {mean, sorted.front(), nearest_rank(sorted, 0.95),
          std::sqrt(ss / static_cast<double>(sorted.size()))};
}

/// For gamma sources the minimum is the 1/(window+1) quantile, the typical
/// smallest value among `window` draws. Traces report their sample statistics.
inline SourceMoments source_moments(const DelaySourceSpec& spec,
                                    std::span<const double> trace_samples = {},
                                    std::size_t window = 5000) {
  switch (spec.kind) {
    case SourceKind::deterministic:
      return {spec.mean_ms, spec.mean_ms, spec.mean_ms, 0.0};
    case SourceKind::gamma: {
      const auto g = gamma_moment_match(spec.mean_ms, spec.stddev_ms);
      const boost::math::gamma_distribution<double> dist(g.shape, g.scale);
      const double low = boost::math::quantile(dist, 1.0 / (static_cast<double>(window) + 1.0));
      return {spec.mean_ms, low, boost::math::quantile(dist, 0.95), spec.stddev_ms};
    }
    case SourceKind::trace:
      if (trace_samples.empty()) return sample_moments(read_trace_file(spec.trace_path));
      return sample_moments(trace_samples);
  }
  throw ConfigError("unknown source kind");
}

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for (stream, replication, path) under a root seed. Each component is
/// folded in with one splitmix64 round so neighbouring indices decorrelate.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream,
                                    std::uint64_t replication, std::uint64_t path) {
  std::uint64_t h = mix64(root);
  h = mix64(h ^ stream);
  h = mix64(h ^ replication);
  return mix64(h ^ path);
}

}  // namespace sos
