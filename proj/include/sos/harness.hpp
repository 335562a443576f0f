#pragma once

// Experiment driver: config files, replicated runs, sweeps, improvement
// metrics, and CSV output.
//
// Seeding: every random stream is derived from the root seed with
// derive_seed(root, stream, replication, path). Replication r of every
// scheduler sees the same delay realizations, so comparisons between
// schedulers use common random numbers.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sos/delay_sources.hpp"
#include "sos/errors.hpp"
#include "sos/estimation.hpp"
#include "sos/priority_engine.hpp"
#include "sos/simulator.hpp"
#include "sos/workloads.hpp"

namespace sos {

enum class ParamMode { oracle, estimated };

inline const char* to_string(ParamMode m) { return m == ParamMode::oracle ? "oracle" : "estimated"; }

inline ParamMode parse_mode(std::string_view s) {
  if (s == "oracle") return ParamMode::oracle;
  if (s == "estimated") return ParamMode::estimated;
  throw UsageError("unknown mode: " + std::string(s));
}

struct ExperimentConfig {
  std::string label;
  SchedulerKind scheduler = SchedulerKind::sos;
  double epsilon = 0.05;
  double gamma = kDefaultGamma;
  std::vector<DelaySourceSpec> paths;
  std::uint64_t object_size = 100;
  std::string page_path;  // non-empty selects the page workload
  OrderingPolicy ordering = OrderingPolicy::priority;
  std::uint64_t seed = 1;
  std::size_t replications = 1000;
  ParamMode mode = ParamMode::oracle;
  std::size_t warmup = kDefaultWindow;
  double ack_return_ms = 0.0;

  bool page_workload() const noexcept { return !page_path.empty(); }
  PolicyConfig policy() const { return {scheduler, epsilon, gamma}; }
};

inline void validate(const ExperimentConfig& c) {
  if (c.replications == 0) throw UsageError("replications must be at least 1");
  if (c.paths.empty()) throw UsageError("at least one [path] is required");
  if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) throw UsageError("epsilon must lie in (0, 1)");
  if (!(c.gamma >= 0.0 && c.gamma <= 1.0)) throw UsageError("gamma must lie in [0, 1]");
  if (!c.page_workload() && c.object_size == 0) throw UsageError("object_size must be positive");
  if (!(c.ack_return_ms >= 0.0)) throw UsageError("ack_return_ms must be nonnegative");
  for (std::size_t j = 0; j < c.paths.size(); ++j) {
    const auto& p = c.paths[j];
    const std::string where = "path " + std::to_string(j) + ": ";
    if (!(p.propagation_ms >= 0.0)) throw UsageError(where + "propagation_ms must be nonnegative");
    switch (p.kind) {
      case SourceKind::deterministic:
        if (!(p.mean_ms >= 0.0)) throw UsageError(where + "mean_ms must be nonnegative");
        break;
      case SourceKind::gamma:
        if (!(p.mean_ms > 0.0 && p.stddev_ms > 0.0)) {
          throw UsageError(where + "gamma requires mean_ms > 0 and stddev_ms > 0");
        }
        break;
      case SourceKind::trace:
        if (p.trace_path.empty()) throw UsageError(where + "trace requires a trace file");
        break;
    }
  }
}

namespace detail {

inline double config_double(std::string_view v, std::size_t line) {
  double d = 0.0;
  if (!parse_double(v, d)) throw ParseError("expected a number, got '" + std::string(v) + "'", line);
  return d;
}

inline std::uint64_t config_u64(std::string_view v, std::size_t line) {
  std::uint64_t u = 0;
  if (!parse_u64(v, u)) throw ParseError("expected an integer, got '" + std::string(v) + "'", line);
  return u;
}

inline SourceKind parse_kind(std::string_view v, std::size_t line) {
  if (v == "deterministic") return SourceKind::deterministic;
  if (v == "gamma") return SourceKind::gamma;
  if (v == "trace") return SourceKind::trace;
  throw ParseError("unknown path kind '" + std::string(v) + "'", line);
}

}  // namespace detail

/// Parses the experiment config format:
///
///     # comment
///     scheduler = sos_fec
///     object_size = 100
///     [path]
///     kind = gamma
///     mean_ms = 10
///     stddev_ms = 50
///
/// Top-level keys: label, scheduler, epsilon, gamma, object_size, page,
/// ordering, seed, replications, mode, warmup, ack_return_ms. Path keys:
/// kind, mean_ms, stddev_ms, trace, propagation_ms, seed. Relative file
/// references are resolved against `base_dir`.
inline ExperimentConfig parse_config(std::string_view text,
                                     const std::filesystem::path& base_dir = {}) {
  ExperimentConfig cfg;
  bool in_path = false;
  std::size_t line_no = 0;
  auto resolve = [&](std::string_view v) {
    std::filesystem::path p{std::string(v)};
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return p.string();
  };
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = detail::trim(text.substr(0, eol));
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line = detail::trim(line.substr(0, line.size() - 1));
    if (line.empty() || line.front() == '#') continue;
    if (line == "[path]") {
      cfg.paths.emplace_back();
      in_path = true;
      continue;
    }
    if (line.front() == '[') throw ParseError("unknown section " + std::string(line), line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key = value", line_no);
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));

    if (in_path) {
      auto& p = cfg.paths.back();
      if (key == "kind") p.kind = detail::parse_kind(value, line_no);
      else if (key == "mean_ms") p.mean_ms = detail::config_double(value, line_no);
      else if (key == "stddev_ms") p.stddev_ms = detail::config_double(value, line_no);
      else if (key == "trace") p.trace_path = resolve(value);
      else if (key == "propagation_ms") p.propagation_ms = detail::config_double(value, line_no);
      else if (key == "seed") p.seed = detail::config_u64(value, line_no);
      else throw ParseError("unknown path key '" + std::string(key) + "'", line_no);
      continue;
    }
    try {
      if (key == "label") cfg.label = std::string(value);
      else if (key == "scheduler") cfg.scheduler = parse_scheduler(std::string(value));
      else if (key == "epsilon") cfg.epsilon = detail::config_double(value, line_no);
      else if (key == "gamma") cfg.gamma = detail::config_double(value, line_no);
      else if (key == "object_size") cfg.object_size = detail::config_u64(value, line_no);
      else if (key == "page") cfg.page_path = resolve(value);
      else if (key == "ordering") {
        if (value == "priority") cfg.ordering = OrderingPolicy::priority;
        else if (value == "fifo") cfg.ordering = OrderingPolicy::fifo;
        else throw ParseError("ordering must be priority or fifo", line_no);
      }
      else if (key == "seed") cfg.seed = detail::config_u64(value, line_no);
      else if (key == "replications") cfg.replications = detail::config_u64(value, line_no);
      else if (key == "mode") cfg.mode = parse_mode(value);
      else if (key == "warmup") cfg.warmup = detail::config_u64(value, line_no);
      else if (key == "ack_return_ms") cfg.ack_return_ms = detail::config_double(value, line_no);
      else throw ParseError("unknown key '" + std::string(key) + "'", line_no);
    } catch (const UsageError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::filesystem::path(path).parent_path());
}

struct MetricsRow {
  std::string label;
  double mean_delay_ms = 0.0;
  double p95_delay_ms = 0.0;
  double redundancy_fraction = 0.0;
  std::optional<double> improvement_mean_pct;
  std::optional<double> improvement_p95_pct;
};

inline double improvement_pct(double baseline_ms, double candidate_ms) {
  if (!(baseline_ms > 0.0) || !(candidate_ms > 0.0)) {
    throw DomainError("improvement needs positive delays");
  }
  return (baseline_ms / candidate_ms - 1.0) * 100.0;
}

/// Per-replication outcomes behind one MetricsRow. For page workloads the
/// delay is the DOM-complete time.
struct ExperimentResult {
  MetricsRow row;
  std::vector<double> delays;
  std::vector<double> d_upper;
  std::vector<double> page_complete;
  std::vector<std::uint64_t> redundancy;
  std::vector<std::uint64_t> hol_peak;
  std::vector<std::uint64_t> receive_buffer;
};

namespace detail {

enum Stream : std::uint64_t { kDelayStream = 1, kWarmupStream = 2, kOffsetStream = 3 };

struct PreparedPath {
  DelaySourceSpec spec;
  std::shared_ptr<const std::vector<double>> trace;
  SourceMoments truth;
};

inline std::vector<PreparedPath> prepare_paths(const ExperimentConfig& cfg) {
  std::vector<PreparedPath> out;
  for (const auto& spec : cfg.paths) {
    PreparedPath p{spec, nullptr, {}};
    if (spec.kind == SourceKind::trace) {
      p.trace = std::make_shared<const std::vector<double>>(read_trace_file(spec.trace_path));
      p.truth = sample_moments(*p.trace);
    } else {
      p.truth = source_moments(spec, {}, kDefaultWindow);
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline DelaySource make_source(const PreparedPath& p, std::uint64_t root, std::uint64_t stream,
                               std::uint64_t replication, std::uint64_t path) {
  const std::uint64_t seed = mix64(derive_seed(root, stream, replication, path) ^ p.spec.seed);
  switch (p.spec.kind) {
    case SourceKind::deterministic:
      return DelaySource::deterministic(p.spec.mean_ms);
    case SourceKind::gamma:
      return DelaySource::gamma(p.spec.mean_ms, p.spec.stddev_ms, seed);
    case SourceKind::trace:
      return DelaySource::trace(p.trace, static_cast<std::size_t>(seed % p.trace->size()));
  }
  throw ConfigError("unknown source kind");
}

inline PathPrior prior_of(const SourceMoments& m) {
  return {m.mean_ms, m.min_ms, m.p95_ms, m.stddev_ms};
}

inline std::vector<PathEstimator> make_estimators(const ExperimentConfig& cfg,
                                                  const std::vector<PreparedPath>& paths) {
  std::vector<PathEstimator> est;
  for (std::size_t j = 0; j < paths.size(); ++j) {
    const auto prior = prior_of(paths[j].truth);
    if (cfg.mode == ParamMode::oracle) {
      est.push_back(PathEstimator::frozen(prior, paths[j].spec.propagation_ms));
      continue;
    }
    auto e = PathEstimator::rolling(prior, paths[j].spec.propagation_ms);
    auto warm = make_source(paths[j], cfg.seed, kWarmupStream, 0, j);
    for (std::size_t k = 0; k < cfg.warmup; ++k) e.record(warm.next_delay());
    est.push_back(std::move(e));
  }
  return est;
}

inline void summarize(ExperimentResult& r, const ExperimentConfig& cfg, std::uint64_t n_for_fraction) {
  const auto& d = r.delays;
  r.row.label = cfg.label.empty() ? std::string(to_string(cfg.scheduler)) : cfg.label;
  r.row.mean_delay_ms = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
  std::vector<double> sorted = d;
  std::sort(sorted.begin(), sorted.end());
  r.row.p95_delay_ms = nearest_rank(sorted, 0.95);
  double extra = 0.0;
  for (auto x : r.redundancy) extra += static_cast<double>(x);
  r.row.redundancy_fraction =
      extra / (static_cast<double>(n_for_fraction) * static_cast<double>(r.redundancy.size()));
}

}  // namespace detail

namespace detail {

inline ExperimentResult run_replications(const ExperimentConfig& cfg, const std::vector<ObjectSpec>* page) {
  const auto paths = prepare_paths(cfg);
  auto estimators = make_estimators(cfg, paths);
  const std::size_t m = paths.size();
  std::vector<double> prop(m);
  for (std::size_t j = 0; j < m; ++j) prop[j] = paths[j].spec.propagation_ms;

  std::uint64_t page_packets = 0;
  if (page) {
    for (const auto& s : *page) page_packets += s.size_packets;
  }

  ExperimentResult r;
  r.delays.reserve(cfg.replications);
  for (std::size_t rep = 0; rep < cfg.replications; ++rep) {
    std::vector<DelaySource> sources;
    sources.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
      sources.push_back(make_source(paths[j], cfg.seed, kDelayStream, rep, j));
    }
    if (page) {
      EngineConfig ec{cfg.policy(), cfg.ordering, cfg.ack_return_ms, prop};
      const auto records = run_page(*page, std::move(sources), std::span<PathEstimator>(estimators), ec);
      const auto res = page_metrics(records, *page);
      r.delays.push_back(res.dom_complete_ms);
      r.page_complete.push_back(res.page_complete_ms);
      std::uint64_t extra = 0;
      for (const auto& rec : records) extra += rec.redundancy;
      r.redundancy.push_back(extra);
      continue;
    }
    const ObjectArrival obj{"obj", cfg.object_size, 0.0};
    SimConfig sc{cfg.policy(), cfg.ack_return_ms, prop};
    const auto records = run_transfer(std::span<const ObjectArrival>(&obj, 1), std::move(sources),
                                      std::span<PathEstimator>(estimators), sc);
    const auto& rec = records.front();
    r.delays.push_back(rec.delay_ms());
    r.d_upper.push_back(rec.d_upper_at_send);
    r.redundancy.push_back(rec.redundancy);
    r.hol_peak.push_back(rec.hol_buffer_peak);
    r.receive_buffer.push_back(rec.receive_buffer);
  }
  summarize(r, cfg, page ? page_packets : cfg.object_size);
  return r;
}

}  // namespace detail

inline ExperimentResult run_experiment_detailed(const ExperimentConfig& cfg) {
  validate(cfg);
  if (!cfg.page_workload()) return detail::run_replications(cfg, nullptr);
  const auto page = load_page_spec(cfg.page_path);
  return detail::run_replications(cfg, &page);
}

/// Page workload over an already prepared page (expanded, triggers resolved);
/// `page_path` in `cfg` is ignored.
inline ExperimentResult run_page_experiment(const ExperimentConfig& cfg, const std::vector<ObjectSpec>& page) {
  auto c = cfg;
  c.page_path.clear();
  validate(c);
  if (page.empty()) throw UsageError("page has no objects");
  return detail::run_replications(cfg, &page);
}


inline MetricsRow run_experiment(const ExperimentConfig& cfg) {
  return run_experiment_detailed(cfg).row;
}

/// Fills the improvement columns of `row` against `baseline`.
inline void apply_improvement(MetricsRow& row, const MetricsRow& baseline) {
  row.improvement_mean_pct = improvement_pct(baseline.mean_delay_ms, row.mean_delay_ms);
  row.improvement_p95_pct = improvement_pct(baseline.p95_delay_ms, row.p95_delay_ms);
}

enum class SweepAxis { sigma, object_size, gamma };

inline SweepAxis parse_axis(std::string_view s) {
  if (s == "sigma") return SweepAxis::sigma;
  if (s == "object_size") return SweepAxis::object_size;
  if (s == "gamma") return SweepAxis::gamma;
  throw UsageError("unknown sweep axis: " + std::string(s));
}

struct SweepSpec {
  SweepAxis axis = SweepAxis::sigma;
  std::size_t path = 0;  // which path's stddev a sigma sweep varies
};

inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

/// Applies one sweep value to a copy of `base`.
inline ExperimentConfig sweep_point(const ExperimentConfig& base, const SweepSpec& sweep, double value) {
  ExperimentConfig c = base;
  std::string name;
  switch (sweep.axis) {
    case SweepAxis::sigma:
      if (sweep.path >= c.paths.size()) throw UsageError("sigma sweep path index out of range");
      if (c.paths[sweep.path].kind != SourceKind::gamma) {
        throw UsageError("sigma sweep needs a gamma path");
      }
      c.paths[sweep.path].stddev_ms = value;
      name = "sigma" + std::to_string(sweep.path + 1);
      break;
    case SweepAxis::object_size:
      if (!(value >= 1.0) || value != std::floor(value)) {
        throw UsageError("object sizes must be positive integers");
      }
      c.object_size = static_cast<std::uint64_t>(value);
      name = "n";
      break;
    case SweepAxis::gamma:
      c.gamma = value;
      name = "gamma";
      break;
  }
  const std::string prefix = base.label.empty() ? std::string(to_string(c.scheduler)) : base.label;
  c.label = prefix + " " + name + "=" + format_value(value);
  return c;
}

/// One row per value. With a baseline, each point is also run under the
/// baseline scheduler (same sources and seeds) and improvements are filled.
inline std::vector<MetricsRow> run_sweep(const ExperimentConfig& base, const SweepSpec& sweep,
                                         const std::vector<double>& values,
                                         std::optional<SchedulerKind> baseline = std::nullopt) {
  if (values.empty()) throw UsageError("sweep needs at least one value");
  if (sweep.axis == SweepAxis::gamma && base.scheduler != SchedulerKind::sos_fec) {
    throw UsageError("a gamma sweep needs the sos_fec scheduler");
  }
  std::vector<MetricsRow> rows;
  rows.reserve(values.size());
  for (double v : values) {
    const auto point = sweep_point(base, sweep, v);
    auto row = run_experiment(point);
    if (baseline) {
      auto b = point;
      b.scheduler = *baseline;
      apply_improvement(row, run_experiment(b));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline constexpr const char* kCsvHeader =
    "label,mean_delay_ms,p95_delay_ms,redundancy_fraction,improvement_mean_pct,improvement_p95_pct";

inline std::string format_csv(const std::vector<MetricsRow>& rows) {
  std::string out = kCsvHeader;
  out += '\n';
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    std::string label = r.label;
    std::replace(label.begin(), label.end(), ',', ';');
    out += label + ',' + num(r.mean_delay_ms) + ',' + num(r.p95_delay_ms) + ',' +
           num(r.redundancy_fraction) + ',' +
           (r.improvement_mean_pct ? num(*r.improvement_mean_pct) : std::string()) + ',' +
           (r.improvement_p95_pct ? num(*r.improvement_p95_pct) : std::string()) + '\n';
  }
  return out;
}

inline void write_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << format_csv(rows);
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<MetricsRow> parse_csv(std::string_view text) {
  std::vector<MetricsRow> rows;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    const std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != kCsvHeader) throw ParseError("unexpected CSV header", line_no);
      continue;
    }
    const auto cols = detail::split_commas(line);
    if (cols.size() != 6) throw ParseError("expected 6 columns", line_no);
    MetricsRow r;
    r.label = std::string(cols[0]);
    r.mean_delay_ms = detail::config_double(cols[1], line_no);
    r.p95_delay_ms = detail::config_double(cols[2], line_no);
    r.redundancy_fraction = detail::config_double(cols[3], line_no);
    if (!cols[4].empty()) r.improvement_mean_pct = detail::config_double(cols[4], line_no);
    if (!cols[5].empty()) r.improvement_p95_pct = detail::config_double(cols[5], line_no);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<MetricsRow> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either side is constant.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("spearman needs two equal-length samples");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t k = i;
      while (k + 1 < idx.size() && v[idx[k + 1]] == v[idx[i]]) ++k;
      const double avg = (static_cast<double>(i) + static_cast<double>(k)) / 2.0 + 1.0;
      for (std::size_t t = i; t <= k; ++t) r[idx[t]] = avg;
      i = k + 1;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace sos
