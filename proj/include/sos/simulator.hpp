#pragma once

// Deterministic discrete-event transfer simulator.
//
// Each path is a serial server: a packet occupies the server for one sampled
// inter-packet delay, then propagates for the path's fixed delay. The sender
// observes each delivery ack_return_ms later and feeds the path estimator.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "sos/baselines.hpp"
#include "sos/delay_sources.hpp"
#include "sos/errors.hpp"
#include "sos/estimation.hpp"
#include "sos/fec_scheduler.hpp"
#include "sos/scheduler_core.hpp"

namespace sos {

/// threshold-th smallest arrival time (any-n-of-(n+delta) decoding).
inline double completion_time(std::span<const double> arrivals, std::uint64_t threshold) {
  if (threshold == 0) throw DomainError("threshold must be positive");
  if (arrivals.size() < threshold) {
    throw InfeasibleError("fewer arrivals than the decode threshold");
  }
  std::vector<double> v(arrivals.begin(), arrivals.end());
  auto nth = v.begin() + static_cast<std::ptrdiff_t>(threshold - 1);
  std::nth_element(v.begin(), nth, v.end());
  return *nth;
}

/// Receive window in packets: ceil(sum_j D_U / mu_j).
inline std::uint64_t receive_buffer_size(const SplitVector& split, std::span<const PathParams> paths) {
  const double bound = d_upper(split, paths);
  double total = 0.0;
  for (const auto& p : paths) {
    if (!(p.mu_ms > 0.0)) throw DomainError("receive buffer size undefined for a path with zero mean delay");
    total += bound / p.mu_ms;
  }
  return static_cast<std::uint64_t>(std::ceil(total));
}

enum class SchedulerKind { sos, sos_fec, edf, sedpf };

inline const char* to_string(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::sos: return "sos";
    case SchedulerKind::sos_fec: return "sos_fec";
    case SchedulerKind::edf: return "edf";
    case SchedulerKind::sedpf: return "sedpf";
  }
  return "?";
}

inline SchedulerKind parse_scheduler(const std::string& s) {
  if (s == "sos") return SchedulerKind::sos;
  if (s == "sos_fec") return SchedulerKind::sos_fec;
  if (s == "edf") return SchedulerKind::edf;
  if (s == "sedpf") return SchedulerKind::sedpf;
  throw UsageError("unknown scheduler: " + s);
}

struct PolicyConfig {
  SchedulerKind scheduler = SchedulerKind::sos;
  double epsilon = 0.05;
  double gamma = kDefaultGamma;
};

/// Packets to send per path for one object, and how many must arrive.
struct Allocation {
  std::vector<std::uint64_t> base;  // packets of the object proper
  std::vector<std::uint64_t> sent;  // base + redundant
  std::uint64_t threshold = 0;
  std::uint64_t redundancy = 0;
  double d_upper = 0.0;
};

/// Splits n packets with the configured policy. `links` carry the current
/// in-flight count in params.in_flight.
inline Allocation allocate(std::uint64_t n, std::span<const LinkEstimate> links,
                           const PolicyConfig& cfg) {
  const std::size_t m = links.size();
  std::vector<PathParams> params;
  params.reserve(m);
  for (const auto& l : links) params.push_back(l.params);

  Allocation out;
  out.threshold = n;
  switch (cfg.scheduler) {
    case SchedulerKind::sos: {
      auto split = split_object(n, params);
      out.base = split.counts;
      out.sent = split.counts;
      break;
    }
    case SchedulerKind::sos_fec: {
      auto fec = solve_fec_split(n, params, cfg.gamma);
      out.base = fec.base.counts;
      out.sent = fec.totals;
      out.redundancy = fec.redundancy;
      break;
    }
    case SchedulerKind::edf:
    case SchedulerKind::sedpf: {
      PathQueueState state;
      for (const auto& l : links) {
        state.in_flight.push_back(l.params.in_flight);
        state.mean_ms.push_back(l.params.mu_ms);
        state.stddev_ms.push_back(l.stddev_ms);
        state.prop_ms.push_back(l.params.prop_ms);
      }
      out.base.assign(m, 0);
      for (std::uint64_t k = 0; k < n; ++k) {
        const std::size_t j =
            cfg.scheduler == SchedulerKind::edf ? edf_assign(state) : sedpf_assign(state);
        state.assign(j);
        ++out.base[j];
      }
      out.sent = out.base;
      break;
    }
  }
  out.d_upper = d_upper_with_backlog(SplitVector{out.base, n}, params);
  return out;
}

enum class EventKind : int { departure = 0, packet_delivered = 1, ack_observed = 2, object_arrival = 3 };

struct Event {
  double time_ms = 0.0;
  EventKind kind = EventKind::object_arrival;
  std::size_t path = 0;
  std::uint64_t seq = 0;  // insertion order, last tie-breaker
  std::size_t object = 0;
  std::uint64_t packet = 0;
  double service_ms = 0.0;

  auto key() const { return std::tuple(time_ms, static_cast<int>(kind), path, seq); }
};

class EventQueue {
 public:
  void push(Event e) {
    e.seq = next_seq_++;
    heap_.push(e);
  }
  bool empty() const noexcept { return heap_.empty(); }
  const Event& top() const { return heap_.top(); }
  Event pop() {
    Event e = heap_.top();
    heap_.pop();
    return e;
  }

 private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const { return a.key() > b.key(); }
  };
  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  std::uint64_t next_seq_ = 0;
};

struct QueuedPacket {
  std::size_t object;
  std::uint64_t packet;
};

/// m serial path servers sharing one event queue.
template <DelaySampler Source>
class Network {
 public:
  Network(std::vector<Source> sources, std::vector<double> prop_ms, double ack_return_ms)
      : sources_(std::move(sources)),
        prop_ms_(std::move(prop_ms)),
        ack_return_ms_(ack_return_ms),
        queues_(sources_.size()),
        busy_(sources_.size(), false),
        in_flight_(sources_.size(), 0),
        delivered_(sources_.size(), 0) {
    if (sources_.empty()) throw ConfigError("at least one path is required");
    if (prop_ms_.size() != sources_.size()) throw ConfigError("one propagation delay per path");
    if (!(ack_return_ms >= 0.0)) throw ConfigError("ack_return_ms must be nonnegative");
  }

  std::size_t paths() const noexcept { return sources_.size(); }
  double now() const noexcept { return now_; }
  double prop_ms(std::size_t j) const { return prop_ms_[j]; }
  double ack_return_ms() const noexcept { return ack_return_ms_; }
  std::uint64_t in_flight(std::size_t j) const { return in_flight_[j]; }
  std::uint64_t delivered(std::size_t j) const { return delivered_[j]; }
  std::size_t queued(std::size_t j) const { return queues_[j].size(); }
  bool busy(std::size_t j) const { return busy_[j]; }

  void enqueue(std::size_t path, std::size_t object, std::uint64_t packet) {
    queues_.at(path).push_back({object, packet});
    ++in_flight_[path];
    if (!busy_[path]) start_service(path);
  }

  /// Removes the object's packets that have not started service.
  std::vector<std::vector<std::uint64_t>> withdraw(std::size_t object) {
    std::vector<std::vector<std::uint64_t>> removed(paths());
    for (std::size_t j = 0; j < paths(); ++j) {
      auto& q = queues_[j];
      std::deque<QueuedPacket> kept;
      for (const auto& p : q) {
        if (p.object == object) removed[j].push_back(p.packet); else kept.push_back(p);
      }
      in_flight_[j] -= removed[j].size();
      q = std::move(kept);
    }
    return removed;
  }

  void schedule_arrival(double time_ms, std::size_t object) {
    Event e;
    e.time_ms = time_ms;
    e.kind = EventKind::object_arrival;
    e.object = object;
    events_.push(e);
  }

  /// Advances to the next externally visible event (delivery, ack, or object
  /// arrival). Departures are handled internally.
  std::optional<Event> next() {
    while (!events_.empty()) {
      Event e = events_.pop();
      now_ = e.time_ms;
      switch (e.kind) {
        case EventKind::departure:
          on_departure(e);
          break;
        case EventKind::packet_delivered:
          --in_flight_[e.path];
          ++delivered_[e.path];
          return e;
        case EventKind::ack_observed:
        case EventKind::object_arrival:
          return e;
      }
    }
    return std::nullopt;
  }

  bool idle() const noexcept { return events_.empty(); }

  /// True when no further event is due at `t` (so decisions at `t` can be made).
  bool idle_or_later(double t) const { return events_.empty() || events_.top().time_ms > t; }

  std::size_t queued_for(std::size_t path, std::size_t object) const {
    return static_cast<std::size_t>(std::count_if(
        queues_[path].begin(), queues_[path].end(),
        [&](const QueuedPacket& p) { return p.object == object; }));
  }

 private:
  void start_service(std::size_t path) {
    auto& q = queues_[path];
    const QueuedPacket pkt = q.front();
    q.pop_front();
    busy_[path] = true;
    const double service = sources_[path].next_delay();
    Event e;
    e.time_ms = now_ + service;
    e.kind = EventKind::departure;
    e.path = path;
    e.object = pkt.object;
    e.packet = pkt.packet;
    e.service_ms = service;
    events_.push(e);
  }

  void on_departure(const Event& dep) {
    Event d = dep;
    d.kind = EventKind::packet_delivered;
    d.time_ms = now_ + prop_ms_[dep.path];
    events_.push(d);
    Event a = d;
    a.kind = EventKind::ack_observed;
    a.time_ms = d.time_ms + ack_return_ms_;
    events_.push(a);
    busy_[dep.path] = false;
    if (!queues_[dep.path].empty()) start_service(dep.path);
  }

  std::vector<Source> sources_;
  std::vector<double> prop_ms_;
  double ack_return_ms_;
  std::vector<std::deque<QueuedPacket>> queues_;
  std::vector<bool> busy_;
  std::vector<std::uint64_t> in_flight_;
  std::vector<std::uint64_t> delivered_;
  EventQueue events_;
  double now_ = 0.0;
};

struct TransferRecord {
  std::string object_id;
  std::uint64_t size = 0;
  double start_ms = 0.0;
  double completion_ms = 0.0;
  std::vector<std::uint64_t> sent_per_path;
  std::uint64_t redundancy = 0;
  std::uint64_t hol_buffer_peak = 0;
  std::uint64_t receive_buffer = 0;  // sized window at first dispatch, 0 if undefined
  double d_upper_at_send = 0.0;

  double delay_ms() const { return completion_ms - start_ms; }
};

/// One scheduling decision, kept for replaying the split computation.
struct DispatchRecord {
  std::size_t object = 0;
  std::uint64_t packets = 0;
  double time_ms = 0.0;
  std::vector<LinkEstimate> links;  // params.in_flight = backlog at dispatch
  Allocation allocation;
};

/// Receiver-side progress of one object.
class ObjectProgress {
 public:
  ObjectProgress(std::string id, std::uint64_t size, std::size_t paths)
      : id_(std::move(id)), size_(size), received_(size, false), sent_(paths, 0),
        next_coded_(size) {}

  const std::string& id() const noexcept { return id_; }
  std::uint64_t size() const noexcept { return size_; }
  std::uint64_t arrived() const noexcept { return arrived_; }
  bool complete() const noexcept { return completion_.has_value(); }
  bool coded() const noexcept { return redundancy_ > 0; }

  void mark_start(double t) {
    if (!started_) start_ = t;
    started_ = true;
  }

  std::uint64_t take_coded_seq() { return next_coded_++; }

  void note_dispatch(std::span<const std::uint64_t> sent, std::uint64_t redundancy,
                     double bound, std::uint64_t window) {
    for (std::size_t j = 0; j < sent.size(); ++j) sent_[j] += sent[j];
    redundancy_ += redundancy;
    if (!dispatched_) {
      d_upper_ = bound;
      window_ = window;
    }
    dispatched_ = true;
  }

  void note_withdrawn(std::size_t path, std::uint64_t count) { sent_[path] -= count; }

  /// Returns true when this arrival completes the object.
  bool on_arrival(std::uint64_t packet, double t) {
    ++arrived_;
    if (complete()) return false;
    if (coded()) {
      // Coded objects are released in one piece at decode time.
      if (arrived_ >= size_) {
        completion_ = t;
        return true;
      }
      peak_ = std::max(peak_, arrived_);
      return false;
    }
    if (packet < size_ && !received_[packet]) {
      received_[packet] = true;
      ++buffered_;
      while (next_in_order_ < size_ && received_[next_in_order_]) {
        ++next_in_order_;
        --buffered_;
      }
      peak_ = std::max(peak_, buffered_);
    }
    if (arrived_ >= size_) {
      completion_ = t;
      return true;
    }
    return false;
  }

  /// Packets still needed beyond those delivered or in flight.
  std::uint64_t shortfall(std::uint64_t outstanding) const {
    return outstanding >= size_ ? 0 : size_ - outstanding;
  }

  std::uint64_t total_sent() const {
    std::uint64_t s = 0;
    for (auto v : sent_) s += v;
    return s;
  }

  TransferRecord record() const {
    TransferRecord r;
    r.object_id = id_;
    r.size = size_;
    r.start_ms = start_;
    r.completion_ms = completion_.value_or(std::numeric_limits<double>::quiet_NaN());
    r.sent_per_path = sent_;
    const std::uint64_t total = total_sent();
    r.redundancy = total > size_ ? total - size_ : 0;
    r.hol_buffer_peak = peak_;
    r.receive_buffer = window_;
    r.d_upper_at_send = d_upper_;
    return r;
  }

 private:
  std::string id_;
  std::uint64_t size_;
  std::vector<bool> received_;
  std::vector<std::uint64_t> sent_;
  std::uint64_t next_coded_;
  std::uint64_t arrived_ = 0;
  std::uint64_t redundancy_ = 0;
  std::uint64_t next_in_order_ = 0;
  std::uint64_t buffered_ = 0;
  std::uint64_t peak_ = 0;
  std::uint64_t window_ = 0;
  double start_ = 0.0;
  double d_upper_ = 0.0;
  bool started_ = false;
  bool dispatched_ = false;
  std::optional<double> completion_;
};

struct SimConfig {
  PolicyConfig policy;
  double ack_return_ms = 0.0;
  std::vector<double> prop_ms;
};

/// Current per-path knowledge with live backlogs filled in.
template <DelaySampler Source>
std::vector<LinkEstimate> current_links(const Network<Source>& net,
                                        std::span<const PathEstimator> estimators,
                                        double epsilon) {
  const double eps_j = epsilon / static_cast<double>(net.paths());
  std::vector<LinkEstimate> links;
  links.reserve(net.paths());
  for (std::size_t j = 0; j < net.paths(); ++j) {
    LinkEstimate e = estimators[j].estimate(eps_j);
    e.params.in_flight = net.in_flight(j);
    links.push_back(e);
  }
  return links;
}

/// Allocates `packets` (the object's sequence numbers to send) over the paths
/// and enqueues them. Base packets are numbered in order of expected arrival so
/// the receiver's in-order buffer sees the schedule's natural order.
template <DelaySampler Source>
Allocation dispatch(Network<Source>& net, std::span<const PathEstimator> estimators,
                    const PolicyConfig& policy, std::size_t object, ObjectProgress& progress,
                    std::vector<std::uint64_t> packets,
                    std::vector<DispatchRecord>* log = nullptr) {
  const std::size_t m = net.paths();
  auto links = current_links(net, estimators, policy.epsilon);
  Allocation alloc = allocate(packets.size(), links, policy);

  struct Slot {
    double expected;
    std::size_t path;
    std::uint64_t rank;
  };
  std::vector<Slot> slots;
  slots.reserve(packets.size());
  for (std::size_t j = 0; j < m; ++j) {
    const auto& p = links[j].params;
    for (std::uint64_t r = 1; r <= alloc.base[j]; ++r) {
      slots.push_back({static_cast<double>(p.in_flight + r) * p.mu_ms + p.prop_ms, j, r});
    }
  }
  std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
    return std::tie(a.expected, a.path, a.rank) < std::tie(b.expected, b.path, b.rank);
  });
  std::sort(packets.begin(), packets.end());
  std::vector<std::vector<std::uint64_t>> per_path(m);
  for (std::size_t i = 0; i < slots.size(); ++i) per_path[slots[i].path].push_back(packets[i]);
  // slots were pushed per path in rank order, and sorting by expected time
  // keeps each path's ranks increasing, so per_path is already in send order.
  for (std::size_t j = 0; j < m; ++j) {
    for (std::uint64_t extra = alloc.base[j]; extra < alloc.sent[j]; ++extra) {
      per_path[j].push_back(progress.take_coded_seq());
    }
  }

  std::uint64_t window = 0;
  {
    std::vector<PathParams> params;
    for (const auto& l : links) params.push_back(l.params);
    try {
      window = receive_buffer_size(SplitVector{alloc.base, packets.size()}, params);
    } catch (const DomainError&) {
      window = 0;
    }
  }
  progress.mark_start(net.now());
  progress.note_dispatch(alloc.sent, alloc.redundancy, alloc.d_upper, window);
  if (log) log->push_back({object, packets.size(), net.now(), links, alloc});

  for (std::size_t j = 0; j < m; ++j) {
    for (auto pkt : per_path[j]) net.enqueue(j, object, pkt);
  }
  return alloc;
}

struct ObjectArrival {
  std::string id;
  std::uint64_t size = 1;
  double arrival_ms = 0.0;
};

inline std::vector<std::uint64_t> iota_packets(std::uint64_t n) {
  std::vector<std::uint64_t> v(n);
  for (std::uint64_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

/// Sends each object when it arrives (in arrival order), splitting it with the
/// configured policy against the current backlogs, and runs until every packet
/// has been delivered and acknowledged. Estimators are updated in place.
template <DelaySampler Source>
std::vector<TransferRecord> run_transfer(std::span<const ObjectArrival> objects,
                                         std::vector<Source> sources,
                                         std::span<PathEstimator> estimators,
                                         const SimConfig& config,
                                         std::vector<DispatchRecord>* log = nullptr) {
  if (estimators.size() != sources.size()) throw ConfigError("one estimator per path");
  Network<Source> net(std::move(sources), config.prop_ms, config.ack_return_ms);
  std::vector<ObjectProgress> progress;
  progress.reserve(objects.size());
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].size == 0) throw ConfigError("object size must be positive");
    progress.emplace_back(objects[i].id, objects[i].size, net.paths());
    net.schedule_arrival(objects[i].arrival_ms, i);
  }

  while (auto ev = net.next()) {
    switch (ev->kind) {
      case EventKind::object_arrival:
        dispatch(net, std::span<const PathEstimator>(estimators), config.policy, ev->object,
                 progress[ev->object], iota_packets(objects[ev->object].size), log);
        break;
      case EventKind::packet_delivered:
        progress[ev->object].on_arrival(ev->packet, ev->time_ms);
        break;
      case EventKind::ack_observed:
        estimators[ev->path].record(ev->service_ms);
        break;
      case EventKind::departure:
        break;
    }
  }

  std::vector<TransferRecord> records;
  records.reserve(progress.size());
  for (const auto& p : progress) records.push_back(p.record());
  return records;
}

}  // namespace sos
