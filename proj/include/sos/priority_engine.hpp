#pragma once

// Multi-object transmission of a page: objects become available as their
// triggers fire, are ordered by priority (or request order for FIFO), split
// against the live per-path backlogs, and may preempt less urgent objects on
// other connections.

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "sos/errors.hpp"
#include "sos/estimation.hpp"
#include "sos/simulator.hpp"
#include "sos/workloads.hpp"

namespace sos {

struct EngineConfig {
  PolicyConfig policy;
  OrderingPolicy ordering = OrderingPolicy::priority;
  double ack_return_ms = 0.0;
  std::vector<double> prop_ms;
};

enum class ObjectState { waiting, pending, active, completed };

template <DelaySampler Source>
class PriorityEngine {
 public:
  PriorityEngine(std::vector<ObjectSpec> specs, std::vector<Source> sources,
                 std::span<PathEstimator> estimators, EngineConfig config)
      : specs_(std::move(specs)),
        estimators_(estimators),
        config_(std::move(config)),
        net_(std::move(sources), config_.prop_ms, config_.ack_return_ms),
        pending_(config_.ordering),
        state_(specs_.size(), ObjectState::waiting),
        dependents_(specs_.size()),
        fired_(specs_.size(), false) {
    if (estimators_.size() != net_.paths()) throw ConfigError("one estimator per path");
    progress_.reserve(specs_.size());
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      progress_.emplace_back(specs_[i].id, specs_[i].size_packets, net_.paths());
      const auto& t = specs_[i].trigger;
      switch (t.kind) {
        case Trigger::Kind::time_zero:
          net_.schedule_arrival(0.0, i);
          break;
        case Trigger::Kind::at_time:
          net_.schedule_arrival(t.time_ms, i);
          break;
        case Trigger::Kind::dependency:
          if (t.object_index >= specs_.size() || specs_[t.object_index].id != t.object_id) {
            throw ValidationError("unresolved trigger on object " + specs_[i].id);
          }
          dependents_[t.object_index].push_back(i);
          break;
      }
    }
  }

  /// Processes one event; returns false once nothing is left to do.
  bool step() {
    auto ev = net_.next();
    if (!ev) return false;
    switch (ev->kind) {
      case EventKind::object_arrival:
        state_[ev->object] = ObjectState::pending;
        pending_.add(ev->object, specs_[ev->object], ev->time_ms);
        break;
      case EventKind::packet_delivered:
        on_delivery(*ev);
        break;
      case EventKind::ack_observed:
        estimators_[ev->path].record(ev->service_ms);
        break;
      case EventKind::departure:
        break;
    }
    // Let every event at this instant land before deciding what to send.
    if (!pending_.empty() && net_.idle_or_later(net_.now())) dispatch_ready();
    return true;
  }

  std::vector<TransferRecord> run() {
    while (step()) {
    }
    return records();
  }

  std::vector<TransferRecord> records() const {
    std::vector<TransferRecord> out;
    out.reserve(progress_.size());
    for (const auto& p : progress_) out.push_back(p.record());
    return out;
  }

  const std::vector<ObjectSpec>& specs() const noexcept { return specs_; }
  const std::vector<DispatchRecord>& dispatch_log() const noexcept { return log_; }
  const std::vector<std::size_t>& preemptions() const noexcept { return preempted_log_; }
  ObjectState state(std::size_t object) const { return state_.at(object); }
  std::uint64_t delivered_packets() const noexcept { return delivered_; }
  const Network<Source>& network() const noexcept { return net_; }

 private:
  void on_delivery(const Event& ev) {
    ++delivered_;
    auto& prog = progress_[ev.object];
    const bool done = prog.on_arrival(ev.packet, ev.time_ms);
    if (done) state_[ev.object] = ObjectState::completed;
    // Dependent requests go out once the referenced packet count has arrived.
    for (std::size_t dep : dependents_[ev.object]) {
      if (fired_[dep]) continue;
      if (prog.arrived() >= specs_[dep].trigger.packet_index) {
        fired_[dep] = true;
        net_.schedule_arrival(ev.time_ms + config_.ack_return_ms, dep);
      }
    }
  }

  bool has_unsent(std::size_t object) const {
    for (std::size_t j = 0; j < net_.paths(); ++j) {
      if (net_.queued_for(j, object) > 0) return true;
    }
    return false;
  }

  void preempt_for(const ObjectSpec& candidate) {
    for (std::size_t a = 0; a < specs_.size(); ++a) {
      if (state_[a] != ObjectState::active || !has_unsent(a)) continue;
      if (!maybe_preempt(specs_[a], candidate)) continue;
      auto removed = net_.withdraw(a);
      std::vector<std::uint64_t> packets;
      for (std::size_t j = 0; j < removed.size(); ++j) {
        progress_[a].note_withdrawn(j, removed[j].size());
        packets.insert(packets.end(), removed[j].begin(), removed[j].end());
      }
      resume_[a] = std::move(packets);
      state_[a] = ObjectState::pending;
      pending_.requeue({a, specs_[a].priority, first_arrival_[a], specs_[a].id, net_.now(),
                       specs_[a].connection_id});
      preempted_log_.push_back(a);
    }
  }

  void dispatch_ready() {
    const double now = net_.now();
    while (auto top = pending_.peek(now)) {
      const std::size_t obj = top->object;
      if (pending_.policy() == OrderingPolicy::priority) preempt_for(specs_[obj]);
      pending_.pop(now);  // obj still ranks first: preempted objects rank below it
      if (!first_arrival_.contains(obj)) first_arrival_[obj] = top->arrival;

      std::vector<std::uint64_t> packets;
      auto resumed = resume_.find(obj);
      if (resumed == resume_.end()) {
        packets = iota_packets(specs_[obj].size_packets);
      } else {
        packets = residual_packets(obj, std::move(resumed->second));
        resume_.erase(resumed);
      }
      if (packets.empty()) {
        state_[obj] = progress_[obj].complete() ? ObjectState::completed : ObjectState::active;
        continue;
      }
      state_[obj] = ObjectState::active;
      dispatch(net_, std::span<const PathEstimator>(estimators_.data(), estimators_.size()),
               config_.policy, obj, progress_[obj], std::move(packets), &log_);
    }
  }

  // Uncoded objects resend exactly what was pulled back. Coded objects only
  // need enough packets to reach the decode threshold.
  std::vector<std::uint64_t> residual_packets(std::size_t obj, std::vector<std::uint64_t> withdrawn) {
    auto& prog = progress_[obj];
    if (!prog.coded()) return withdrawn;
    const std::uint64_t need = prog.shortfall(prog.total_sent());
    std::sort(withdrawn.begin(), withdrawn.end());
    std::vector<std::uint64_t> out;
    for (auto p : withdrawn) {
      if (out.size() == need) break;
      out.push_back(p);
    }
    while (out.size() < need) out.push_back(prog.take_coded_seq());
    return out;
  }

  std::vector<ObjectSpec> specs_;
  std::span<PathEstimator> estimators_;
  EngineConfig config_;
  Network<Source> net_;
  PendingQueue pending_;
  std::vector<ObjectState> state_;
  std::vector<std::vector<std::size_t>> dependents_;
  std::vector<bool> fired_;
  std::vector<ObjectProgress> progress_;
  std::vector<DispatchRecord> log_;
  std::vector<std::size_t> preempted_log_;
  std::map<std::size_t, std::vector<std::uint64_t>> resume_;
  std::map<std::size_t, std::uint64_t> first_arrival_;
  std::uint64_t delivered_ = 0;
};

/// DOM-complete and page-complete times from per-object records.
inline PageResult page_metrics(std::span<const TransferRecord> records,
                               std::span<const ObjectSpec> specs) {
  if (records.size() != specs.size()) throw ValidationError("one record per object is required");
  PageResult r;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const double t = records[i].completion_ms;
    if (std::isnan(t)) {
      if (specs[i].dom) throw InfeasibleError("DOM object " + specs[i].id + " never completed");
      r.page_complete_ms = std::numeric_limits<double>::infinity();
      continue;
    }
    if (specs[i].dom) r.dom_complete_ms = std::max(r.dom_complete_ms, t);
    r.page_complete_ms = std::max(r.page_complete_ms, t);
  }
  return r;
}

/// Runs one page to completion.
template <DelaySampler Source>
std::vector<TransferRecord> run_page(const std::vector<ObjectSpec>& specs,
                                     std::vector<Source> sources,
                                     std::span<PathEstimator> estimators,
                                     const EngineConfig& config) {
  PriorityEngine<Source> engine(specs, std::move(sources), estimators, config);
  return engine.run();
}

}  // namespace sos
