#pragma once

// Object workloads: fixed-size object streams and web pages described by a
// page spec (objects, DOM membership, connections, request triggers).

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sos/delay_sources.hpp"
#include "sos/errors.hpp"
#include "sos/simulator.hpp"

namespace sos {

inline constexpr int kDomPriority = 1;
inline constexpr int kNonDomPriority = 0;

struct Trigger {
  enum class Kind { time_zero, at_time, dependency };

  Kind kind = Kind::time_zero;
  double time_ms = 0.0;
  std::string object_id;            // dependency target
  std::uint64_t packet_index = 0;   // 1-based
  std::size_t object_index = 0;     // resolved target, set by the loader

  static Trigger at_zero() { return {}; }
  static Trigger at(double ms) { return {Kind::at_time, ms, {}, 0, 0}; }
  static Trigger after(std::string id, std::uint64_t packet) {
    return {Kind::dependency, 0.0, std::move(id), packet, 0};
  }
};

struct ObjectSpec {
  std::string id;
  std::uint64_t size_packets = 1;
  int priority = kNonDomPriority;
  bool dom = false;
  std::string connection_id;
  bool chunked = false;
  Trigger trigger;
};

struct PageResult {
  double dom_complete_ms = 0.0;
  double page_complete_ms = 0.0;
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const auto c = line.find(',');
    out.push_back(trim(line.substr(0, c)));
    if (c == std::string_view::npos) break;
    line.remove_prefix(c + 1);
  }
  return out;
}

inline bool parse_flag(std::string_view s, bool& out) {
  if (s == "0") { out = false; return true; }
  if (s == "1") { out = true; return true; }
  return false;
}

inline Trigger parse_trigger(std::string_view s, std::size_t line) {
  if (s == "t0") return Trigger::at_zero();
  if (s.starts_with("t:")) {
    double ms = 0.0;
    if (!parse_double(s.substr(2), ms) || ms < 0.0) throw ParseError("bad trigger time", line);
    return Trigger::at(ms);
  }
  if (s.starts_with("dep:")) {
    const auto rest = s.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string_view::npos || colon == 0) throw ParseError("bad dependency trigger", line);
    std::uint64_t packet = 0;
    if (!parse_u64(rest.substr(colon + 1), packet)) throw ParseError("bad dependency packet index", line);
    return Trigger::after(std::string(rest.substr(0, colon)), packet);
  }
  throw ParseError("unknown trigger `" + std::string(s) + "`", line);
}

}  // namespace detail

/// Replaces every chunked object by size_packets unit objects `<id>#<k>`, and
/// rewrites dependencies on packet k of a chunked object to unit k.
inline std::vector<ObjectSpec> expand_chunked(const std::vector<ObjectSpec>& specs) {
  std::unordered_map<std::string, bool> chunked;
  for (const auto& s : specs) chunked[s.id] = s.chunked;
  std::vector<ObjectSpec> out;
  for (const auto& s : specs) {
    Trigger trig = s.trigger;
    if (trig.kind == Trigger::Kind::dependency) {
      auto it = chunked.find(trig.object_id);
      if (it != chunked.end() && it->second) {
        trig.object_id += "#" + std::to_string(trig.packet_index);
        trig.packet_index = 1;
      }
    }
    if (!s.chunked) {
      ObjectSpec copy = s;
      copy.trigger = trig;
      out.push_back(std::move(copy));
      continue;
    }
    for (std::uint64_t k = 1; k <= s.size_packets; ++k) {
      ObjectSpec unit = s;
      unit.id = s.id + "#" + std::to_string(k);
      unit.size_packets = 1;
      unit.chunked = false;
      unit.trigger = trig;
      out.push_back(std::move(unit));
    }
  }
  return out;
}

/// Checks ids, packet-index bounds, dangling references and cycles, then
/// resolves dependency targets to indices. Expects chunked objects expanded.
inline void resolve_triggers(std::vector<ObjectSpec>& specs) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].size_packets == 0) throw ValidationError("object " + specs[i].id + " has size 0");
    if (!index.emplace(specs[i].id, i).second) {
      throw ValidationError("duplicate object id " + specs[i].id);
    }
  }
  for (auto& s : specs) {
    if (s.trigger.kind != Trigger::Kind::dependency) continue;
    auto it = index.find(s.trigger.object_id);
    if (it == index.end()) {
      throw ValidationError("object " + s.id + " depends on unknown object " + s.trigger.object_id);
    }
    const auto& target = specs[it->second];
    if (s.trigger.packet_index == 0 || s.trigger.packet_index > target.size_packets) {
      throw ValidationError("object " + s.id + " depends on packet " +
                            std::to_string(s.trigger.packet_index) + " of " + target.id +
                            " which has " + std::to_string(target.size_packets) + " packets");
    }
    s.trigger.object_index = it->second;
  }
  // Each object has at most one parent, so following parents from any node
  // either terminates or revisits a node of the current walk.
  std::vector<int> state(specs.size(), 0);  // 0 unvisited, 1 on walk, 2 done
  for (std::size_t start = 0; start < specs.size(); ++start) {
    std::vector<std::size_t> walk;
    std::size_t cur = start;
    while (state[cur] == 0) {
      state[cur] = 1;
      walk.push_back(cur);
      if (specs[cur].trigger.kind != Trigger::Kind::dependency) break;
      cur = specs[cur].trigger.object_index;
      if (state[cur] == 1) throw ValidationError("trigger cycle through object " + specs[cur].id);
    }
    for (auto v : walk) state[v] = 2;
  }
}

/// Parses a page spec: `id,size_packets,dom,connection_id,chunked,trigger`
/// with an optional trailing `priority` column. `#` starts a comment line.
inline std::vector<ObjectSpec> parse_page_spec(std::string_view text) {
  std::vector<ObjectSpec> specs;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = detail::trim(text.substr(0, eol));
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto cols = detail::split_commas(line);
    if (cols.size() != 6 && cols.size() != 7) {
      throw ParseError("expected 6 or 7 comma-separated columns", line_no);
    }
    if (cols[0] == "id" && cols[1] == "size_packets") continue;
    ObjectSpec s;
    s.id = std::string(cols[0]);
    if (s.id.empty()) throw ParseError("empty object id", line_no);
    if (!detail::parse_u64(cols[1], s.size_packets) || s.size_packets == 0) {
      throw ParseError("size_packets must be a positive integer", line_no);
    }
    if (!detail::parse_flag(cols[2], s.dom)) throw ParseError("dom must be 0 or 1", line_no);
    s.connection_id = std::string(cols[3]);
    if (!detail::parse_flag(cols[4], s.chunked)) throw ParseError("chunked must be 0 or 1", line_no);
    s.trigger = detail::parse_trigger(cols[5], line_no);
    s.priority = s.dom ? kDomPriority : kNonDomPriority;
    if (cols.size() == 7) {
      std::int64_t prio = 0;
      auto [p, ec] = std::from_chars(cols[6].data(), cols[6].data() + cols[6].size(), prio);
      if (ec != std::errc{} || p != cols[6].data() + cols[6].size()) {
        throw ParseError("bad priority", line_no);
      }
      s.priority = static_cast<int>(prio);
    }
    specs.push_back(std::move(s));
  }
  // Bounds are checked against the declared sizes before expansion rewrites
  // dependencies onto unit objects.
  {
    auto declared = specs;
    for (auto& s : declared) s.chunked = false;
    resolve_triggers(declared);
  }
  auto expanded = expand_chunked(specs);
  resolve_triggers(expanded);
  return expanded;
}

inline std::vector<ObjectSpec> load_page_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open page spec: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_page_spec(ss.str());
}

/// Fixed-size objects for the object-size experiments, all due at time zero.
inline std::vector<ObjectArrival> fixed_size_objects(std::uint64_t size, std::size_t count) {
  std::vector<ObjectArrival> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back({"obj" + std::to_string(i), size, 0.0});
  return out;
}

enum class OrderingPolicy { priority, fifo };

/// Objects whose triggers have fired (or will, at ready_ms) but which have not
/// been dispatched.
class PendingQueue {
 public:
  struct Entry {
    std::size_t object;
    int priority;
    std::uint64_t arrival;  // order in which the trigger fired
    std::string id;
    double ready_ms;
    std::string connection;
  };

  explicit PendingQueue(OrderingPolicy policy = OrderingPolicy::priority) : policy_(policy) {}

  void add(std::size_t object, const ObjectSpec& spec, double ready_ms) {
    entries_.push_back({object, spec.priority, next_arrival_++, spec.id, ready_ms, spec.connection_id});
  }

  /// Re-queues a preempted object, keeping its original arrival rank.
  void requeue(const Entry& e) { entries_.push_back(e); }

  bool empty() const noexcept { return entries_.empty(); }
  std::size_t size() const noexcept { return entries_.size(); }
  OrderingPolicy policy() const noexcept { return policy_; }

  /// Best triggered entry at `now_ms` without removing it. Objects on one
  /// connection leave in request order, so only the earliest-requested
  /// pending object of each connection is eligible.
  std::optional<Entry> peek(double now_ms) const {
    const Entry* best = nullptr;
    for (const auto& e : entries_) {
      if (e.ready_ms > now_ms || !head_of_connection(e)) continue;
      if (!best || before(e, *best)) best = &e;
    }
    if (!best) return std::nullopt;
    return *best;
  }

  std::optional<Entry> pop(double now_ms) {
    auto top = peek(now_ms);
    if (!top) return std::nullopt;
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const Entry& e) { return e.arrival == top->arrival && e.object == top->object; });
    entries_.erase(it);
    return top;
  }

 private:
  bool head_of_connection(const Entry& e) const {
    return std::none_of(entries_.begin(), entries_.end(), [&](const Entry& o) {
      return o.connection == e.connection && o.arrival < e.arrival;
    });
  }

  bool before(const Entry& a, const Entry& b) const {
    if (policy_ == OrderingPolicy::priority && a.priority != b.priority) return a.priority > b.priority;
    if (a.arrival != b.arrival) return a.arrival < b.arrival;
    return a.id < b.id;
  }

  OrderingPolicy policy_;
  std::vector<Entry> entries_;
  std::uint64_t next_arrival_ = 0;
};

/// Highest-priority triggered object (ties: arrival order, then id).
inline std::optional<PendingQueue::Entry> next_ready_object(PendingQueue& pending, double now_ms) {
  return pending.pop(now_ms);
}

/// A transmitting object may be preempted only by a strictly more urgent
/// object on a different connection; same-connection reordering would break
/// HTTP response ordering.
inline bool maybe_preempt(const ObjectSpec& current, const ObjectSpec& candidate) {
  return candidate.priority > current.priority && candidate.connection_id != current.connection_id;
}

struct RandomPageOptions {
  std::size_t min_objects = 3;
  std::size_t max_objects = 50;
  std::size_t min_connections = 1;
  std::size_t max_connections = 10;
  double min_dom_fraction = 0.10;
  double max_dom_fraction = 0.40;
  std::uint64_t max_object_packets = 40;
  std::uint64_t max_html_packets = 12;
};

/// Random page: a chunked DOM HTML root on connection c0, then objects each
/// requested by a packet of an earlier object. DOM objects are only requested
/// by DOM objects. Returned unexpanded and unresolved, as a page-spec file
/// would be.
inline std::vector<ObjectSpec> random_page(std::mt19937_64& rng, const RandomPageOptions& opt = {}) {
  auto uniform_int = [&](std::uint64_t lo, std::uint64_t hi) {
    return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng);
  };
  const auto count = static_cast<std::size_t>(uniform_int(opt.min_objects, opt.max_objects));
  const auto connections = static_cast<std::size_t>(uniform_int(opt.min_connections, opt.max_connections));
  const double frac = std::uniform_real_distribution<double>(opt.min_dom_fraction, opt.max_dom_fraction)(rng);
  auto dom_count = static_cast<std::size_t>(std::llround(frac * static_cast<double>(count)));
  dom_count = std::clamp<std::size_t>(dom_count, 1, count);

  // The root is DOM; choose the remaining DOM members among the rest.
  std::vector<bool> is_dom(count, false);
  is_dom[0] = true;
  std::vector<std::size_t> rest(count - 1);
  for (std::size_t i = 0; i + 1 < count; ++i) rest[i] = i + 1;
  std::shuffle(rest.begin(), rest.end(), rng);
  for (std::size_t i = 0; i + 1 < dom_count && i < rest.size(); ++i) is_dom[rest[i]] = true;

  std::vector<ObjectSpec> page;
  page.reserve(count);
  ObjectSpec html;
  html.id = "o0";
  html.size_packets = uniform_int(2, opt.max_html_packets);
  html.dom = true;
  html.priority = kDomPriority;
  html.connection_id = "c0";
  html.chunked = true;
  page.push_back(html);
  std::vector<std::size_t> dom_parents{0};
  for (std::size_t i = 1; i < count; ++i) {
    ObjectSpec s;
    s.id = "o" + std::to_string(i);
    s.size_packets = uniform_int(1, opt.max_object_packets);
    s.dom = is_dom[i];
    s.priority = s.dom ? kDomPriority : kNonDomPriority;
    s.connection_id = "c" + std::to_string(uniform_int(0, connections - 1));
    const std::size_t parent =
        s.dom ? dom_parents[uniform_int(0, dom_parents.size() - 1)] : uniform_int(0, i - 1);
    s.trigger = Trigger::after(page[parent].id, uniform_int(1, page[parent].size_packets));
    if (s.dom) dom_parents.push_back(i);
    page.push_back(std::move(s));
  }
  return page;
}

/// Chunk expansion plus trigger resolution, as load_page_spec does for files.
inline std::vector<ObjectSpec> prepare_page(const std::vector<ObjectSpec>& page) {
  auto expanded = expand_chunked(page);
  resolve_triggers(expanded);
  return expanded;
}

}  // namespace sos
