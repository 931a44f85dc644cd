#pragma once

// Multi-stream synchronisation of timestamped events.
//
// ApproximateTime emits sets holding exactly one event per scope. The set is
// anchored on a pivot, the latest of the per-scope queue heads; every other
// scope contributes the event that minimises the set's span (its last event
// at or before the pivot, or its first event at or after it). A set is only
// emitted once each scope holds an event at or past the pivot, or the
// streams were closed, so the choice never depends on arrival interleaving.
//
// TimeFrame attaches to every primary event all secondary events whose
// timestamp lies in [t - before, t + after].

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "avfusion/error.hpp"

namespace avfusion {

struct TimedEvent {
  std::string scope;
  std::int64_t timestamp_ns = 0;
  std::vector<std::uint8_t> payload;

  [[nodiscard]] double seconds() const noexcept { return static_cast<double>(timestamp_ns) * 1e-9; }
  friend bool operator==(const TimedEvent&, const TimedEvent&) = default;
};

struct SyncSet {
  std::map<std::string, std::vector<TimedEvent>> events;
  std::int64_t pivot_ns = 0;

  /// Latest minus earliest timestamp over all events of the set.
  [[nodiscard]] std::int64_t span_ns() const {
    std::int64_t lo = std::numeric_limits<std::int64_t>::max();
    std::int64_t hi = std::numeric_limits<std::int64_t>::min();
    for (const auto& [scope, evs] : events) {
      for (const auto& e : evs) {
        lo = std::min(lo, e.timestamp_ns);
        hi = std::max(hi, e.timestamp_ns);
      }
    }
    return hi >= lo ? hi - lo : 0;
  }
};

using SyncCallback = std::function<void(SyncSet)>;

class ApproximateTimeSynchronizer {
 public:
  ApproximateTimeSynchronizer(std::vector<std::string> scopes, SyncCallback on_set)
      : scopes_(std::move(scopes)), queues_(scopes_.size()), on_set_(std::move(on_set)) {
    if (scopes_.size() < 2) throw InvalidInput("ApproximateTime needs at least two scopes");
    last_.assign(scopes_.size(), std::numeric_limits<std::int64_t>::min());
  }

  void push(TimedEvent e) {
    const std::size_t s = index_of(e.scope);
    if (e.timestamp_ns < last_[s]) throw InvalidInput("timestamps must not decrease within scope " + e.scope);
    last_[s] = e.timestamp_ns;
    queues_[s].push_back(std::move(e));
    while (try_emit()) {
    }
  }

  /// Marks every stream as finished and emits the sets that remain decidable.
  void close() {
    closed_ = true;
    while (try_emit()) {
    }
  }

 private:
  std::size_t index_of(const std::string& scope) const {
    const auto it = std::find(scopes_.begin(), scopes_.end(), scope);
    if (it == scopes_.end()) throw InvalidInput("unknown scope " + scope);
    return static_cast<std::size_t>(it - scopes_.begin());
  }

  bool try_emit() {
    for (const auto& q : queues_) {
      if (q.empty()) return false;
    }
    std::size_t pivot_scope = 0;
    for (std::size_t s = 1; s < queues_.size(); ++s) {
      if (queues_[s].front().timestamp_ns > queues_[pivot_scope].front().timestamp_ns) pivot_scope = s;
    }
    const std::int64_t pivot = queues_[pivot_scope].front().timestamp_ns;

    // Two candidates per scope: the last event <= pivot and the first >= pivot.
    std::vector<std::pair<std::size_t, std::size_t>> cand(queues_.size());
    for (std::size_t s = 0; s < queues_.size(); ++s) {
      if (s == pivot_scope) {
        cand[s] = {0, 0};
        continue;
      }
      const auto& q = queues_[s];
      const auto first_ge = static_cast<std::size_t>(
          std::find_if(q.begin(), q.end(), [&](const TimedEvent& e) { return e.timestamp_ns >= pivot; }) -
          q.begin());
      if (first_ge == q.size() && !closed_) return false;
      // The head is <= pivot, so a last event at or before the pivot exists.
      const auto first_gt = static_cast<std::size_t>(
          std::find_if(q.begin(), q.end(), [&](const TimedEvent& e) { return e.timestamp_ns > pivot; }) -
          q.begin());
      const std::size_t last_le = first_gt - 1;
      cand[s] = {last_le, first_ge < q.size() ? first_ge : last_le};
    }

    std::vector<std::size_t> best(queues_.size(), 0);
    std::int64_t best_span = std::numeric_limits<std::int64_t>::max();
    const std::size_t combos = std::size_t{1} << queues_.size();
    std::vector<std::size_t> pick(queues_.size());
    for (std::size_t mask = 0; mask < combos; ++mask) {
      if (mask & (std::size_t{1} << pivot_scope)) continue;
      std::int64_t lo = pivot;
      std::int64_t hi = pivot;
      for (std::size_t s = 0; s < queues_.size(); ++s) {
        pick[s] = (mask & (std::size_t{1} << s)) ? cand[s].second : cand[s].first;
        const std::int64_t t = queues_[s][pick[s]].timestamp_ns;
        lo = std::min(lo, t);
        hi = std::max(hi, t);
      }
      if (hi - lo < best_span) {
        best_span = hi - lo;
        best = pick;
      }
    }

    SyncSet out;
    out.pivot_ns = pivot;
    for (std::size_t s = 0; s < queues_.size(); ++s) {
      auto& q = queues_[s];
      out.events[scopes_[s]].push_back(std::move(q[best[s]]));
      q.erase(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(best[s]) + 1);
    }
    on_set_(std::move(out));
    return true;
  }

  std::vector<std::string> scopes_;
  std::vector<std::deque<TimedEvent>> queues_;
  std::vector<std::int64_t> last_;
  SyncCallback on_set_;
  bool closed_ = false;
};

class TimeFrameSynchronizer {
 public:
  TimeFrameSynchronizer(std::string primary, std::vector<std::string> secondaries, std::int64_t before_ns,
                        std::int64_t after_ns, SyncCallback on_set)
      : primary_(std::move(primary)),
        secondaries_(std::move(secondaries)),
        buffers_(secondaries_.size()),
        last_secondary_(secondaries_.size(), std::numeric_limits<std::int64_t>::min()),
        before_(before_ns),
        after_(after_ns),
        on_set_(std::move(on_set)) {
    if (before_ns < 0 || after_ns < 0) throw InvalidInput("TimeFrame windows must be non-negative");
  }

  void push(TimedEvent e) {
    if (e.scope == primary_) {
      if (e.timestamp_ns < last_primary_) throw InvalidInput("timestamps must not decrease within scope " + e.scope);
      last_primary_ = e.timestamp_ns;
      pending_.push_back(std::move(e));
    } else {
      const auto it = std::find(secondaries_.begin(), secondaries_.end(), e.scope);
      if (it == secondaries_.end()) throw InvalidInput("unknown scope " + e.scope);
      const auto s = static_cast<std::size_t>(it - secondaries_.begin());
      if (e.timestamp_ns < last_secondary_[s]) {
        throw InvalidInput("timestamps must not decrease within scope " + e.scope);
      }
      last_secondary_[s] = e.timestamp_ns;
      buffers_[s].push_back(std::move(e));
    }
    drain();
  }

  void close() {
    closed_ = true;
    drain();
  }

 private:
  void drain() {
    while (!pending_.empty()) {
      const std::int64_t t = pending_.front().timestamp_ns;
      if (!closed_) {
        for (std::int64_t last : last_secondary_) {
          if (last <= t + after_) return;
        }
      }
      SyncSet out;
      out.pivot_ns = t;
      out.events[primary_].push_back(std::move(pending_.front()));
      pending_.pop_front();
      for (std::size_t s = 0; s < buffers_.size(); ++s) {
        auto& attached = out.events[secondaries_[s]];
        for (const auto& e : buffers_[s]) {
          if (e.timestamp_ns >= t - before_ && e.timestamp_ns <= t + after_) attached.push_back(e);
        }
        while (!buffers_[s].empty() && buffers_[s].front().timestamp_ns < t - before_) buffers_[s].pop_front();
      }
      on_set_(std::move(out));
    }
  }

  std::string primary_;
  std::vector<std::string> secondaries_;
  std::vector<std::deque<TimedEvent>> buffers_;
  std::vector<std::int64_t> last_secondary_;
  std::deque<TimedEvent> pending_;
  std::int64_t last_primary_ = std::numeric_limits<std::int64_t>::min();
  std::int64_t before_;
  std::int64_t after_;
  SyncCallback on_set_;
  bool closed_ = false;
};

/// Batch ApproximateTime over complete, per-scope ordered queues.
[[nodiscard]] inline std::vector<SyncSet> approximate_time(const std::map<std::string, std::vector<TimedEvent>>& streams) {
  std::vector<std::string> scopes;
  for (const auto& [scope, evs] : streams) scopes.push_back(scope);
  std::vector<SyncSet> out;
  ApproximateTimeSynchronizer sync(scopes, [&](SyncSet s) { out.push_back(std::move(s)); });
  for (const auto& [scope, evs] : streams) {
    for (const auto& e : evs) {
      TimedEvent copy = e;
      copy.scope = scope;
      sync.push(std::move(copy));
    }
  }
  sync.close();
  return out;
}

/// Batch TimeFrame over complete queues.
[[nodiscard]] inline std::vector<SyncSet> time_frame(const std::vector<TimedEvent>& primary,
                                                     const std::map<std::string, std::vector<TimedEvent>>& secondaries,
                                                     std::int64_t before_ns, std::int64_t after_ns) {
  const std::string primary_scope = primary.empty() ? std::string("primary") : primary.front().scope;
  std::vector<std::string> scopes;
  for (const auto& [scope, evs] : secondaries) {
    if (scope == primary_scope) throw InvalidInput("secondary scope equals the primary scope");
    scopes.push_back(scope);
  }
  std::vector<SyncSet> out;
  TimeFrameSynchronizer sync(primary_scope, scopes, before_ns, after_ns,
                             [&](SyncSet s) { out.push_back(std::move(s)); });
  for (const auto& [scope, evs] : secondaries) {
    for (const auto& e : evs) {
      TimedEvent copy = e;
      copy.scope = scope;
      sync.push(std::move(copy));
    }
  }
  for (const auto& e : primary) {
    TimedEvent copy = e;
    copy.scope = primary_scope;
    sync.push(std::move(copy));
  }
  sync.close();
  return out;
}

// ---- Replay files: one "scope timestamp_ns payload_hex" record per line ----

[[nodiscard]] inline std::string to_hex(const std::vector<std::uint8_t>& bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

[[nodiscard]] inline std::vector<std::uint8_t> from_hex(const std::string& hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw InvalidInput(std::string("invalid hex digit '") + c + "'");
  };
  if (hex.size() % 2 != 0) throw InvalidInput("hex payload has odd length");
  std::vector<std::uint8_t> out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  }
  return out;
}

inline void write_replay(std::ostream& os, const std::vector<TimedEvent>& events) {
  for (const auto& e : events) {
    os << e.scope << ' ' << e.timestamp_ns << ' ' << (e.payload.empty() ? std::string("-") : to_hex(e.payload))
       << '\n';
  }
}

[[nodiscard]] inline std::vector<TimedEvent> read_replay(std::istream& is) {
  std::vector<TimedEvent> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    std::istringstream ls(line);
    TimedEvent e;
    std::string hex;
    if (!(ls >> e.scope >> e.timestamp_ns >> hex)) {
      throw InvalidInput("malformed replay record on line " + std::to_string(lineno));
    }
    if (hex != "-") e.payload = from_hex(hex);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace avfusion
