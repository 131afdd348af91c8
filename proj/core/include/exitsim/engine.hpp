#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "exitsim/sim_time.hpp"

namespace exitsim::harness {

using EventId = std::uint64_t;

class EventError : public std::runtime_error {
 public:
  EventError(EventId id, SimTime time, const std::string& what);
  EventId event() const { return event_; }

 private:
  EventId event_;
};

/// Discrete-event loop. Events fire in (time, insertion order).
class EventQueue {
 public:
  using Action = std::function<void(SimTime now)>;

  /// Throws std::invalid_argument when `at` is earlier than now().
  EventId schedule(SimTime at, Action action);

  /// Fires every event with time < `end`. Errors escape as EventError naming
  /// the event id. Returns the number of events fired.
  std::size_t run_until(SimTime end);

  SimTime now() const { return now_; }
  std::size_t pending() const { return queue_.size(); }
  std::size_t fired() const { return fired_; }

 private:
  struct Event {
    SimTime time;
    EventId id;
    Action action;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.id > b.id;
    }
  };

  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  EventId next_id_ = 1;
  SimTime now_ = 0;
  std::size_t fired_ = 0;
};

}  // namespace exitsim::harness
