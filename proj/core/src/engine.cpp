#include "exitsim/engine.hpp"

namespace exitsim::harness {

EventError::EventError(EventId id, SimTime time, const std::string& what)
    : std::runtime_error("event " + std::to_string(id) + " at t=" + std::to_string(time) +
                         "ms: " + what),
      event_(id) {}

EventId EventQueue::schedule(SimTime at, Action action) {
  if (at < now_) {
    throw std::invalid_argument("cannot schedule at " + std::to_string(at) + "ms, now is " +
                                std::to_string(now_) + "ms");
  }
  const EventId id = next_id_++;
  queue_.push(Event{at, id, std::move(action)});
  return id;
}

std::size_t EventQueue::run_until(SimTime end) {
  std::size_t count = 0;
  while (!queue_.empty() && queue_.top().time < end) {
    Event ev = queue_.top();
    queue_.pop();
    now_ = ev.time;
    try {
      ev.action(now_);
    } catch (const EventError&) {
      throw;
    } catch (const std::exception& e) {
      throw EventError(ev.id, ev.time, e.what());
    }
    ++count;
    ++fired_;
  }
  return count;
}

}  // namespace exitsim::harness
