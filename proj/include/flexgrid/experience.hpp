#pragma once

#include <deque>
#include <span>
#include <vector>

#include "flexgrid/types.hpp"

namespace flexgrid {

/// Rolling per-household experience store. Transitions arrive in chronological
/// order; terminal flags close a daily episode. Only the most recent
/// `window_days` episodes are retained: the oldest day is evicted the moment a
/// transition of a new day beyond the window arrives, so the store never holds
/// more than window_days * steps_per_day samples.
class ExperienceBuffer {
 public:
  explicit ExperienceBuffer(int window_days = 30) : window_days_(window_days) {
    if (window_days_ < 1) throw ContractViolation("ExperienceBuffer: window_days must be >= 1");
  }

  void push_transitions(std::span<const Transition> transitions) {
    for (const Transition& t : transitions) push_one(t);
  }

  void push_one(const Transition& t) {
    if (!open_.empty() && t.state.minute_of_day < open_.back().state.minute_of_day)
      throw ContractViolation("ExperienceBuffer: transitions out of chronological order");
    if (open_.empty() && static_cast<int>(episodes_.size()) >= window_days_)
      episodes_.pop_front();  // a new day starts: drop the day falling out of the window
    open_.push_back(t);
    if (t.terminal) {
      episodes_.push_back(std::move(open_));
      open_.clear();
    }
  }

  std::size_t size() const {
    std::size_t n = open_.size();
    for (const auto& ep : episodes_) n += ep.size();
    return n;
  }

  bool empty() const { return size() == 0; }

  /// Number of completed daily episodes currently held.
  int completed_days() const { return static_cast<int>(episodes_.size()); }

  int window_days() const { return window_days_; }

  /// Copies the whole window into one chronological vector (episodes oldest
  /// first, then the open partial day).
  std::vector<Transition> flatten() const {
    std::vector<Transition> out;
    out.reserve(size());
    for (const auto& ep : episodes_) out.insert(out.end(), ep.begin(), ep.end());
    out.insert(out.end(), open_.begin(), open_.end());
    return out;
  }

  const std::deque<std::vector<Transition>>& episodes() const { return episodes_; }

 private:
  int window_days_;
  std::deque<std::vector<Transition>> episodes_;
  std::vector<Transition> open_;
};

/// Free-function spelling used throughout the pipeline.
inline void push_transitions(ExperienceBuffer& buffer, std::span<const Transition> transitions) {
  buffer.push_transitions(transitions);
}

}  // namespace flexgrid
