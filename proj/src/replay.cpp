#include "cdmpo/replay.hpp"

#include <algorithm>
#include <stdexcept>

namespace cdmpo {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim)
    : capacity_(capacity), state_dim_(state_dim), action_dim_(action_dim) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  ring_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::append(const Transition& t) {
  if (t.state.size() != state_dim_ || t.next_state.size() != state_dim_ || t.action.size() != action_dim_) {
    throw std::invalid_argument("transition dimensions do not match the replay buffer");
  }
  std::lock_guard lock(mutex_);
  if (ring_.size() < capacity_) {
    ring_.push_back(t);
  } else {
    ring_[cursor_] = t;
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

TransitionBatch ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  std::lock_guard lock(mutex_);
  if (ring_.empty()) throw std::logic_error("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, ring_.size() - 1);
  TransitionBatch b;
  b.states = Matrix(n, state_dim_);
  b.actions = Matrix(n, action_dim_);
  b.next_states = Matrix(n, state_dim_);
  b.rewards.resize(n);
  b.costs.resize(n);
  b.terminal.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Transition& t = ring_[pick(rng)];
    std::copy(t.state.begin(), t.state.end(), b.states.row(i).begin());
    std::copy(t.action.begin(), t.action.end(), b.actions.row(i).begin());
    std::copy(t.next_state.begin(), t.next_state.end(), b.next_states.row(i).begin());
    b.rewards[i] = t.reward;
    b.costs[i] = t.cost;
    b.terminal[i] = t.terminal ? 1 : 0;
  }
  return b;
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mutex_);
  return ring_.size();
}

std::vector<Transition> ReplayBuffer::contents() const {
  std::lock_guard lock(mutex_);
  if (ring_.size() < capacity_) return ring_;
  std::vector<Transition> out(ring_.begin() + static_cast<std::ptrdiff_t>(cursor_), ring_.end());
  out.insert(out.end(), ring_.begin(), ring_.begin() + static_cast<std::ptrdiff_t>(cursor_));
  return out;
}

}  // namespace cdmpo
