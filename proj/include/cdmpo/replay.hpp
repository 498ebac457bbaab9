#pragma once

// Bounded ring of executed transitions. Append and sample are guarded by one
// mutex, so rollout workers and the learner may share a buffer.

#include <mutex>
#include <vector>

#include "cdmpo/critics.hpp"
#include "cdmpo/environments.hpp"

namespace cdmpo {

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim);

  /// The only write site. Overwrites the oldest record once full.
  /// Throws std::invalid_argument when the record has the wrong dimensions.
  void append(const Transition& t);

  /// Uniform sample with replacement over the filled region.
  /// Throws std::logic_error when the buffer is empty.
  TransitionBatch sample(std::size_t n, Rng& rng) const;

  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }

  /// Copy of the stored records, oldest first.
  std::vector<Transition> contents() const;

 private:
  std::size_t capacity_;
  std::size_t state_dim_;
  std::size_t action_dim_;
  mutable std::mutex mutex_;
  std::vector<Transition> ring_;
  std::size_t cursor_ = 0;
};

}  // namespace cdmpo
