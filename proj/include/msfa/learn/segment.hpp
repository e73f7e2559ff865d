#pragma once

#include <deque>
#include <vector>

#include "msfa/numcore/array.hpp"
#include "msfa/numcore/rng.hpp"

namespace msfa::learn {

/// A fixed-length slice of one episode.
///
/// Transition t goes from obs[t] to obs[t+1] with actions[t], rewards[t]
/// and the environment's cumulant row t. mask[t] is 1 for real transitions
/// and 0 for padding; it is 1 on a prefix only. terminal[t] marks the
/// transition that ended the episode (no bootstrapping past it).
struct Segment {
  Array obs;        // [T+1, O]
  Array cumulants;  // [T, d]
  Array task;       // [d]
  std::vector<int> actions;
  std::vector<Real> rewards;
  std::vector<Real> mask;
  std::vector<Real> terminal;
  int first_prev_action = -1;         // action preceding obs[0], -1 at episode start
  std::vector<Array> initial_state;  // recurrent state before obs[0], each [1, width]

  std::size_t length() const { return actions.size(); }
  std::size_t valid_steps() const;
  /// Throws ContractError if sizes disagree, the mask is not a 0/1 prefix,
  /// or padded steps carry reward.
  void validate() const;
  /// Copy extended to `length` steps with mask-0 padding.
  Segment padded(std::size_t length) const;
};

/// Time-major batch of equal-length segments.
struct Batch {
  std::size_t T = 0;
  std::size_t B = 0;
  Array obs;           // [T+1, B, O]
  Array prev_actions;  // [T+1, B, A]: one-hot of the action preceding obs[t]
  Array actions;       // [T, B, A] one-hot
  std::vector<int> action_index;  // [T*B]
  Array rewards;       // [T, B]
  Array cumulants;     // [T, B, d]
  Array tasks;         // [B, d]
  Array mask;          // [T, B]
  Array terminal;      // [T, B]
  std::vector<Array> initial_state;  // each [B, width]
};

Batch make_batch(const std::vector<const Segment*>& segments, std::size_t num_actions);

/// FIFO ring of complete segments with uniform sampling without replacement.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Segment segment);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// `count` distinct segments; throws ContractError if fewer are stored.
  std::vector<const Segment*> sample(std::size_t count, Rng& rng) const;
  const std::deque<Segment>& items() const { return items_; }

 private:
  std::size_t capacity_;
  std::deque<Segment> items_;
};

}  // namespace msfa::learn
