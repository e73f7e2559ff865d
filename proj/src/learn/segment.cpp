#include "msfa/learn/segment.hpp"

#include <algorithm>
#include <numeric>

namespace msfa::learn {

std::size_t Segment::valid_steps() const {
  std::size_t n = 0;
  while (n < mask.size() && mask[n] == 1) ++n;
  return n;
}

void Segment::validate() const {
  const std::size_t T = length();
  if (obs.rank() != 2 || obs.dim(0) != T + 1) throw ContractError("segment obs must be [T+1, O]");
  if (cumulants.rank() != 2 || cumulants.dim(0) != T || cumulants.dim(1) != task.size()) {
    throw ContractError("segment cumulants must be [T, d]");
  }
  if (rewards.size() != T || mask.size() != T || terminal.size() != T) {
    throw ContractError("segment sequences disagree in length");
  }
  const std::size_t valid = valid_steps();
  for (std::size_t t = 0; t < T; ++t) {
    if (mask[t] != 0 && mask[t] != 1) throw ContractError("mask entries must be 0 or 1");
    if (t >= valid && mask[t] != 0) throw ContractError("mask must be 1 on a prefix and 0 after");
    if (t >= valid && rewards[t] != 0) throw ContractError("padded steps must carry zero reward");
    if (terminal[t] == 1 && t + 1 != valid) throw ContractError("terminal transition must be the last valid one");
  }
}

Segment Segment::padded(std::size_t new_length) const {
  const std::size_t T = length();
  if (new_length < T) throw ContractError("padding cannot shorten a segment");
  Segment s = *this;
  const std::size_t O = obs.dim(1), d = task.size();
  Array o(Shape{new_length + 1, O});
  std::copy(obs.data().begin(), obs.data().end(), o.raw());
  Array c(Shape{new_length, d});
  std::copy(cumulants.data().begin(), cumulants.data().end(), c.raw());
  s.obs = std::move(o);
  s.cumulants = std::move(c);
  s.actions.resize(new_length, 0);
  s.rewards.resize(new_length, 0);
  s.mask.resize(new_length, 0);
  s.terminal.resize(new_length, 0);
  return s;
}

Batch make_batch(const std::vector<const Segment*>& segments, std::size_t num_actions) {
  if (segments.empty()) throw ContractError("empty batch");
  const Segment& first = *segments[0];
  const std::size_t T = first.length(), B = segments.size(), O = first.obs.dim(1), d = first.task.size();
  const std::size_t A = num_actions;
  Batch b;
  b.T = T;
  b.B = B;
  b.obs = Array(Shape{T + 1, B, O});
  b.prev_actions = Array(Shape{T + 1, B, A});
  b.actions = Array(Shape{T, B, A});
  b.action_index.assign(T * B, 0);
  b.rewards = Array(Shape{T, B});
  b.cumulants = Array(Shape{T, B, d});
  b.tasks = Array(Shape{B, d});
  b.mask = Array(Shape{T, B});
  b.terminal = Array(Shape{T, B});
  for (const auto& part : first.initial_state) b.initial_state.emplace_back(Shape{B, part.size()});

  for (std::size_t j = 0; j < B; ++j) {
    const Segment& s = *segments[j];
    if (s.length() != T || s.obs.dim(1) != O || s.task.size() != d || s.initial_state.size() != first.initial_state.size()) {
      throw DimensionError("segments in a batch must share shapes");
    }
    for (std::size_t t = 0; t <= T; ++t) {
      std::copy_n(s.obs.raw() + t * O, O, b.obs.raw() + (t * B + j) * O);
      const int prev = t == 0 ? s.first_prev_action : s.actions[t - 1];
      if (prev >= 0 && (t == 0 || s.mask[t - 1] == 1)) b.prev_actions[(t * B + j) * A + static_cast<std::size_t>(prev)] = 1;
    }
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t a = static_cast<std::size_t>(s.actions[t]);
      if (a >= A) throw ContractError("action index out of range");
      b.action_index[t * B + j] = s.actions[t];
      b.actions[(t * B + j) * A + a] = 1;
      b.rewards[t * B + j] = s.rewards[t];
      b.mask[t * B + j] = s.mask[t];
      b.terminal[t * B + j] = s.terminal[t];
      std::copy_n(s.cumulants.raw() + t * d, d, b.cumulants.raw() + (t * B + j) * d);
    }
    std::copy_n(s.task.raw(), d, b.tasks.raw() + j * d);
    for (std::size_t p = 0; p < s.initial_state.size(); ++p) {
      const std::size_t w = s.initial_state[p].size();
      if (w != b.initial_state[p].dim(1)) throw DimensionError("initial state width mismatch");
      std::copy_n(s.initial_state[p].raw(), w, b.initial_state[p].raw() + j * w);
    }
  }
  return b;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

void ReplayBuffer::push(Segment segment) {
  segment.validate();
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(segment));
}

std::vector<const Segment*> ReplayBuffer::sample(std::size_t count, Rng& rng) const {
  if (count > items_.size()) {
    throw ContractError("cannot sample " + std::to_string(count) + " segments from " + std::to_string(items_.size()));
  }
  std::vector<std::size_t> idx(items_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<const Segment*> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.index(idx.size() - i));
    std::swap(idx[i], idx[j]);
    out.push_back(&items_[idx[i]]);
  }
  return out;
}

}  // namespace msfa::learn
