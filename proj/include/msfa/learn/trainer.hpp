#pragma once

#include <filesystem>
#include <vector>

#include "msfa/arch/agent.hpp"
#include "msfa/envs/gridworld.hpp"
#include "msfa/learn/losses.hpp"
#include "msfa/learn/metrics.hpp"

namespace msfa::learn {

struct TrainConfig {
  arch::ArchConfig arch;  // obs_dim must equal env.observation_size()
  envs::GridConfig env;
  LearnConfig learn;
  AdamConfig adam;
  std::vector<Array> train_tasks;
  std::vector<Array> eval_tasks;
  std::uint64_t seed = 0;

  std::size_t total_steps = 200000;  // environment steps
  std::size_t trace_length = 40;
  std::size_t batch_size = 32;
  std::size_t replay_capacity = 2500;  // segments
  std::size_t min_replay = 64;
  std::size_t updates_per_segment = 1;
  std::size_t target_period = 100;  // learner steps between hard syncs

  Real epsilon_start = 1.0;
  Real epsilon_end = 0.1;
  Real epsilon_fraction = 0.2;  // of total_steps

  std::size_t log_every = 1000;
  std::size_t eval_every = 10000;
  std::size_t eval_episodes = 10;
  bool wall_clock = false;  // wall_ms stays 0 otherwise, keeping metrics byte-stable

  void validate() const;
};

struct TrainOutputs {
  std::filesystem::path metrics_csv;    // empty: no metric files
  std::filesystem::path metrics_jsonl;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::size_t checkpoint_every = 0;      // environment steps, checked at episode boundaries
  std::size_t stop_after_steps = 0;      // interrupt at the first episode boundary past this
  bool resume = false;                   // continue from checkpoint_dir if it holds a trainer state
};

struct TrainResult {
  ParamSet params;  // online parameters with optimizer state
  std::vector<MetricRow> rows;  // rows emitted by this call
  std::size_t env_steps = 0;
  std::size_t learner_steps = 0;
  std::size_t episodes = 0;
  bool finished = false;
};

Real epsilon_at(const TrainConfig& config, std::size_t step);

/// Copies every trainable parameter of `online` into `target`.
void sync_target(const ParamSet& online, ParamSet& target);

/// Actor/learner loop: ε-greedy episodes on uniformly drawn train tasks,
/// segments of trace_length into replay, `updates_per_segment` Adam steps
/// per stored segment once min_replay segments exist, hard target sync
/// every target_period learner steps, GPI evaluation on every eval task.
/// Deterministic given the config. A non-finite loss dumps the batch next
/// to the checkpoints (or metrics) and throws NumericError.
TrainResult train(const TrainConfig& config, const TrainOutputs& outputs = {});

}  // namespace msfa::learn
