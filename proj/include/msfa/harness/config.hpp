#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msfa/learn/trainer.hpp"

namespace msfa::harness {

/// Experiment description loaded from JSON.
///
/// Top-level keys: agent, seeds, steps, output_dir, workers, env, arch,
/// learn, tasks, eval, log, checkpoint_every. Every block is optional and
/// unknown keys are rejected. With tasks.protocol = "babyai" the train
/// tasks are the standard basis of R^d and tasks.test defaults to the
/// roster for d (see default_test_tasks).
struct ExperimentConfig {
  arch::AgentKind agent = arch::AgentKind::kMsfa;
  std::vector<std::uint64_t> seeds = {0};
  std::size_t steps = 200000;
  std::filesystem::path output_dir = "runs/default";
  std::size_t workers = 1;  // seeds trained concurrently

  envs::GridConfig env;
  arch::ArchConfig arch;  // kind, obs_dim and task_dim are filled from the blocks above
  learn::LearnConfig learn;
  AdamConfig adam;

  std::size_t trace_length = 40;
  std::size_t batch_size = 32;
  std::size_t replay_capacity = 2500;
  std::size_t min_replay = 64;
  std::size_t updates_per_segment = 1;
  std::size_t target_period = 100;
  Real epsilon_start = 1.0;
  Real epsilon_end = 0.1;
  Real epsilon_fraction = 0.2;

  std::string protocol = "babyai";  // or "custom"
  std::vector<Array> train_tasks;
  std::vector<Array> test_tasks;

  std::size_t eval_every = 10000;
  std::size_t eval_episodes = 10;
  std::size_t log_every = 1000;
  bool wall_clock = false;
  std::size_t checkpoint_every = 0;

  void validate() const;
  std::size_t task_dim() const { return static_cast<std::size_t>(env.num_categories); }
  /// Training configuration for one seed.
  learn::TrainConfig train_config(std::uint64_t seed) const;
};

/// Standard basis e_1..e_d.
std::vector<Array> basis_tasks(std::size_t d);

/// Test roster: the seven pickup/avoid mixtures for d = 4, {[1,1], [-1,1],
/// [1,-1]} for d = 2, otherwise the all-ones task.
std::vector<Array> default_test_tasks(std::size_t d);

/// Defaults with the 6×6, two-category desk environment and a small
/// network, sized for single-CPU runs.
ExperimentConfig desk_config();

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& file);
/// Fully resolved JSON form; parse_config(to_json(c)) reproduces c.
std::string to_json(const ExperimentConfig& config);

/// `path` unchanged when absolute, else resolved under $MSFA_OUTPUT_ROOT
/// when that variable is set.
std::filesystem::path resolve_output(const std::filesystem::path& path);

}  // namespace msfa::harness
