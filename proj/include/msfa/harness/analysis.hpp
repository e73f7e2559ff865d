#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "msfa/arch/agent.hpp"
#include "msfa/envs/gridworld.hpp"
#include "msfa/learn/evaluate.hpp"

namespace msfa::harness {

/// Euclidean distance from `task` to the closest train task.
Real task_distance(const Array& task, const std::vector<Array>& train);

struct MeanStd {
  Real mean = 0;
  Real std = 0;  // population standard deviation
  std::size_t count = 0;
};
MeanStd mean_std(const std::vector<Real>& values);
/// Sample standard deviation over sqrt(n); 0 for fewer than two values.
Real standard_error(const std::vector<Real>& values);

/// |r - φ̃ᵀw| over every step of `episodes` episodes of the agent's test-time
/// policy on `task`. Agents without cumulants raise UnsupportedError.
MeanStd reward_prediction_error(const arch::Agent& agent, const ParamSet& params, const envs::GridConfig& env,
                                const Array& task, const std::vector<Array>& bank, std::size_t episodes,
                                std::uint64_t seed);

struct ActivityTrace {
  std::size_t steps = 0;
  std::size_t modules = 0;
  std::vector<Real> activity;     // [t][k] = ||φ̃^(k)(s_t, a_t, s_{t+1})||_2
  std::vector<int> picked;        // category picked at t, -1 otherwise
  std::vector<Real> correlation;  // [k][j] Pearson correlation over the episode
  Real at(std::size_t t, std::size_t k) const { return activity[t * modules + k]; }
};

/// One test-time episode with per-module cumulant magnitudes. Only the
/// modular agents (msfa, msfa-no-gpi) are supported.
ActivityTrace module_activity_log(const arch::Agent& agent, const ParamSet& params, const envs::GridConfig& env,
                                  const Array& task, const std::vector<Array>& bank, std::uint64_t seed);

/// Pearson correlation between columns of a [rows][cols] table. Columns
/// without variance correlate 0 with everything but themselves.
std::vector<Real> correlation_matrix(const std::vector<Real>& table, std::size_t rows, std::size_t cols);

/// Columns t,module,activity,picked.
std::string activity_csv(const ActivityTrace& trace);
/// Header row then one row per module.
std::string correlation_csv(const ActivityTrace& trace);

struct HeatmapCell {
  std::string label;  // agent or policy name
  std::string task;   // "a;b" cell
  std::size_t category = 0;
  Real mean = 0;      // pickups per episode
  Real se = 0;
  std::size_t episodes = 0;
};

/// Mean pickups per episode of each category, one cell per category.
std::vector<HeatmapCell> pickup_counts(const learn::EpisodeStats& stats, const std::string& label,
                                       const Array& task, std::size_t categories);
/// Columns label,task,category,mean,se,episodes.
std::string heatmap_csv(const std::vector<HeatmapCell>& cells);

/// Uniformly random actions.
learn::LayoutPolicy random_policy();
/// Breadth-first-search oracle on the ground-truth layout for `task`.
learn::LayoutPolicy bfs_policy(const Array& task);

}  // namespace msfa::harness
