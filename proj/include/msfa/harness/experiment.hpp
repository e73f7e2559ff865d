#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "msfa/harness/config.hpp"

namespace msfa::harness {

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::string status;  // "ok", "failed" or "interrupted"
  std::string message;
  std::filesystem::path dir;
  learn::TrainResult result;
};

struct RunOptions {
  bool resume = false;
  std::size_t stop_after_steps = 0;  // per seed; 0 runs to the budget
};

/// Artifact layout under the resolved output directory:
///
///   config.json                   resolved configuration
///   seed_<s>/metrics.csv|.jsonl   per-seed metric rows
///   seed_<s>/params.ckpt          final online parameters
///   seed_<s>/checkpoints/         resumable trainer state
///   seed_<s>/status.json          outcome of the seed
///   aggregate.csv                 mean and standard error across seeds
///
/// A seed that fails (for example on a non-finite loss) is recorded in its
/// status file and the remaining seeds still run.
std::vector<SeedOutcome> run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

std::filesystem::path seed_dir(const std::filesystem::path& root, std::uint64_t seed);

struct AggregateRow {
  std::string kind;
  std::string metric;     // eval_return, reward_pred_err or train_return
  std::string eval_task;  // "a;b" cell, empty for training rows
  Real task_distance = 0; // NaN when no train set is known or for training rows
  std::size_t step = 0;
  std::size_t n = 0;
  Real mean = 0;
  Real se = 0;  // sample standard deviation / sqrt(n); 0 when n = 1
};

/// Groups rows by (kind, metric, eval_task, step) and averages across the
/// files. Pure in its inputs; order follows first appearance.
std::vector<AggregateRow> aggregate(const std::vector<std::filesystem::path>& metric_files,
                                    const std::vector<Array>& train_tasks);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);
/// Reads config.json and every seed_*/metrics.csv under `dir`, writes
/// aggregate.csv and returns its rows.
std::vector<AggregateRow> aggregate_directory(const std::filesystem::path& dir);

}  // namespace msfa::harness
