#include "msfa/harness/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "msfa/learn/metrics.hpp"
#include "msfa/policy/policy.hpp"

namespace msfa::harness {

namespace {

std::string num(Real v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", static_cast<double>(v));
  return buf;
}

std::string task_cell(const Array& task) { return learn::format_task({task.data().begin(), task.data().end()}); }

}  // namespace

Real task_distance(const Array& task, const std::vector<Array>& train) {
  if (train.empty()) throw ContractError("task distance needs at least one train task");
  Real best = std::numeric_limits<Real>::infinity();
  for (const Array& t : train) {
    if (t.size() != task.size()) throw DimensionError("task distance between vectors of different dimension");
    Real s = 0;
    for (std::size_t i = 0; i < t.size(); ++i) s += (task[i] - t[i]) * (task[i] - t[i]);
    best = std::min(best, std::sqrt(s));
  }
  return best;
}

MeanStd mean_std(const std::vector<Real>& values) {
  MeanStd out;
  out.count = values.size();
  if (values.empty()) {
    out.mean = out.std = std::numeric_limits<Real>::quiet_NaN();
    return out;
  }
  for (Real v : values) out.mean += v;
  out.mean /= static_cast<Real>(values.size());
  Real var = 0;
  for (Real v : values) var += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(var / static_cast<Real>(values.size()));
  return out;
}

Real standard_error(const std::vector<Real>& values) {
  const std::size_t n = values.size();
  if (n < 2) return 0;
  const Real mean = mean_std(values).mean;
  Real var = 0;
  for (Real v : values) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<Real>(n - 1)) / std::sqrt(static_cast<Real>(n));
}

MeanStd reward_prediction_error(const arch::Agent& agent, const ParamSet& params, const envs::GridConfig& env,
                                const Array& task, const std::vector<Array>& bank, std::size_t episodes,
                                std::uint64_t seed) {
  if (!agent.has_sf()) {
    throw UnsupportedError("reward prediction error needs an agent with cumulants, got " +
                           arch::kind_name(agent.kind()));
  }
  return mean_std(learn::evaluate_agent(agent, params, env, task, bank, episodes, seed).prediction_errors);
}

std::vector<Real> correlation_matrix(const std::vector<Real>& table, std::size_t rows, std::size_t cols) {
  if (table.size() != rows * cols) throw DimensionError("correlation table shape mismatch");
  std::vector<Real> mean(cols, 0), sd(cols, 0);
  for (std::size_t k = 0; k < cols; ++k) {
    for (std::size_t t = 0; t < rows; ++t) mean[k] += table[t * cols + k];
    if (rows > 0) mean[k] /= static_cast<Real>(rows);
    for (std::size_t t = 0; t < rows; ++t) {
      const Real d = table[t * cols + k] - mean[k];
      sd[k] += d * d;
    }
    sd[k] = std::sqrt(sd[k]);
  }
  std::vector<Real> out(cols * cols, 0);
  for (std::size_t i = 0; i < cols; ++i) {
    out[i * cols + i] = 1;
    for (std::size_t j = i + 1; j < cols; ++j) {
      Real c = 0;
      if (sd[i] > 0 && sd[j] > 0) {
        for (std::size_t t = 0; t < rows; ++t)
          c += (table[t * cols + i] - mean[i]) * (table[t * cols + j] - mean[j]);
        c /= sd[i] * sd[j];
      }
      out[i * cols + j] = out[j * cols + i] = c;
    }
  }
  return out;
}

ActivityTrace module_activity_log(const arch::Agent& agent, const ParamSet& params, const envs::GridConfig& env,
                                  const Array& task, const std::vector<Array>& bank, std::uint64_t seed) {
  if (agent.kind() != arch::AgentKind::kMsfa && agent.kind() != arch::AgentKind::kMsfaNoGpi) {
    throw UnsupportedError("module activity needs a modular agent (msfa or msfa-no-gpi), got " +
                           arch::kind_name(agent.kind()));
  }
  const std::size_t n = agent.config().num_modules, width = agent.config().cumulant_width();
  ActivityTrace trace;
  trace.modules = n;
  learn::evaluate_agent(agent, params, env, task, bank, 1, seed, [&](const learn::StepRecord& rec) {
    for (std::size_t k = 0; k < n; ++k) {
      Real s = 0;
      for (std::size_t i = 0; i < width; ++i) {
        const Real v = rec.predicted_cumulant[k * width + i];
        s += v * v;
      }
      trace.activity.push_back(std::sqrt(s));
    }
    trace.picked.push_back(rec.result.picked_category);
    ++trace.steps;
  });
  trace.correlation = correlation_matrix(trace.activity, trace.steps, n);
  return trace;
}

std::string activity_csv(const ActivityTrace& trace) {
  std::string out = "t,module,activity,picked\n";
  for (std::size_t t = 0; t < trace.steps; ++t)
    for (std::size_t k = 0; k < trace.modules; ++k)
      out += std::to_string(t) + "," + std::to_string(k) + "," + num(trace.at(t, k)) + "," +
             std::to_string(trace.picked[t]) + "\n";
  return out;
}

std::string correlation_csv(const ActivityTrace& trace) {
  std::string out = "module";
  for (std::size_t k = 0; k < trace.modules; ++k) out += "," + std::to_string(k);
  out += "\n";
  for (std::size_t i = 0; i < trace.modules; ++i) {
    out += std::to_string(i);
    for (std::size_t j = 0; j < trace.modules; ++j) out += "," + num(trace.correlation[i * trace.modules + j]);
    out += "\n";
  }
  return out;
}

std::vector<HeatmapCell> pickup_counts(const learn::EpisodeStats& stats, const std::string& label, const Array& task,
                                       std::size_t categories) {
  std::vector<HeatmapCell> out;
  for (std::size_t c = 0; c < categories; ++c) {
    std::vector<Real> counts;
    for (const auto& ep : stats.pickups) counts.push_back(ep.at(c));
    HeatmapCell cell;
    cell.label = label;
    cell.task = task_cell(task);
    cell.category = c;
    cell.episodes = counts.size();
    cell.mean = counts.empty() ? 0 : mean_std(counts).mean;
    cell.se = standard_error(counts);
    out.push_back(std::move(cell));
  }
  return out;
}

std::string heatmap_csv(const std::vector<HeatmapCell>& cells) {
  std::string out = "label,task,category,mean,se,episodes\n";
  for (const auto& c : cells)
    out += c.label + "," + c.task + "," + std::to_string(c.category) + "," + num(c.mean) + "," + num(c.se) + "," +
           std::to_string(c.episodes) + "\n";
  return out;
}

learn::LayoutPolicy random_policy() {
  return [](const envs::GridSnapshot&, Rng& rng) { return static_cast<int>(rng.index(envs::kNumActions)); };
}

learn::LayoutPolicy bfs_policy(const Array& task) {
  return [task](const envs::GridSnapshot& s, Rng& rng) { return policy::act_bfs_oracle(s, task, rng); };
}

}  // namespace msfa::harness
