#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "msfa/harness/analysis.hpp"
#include "msfa/harness/experiment.hpp"
#include "msfa/harness/suites.hpp"
#include "msfa/learn/metrics.hpp"
#include "msfa/numcore/checkpoint.hpp"

using namespace msfa;
using namespace msfa::harness;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string agent;
  std::string out;
  std::optional<std::size_t> steps;
  bool no_gpi = false;
  bool entangled = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Experiment config (JSON); defaults to the desk configuration");
  app->add_option("--seed", c.seed, "Single seed, replacing the config's seed list");
  app->add_option("--agent", c.agent, "Agent kind (msfa, msfa-no-gpi, msfa-entangled, uvfa, uvfa-farm, "
                                      "usfa-oracle-phi, usfa-learned-phi)");
  app->add_option("--out", c.out, "Experiment directory (relative paths resolve under $MSFA_OUTPUT_ROOT)");
  app->add_option("--steps", c.steps, "Environment-step budget per seed");
  app->add_flag("--no-gpi", c.no_gpi, "Greedy test-time actions instead of GPI");
  app->add_flag("--entangled", c.entangled, "Entangled cumulant/SF heads");
}

ExperimentConfig build_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? desk_config() : load_config(c.config);
  if (!c.agent.empty()) cfg.agent = arch::parse_kind(c.agent);
  if (c.entangled && c.no_gpi) throw ConfigError("--entangled and --no-gpi select different agents");
  if (c.entangled) cfg.agent = arch::AgentKind::kMsfaEntangled;
  if (c.no_gpi) cfg.agent = arch::AgentKind::kMsfaNoGpi;
  if (c.seed) cfg.seeds = {*c.seed};
  if (c.steps) cfg.steps = *c.steps;
  if (!c.out.empty()) cfg.output_dir = c.out;
  cfg.validate();
  return cfg;
}

// Config and parameters of one trained seed under an experiment directory.
struct Trained {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  fs::path dir;
  ParamSet params;
  arch::Agent agent;
};

Trained load_trained(const Common& c) {
  if (c.out.empty()) throw ConfigError("--out must name a trained experiment directory");
  const fs::path root = resolve_output(c.out);
  ExperimentConfig cfg = load_config(root / "config.json");
  const std::uint64_t seed = c.seed.value_or(cfg.seeds.front());
  const fs::path dir = seed_dir(root, seed);
  auto arch_cfg = cfg.train_config(seed).arch;
  if (!c.agent.empty()) arch_cfg.kind = arch::parse_kind(c.agent);
  if (c.no_gpi) {
    if (arch_cfg.kind != arch::AgentKind::kMsfa && arch_cfg.kind != arch::AgentKind::kMsfaNoGpi) {
      throw ConfigError("--no-gpi applies to msfa runs");
    }
    arch_cfg.kind = arch::AgentKind::kMsfaNoGpi;
  }
  return {cfg, seed, dir, load_checkpoint(dir / "params.ckpt"), arch::Agent(arch_cfg)};
}

void write_file(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << text;
}

Array parse_task_arg(const std::string& text, std::size_t d) {
  const auto values = learn::parse_task(text);
  if (values.size() != d) throw ConfigError("task '" + text + "' must have " + std::to_string(d) + " entries");
  return Array::vector(values);
}

std::string num(Real v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", static_cast<double>(v));
  return buf;
}

int report(const std::vector<SuiteResult>& results) {
  std::cout << format_results(results);
  for (const auto& r : results)
    if (!r.passed) return 1;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modular successor feature approximators: training, evaluation and checks"};
  app.require_subcommand(1);

  Common train_opts;
  bool resume = false;
  std::size_t stop_after = 0;
  std::optional<std::size_t> workers;
  auto* train = app.add_subcommand("train", "Train every seed of an experiment");
  add_common(train, train_opts);
  train->add_flag("--resume", resume, "Continue from the latest checkpoints");
  train->add_option("--stop-after", stop_after, "Interrupt each seed at the first episode boundary past this step");
  train->add_option("--workers", workers, "Seeds trained concurrently");

  Common eval_opts;
  std::optional<std::size_t> episodes;
  auto* eval = app.add_subcommand("eval-gpi", "Evaluate a trained seed on every test task, with baselines");
  add_common(eval, eval_opts);
  eval->add_option("--episodes", episodes, "Episodes per task (default 40)");

  std::uint64_t check_seed = 0;
  std::size_t draws = 0;
  auto* oracle_check = app.add_subcommand("oracle-check", "GPI dominance and modular decomposition on exact DP");
  oracle_check->add_option("--seed", check_seed, "Base seed");
  oracle_check->add_option("--instances", draws, "Random instances (default 100 and 50)");

  std::uint64_t grad_seed = 0;
  std::size_t grad_seeds = 100;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference, modularity and masking checks");
  gradcheck->add_option("--seed", grad_seed, "Base seed");
  gradcheck->add_option("--seeds", grad_seeds, "Random draws per op");

  Common act_opts;
  std::string act_task = "1;1";
  std::uint64_t episode_seed = 0;
  auto* activity = app.add_subcommand("activity", "Per-module cumulant activity over one test episode");
  add_common(activity, act_opts);
  activity->add_option("--task", act_task, "Test task as a;b;...");
  activity->add_option("--episode-seed", episode_seed, "Layout seed of the episode");

  Common heat_opts;
  std::optional<std::size_t> heat_episodes;
  auto* heatmap = app.add_subcommand("heatmap", "Pickups per category and test task, with baselines");
  add_common(heatmap, heat_opts);
  heatmap->add_option("--episodes", heat_episodes, "Episodes per task (default 40)");

  std::string agg_dir;
  auto* aggregate_cmd = app.add_subcommand("aggregate", "Mean and standard error across seeds");
  aggregate_cmd->add_option("--out", agg_dir, "Experiment directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      ExperimentConfig cfg = build_config(train_opts);
      if (workers) cfg.workers = *workers;
      RunOptions options;
      options.resume = resume;
      options.stop_after_steps = stop_after;
      const auto outcomes = run_experiment(cfg, options);
      int code = 0;
      std::cout << "seed,status,env_steps,episodes,dir,message\n";
      for (const auto& o : outcomes) {
        std::cout << o.seed << "," << o.status << "," << o.result.env_steps << "," << o.result.episodes << ","
                  << o.dir.string() << "," << o.message << "\n";
        if (o.status == "failed") code = 2;
      }
      return code;
    }

    if (*eval) {
      const Trained t = load_trained(eval_opts);
      const std::size_t n = episodes.value_or(40);
      const std::uint64_t seed = mix_seed(t.seed, 0xE7A1);
      std::cout << "policy,seed,task,task_distance,mean_return,se_return,reward_pred_err\n";
      for (const Array& task : t.config.test_tasks) {
        const std::string cell = learn::format_task({task.data().begin(), task.data().end()});
        const std::string dist = num(task_distance(task, t.config.train_tasks));
        const auto stats = learn::evaluate_agent(t.agent, t.params, t.config.env, task, t.config.train_tasks, n, seed);
        const std::string rpe = stats.prediction_errors.empty() ? "" : num(stats.mean_prediction_error());
        std::cout << arch::kind_name(t.agent.kind()) << "," << t.seed << "," << cell << "," << dist << ","
                  << num(stats.mean_return()) << "," << num(standard_error(stats.returns)) << "," << rpe << "\n";
        for (const auto& [name, policy] : {std::pair{"random", random_policy()}, std::pair{"bfs", bfs_policy(task)}}) {
          const auto base = learn::evaluate_policy(policy, t.config.env, task, n, seed);
          std::cout << name << "," << t.seed << "," << cell << "," << dist << "," << num(base.mean_return()) << ","
                    << num(standard_error(base.returns)) << ",\n";
        }
      }
      return 0;
    }

    if (*oracle_check) {
      return report({gpi_suite(draws ? draws : 100, check_seed), decomposition_suite(draws ? draws : 50, check_seed)});
    }

    if (*gradcheck) {
      auto results = gradient_suite(grad_seeds, grad_seed);
      results.push_back(modularity_suite(20, grad_seed));
      results.push_back(masking_suite(14, grad_seed));
      return report(results);
    }

    if (*activity) {
      const Trained t = load_trained(act_opts);
      const Array task = parse_task_arg(act_task, t.config.task_dim());
      const auto trace = module_activity_log(t.agent, t.params, t.config.env, task, t.config.train_tasks, episode_seed);
      write_file(t.dir / "activity.csv", activity_csv(trace));
      write_file(t.dir / "activity_correlation.csv", correlation_csv(trace));
      std::cout << (t.dir / "activity.csv").string() << "\n" << (t.dir / "activity_correlation.csv").string() << "\n";
      return 0;
    }

    if (*heatmap) {
      const Trained t = load_trained(heat_opts);
      const std::size_t n = heat_episodes.value_or(40);
      const std::uint64_t seed = mix_seed(t.seed, 0x4EA7);
      const std::size_t C = t.config.task_dim();
      std::vector<HeatmapCell> cells;
      for (const Array& task : t.config.test_tasks) {
        const auto stats = learn::evaluate_agent(t.agent, t.params, t.config.env, task, t.config.train_tasks, n, seed);
        for (auto& c : pickup_counts(stats, arch::kind_name(t.agent.kind()), task, C)) cells.push_back(c);
        for (auto& c : pickup_counts(learn::evaluate_policy(random_policy(), t.config.env, task, n, seed), "random", task, C))
          cells.push_back(c);
        for (auto& c : pickup_counts(learn::evaluate_policy(bfs_policy(task), t.config.env, task, n, seed), "bfs", task, C))
          cells.push_back(c);
      }
      write_file(t.dir / "heatmap.csv", heatmap_csv(cells));
      std::cout << (t.dir / "heatmap.csv").string() << "\n";
      return 0;
    }

    if (*aggregate_cmd) {
      const fs::path dir = resolve_output(agg_dir);
      const auto rows = aggregate_directory(dir);
      std::cout << (dir / "aggregate.csv").string() << " (" << rows.size() << " rows)\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
