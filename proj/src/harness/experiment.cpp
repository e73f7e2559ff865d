#include "msfa/harness/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <thread>

#include "json.hpp"
#include "msfa/harness/analysis.hpp"
#include "msfa/numcore/checkpoint.hpp"

namespace msfa::harness {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << text;
}

void write_status(const SeedOutcome& o) {
  nlohmann::ordered_json j;
  j["seed"] = o.seed;
  j["status"] = o.status;
  j["message"] = o.message;
  j["env_steps"] = o.result.env_steps;
  j["learner_steps"] = o.result.learner_steps;
  j["episodes"] = o.result.episodes;
  write_text(o.dir / "status.json", j.dump(2) + "\n");
}

SeedOutcome run_seed(const ExperimentConfig& config, const fs::path& root, std::uint64_t seed,
                     const RunOptions& options) {
  SeedOutcome o;
  o.seed = seed;
  o.dir = seed_dir(root, seed);
  fs::create_directories(o.dir);
  learn::TrainOutputs out;
  out.metrics_csv = o.dir / "metrics.csv";
  out.metrics_jsonl = o.dir / "metrics.jsonl";
  out.checkpoint_dir = o.dir / "checkpoints";
  out.checkpoint_every = config.checkpoint_every;
  out.stop_after_steps = options.stop_after_steps;
  out.resume = options.resume;
  try {
    o.result = learn::train(config.train_config(seed), out);
    o.status = o.result.finished ? "ok" : "interrupted";
    save_checkpoint(o.dir / "params.ckpt", o.result.params);
  } catch (const std::exception& e) {
    o.status = "failed";
    o.message = e.what();
  }
  write_status(o);
  return o;
}

// seed_* directories with metrics from seeds that did not fail, in seed order.
std::vector<fs::path> metric_files_under(const fs::path& root) {
  std::vector<std::pair<std::uint64_t, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(root)) {
    const auto name = entry.path().filename().string();
    if (!entry.is_directory() || name.rfind("seed_", 0) != 0) continue;
    if (!fs::exists(entry.path() / "metrics.csv")) continue;
    if (fs::exists(entry.path() / "status.json")) {
      std::ifstream in(entry.path() / "status.json");
      if (nlohmann::json::parse(in).value("status", "") == "failed") continue;
    }
    found.emplace_back(std::stoull(name.substr(5)), entry.path() / "metrics.csv");
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& f : found) out.push_back(std::move(f.second));
  return out;
}

std::string num(Real v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", static_cast<double>(v));
  return buf;
}

}  // namespace

fs::path seed_dir(const fs::path& root, std::uint64_t seed) { return root / ("seed_" + std::to_string(seed)); }

std::vector<SeedOutcome> run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const fs::path root = resolve_output(config.output_dir);
  fs::create_directories(root);
  write_text(root / "config.json", to_json(config));

  std::vector<SeedOutcome> outcomes(config.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < config.seeds.size(); i = next++)
      outcomes[i] = run_seed(config, root, config.seeds[i], options);
  };
  const std::size_t threads = std::min(config.workers, config.seeds.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<std::pair<std::uint64_t, fs::path>> done;
  for (const auto& o : outcomes)
    if (o.status != "failed") done.emplace_back(o.seed, o.dir / "metrics.csv");
  std::sort(done.begin(), done.end());
  std::vector<fs::path> files;
  for (auto& d : done) files.push_back(std::move(d.second));
  write_text(root / "aggregate.csv", aggregate_csv(aggregate(files, config.train_tasks)));
  return outcomes;
}

std::vector<AggregateRow> aggregate(const std::vector<fs::path>& metric_files, const std::vector<Array>& train_tasks) {
  struct Group {
    AggregateRow row;
    std::vector<Real> values;
  };
  std::vector<Group> groups;
  std::map<std::tuple<std::string, std::string, std::string, std::size_t>, std::size_t> index;
  auto add = [&](const learn::MetricRow& r, const std::string& metric, Real value) {
    if (std::isnan(value)) return;
    const std::string task = r.eval_task ? learn::format_task(*r.eval_task) : "";
    const auto key = std::make_tuple(r.kind, metric, task, r.step);
    auto it = index.find(key);
    if (it == index.end()) {
      Group g;
      g.row.kind = r.kind;
      g.row.metric = metric;
      g.row.eval_task = task;
      g.row.step = r.step;
      g.row.task_distance = std::numeric_limits<Real>::quiet_NaN();
      if (r.eval_task && !train_tasks.empty()) {
        g.row.task_distance = task_distance(Array::vector(*r.eval_task), train_tasks);
      }
      it = index.emplace(key, groups.size()).first;
      groups.push_back(std::move(g));
    }
    groups[it->second].values.push_back(value);
  };
  for (const auto& file : metric_files) {
    for (const auto& r : learn::read_metrics_csv(file)) {
      if (r.eval_return) add(r, "eval_return", *r.eval_return);
      if (r.reward_pred_err) add(r, "reward_pred_err", *r.reward_pred_err);
      if (r.train_return) add(r, "train_return", *r.train_return);
    }
  }
  std::vector<AggregateRow> out;
  for (auto& g : groups) {
    g.row.n = g.values.size();
    g.row.mean = mean_std(g.values).mean;
    g.row.se = standard_error(g.values);
    out.push_back(g.row);
  }
  return out;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out = "kind,metric,eval_task,task_distance,step,n,mean,se\n";
  for (const auto& r : rows)
    out += r.kind + "," + r.metric + "," + r.eval_task + "," + num(r.task_distance) + "," + std::to_string(r.step) +
           "," + std::to_string(r.n) + "," + num(r.mean) + "," + num(r.se) + "\n";
  return out;
}

std::vector<AggregateRow> aggregate_directory(const fs::path& dir) {
  std::vector<Array> train;
  if (fs::exists(dir / "config.json")) train = load_config(dir / "config.json").train_tasks;
  auto rows = aggregate(metric_files_under(dir), train);
  write_text(dir / "aggregate.csv", aggregate_csv(rows));
  return rows;
}

}  // namespace msfa::harness
