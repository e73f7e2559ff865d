#include "msfa/learn/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace msfa::learn {

namespace {

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string cell(const std::optional<Real>& v) {
  return v && std::isfinite(*v) ? number(static_cast<double>(*v)) : std::string();
}

nlohmann::json jvalue(const std::optional<Real>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return static_cast<double>(*v);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::optional<Real> parse_cell(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return static_cast<Real>(std::stod(s));
}

}  // namespace

const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols{"step",        "wall_ms",    "kind",         "seed",      "loss_q",
                                             "loss_psi",    "loss_phi",   "grad_norm",    "epsilon",   "train_return",
                                             "eval_task",   "eval_return", "reward_pred_err"};
  return cols;
}

std::string csv_header() {
  std::string out;
  for (const auto& c : metric_columns()) out += (out.empty() ? "" : ",") + c;
  return out + "\n";
}

std::string format_task(const std::vector<Real>& task) {
  std::string out;
  for (std::size_t i = 0; i < task.size(); ++i) out += (i ? ";" : "") + number(static_cast<double>(task[i]));
  return out;
}

std::vector<Real> parse_task(const std::string& cell) {
  std::vector<Real> out;
  if (cell.empty()) return out;
  for (const auto& part : split(cell, ';')) out.push_back(static_cast<Real>(std::stod(part)));
  return out;
}

std::string to_csv(const MetricRow& r) {
  std::ostringstream os;
  os << r.step << ',' << number(r.wall_ms) << ',' << r.kind << ',' << r.seed << ',' << cell(r.loss_q) << ','
     << cell(r.loss_psi) << ',' << cell(r.loss_phi) << ',' << cell(r.grad_norm) << ',' << cell(r.epsilon) << ','
     << cell(r.train_return) << ',' << (r.eval_task ? format_task(*r.eval_task) : "") << ',' << cell(r.eval_return)
     << ',' << cell(r.reward_pred_err) << '\n';
  return os.str();
}

std::string to_jsonl(const MetricRow& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["wall_ms"] = r.wall_ms;
  j["kind"] = r.kind;
  j["seed"] = r.seed;
  j["loss_q"] = jvalue(r.loss_q);
  j["loss_psi"] = jvalue(r.loss_psi);
  j["loss_phi"] = jvalue(r.loss_phi);
  j["grad_norm"] = jvalue(r.grad_norm);
  j["epsilon"] = jvalue(r.epsilon);
  j["train_return"] = jvalue(r.train_return);
  if (r.eval_task) {
    std::vector<double> t(r.eval_task->begin(), r.eval_task->end());
    j["eval_task"] = t;
  } else {
    j["eval_task"] = nullptr;
  }
  j["eval_return"] = jvalue(r.eval_return);
  j["reward_pred_err"] = jvalue(r.reward_pred_err);
  return j.dump() + "\n";
}

std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open metrics file " + file.string());
  std::string line;
  if (!std::getline(in, line) || line + "\n" != csv_header()) {
    throw ConfigError("unexpected metrics header in " + file.string());
  }
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != metric_columns().size()) throw ConfigError("malformed metrics row in " + file.string());
    MetricRow r;
    r.step = std::stoull(f[0]);
    r.wall_ms = std::stod(f[1]);
    r.kind = f[2];
    r.seed = std::stoull(f[3]);
    r.loss_q = parse_cell(f[4]);
    r.loss_psi = parse_cell(f[5]);
    r.loss_phi = parse_cell(f[6]);
    r.grad_norm = parse_cell(f[7]);
    r.epsilon = parse_cell(f[8]);
    r.train_return = parse_cell(f[9]);
    if (!f[10].empty()) r.eval_task = parse_task(f[10]);
    r.eval_return = parse_cell(f[11]);
    r.reward_pred_err = parse_cell(f[12]);
    rows.push_back(std::move(r));
  }
  return rows;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& csv, const std::filesystem::path& jsonl)
    : csv_path_(csv), jsonl_path_(jsonl) {}

void MetricsWriter::start() {
  const auto& csv = csv_path_;
  const auto& jsonl = jsonl_path_;
  if (csv.has_parent_path()) std::filesystem::create_directories(csv.parent_path());
  if (jsonl.has_parent_path()) std::filesystem::create_directories(jsonl.parent_path());
  csv_.open(csv, std::ios::binary | std::ios::trunc);
  jsonl_.open(jsonl, std::ios::binary | std::ios::trunc);
  if (!csv_ || !jsonl_) throw ConfigError("cannot open metrics output under " + csv.parent_path().string());
  const std::string header = csv_header();
  csv_ << header;
  csv_bytes_ = header.size();
  flush();
}

void MetricsWriter::write(const MetricRow& row) {
  if (!active()) return;
  const std::string c = to_csv(row), j = to_jsonl(row);
  csv_ << c;
  jsonl_ << j;
  csv_bytes_ += c.size();
  jsonl_bytes_ += j.size();
}

void MetricsWriter::flush() {
  if (!active()) return;
  csv_.flush();
  jsonl_.flush();
}

void MetricsWriter::resume(std::uint64_t csv_bytes, std::uint64_t jsonl_bytes) {
  csv_.close();
  jsonl_.close();
  std::filesystem::resize_file(csv_path_, csv_bytes);
  std::filesystem::resize_file(jsonl_path_, jsonl_bytes);
  csv_.open(csv_path_, std::ios::binary | std::ios::app);
  jsonl_.open(jsonl_path_, std::ios::binary | std::ios::app);
  if (!csv_ || !jsonl_) throw ConfigError("cannot reopen metrics output " + csv_path_.string());
  csv_bytes_ = csv_bytes;
  jsonl_bytes_ = jsonl_bytes;
}

}  // namespace msfa::learn
