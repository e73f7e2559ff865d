#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "msfa/numcore/array.hpp"

namespace msfa::learn {

/// One metrics row. Training rows fill the loss columns, evaluation rows
/// fill eval_task, eval_return and reward_pred_err; absent values are
/// written as empty CSV cells and JSON nulls.
struct MetricRow {
  std::size_t step = 0;
  double wall_ms = 0;
  std::string kind;
  std::uint64_t seed = 0;
  std::optional<Real> loss_q, loss_psi, loss_phi, grad_norm, epsilon, train_return;
  std::optional<std::vector<Real>> eval_task;
  std::optional<Real> eval_return, reward_pred_err;
};

const std::vector<std::string>& metric_columns();
std::string csv_header();
std::string to_csv(const MetricRow& row);
std::string to_jsonl(const MetricRow& row);

/// Task vector in the CSV cell form "a;b;c" and back.
std::string format_task(const std::vector<Real>& task);
std::vector<Real> parse_task(const std::string& cell);

/// Parses a metrics CSV produced by this writer.
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& file);

/// Append-only CSV + JSONL pair. start() creates both files with the CSV
/// header; resume() reopens them truncated back to recorded sizes.
class MetricsWriter {
 public:
  MetricsWriter() = default;
  MetricsWriter(const std::filesystem::path& csv, const std::filesystem::path& jsonl);

  void start();
  void write(const MetricRow& row);
  void flush();
  bool active() const { return csv_.is_open(); }
  std::uint64_t csv_bytes() const { return csv_bytes_; }
  std::uint64_t jsonl_bytes() const { return jsonl_bytes_; }
  /// Reopens both files truncated to the given sizes.
  void resume(std::uint64_t csv_bytes, std::uint64_t jsonl_bytes);

 private:
  std::filesystem::path csv_path_, jsonl_path_;
  std::ofstream csv_, jsonl_;
  std::uint64_t csv_bytes_ = 0, jsonl_bytes_ = 0;
};

}  // namespace msfa::learn
