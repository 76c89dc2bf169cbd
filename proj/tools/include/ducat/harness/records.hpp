#pragma once

/// @file records.hpp
/// On-disk records of a run: the append-only metrics log and CSV tables.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace ducat::harness {

struct MetricRecord {
  std::string run_id;
  int epoch = 0;
  std::string metric;
  double value = 0.0;

  bool operator==(const MetricRecord&) const = default;
};

/// `run_id,epoch,metric,value` lines, numbers in shortest round-trip form.
/// Epochs must not decrease within one run id.
class MetricsLog {
 public:
  /// Truncates `path`; the run owns its file.
  explicit MetricsLog(const std::filesystem::path& path);

  void append(const std::string& run_id, int epoch, const std::string& metric, double value);

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  std::vector<std::pair<std::string, int>> last_epoch_;
};

std::string format_record(const MetricRecord& r);
std::vector<MetricRecord> read_metrics_log(const std::filesystem::path& path);

/// A small CSV table. Cells never contain commas or newlines.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  /// Column index by name; throws when absent.
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;

  void write(const std::filesystem::path& path) const;
  static Table read(const std::filesystem::path& path);
};

}  // namespace ducat::harness
