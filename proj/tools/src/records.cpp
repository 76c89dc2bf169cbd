#include "ducat/harness/records.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "ducat/dataset.hpp"
#include "ducat/error.hpp"

namespace ducat::harness {

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

void check_cell(const std::string& cell) {
  if (cell.find_first_of(",\n\r") != std::string::npos) {
    throw InvalidArgument("table cell '" + cell + "' contains a separator");
  }
}

}  // namespace

MetricsLog::MetricsLog(const std::filesystem::path& path) : out_(path, std::ios::trunc), path_(path) {
  if (!out_) throw Error("cannot open metrics log " + path.string());
}

void MetricsLog::append(const std::string& run_id, int epoch, const std::string& metric, double value) {
  auto it = std::find_if(last_epoch_.begin(), last_epoch_.end(),
                         [&](const auto& entry) { return entry.first == run_id; });
  if (it == last_epoch_.end()) {
    last_epoch_.emplace_back(run_id, epoch);
  } else {
    if (epoch < it->second) throw InvalidArgument("metrics log: epoch went backwards for " + run_id);
    it->second = epoch;
  }
  out_ << format_record({run_id, epoch, metric, value}) << '\n';
  out_.flush();
  if (!out_) throw Error("write failed for " + path_.string());
}

std::string format_record(const MetricRecord& r) {
  check_cell(r.run_id);
  check_cell(r.metric);
  return r.run_id + "," + std::to_string(r.epoch) + "," + r.metric + "," + format_double(r.value);
}

std::vector<MetricRecord> read_metrics_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open metrics log " + path.string());
  std::vector<MetricRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_commas(line);
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    if (f.size() != 4) throw Error(where + "expected 4 fields");
    MetricRecord r;
    r.run_id = f[0];
    auto res = std::from_chars(f[1].data(), f[1].data() + f[1].size(), r.epoch);
    if (res.ec != std::errc() || res.ptr != f[1].data() + f[1].size()) throw Error(where + "bad epoch");
    r.metric = f[2];
    const auto v = parse_double(f[3]);
    if (!v) throw Error(where + "bad value");
    r.value = *v;
    out.push_back(std::move(r));
  }
  return out;
}

void Table::add_row(std::vector<std::string> row) {
  if (row.size() != header.size()) throw InvalidArgument("table row width differs from header");
  rows.push_back(std::move(row));
}

std::size_t Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw InvalidArgument("table has no column '" + name + "'");
}

double Table::number(std::size_t row, const std::string& name) const {
  const auto& cell = rows.at(row).at(column(name));
  const auto v = parse_double(cell);
  if (!v) throw InvalidArgument("cell '" + cell + "' in column " + name + " is not a number");
  return *v;
}

void Table::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      check_cell(cells[i]);
      out << (i ? "," : "") << cells[i];
    }
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  if (!out) throw Error("write failed for " + path.string());
}

Table Table::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + ": empty table");
  t.header = split_commas(line);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_commas(line);
    if (cells.size() != t.header.size()) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": row width differs from header");
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

}  // namespace ducat::harness
