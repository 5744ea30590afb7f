#include "codiff/csv.hpp"

#include <spdlog/fmt/fmt.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace codiff {

namespace {

constexpr const char* kSchemaPrefix = "# schema: ";

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::vector<std::string> indexed(const std::string& stem, Eigen::Index n) {
  std::vector<std::string> out;
  for (Eigen::Index i = 1; i <= n; ++i) out.push_back(stem + "_" + std::to_string(i));
  return out;
}

void append_vec(std::vector<std::string>& row, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) row.push_back(format_number(v[i]));
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  require(it != columns.end(), "csv: missing column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

double CsvTable::number(std::size_t row, const std::string& name) const {
  require(row < rows.size(), "csv: row out of range");
  return parse_number(rows[row][column(name)]);
}

std::string format_number(double x) { return fmt::format("{}", x); }

double parse_number(const std::string& text) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double value = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  require(ec == std::errc() && ptr == end && !text.empty(), "csv: not a number: '" + text + "'");
  return value;
}

void write_csv(std::ostream& out, const CsvTable& table) {
  out << kSchemaPrefix << table.schema << " v" << table.version << '\n';
  const auto write_row = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  write_row(table.columns);
  for (const auto& row : table.rows) {
    require(row.size() == table.columns.size(), "csv: row width differs from header");
    write_row(row);
  }
}

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "csv: empty input");
  require(line.rfind(kSchemaPrefix, 0) == 0, "csv: missing schema line");
  const std::string tag = line.substr(std::string(kSchemaPrefix).size());
  const auto space = tag.rfind(" v");
  require(space != std::string::npos, "csv: malformed schema line");
  table.schema = tag.substr(0, space);
  table.version = static_cast<int>(parse_number(tag.substr(space + 2)));
  require(table.version == kCsvSchemaVersion, "csv: unsupported schema version " + std::to_string(table.version));
  require(static_cast<bool>(std::getline(in, line)), "csv: missing column header");
  table.columns = split_row(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_row(line);
    require(cells.size() == table.columns.size(), "csv: row width differs from header");
    table.rows.push_back(std::move(cells));
  }
  return table;
}

void write_csv_file(const std::string& path, const CsvTable& table) {
  std::ofstream out(path);
  require(out.good(), "csv: cannot open '" + path + "' for writing");
  write_csv(out, table);
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "csv: cannot open '" + path + "'");
  return read_csv(in);
}

CsvTable trace_table(const std::vector<TraceRow>& trace, Eigen::Index design_dim) {
  CsvTable t;
  t.schema = "trace";
  t.columns = {"iter"};
  for (auto& c : indexed("xi", design_dim)) t.columns.push_back(c);
  for (const char* c : {"grad_norm", "ess_min", "wall_ms", "cloud_stamp", "design_stamp", "joint_resampled",
                        "contrastive_resampled", "skipped"})
    t.columns.emplace_back(c);
  for (const TraceRow& r : trace) {
    std::vector<std::string> row{std::to_string(r.iter)};
    append_vec(row, r.xi);
    row.push_back(format_number(r.grad_norm));
    row.push_back(format_number(r.ess_min));
    row.push_back(format_number(r.wall_ms));
    row.push_back(std::to_string(r.cloud_stamp));
    row.push_back(std::to_string(r.design_stamp));
    row.push_back(r.joint_resampled ? "1" : "0");
    row.push_back(r.contrastive_resampled ? "1" : "0");
    row.push_back(r.skipped ? "1" : "0");
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable metrics_table(const std::vector<ExperimentRecord>& records) {
  CsvTable t;
  t.schema = "metrics";
  t.columns = {"k", "spce", "snmc", "w2", "wall_ms"};
  for (const auto& r : records)
    t.rows.push_back({std::to_string(r.metrics.k), format_number(r.metrics.spce), format_number(r.metrics.snmc),
                      format_number(r.metrics.w2), format_number(r.metrics.wall_ms)});
  return t;
}

CsvTable designs_table(const std::vector<ExperimentRecord>& records, Eigen::Index design_dim, Eigen::Index outcome_dim) {
  CsvTable t;
  t.schema = "designs";
  t.columns = {"k"};
  for (auto& c : indexed("xi", design_dim)) t.columns.push_back(c);
  for (auto& c : indexed("y", outcome_dim)) t.columns.push_back(c);
  for (const auto& r : records) {
    std::vector<std::string> row{std::to_string(r.metrics.k)};
    append_vec(row, r.xi);
    append_vec(row, r.y);
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable diagnostics_table(const std::vector<DiagnosticRow>& rows) {
  CsvTable t;
  t.schema = "diagnostics";
  const Eigen::Index d = rows.empty() ? 0 : rows.front().xi.size();
  t.columns = {"estimator"};
  for (auto& c : indexed("xi", d)) t.columns.push_back(c);
  for (const char* c : {"component", "budget", "replications", "mean", "sd", "se", "oracle", "bias", "wall_ms"})
    t.columns.emplace_back(c);
  for (const auto& r : rows) {
    std::vector<std::string> row{r.estimator};
    append_vec(row, r.xi);
    row.push_back(std::to_string(r.component));
    row.push_back(std::to_string(r.budget));
    row.push_back(std::to_string(r.replications));
    for (double v : {r.mean, r.sd, r.se, r.oracle, r.bias, r.wall_ms}) row.push_back(format_number(v));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable spce_table(const BoundPair& bounds, std::size_t experiments, std::size_t contrastive) {
  CsvTable t;
  t.schema = "spce";
  t.columns = {"experiments", "contrastive", "spce", "snmc"};
  t.rows.push_back({std::to_string(experiments), std::to_string(contrastive), format_number(bounds.spce),
                    format_number(bounds.snmc)});
  return t;
}

History read_design_sequence(const CsvTable& table, Eigen::Index design_dim, Eigen::Index outcome_dim) {
  const std::size_t k_col = table.column("k");
  std::vector<std::size_t> xi_cols;
  std::vector<std::size_t> y_cols;
  for (const auto& c : indexed("xi", design_dim)) xi_cols.push_back(table.column(c));
  for (const auto& c : indexed("y", outcome_dim)) y_cols.push_back(table.column(c));
  std::map<double, Experiment> ordered;
  for (const auto& row : table.rows) {
    Experiment e{Vec(design_dim), Vec(outcome_dim)};
    for (Eigen::Index i = 0; i < design_dim; ++i) e.xi[i] = parse_number(row[xi_cols[static_cast<std::size_t>(i)]]);
    for (Eigen::Index i = 0; i < outcome_dim; ++i) e.y[i] = parse_number(row[y_cols[static_cast<std::size_t>(i)]]);
    const double k = parse_number(row[k_col]);
    require(ordered.emplace(k, std::move(e)).second, "design sequence: duplicate k");
  }
  History hist;
  for (auto& [k, e] : ordered) hist.append(std::move(e.xi), std::move(e.y));
  return hist;
}

}  // namespace codiff
