#pragma once

#include "codiff/driver.hpp"
#include "codiff/evaluation.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace codiff {

inline constexpr int kCsvSchemaVersion = 1;

/// A CSV file: a schema line "# schema: <name> v<version>", a column header and string cells.
struct CsvTable {
  std::string schema;
  int version = kCsvSchemaVersion;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
};

void write_csv(std::ostream& out, const CsvTable& table);
/// Throws ContractViolation on a missing or unsupported schema line or ragged rows.
CsvTable read_csv(std::istream& in);
void write_csv_file(const std::string& path, const CsvTable& table);
CsvTable read_csv_file(const std::string& path);

/// Shortest text that parses back to the same double.
std::string format_number(double x);
double parse_number(const std::string& text);

CsvTable trace_table(const std::vector<TraceRow>& trace, Eigen::Index design_dim);
CsvTable metrics_table(const std::vector<ExperimentRecord>& records);
CsvTable designs_table(const std::vector<ExperimentRecord>& records, Eigen::Index design_dim, Eigen::Index outcome_dim);
CsvTable diagnostics_table(const std::vector<DiagnosticRow>& rows);
CsvTable spce_table(const BoundPair& bounds, std::size_t experiments, std::size_t contrastive);

/// Reads an external design sequence with columns k, xi_1..xi_d, y_1..y_p, ordered by k.
History read_design_sequence(const CsvTable& table, Eigen::Index design_dim, Eigen::Index outcome_dim);

}  // namespace codiff
