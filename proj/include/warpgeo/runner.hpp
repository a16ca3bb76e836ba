#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "warpgeo/geodesic.hpp"
#include "warpgeo/spec.hpp"

namespace warpgeo {

/// One line of the machine-readable report. Rows without a tolerance are
/// informational and never fail.
struct ReportRow {
  std::string task;
  std::string quantity;
  std::string point;
  double value = 0.0;
  std::optional<double> tolerance;
  std::optional<bool> pass;
};

struct TraceFile {
  std::string file_name;
  std::string csv;
};

struct RunResult {
  std::vector<ReportRow> rows;
  std::vector<TraceFile> traces;
  std::string report;
  int failed = 0;

  /// 0 when every toleranced row passes, 2 otherwise.
  int exit_code() const { return failed == 0 ? 0 : 2; }
};

/// Runs every task in order. Numerical failures inside a task become
/// failed rows; nothing is written to disk.
RunResult execute(const RunSpec& spec);

/// Writes report.txt, report.csv and one CSV per geodesic trace.
/// Throws FileError on I/O failure.
void write_outputs(const RunResult& result, const std::filesystem::path& dir);

std::string format_number(double v);
std::string format_point(const Vector& coords);
std::string rows_csv(const std::vector<ReportRow>& rows);
/// Columns t, coordinates, v_<coordinate>, energy, clairaut.
std::string trace_csv(const ChartedManifold& m, const GeodesicTrace& trace);

}  // namespace warpgeo
