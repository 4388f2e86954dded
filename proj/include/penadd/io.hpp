#pragma once

#include "penadd/estimator.hpp"
#include "penadd/selection.hpp"
#include "penadd/simulation.hpp"
#include "penadd/types.hpp"

#include <string>
#include <vector>

namespace penadd {

/// RFC-4180 style CSV: quoted fields, "" escapes, CRLF tolerated.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  static CsvTable read(const std::string& path);
  int column(const std::string& name) const;  // -1 when absent
};

std::string format_double(double v);  // 17 significant digits

struct ScalingRecord {
  std::string name;
  double min = 0.0;
  double max = 1.0;
  double to_unit(double v) const { return (v - min) / (max - min); }
  double from_unit(double u) const { return min + u * (max - min); }
};

struct IngestOptions {
  std::string response;
  std::vector<std::string> predictors;
  bool log_response = false;
  std::vector<int> exclude_rows;  // 1-based data-row indices (header not counted)
};

struct IngestResult {
  Dataset data;
  std::vector<ScalingRecord> scaling;
  std::string response_name;
  bool log_response = false;
  int dropped_missing = 0;
  int excluded = 0;
};

/// Drops rows with missing values in the used columns, applies the exclusion
/// list, scales each predictor affinely to [0,1] and optionally log-transforms
/// the response.
IngestResult ingest_csv(const std::string& path, const IngestOptions& opts);

/// Grid surface written by `fit`: coordinates, intercept, slopes, additive and
/// nonadditive intercept, in flat row-major node order.
void write_fit_surface_csv(const std::string& path, const FitResult& result);

struct SurfaceData {
  Grid grid;
  std::vector<std::string> value_columns;
  Eigen::MatrixXd values;  // m x #value_columns, grid row-major order
};

/// Reads a surface CSV back, reconstructing the grid from the coordinate
/// columns x1..xd (any row order; the product must be complete).
SurfaceData read_surface_csv(const std::string& path);

void write_selection_surface_csv(const std::string& path, const SelectionSurface& surface);

void write_records_csv(const std::string& path, const std::vector<ReplicationRecord>& records);
void write_quantiles_csv(const std::string& path, const std::vector<QuantileRow>& table);

void write_anova_csv(const std::string& path, const AnovaDecomposition& anova);

}  // namespace penadd
