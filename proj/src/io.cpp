#include "penadd/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace penadd {

namespace {

std::vector<std::string> parse_csv_line(const std::string& line, std::istream& in) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  std::string buf = line;
  std::size_t pos = 0;
  for (;;) {
    if (pos == buf.size()) {
      if (quoted) {
        // newline inside a quoted field: pull the next physical line
        std::string more;
        if (!std::getline(in, more)) throw std::runtime_error("unterminated quoted CSV field");
        buf += '\n';
        buf += more;
        continue;
      }
      break;
    }
    const char c = buf[pos];
    if (quoted) {
      if (c == '"') {
        if (pos + 1 < buf.size() && buf[pos + 1] == '"') {
          field += '"';
          ++pos;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c == '\r' && pos + 1 == buf.size()) {
      // trailing CR of a CRLF line
    } else {
      field += c;
    }
    ++pos;
  }
  fields.push_back(field);
  return fields;
}

bool is_missing(const std::string& s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" || s == "N/A";
}

double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("cannot parse numeric value '" + s + "' in " + what);
  }
}

void write_lines(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace

CsvTable CsvTable::read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() && in.peek() == EOF) break;
    auto fields = parse_csv_line(line, in);
    if (first) {
      table.header = std::move(fields);
      first = false;
    } else {
      table.rows.push_back(std::move(fields));
    }
  }
  if (first) throw std::runtime_error("empty CSV file '" + path + "'");
  return table;
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

IngestResult ingest_csv(const std::string& path, const IngestOptions& opts) {
  if (opts.response.empty()) throw std::invalid_argument("response column not given");
  if (opts.predictors.empty()) throw std::invalid_argument("no predictor columns given");
  const CsvTable table = CsvTable::read(path);

  const int yc = table.column(opts.response);
  if (yc < 0) throw std::runtime_error("missing column '" + opts.response + "'");
  std::vector<int> xc;
  for (const auto& name : opts.predictors) {
    const int c = table.column(name);
    if (c < 0) throw std::runtime_error("missing column '" + name + "'");
    xc.push_back(c);
  }

  const std::set<int> excluded(opts.exclude_rows.begin(), opts.exclude_rows.end());

  IngestResult out;
  out.response_name = opts.response;
  out.log_response = opts.log_response;
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> ys;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (excluded.count(static_cast<int>(r) + 1)) {
      ++out.excluded;
      continue;
    }
    const auto& row = table.rows[r];
    bool missing = row.size() <= static_cast<std::size_t>(yc) || is_missing(row[yc]);
    for (int c : xc)
      missing = missing || row.size() <= static_cast<std::size_t>(c) || is_missing(row[c]);
    if (missing) {
      ++out.dropped_missing;
      continue;
    }
    Eigen::VectorXd x(xc.size());
    for (std::size_t k = 0; k < xc.size(); ++k)
      x[k] = parse_number(row[xc[k]], "column '" + opts.predictors[k] + "'");
    double y = parse_number(row[yc], "column '" + opts.response + "'");
    if (opts.log_response) {
      if (!(y > 0.0))
        throw std::runtime_error("log response requires positive values, got " +
                                 std::to_string(y));
      y = std::log(y);
    }
    rows.push_back(std::move(x));
    ys.push_back(y);
  }
  if (rows.empty()) throw std::runtime_error("no complete data rows in '" + path + "'");

  const int d = static_cast<int>(opts.predictors.size());
  out.data.X.resize(rows.size(), d);
  out.data.Y.resize(ys.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.data.X.row(i) = rows[i].transpose();
    out.data.Y[i] = ys[i];
  }
  for (int k = 0; k < d; ++k) {
    ScalingRecord rec;
    rec.name = opts.predictors[k];
    rec.min = out.data.X.col(k).minCoeff();
    rec.max = out.data.X.col(k).maxCoeff();
    if (rec.max <= rec.min)
      throw std::runtime_error("predictor '" + rec.name + "' is constant, cannot scale");
    out.data.X.col(k) = (out.data.X.col(k).array() - rec.min) / (rec.max - rec.min);
    out.scaling.push_back(rec);
  }
  return out;
}

void write_fit_surface_csv(const std::string& path, const FitResult& result) {
  const Grid& grid = result.beta.grid;
  const int d = grid.dim();
  std::ostringstream out;
  for (int k = 0; k < d; ++k) out << "x" << (k + 1) << ",";
  out << "intercept";
  for (int k = 0; k < d; ++k) out << ",slope" << (k + 1);
  out << ",additive_intercept,nonadditive_intercept\n";
  std::vector<int> mi(d, 0);
  for (std::int64_t j = 0; j < grid.size(); ++j, grid.advance(mi)) {
    for (int k = 0; k < d; ++k) out << format_double(grid.node(k, mi[k])) << ",";
    out << format_double(result.beta.beta(j, 0));
    for (int k = 0; k < d; ++k) out << "," << format_double(result.beta.beta(j, k + 1));
    out << "," << format_double(result.additive_part.beta(j, 0)) << ","
        << format_double(result.nonadditive_part.beta(j, 0)) << "\n";
  }
  write_lines(path, out.str());
}

SurfaceData read_surface_csv(const std::string& path) {
  const CsvTable table = CsvTable::read(path);
  // Coordinate columns are x1..xd, in order; everything else is a value column.
  std::vector<int> coord_cols;
  for (int k = 1;; ++k) {
    const int c = table.column("x" + std::to_string(k));
    if (c < 0) break;
    coord_cols.push_back(c);
  }
  const int d = static_cast<int>(coord_cols.size());
  if (d == 0) throw std::runtime_error("surface CSV has no coordinate columns x1..xd");

  std::vector<int> value_cols;
  SurfaceData out;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (std::find(coord_cols.begin(), coord_cols.end(), static_cast<int>(c)) ==
        coord_cols.end()) {
      value_cols.push_back(static_cast<int>(c));
      out.value_columns.push_back(table.header[c]);
    }
  }

  const std::size_t nrows = table.rows.size();
  Eigen::MatrixXd coords(nrows, d);
  Eigen::MatrixXd vals(nrows, value_cols.size());
  for (std::size_t r = 0; r < nrows; ++r) {
    for (int k = 0; k < d; ++k)
      coords(r, k) = parse_number(table.rows[r][coord_cols[k]], "coordinate column");
    for (std::size_t c = 0; c < value_cols.size(); ++c)
      vals(r, c) = parse_number(table.rows[r][value_cols[c]], "value column");
  }

  // Reconstruct per-axis node sets (tolerant match for hand-written files).
  std::vector<std::vector<double>> axis_nodes(d);
  for (int k = 0; k < d; ++k) {
    std::vector<double> v(coords.col(k).data(), coords.col(k).data() + nrows);
    std::sort(v.begin(), v.end());
    const double tol = 1e-9 * std::max(1.0, std::abs(v.back()));
    for (double x : v)
      if (axis_nodes[k].empty() || x - axis_nodes[k].back() > tol) axis_nodes[k].push_back(x);
  }
  std::vector<int> sizes(d);
  std::int64_t expect = 1;
  for (int k = 0; k < d; ++k) {
    sizes[k] = static_cast<int>(axis_nodes[k].size());
    expect *= sizes[k];
  }
  if (expect != static_cast<std::int64_t>(nrows))
    throw std::runtime_error("surface rows do not form a complete grid product");
  out.grid = Grid(sizes);

  out.values.resize(nrows, value_cols.size());
  std::vector<bool> seen(nrows, false);
  std::vector<int> mi(d);
  for (std::size_t r = 0; r < nrows; ++r) {
    for (int k = 0; k < d; ++k) {
      const auto& nodes = axis_nodes[k];
      const auto it = std::lower_bound(nodes.begin(), nodes.end(), coords(r, k) - 1e-9);
      if (it == nodes.end() || std::abs(*it - coords(r, k)) > 1e-9)
        throw std::runtime_error("surface coordinate does not match any grid node");
      mi[k] = static_cast<int>(it - nodes.begin());
    }
    const std::int64_t j = out.grid.index(mi);
    if (seen[j]) throw std::runtime_error("duplicate grid node in surface CSV");
    seen[j] = true;
    out.values.row(j) = vals.row(r);
  }
  return out;
}

void write_selection_surface_csv(const std::string& path, const SelectionSurface& surface) {
  bool any_ise = false;
  for (const auto& c : surface.cells) any_ise = any_ise || !std::isnan(c.ise);
  std::ostringstream out;
  out << "R,h,criterion,sigma2,trace";
  if (any_ise) out << ",ise";
  out << "\n";
  for (std::size_t ih = 0; ih < surface.h_values.size(); ++ih) {
    for (std::size_t iR = 0; iR < surface.R_values.size(); ++iR) {
      const SelectionCell& c = surface.cell(iR, ih);
      out << format_double(c.R) << "," << format_double(c.h) << ","
          << (c.valid ? format_double(c.criterion) : "") << ","
          << format_double(c.sigma2) << ","
          << (std::isnan(c.trace) ? "" : format_double(c.trace));
      if (any_ise) out << "," << (std::isnan(c.ise) ? "" : format_double(c.ise));
      out << "\n";
    }
  }
  write_lines(path, out.str());
}

void write_records_csv(const std::string& path,
                       const std::vector<ReplicationRecord>& records) {
  std::ostringstream out;
  out << "replication,ise_opt,R_opt,h_opt,ise_opt_Rmin,ise_opt_Rmax,"
         "ise_aic,R_aic,h_aic,ise_aic_Rmin,ise_aic_Rmax,failed,error\n";
  for (const auto& r : records) {
    out << r.replication << "," << format_double(r.ise_opt) << "," << format_double(r.R_opt)
        << "," << format_double(r.h_opt) << "," << format_double(r.ise_opt_Rmin) << ","
        << format_double(r.ise_opt_Rmax) << "," << format_double(r.ise_aic) << ","
        << format_double(r.R_aic) << "," << format_double(r.h_aic) << ","
        << format_double(r.ise_aic_Rmin) << "," << format_double(r.ise_aic_Rmax) << ","
        << (r.failed ? 1 : 0) << "," << '"' << r.error << '"' << "\n";
  }
  write_lines(path, out.str());
}

void write_quantiles_csv(const std::string& path, const std::vector<QuantileRow>& table) {
  std::ostringstream out;
  out << "ratio,min,q10,med,q90,max\n";
  for (const auto& row : table) {
    out << row.name << "," << format_double(row.min) << "," << format_double(row.q10) << ","
        << format_double(row.med) << "," << format_double(row.q90) << ","
        << format_double(row.max) << "\n";
  }
  write_lines(path, out.str());
}

void write_anova_csv(const std::string& path, const AnovaDecomposition& anova) {
  std::ostringstream out;
  out << "component,mean_square\n";
  for (const auto& comp : anova.components) {
    if (comp.axes.empty()) {
      out << "constant";
    } else {
      out << "r";
      for (int a : comp.axes) out << (a + 1);
    }
    out << "," << format_double(comp.mean_square) << "\n";
  }
  out << "total," << format_double(anova.total_mean_square) << "\n";
  write_lines(path, out.str());
}

}  // namespace penadd
