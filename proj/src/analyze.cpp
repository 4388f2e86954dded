#include "penadd/analyze.hpp"

#include "penadd/estimator.hpp"
#include "penadd/kernel.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace penadd {

double univariate_ll_trace(const Eigen::VectorXd& column, double h, BoundaryPolicy policy,
                           double inflation) {
  const Eigen::Index n = column.size();
  Dataset data;
  data.X = column;
  data.Y = Eigen::VectorXd::Zero(n);
  const MomentAssembler assembler(data, BandwidthSpec::uniform(1, h), policy, inflation);
  double tr = 0.0;
  Eigen::VectorXd x(1);
  for (Eigen::Index i = 0; i < n; ++i) {
    x[0] = column[i];
    const PointMoments pm = assembler.at_point(x);
    // diag entry: (1/n) K(X_i, X_i) [S(X_i)^+]_00
    Eigen::SelfAdjointEigenSolver<SmallMatrix> eig(pm.S);
    const auto& ev = eig.eigenvalues();
    const double lmax = std::max(ev.maxCoeff(), 0.0);
    double s00 = 0.0;
    for (int q = 0; q < 2; ++q) {
      if (ev[q] > 1e-12 * lmax)
        s00 += eig.eigenvectors()(0, q) * eig.eigenvectors()(0, q) / ev[q];
    }
    tr += assembler.weight(i, x) / static_cast<double>(n) * s00;
  }
  return tr;
}

DfCalibration calibrate_bandwidth_by_df(const Eigen::VectorXd& column, double target_df,
                                        BoundaryPolicy policy, double inflation) {
  const Eigen::Index n = column.size();
  if (n < 2) throw CalibrationError("need at least 2 observations");
  if ((column.array() < 0.0).any() || (column.array() > 1.0).any())
    throw CalibrationError("column must be scaled to [0,1] before calibration");
  if (!(target_df > 1.0) || !(target_df <= static_cast<double>(n)))
    throw CalibrationError("target df must lie in (1, n]");

  auto trace_at = [&](double h) { return univariate_ll_trace(column, h, policy, inflation); };

  double h_lo = 1e-3, h_hi = 10.0;
  double t_lo = trace_at(h_lo), t_hi = trace_at(h_hi);
  // Trace decreases in h; expand the bracket if the target is outside.
  for (int tries = 0; t_lo < target_df && tries < 8; ++tries) {
    h_lo *= 0.25;
    t_lo = trace_at(h_lo);
  }
  for (int tries = 0; t_hi > target_df && tries < 8; ++tries) {
    h_hi *= 4.0;
    t_hi = trace_at(h_hi);
  }
  DfCalibration out;
  if (t_lo <= target_df) {  // interpolation limit
    out.h = h_lo;
    out.trace = t_lo;
    out.clamped = true;
    return out;
  }
  if (t_hi >= target_df) {
    if (t_hi > target_df + 0.5)
      throw CalibrationError("bracket exhausted: smoother cannot reach target df");
    out.h = h_hi;
    out.trace = t_hi;
    out.clamped = true;
    return out;
  }
  double lo = std::log(h_lo), hi = std::log(h_hi);
  while (hi - lo > 1e-4) {
    const double mid = 0.5 * (lo + hi);
    if (trace_at(std::exp(mid)) > target_df)
      lo = mid;
    else
      hi = mid;
  }
  out.h = std::exp(0.5 * (lo + hi));
  out.trace = trace_at(out.h);
  return out;
}

std::vector<int> default_grid_sizes(int d) {
  int per_axis = 9;
  if (d <= 2) per_axis = 50;
  else if (d == 3) per_axis = 17;
  return std::vector<int>(d, per_axis);
}

namespace {

ModelSummary summarize_cell(const std::string& name, const SelectionSurface& surf,
                            std::size_t iR, std::size_t ih, double base_h_geo,
                            const Eigen::VectorXd& Y) {
  const SelectionCell& cell = surf.cell(iR, ih);
  ModelSummary s;
  s.name = name;
  s.R = cell.R;
  s.c = cell.h;
  s.ch = cell.h * base_h_geo;
  s.trace = cell.trace;
  s.sigma2 = cell.sigma2;
  const Eigen::Index n = Y.size();
  const double tss = (Y.array() - Y.mean()).square().sum();
  const double rss = cell.sigma2 * static_cast<double>(n);
  s.adj_r2 = 1.0 - (rss / (static_cast<double>(n) - cell.trace)) /
                       (tss / (static_cast<double>(n) - 1.0));
  return s;
}

}  // namespace

AnalyzeReport analyze(const Dataset& data, const AnalyzeOptions& opts) {
  data.check();
  const int d = data.d();

  AnalyzeReport report;
  report.n = data.n();
  report.base_bandwidths.resize(d);
  for (int k = 0; k < d; ++k) {
    const DfCalibration cal = calibrate_bandwidth_by_df(
        data.X.col(k), opts.df, opts.boundary, opts.boundary_inflation);
    report.base_bandwidths[k] = cal.h;
  }
  report.base_h_geo = BandwidthSpec{report.base_bandwidths}.geometric_mean();
  report.grid_sizes = opts.grid_sizes.empty() ? default_grid_sizes(d) : opts.grid_sizes;
  const Grid grid(report.grid_sizes);

  SearchLattice lattice;
  lattice.R = SearchLattice::default_R_grid(opts.rho_step);
  lattice.h = SearchLattice::log10_h_grid(opts.log10_c_lo, opts.log10_c_hi, opts.log10_c_step);

  SelectOptions sopts;
  sopts.kind = opts.kind;
  sopts.boundary = opts.boundary;
  sopts.boundary_inflation = opts.boundary_inflation;
  sopts.pinv_cutoff = opts.pinv_cutoff;
  sopts.base_bandwidths = report.base_bandwidths;
  sopts.threads = opts.threads;

  const SelectionResult sel = select(data, grid, lattice, sopts);
  const SelectionSurface& surf = sel.surface;
  const std::size_t iR_min = 0, iR_max = surf.R_values.size() - 1;

  report.penalized = summarize_cell("penalized", surf, sel.best_iR, sel.best_ih,
                                    report.base_h_geo, data.Y);
  const auto ih_ll = surf.argmin_at_R(iR_min, true);
  const auto ih_add = surf.argmin_at_R(iR_max, true);
  if (!ih_ll || !ih_add) throw std::runtime_error("reference model selection failed");
  report.local_linear =
      summarize_cell("local_linear", surf, iR_min, *ih_ll, report.base_h_geo, data.Y);
  report.additive =
      summarize_cell("additive", surf, iR_max, *ih_add, report.base_h_geo, data.Y);

  // Mean-square decomposition of the fitted intercept surfaces.
  auto anova_of = [&](double R, double c) {
    FitConfig cfg;
    cfg.R = Penalty::finite(R);
    cfg.bandwidths = BandwidthSpec{report.base_bandwidths * c};
    cfg.boundary = opts.boundary;
    cfg.boundary_inflation = opts.boundary_inflation;
    cfg.pinv_cutoff = opts.pinv_cutoff;
    const FitResult f = fit(data, grid, cfg);
    return anova_decompose(f.intercept_surface(), grid);
  };
  report.anova_penalized = anova_of(report.penalized.R, report.penalized.c);
  report.anova_local_linear = anova_of(report.local_linear.R, report.local_linear.c);
  return report;
}

}  // namespace penadd
