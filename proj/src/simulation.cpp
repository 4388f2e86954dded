#include "penadd/simulation.hpp"

#include "penadd/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace penadd {

double truth_nonadditive(const Eigen::VectorXd& x) {
  if (x.size() != 2) throw std::invalid_argument("nonadditive truth is bivariate");
  const double a1 = (x[0] - 0.25) * (x[0] - 0.25) + (x[1] - 0.25) * (x[1] - 0.25);
  const double a2 = (x[0] - 0.75) * (x[0] - 0.75) + (x[1] - 0.75) * (x[1] - 0.75);
  const double a3 = (x[0] - 0.5) * (x[0] - 0.5) + (x[1] - 0.5) * (x[1] - 0.5);
  return 15.0 * std::exp(-32.0 * a1) + 35.0 * std::exp(-128.0 * a2) +
         25.0 * std::exp(-2.0 * a3);
}

double truth_additive(const Eigen::VectorXd& x) {
  if (x.size() != 2) throw std::invalid_argument("additive truth is bivariate");
  double acc = 0.0;
  for (int k = 0; k < 2; ++k) {
    const double t = x[k];
    acc += 7.5 * std::exp(-32.0 * (t - 0.25) * (t - 0.25)) +
           17.5 * std::exp(-128.0 * (t - 0.75) * (t - 0.75)) +
           12.5 * std::exp(-2.0 * (t - 0.5) * (t - 0.5));
  }
  return acc;
}

DesignDensity parse_design(const std::string& name) {
  if (name == "uniform") return DesignDensity::uniform;
  if (name == "f1") return DesignDensity::f1;
  if (name == "f2") return DesignDensity::f2;
  throw std::invalid_argument("unknown design density '" + name + "'");
}

const char* design_name(DesignDensity density) {
  switch (density) {
    case DesignDensity::uniform: return "uniform";
    case DesignDensity::f1: return "f1";
    case DesignDensity::f2: return "f2";
  }
  return "?";
}

Eigen::MatrixXd sample_design(DesignDensity density, int n, RandomStream& rng) {
  if (n < 1) throw std::invalid_argument("design needs n >= 1");
  Eigen::MatrixXd X(n, 2);
  for (int i = 0; i < n; ++i) {
    if (density == DesignDensity::uniform) {
      X(i, 0) = rng.uniform();
      X(i, 1) = rng.uniform();
      continue;
    }
    for (;;) {  // rejection with envelope constant 1.5 (the density maximum)
      const double x1 = rng.uniform();
      const double x2 = rng.uniform();
      const double v = rng.uniform() * 1.5;
      const double f = density == DesignDensity::f1 ? 0.5 + 0.5 * (x1 + x2)
                                                    : 1.5 - 0.5 * (x1 + x2);
      if (v <= f) {
        X(i, 0) = x1;
        X(i, 1) = x2;
        break;
      }
    }
  }
  return X;
}

void ScenarioSpec::check() const {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  if (replications < 1) throw std::invalid_argument("replications must be >= 1");
  if (grid_sizes.size() != 2) throw std::invalid_argument("scenario grids are bivariate");
}

std::function<double(const Eigen::VectorXd&)> ScenarioSpec::truth_fn() const {
  return truth == TruthKind::nonadditive ? truth_nonadditive : truth_additive;
}

ReplicationRecord run_replication(const ScenarioSpec& spec, int replication) {
  spec.check();
  ReplicationRecord rec;
  rec.replication = replication;
  try {
    const std::uint64_t stream_base = static_cast<std::uint64_t>(replication) << 8;
    RandomStream design_rng(spec.seed, stream_base | 0);
    RandomStream noise_rng(spec.seed, stream_base | 1);

    Dataset data;
    data.X = sample_design(spec.design, spec.n, design_rng);
    data.Y.resize(spec.n);
    const auto truth = spec.truth_fn();
    for (int i = 0; i < spec.n; ++i)
      data.Y[i] = truth(data.X.row(i).transpose()) + spec.sigma * noise_rng.normal();

    const Grid grid(spec.grid_sizes);
    SearchLattice lattice;
    lattice.R = SearchLattice::default_R_grid(spec.rho_step);
    lattice.h = SearchLattice::log10_h_grid(spec.log10_h_lo, spec.log10_h_hi,
                                            spec.log10_h_step);
    SelectOptions opts;
    opts.kind = spec.kind;
    opts.boundary = spec.boundary;
    opts.boundary_inflation = spec.boundary_inflation;
    opts.truth = truth;
    opts.threads = 1;

    const SelectionResult sel = select(data, grid, lattice, opts);
    const SelectionSurface& surf = sel.surface;

    const auto opt = surf.argmin(false);
    if (!opt) throw std::runtime_error("no ISE cell");
    rec.ise_opt = surf.cell(opt->first, opt->second).ise;
    rec.R_opt = surf.R_values[opt->first];
    rec.h_opt = surf.h_values[opt->second];

    const std::size_t iR_min = 0, iR_max = surf.R_values.size() - 1;
    rec.ise_opt_Rmin = surf.cell(iR_min, *surf.argmin_at_R(iR_min, false)).ise;
    rec.ise_opt_Rmax = surf.cell(iR_max, *surf.argmin_at_R(iR_max, false)).ise;

    rec.ise_aic = surf.cell(sel.best_iR, sel.best_ih).ise;
    rec.R_aic = sel.best_R;
    rec.h_aic = sel.best_h;
    rec.ise_aic_Rmin = surf.cell(iR_min, *surf.argmin_at_R(iR_min, true)).ise;
    rec.ise_aic_Rmax = surf.cell(iR_max, *surf.argmin_at_R(iR_max, true)).ise;
  } catch (const std::exception& e) {
    rec.failed = true;
    rec.error = e.what();
  }
  return rec;
}

std::vector<ReplicationRecord> run_scenario(const ScenarioSpec& spec) {
  spec.check();
  std::vector<ReplicationRecord> records(spec.replications);
  parallel_for(
      spec.replications,
      [&](std::int64_t r) { records[r] = run_replication(spec, static_cast<int>(r)); },
      spec.threads);
  return records;
}

double ise(const Eigen::VectorXd& surface_hat, const Eigen::VectorXd& surface_true) {
  if (surface_hat.size() != surface_true.size())
    throw std::invalid_argument("surface lengths differ");
  return (surface_hat - surface_true).squaredNorm() /
         static_cast<double>(surface_hat.size());
}

double quantile_type1(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t nv = values.size();
  std::size_t k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(nv)));
  if (k < 1) k = 1;
  if (k > nv) k = nv;
  return values[k - 1];
}

std::vector<QuantileRow> summarize(const std::vector<ReplicationRecord>& records) {
  std::vector<std::vector<double>> ratios(5);
  for (const auto& r : records) {
    if (r.failed) continue;
    ratios[0].push_back((r.ise_opt_Rmin - r.ise_opt) / r.ise_opt);
    ratios[1].push_back((r.ise_aic - r.ise_opt) / r.ise_opt);
    ratios[2].push_back((r.ise_aic_Rmin - r.ise_aic) / r.ise_opt);
    ratios[3].push_back((r.ise_opt_Rmin - r.ise_aic) / r.ise_opt);
    ratios[4].push_back(r.R_opt);
  }
  if (ratios[0].empty()) throw std::runtime_error("no successful replications");
  const char* names[5] = {"ideal_gain", "aicc_loss", "adaptive_gain",
                          "adaptive_vs_optimal_full", "R_opt"};
  std::vector<QuantileRow> table;
  for (int q = 0; q < 5; ++q) {
    QuantileRow row;
    row.name = names[q];
    row.min = *std::min_element(ratios[q].begin(), ratios[q].end());
    row.q10 = quantile_type1(ratios[q], 0.10);
    row.med = quantile_type1(ratios[q], 0.50);
    row.q90 = quantile_type1(ratios[q], 0.90);
    row.max = *std::max_element(ratios[q].begin(), ratios[q].end());
    table.push_back(row);
  }
  return table;
}

}  // namespace penadd
