#pragma once

#include "penadd/rng.hpp"
#include "penadd/selection.hpp"
#include "penadd/types.hpp"

#include <string>

namespace penadd {

/// The nonadditive benchmark surface: three Gaussian bumps on [0,1]^2.
double truth_nonadditive(const Eigen::VectorXd& x);

/// Its additive counterpart: the same bumps halved and applied per coordinate.
double truth_additive(const Eigen::VectorXd& x);

enum class DesignDensity { uniform, f1, f2 };
DesignDensity parse_design(const std::string& name);
const char* design_name(DesignDensity density);

/// i.i.d. draws on [0,1]^2: f1 = 1/2 + (x1+x2)/2, f2 = 3/2 - (x1+x2)/2,
/// sampled by rejection with constant envelope 1.5.
Eigen::MatrixXd sample_design(DesignDensity density, int n, RandomStream& rng);

enum class TruthKind { nonadditive, additive };

struct ScenarioSpec {
  TruthKind truth = TruthKind::nonadditive;
  DesignDensity design = DesignDensity::uniform;
  int n = 200;
  double sigma = 5.0;
  std::vector<int> grid_sizes = {50, 50};
  double rho_step = 0.01;       // resolution in R/(1+R)
  double log10_h_lo = -1.3010299956639813;  // log10(0.05)
  double log10_h_hi = -0.3010299956639812;  // log10(0.5)
  double log10_h_step = 0.005;
  CriterionKind kind = CriterionKind::aicc;
  std::uint64_t seed = 1;
  int replications = 50;
  BoundaryPolicy boundary = BoundaryPolicy::renormalize;
  double boundary_inflation = 0.5;
  int threads = 0;  // across replications; each replication runs serial

  void check() const;
  std::function<double(const Eigen::VectorXd&)> truth_fn() const;
};

/// Per-replication quantities summarized in the evaluation tables.
struct ReplicationRecord {
  int replication = 0;
  double ise_opt = 0.0, R_opt = 0.0, h_opt = 0.0;
  double ise_opt_Rmin = 0.0, ise_opt_Rmax = 0.0;
  double ise_aic = 0.0, R_aic = 0.0, h_aic = 0.0;
  double ise_aic_Rmin = 0.0, ise_aic_Rmax = 0.0;
  bool failed = false;
  std::string error;
};

/// Deterministic given spec.seed: replication r draws from substreams
/// keyed by (seed, r) regardless of execution order.
std::vector<ReplicationRecord> run_scenario(const ScenarioSpec& spec);

ReplicationRecord run_replication(const ScenarioSpec& spec, int replication);

/// Uniform-weight Riemann sum of squared differences (domain volume 1).
double ise(const Eigen::VectorXd& surface_hat, const Eigen::VectorXd& surface_true);

struct QuantileRow {
  std::string name;
  double min = 0.0, q10 = 0.0, med = 0.0, q90 = 0.0, max = 0.0;
};

/// Lower empirical (type-1) quantile of the values.
double quantile_type1(std::vector<double> values, double p);

/// The five derived ratios (ideal gain, AICC loss, data-adaptive gain,
/// penalized-vs-optimal-full difference, R_opt), with order statistics.
/// Failed replications are skipped.
std::vector<QuantileRow> summarize(const std::vector<ReplicationRecord>& records);

}  // namespace penadd
