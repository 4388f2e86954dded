#pragma once

#include "penadd/estimator.hpp"
#include "penadd/types.hpp"

#include <functional>
#include <optional>

namespace penadd {

enum class CriterionKind { aic, gcv, aicc };

const char* criterion_name(CriterionKind kind);
CriterionKind parse_criterion(const std::string& name);

/// AIC = log s2 + 2 tr/n; GCV = s2 / (1 - tr/n)^2;
/// AICC = log s2 + (1 + tr/n) / (1 - (tr + 2)/n).
/// Throws std::domain_error when the value is undefined (nonpositive s2 or
/// denominator); select() marks such cells invalid instead.
double criterion(double sigma2_hat, double trace, Eigen::Index n, CriterionKind kind);

/// Search lattice: penalties R (finite, the R = 1/9999 and R = 9999 endpoints
/// standing in for 0 and infinity) times bandwidth multipliers.
struct SearchLattice {
  std::vector<double> R;
  std::vector<double> h;

  /// Equidistant in R/(1+R) with the given step, from 1/10000 to 0.9999
  /// (both endpoints always included).
  static std::vector<double> default_R_grid(double rho_step = 0.01);
  /// Equidistant in log10 h over [lo, hi].
  static std::vector<double> log10_h_grid(double log10_lo, double log10_hi, double step);
};

struct SelectionCell {
  double R = 0.0;
  double h = 0.0;  // bandwidth multiplier of the cell
  double criterion = std::numeric_limits<double>::quiet_NaN();
  double sigma2 = std::numeric_limits<double>::quiet_NaN();
  double trace = std::numeric_limits<double>::quiet_NaN();
  double ise = std::numeric_limits<double>::quiet_NaN();
  bool valid = false;
};

struct SelectionSurface {
  std::vector<double> R_values;
  std::vector<double> h_values;
  std::vector<SelectionCell> cells;  // h-major: index = ih * |R| + iR

  const SelectionCell& cell(std::size_t iR, std::size_t ih) const {
    return cells[ih * R_values.size() + iR];
  }
  SelectionCell& cell(std::size_t iR, std::size_t ih) {
    return cells[ih * R_values.size() + iR];
  }

  /// Argmin over valid cells; ties break toward larger R, then larger h.
  /// by_criterion = false selects on ISE instead.
  std::optional<std::pair<std::size_t, std::size_t>> argmin(bool by_criterion = true) const;

  /// Argmin over a single R-column (for the R = min / R = max reference fits).
  std::optional<std::size_t> argmin_at_R(std::size_t iR, bool by_criterion = true) const;
};

struct SelectOptions {
  CriterionKind kind = CriterionKind::aicc;
  BoundaryPolicy boundary = BoundaryPolicy::renormalize;
  double boundary_inflation = 0.5;
  double pinv_cutoff = 1e-10;
  double large_R_threshold = 1.0;
  Eigen::VectorXd base_bandwidths;  // per-axis; empty = isotropic (all ones)
  double R_floor = 0.0;             // optional lower bound on R, default off
  bool compute_criterion = true;    // oracle-only sweeps skip trace work
  std::function<double(const Eigen::VectorXd&)> truth;  // fills the ISE column
  int threads = 0;
};

struct SelectionResult {
  SelectionSurface surface;
  double best_R = 0.0;
  double best_h = 0.0;
  std::size_t best_iR = 0;
  std::size_t best_ih = 0;
};

/// Fits every lattice cell: sigma2 = (1/n) ||Y - M_R Y||^2 and tr(M_R) via the
/// exact hat-matrix pipeline, criterion per `kind`; moments are assembled once
/// per h-column and reused across all R. Throws std::runtime_error when every
/// cell is invalid.
SelectionResult select(const Dataset& data, const Grid& grid, const SearchLattice& lattice,
                       const SelectOptions& opts);

/// ISE-minimizing (oracle) selection for simulations; truth required.
SelectionResult oracle_select(const Dataset& data,
                              const std::function<double(const Eigen::VectorXd&)>& truth,
                              const Grid& grid, const SearchLattice& lattice,
                              SelectOptions opts = {});

}  // namespace penadd
