#pragma once

#include "penadd/kernel.hpp"
#include "penadd/solver.hpp"
#include "penadd/types.hpp"

namespace penadd {

struct FitDiagnostics {
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> increments;
  bool pseudo_inverse_used = false;
};

struct FitResult {
  ParamField beta;              // penalized parameter field
  ParamField additive_part;     // P_add beta
  ParamField nonadditive_part;  // beta - additive_part
  AdditiveCoords gamma;         // converged additive coordinates (gamma = Z beta)
  FitConfig config;
  FitDiagnostics diagnostics;

  Eigen::VectorXd intercept_surface() const { return beta.beta.col(0); }
};

/// Penalized fit on the grid. R = 0 solves per-node pseudo-inverse systems
/// (local linear), R = infinity the pure additive fixed point, finite R > 0
/// the penalized normal equations via the configured solver.
FitResult fit(const Dataset& data, const Grid& grid, const FitConfig& cfg);

/// Same, with precomputed moments (reused across penalties in selection).
FitResult fit(const MomentField& moments, const FitConfig& cfg);

/// Piecewise-linear interpolation of additive coordinates per axis; exact at
/// grid nodes. Returns the (d+1) coordinates of the additive field at x.
SmallVector interpolate_additive(const AdditiveCoords& gamma, const Eigen::VectorXd& x);

/// max over nodes of || beta^(j) - (S^(j)+RI)^{-1} { R (P_add beta)^(j) + L^(j) } ||_inf;
/// a restatement of the normal equations via the pointwise-compromise identity.
double pointwise_compromise_check(const FitResult& result, const MomentField& moments);

/// Fitted values at arbitrary points: the grid fit's additive part enters
/// through interpolated gamma, the local data through S(x), L(x).
class Predictor {
 public:
  Predictor(const FitResult& result, const Dataset& data);
  double at(const Eigen::VectorXd& x) const;
  Eigen::VectorXd at_design_points() const;

 private:
  const FitResult* result_;
  const Dataset* data_;
  MomentAssembler assembler_;
};

double predict_at(const FitResult& result, const Dataset& data, const Eigen::VectorXd& x);

/// n x n linear map from responses to fitted values at design points,
/// built exactly, one canonical response per column.
struct HatMatrix {
  Eigen::MatrixXd M;
  double trace = 0.0;
};

HatMatrix hat_matrix(const Dataset& data, const Grid& grid, const FitConfig& cfg);

}  // namespace penadd
