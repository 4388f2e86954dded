#pragma once

#include "penadd/additive.hpp"
#include "penadd/kernel.hpp"
#include "penadd/types.hpp"

#include <Eigen/Cholesky>

#include <optional>
#include <vector>

namespace penadd {

/// Block-diagonal shrinkage A_R = R (S + R I)^{-1} with eigenvalues in [0,1],
/// plus the complements needed by the two solver forms. A_R S is computed
/// directly (not as R (I - A_R)) so it stays accurate for large R.
struct BlockDiagonalA {
  Grid grid;
  int d = 0;
  double R = 0.0;
  Eigen::MatrixXd A;    // (d+1)^2 x m, A_R^(j)
  Eigen::MatrixXd ImA;  // (d+1)^2 x m, I - A_R^(j)
  Eigen::MatrixXd AS;   // (d+1)^2 x m, A_R^(j) S^(j) = R (I - A_R)^(j)

  Eigen::Map<const Eigen::MatrixXd> A_at(std::int64_t j) const {
    return {A.col(j).data(), d + 1, d + 1};
  }
  Eigen::Map<const Eigen::MatrixXd> ImA_at(std::int64_t j) const {
    return {ImA.col(j).data(), d + 1, d + 1};
  }
  Eigen::Map<const Eigen::MatrixXd> AS_at(std::int64_t j) const {
    return {AS.col(j).data(), d + 1, d + 1};
  }
};

BlockDiagonalA build_A(const MomentField& moments, double R);

/// Symmetric PSD reduced system with a Cholesky fast path and an
/// eigendecomposition pseudo-inverse fallback (relative cutoff).
/// Eigenvalues below -cutoff * lambda_max raise DegenerateFitError.
class ReducedSystem {
 public:
  ReducedSystem(Eigen::MatrixXd lambda, double pinv_cutoff);

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  void solve_in_place(Eigen::Ref<Eigen::VectorXd> rhs) const;
  const Eigen::MatrixXd& inverse() const;  // cached full inverse
  bool pseudo_inverse_used() const { return !spd_; }
  Eigen::Index dim() const { return dim_; }

 private:
  Eigen::Index dim_;
  double cutoff_;
  bool spd_ = false;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd evecs_;
  Eigen::VectorXd inv_evals_;
  mutable Eigen::MatrixXd inverse_;
  mutable bool have_inverse_ = false;
};

enum class DirectForm { automatic, small_R, large_R };

struct SolveResult {
  ParamField beta;
  AdditiveCoords gamma;  // converged additive coordinates, gamma = Z beta
  int iterations = 0;
  std::vector<double> increments;  // squared gamma increments per iteration
  bool pseudo_inverse_used = false;
};

/// Reduced matrices for the two closed forms:
///   small R:  Lambda = I - Z A_R Z^T
///   large R:  (I - Z Z^T) + Z (A_R S) Z^T   (the same system rescaled by R)
Eigen::MatrixXd small_R_lambda(const BlockDiagonalA& A);
Eigen::MatrixXd large_R_lambda(const BlockDiagonalA& A);

/// (S + R I)^{-1} L per node, the data term of both algorithms.
Eigen::MatrixXd ridge_data_term(const MomentField& moments, const BlockDiagonalA& A);

/// Final assembly beta = A_R Z^T gamma + (S + R I)^{-1} L.
ParamField beta_from_gamma(const BlockDiagonalA& A, const AdditiveCoords& gamma,
                           const Eigen::MatrixXd& data_field);

/// Direct solution of (S + R(I - P_add)) beta = L via the reduced system.
SolveResult solve_direct(const MomentField& moments, double R, const FitConfig& cfg,
                         DirectForm form = DirectForm::automatic);

/// Pure additive fit (R = infinity): gamma solves
/// ((I - Z Z^T) + Z S Z^T) gamma = Z L and beta = Z^T gamma.
SolveResult solve_additive_direct(const MomentField& moments, const FitConfig& cfg);

/// Fixed-point iteration on the additive coordinates; dispatches to the
/// damped large-R scheme for R >= cfg.large_R_threshold and for R = infinity.
SolveResult solve_iterative(const MomentField& moments, Penalty R, const FitConfig& cfg);

/// || (S + R(I - P_add)) beta - L || / max(1, ||L||). For R = infinity the
/// additive system residual max(||Z(S beta - L)|| / max(1, ||Z L||),
/// ||(I - P_add) beta|| / max(1, ||beta||)) is reported instead.
double residual_norm(const MomentField& moments, Penalty R, const ParamField& beta);

double max_node_eigenvalue(const MomentField& moments);

/// Minimum-norm solution of S x = b for symmetric PSD S via eigendecomposition
/// with relative cutoff (the R = 0 local linear solve).
SmallVector pinv_solve(const SmallMatrix& S, const SmallVector& b, double cutoff);

}  // namespace penadd
