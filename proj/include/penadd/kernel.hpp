#pragma once

#include "penadd/types.hpp"

#include <functional>

namespace penadd {

/// Epanechnikov kernel 0.75 (1 - u^2) on [-1,1].
double epanechnikov(double u);

/// Kernel mass over [a,b] (clipped to the support).
double epanechnikov_mass(double a, double b);

/// Effective per-axis bandwidth at output coordinate x. Identity under the
/// renormalize policy; the inflate policy grows h towards the boundary up to
/// a factor (1 + inflation) at the corners.
double effective_bandwidth(double x, double h, BoundaryPolicy policy, double inflation);

/// Per-axis normalization c(X) = int_0^1 K((X-s)/h_eff(s)) / h_eff(s) ds,
/// so that the weight integrates to 1 over [0,1] per axis for every X.
double boundary_normalization(double X, double h, BoundaryPolicy policy, double inflation);

/// Product kernel weight K_h(X_i, x) with boundary renormalization.
double boundary_weight(const Eigen::VectorXd& X_i, const Eigen::VectorXd& x,
                       const BandwidthSpec& bw,
                       BoundaryPolicy policy = BoundaryPolicy::renormalize,
                       double inflation = 0.5);

/// Kernel-weighted design moments S(t_j), L(t_j) at every grid node.
/// Column j holds vec(S^(j)) resp. L^(j); S^(j) is symmetric PSD.
struct MomentField {
  Grid grid;
  int d = 0;
  Eigen::MatrixXd S;  // (d+1)^2 x m
  Eigen::MatrixXd L;  // (d+1) x m

  Eigen::Map<const Eigen::MatrixXd> S_at(std::int64_t j) const {
    return {S.col(j).data(), d + 1, d + 1};
  }
  Eigen::Map<const Eigen::VectorXd> L_at(std::int64_t j) const {
    return {L.col(j).data(), d + 1};
  }
};

struct PointMoments {
  SmallMatrix S;
  SmallVector L;
};

/// Caches per-observation boundary normalizations; serves both grid assembly
/// and point queries so repeated evaluation (hat matrix, selection) stays cheap.
class MomentAssembler {
 public:
  MomentAssembler(const Dataset& data, const BandwidthSpec& bw,
                  BoundaryPolicy policy = BoundaryPolicy::renormalize,
                  double inflation = 0.5);

  MomentField assemble(const Grid& grid, int threads = 0) const;
  PointMoments at_point(const Eigen::VectorXd& x) const;

  /// Weight of observation i at output point x (0 outside the support).
  double weight(Eigen::Index i, const Eigen::VectorXd& x) const;

  /// Calls fn(i, w, u) for every observation with positive weight at x,
  /// where u is the vector of scaled offsets (X_{i,k} - x_k) / h_k.
  void for_each_contribution(
      const Eigen::VectorXd& x,
      const std::function<void(Eigen::Index, double, const SmallVector&)>& fn) const;

  /// Inclusive node-index range per axis that can carry weight for
  /// observation i (bounding-box pruning).
  void support_range(Eigen::Index i, const Grid& grid, int axis, int& lo, int& hi) const;

  /// Calls fn(j, multi_index, w, u) for every grid node j inside the kernel
  /// support of observation i; w includes the 1/n factor.
  void for_each_support_node(
      Eigen::Index i, const Grid& grid,
      const std::function<void(std::int64_t, std::span<const int>, double,
                               const SmallVector&)>& fn) const;

  const Dataset& data() const { return *data_; }
  const BandwidthSpec& bandwidths() const { return bw_; }
  BoundaryPolicy policy() const { return policy_; }
  double inflation() const { return inflation_; }

  double axis_weight(Eigen::Index i, int axis, double x) const;

 private:
  const Dataset* data_;
  BandwidthSpec bw_;
  BoundaryPolicy policy_;
  double inflation_;
  Eigen::MatrixXd norm_;  // n x d cached c_k(X_ik)
};

MomentField assemble_moments(const Dataset& data, const Grid& grid, const BandwidthSpec& bw,
                             BoundaryPolicy policy = BoundaryPolicy::renormalize,
                             double inflation = 0.5);

PointMoments moments_at_point(const Dataset& data, const Eigen::VectorXd& x,
                              const BandwidthSpec& bw,
                              BoundaryPolicy policy = BoundaryPolicy::renormalize,
                              double inflation = 0.5);

}  // namespace penadd
