#pragma once

#include "penadd/types.hpp"

#include <functional>

namespace penadd {

/// gamma = Z beta: per-axis marginal sums of intercept and slope columns,
/// scaled by sqrt(m_k / m); intercept components for axes k >= 2 are
/// mean-centered. Z is applied matrix-free.
AdditiveCoords apply_Z(const ParamField& beta);

/// Adjoint of apply_Z with respect to the Euclidean inner products.
ParamField apply_Zt(const AdditiveCoords& gamma);

/// P_add beta = Z^T Z beta, the orthogonal projection onto the additive
/// parameter subspace.
ParamField project_additive(const ParamField& beta);

/// Gram matrix Z diag_j(B^(j)) Z^T for symmetric per-node blocks B^(j)
/// (a (2 m*) x (2 m*) symmetric matrix). block(j) must return a
/// (d+1) x (d+1) view. With identity blocks this yields Z Z^T.
Eigen::MatrixXd z_block_gram(const Grid& grid,
                             const std::function<SmallMatrix(std::int64_t)>& block);

Eigen::MatrixXd zzt_matrix(const Grid& grid);

/// Uncentered scatter of one node's (d+1)-vector into gamma coordinates;
/// building Z v for a sparse field is scatter_node over its support followed
/// by one center_intercepts pass.
void scatter_node(const Grid& grid, std::span<const int> multi_index, const SmallVector& v,
                  Eigen::VectorXd& gamma);
void center_intercepts(const Grid& grid, Eigen::VectorXd& gamma);

/// Classical ANOVA decomposition of grid values by successive marginal
/// averages. Components are pairwise orthogonal under the uniform grid inner
/// product and sum to the input.
struct AnovaComponent {
  std::vector<int> axes;       // effect axes, ascending; empty = constant
  Eigen::VectorXd values;      // effect over the marginal grid of `axes`
  double mean_square = 0.0;    // full-grid mean square of the component
};

struct AnovaDecomposition {
  double constant = 0.0;            // grand mean
  double total_mean_square = 0.0;
  std::vector<AnovaComponent> components;  // all 2^d subsets, by order then lex

  const AnovaComponent& component(const std::vector<int>& axes) const;
};

AnovaDecomposition anova_decompose(const Eigen::VectorXd& values, const Grid& grid);

}  // namespace penadd
