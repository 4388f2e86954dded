#include "penadd/additive.hpp"

#include <algorithm>
#include <cmath>

namespace penadd {

namespace {

std::vector<double> axis_scales(const Grid& grid) {
  std::vector<double> s(grid.dim());
  for (int k = 0; k < grid.dim(); ++k)
    s[k] = std::sqrt(static_cast<double>(grid.size(k)) / static_cast<double>(grid.size()));
  return s;
}

void center(Eigen::VectorBlock<Eigen::VectorXd> block) {
  block.array() -= block.mean();
}

}  // namespace

AdditiveCoords apply_Z(const ParamField& beta) {
  const Grid& grid = beta.grid;
  const int d = grid.dim();
  if (beta.beta.rows() != grid.size() || beta.beta.cols() != d + 1)
    throw std::invalid_argument("parameter field shape does not match grid");
  const auto scale = axis_scales(grid);

  AdditiveCoords gamma = AdditiveCoords::zero(grid);
  std::vector<int> mi(d, 0);
  for (std::int64_t j = 0; j < grid.size(); ++j, grid.advance(mi)) {
    for (int k = 0; k < d; ++k) {
      gamma.intercept_block(k)[mi[k]] += scale[k] * beta.beta(j, 0);
      gamma.slope_block(k)[mi[k]] += scale[k] * beta.beta(j, k + 1);
    }
  }
  for (int k = 1; k < d; ++k) center(gamma.intercept_block(k));
  return gamma;
}

ParamField apply_Zt(const AdditiveCoords& gamma) {
  const Grid& grid = gamma.grid;
  const int d = grid.dim();
  if (gamma.coords.size() != 2 * grid.node_sum())
    throw std::invalid_argument("additive coordinates length does not match grid");
  const auto scale = axis_scales(grid);

  // Z_k^T = Z_{0k}^T C_k: the incoming intercept blocks k >= 2 are centered
  // before scattering so the adjoint holds for arbitrary gamma.
  AdditiveCoords g = gamma;
  for (int k = 1; k < d; ++k) center(g.intercept_block(k));

  ParamField beta = ParamField::zero(grid, d);
  std::vector<int> mi(d, 0);
  for (std::int64_t j = 0; j < grid.size(); ++j, grid.advance(mi)) {
    double b0 = 0.0;
    for (int k = 0; k < d; ++k) {
      b0 += scale[k] * g.intercept_block(k)[mi[k]];
      beta.beta(j, k + 1) = scale[k] * g.slope_block(k)[mi[k]];
    }
    beta.beta(j, 0) = b0;
  }
  return beta;
}

ParamField project_additive(const ParamField& beta) { return apply_Zt(apply_Z(beta)); }

Eigen::MatrixXd z_block_gram(const Grid& grid,
                             const std::function<SmallMatrix(std::int64_t)>& block) {
  const int d = grid.dim();
  const int ms = grid.node_sum();
  const auto scale = axis_scales(grid);

  std::vector<int> int_off(d), slope_off(d);
  for (int k = 0, off = 0; k < d; off += grid.size(k), ++k) {
    int_off[k] = off;
    slope_off[k] = ms + off;
  }

  // Gram of the uncentered scatter first; each node touches 2d rows.
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(2 * ms, 2 * ms);
  std::vector<int> rows(2 * d), coord(2 * d);
  std::vector<double> coef(2 * d);
  std::vector<int> mi(d, 0);
  for (std::int64_t j = 0; j < grid.size(); ++j, grid.advance(mi)) {
    const SmallMatrix B = block(j);
    for (int k = 0; k < d; ++k) {
      rows[k] = int_off[k] + mi[k];
      coord[k] = 0;
      coef[k] = scale[k];
      rows[d + k] = slope_off[k] + mi[k];
      coord[d + k] = k + 1;
      coef[d + k] = scale[k];
    }
    for (int u = 0; u < 2 * d; ++u)
      for (int v = 0; v < 2 * d; ++v)
        G(rows[u], rows[v]) += coef[u] * coef[v] * B(coord[u], coord[v]);
  }

  // Apply the centering C on both sides for intercept blocks k >= 2.
  for (int k = 1; k < d; ++k) {
    const int off = int_off[k], mk = grid.size(k);
    const Eigen::RowVectorXd colmean = G.middleRows(off, mk).colwise().mean();
    G.middleRows(off, mk).rowwise() -= colmean;
  }
  for (int k = 1; k < d; ++k) {
    const int off = int_off[k], mk = grid.size(k);
    const Eigen::VectorXd rowmean = G.middleCols(off, mk).rowwise().mean();
    G.middleCols(off, mk).colwise() -= rowmean;
  }
  return G;
}

Eigen::MatrixXd zzt_matrix(const Grid& grid) {
  const int p = grid.dim() + 1;
  const SmallMatrix eye = SmallMatrix::Identity(p, p);
  return z_block_gram(grid, [&](std::int64_t) { return eye; });
}

void scatter_node(const Grid& grid, std::span<const int> multi_index, const SmallVector& v,
                  Eigen::VectorXd& gamma) {
  const int d = grid.dim();
  const int ms = grid.node_sum();
  int off = 0;
  for (int k = 0; k < d; ++k) {
    const double s =
        std::sqrt(static_cast<double>(grid.size(k)) / static_cast<double>(grid.size()));
    gamma[off + multi_index[k]] += s * v[0];
    gamma[ms + off + multi_index[k]] += s * v[k + 1];
    off += grid.size(k);
  }
}

void center_intercepts(const Grid& grid, Eigen::VectorXd& gamma) {
  int off = grid.size(0);
  for (int k = 1; k < grid.dim(); ++k) {
    auto block = gamma.segment(off, grid.size(k));
    block.array() -= block.mean();
    off += grid.size(k);
  }
}

const AnovaComponent& AnovaDecomposition::component(const std::vector<int>& axes) const {
  for (const auto& c : components)
    if (c.axes == axes) return c;
  throw std::out_of_range("no such ANOVA component");
}

AnovaDecomposition anova_decompose(const Eigen::VectorXd& values, const Grid& grid) {
  const int d = grid.dim();
  if (values.size() != grid.size())
    throw std::invalid_argument("value count does not match grid size");
  const int nsub = 1 << d;

  // Marginal size and flat index within the sub-grid spanned by mask axes.
  auto marginal_size = [&](int mask) {
    std::int64_t s = 1;
    for (int k = 0; k < d; ++k)
      if (mask & (1 << k)) s *= grid.size(k);
    return s;
  };
  auto sub_index = [&](int mask, const std::vector<int>& mi) {
    std::int64_t idx = 0;
    for (int k = 0; k < d; ++k)
      if (mask & (1 << k)) idx = idx * grid.size(k) + mi[k];
    return idx;
  };

  // Marginal averages over the axes not in the mask.
  std::vector<Eigen::VectorXd> avg(nsub);
  for (int mask = 0; mask < nsub; ++mask) {
    avg[mask] = Eigen::VectorXd::Zero(marginal_size(mask));
    std::vector<int> mi(d, 0);
    for (std::int64_t j = 0; j < grid.size(); ++j, grid.advance(mi))
      avg[mask][sub_index(mask, mi)] += values[j];
    avg[mask] *= static_cast<double>(marginal_size(mask)) / static_cast<double>(grid.size());
  }

  // Moebius inversion: effect(T) = sum_{U subset T} (-1)^{|T|-|U|} avg(U).
  std::vector<Eigen::VectorXd> effect(nsub);
  for (int mask = 0; mask < nsub; ++mask) {
    effect[mask] = Eigen::VectorXd::Zero(marginal_size(mask));
    std::vector<int> mi(d, 0);
    const int bits = __builtin_popcount(static_cast<unsigned>(mask));
    for (std::int64_t cell = 0; cell < effect[mask].size(); ++cell) {
      // Decode the cell into a multi-index over mask axes (row-major).
      std::int64_t rest = cell;
      for (int k = d - 1; k >= 0; --k)
        if (mask & (1 << k)) {
          mi[k] = static_cast<int>(rest % grid.size(k));
          rest /= grid.size(k);
        }
      double acc = 0.0;
      for (int sub = mask;; sub = (sub - 1) & mask) {
        const int sign = ((bits - __builtin_popcount(static_cast<unsigned>(sub))) % 2) ? -1 : 1;
        acc += sign * avg[sub][sub_index(sub, mi)];
        if (sub == 0) break;
      }
      effect[mask][cell] = acc;
    }
  }

  AnovaDecomposition out;
  out.constant = avg[0][0];
  out.total_mean_square = values.squaredNorm() / static_cast<double>(grid.size());
  std::vector<int> order(nsub);
  for (int i = 0; i < nsub; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const int pa = __builtin_popcount(static_cast<unsigned>(a));
    const int pb = __builtin_popcount(static_cast<unsigned>(b));
    if (pa != pb) return pa < pb;
    // Lexicographic by axis list: lower axes first -> compare bit-reversed.
    for (int k = 0; k < d; ++k) {
      const bool ia = a & (1 << k), ib = b & (1 << k);
      if (ia != ib) return ia;
    }
    return false;
  });
  for (int mask : order) {
    AnovaComponent comp;
    for (int k = 0; k < d; ++k)
      if (mask & (1 << k)) comp.axes.push_back(k);
    comp.values = effect[mask];
    comp.mean_square = effect[mask].squaredNorm() / static_cast<double>(effect[mask].size());
    out.components.push_back(std::move(comp));
  }
  return out;
}

}  // namespace penadd
