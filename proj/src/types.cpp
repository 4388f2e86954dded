#include "penadd/types.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace penadd {

void Dataset::check(bool allow_high_dim) const {
  if (X.rows() == 0) throw std::invalid_argument("dataset is empty");
  if (Y.size() != X.rows())
    throw std::invalid_argument("response length does not match design rows");
  const int dmax = allow_high_dim ? kMaxParamDim - 1 : kDefaultMaxDim;
  if (d() < 1 || d() > dmax)
    throw std::invalid_argument("dimension d = " + std::to_string(d()) +
                                " outside supported range [1, " +
                                std::to_string(dmax) + "]");
  if ((X.array() < 0.0).any() || (X.array() > 1.0).any())
    throw std::invalid_argument("design coordinates must lie in [0,1]");
  if (!X.allFinite() || !Y.allFinite())
    throw std::invalid_argument("non-finite values in dataset");
}

Grid::Grid(std::vector<int> m_per_axis) : m_per_axis_(std::move(m_per_axis)) {
  if (m_per_axis_.empty()) throw std::invalid_argument("grid needs at least one axis");
  for (int mk : m_per_axis_)
    if (mk < 2) throw std::invalid_argument("grid axes need at least 2 nodes");
  const int d = dim();
  stride_.assign(d, 1);
  for (int k = d - 2; k >= 0; --k) stride_[k] = stride_[k + 1] * m_per_axis_[k + 1];
  m_ = stride_[0] * m_per_axis_[0];
  m_star_ = std::accumulate(m_per_axis_.begin(), m_per_axis_.end(), 0);
}

std::int64_t Grid::index(std::span<const int> multi_index) const {
  if (static_cast<int>(multi_index.size()) != dim())
    throw std::out_of_range("multi-index length does not match grid dimension");
  std::int64_t flat = 0;
  for (int k = 0; k < dim(); ++k) {
    if (multi_index[k] < 0 || multi_index[k] >= m_per_axis_[k])
      throw std::out_of_range("axis index out of range");
    flat += stride_[k] * multi_index[k];
  }
  return flat;
}

void Grid::multi_index(std::int64_t flat, std::span<int> out) const {
  if (flat < 0 || flat >= m_) throw std::out_of_range("flat index out of range");
  for (int k = 0; k < dim(); ++k) {
    out[k] = static_cast<int>(flat / stride_[k]);
    flat %= stride_[k];
  }
}

void Grid::advance(std::span<int> multi_index) const {
  for (int k = dim() - 1; k >= 0; --k) {
    if (++multi_index[k] < m_per_axis_[k]) return;
    multi_index[k] = 0;
  }
}

Eigen::VectorXd Grid::node_coords(std::int64_t flat) const {
  std::vector<int> mi(dim());
  multi_index(flat, mi);
  Eigen::VectorXd x(dim());
  for (int k = 0; k < dim(); ++k) x[k] = node(k, mi[k]);
  return x;
}

double BandwidthSpec::geometric_mean() const {
  return std::exp(h.array().log().mean());
}

void BandwidthSpec::check() const {
  if (h.size() == 0) throw std::invalid_argument("empty bandwidth vector");
  if (!(h.array() > 0.0).all()) throw std::invalid_argument("bandwidths must be positive");
}

Penalty Penalty::parse(const std::string& text) {
  if (text == "inf" || text == "Inf" || text == "infinity") return infinity();
  size_t pos = 0;
  const double v = std::stod(text, &pos);
  if (pos != text.size()) throw std::invalid_argument("cannot parse penalty '" + text + "'");
  return finite(v);
}

std::string Penalty::str() const {
  if (infinite_) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value_);
  return buf;
}

int AdditiveCoords::intercept_offset(int axis) const {
  int off = 0;
  for (int k = 0; k < axis; ++k) off += grid.size(k);
  return off;
}

void FitConfig::check() const {
  bandwidths.check();
  if (!(iteration_tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
  if (max_iterations < 1) throw std::invalid_argument("max_iterations must be positive");
  if (!(large_R_threshold > 0.0)) throw std::invalid_argument("large_R_threshold must be positive");
  if (!(pinv_cutoff > 0.0 && pinv_cutoff < 1.0))
    throw std::invalid_argument("pinv_cutoff must lie in (0,1)");
}

}  // namespace penadd
