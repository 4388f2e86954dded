#include "penadd/kernel.hpp"

#include "penadd/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace penadd {

double epanechnikov(double u) {
  const double a = std::abs(u);
  return a >= 1.0 ? 0.0 : 0.75 * (1.0 - u * u);
}

namespace {
// Antiderivative of the kernel: F(t) = int_{-1}^{t} K(u) du for t in [-1,1].
double kernel_cdf(double t) {
  t = std::clamp(t, -1.0, 1.0);
  return 0.5 + 0.75 * t - 0.25 * t * t * t;
}
}  // namespace

double epanechnikov_mass(double a, double b) {
  if (b <= a) return 0.0;
  return kernel_cdf(b) - kernel_cdf(a);
}

double effective_bandwidth(double x, double h, BoundaryPolicy policy, double inflation) {
  if (policy == BoundaryPolicy::renormalize) return h;
  const double dist = std::min({x, 1.0 - x, h});
  return h * (1.0 + inflation * (1.0 - dist / h));
}

double boundary_normalization(double X, double h, BoundaryPolicy policy, double inflation) {
  if (policy == BoundaryPolicy::renormalize) {
    // int_0^1 K((X-s)/h)/h ds = mass of K over [(X-1)/h, X/h]
    return epanechnikov_mass((X - 1.0) / h, X / h);
  }
  // Effective bandwidth varies with the output point; integrate numerically.
  const double reach = h * (1.0 + inflation);
  const double lo = std::max(0.0, X - reach);
  const double hi = std::min(1.0, X + reach);
  if (hi <= lo) return 0.0;
  constexpr int kIntervals = 512;  // composite Simpson, even count
  const double step = (hi - lo) / kIntervals;
  auto f = [&](double s) {
    const double he = effective_bandwidth(s, h, BoundaryPolicy::inflate, inflation);
    return epanechnikov((X - s) / he) / he;
  };
  double acc = f(lo) + f(hi);
  for (int i = 1; i < kIntervals; ++i) acc += f(lo + i * step) * (i % 2 ? 4.0 : 2.0);
  return acc * step / 3.0;
}

double boundary_weight(const Eigen::VectorXd& X_i, const Eigen::VectorXd& x,
                       const BandwidthSpec& bw, BoundaryPolicy policy, double inflation) {
  double w = 1.0;
  for (int k = 0; k < X_i.size(); ++k) {
    const double he = effective_bandwidth(x[k], bw.h[k], policy, inflation);
    const double kv = epanechnikov((X_i[k] - x[k]) / he);
    if (kv == 0.0) return 0.0;
    w *= kv / (he * boundary_normalization(X_i[k], bw.h[k], policy, inflation));
  }
  return w;
}

MomentAssembler::MomentAssembler(const Dataset& data, const BandwidthSpec& bw,
                                 BoundaryPolicy policy, double inflation)
    : data_(&data), bw_(bw), policy_(policy), inflation_(inflation) {
  data.check(true);
  bw.check();
  if (bw.h.size() != data.d())
    throw std::invalid_argument("bandwidth dimension does not match dataset");
  const Eigen::Index n = data.n();
  const int d = data.d();
  norm_.resize(n, d);
  for (int k = 0; k < d; ++k)
    for (Eigen::Index i = 0; i < n; ++i)
      norm_(i, k) = boundary_normalization(data.X(i, k), bw.h[k], policy_, inflation_);
}

double MomentAssembler::axis_weight(Eigen::Index i, int axis, double x) const {
  const double he = effective_bandwidth(x, bw_.h[axis], policy_, inflation_);
  const double kv = epanechnikov((data_->X(i, axis) - x) / he);
  return kv == 0.0 ? 0.0 : kv / (he * norm_(i, axis));
}

double MomentAssembler::weight(Eigen::Index i, const Eigen::VectorXd& x) const {
  double w = 1.0;
  for (int k = 0; k < data_->d(); ++k) {
    w *= axis_weight(i, k, x[k]);
    if (w == 0.0) return 0.0;
  }
  return w;
}

void MomentAssembler::support_range(Eigen::Index i, const Grid& grid, int axis,
                                    int& lo, int& hi) const {
  const double reach =
      bw_.h[axis] * (policy_ == BoundaryPolicy::inflate ? 1.0 + inflation_ : 1.0);
  const double X = data_->X(i, axis);
  const int mk = grid.size(axis);
  lo = std::max(0, static_cast<int>(std::ceil((X - reach) * (mk - 1))));
  hi = std::min(mk - 1, static_cast<int>(std::floor((X + reach) * (mk - 1))));
}

void MomentAssembler::for_each_support_node(
    Eigen::Index i, const Grid& grid,
    const std::function<void(std::int64_t, std::span<const int>, double,
                             const SmallVector&)>& fn) const {
  const int d = data_->d();
  std::vector<int> lo(d), hi(d), mi(d);
  for (int k = 0; k < d; ++k) {
    support_range(i, grid, k, lo[k], hi[k]);
    if (lo[k] > hi[k]) return;
    mi[k] = lo[k];
  }
  const double inv_n = 1.0 / static_cast<double>(data_->n());
  SmallVector z(d + 1);
  for (;;) {
    double w = 1.0;
    for (int k = 0; w != 0.0 && k < d; ++k) w *= axis_weight(i, k, grid.node(k, mi[k]));
    if (w != 0.0) {
      z[0] = 1.0;
      for (int k = 0; k < d; ++k)
        z[k + 1] = (data_->X(i, k) - grid.node(k, mi[k])) / bw_.h[k];
      fn(grid.index(mi), mi, w * inv_n, z);
    }
    int k = d - 1;
    while (k >= 0 && mi[k] == hi[k]) {
      mi[k] = lo[k];
      --k;
    }
    if (k < 0) return;
    ++mi[k];
  }
}

MomentField MomentAssembler::assemble(const Grid& grid, int threads) const {
  const int d = data_->d();
  if (grid.dim() != d) throw std::invalid_argument("grid dimension does not match dataset");
  const int p = d + 1;
  const Eigen::Index n = data_->n();
  const std::int64_t m = grid.size();

  // Per-axis tables of normalized axis weights: node weight is a product of
  // d lookups, so assembly is O(n m) cheap operations.
  std::vector<Eigen::MatrixXd> table(d);
  for (int k = 0; k < d; ++k) {
    table[k].resize(n, grid.size(k));
    for (int v = 0; v < grid.size(k); ++v) {
      const double x = grid.node(k, v);
      for (Eigen::Index i = 0; i < n; ++i) table[k](i, v) = axis_weight(i, k, x);
    }
  }

  MomentField field;
  field.grid = grid;
  field.d = d;
  field.S = Eigen::MatrixXd::Zero(p * p, m);
  field.L = Eigen::MatrixXd::Zero(p, m);

  const double inv_n = 1.0 / static_cast<double>(n);
  parallel_for(
      m,
      [&](std::int64_t j) {
        std::vector<int> mi(d);
        grid.multi_index(j, mi);
        Eigen::Map<Eigen::MatrixXd> Sj(field.S.col(j).data(), p, p);
        Eigen::Map<Eigen::VectorXd> Lj(field.L.col(j).data(), p);
        SmallVector z(p);
        for (Eigen::Index i = 0; i < n; ++i) {
          double w = table[0](i, mi[0]);
          for (int k = 1; w != 0.0 && k < d; ++k) w *= table[k](i, mi[k]);
          if (w == 0.0) continue;
          z[0] = 1.0;
          for (int k = 0; k < d; ++k)
            z[k + 1] = (data_->X(i, k) - grid.node(k, mi[k])) / bw_.h[k];
          const double wi = w * inv_n;
          Sj.selfadjointView<Eigen::Lower>().rankUpdate(z, wi);
          Lj += (wi * data_->Y[i]) * z;
        }
        Sj.triangularView<Eigen::StrictlyUpper>() = Sj.transpose();
      },
      threads);
  return field;
}

PointMoments MomentAssembler::at_point(const Eigen::VectorXd& x) const {
  const int p = data_->d() + 1;
  PointMoments pm;
  pm.S = SmallMatrix::Zero(p, p);
  pm.L = SmallVector::Zero(p);
  for_each_contribution(x, [&](Eigen::Index i, double w, const SmallVector& z) {
    pm.S.noalias() += w * (z * z.transpose());
    pm.L += (w * data_->Y[i]) * z;
  });
  return pm;
}

void MomentAssembler::for_each_contribution(
    const Eigen::VectorXd& x,
    const std::function<void(Eigen::Index, double, const SmallVector&)>& fn) const {
  const int d = data_->d();
  const double inv_n = 1.0 / static_cast<double>(data_->n());
  SmallVector z(d + 1);
  for (Eigen::Index i = 0; i < data_->n(); ++i) {
    double w = 1.0;
    for (int k = 0; w != 0.0 && k < d; ++k) w *= axis_weight(i, k, x[k]);
    if (w == 0.0) continue;
    z[0] = 1.0;
    for (int k = 0; k < d; ++k) z[k + 1] = (data_->X(i, k) - x[k]) / bw_.h[k];
    fn(i, w * inv_n, z);
  }
}

MomentField assemble_moments(const Dataset& data, const Grid& grid, const BandwidthSpec& bw,
                             BoundaryPolicy policy, double inflation) {
  return MomentAssembler(data, bw, policy, inflation).assemble(grid);
}

PointMoments moments_at_point(const Dataset& data, const Eigen::VectorXd& x,
                              const BandwidthSpec& bw, BoundaryPolicy policy,
                              double inflation) {
  return MomentAssembler(data, bw, policy, inflation).at_point(x);
}

}  // namespace penadd
