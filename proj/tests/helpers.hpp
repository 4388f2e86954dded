#pragma once

#include "penadd/additive.hpp"
#include "penadd/kernel.hpp"
#include "penadd/rng.hpp"
#include "penadd/types.hpp"

#include <Eigen/Dense>

namespace penadd::testing {

// Uniform design on [0,1]^d with smooth responses plus noise.
inline Dataset random_dataset(std::uint64_t seed, int n, int d, double noise = 1.0) {
  RandomStream xs(seed, 100), ys(seed, 101);
  Dataset data;
  data.X.resize(n, d);
  data.Y.resize(n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
      data.X(i, k) = xs.uniform();
      s += std::sin(3.0 * data.X(i, k)) + data.X(i, k);
    }
    data.Y[i] = 2.0 + s + noise * ys.normal();
  }
  return data;
}

inline Eigen::VectorXd flatten(const ParamField& f) {
  const int p = static_cast<int>(f.beta.cols());
  Eigen::VectorXd v(f.beta.size());
  for (std::int64_t j = 0; j < f.beta.rows(); ++j)
    for (int l = 0; l < p; ++l) v[j * p + l] = f.beta(j, l);
  return v;
}

inline ParamField unflatten(const Grid& grid, int d, const Eigen::VectorXd& v) {
  ParamField f = ParamField::zero(grid, d);
  const int p = d + 1;
  for (std::int64_t j = 0; j < grid.size(); ++j)
    for (int l = 0; l < p; ++l) f.beta(j, l) = v[j * p + l];
  return f;
}

// Dense Z built column by column from the matrix-free operator.
inline Eigen::MatrixXd dense_Z(const Grid& grid, int d) {
  const std::int64_t cols = grid.size() * (d + 1);
  Eigen::MatrixXd Z(2 * grid.node_sum(), cols);
  for (std::int64_t q = 0; q < cols; ++q) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(cols);
    e[q] = 1.0;
    Z.col(q) = apply_Z(unflatten(grid, d, e)).coords;
  }
  return Z;
}

// Dense assembly of the penalized normal equations (S + R(I - P_add)) x = L.
inline Eigen::MatrixXd dense_system(const MomentField& moments, double R) {
  const int p = moments.d + 1;
  const std::int64_t dim = moments.grid.size() * p;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dim, dim);
  for (std::int64_t j = 0; j < moments.grid.size(); ++j)
    M.block(j * p, j * p, p, p) = moments.S_at(j);
  const Eigen::MatrixXd Z = dense_Z(moments.grid, moments.d);
  M += R * (Eigen::MatrixXd::Identity(dim, dim) - Z.transpose() * Z);
  return M;
}

inline Eigen::VectorXd dense_L(const MomentField& moments) {
  const int p = moments.d + 1;
  Eigen::VectorXd L(moments.grid.size() * p);
  for (std::int64_t j = 0; j < moments.grid.size(); ++j)
    L.segment(j * p, p) = moments.L_at(j);
  return L;
}

// Penalized objective by direct loops: sum_j SSR + R ||(I - P_add) beta||^2.
inline double objective(const Dataset& data, const Grid& grid, const BandwidthSpec& bw,
                        double R, const ParamField& beta,
                        BoundaryPolicy policy = BoundaryPolicy::renormalize) {
  const int d = data.d();
  double obj = 0.0;
  for (std::int64_t j = 0; j < grid.size(); ++j) {
    const Eigen::VectorXd x = grid.node_coords(j);
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      const double w = boundary_weight(data.X.row(i).transpose(), x, bw, policy);
      if (w == 0.0) continue;
      double pred = beta.beta(j, 0);
      for (int k = 0; k < d; ++k)
        pred += beta.beta(j, k + 1) * (data.X(i, k) - x[k]) / bw.h[k];
      const double r = data.Y[i] - pred;
      obj += r * r * w / static_cast<double>(data.n());
    }
  }
  const ParamField proj = project_additive(beta);
  obj += R * (beta.beta - proj.beta).squaredNorm();
  return obj;
}

// Independent scalar-loop oracle for the moment definitions. The per-axis
// normalization is integrated by Simpson over the clipped support (the
// integrand is a quadratic there, so the rule is exact).
inline double oracle_axis_norm(double X, double h) {
  const double lo = std::max(0.0, X - h);
  const double hi = std::min(1.0, X + h);
  if (hi <= lo) return 0.0;
  const int steps = 64;
  const double dx = (hi - lo) / steps;
  auto f = [&](double s) { return epanechnikov((X - s) / h) / h; };
  double acc = f(lo) + f(hi);
  for (int i = 1; i < steps; ++i) acc += f(lo + i * dx) * (i % 2 ? 4.0 : 2.0);
  return acc * dx / 3.0;
}

inline double oracle_weight(const Eigen::VectorXd& X, const Eigen::VectorXd& x,
                            const BandwidthSpec& bw) {
  double w = 1.0;
  for (int k = 0; k < X.size(); ++k) {
    const double c = oracle_axis_norm(X[k], bw.h[k]);
    w *= epanechnikov((X[k] - x[k]) / bw.h[k]) / (bw.h[k] * c);
  }
  return w;
}

inline void oracle_moments(const Dataset& data, const Eigen::VectorXd& x,
                           const BandwidthSpec& bw, Eigen::MatrixXd& S, Eigen::VectorXd& L) {
  const int d = data.d();
  const int p = d + 1;
  S = Eigen::MatrixXd::Zero(p, p);
  L = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double w = oracle_weight(data.X.row(i).transpose(), x, bw);
    if (w == 0.0) continue;
    Eigen::VectorXd z(p);
    z[0] = 1.0;
    for (int k = 0; k < d; ++k) z[k + 1] = (data.X(i, k) - x[k]) / bw.h[k];
    S += (w / data.n()) * z * z.transpose();
    L += (w / data.n()) * data.Y[i] * z;
  }
}

}  // namespace penadd::testing
