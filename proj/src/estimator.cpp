#include "penadd/estimator.hpp"

#include "penadd/parallel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>

namespace penadd {

namespace {

// Per-axis piecewise-linear weight: cell index and fraction for x in [0,1].
inline void locate(const Grid& grid, int axis, double x, int& i0, double& t) {
  const double pos = x * (grid.size(axis) - 1);
  i0 = std::clamp(static_cast<int>(std::floor(pos)), 0, grid.size(axis) - 2);
  t = pos - i0;
}

FitResult make_result(ParamField beta, AdditiveCoords gamma, const MomentField& moments,
                      const FitConfig& cfg, int iterations, std::vector<double> increments,
                      bool pinv_used) {
  FitResult r;
  r.beta = std::move(beta);
  r.additive_part = project_additive(r.beta);
  r.nonadditive_part = ParamField{r.beta.grid, r.beta.beta - r.additive_part.beta};
  r.gamma = std::move(gamma);
  r.config = cfg;
  r.diagnostics.iterations = iterations;
  r.diagnostics.increments = std::move(increments);
  r.diagnostics.pseudo_inverse_used = pinv_used;
  r.diagnostics.residual = residual_norm(moments, cfg.R, r.beta);
  return r;
}

}  // namespace

FitResult fit(const Dataset& data, const Grid& grid, const FitConfig& cfg) {
  cfg.check();
  data.check(cfg.allow_high_dim);
  if (grid.dim() != data.d())
    throw std::invalid_argument("grid dimension does not match dataset");
  const MomentField moments =
      assemble_moments(data, grid, cfg.bandwidths, cfg.boundary, cfg.boundary_inflation);
  return fit(moments, cfg);
}

FitResult fit(const MomentField& moments, const FitConfig& cfg) {
  cfg.check();
  const Grid& grid = moments.grid;
  const int d = moments.d;

  if (cfg.R.is_zero()) {
    // The penalty term vanishes at R = 0: per-node local linear solves, with the
    // pseudo-inverse in sparse regions.
    ParamField beta = ParamField::zero(grid, d);
    for (std::int64_t j = 0; j < grid.size(); ++j) {
      beta.beta.row(j) =
          pinv_solve(SmallMatrix(moments.S_at(j)), SmallVector(moments.L_at(j)),
                     cfg.pinv_cutoff)
              .transpose();
    }
    AdditiveCoords gamma = apply_Z(beta);
    return make_result(std::move(beta), std::move(gamma), moments, cfg, 0, {}, true);
  }

  SolveResult sol;
  if (cfg.R.is_infinite()) {
    sol = cfg.solver == SolverKind::direct ? solve_additive_direct(moments, cfg)
                                           : solve_iterative(moments, cfg.R, cfg);
  } else {
    sol = cfg.solver == SolverKind::direct ? solve_direct(moments, cfg.R.value(), cfg)
                                           : solve_iterative(moments, cfg.R, cfg);
  }
  return make_result(std::move(sol.beta), std::move(sol.gamma), moments, cfg, sol.iterations,
                     std::move(sol.increments), sol.pseudo_inverse_used);
}

SmallVector interpolate_additive(const AdditiveCoords& gamma, const Eigen::VectorXd& x) {
  const Grid& grid = gamma.grid;
  const int d = grid.dim();
  SmallVector out = SmallVector::Zero(d + 1);
  for (int k = 0; k < d; ++k) {
    const double s =
        std::sqrt(static_cast<double>(grid.size(k)) / static_cast<double>(grid.size()));
    int i0;
    double t;
    locate(grid, k, x[k], i0, t);
    const auto ib = gamma.intercept_block(k);
    const auto sb = gamma.slope_block(k);
    out[0] += s * ((1.0 - t) * ib[i0] + t * ib[i0 + 1]);
    out[k + 1] = s * ((1.0 - t) * sb[i0] + t * sb[i0 + 1]);
  }
  return out;
}

double pointwise_compromise_check(const FitResult& result, const MomentField& moments) {
  if (result.config.R.is_infinite() || result.config.R.is_zero())
    throw std::invalid_argument("pointwise compromise check needs finite R > 0");
  const double R = result.config.R.value();
  double worst = 0.0;
  for (std::int64_t j = 0; j < moments.grid.size(); ++j) {
    SmallMatrix M = moments.S_at(j);
    M.diagonal().array() += R;
    const SmallVector rhs =
        R * result.additive_part.beta.row(j).transpose() + moments.L_at(j);
    const SmallVector expect = M.ldlt().solve(rhs);
    const double dev =
        (expect - SmallVector(result.beta.beta.row(j).transpose())).cwiseAbs().maxCoeff();
    worst = std::max(worst, dev);
  }
  return worst;
}

Predictor::Predictor(const FitResult& result, const Dataset& data)
    : result_(&result),
      data_(&data),
      assembler_(data, result.config.bandwidths, result.config.boundary,
                 result.config.boundary_inflation) {}

double Predictor::at(const Eigen::VectorXd& x) const {
  const FitConfig& cfg = result_->config;
  const SmallVector add = interpolate_additive(result_->gamma, x);
  if (cfg.R.is_infinite()) return add[0];

  const PointMoments pm = assembler_.at_point(x);
  if (cfg.R.is_zero()) return pinv_solve(pm.S, pm.L, cfg.pinv_cutoff)[0];

  const double R = cfg.R.value();
  SmallMatrix M = pm.S;
  M.diagonal().array() += R;
  const SmallVector rhs = pm.L + R * add;
  return M.ldlt().solve(rhs)[0];
}

Eigen::VectorXd Predictor::at_design_points() const {
  Eigen::VectorXd out(data_->n());
  for (Eigen::Index i = 0; i < data_->n(); ++i) out[i] = at(data_->X.row(i).transpose());
  return out;
}

double predict_at(const FitResult& result, const Dataset& data, const Eigen::VectorXd& x) {
  return Predictor(result, data).at(x);
}

HatMatrix hat_matrix(const Dataset& data, const Grid& grid, const FitConfig& cfg) {
  cfg.check();
  data.check(cfg.allow_high_dim);
  const Eigen::Index n = data.n();
  const int d = data.d();
  const int p = d + 1;
  const MomentAssembler assembler(data, cfg.bandwidths, cfg.boundary, cfg.boundary_inflation);
  const MomentField moments = assembler.assemble(grid);

  HatMatrix hat;
  hat.M.resize(n, n);

  // Point-side precomputation shared by all columns: the intercept row of
  // (S(X_i) + R I)^{-1} (finite R) or of pinv(S(X_i)) (R = 0).
  Eigen::MatrixXd w_rows(n, p);
  const bool infinite = cfg.R.is_infinite();
  const bool zero = cfg.R.is_zero();
  if (!infinite) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const PointMoments pm = assembler.at_point(data.X.row(i).transpose());
      if (zero) {
        SmallMatrix Sp = pm.S;
        Eigen::SelfAdjointEigenSolver<SmallMatrix> eig(Sp);
        const auto& ev = eig.eigenvalues();
        const double lmax = std::max(ev.maxCoeff(), 0.0);
        SmallVector inv(p);
        for (int q = 0; q < p; ++q)
          inv[q] = ev[q] > cfg.pinv_cutoff * lmax ? 1.0 / ev[q] : 0.0;
        w_rows.row(i) =
            (eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose()).row(0);
      } else {
        SmallMatrix M = pm.S;
        M.diagonal().array() += cfg.R.value();
        SmallVector e0 = SmallVector::Zero(p);
        e0[0] = 1.0;
        w_rows.row(i) = M.ldlt().solve(e0).transpose();
      }
    }
  }

  // Grid-side factorization shared by all columns (independent of Y).
  std::optional<BlockDiagonalA> A;
  std::optional<ReducedSystem> reduced;
  if (infinite) {
    Eigen::MatrixXd lambda =
        z_block_gram(grid, [&](std::int64_t j) { return SmallMatrix(moments.S_at(j)); });
    lambda -= zzt_matrix(grid);
    lambda.diagonal().array() += 1.0;
    reduced.emplace(std::move(lambda), cfg.pinv_cutoff);
  } else if (!zero) {
    A.emplace(build_A(moments, cfg.R.value()));
    Eigen::MatrixXd lambda = cfg.R.value() < cfg.large_R_threshold ? small_R_lambda(*A)
                                                                   : large_R_lambda(*A);
    reduced.emplace(std::move(lambda), cfg.pinv_cutoff);
  }
  const bool large_form = !infinite && !zero && cfg.R.value() >= cfg.large_R_threshold;

  parallel_for(n, [&](std::int64_t col) {
    Eigen::VectorXd gamma;
    if (!zero) {
      // Reduced right-hand side for Y = e_col: only support nodes contribute.
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2 * grid.node_sum());
      assembler.for_each_support_node(
          col, grid,
          [&](std::int64_t j, std::span<const int> mi, double w, const SmallVector& z) {
            SmallVector v(p);
            if (infinite) {
              v = w * z;
            } else if (large_form) {
              v.noalias() = A->A_at(j) * (w * z);
            } else {
              v.noalias() = A->A_at(j) * ((w / cfg.R.value()) * z);
            }
            scatter_node(grid, mi, v, rhs);
          });
      center_intercepts(grid, rhs);
      reduced->solve_in_place(rhs);
      gamma = std::move(rhs);
    }

    const AdditiveCoords gcoords{grid, gamma};
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = assembler.weight(col, data.X.row(i).transpose());
      double value = 0.0;
      if (infinite) {
        value = interpolate_additive(gcoords, data.X.row(i).transpose())[0];
      } else {
        if (w != 0.0) {
          SmallVector z(p);
          z[0] = 1.0;
          for (int k = 0; k < d; ++k)
            z[k + 1] = (data.X(col, k) - data.X(i, k)) / cfg.bandwidths.h[k];
          value = (w / static_cast<double>(n)) * w_rows.row(i).dot(z.transpose());
        }
        if (!zero) {
          const SmallVector add = interpolate_additive(gcoords, data.X.row(i).transpose());
          value += cfg.R.value() * w_rows.row(i).dot(add.transpose());
        }
      }
      hat.M(i, col) = value;
    }
  });

  hat.trace = hat.M.trace();
  return hat;
}

}  // namespace penadd
