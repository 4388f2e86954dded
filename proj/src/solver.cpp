#include "penadd/solver.hpp"

#include "penadd/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace penadd {

BlockDiagonalA build_A(const MomentField& moments, double R) {
  if (!(R > 0.0)) throw std::domain_error("build_A requires finite R > 0");
  const int p = moments.d + 1;
  const std::int64_t m = moments.grid.size();

  BlockDiagonalA out;
  out.grid = moments.grid;
  out.d = moments.d;
  out.R = R;
  out.A.resize(p * p, m);
  out.ImA.resize(p * p, m);
  out.AS.resize(p * p, m);

  parallel_for(m, [&](std::int64_t j) {
    const auto S = moments.S_at(j);
    SmallMatrix M = S;
    M.diagonal().array() += R;
    Eigen::Map<Eigen::MatrixXd> Aj(out.A.col(j).data(), p, p);
    Eigen::Map<Eigen::MatrixXd> ImAj(out.ImA.col(j).data(), p, p);
    Eigen::Map<Eigen::MatrixXd> ASj(out.AS.col(j).data(), p, p);
    const SmallMatrix Ablock = M.ldlt().solve(SmallMatrix(R * SmallMatrix::Identity(p, p)));
    // Symmetrize: the solve is exact only up to roundoff.
    Aj = 0.5 * (Ablock + Ablock.transpose());
    ImAj = -Aj;
    ImAj.diagonal().array() += 1.0;
    const SmallMatrix ASblock = Aj * S;
    ASj = 0.5 * (ASblock + ASblock.transpose());
  });
  return out;
}

ReducedSystem::ReducedSystem(Eigen::MatrixXd lambda, double pinv_cutoff)
    : dim_(lambda.rows()), cutoff_(pinv_cutoff) {
  llt_.compute(lambda);
  if (llt_.info() == Eigen::Success) {
    const auto& fac = llt_.matrixLLT();
    double lo = fac(0, 0), hi = fac(0, 0);
    for (Eigen::Index i = 1; i < dim_; ++i) {
      lo = std::min(lo, fac(i, i));
      hi = std::max(hi, fac(i, i));
    }
    if (lo > 0.0 && lo * lo > cutoff_ * hi * hi) {
      spd_ = true;
      return;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lambda);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition of reduced system failed");
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double lmax = std::max(ev.maxCoeff(), 0.0);
  const double cut = cutoff_ * std::max(lmax, 1e-300);
  if (ev.minCoeff() < -cut)
    throw DegenerateFitError("reduced system is numerically indefinite", ev.minCoeff());
  evecs_ = eig.eigenvectors();
  inv_evals_.resize(dim_);
  for (Eigen::Index i = 0; i < dim_; ++i)
    inv_evals_[i] = ev[i] > cut ? 1.0 / ev[i] : 0.0;
}

Eigen::VectorXd ReducedSystem::solve(const Eigen::VectorXd& rhs) const {
  if (spd_) return llt_.solve(rhs);
  return evecs_ * (inv_evals_.asDiagonal() * (evecs_.transpose() * rhs));
}

void ReducedSystem::solve_in_place(Eigen::Ref<Eigen::VectorXd> rhs) const {
  if (spd_) {
    llt_.solveInPlace(rhs);
    return;
  }
  rhs = evecs_ * (inv_evals_.asDiagonal() * (evecs_.transpose() * rhs));
}

const Eigen::MatrixXd& ReducedSystem::inverse() const {
  if (!have_inverse_) {
    if (spd_) {
      inverse_ = llt_.solve(Eigen::MatrixXd::Identity(dim_, dim_));
    } else {
      inverse_ = evecs_ * inv_evals_.asDiagonal() * evecs_.transpose();
    }
    have_inverse_ = true;
  }
  return inverse_;
}

Eigen::MatrixXd small_R_lambda(const BlockDiagonalA& A) {
  Eigen::MatrixXd lambda =
      -z_block_gram(A.grid, [&](std::int64_t j) { return SmallMatrix(A.A_at(j)); });
  lambda.diagonal().array() += 1.0;
  return lambda;
}

Eigen::MatrixXd large_R_lambda(const BlockDiagonalA& A) {
  Eigen::MatrixXd lambda =
      z_block_gram(A.grid, [&](std::int64_t j) { return SmallMatrix(A.AS_at(j)); });
  lambda -= zzt_matrix(A.grid);
  lambda.diagonal().array() += 1.0;
  return lambda;
}

Eigen::MatrixXd ridge_data_term(const MomentField& moments, const BlockDiagonalA& A) {
  const int p = moments.d + 1;
  Eigen::MatrixXd field(p, moments.grid.size());
  const double inv_R = 1.0 / A.R;
  for (std::int64_t j = 0; j < moments.grid.size(); ++j)
    field.col(j).noalias() = inv_R * (A.A_at(j) * moments.L_at(j));
  return field;
}

ParamField beta_from_gamma(const BlockDiagonalA& A, const AdditiveCoords& gamma,
                           const Eigen::MatrixXd& data_field) {
  ParamField zt = apply_Zt(gamma);
  ParamField beta = ParamField::zero(A.grid, A.d);
  for (std::int64_t j = 0; j < A.grid.size(); ++j) {
    beta.beta.row(j).noalias() =
        (A.A_at(j) * zt.beta.row(j).transpose() + data_field.col(j)).transpose();
  }
  return beta;
}

namespace {

ParamField field_from_columns(const Grid& grid, int d, const Eigen::MatrixXd& cols) {
  ParamField f = ParamField::zero(grid, d);
  f.beta = cols.transpose();
  return f;
}

// Z applied to a per-node matrix-vector product: Z (B^(j) v^(j)).
AdditiveCoords apply_z_blocks(const Grid& grid, int d, const Eigen::MatrixXd& blocks,
                              const ParamField& v) {
  const int p = d + 1;
  ParamField tmp = ParamField::zero(grid, d);
  for (std::int64_t j = 0; j < grid.size(); ++j) {
    Eigen::Map<const Eigen::MatrixXd> B(blocks.col(j).data(), p, p);
    tmp.beta.row(j).noalias() = v.beta.row(j) * B.transpose();
  }
  return apply_Z(tmp);
}

}  // namespace

SolveResult solve_direct(const MomentField& moments, double R, const FitConfig& cfg,
                         DirectForm form) {
  if (!(R > 0.0)) throw std::domain_error("solve_direct requires finite R > 0");
  if (form == DirectForm::automatic)
    form = R < cfg.large_R_threshold ? DirectForm::small_R : DirectForm::large_R;

  const BlockDiagonalA A = build_A(moments, R);
  const Eigen::MatrixXd data_field = ridge_data_term(moments, A);

  Eigen::MatrixXd lambda;
  Eigen::VectorXd rhs;
  if (form == DirectForm::small_R) {
    lambda = small_R_lambda(A);
    rhs = apply_Z(field_from_columns(moments.grid, moments.d, data_field)).coords;
  } else {
    lambda = large_R_lambda(A);
    // rhs = Z A_R L, the R-rescaled data term.
    Eigen::MatrixXd AL(moments.d + 1, moments.grid.size());
    for (std::int64_t j = 0; j < moments.grid.size(); ++j)
      AL.col(j).noalias() = A.A_at(j) * moments.L_at(j);
    rhs = apply_Z(field_from_columns(moments.grid, moments.d, AL)).coords;
  }

  ReducedSystem reduced(std::move(lambda), cfg.pinv_cutoff);
  SolveResult out;
  out.gamma = AdditiveCoords{moments.grid, reduced.solve(rhs)};
  out.beta = beta_from_gamma(A, out.gamma, data_field);
  out.pseudo_inverse_used = reduced.pseudo_inverse_used();
  return out;
}

SolveResult solve_additive_direct(const MomentField& moments, const FitConfig& cfg) {
  Eigen::MatrixXd lambda =
      z_block_gram(moments.grid, [&](std::int64_t j) { return SmallMatrix(moments.S_at(j)); });
  lambda -= zzt_matrix(moments.grid);
  lambda.diagonal().array() += 1.0;
  const Eigen::VectorXd rhs =
      apply_Z(field_from_columns(moments.grid, moments.d, moments.L)).coords;

  ReducedSystem reduced(std::move(lambda), cfg.pinv_cutoff);
  SolveResult out;
  out.gamma = AdditiveCoords{moments.grid, reduced.solve(rhs)};
  out.beta = apply_Zt(out.gamma);
  out.pseudo_inverse_used = reduced.pseudo_inverse_used();
  return out;
}

SmallVector pinv_solve(const SmallMatrix& S, const SmallVector& b, double cutoff) {
  Eigen::SelfAdjointEigenSolver<SmallMatrix> eig(S);
  const auto& ev = eig.eigenvalues();
  const double lmax = ev.maxCoeff();
  SmallVector proj = eig.eigenvectors().transpose() * b;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    proj[i] = ev[i] > cutoff * std::max(lmax, 0.0) ? proj[i] / ev[i] : 0.0;
  return eig.eigenvectors() * proj;
}

double max_node_eigenvalue(const MomentField& moments) {
  double lmax = 0.0;
  for (std::int64_t j = 0; j < moments.grid.size(); ++j) {
    Eigen::SelfAdjointEigenSolver<SmallMatrix> eig(SmallMatrix(moments.S_at(j)),
                                                   Eigen::EigenvaluesOnly);
    lmax = std::max(lmax, eig.eigenvalues().maxCoeff());
  }
  return lmax;
}

SolveResult solve_iterative(const MomentField& moments, Penalty R, const FitConfig& cfg) {
  const Grid& grid = moments.grid;
  const int d = moments.d;
  const bool infinite = R.is_infinite();
  if (!infinite && !(R.value() > 0.0))
    throw std::domain_error("solve_iterative requires R > 0 (possibly infinite)");
  const bool large = infinite || R.value() >= cfg.large_R_threshold;

  SolveResult out;
  out.gamma = AdditiveCoords::zero(grid);

  std::optional<BlockDiagonalA> A;
  Eigen::MatrixXd data_field;   // (S+RI)^{-1} L (finite R)
  Eigen::MatrixXd iter_blocks;  // per-node matrix applied inside Z . Z^T
  AdditiveCoords data_term = AdditiveCoords::zero(grid);
  const int p = d + 1;

  if (!infinite) {
    A.emplace(build_A(moments, R.value()));
    data_field = ridge_data_term(moments, *A);
  }

  if (!large) {
    iter_blocks = A->A;
    data_term = apply_Z(field_from_columns(grid, d, data_field));
  } else {
    // Damped scheme: gamma <- Z (I - alpha A_R S) Z^T gamma + alpha Z A_R L,
    // with alpha chosen so that alpha S < I.
    const double lmax = max_node_eigenvalue(moments);
    if (lmax == 0.0) {
      // No observation reaches any node; the zero field solves the system.
      out.beta = ParamField::zero(grid, d);
      return out;
    }
    const double alpha = 0.9 / lmax;
    iter_blocks.resize(p * p, grid.size());
    Eigen::MatrixXd AL(p, grid.size());
    for (std::int64_t j = 0; j < grid.size(); ++j) {
      Eigen::Map<Eigen::MatrixXd> T(iter_blocks.col(j).data(), p, p);
      if (infinite) {
        T = -alpha * moments.S_at(j);
        AL.col(j) = alpha * moments.L_at(j);
      } else {
        T = -alpha * A->AS_at(j);
        AL.col(j).noalias() = alpha * (A->A_at(j) * moments.L_at(j));
      }
      T.diagonal().array() += 1.0;
    }
    data_term = apply_Z(field_from_columns(grid, d, AL));
  }

  // Stop on || gamma^[a+1] - gamma^[a] || <= tolerance; the recorded
  // increments are the squared norms (the convergence diagnostic).
  const double tol_sq = cfg.iteration_tolerance * cfg.iteration_tolerance;
  out.increments.reserve(32);
  for (int it = 0; it < cfg.max_iterations; ++it) {
    ParamField ztg = apply_Zt(out.gamma);
    AdditiveCoords next = apply_z_blocks(grid, d, iter_blocks, ztg);
    next.coords += data_term.coords;
    const double incr = (next.coords - out.gamma.coords).squaredNorm();
    out.gamma = std::move(next);
    out.iterations = it + 1;
    out.increments.push_back(incr);
    if (incr <= tol_sq) {
      if (infinite) {
        out.beta = apply_Zt(out.gamma);
      } else {
        out.beta = beta_from_gamma(*A, out.gamma, data_field);
      }
      return out;
    }
  }
  throw NonConvergenceError("gamma iteration did not converge", out.iterations,
                            out.increments.empty() ? 0.0 : out.increments.back());
}

double residual_norm(const MomentField& moments, Penalty R, const ParamField& beta) {
  const Grid& grid = moments.grid;
  const int d = moments.d;
  Eigen::MatrixXd Sb(d + 1, grid.size());
  for (std::int64_t j = 0; j < grid.size(); ++j)
    Sb.col(j).noalias() = moments.S_at(j) * beta.beta.row(j).transpose();

  if (R.is_infinite()) {
    const AdditiveCoords zSb = apply_Z(field_from_columns(grid, d, Sb));
    const AdditiveCoords zL = apply_Z(field_from_columns(grid, d, moments.L));
    const ParamField proj = project_additive(beta);
    const double nonadd = (beta.beta - proj.beta).norm();
    return std::max((zSb.coords - zL.coords).norm() / std::max(1.0, zL.coords.norm()),
                    nonadd / std::max(1.0, beta.beta.norm()));
  }

  Eigen::MatrixXd res = Sb - moments.L;
  if (!R.is_zero()) {
    const ParamField proj = project_additive(beta);
    res += R.value() * (beta.beta - proj.beta).transpose();
  }
  return res.norm() / std::max(1.0, moments.L.norm());
}

}  // namespace penadd
