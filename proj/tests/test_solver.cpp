#include "penadd/solver.hpp"

#include "helpers.hpp"
#include "penadd/estimator.hpp"

#include <doctest.h>

#include <Eigen/Dense>

using namespace penadd;
namespace pt = penadd::testing;

namespace {

struct Instance {
  Dataset data;
  Grid grid;
  BandwidthSpec bw;
  MomentField moments;
};

Instance make_instance(std::uint64_t seed, int n = 20, std::vector<int> sizes = {4, 4},
                       double h = 0.45) {
  Instance inst{pt::random_dataset(seed, n, static_cast<int>(sizes.size())), Grid(sizes),
                BandwidthSpec::uniform(static_cast<int>(sizes.size()), h), {}};
  inst.moments = assemble_moments(inst.data, inst.grid, inst.bw);
  return inst;
}

FitConfig config(double h, int d) {
  FitConfig cfg;
  cfg.bandwidths = BandwidthSpec::uniform(d, h);
  return cfg;
}

Eigen::VectorXd dense_solution(const MomentField& moments, double R) {
  const Eigen::MatrixXd M = pt::dense_system(moments, R);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  REQUIRE(eig.eigenvalues().minCoeff() > 1e-9);  // instance must be well posed
  return eig.eigenvectors() *
         (eig.eigenvalues().cwiseInverse().asDiagonal() *
          (eig.eigenvectors().transpose() * pt::dense_L(moments)));
}

}  // namespace

TEST_CASE("build_A block examples and invariants") {
  const Instance inst = make_instance(1);

  SUBCASE("degenerate and identity blocks") {
    MomentField empty = inst.moments;
    empty.S.setZero();
    empty.L.setZero();
    const BlockDiagonalA A = build_A(empty, 0.7);
    CHECK((Eigen::MatrixXd(A.A_at(0)) - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-14);
    CHECK(Eigen::MatrixXd(A.ImA_at(0)).norm() < 1e-14);

    MomentField ident = inst.moments;
    for (std::int64_t j = 0; j < ident.grid.size(); ++j)
      Eigen::Map<Eigen::MatrixXd>(ident.S.col(j).data(), 3, 3) =
          Eigen::MatrixXd::Identity(3, 3);
    const BlockDiagonalA A1 = build_A(ident, 1.0);
    CHECK((Eigen::MatrixXd(A1.A_at(2)) - 0.5 * Eigen::MatrixXd::Identity(3, 3)).norm() <
          1e-14);
  }

  SUBCASE("random blocks against dense inverse") {
    const double R = 0.5;
    const BlockDiagonalA A = build_A(inst.moments, R);
    for (std::int64_t j = 0; j < inst.grid.size(); ++j) {
      const Eigen::MatrixXd S = inst.moments.S_at(j);
      const Eigen::MatrixXd M = S + R * Eigen::MatrixXd::Identity(3, 3);
      const Eigen::MatrixXd want = R * M.inverse();
      CHECK((Eigen::MatrixXd(A.A_at(j)) - want).cwiseAbs().maxCoeff() < 1e-12);

      // eigenvalues in [0,1], complements consistent
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Eigen::MatrixXd(A.A_at(j)));
      CHECK(eig.eigenvalues().minCoeff() > -1e-12);
      CHECK(eig.eigenvalues().maxCoeff() < 1.0 + 1e-12);
      CHECK((Eigen::MatrixXd(A.A_at(j)) + Eigen::MatrixXd(A.ImA_at(j)) -
             Eigen::MatrixXd::Identity(3, 3))
                .cwiseAbs()
                .maxCoeff() < 1e-12);
      CHECK((Eigen::MatrixXd(A.AS_at(j)) - R * Eigen::MatrixXd(A.ImA_at(j)))
                .cwiseAbs()
                .maxCoeff() < 1e-10);
    }
  }

  SUBCASE("R must be positive and finite") {
    CHECK_THROWS_AS(build_A(inst.moments, 0.0), std::domain_error);
    CHECK_THROWS_AS(build_A(inst.moments, -1.0), std::domain_error);
  }
}

TEST_CASE("solve_direct matches the dense normal equations") {
  const Instance inst = make_instance(2);
  const FitConfig cfg = config(0.45, 2);
  for (const double R : {0.1, 0.5, 1.0, 10.0}) {
    const Eigen::VectorXd want = dense_solution(inst.moments, R);
    const SolveResult got = solve_direct(inst.moments, R, cfg);
    CHECK((pt::flatten(got.beta) - want).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(residual_norm(inst.moments, Penalty::finite(R), got.beta) <= 1e-8);
  }
}

TEST_CASE("small-R and large-R closed forms agree at the threshold") {
  const Instance inst = make_instance(3);
  const FitConfig cfg = config(0.45, 2);
  const double R = cfg.large_R_threshold;
  const SolveResult small = solve_direct(inst.moments, R, cfg, DirectForm::small_R);
  const SolveResult large = solve_direct(inst.moments, R, cfg, DirectForm::large_R);
  CHECK((small.beta.beta - large.beta.beta).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(residual_norm(inst.moments, Penalty::finite(R), small.beta) <= 1e-8);
  CHECK(residual_norm(inst.moments, Penalty::finite(R), large.beta) <= 1e-8);
}

TEST_CASE("constant responses reproduce the constant for any R") {
  Instance inst = make_instance(4);
  inst.data.Y.setConstant(3.0);
  inst.moments = assemble_moments(inst.data, inst.grid, inst.bw);
  FitConfig cfg = config(0.45, 2);

  for (const char* mode : {"R0", "R=0.7", "Rinf"}) {
    ParamField beta;
    if (std::string(mode) == "R0") {
      cfg.R = Penalty::finite(0.0);
      beta = fit(inst.moments, cfg).beta;
    } else if (std::string(mode) == "R=0.7") {
      cfg.R = Penalty::finite(0.7);
      beta = solve_direct(inst.moments, 0.7, cfg).beta;
    } else {
      cfg.R = Penalty::infinity();
      beta = solve_additive_direct(inst.moments, cfg).beta;
    }
    for (std::int64_t j = 0; j < inst.grid.size(); ++j) {
      if (inst.moments.S_at(j)(0, 0) <= 0.0) continue;
      CHECK(beta.beta(j, 0) == doctest::Approx(3.0).epsilon(1e-9));
      CHECK(beta.beta.row(j).tail(2).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("iterative solver agrees with direct and converges geometrically") {
  const Instance inst = make_instance(5);
  FitConfig cfg = config(0.45, 2);
  cfg.max_iterations = 50000;  // the damped large-R path contracts slowly

  SUBCASE("zero responses converge immediately to zero") {
    MomentField quiet = inst.moments;
    quiet.L.setZero();
    const SolveResult sol = solve_iterative(quiet, Penalty::finite(0.5), cfg);
    CHECK(sol.iterations == 1);
    CHECK(sol.beta.beta.norm() == 0.0);
  }

  SUBCASE("agreement with the direct solver, small-R path") {
    const SolveResult direct = solve_direct(inst.moments, 0.5, cfg);
    const SolveResult iter = solve_iterative(inst.moments, Penalty::finite(0.5), cfg);
    CHECK((direct.beta.beta - iter.beta.beta).cwiseAbs().maxCoeff() < 1e-7);
    CHECK(residual_norm(inst.moments, Penalty::finite(0.5), iter.beta) <= 1e-8);

    // squared increments decay by a roughly constant factor
    const auto& inc = iter.increments;
    REQUIRE(inc.size() >= 4);
    for (std::size_t a = 1; a + 1 < inc.size(); ++a) CHECK(inc[a + 1] < inc[a]);
  }

  SUBCASE("agreement on the damped large-R path") {
    const SolveResult direct = solve_direct(inst.moments, 50.0, cfg);
    const SolveResult iter = solve_iterative(inst.moments, Penalty::finite(50.0), cfg);
    CHECK((direct.beta.beta - iter.beta.beta).cwiseAbs().maxCoeff() < 1e-7);
  }

  SUBCASE("R = infinity via iteration matches the additive direct solve") {
    const SolveResult direct = solve_additive_direct(inst.moments, cfg);
    const SolveResult iter = solve_iterative(inst.moments, Penalty::infinity(), cfg);
    CHECK((direct.beta.beta - iter.beta.beta).cwiseAbs().maxCoeff() < 1e-7);
  }

  SUBCASE("non-convergence raises with the last increment") {
    FitConfig tight = cfg;
    tight.max_iterations = 2;
    tight.iteration_tolerance = 1e-30;
    CHECK_THROWS_AS(solve_iterative(inst.moments, Penalty::finite(0.5), tight),
                    NonConvergenceError);
  }
}

TEST_CASE("reduced system rejects indefinite matrices beyond the cutoff") {
  Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(4, 4);
  bad(3, 3) = -0.5;
  try {
    ReducedSystem sys(bad, 1e-10);
    FAIL("expected DegenerateFitError");
  } catch (const DegenerateFitError& e) {
    CHECK(e.eigenvalue == doctest::Approx(-0.5).epsilon(1e-12));
  }

  // a PSD matrix with an exact null direction goes through the pseudo-inverse
  Eigen::MatrixXd rank_def = Eigen::MatrixXd::Identity(4, 4);
  rank_def(3, 3) = 0.0;
  const ReducedSystem sys(rank_def, 1e-10);
  CHECK(sys.pseudo_inverse_used());
  Eigen::VectorXd rhs(4);
  rhs << 1, 2, 3, 0;
  CHECK((sys.solve(rhs) - rhs).norm() < 1e-12);  // identity on the range
}

TEST_CASE("residual_norm properties") {
  const Instance inst = make_instance(6);
  const FitConfig cfg = config(0.45, 2);
  const double R = 0.8;
  const SolveResult sol = solve_direct(inst.moments, R, cfg);

  CHECK(residual_norm(inst.moments, Penalty::finite(R), sol.beta) <= 1e-8);

  const ParamField zero = ParamField::zero(inst.grid, 2);
  const double lnorm = inst.moments.L.norm();
  CHECK(residual_norm(inst.moments, Penalty::finite(R), zero) ==
        doctest::Approx(lnorm / std::max(1.0, lnorm)).epsilon(1e-12));

  // residual grows linearly in the perturbation size
  RandomStream rng(17, 0);
  ParamField dir = ParamField::zero(inst.grid, 2);
  for (std::int64_t j = 0; j < inst.grid.size(); ++j)
    for (int l = 0; l < 3; ++l) dir.beta(j, l) = rng.normal();
  dir.beta /= dir.beta.norm();
  double prev = 0.0;
  for (const double eps : {1e-4, 1e-3, 1e-2}) {
    ParamField pert = sol.beta;
    pert.beta += eps * dir.beta;
    const double r = residual_norm(inst.moments, Penalty::finite(R), pert);
    CHECK(r > prev);
    if (prev > 0.0) CHECK(r / prev == doctest::Approx(10.0).epsilon(0.05));
    prev = r;
  }
}

TEST_CASE("solution is linear in the responses") {
  Instance inst = make_instance(7);
  const FitConfig cfg = config(0.45, 2);
  Dataset d2 = inst.data;
  RandomStream rng(23, 0);
  for (Eigen::Index i = 0; i < d2.n(); ++i) d2.Y[i] = rng.normal();
  const MomentField m2 = assemble_moments(d2, inst.grid, inst.bw);

  Dataset combo = inst.data;
  combo.Y = 2.0 * inst.data.Y + 0.5 * d2.Y;
  const MomentField mc = assemble_moments(combo, inst.grid, inst.bw);

  const double R = 0.3;
  const Eigen::MatrixXd want = 2.0 * solve_direct(inst.moments, R, cfg).beta.beta +
                               0.5 * solve_direct(m2, R, cfg).beta.beta;
  const Eigen::MatrixXd got = solve_direct(mc, R, cfg).beta.beta;
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, want.norm()));
}

TEST_CASE("spectral contraction of Z A_R Z^T") {
  const Instance inst = make_instance(8);
  // the dense objective Hessian must be positive definite
  const Eigen::MatrixXd M = pt::dense_system(inst.moments, 0.5);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> meig(M);
  REQUIRE(meig.eigenvalues().minCoeff() > 1e-9);

  const BlockDiagonalA A = build_A(inst.moments, 0.5);
  const Eigen::MatrixXd G =
      z_block_gram(inst.grid, [&](std::int64_t j) { return SmallMatrix(A.A_at(j)); });
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
  CHECK(eig.eigenvalues().maxCoeff() < 1.0);
}

TEST_CASE("oblique projection identity (additive part equals converged gamma)") {
  const Instance inst = make_instance(9);
  const FitConfig cfg = config(0.45, 2);
  for (const double R : {0.2, 1.0, 100.0}) {
    const SolveResult sol = solve_direct(inst.moments, R, cfg);
    const ParamField proj = project_additive(sol.beta);
    const ParamField from_gamma = apply_Zt(sol.gamma);
    CHECK((proj.beta - from_gamma.beta).cwiseAbs().maxCoeff() <=
          1e-10 * std::max(1.0, sol.beta.beta.norm()));
  }
}

TEST_CASE("solution minimizes the penalized objective") {
  const Instance inst = make_instance(10, 15, {3, 3}, 0.5);
  const FitConfig cfg = config(0.5, 2);
  const double R = 0.4;
  const SolveResult sol = solve_direct(inst.moments, R, cfg);
  const double base = pt::objective(inst.data, inst.grid, inst.bw, R, sol.beta);

  RandomStream rng(31, 0);
  for (int rep = 0; rep < 4; ++rep) {
    ParamField pert = sol.beta;
    for (std::int64_t j = 0; j < inst.grid.size(); ++j)
      for (int l = 0; l < 3; ++l) pert.beta(j, l) += 1e-3 * rng.normal();
    CHECK(pt::objective(inst.data, inst.grid, inst.bw, R, pert) >= base - 1e-12);
  }
}

TEST_CASE("three covariates against the dense oracle") {
  const Dataset data = pt::random_dataset(14, 60, 3);
  const Grid grid({3, 3, 3});
  FitConfig cfg;
  cfg.bandwidths = BandwidthSpec::uniform(3, 0.55);
  const MomentField moments = assemble_moments(data, grid, cfg.bandwidths);
  for (const double R : {0.5, 3.0}) {
    const Eigen::VectorXd want = dense_solution(moments, R);
    const SolveResult got = solve_direct(moments, R, cfg);
    CHECK((pt::flatten(got.beta) - want).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("one covariate: the penalty has no effect") {
  // with d = 1 the additive subspace is the whole parameter space
  const Dataset data = pt::random_dataset(15, 40, 1);
  const Grid grid(std::vector<int>{7});
  FitConfig cfg;
  cfg.bandwidths = BandwidthSpec::uniform(1, 0.3);
  const MomentField moments = assemble_moments(data, grid, cfg.bandwidths);

  cfg.R = Penalty::finite(0.0);
  const Eigen::MatrixXd base = fit(moments, cfg).beta.beta;
  for (const Penalty R : {Penalty::finite(0.5), Penalty::finite(100.0), Penalty::infinity()}) {
    cfg.R = R;
    CHECK((fit(moments, cfg).beta.beta - base).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("convergence to the additive estimator at rate 1/R") {
  const Instance inst = make_instance(12, 25);
  const FitConfig cfg = config(0.45, 2);
  const Eigen::MatrixXd beta_inf = solve_additive_direct(inst.moments, cfg).beta.beta;
  std::vector<double> scaled;
  for (const double R : {1e2, 1e3, 1e4}) {
    const Eigen::MatrixXd beta_R = solve_direct(inst.moments, R, cfg).beta.beta;
    scaled.push_back(R * (beta_R - beta_inf).norm());
  }
  const double lo = *std::min_element(scaled.begin(), scaled.end());
  const double hi = *std::max_element(scaled.begin(), scaled.end());
  CHECK(hi / lo < 2.0);
}
