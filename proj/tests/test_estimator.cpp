#include "penadd/estimator.hpp"

#include "helpers.hpp"
#include "penadd/simulation.hpp"

#include <doctest.h>

#include <Eigen/Dense>

using namespace penadd;
namespace pt = penadd::testing;

namespace {

FitConfig config(double h, int d, Penalty R = Penalty::finite(0.5)) {
  FitConfig cfg;
  cfg.R = R;
  cfg.bandwidths = BandwidthSpec::uniform(d, h);
  return cfg;
}

Dataset additive_noiseless(std::uint64_t seed, int n) {
  RandomStream rng(seed, 0);
  Dataset data;
  data.X.resize(n, 2);
  data.Y.resize(n);
  for (int i = 0; i < n; ++i) {
    data.X(i, 0) = rng.uniform();
    data.X(i, 1) = rng.uniform();
    data.Y[i] = truth_additive(data.X.row(i).transpose());
  }
  return data;
}

}  // namespace

TEST_CASE("R = 0 gives the per-node local linear estimate") {
  const Dataset data = pt::random_dataset(41, 30, 2);
  const Grid grid({4, 4});
  const FitConfig cfg = config(0.45, 2, Penalty::finite(0.0));
  const FitResult res = fit(data, grid, cfg);
  for (std::int64_t j = 0; j < grid.size(); ++j) {
    Eigen::MatrixXd S;
    Eigen::VectorXd L;
    pt::oracle_moments(data, grid.node_coords(j), cfg.bandwidths, S, L);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    REQUIRE(eig.eigenvalues().minCoeff() > 1e-6);  // well conditioned everywhere
    const Eigen::VectorXd want = eig.eigenvectors() *
                                 (eig.eigenvalues().cwiseInverse().asDiagonal() *
                                  (eig.eigenvectors().transpose() * L));
    CHECK((res.beta.beta.row(j).transpose() - want).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("R = infinity yields an additive intercept surface") {
  const Dataset data = additive_noiseless(43, 400);
  const Grid grid({8, 8});
  const FitConfig cfg = config(0.25, 2, Penalty::infinity());
  const FitResult res = fit(data, grid, cfg);
  const auto dec = anova_decompose(res.intercept_surface(), grid);
  CHECK(dec.component({0, 1}).mean_square < 1e-4 * dec.total_mean_square);
  // the parameter field itself lies in the additive subspace
  CHECK((res.beta.beta - res.additive_part.beta).cwiseAbs().maxCoeff() <
        1e-10 * res.beta.beta.norm());
}

TEST_CASE("fit result decomposition invariants") {
  const Dataset data = pt::random_dataset(47, 25, 2);
  const Grid grid({4, 4});
  for (const Penalty R : {Penalty::finite(0.0), Penalty::finite(0.3), Penalty::finite(20.0),
                          Penalty::infinity()}) {
    FitConfig cfg = config(0.45, 2, R);
    const FitResult res = fit(data, grid, cfg);
    CHECK((res.additive_part.beta + res.nonadditive_part.beta - res.beta.beta)
              .cwiseAbs()
              .maxCoeff() <= 4e-16 * std::max(1.0, res.beta.beta.cwiseAbs().maxCoeff()));
    CHECK(apply_Z(res.nonadditive_part).coords.norm() <=
          1e-10 * std::max(1.0, res.beta.beta.norm()));
    if (!R.is_zero() && !R.is_infinite())
      CHECK(res.diagnostics.residual <= 1e-8);
    // identifiability: intercept components for axes k >= 2 are centered
    for (int k = 1; k < grid.dim(); ++k)
      CHECK(std::abs(res.gamma.intercept_block(k).mean()) <
            1e-12 * std::max(1.0, res.gamma.coords.norm()));
  }
  Dataset empty;
  empty.X.resize(0, 2);
  empty.Y.resize(0);
  CHECK_THROWS_AS(fit(empty, grid, config(0.45, 2)), std::invalid_argument);
}

TEST_CASE("pointwise compromise identity") {
  const Dataset data = pt::random_dataset(53, 25, 2);
  const Grid grid({4, 4});

  FitConfig cfg = config(0.45, 2, Penalty::finite(0.4));
  const MomentField moments = assemble_moments(data, grid, cfg.bandwidths);
  FitResult res = fit(moments, cfg);
  CHECK(pointwise_compromise_check(res, moments) <= 1e-9);

  SUBCASE("corrupting the additive part is detected proportionally") {
    FitResult bad = res;
    bad.additive_part.beta.array() += 1e-4;
    const double dev = pointwise_compromise_check(bad, moments);
    CHECK(dev > 1e-6);
    CHECK(dev < 1e-3);
  }

  SUBCASE("same bound on both closed forms at the threshold") {
    cfg.R = Penalty::finite(cfg.large_R_threshold);
    const SolveResult s = solve_direct(moments, cfg.large_R_threshold, cfg,
                                       DirectForm::small_R);
    const SolveResult l = solve_direct(moments, cfg.large_R_threshold, cfg,
                                       DirectForm::large_R);
    for (const SolveResult* sol : {&s, &l}) {
      FitResult r;
      r.beta = sol->beta;
      r.additive_part = project_additive(sol->beta);
      r.config = cfg;
      CHECK(pointwise_compromise_check(r, moments) <= 1e-9);
    }
  }
}

TEST_CASE("prediction is exact at grid nodes and preserves constants") {
  const Dataset data = pt::random_dataset(59, 30, 2);
  const Grid grid({5, 5});
  for (const Penalty R :
       {Penalty::finite(0.0), Penalty::finite(0.6), Penalty::infinity()}) {
    const FitConfig cfg = config(0.4, 2, R);
    const FitResult res = fit(data, grid, cfg);
    const Predictor pred(res, data);
    for (const std::int64_t j : {0L, 7L, 24L}) {
      CHECK(pred.at(grid.node_coords(j)) ==
            doctest::Approx(res.beta.beta(j, 0)).epsilon(1e-9));
    }
  }

  Dataset constant = data;
  constant.Y.setConstant(2.5);
  const FitConfig cfg = config(0.4, 2, Penalty::finite(0.8));
  const FitResult res = fit(constant, grid, cfg);
  const Predictor pred(res, constant);
  RandomStream rng(61, 0);
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::VectorXd x(2);
    x << rng.uniform(), rng.uniform();
    CHECK(pred.at(x) == doctest::Approx(2.5).epsilon(1e-9));
  }
}

TEST_CASE("prediction approaches the refined-grid fit at second order") {
  const Dataset data = pt::random_dataset(67, 60, 2, 0.2);
  const FitConfig cfg = config(0.4, 2, Penalty::finite(0.5));
  Eigen::VectorXd x(2);
  x << 0.5, 0.25;  // node of the 5x5 and 9x9 grids but not of the 3x3 grid

  const FitResult fine = fit(data, Grid({9, 9}), cfg);
  std::vector<int> mi = {4, 2};
  const double reference = fine.beta.beta(Grid({9, 9}).index(mi), 0);

  const double err_coarse =
      std::abs(predict_at(fit(data, Grid({3, 3}), cfg), data, x) - reference);
  const double err_mid =
      std::abs(predict_at(fit(data, Grid({5, 5}), cfg), data, x) - reference);
  CHECK(err_mid < err_coarse);
  CHECK(err_coarse < 0.5);  // O(spacing^2) scale at spacing 1/2
}

TEST_CASE("hat matrix reproduces the fit-predict pipeline") {
  const Dataset data = pt::random_dataset(71, 25, 2);
  const Grid grid({4, 4});
  for (const Penalty R :
       {Penalty::finite(0.0), Penalty::finite(0.5), Penalty::finite(30.0),
        Penalty::infinity()}) {
    const FitConfig cfg = config(0.45, 2, R);
    const HatMatrix hat = hat_matrix(data, grid, cfg);
    RandomStream rng(73, 0);
    for (int rep = 0; rep < 5; ++rep) {
      Dataset randomized = data;
      for (Eigen::Index i = 0; i < randomized.n(); ++i) randomized.Y[i] = rng.normal();
      const FitResult res = fit(randomized, grid, cfg);
      const Eigen::VectorXd via_pipeline = Predictor(res, randomized).at_design_points();
      const Eigen::VectorXd via_hat = hat.M * randomized.Y;
      CHECK((via_hat - via_pipeline).cwiseAbs().maxCoeff() < 1e-9);
    }
    // constant reproduction: rows sum to one
    const Eigen::VectorXd ones = hat.M * Eigen::VectorXd::Ones(data.n());
    CHECK((ones.array() - 1.0).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("additive smoother has fewer degrees of freedom than local linear") {
  // fixed uniform design
  Dataset data;
  const int side = 9;
  data.X.resize(side * side, 2);
  data.Y.resize(side * side);
  RandomStream rng(79, 0);
  for (int a = 0; a < side; ++a)
    for (int b = 0; b < side; ++b) {
      const int i = a * side + b;
      data.X(i, 0) = static_cast<double>(a) / (side - 1);
      data.X(i, 1) = static_cast<double>(b) / (side - 1);
      data.Y[i] = rng.normal();
    }
  const Grid grid({5, 5});
  const double tr0 = hat_matrix(data, grid, config(0.3, 2, Penalty::finite(0.0))).trace;
  const double trinf = hat_matrix(data, grid, config(0.3, 2, Penalty::infinity())).trace;
  CHECK(trinf < tr0);
}

TEST_CASE("continuity of the R path") {
  const Dataset data = pt::random_dataset(83, 25, 2);
  const Grid grid({4, 4});
  const MomentField moments =
      assemble_moments(data, grid, BandwidthSpec::uniform(2, 0.45));
  for (const double R : {0.05, 0.9, 7.0}) {
    FitConfig cfg = config(0.45, 2, Penalty::finite(R));
    const Eigen::MatrixXd base = fit(moments, cfg).beta.beta;
    for (const double factor : {1.0 - 1e-3, 1.0 + 1e-3}) {
      cfg.R = Penalty::finite(R * factor);
      const Eigen::MatrixXd shifted = fit(moments, cfg).beta.beta;
      CHECK((shifted - base).norm() < 5e-3 * std::max(1.0, base.norm()));
    }
  }
}

TEST_CASE("small-R limit matches R = 0 on well-conditioned instances") {
  const Dataset data = pt::random_dataset(89, 40, 2);
  const Grid grid({4, 4});
  const MomentField moments =
      assemble_moments(data, grid, BandwidthSpec::uniform(2, 0.5));
  FitConfig cfg = config(0.5, 2, Penalty::finite(0.0));
  const Eigen::MatrixXd beta0 = fit(moments, cfg).beta.beta;
  cfg.R = Penalty::finite(1e-6);
  const Eigen::MatrixXd beta_eps = fit(moments, cfg).beta.beta;
  CHECK((beta_eps - beta0).norm() <= 1e-4 * beta0.norm());
}

TEST_CASE("decay towards the additive estimator on additive truth") {
  const Dataset data = additive_noiseless(97, 120);
  const Grid grid({5, 5});
  const MomentField moments =
      assemble_moments(data, grid, BandwidthSpec::uniform(2, 0.35));
  FitConfig cfg = config(0.35, 2, Penalty::infinity());
  const Eigen::MatrixXd beta_inf = fit(moments, cfg).beta.beta;
  std::vector<double> gaps;
  for (const double R : {10.0, 100.0, 1000.0}) {
    cfg.R = Penalty::finite(R);
    gaps.push_back((fit(moments, cfg).beta.beta - beta_inf).norm());
  }
  // log-log slope over the decade pairs
  const double slope1 = std::log10(gaps[1] / gaps[0]);
  const double slope2 = std::log10(gaps[2] / gaps[1]);
  CHECK(slope1 <= -0.9);
  CHECK(slope2 <= -0.9);
}
