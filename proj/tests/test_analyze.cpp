#include "penadd/analyze.hpp"

#include "helpers.hpp"
#include "penadd/estimator.hpp"

#include <doctest.h>

using namespace penadd;
namespace pt = penadd::testing;

namespace {

// Dense univariate local-linear hat-matrix trace, built from first principles.
double dense_univariate_trace(const Eigen::VectorXd& column, double h) {
  const Eigen::Index n = column.size();
  Dataset data;
  data.X = column;
  data.Y = Eigen::VectorXd::Zero(n);
  const BandwidthSpec bw = BandwidthSpec::uniform(1, h);
  double tr = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd x(1);
    x[0] = column[i];
    Eigen::MatrixXd S;
    Eigen::VectorXd L;
    pt::oracle_moments(data, x, bw, S, L);
    const Eigen::Matrix2d Sinv = Eigen::Matrix2d(S).inverse();
    tr += pt::oracle_weight(x, x, bw) / static_cast<double>(n) * Sinv(0, 0);
  }
  return tr;
}

Eigen::VectorXd equispaced(int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = static_cast<double>(i) / (n - 1);
  return v;
}

}  // namespace

TEST_CASE("df calibration hits the target against the dense oracle") {
  const Eigen::VectorXd col = equispaced(100);
  const DfCalibration cal = calibrate_bandwidth_by_df(col, 4.0);
  CHECK(!cal.clamped);
  CHECK(std::abs(dense_univariate_trace(col, cal.h) - 4.0) < 0.05);
  CHECK(cal.trace == doctest::Approx(4.0).epsilon(1e-3));
}

TEST_CASE("df calibration ordering and limits") {
  const Eigen::VectorXd col = equispaced(100);
  const double h4 = calibrate_bandwidth_by_df(col, 4.0).h;
  const double h2 = calibrate_bandwidth_by_df(col, 2.0).h;
  CHECK(h2 > h4);  // fewer degrees of freedom need more smoothing

  // df = n (interpolation limit) lands on the lower bracket end, flagged
  const DfCalibration tight = calibrate_bandwidth_by_df(col, 100.0);
  CHECK(tight.clamped);
  CHECK(tight.h <= 1e-3);

  // a barely sub-interpolation target is still reachable by bisection
  const DfCalibration near = calibrate_bandwidth_by_df(col, 99.5);
  CHECK(!near.clamped);
  CHECK(near.trace == doctest::Approx(99.5).epsilon(1e-3));

  CHECK_THROWS_AS(calibrate_bandwidth_by_df(col, 0.5), CalibrationError);
  CHECK_THROWS_AS(calibrate_bandwidth_by_df(col, 150.0), CalibrationError);

  // a column with ties cannot reach high df even at tiny h: clamped + flagged
  Eigen::VectorXd ties(40);
  for (int i = 0; i < 40; ++i) ties[i] = (i % 4) / 3.0;
  const DfCalibration tied = calibrate_bandwidth_by_df(ties, 30.0);
  CHECK(tied.clamped);
  CHECK(tied.trace == doctest::Approx(4.0).epsilon(0.01));
  Eigen::VectorXd unscaled(3);
  unscaled << -1.0, 0.5, 2.0;
  CHECK_THROWS_AS(calibrate_bandwidth_by_df(unscaled, 2.5), CalibrationError);
}

TEST_CASE("analyze on pure noise finds no signal") {
  RandomStream rng(211, 0);
  Dataset data;
  const int n = 150;
  data.X.resize(n, 2);
  data.Y.resize(n);
  for (int i = 0; i < n; ++i) {
    data.X(i, 0) = rng.uniform();
    data.X(i, 1) = rng.uniform();
    data.Y[i] = rng.normal();
  }
  AnalyzeOptions opts;
  opts.grid_sizes = {10, 10};
  opts.rho_step = 0.2;
  opts.log10_c_step = 0.25;
  opts.threads = 1;
  const AnalyzeReport rep = analyze(data, opts);
  CHECK(std::abs(rep.penalized.adj_r2) < 0.15);
  CHECK(std::abs(rep.local_linear.adj_r2) < 0.15);
  CHECK(std::abs(rep.additive.adj_r2) < 0.15);
}

TEST_CASE("analyze on a noiseless additive response") {
  RandomStream rng(223, 0);
  Dataset data;
  const int n = 250;
  data.X.resize(n, 2);
  data.Y.resize(n);
  for (int i = 0; i < n; ++i) {
    data.X(i, 0) = rng.uniform();
    data.X(i, 1) = rng.uniform();
    data.Y[i] = 2.0 + 3.0 * std::sin(3.0 * data.X(i, 0)) +
                2.0 * (data.X(i, 1) - 0.3) * (data.X(i, 1) - 0.3);
  }
  AnalyzeOptions opts;
  opts.grid_sizes = {12, 12};
  opts.rho_step = 0.1;
  opts.log10_c_step = 0.05;
  opts.threads = 1;
  const AnalyzeReport rep = analyze(data, opts);
  CHECK(rep.additive.adj_r2 > 0.99);
  CHECK(rep.penalized.adj_r2 > 0.99);
  CHECK(rep.penalized.adj_r2 >= rep.additive.adj_r2 - 0.01);

  // the additive reference sits at the lattice maximum R
  CHECK(rep.additive.R == doctest::Approx(9999.0).epsilon(1e-9));
  CHECK(rep.local_linear.R == doctest::Approx(1.0 / 9999.0).epsilon(1e-9));

  // decomposition of the penalized fit is essentially additive
  double interaction = 0.0, total = rep.anova_penalized.total_mean_square;
  for (const auto& comp : rep.anova_penalized.components)
    if (comp.axes.size() >= 2) interaction += comp.mean_square;
  CHECK(interaction < 1e-2 * total);
}
