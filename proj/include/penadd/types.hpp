#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace penadd {

// Small dense blocks are (d+1)x(d+1) with d <= 8; keep them on the stack.
inline constexpr int kMaxParamDim = 9;
using SmallMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0,
                                  kMaxParamDim, kMaxParamDim>;
using SmallVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxParamDim, 1>;

// The asymptotic justification (and the AIC analysis) assumes d <= 4.
inline constexpr int kDefaultMaxDim = 4;

struct DegenerateFitError : std::runtime_error {
  DegenerateFitError(const std::string& what, double eig)
      : std::runtime_error(what), eigenvalue(eig) {}
  double eigenvalue;
};

struct NonConvergenceError : std::runtime_error {
  NonConvergenceError(const std::string& what, int iters, double increment)
      : std::runtime_error(what), iterations(iters), last_increment(increment) {}
  int iterations;
  double last_increment;
};

struct CalibrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Design points X in [0,1]^d with responses Y.
struct Dataset {
  Eigen::MatrixXd X;  // n x d
  Eigen::VectorXd Y;  // n

  Eigen::Index n() const { return X.rows(); }
  int d() const { return static_cast<int>(X.cols()); }

  // Throws std::invalid_argument on shape mismatch, empty data,
  // coordinates outside [0,1], or d above the cap.
  void check(bool allow_high_dim = false) const;
};

/// Equidistant product grid on [0,1]^d including both endpoints per axis.
/// Flat enumeration is row-major with axis 1 slowest (axis d fastest).
class Grid {
 public:
  Grid() = default;
  explicit Grid(std::vector<int> m_per_axis);

  int dim() const { return static_cast<int>(m_per_axis_.size()); }
  std::int64_t size() const { return m_; }                    // m
  int size(int axis) const { return m_per_axis_[axis]; }      // m_k
  int node_sum() const { return m_star_; }                    // m* = sum m_k
  const std::vector<int>& sizes() const { return m_per_axis_; }

  double node(int axis, int i) const {
    return static_cast<double>(i) / (m_per_axis_[axis] - 1);
  }
  double spacing(int axis) const { return 1.0 / (m_per_axis_[axis] - 1); }

  std::int64_t index(std::span<const int> multi_index) const;
  void multi_index(std::int64_t flat, std::span<int> out) const;

  /// Advances a multi-index in flat (row-major) order. Start from all zeros.
  void advance(std::span<int> multi_index) const;

  Eigen::VectorXd node_coords(std::int64_t flat) const;

  bool operator==(const Grid& other) const { return m_per_axis_ == other.m_per_axis_; }

 private:
  std::vector<int> m_per_axis_;
  std::vector<std::int64_t> stride_;
  std::int64_t m_ = 0;
  int m_star_ = 0;
};

/// Per-axis kernel scale parameters h_1..h_d.
struct BandwidthSpec {
  Eigen::VectorXd h;

  static BandwidthSpec uniform(int d, double value) {
    return BandwidthSpec{Eigen::VectorXd::Constant(d, value)};
  }
  BandwidthSpec scaled(double c) const { return BandwidthSpec{h * c}; }

  /// h = (h_1 ... h_d)^(1/d)
  double geometric_mean() const;
  void check() const;
};

/// Penalty weight R on the non-additive part. R = infinity is a distinguished
/// value (not a float) and dispatches to the pure-additive code path.
class Penalty {
 public:
  Penalty() : value_(0.0), infinite_(false) {}
  static Penalty finite(double r) {
    if (!(r >= 0.0)) throw std::domain_error("penalty R must be >= 0");
    return Penalty(r, false);
  }
  static Penalty infinity() { return Penalty(0.0, true); }
  static Penalty parse(const std::string& text);

  bool is_infinite() const { return infinite_; }
  bool is_zero() const { return !infinite_ && value_ == 0.0; }
  double value() const {
    if (infinite_) throw std::logic_error("finite value of infinite penalty");
    return value_;
  }
  std::string str() const;

 private:
  Penalty(double v, bool inf) : value_(v), infinite_(inf) {}
  double value_;
  bool infinite_;
};

/// Parameter field beta: one (d+1)-row per grid node, coordinates
/// (intercept, slope_1, ..., slope_d).
struct ParamField {
  Grid grid;
  Eigen::MatrixXd beta;  // m x (d+1)

  static ParamField zero(const Grid& g, int d) {
    return ParamField{g, Eigen::MatrixXd::Zero(g.size(), d + 1)};
  }
};

/// Additive coordinates gamma = Z beta: per axis one intercept component and
/// one slope component, stacked as
///   [int_1 (m_1), int_2 (m_2), ..., int_d, slope_1 (m_1), ..., slope_d]
/// (total length 2 m*). Intercept components for axes k >= 2 are mean
/// centered for identifiability.
struct AdditiveCoords {
  Grid grid;
  Eigen::VectorXd coords;  // 2 m*

  static AdditiveCoords zero(const Grid& g) {
    return AdditiveCoords{g, Eigen::VectorXd::Zero(2 * g.node_sum())};
  }

  int intercept_offset(int axis) const;
  int slope_offset(int axis) const { return grid.node_sum() + intercept_offset(axis); }

  Eigen::VectorBlock<Eigen::VectorXd> intercept_block(int axis) {
    return coords.segment(intercept_offset(axis), grid.size(axis));
  }
  Eigen::VectorBlock<const Eigen::VectorXd> intercept_block(int axis) const {
    return coords.segment(intercept_offset(axis), grid.size(axis));
  }
  Eigen::VectorBlock<Eigen::VectorXd> slope_block(int axis) {
    return coords.segment(slope_offset(axis), grid.size(axis));
  }
  Eigen::VectorBlock<const Eigen::VectorXd> slope_block(int axis) const {
    return coords.segment(slope_offset(axis), grid.size(axis));
  }
};

enum class SolverKind { direct, iterative };
enum class BoundaryPolicy { renormalize, inflate };

struct FitConfig {
  Penalty R = Penalty::finite(0.0);
  BandwidthSpec bandwidths;
  SolverKind solver = SolverKind::direct;
  double iteration_tolerance = 1e-10;  // on the squared gamma increment
  int max_iterations = 500;
  double large_R_threshold = 1.0;
  double pinv_cutoff = 1e-10;  // relative eigenvalue cutoff
  BoundaryPolicy boundary = BoundaryPolicy::renormalize;
  double boundary_inflation = 0.5;  // corner factor 1+c for the inflate policy
  bool allow_high_dim = false;

  void check() const;
};

}  // namespace penadd
