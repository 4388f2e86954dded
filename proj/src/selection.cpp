#include "penadd/selection.hpp"

#include "penadd/parallel.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstring>

namespace penadd {

const char* criterion_name(CriterionKind kind) {
  switch (kind) {
    case CriterionKind::aic: return "aic";
    case CriterionKind::gcv: return "gcv";
    case CriterionKind::aicc: return "aicc";
  }
  return "?";
}

CriterionKind parse_criterion(const std::string& name) {
  if (name == "aic") return CriterionKind::aic;
  if (name == "gcv") return CriterionKind::gcv;
  if (name == "aicc") return CriterionKind::aicc;
  throw std::invalid_argument("unknown criterion '" + name + "'");
}

double criterion(double sigma2_hat, double trace, Eigen::Index n, CriterionKind kind) {
  if (!(sigma2_hat > 0.0)) throw std::domain_error("criterion needs sigma2 > 0");
  const double nn = static_cast<double>(n);
  const double tau = trace / nn;
  switch (kind) {
    case CriterionKind::aic:
      return std::log(sigma2_hat) + 2.0 * tau;
    case CriterionKind::gcv: {
      const double den = 1.0 - tau;
      if (!(den > 0.0)) throw std::domain_error("GCV denominator not positive");
      return sigma2_hat / (den * den);
    }
    case CriterionKind::aicc: {
      const double den = 1.0 - (trace + 2.0) / nn;
      if (!(den > 0.0)) throw std::domain_error("AICC denominator not positive");
      return std::log(sigma2_hat) + (1.0 + tau) / den;
    }
  }
  throw std::logic_error("unreachable");
}

std::vector<double> SearchLattice::default_R_grid(double rho_step) {
  const double lo = 1.0 / 10000.0, hi = 0.9999;
  std::vector<double> out;
  for (double rho = lo; rho < hi - 1e-12; rho += rho_step) out.push_back(rho / (1.0 - rho));
  out.push_back(hi / (1.0 - hi));
  return out;
}

std::vector<double> SearchLattice::log10_h_grid(double log10_lo, double log10_hi, double step) {
  std::vector<double> out;
  for (double e = log10_lo; e <= log10_hi + 1e-12; e += step)
    out.push_back(std::pow(10.0, e));
  return out;
}

std::optional<std::pair<std::size_t, std::size_t>> SelectionSurface::argmin(
    bool by_criterion) const {
  std::optional<std::pair<std::size_t, std::size_t>> best;
  double best_val = 0.0;
  for (std::size_t ih = 0; ih < h_values.size(); ++ih) {
    for (std::size_t iR = 0; iR < R_values.size(); ++iR) {
      const SelectionCell& c = cell(iR, ih);
      if (by_criterion && !c.valid) continue;
      const double val = by_criterion ? c.criterion : c.ise;
      if (std::isnan(val)) continue;
      if (!best) {
        best = {iR, ih};
        best_val = val;
        continue;
      }
      const bool better =
          val < best_val ||
          (val == best_val &&
           (iR > best->first || (iR == best->first && ih > best->second)));
      if (better) {
        best = {iR, ih};
        best_val = val;
      }
    }
  }
  return best;
}

std::optional<std::size_t> SelectionSurface::argmin_at_R(std::size_t iR,
                                                         bool by_criterion) const {
  std::optional<std::size_t> best;
  double best_val = 0.0;
  for (std::size_t ih = 0; ih < h_values.size(); ++ih) {
    const SelectionCell& c = cell(iR, ih);
    if (by_criterion && !c.valid) continue;
    const double val = by_criterion ? c.criterion : c.ise;
    if (std::isnan(val)) continue;
    if (!best || val < best_val || (val == best_val && ih > *best)) {
      best = ih;
      best_val = val;
    }
  }
  return best;
}

namespace {

struct Stencil {
  int i0[8];
  double t[8];
};

// One evaluated h-column: everything that depends on h but not on R.
struct ColumnData {
  MomentField moments;
  Eigen::MatrixXd S_pt;  // (d+1)^2 x n, S(X_i)
  Eigen::MatrixXd L_pt;  // (d+1) x n, L(X_i)
  Eigen::VectorXd diag_w;
  std::vector<Stencil> stencil;
  // Support-node contributions of each observation: flat node + weight (with
  // the 1/n factor); offsets are re-derived from the node index.
  std::vector<std::vector<std::pair<std::int64_t, double>>> contrib;
};

}  // namespace

SelectionResult select_impl(const Dataset& data, const Grid& grid,
                            const SearchLattice& lattice, const SelectOptions& opts) {
  data.check(true);
  if (lattice.R.empty() || lattice.h.empty())
    throw std::invalid_argument("empty search lattice");
  const Eigen::Index n = data.n();
  const int d = data.d();
  const int p = d + 1;
  Eigen::VectorXd base = opts.base_bandwidths;
  if (base.size() == 0) base = Eigen::VectorXd::Ones(d);
  if (base.size() != d) throw std::invalid_argument("base bandwidth dimension mismatch");

  Eigen::VectorXd truth_grid;
  if (opts.truth) {
    truth_grid.resize(grid.size());
    for (std::int64_t j = 0; j < grid.size(); ++j) truth_grid[j] = opts.truth(grid.node_coords(j));
  }

  SelectionResult result;
  SelectionSurface& surf = result.surface;
  surf.R_values = lattice.R;
  surf.h_values = lattice.h;
  surf.cells.resize(lattice.R.size() * lattice.h.size());

  const int ms2 = 2 * grid.node_sum();
  std::vector<double> scale(d);
  for (int k = 0; k < d; ++k)
    scale[k] = std::sqrt(static_cast<double>(grid.size(k)) / static_cast<double>(grid.size()));

  for (std::size_t ih = 0; ih < lattice.h.size(); ++ih) {
    const BandwidthSpec bw{base * lattice.h[ih]};
    const MomentAssembler assembler(data, bw, opts.boundary, opts.boundary_inflation);

    ColumnData col;
    col.moments = assembler.assemble(grid, opts.threads);
    col.S_pt.resize(p * p, n);
    col.L_pt.resize(p, n);
    col.diag_w.resize(n);
    col.stencil.resize(n);
    if (opts.compute_criterion) col.contrib.resize(n);

    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd xi = data.X.row(i).transpose();
      const PointMoments pm = assembler.at_point(xi);
      std::memcpy(col.S_pt.col(i).data(), pm.S.data(), sizeof(double) * p * p);
      Eigen::Map<Eigen::VectorXd>(col.L_pt.col(i).data(), p) = pm.L;
      col.diag_w[i] = assembler.weight(i, xi);
      for (int k = 0; k < d; ++k) {
        const double pos = xi[k] * (grid.size(k) - 1);
        const int i0 = std::clamp(static_cast<int>(std::floor(pos)), 0, grid.size(k) - 2);
        col.stencil[i].i0[k] = i0;
        col.stencil[i].t[k] = pos - i0;
      }
      if (opts.compute_criterion) {
        assembler.for_each_support_node(
            i, grid,
            [&](std::int64_t j, std::span<const int>, double w, const SmallVector&) {
              col.contrib[i].emplace_back(j, w);
            });
      }
    }

    parallel_for(
        static_cast<std::int64_t>(lattice.R.size()),
        [&](std::int64_t iR) {
          SelectionCell& cell = surf.cell(iR, ih);
          cell.R = lattice.R[iR];
          cell.h = lattice.h[ih];
          if (cell.R < opts.R_floor) return;  // excluded, stays invalid

          const double R = cell.R;
          const bool large = R >= opts.large_R_threshold;
          const BlockDiagonalA A = build_A(col.moments, R);
          Eigen::MatrixXd lambda = large ? large_R_lambda(A) : small_R_lambda(A);
          const ReducedSystem reduced(std::move(lambda), opts.pinv_cutoff);

          const Eigen::MatrixXd data_field = ridge_data_term(col.moments, A);

          // gamma for the actual responses
          Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ms2);
          {
            std::vector<int> mi(d, 0);
            SmallVector v(p);
            for (std::int64_t j = 0; j < grid.size(); ++j, grid.advance(mi)) {
              if (large)
                v.noalias() = A.A_at(j) * col.moments.L_at(j);
              else
                v = data_field.col(j);
              scatter_node(grid, mi, v, rhs);
            }
            center_intercepts(grid, rhs);
          }
          reduced.solve_in_place(rhs);
          const AdditiveCoords gammaY{grid, rhs};

          // Fitted values at design points and sigma2
          Eigen::MatrixXd w_rows(n, p);
          Eigen::VectorXd fitted(n);
          SmallVector e0 = SmallVector::Zero(p);
          e0[0] = 1.0;
          for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Map<const Eigen::MatrixXd> Sp(col.S_pt.col(i).data(), p, p);
            SmallMatrix M = Sp;
            M.diagonal().array() += R;
            const SmallVector wi = M.ldlt().solve(e0);
            w_rows.row(i) = wi.transpose();
            SmallVector add = SmallVector::Zero(p);
            for (int k = 0; k < d; ++k) {
              const int i0 = col.stencil[i].i0[k];
              const double t = col.stencil[i].t[k];
              const auto ib = gammaY.intercept_block(k);
              const auto sb = gammaY.slope_block(k);
              add[0] += scale[k] * ((1.0 - t) * ib[i0] + t * ib[i0 + 1]);
              add[k + 1] = scale[k] * ((1.0 - t) * sb[i0] + t * sb[i0 + 1]);
            }
            fitted[i] =
                wi.dot(Eigen::Map<const Eigen::VectorXd>(col.L_pt.col(i).data(), p)) +
                R * wi.dot(add);
          }
          cell.sigma2 = (data.Y - fitted).squaredNorm() / static_cast<double>(n);

          if (opts.truth) {
            // ISE of the intercept surface against the truth
            ParamField ztg = apply_Zt(gammaY);
            double acc = 0.0;
            for (std::int64_t j = 0; j < grid.size(); ++j) {
              const double b0 =
                  A.A_at(j).row(0).dot(ztg.beta.row(j)) + data_field(0, j);
              const double diff = b0 - truth_grid[j];
              acc += diff * diff;
            }
            cell.ise = acc / static_cast<double>(grid.size());
          }

          if (opts.compute_criterion) {
            const Eigen::MatrixXd& Linv = reduced.inverse();
            double tr = 0.0;
            Eigen::VectorXd u = Eigen::VectorXd::Zero(ms2);
            std::vector<int> mi(d);
            for (Eigen::Index i = 0; i < n; ++i) {
              u.setZero();
              SmallVector z(p);
              SmallVector v(p);
              for (const auto& [j, w] : col.contrib[i]) {
                grid.multi_index(j, mi);
                z[0] = 1.0;
                for (int k = 0; k < d; ++k)
                  z[k + 1] = (data.X(i, k) - grid.node(k, mi[k])) / bw.h[k];
                if (large)
                  v.noalias() = A.A_at(j) * (w * z);
                else
                  v.noalias() = A.A_at(j) * ((w / R) * z);
                scatter_node(grid, mi, v, u);
              }
              center_intercepts(grid, u);

              // v_i^T Lambda^{-1} u via the sparse rows of E(X_i)^T w_i
              double quad = 0.0;
              int off = 0;
              for (int k = 0; k < d; ++k) {
                const int i0 = col.stencil[i].i0[k];
                const double t = col.stencil[i].t[k];
                const double wi0 = w_rows(i, 0) * scale[k];
                const double wik = w_rows(i, k + 1) * scale[k];
                quad += wi0 * (1.0 - t) * Linv.row(off + i0).dot(u);
                quad += wi0 * t * Linv.row(off + i0 + 1).dot(u);
                const int soff = grid.node_sum() + off;
                quad += wik * (1.0 - t) * Linv.row(soff + i0).dot(u);
                quad += wik * t * Linv.row(soff + i0 + 1).dot(u);
                off += grid.size(k);
              }
              tr += col.diag_w[i] / static_cast<double>(n) * w_rows(i, 0) + R * quad;
            }
            cell.trace = tr;
            try {
              cell.criterion = criterion(cell.sigma2, cell.trace, n, opts.kind);
            } catch (const std::domain_error&) {
              return;  // undefined criterion, cell stays invalid
            }
          }
          cell.valid = true;
        },
        opts.threads);
  }

  const auto best = surf.argmin(opts.compute_criterion);
  if (!best) throw std::runtime_error("selection failed: no valid lattice cell");
  result.best_iR = best->first;
  result.best_ih = best->second;
  result.best_R = surf.R_values[best->first];
  result.best_h = surf.h_values[best->second];
  return result;
}

SelectionResult select(const Dataset& data, const Grid& grid, const SearchLattice& lattice,
                       const SelectOptions& opts) {
  if (!opts.compute_criterion && !opts.truth)
    throw std::invalid_argument("select needs a criterion or a truth surface");
  return select_impl(data, grid, lattice, opts);
}

SelectionResult oracle_select(const Dataset& data,
                              const std::function<double(const Eigen::VectorXd&)>& truth,
                              const Grid& grid, const SearchLattice& lattice,
                              SelectOptions opts) {
  opts.truth = truth;
  opts.compute_criterion = false;
  return select_impl(data, grid, lattice, opts);
}

}  // namespace penadd
