#include "penadd/analyze.hpp"
#include "penadd/estimator.hpp"
#include "penadd/io.hpp"
#include "penadd/selection.hpp"
#include "penadd/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

using json = nlohmann::ordered_json;
using namespace penadd;

namespace {

constexpr const char* kVersion = "0.1.0";

struct CommonData {
  std::string path;
  std::string response;
  std::vector<std::string> predictors;
  bool log_response = false;
  std::vector<int> exclude_rows;
};

void add_data_flags(CLI::App* cmd, CommonData& d) {
  cmd->add_option("--data", d.path, "input CSV file")->required();
  cmd->add_option("--response", d.response, "response column name")->required();
  cmd->add_option("--predictors", d.predictors, "predictor column names")
      ->required()
      ->delimiter(',');
  cmd->add_flag("--log-response", d.log_response, "log-transform the response");
  cmd->add_option("--exclude-rows", d.exclude_rows, "1-based data rows to drop")
      ->delimiter(',');
}

IngestResult load(const CommonData& d) {
  IngestOptions opts;
  opts.response = d.response;
  opts.predictors = d.predictors;
  opts.log_response = d.log_response;
  opts.exclude_rows = d.exclude_rows;
  return ingest_csv(d.path, opts);
}

std::vector<int> parse_grid(const std::vector<int>& grid, int d) {
  if (grid.empty()) return default_grid_sizes(d);
  if (grid.size() == 1) return std::vector<int>(d, grid[0]);
  if (static_cast<int>(grid.size()) != d)
    throw std::invalid_argument("--grid needs 1 or d values");
  return grid;
}

struct Range {
  double lo = 0.0, hi = 0.0, step = 0.0;
};

Range parse_range(const std::string& text, const char* what) {
  Range r;
  if (std::sscanf(text.c_str(), "%lf:%lf:%lf", &r.lo, &r.hi, &r.step) != 3 || r.step <= 0.0)
    throw std::invalid_argument(std::string("cannot parse ") + what +
                                " range '" + text + "' (want lo:hi:step)");
  return r;
}

json scaling_json(const IngestResult& ing) {
  json arr = json::array();
  for (const auto& s : ing.scaling)
    arr.push_back({{"name", s.name}, {"min", s.min}, {"max", s.max}});
  return arr;
}

void write_manifest(const std::string& out_path, const std::string& command, json detail,
                    double elapsed_ms) {
  json manifest;
  manifest["tool"] = "penadd";
  manifest["version"] = kVersion;
  manifest["command"] = command;
  manifest["elapsed_ms"] = elapsed_ms;
  manifest["detail"] = std::move(detail);
  std::ofstream out(out_path + ".manifest.json");
  out << manifest.dump(2) << "\n";
}

BoundaryPolicy parse_boundary(const std::string& name) {
  if (name == "renorm") return BoundaryPolicy::renormalize;
  if (name == "inflate") return BoundaryPolicy::inflate;
  throw std::invalid_argument("unknown boundary policy '" + name + "'");
}

json anova_json(const AnovaDecomposition& dec) {
  json rows = json::array();
  for (const auto& comp : dec.components) {
    std::string name = "constant";
    if (!comp.axes.empty()) {
      name = "r";
      for (int a : comp.axes) name += std::to_string(a + 1);
    }
    rows.push_back({{"component", name}, {"mean_square", comp.mean_square}});
  }
  rows.push_back({{"component", "total"}, {"mean_square", dec.total_mean_square}});
  return rows;
}

json model_json(const ModelSummary& m) {
  return {{"name", m.name},     {"R", m.R},           {"c", m.c},
          {"ch", m.ch},         {"trace", m.trace},   {"sigma2", m.sigma2},
          {"adjusted_r2", m.adj_r2}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"penalized local-linear regression with an additivity penalty"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // ---- fit ----
  auto* fit_cmd = app.add_subcommand("fit", "fit on a grid and export the surface");
  CommonData fit_data;
  add_data_flags(fit_cmd, fit_data);
  std::string fit_R = "0";
  std::vector<double> fit_h;
  double fit_df = 0.0;
  std::vector<int> fit_grid;
  std::string fit_out = "surface.csv";
  std::string fit_solver = "direct";
  std::string fit_boundary = "renorm";
  std::string fit_config_path;
  double fit_tol = 1e-10, fit_inflation = 0.5;
  int fit_max_iter = 500;
  fit_cmd->add_option("--R", fit_R, "penalty (number or 'inf')");
  fit_cmd->add_option("--bandwidth", fit_h, "bandwidths (one shared or per axis)")->delimiter(',');
  fit_cmd->add_option("--df", fit_df, "calibrate per-axis bandwidths to this df");
  fit_cmd->add_option("--grid", fit_grid, "grid sizes (one shared or per axis)")
      ->delimiter(',');
  fit_cmd->add_option("--out", fit_out, "output surface CSV");
  fit_cmd->add_option("--solver", fit_solver, "direct|iter");
  fit_cmd->add_option("--boundary", fit_boundary, "renorm|inflate");
  fit_cmd->add_option("--boundary-inflation", fit_inflation, "corner factor minus 1");
  fit_cmd->add_option("--tol", fit_tol, "iteration tolerance on ||dgamma||");
  fit_cmd->add_option("--max-iter", fit_max_iter, "iteration cap");
  fit_cmd->add_option("--config", fit_config_path, "JSON config mirroring the fit fields");

  // ---- select ----
  auto* sel_cmd = app.add_subcommand("select", "search (R, h) by AIC/GCV/AICC");
  CommonData sel_data;
  add_data_flags(sel_cmd, sel_data);
  std::vector<int> sel_grid;
  std::string sel_out = "selection.csv";
  std::string sel_criterion = "aicc";
  std::string sel_searchR = "1e-4:0.9999:0.01";  // in rho = R/(1+R)
  std::string sel_searchh = "-1.301:-0.301:0.005";  // in log10 h
  std::string sel_boundary = "renorm";
  double sel_df = 0.0;
  sel_cmd->add_option("--grid", sel_grid, "grid sizes")->delimiter(',');
  sel_cmd->add_option("--out", sel_out, "output surface CSV");
  sel_cmd->add_option("--criterion", sel_criterion, "aic|gcv|aicc");
  sel_cmd->add_option("--search-R", sel_searchR, "rho range lo:hi:step, rho = R/(1+R)");
  sel_cmd->add_option("--search-h", sel_searchh, "log10 h range lo:hi:step");
  sel_cmd->add_option("--df", sel_df,
                      "df-calibrate base bandwidths; the h lattice then scales them");
  sel_cmd->add_option("--boundary", sel_boundary, "renorm|inflate");

  // ---- simulate ----
  auto* sim_cmd = app.add_subcommand("simulate", "run a Monte Carlo scenario");
  std::string sim_config_path;
  std::string sim_truth = "nonadditive", sim_design = "uniform";
  int sim_n = 200, sim_reps = 50;
  double sim_sigma = 5.0, sim_rho_step = 0.01;
  std::vector<int> sim_grid = {50, 50};
  std::string sim_searchh = "-1.301:-0.301:0.005";
  std::uint64_t sim_seed = 1;
  std::string sim_records = "records.csv", sim_quantiles = "quantiles.csv";
  int sim_threads = 0;
  sim_cmd->add_option("--config", sim_config_path, "JSON scenario config");
  sim_cmd->add_option("--truth", sim_truth, "nonadditive|additive");
  sim_cmd->add_option("--design", sim_design, "uniform|f1|f2");
  sim_cmd->add_option("--n", sim_n, "sample size");
  sim_cmd->add_option("--sigma", sim_sigma, "noise standard deviation");
  sim_cmd->add_option("--grid", sim_grid, "grid sizes")->delimiter(',');
  sim_cmd->add_option("--rho-step", sim_rho_step, "lattice step in R/(1+R)");
  sim_cmd->add_option("--search-h", sim_searchh, "log10 h range lo:hi:step");
  sim_cmd->add_option("--seed", sim_seed, "base seed");
  sim_cmd->add_option("--reps", sim_reps, "replications");
  sim_cmd->add_option("--threads", sim_threads, "worker threads (0 = auto)");
  sim_cmd->add_option("--out-records", sim_records, "per-replication CSV");
  sim_cmd->add_option("--out-quantiles", sim_quantiles, "quantile table CSV");

  // ---- analyze ----
  auto* ana_cmd = app.add_subcommand("analyze", "df-calibrated (R, c) analysis workflow");
  CommonData ana_data;
  add_data_flags(ana_cmd, ana_data);
  double ana_df = 4.0, ana_rho_step = 0.01;
  std::vector<int> ana_grid;
  std::string ana_searchc = "-0.5:0.25:0.01";
  std::string ana_out = "report.json";
  std::string ana_criterion = "aicc";
  std::string ana_boundary = "renorm";
  ana_cmd->add_option("--df", ana_df, "target degrees of freedom per axis");
  ana_cmd->add_option("--grid", ana_grid, "grid sizes")->delimiter(',');
  ana_cmd->add_option("--rho-step", ana_rho_step, "lattice step in R/(1+R)");
  ana_cmd->add_option("--search-c", ana_searchc, "log10 c range lo:hi:step");
  ana_cmd->add_option("--criterion", ana_criterion, "aic|gcv|aicc");
  ana_cmd->add_option("--boundary", ana_boundary, "renorm|inflate");
  ana_cmd->add_option("--out", ana_out, "output report JSON");

  // ---- decompose ----
  auto* dec_cmd = app.add_subcommand("decompose", "ANOVA table of a surface CSV");
  std::string dec_surface, dec_column = "intercept", dec_out = "anova.csv";
  dec_cmd->add_option("--surface", dec_surface, "surface CSV written by fit")->required();
  dec_cmd->add_option("--column", dec_column, "value column to decompose");
  dec_cmd->add_option("--out", dec_out, "output CSV");

  CLI11_PARSE(app, argc, argv);
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  try {
    if (*fit_cmd) {
      FitConfig cfg;
      if (!fit_config_path.empty()) {
        std::ifstream in(fit_config_path);
        if (!in) throw std::runtime_error("cannot open config '" + fit_config_path + "'");
        json j = json::parse(in);
        if (j.contains("R")) fit_R = j["R"].is_string() ? j["R"].get<std::string>()
                                                        : std::to_string(j["R"].get<double>());
        if (j.contains("bandwidths")) fit_h = j["bandwidths"].get<std::vector<double>>();
        if (j.contains("grid")) fit_grid = j["grid"].get<std::vector<int>>();
        if (j.contains("solver")) fit_solver = j["solver"].get<std::string>();
        if (j.contains("iteration_tolerance")) fit_tol = j["iteration_tolerance"];
        if (j.contains("max_iterations")) fit_max_iter = j["max_iterations"];
        if (j.contains("boundary")) fit_boundary = j["boundary"].get<std::string>();
        if (j.contains("boundary_inflation")) fit_inflation = j["boundary_inflation"];
      }
      const IngestResult ing = load(fit_data);
      const int d = ing.data.d();
      cfg.R = Penalty::parse(fit_R);
      cfg.solver = fit_solver == "iter" ? SolverKind::iterative : SolverKind::direct;
      cfg.iteration_tolerance = fit_tol;
      cfg.max_iterations = fit_max_iter;
      cfg.boundary = parse_boundary(fit_boundary);
      cfg.boundary_inflation = fit_inflation;
      if (!fit_h.empty()) {
        Eigen::VectorXd h(d);
        for (int k = 0; k < d; ++k)
          h[k] = fit_h.size() == 1 ? fit_h[0] : fit_h.at(k);
        cfg.bandwidths = BandwidthSpec{h};
      } else if (fit_df > 0.0) {
        Eigen::VectorXd h(d);
        for (int k = 0; k < d; ++k)
          h[k] = calibrate_bandwidth_by_df(ing.data.X.col(k), fit_df, cfg.boundary,
                                           cfg.boundary_inflation)
                     .h;
        cfg.bandwidths = BandwidthSpec{h};
      } else {
        throw std::invalid_argument("fit needs --h or --df");
      }
      const Grid grid(parse_grid(fit_grid, d));
      const FitResult res = fit(ing.data, grid, cfg);
      write_fit_surface_csv(fit_out, res);
      json detail;
      detail["input"] = fit_data.path;
      detail["n"] = ing.data.n();
      detail["dropped_missing"] = ing.dropped_missing;
      detail["excluded"] = ing.excluded;
      detail["scaling"] = scaling_json(ing);
      detail["R"] = cfg.R.str();
      detail["bandwidths"] = std::vector<double>(cfg.bandwidths.h.data(),
                                                 cfg.bandwidths.h.data() + d);
      detail["residual"] = res.diagnostics.residual;
      detail["iterations"] = res.diagnostics.iterations;
      detail["output"] = fit_out;
      write_manifest(fit_out, "fit", detail, elapsed_ms());
      std::cout << "fit: R=" << cfg.R.str() << " residual=" << res.diagnostics.residual
                << " surface=" << fit_out << "\n";
    } else if (*sel_cmd) {
      const IngestResult ing = load(sel_data);
      const int d = ing.data.d();
      const Grid grid(parse_grid(sel_grid, d));
      const Range rr = parse_range(sel_searchR, "--search-R");
      const Range rh = parse_range(sel_searchh, "--search-h");
      SearchLattice lattice;
      double rho = rr.lo;
      for (; rho <= rr.hi + 1e-12; rho += rr.step)
        lattice.R.push_back(rho / (1.0 - rho));
      if (rho - rr.step < rr.hi - 1e-12)  // keep the upper endpoint in the lattice
        lattice.R.push_back(rr.hi / (1.0 - rr.hi));
      lattice.h = SearchLattice::log10_h_grid(rh.lo, rh.hi, rh.step);
      SelectOptions opts;
      opts.kind = parse_criterion(sel_criterion);
      opts.boundary = parse_boundary(sel_boundary);
      if (sel_df > 0.0) {
        Eigen::VectorXd base(d);
        for (int k = 0; k < d; ++k)
          base[k] = calibrate_bandwidth_by_df(ing.data.X.col(k), sel_df, opts.boundary,
                                              opts.boundary_inflation)
                        .h;
        opts.base_bandwidths = base;
      }
      const SelectionResult sel = select(ing.data, grid, lattice, opts);
      write_selection_surface_csv(sel_out, sel.surface);
      json detail;
      detail["input"] = sel_data.path;
      detail["n"] = ing.data.n();
      detail["criterion"] = sel_criterion;
      detail["best_R"] = sel.best_R;
      detail["best_h"] = sel.best_h;
      detail["cells"] = lattice.R.size() * lattice.h.size();
      detail["output"] = sel_out;
      write_manifest(sel_out, "select", detail, elapsed_ms());
      std::cout << "select: R=" << format_double(sel.best_R)
                << " h=" << format_double(sel.best_h) << " surface=" << sel_out << "\n";
    } else if (*sim_cmd) {
      ScenarioSpec spec;
      if (!sim_config_path.empty()) {
        std::ifstream in(sim_config_path);
        if (!in) throw std::runtime_error("cannot open config '" + sim_config_path + "'");
        json j = json::parse(in);
        if (j.contains("truth")) sim_truth = j["truth"].get<std::string>();
        if (j.contains("design")) sim_design = j["design"].get<std::string>();
        if (j.contains("n")) sim_n = j["n"];
        if (j.contains("sigma")) sim_sigma = j["sigma"];
        if (j.contains("grid")) sim_grid = j["grid"].get<std::vector<int>>();
        if (j.contains("rho_step")) sim_rho_step = j["rho_step"];
        if (j.contains("log10_h_lo")) spec.log10_h_lo = j["log10_h_lo"];
        if (j.contains("log10_h_hi")) spec.log10_h_hi = j["log10_h_hi"];
        if (j.contains("log10_h_step")) spec.log10_h_step = j["log10_h_step"];
        if (j.contains("seed")) sim_seed = j["seed"];
        if (j.contains("replications")) sim_reps = j["replications"];
        if (j.contains("threads")) sim_threads = j["threads"];
      } else {
        const Range rh = parse_range(sim_searchh, "--search-h");
        spec.log10_h_lo = rh.lo;
        spec.log10_h_hi = rh.hi;
        spec.log10_h_step = rh.step;
      }
      spec.truth = sim_truth == "additive" ? TruthKind::additive : TruthKind::nonadditive;
      spec.design = parse_design(sim_design);
      spec.n = sim_n;
      spec.sigma = sim_sigma;
      spec.grid_sizes = parse_grid(sim_grid, 2);
      spec.rho_step = sim_rho_step;
      spec.seed = sim_seed;
      spec.replications = sim_reps;
      spec.threads = sim_threads;
      const auto records = run_scenario(spec);
      write_records_csv(sim_records, records);
      const auto table = summarize(records);
      write_quantiles_csv(sim_quantiles, table);
      json detail;
      detail["truth"] = sim_truth;
      detail["design"] = sim_design;
      detail["n"] = spec.n;
      detail["sigma"] = spec.sigma;
      detail["seed"] = spec.seed;
      detail["replications"] = spec.replications;
      detail["records"] = sim_records;
      detail["quantiles"] = sim_quantiles;
      write_manifest(sim_records, "simulate", detail, elapsed_ms());
      for (const auto& row : table)
        std::cout << row.name << ": med=" << format_double(row.med) << "\n";
    } else if (*ana_cmd) {
      const IngestResult ing = load(ana_data);
      AnalyzeOptions opts;
      opts.df = ana_df;
      opts.kind = parse_criterion(ana_criterion);
      opts.rho_step = ana_rho_step;
      opts.boundary = parse_boundary(ana_boundary);
      if (!ana_grid.empty()) opts.grid_sizes = parse_grid(ana_grid, ing.data.d());
      const Range rc = parse_range(ana_searchc, "--search-c");
      opts.log10_c_lo = rc.lo;
      opts.log10_c_hi = rc.hi;
      opts.log10_c_step = rc.step;
      const AnalyzeReport rep = analyze(ing.data, opts);
      json out;
      out["n"] = rep.n;
      out["dropped_missing"] = ing.dropped_missing;
      out["excluded"] = ing.excluded;
      out["response"] = ing.response_name;
      out["log_response"] = ing.log_response;
      out["scaling"] = scaling_json(ing);
      out["base_bandwidths"] = std::vector<double>(
          rep.base_bandwidths.data(), rep.base_bandwidths.data() + rep.base_bandwidths.size());
      out["base_h_geo"] = rep.base_h_geo;
      out["grid"] = rep.grid_sizes;
      out["models"] = {model_json(rep.penalized), model_json(rep.local_linear),
                       model_json(rep.additive)};
      out["anova_penalized"] = anova_json(rep.anova_penalized);
      out["anova_local_linear"] = anova_json(rep.anova_local_linear);
      std::ofstream outf(ana_out);
      if (!outf) throw std::runtime_error("cannot open '" + ana_out + "'");
      outf << out.dump(2) << "\n";
      write_manifest(ana_out, "analyze", out, elapsed_ms());
      std::cout << "analyze: R=" << format_double(rep.penalized.R)
                << " c=" << format_double(rep.penalized.c)
                << " adjR2(penalized)=" << format_double(rep.penalized.adj_r2)
                << " adjR2(additive)=" << format_double(rep.additive.adj_r2) << "\n";
    } else if (*dec_cmd) {
      const SurfaceData surf = read_surface_csv(dec_surface);
      int col = -1;
      for (std::size_t c = 0; c < surf.value_columns.size(); ++c)
        if (surf.value_columns[c] == dec_column) col = static_cast<int>(c);
      if (col < 0) throw std::runtime_error("no column '" + dec_column + "' in surface");
      const auto dec = anova_decompose(surf.values.col(col), surf.grid);
      write_anova_csv(dec_out, dec);
      json detail;
      detail["surface"] = dec_surface;
      detail["column"] = dec_column;
      detail["output"] = dec_out;
      write_manifest(dec_out, "decompose", detail, elapsed_ms());
      std::cout << "decompose: total_mean_square=" << format_double(dec.total_mean_square)
                << " table=" << dec_out << "\n";
    }
  } catch (const std::exception& e) {
    const char* type = "runtime_error";
    if (dynamic_cast<const DegenerateFitError*>(&e)) type = "degenerate_fit";
    else if (dynamic_cast<const NonConvergenceError*>(&e)) type = "non_convergence";
    else if (dynamic_cast<const CalibrationError*>(&e)) type = "calibration";
    else if (dynamic_cast<const std::invalid_argument*>(&e)) type = "invalid_argument";
    else if (dynamic_cast<const std::domain_error*>(&e)) type = "domain_error";
    json err;
    err["error"] = {{"type", type}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 2;
  }
  return 0;
}
