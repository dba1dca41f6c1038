// Command-line driver. Every verb writes CSV tables plus a JSON manifest into
// the output directory. Exit status: 0 ok, 2 some cells failed, 1 fatal.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qdres/pipeline.hpp"

namespace {

using namespace qdres;

void add_config_flags(CLI::App& app, SweepConfig& c) {
  app.add_option("--V0", c.V0, "well depth");
  app.add_option("--N", c.N, "basis size parameter");
  app.add_option("--alpha", c.alpha, "basis exponent for spectra, detectors and complex scaling");
  app.add_option("--alpha-min", c.alpha_min);
  app.add_option("--alpha-max", c.alpha_max);
  app.add_option("--alpha-points", c.alpha_points);
  app.add_option("--lambda-min", c.lambda_min);
  app.add_option("--lambda-max", c.lambda_max);
  app.add_option("--lambda-step", c.lambda_step);
  app.add_option("--thetas", c.thetas, "complex rotation angles (radians)");
  app.add_option("--reference-theta", c.reference_theta);
  app.add_option("--table-lambdas", c.table_lambdas);
  app.add_option("--dos-lambda", c.dos_lambda);
  app.add_option("--branch-lambda-step", c.branch_lambda_step);
  app.add_option("--overlap-cutoff", c.overlap_cutoff);
  app.add_option("--levels", c.levels);
  app.add_option("--dos-max-level", c.dos_max_level);
  app.add_option("--fit-max-iterations", c.fit_max_iterations);
  app.add_option("--fit-step-tolerance", c.fit_step_tolerance);
  app.add_option("--fidelity-delta", c.fidelity_delta, "0 means one lambda step");
  app.add_option("--peak-floor", c.peak_floor);
  app.add_option("--do-margin", c.do_margin);
  app.add_option("--do-max-anchor-overlap", c.do_max_anchor_overlap);
  app.add_option("--imag-slack", c.imag_slack);
  app.add_option("--imag-floor", c.imag_floor);
  app.add_option("--speed-floor", c.speed_floor);
  app.add_option("--lambda-rep-threshold", c.lambda_rep_threshold);
  app.add_option("-o,--output-dir", c.output_dir);
  app.add_option("--cache-dir", c.cache_dir);
  app.add_option("-j,--workers", c.workers, "0 = hardware concurrency");
}

CsvTable estimates_table(const std::string& file, const std::vector<ResonanceEstimate>& est,
                         std::optional<int> selected_level = std::nullopt) {
  CsvTable t;
  t.file = file;
  t.schema = "qdres/estimates v1";
  t.columns = {"lambda", "method", "level", "alpha", "E_r", "Gamma", "chi2", "theta", "selected"};
  for (const auto& e : est)
    t.add({fmt_num(e.lambda), to_string(e.method), e.level ? std::to_string(e.level) : "", fmt_num(e.alpha),
           fmt_num(e.E_r), fmt_num(e.Gamma), fmt_num(e.chi2), fmt_num(e.theta),
           selected_level && *selected_level == e.level ? "1" : "0"});
  return t;
}

int run(const std::string& verb, const SweepConfig& cfg, const std::vector<std::string>& args, double lambda,
        std::optional<double> theta) {
  Workspace ws(cfg);
  ResultStore store(cfg, verb + (args.empty() ? "" : " " + args.front()));

  if (verb == "spectrum") {
    CsvTable t;
    t.file = "spectrum.csv";
    t.schema = "qdres/spectrum v1";
    t.columns = {"lambda", "alpha", "theta", "j", "E_re", "E_im"};
    const double th = theta.value_or(0.0);
    if (th == 0.0) {
      const auto s = solve_real(ws.basis(), {cfg.V0, lambda, 0.0}, false);
      for (Eigen::Index j = 0; j < s.size(); ++j)
        t.add({fmt_num(lambda), fmt_num(cfg.alpha), "0", std::to_string(j + 1), fmt_num(s.energies(j)), "0"});
    } else {
      const auto s = solve_complex(ws.basis(), {cfg.V0, lambda, th}, false);
      for (Eigen::Index j = 0; j < s.eigenvalues.size(); ++j)
        t.add({fmt_num(lambda), fmt_num(cfg.alpha), fmt_num(th), std::to_string(j + 1),
               fmt_num(s.eigenvalues(j).real()), fmt_num(s.eigenvalues(j).imag())});
    }
    t.notes = {"retained dimension " + std::to_string(ws.basis()->dim()) + " of " +
               std::to_string(ws.basis()->transform.full_dim()) + ", epsilon=" + fmt_num(ws.epsilon())};
    store.write(t);
  } else if (verb == "dos" || verb == "fit") {
    const auto rep = ws.dos(lambda, cfg.dos_max_level);
    for (const auto& f : rep.failures) store.warn(f.where + ": " + f.message);
    if (!rep.best) store.fail("dos lambda=" + fmt_num(lambda), ErrorKind::AllFitsFailed, "no fit inside (epsilon, 0)");
    if (verb == "dos") {
      CsvTable t;
      t.file = "dos.csv";
      t.schema = "qdres/dos v1";
      t.notes = {"rho(E) = |dE/dalpha|^-1 by centered differences over the alpha grid, lambda=" + fmt_num(lambda)};
      t.columns = {"level", "alpha", "E", "rho"};
      for (const auto& c : rep.curves)
        for (const auto& s : c.samples) t.add({std::to_string(c.level), fmt_num(s.alpha), fmt_num(s.E), fmt_num(s.rho)});
      store.write(t);
    }
    auto t = estimates_table(verb == "dos" ? "dos_fits.csv" : "fit.csv", rep.fits,
                             rep.best ? std::optional<int>(rep.best->level) : std::nullopt);
    t.notes = {"Lorentzian fits per level; selected = minimum chi2 inside (epsilon, 0)"};
    store.write(t);
  } else if (verb == "cscale") {
    std::vector<double> ls = cfg.table_lambdas;
    if (lambda > 0.0) ls = {lambda};
    std::vector<ResonanceEstimate> est;
    CsvTable tr;
    tr.file = "cscale_trajectory.csv";
    tr.schema = "qdres/cscale-trajectory v1";
    tr.notes = {"eigenvalue families tracked across theta inside the resonance window; selected = resonance"};
    tr.columns = {"lambda", "family", "theta", "E_re", "E_im", "median_speed", "selected"};
    for (double l : ls) {
      const auto bp = ws.branch_point(l, false);
      if (!bp.ok()) {
        store.fail("cscale lambda=" + fmt_num(l), bp.failure.value_or(ErrorKind::NoStationaryPoint), bp.message);
        continue;
      }
      est.push_back(bp.trajectory->estimate);
      for (std::size_t f = 0; f < bp.trajectory->families.size(); ++f) {
        const auto& fam = bp.trajectory->families[f];
        for (std::size_t k = 0; k < bp.thetas.size(); ++k)
          tr.add({fmt_num(l), std::to_string(f), fmt_num(bp.thetas[k]), fmt_num(fam.values[k].real()),
                  fmt_num(fam.values[k].imag()), fmt_num(fam.median_speed), f == bp.trajectory->selected ? "1" : "0"});
      }
    }
    auto t = estimates_table("cscale.csv", est);
    t.notes = {"E_r = Re E and Gamma = -2 Im E at the most stationary theta of the selected family"};
    store.write(t);
    store.write(tr);
  } else if (verb == "fidelity") {
    run_figure("4", ws, &store);
  } else if (verb == "do") {
    run_figure("5", ws, &store);
  } else if (verb == "entropy") {
    run_figure("6", ws, &store);
    run_figure("9b", ws, &store);
  } else if (verb == "table1") {
    const auto rep = run_table1(ws, &store);
    std::cout << rep.text;
  } else if (verb == "figure") {
    if (args.empty()) throw Error(ErrorKind::UnknownFigure, "figure needs an id");
    run_figure(args.front(), ws, &store);
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown command " + verb);
  }

  for (const auto& f : store.failures()) std::cerr << "partial: " << f.where << ": " << f.message << "\n";
  const auto manifest = store.write_manifest(&ws.cache());
  std::cerr << "wrote " << manifest.string() << "\n";
  return store.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  SweepConfig cfg;
  CLI::App app{"Two-electron quantum dot resonances: spectra, resonance estimates, detectors and entropies"};
  app.require_subcommand(1);
  app.fallthrough();  // global and config flags may also follow the verb
  add_config_flags(app, cfg);
  std::string config_file;
  bool no_cache = false;
  app.add_option("-c,--config", config_file, "JSON config; its keys override flags");
  app.add_flag("--no-cache", no_cache, "do not read or write the cache");

  double lambda = 0.0;
  double theta = 0.0;
  std::vector<std::string> args;
  std::string figure_id;

  auto* spectrum = app.add_subcommand("spectrum", "variational or complex-scaled spectrum at one lambda");
  spectrum->add_option("--lambda", lambda)->required();
  spectrum->add_option("--theta", theta, "0 for the real spectrum");
  auto* dos = app.add_subcommand("dos", "stabilization density of states and Lorentzian fits");
  dos->add_option("--lambda", lambda, "default: dos_lambda");
  auto* fit = app.add_subcommand("fit", "Lorentzian fits only");
  fit->add_option("--lambda", lambda, "default: dos_lambda");
  auto* cscale = app.add_subcommand("cscale", "complex-scaling theta trajectories");
  cscale->add_option("--lambda", lambda, "default: every table lambda");
  app.add_subcommand("fidelity", "fidelity detector curves and minima");
  app.add_subcommand("do", "double-orthogonality curves and minima");
  app.add_subcommand("entropy", "linear, von Neumann and complex linear entropies");
  app.add_subcommand("table1", "resonance energies by four methods at the tabulated couplings");
  auto* figure = app.add_subcommand("figure", "data behind one figure");
  figure->add_option("id", figure_id, "1a 1b 2a 2b 3 4 5 6 7 8 9a 9b")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    if (no_cache) cfg.cache_dir.clear();
    cfg.validate();
    const auto* sub = app.get_subcommands().front();
    const std::string verb = sub->get_name();
    if (verb == "figure") args = {figure_id};
    if ((verb == "dos" || verb == "fit") && !(lambda > 0.0)) lambda = cfg.dos_lambda;
    return run(verb, cfg, args, lambda, verb == "spectrum" ? std::optional<double>(theta) : std::nullopt);
  } catch (const qdres::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
