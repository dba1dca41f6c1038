#pragma once
// Sweep orchestration and persistence: the shared workspace (bases, scans,
// resonance branch), the table1 run, figure data files, CSV tables and the JSON
// run manifest.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qdres/cache.hpp"
#include "qdres/config.hpp"
#include "qdres/diagnostics.hpp"
#include "qdres/error.hpp"
#include "qdres/onebody.hpp"
#include "qdres/resonance.hpp"
#include "qdres/spectra.hpp"

namespace qdres {

constexpr const char* kCodeVersion = "qdres 1.0.0";

inline std::string fmt_num(double x) {
  if (std::isnan(x)) return "nan";
  char b[40];
  std::snprintf(b, sizeof b, "%.10g", x);
  return b;
}

// ---------------------------------------------------------------------------
// Results

struct CsvTable {
  std::string file;
  std::string schema;  // name/version
  std::vector<std::string> notes;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> r) {
    if (r.size() != columns.size()) throw Error(ErrorKind::InvalidArgument, "row width mismatch in " + file);
    rows.push_back(std::move(r));
  }
};

struct Failure {
  std::string where;
  ErrorKind kind = ErrorKind::InvalidArgument;
  std::string message;
};

/// Single writer for one command: CSV tables (every row stamped with the
/// config hash) and a manifest echoing the effective configuration.
class ResultStore {
 public:
  ResultStore(const SweepConfig& cfg, std::string command)
      : cfg_(cfg), command_(std::move(command)), hash_(config_hash(cfg)), dir_(cfg.output_dir),
        started_(std::chrono::system_clock::now()) {
    std::filesystem::create_directories(dir_);
  }

  const std::string& hash() const { return hash_; }
  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path write(const CsvTable& t) {
    const auto p = dir_ / t.file;
    std::ofstream out(p);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + p.string());
    out << "# schema: " << t.schema << "\n";
    for (const auto& n : t.notes) out << "# " << n << "\n";
    for (const auto& c : t.columns) out << c << ",";
    out << "config_hash\n";
    for (const auto& r : t.rows) {
      for (const auto& v : r) out << v << ",";
      out << hash_ << "\n";
    }
    if (!out) throw Error(ErrorKind::Io, "write failed for " + p.string());
    files_.push_back({{"file", t.file}, {"schema", t.schema}, {"rows", t.rows.size()}});
    return p;
  }

  void fail(std::string where, const Error& e) { failures_.push_back({std::move(where), e.kind(), e.what()}); }
  void fail(std::string where, ErrorKind k, std::string msg) { failures_.push_back({std::move(where), k, std::move(msg)}); }
  void warn(std::string msg) { warnings_.push_back(std::move(msg)); }
  void note(const std::string& key, nlohmann::json v) { extra_[key] = std::move(v); }

  const std::vector<Failure>& failures() const { return failures_; }
  int exit_code() const { return failures_.empty() ? 0 : 2; }

  std::filesystem::path write_manifest(const Cache* cache = nullptr) {
    const auto finished = std::chrono::system_clock::now();
    nlohmann::json m;
    m["code_version"] = kCodeVersion;
    m["cache_format"] = kCacheFormatVersion;
    m["command"] = command_;
    nlohmann::json c;
    to_json(c, cfg_);
    m["config"] = c;
    m["config_hash"] = hash_;
    m["started_utc"] = iso(started_);
    m["finished_utc"] = iso(finished);
    m["elapsed_s"] = std::chrono::duration<double>(finished - started_).count();
    m["files"] = files_;
    nlohmann::json f = nlohmann::json::array();
    for (const auto& x : failures_) f.push_back({{"where", x.where}, {"kind", to_string(x.kind)}, {"message", x.message}});
    m["failures"] = f;
    m["warnings"] = warnings_;
    m["status"] = failures_.empty() ? "ok" : "partial";
    if (cache && cache->enabled())
      m["cache"] = {{"dir", cache->dir().string()}, {"hits", cache->hits()}, {"misses", cache->misses()}};
    for (auto it = extra_.begin(); it != extra_.end(); ++it) m[it.key()] = it.value();
    std::string name = command_;
    for (auto& ch : name)
      if (ch == ' ' || ch == '/') ch = '_';
    const auto p = dir_ / (name + ".manifest.json");
    std::ofstream out(p);
    out << m.dump(2) << "\n";
    if (!out) throw Error(ErrorKind::Io, "cannot write " + p.string());
    return p;
  }

 private:
  static std::string iso(std::chrono::system_clock::time_point t) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char b[32];
    std::strftime(b, sizeof b, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return b;
  }

  SweepConfig cfg_;
  std::string command_;
  std::string hash_;
  std::filesystem::path dir_;
  std::chrono::system_clock::time_point started_;
  nlohmann::json files_ = nlohmann::json::array();
  std::vector<Failure> failures_;
  std::vector<std::string> warnings_;
  nlohmann::json extra_ = nlohmann::json::object();
};

// ---------------------------------------------------------------------------
// Resonance branch: theta trajectory plus c-normalized eigenvectors at every
// theta, with <1/r12>_theta, a fixed-theta finite difference of E in lambda,
// and the complex linear entropy.

struct BranchPoint {
  double lambda = 0.0;
  std::optional<TrajectoryResult> trajectory;
  std::vector<double> thetas;
  std::vector<std::complex<double>> E;      // selected family, per theta
  std::vector<std::complex<double>> r12;    // e^{-i theta} y^T W y
  std::vector<std::complex<double>> dE_dl;  // central difference at fixed theta
  std::vector<std::complex<double>> S;      // complex linear entropy
  std::vector<std::complex<double>> trace;  // tr rho^theta_red
  std::optional<ErrorKind> failure;
  std::string message;

  bool ok() const { return trajectory.has_value() && !failure; }
};

constexpr double kBranchFiniteDifference = 1e-4;

inline BranchPoint resonance_point(const std::shared_ptr<const ReducedOperators>& red, const SchmidtMap* map,
                                   double V0, double lambda, const std::vector<double>& thetas,
                                   const TrajectoryOptions& opt, bool vectors) {
  BranchPoint bp;
  bp.lambda = lambda;
  bp.thetas = thetas;
  try {
    bp.trajectory = theta_trajectory(red, {V0, lambda, 0.0}, thetas, opt);
  } catch (const Error& e) {
    bp.failure = e.kind();
    bp.message = e.what();
    return bp;
  }
  const auto& fam = bp.trajectory->families[bp.trajectory->selected];
  bp.E = fam.values;
  if (!vectors) return bp;
  const double d = kBranchFiniteDifference;
  try {
    for (std::size_t t = 0; t < thetas.size(); ++t) {
      const double th = thetas[t];
      std::complex<double> E;
      const Eigen::VectorXcd y = complex_eigenvector(red->scaled_hamiltonian({V0, lambda, th}), fam.values[t], &E);
      bp.E[t] = E;
      bp.r12.push_back(complex_coulomb_expectation(*red, y, th));
      std::complex<double> Ep, Em;
      complex_eigenvector(red->scaled_hamiltonian({V0, lambda + d, th}), E, &Ep);
      complex_eigenvector(red->scaled_hamiltonian({V0, std::max(0.0, lambda - d), th}), E, &Em);
      bp.dE_dl.push_back((Ep - Em) / (lambda + d - std::max(0.0, lambda - d)));
      if (map) {
        const auto rep = complex_linear_entropy(*map, y, th);
        bp.S.push_back(rep.S_lin);
        bp.trace.push_back(rep.trace);
      }
    }
  } catch (const Error& e) {
    bp.failure = e.kind();
    bp.message = e.what();
  }
  return bp;
}

// ---------------------------------------------------------------------------
// Workspace: lazily built, memoized inputs shared by every command.

struct DosReport {
  StabilizationGrid grid;
  std::vector<DosCurve> curves;
  std::vector<ResonanceEstimate> fits;
  std::vector<Failure> failures;
  std::optional<ResonanceEstimate> best;
};

class Workspace {
 public:
  explicit Workspace(SweepConfig cfg) : cfg_(std::move(cfg)), cache_(cfg_.cache_dir) { cfg_.validate(); }

  const SweepConfig& config() const { return cfg_; }
  Cache& cache() { return cache_; }

  double epsilon() {
    if (!eps_) eps_ = threshold_bessel(cfg_.V0).epsilon;
    return *eps_;
  }

  std::shared_ptr<const ReducedOperators> basis_at(double alpha) {
    auto it = bases_.find(alpha);
    if (it != bases_.end()) return it->second;
    auto red = cache_.reduced({cfg_.N, alpha}, cfg_.overlap_cutoff);
    bases_[alpha] = red;
    return red;
  }

  std::shared_ptr<const ReducedOperators> basis() { return basis_at(cfg_.alpha); }

  const LambdaScan& scan() {
    if (!scan_) scan_ = cache_.scan(basis(), cfg_.V0, cfg_.lambdas(), cfg_.levels, cfg_.workers);
    return *scan_;
  }

  /// Scan at another alpha over the configured lambda grid (not memoized).
  LambdaScan scan_at(double alpha, int levels) {
    return cache_.scan(basis_at(alpha), cfg_.V0, cfg_.lambdas(), levels, cfg_.workers);
  }

  const SchmidtMap& schmidt() {
    if (!schmidt_) schmidt_ = std::make_unique<SchmidtMap>(*basis());
    return *schmidt_;
  }

  std::vector<std::shared_ptr<const ReducedOperators>> stabilization_bases() {
    std::vector<std::shared_ptr<const ReducedOperators>> out;
    for (double a : cfg_.alphas()) out.push_back(basis_at(a));
    return out;
  }

  TrajectoryOptions trajectory_options() {
    TrajectoryOptions o;
    o.epsilon = epsilon();
    o.imag_slack = cfg_.imag_slack;
    o.imag_floor = cfg_.imag_floor;
    o.speed_floor = cfg_.speed_floor;
    return o;
  }

  FitOptions fit_options() const {
    FitOptions o;
    o.max_iterations = cfg_.fit_max_iterations;
    o.step_tolerance = cfg_.fit_step_tolerance;
    return o;
  }

  /// Complex-scaling estimate at lambda (memoized).
  ResonanceEstimate complex_scaling(double lambda) {
    auto it = cs_.find(lambda);
    if (it != cs_.end()) return it->second;
    const auto r = theta_trajectory(basis(), {cfg_.V0, lambda, 0.0}, cfg_.thetas, trajectory_options());
    cs_[lambda] = r.estimate;
    return r.estimate;
  }

  BranchPoint branch_point(double lambda, bool vectors) {
    return resonance_point(basis(), vectors ? &schmidt() : nullptr, cfg_.V0, lambda, cfg_.thetas,
                           trajectory_options(), vectors);
  }

  /// Resonance branch over the coarse lambda grid (memoized per mode).
  const std::vector<BranchPoint>& branch(bool vectors) {
    auto& slot = vectors ? branch_full_ : branch_light_;
    if (!slot) {
      const auto ls = cfg_.branch_lambdas();
      std::vector<BranchPoint> pts(ls.size());
      if (vectors) schmidt();
      basis();
      epsilon();
      parallel_for(ls.size(), [&](std::size_t i) {
        pts[i] = resonance_point(bases_.at(cfg_.alpha), vectors ? schmidt_.get() : nullptr, cfg_.V0, ls[i],
                                 cfg_.thetas, trajectory_options_const(), vectors);
      }, cfg_.workers);
      slot = std::move(pts);
    }
    return *slot;
  }

  DosReport dos(double lambda, int max_level) {
    DosReport r;
    r.grid = build_stabilization_grid(lambda, stabilization_bases(), cfg_.V0);
    const double eps = epsilon();
    for (int n = 1; n <= max_level; ++n) {
      r.curves.push_back(dos_from_levels(r.grid, n));
      try {
        auto est = lorentzian_fit(r.curves.back(), std::nullopt, fit_options());
        if (!est.in_window(eps)) throw Error(ErrorKind::NoPeak, "fitted centre outside (epsilon, 0)");
        r.fits.push_back(est);
      } catch (const Error& e) {
        r.failures.push_back({"dos level " + std::to_string(n), e.kind(), e.what()});
      }
    }
    if (!r.fits.empty()) r.best = select_best_fit(r.fits, eps);
    return r;
  }

 private:
  TrajectoryOptions trajectory_options_const() const {
    TrajectoryOptions o;
    o.epsilon = *eps_;
    o.imag_slack = cfg_.imag_slack;
    o.imag_floor = cfg_.imag_floor;
    o.speed_floor = cfg_.speed_floor;
    return o;
  }

  SweepConfig cfg_;
  Cache cache_;
  std::optional<double> eps_;
  std::map<double, std::shared_ptr<const ReducedOperators>> bases_;
  std::optional<LambdaScan> scan_;
  std::unique_ptr<SchmidtMap> schmidt_;
  std::map<double, ResonanceEstimate> cs_;
  std::optional<std::vector<BranchPoint>> branch_full_, branch_light_;
};

// ---------------------------------------------------------------------------
// table1: four estimates per coupling

struct Table1Cell {
  double row_lambda = 0.0;
  int row_level = 0;
  ResonanceMethod method = ResonanceMethod::complex_scaling;
  ResonanceEstimate estimate;
  double lambda_eval = 0.0;             // where the method read its energy
  std::optional<double> reference;      // complex-scaling E_r at lambda_eval
  double rel_dev = std::numeric_limits<double>::quiet_NaN();
  bool selected = false;                // minimum chi^2 DOS fit of the row
  std::string status = "ok";
};

struct Table1Report {
  std::vector<Table1Cell> cells;
  std::vector<double> row_spread;  // max relative deviation per row (NaN if a method is missing)
  CsvTable csv;
  std::string text;
};

inline Table1Report run_table1(Workspace& ws, ResultStore* store = nullptr) {
  const auto& cfg = ws.config();
  Table1Report rep;
  auto fail = [&](const std::string& where, const Error& e) {
    if (store) store->fail(where, e);
  };
  auto reference = [&](Table1Cell& c) {
    try {
      c.reference = ws.complex_scaling(c.lambda_eval).E_r;
      c.rel_dev = std::abs(c.estimate.E_r - *c.reference) / std::abs(*c.reference);
    } catch (const Error& e) {
      c.status = std::string("no reference: ") + to_string(e.kind());
    }
  };

  const auto& scan = ws.scan();
  PeakOptions peaks;
  peaks.floor = cfg.peak_floor;

  for (std::size_t r = 0; r < cfg.table_lambdas.size(); ++r) {
    const double lam = cfg.table_lambdas[r];
    const int n = static_cast<int>(r) + 2;
    const std::string row = "row lambda=" + fmt_num(lam);
    std::vector<double> devs;
    bool complete = true;

    // complex scaling at the tabulated lambda
    {
      Table1Cell c{lam, n, ResonanceMethod::complex_scaling};
      c.lambda_eval = lam;
      try {
        c.estimate = ws.complex_scaling(lam);
        c.reference = c.estimate.E_r;
        c.rel_dev = 0.0;
        if (!c.estimate.width_resolved()) c.status = "ok (width unresolved)";
      } catch (const Error& e) {
        c.status = std::string("failed: ") + e.what();
        fail(row + " complex_scaling", e);
        complete = false;
      }
      rep.cells.push_back(c);
    }

    // fidelity and DO for level n at alpha
    DetectorCurve fid;
    {
      Table1Cell c{lam, n, ResonanceMethod::fidelity};
      c.estimate.method = ResonanceMethod::fidelity;
      c.estimate.level = n;
      c.estimate.alpha = cfg.alpha;
      try {
        if (n > scan.levels) throw Error(ErrorKind::InvalidArgument, "level beyond the stored vectors");
        fid = fidelity_curve(scan, n, cfg.fidelity_delta, peaks);
        if (!fid.ok()) throw Error(fid.failure.value_or(ErrorKind::PeakCountMismatch), fid.message);
        c.lambda_eval = *fid.lambda_min;
        c.estimate.lambda = c.lambda_eval;
        c.estimate.E_r = *fid.energy_min;
        reference(c);
      } catch (const Error& e) {
        c.status = std::string("failed: ") + e.what();
        fail(row + " fidelity n=" + std::to_string(n), e);
      }
      if (!std::isnan(c.rel_dev)) devs.push_back(c.rel_dev); else complete = false;
      rep.cells.push_back(c);
    }
    {
      Table1Cell c{lam, n, ResonanceMethod::double_orthogonality};
      c.estimate.method = ResonanceMethod::double_orthogonality;
      c.estimate.level = n;
      c.estimate.alpha = cfg.alpha;
      try {
        const auto [L, R] = do_anchors_from_fidelity(fid, scan, cfg.do_margin);
        const auto d = do_curve(scan, n, L, R, cfg.do_max_anchor_overlap);
        if (!d.ok()) throw Error(d.failure.value_or(ErrorKind::InvalidArgument), d.message);
        c.lambda_eval = *d.lambda_min;
        c.estimate.lambda = c.lambda_eval;
        c.estimate.E_r = *d.energy_min;
        reference(c);
      } catch (const Error& e) {
        c.status = std::string("failed: ") + e.what();
        fail(row + " double_orthogonality n=" + std::to_string(n), e);
      }
      if (!std::isnan(c.rel_dev)) devs.push_back(c.rel_dev); else complete = false;
      rep.cells.push_back(c);
    }

    // stabilization DOS at the tabulated lambda, every level fitted
    try {
      const auto dos = ws.dos(lam, cfg.dos_max_level);
      for (const auto& f : dos.failures)
        if (store) store->warn(row + " " + f.where + ": " + f.message);
      if (!dos.best) throw Error(ErrorKind::AllFitsFailed, "no DOS level produced a fit in the window");
      std::optional<double> ref;
      try {
        ref = ws.complex_scaling(lam).E_r;
      } catch (const Error&) {
      }
      for (const auto& est : dos.fits) {
        Table1Cell c{lam, n, ResonanceMethod::dos_fit};
        c.estimate = est;
        c.lambda_eval = lam;
        c.selected = est.level == dos.best->level;
        if (ref) {
          c.reference = ref;
          c.rel_dev = std::abs(est.E_r - *ref) / std::abs(*ref);
        } else {
          c.status = "no reference";
        }
        if (c.selected) {
          if (!std::isnan(c.rel_dev)) devs.push_back(c.rel_dev); else complete = false;
        }
        rep.cells.push_back(c);
      }
    } catch (const Error& e) {
      Table1Cell c{lam, n, ResonanceMethod::dos_fit};
      c.lambda_eval = lam;
      c.status = std::string("failed: ") + e.what();
      fail(row + " dos_fit", e);
      rep.cells.push_back(c);
      complete = false;
    }

    double spread = 0.0;
    for (double d : devs) spread = std::max(spread, d);
    rep.row_spread.push_back(complete ? spread : std::numeric_limits<double>::quiet_NaN());
  }

  auto& t = rep.csv;
  t.file = "table1.csv";
  t.schema = "qdres/table1 v1";
  t.notes = {"one row per method estimate; lambda is the tabulated coupling, lambda_eval where the method read E_r",
             "reference_E is the complex-scaling E_r at lambda_eval; rel_dev = |E_r - reference_E| / |reference_E|",
             "Gamma = -2 Im E (complex scaling) or the Lorentzian width (dos_fit); chi2 only for dos_fit",
             "selected marks the minimum-chi2 DOS fit of the row"};
  t.columns = {"lambda", "method", "level", "alpha", "E_r", "Gamma", "chi2", "lambda_eval", "theta", "reference_E",
               "rel_dev", "selected", "status"};
  for (const auto& c : rep.cells) {
    const auto& e = c.estimate;
    const bool has = c.status.rfind("ok", 0) == 0 || c.status.rfind("no reference", 0) == 0;
    t.add({fmt_num(c.row_lambda), to_string(c.method),
           c.method == ResonanceMethod::complex_scaling ? "" : std::to_string(e.level ? e.level : c.row_level),
           fmt_num(c.method == ResonanceMethod::complex_scaling ? cfg.alpha : e.alpha), has ? fmt_num(e.E_r) : "nan",
           has ? fmt_num(e.Gamma) : "nan", fmt_num(e.chi2), fmt_num(c.lambda_eval), fmt_num(e.theta),
           c.reference ? fmt_num(*c.reference) : "nan", fmt_num(c.rel_dev), c.selected ? "1" : "0",
           "\"" + c.status + "\""});
  }

  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-8s %-5s %-11s %-11s %-11s %-11s %-9s\n", "lambda", "n", "CS", "DO", "fidelity",
                "DOS(best)", "spread%");
  os << buf;
  for (std::size_t r = 0; r < cfg.table_lambdas.size(); ++r) {
    auto pick = [&](ResonanceMethod m) -> std::string {
      for (const auto& c : rep.cells)
        if (c.row_lambda == cfg.table_lambdas[r] && c.method == m &&
            (m != ResonanceMethod::dos_fit || c.selected) && c.status.rfind("failed", 0) != 0)
          return fmt_num(c.estimate.E_r).substr(0, 10);
      return "--";
    };
    std::snprintf(buf, sizeof buf, "%-8s %-5d %-11s %-11s %-11s %-11s %-9s\n", fmt_num(cfg.table_lambdas[r]).c_str(),
                  static_cast<int>(r) + 2, pick(ResonanceMethod::complex_scaling).c_str(),
                  pick(ResonanceMethod::double_orthogonality).c_str(), pick(ResonanceMethod::fidelity).c_str(),
                  pick(ResonanceMethod::dos_fit).c_str(),
                  std::isnan(rep.row_spread[r]) ? "--" : fmt_num(100.0 * rep.row_spread[r]).substr(0, 7).c_str());
    os << buf;
  }
  rep.text = os.str();

  if (store) {
    store->write(rep.csv);
    std::ofstream(store->dir() / "table1.txt") << rep.text;
    store->note("epsilon", ws.epsilon());
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Figures

inline const std::vector<std::string>& figure_ids() {
  static const std::vector<std::string> ids = {"1a", "1b", "2a", "2b", "3", "4", "5", "6", "7", "8", "9a", "9b"};
  return ids;
}

namespace detail {

inline void add_branch_rows(CsvTable& t, const std::vector<BranchPoint>& br, int ref, std::size_t width) {
  for (const auto& bp : br) {
    if (!bp.ok()) continue;
    std::vector<std::string> row = {fmt_num(bp.lambda), "complex_scaling", "", fmt_num(bp.E[static_cast<std::size_t>(ref)].real()),
                                    fmt_num(bp.E[static_cast<std::size_t>(ref)].imag())};
    row.resize(width);
    t.add(row);
  }
}

inline CsvTable level_fan(Workspace& ws, bool with_cs) {
  const auto& cfg = ws.config();
  auto red = ws.basis();
  const auto ls = cfg.lambdas();
  std::vector<Eigen::VectorXd> E(ls.size());
  parallel_for(ls.size(), [&](std::size_t i) { E[i] = solve_real(red, {cfg.V0, ls[i], 0.0}, false).energies; },
               cfg.workers);
  CsvTable t;
  t.file = with_cs ? "fig1b_levels_cs.csv" : "fig1a_levels.csv";
  t.schema = with_cs ? "qdres/fig1b v1" : "qdres/fig1a v1";
  t.notes = {"variational levels E_j(lambda) at N=" + std::to_string(cfg.N) + ", alpha=" + fmt_num(cfg.alpha),
             "threshold epsilon=" + fmt_num(ws.epsilon())};
  t.columns = {"lambda", "series", "level", "E_re", "E_im"};
  for (std::size_t i = 0; i < ls.size(); ++i)
    for (int j = 0; j < cfg.levels; ++j)
      t.add({fmt_num(ls[i]), "level", std::to_string(j + 1), fmt_num(E[i](j)), "0"});
  for (double l : {cfg.lambda_min, cfg.lambda_max}) t.add({fmt_num(l), "threshold", "", fmt_num(ws.epsilon()), "0"});
  if (with_cs) {
    t.notes.push_back("complex_scaling rows: resonance eigenvalue at theta=" + fmt_num(cfg.reference_theta));
    add_branch_rows(t, ws.branch(false), cfg.reference_theta_index(), t.columns.size());
  }
  return t;
}

inline CsvTable level_vs_alpha(Workspace& ws, int level) {
  const auto& cfg = ws.config();
  const auto alphas = cfg.alphas();
  const auto ls = cfg.lambdas();
  CsvTable t;
  t.file = level == 1 ? "fig2a_level1_alpha.csv" : "fig2b_level2_alpha.csv";
  t.schema = level == 1 ? "qdres/fig2a v1" : "qdres/fig2b v1";
  t.notes = {"E_" + std::to_string(level) + "(lambda) for each alpha of the stabilization grid",
             "complex_scaling rows: E_r at theta=" + fmt_num(cfg.reference_theta)};
  t.columns = {"lambda", "series", "alpha", "E_re", "E_im"};
  for (double a : alphas) {
    auto red = ws.basis_at(a);
    std::vector<double> E(ls.size());
    parallel_for(ls.size(), [&](std::size_t i) {
      E[i] = solve_real(red, {cfg.V0, ls[i], 0.0}, false).energies(level - 1);
    }, cfg.workers);
    for (std::size_t i = 0; i < ls.size(); ++i) t.add({fmt_num(ls[i]), "level", fmt_num(a), fmt_num(E[i]), "0"});
  }
  add_branch_rows(t, ws.branch(false), cfg.reference_theta_index(), t.columns.size());
  return t;
}

}  // namespace detail

/// Writes the data behind one figure. Returns the tables written.
inline std::vector<CsvTable> run_figure(const std::string& id, Workspace& ws, ResultStore* store = nullptr) {
  const auto& cfg = ws.config();
  if (std::find(figure_ids().begin(), figure_ids().end(), id) == figure_ids().end())
    throw Error(ErrorKind::UnknownFigure, "unknown figure id: " + id);
  std::vector<CsvTable> out;
  auto warn = [&](const std::string& m) {
    if (store) store->warn(m);
  };
  const int ref = cfg.reference_theta_index();

  if (id == "1a" || id == "1b") {
    out.push_back(detail::level_fan(ws, id == "1b"));
  } else if (id == "2a" || id == "2b") {
    out.push_back(detail::level_vs_alpha(ws, id == "2a" ? 1 : 2));
  } else if (id == "3") {
    const auto dos = ws.dos(cfg.dos_lambda, std::max(5, cfg.dos_max_level));
    CsvTable t;
    t.file = "fig3_dos.csv";
    t.schema = "qdres/fig3 v1";
    t.notes = {"density of states rho(E) = |dE/dalpha|^-1 (centered differences) at lambda=" + fmt_num(cfg.dos_lambda)};
    t.columns = {"level", "alpha", "E", "rho"};
    for (const auto& c : dos.curves) {
      if (c.level < 2 || c.level > 5) continue;
      for (const auto& s : c.samples) t.add({std::to_string(c.level), fmt_num(s.alpha), fmt_num(s.E), fmt_num(s.rho)});
    }
    out.push_back(t);
    CsvTable f;
    f.file = "fig3_fits.csv";
    f.schema = "qdres/fig3-fits v1";
    f.notes = {"Lorentzian fits per level; selected marks the minimum chi2 fit inside (epsilon, 0)"};
    f.columns = {"level", "alpha", "E_r", "Gamma", "chi2", "selected"};
    for (const auto& e : dos.fits)
      f.add({std::to_string(e.level), fmt_num(e.alpha), fmt_num(e.E_r), fmt_num(e.Gamma), fmt_num(e.chi2),
             dos.best && dos.best->level == e.level ? "1" : "0"});
    for (const auto& x : dos.failures) warn("fig3 " + x.where + ": " + x.message);
    out.push_back(f);
  } else if (id == "4") {
    const auto& scan = ws.scan();
    PeakOptions po;
    po.floor = cfg.peak_floor;
    CsvTable t, m;
    t.file = "fig4_fidelity.csv";
    t.schema = "qdres/fig4 v1";
    t.notes = {"G_n = 1 - |<Psi_n(lambda), Psi_n(lambda + delta)>|^2 at alpha=" + fmt_num(cfg.alpha)};
    t.columns = {"lambda", "level", "G", "E"};
    m.file = "fig4_minima.csv";
    m.schema = "qdres/fig4-minima v1";
    m.notes = {"peaks of G_n and the minimum between the two highest (lambda_n^f)"};
    m.columns = {"level", "delta", "peaks", "lambda_f", "E_f", "status"};
    for (int n = 1; n <= 7; ++n) {
      const auto c = fidelity_curve(scan, n, cfg.fidelity_delta, po);
      for (std::size_t i = 0; i < c.lambdas.size(); ++i)
        t.add({fmt_num(c.lambdas[i]), std::to_string(n), fmt_num(c.values[i]), fmt_num(c.energies[i])});
      std::string pk;
      for (double p : c.peaks) pk += (pk.empty() ? "" : " ") + fmt_num(p);
      m.add({std::to_string(n), fmt_num(c.delta), "\"" + pk + "\"", c.lambda_min ? fmt_num(*c.lambda_min) : "nan",
             c.energy_min ? fmt_num(*c.energy_min) : "nan", c.failure ? to_string(*c.failure) : "ok"});
      if (c.failure) warn("fig4 level " + std::to_string(n) + ": " + c.message);
    }
    out.push_back(t);
    out.push_back(m);
  } else if (id == "5") {
    const auto& scan = ws.scan();
    PeakOptions po;
    po.floor = cfg.peak_floor;
    CsvTable t, m;
    t.file = "fig5_do.csv";
    t.schema = "qdres/fig5 v1";
    t.notes = {"DO_n = |<Psi_n(lambda_L), Psi_n>|^2 + |<Psi_n(lambda_R), Psi_n>|^2 at alpha=" + fmt_num(cfg.alpha),
               "anchors placed outside the two fidelity peaks of level n"};
    t.columns = {"lambda", "level", "DO", "E"};
    m.file = "fig5_minima.csv";
    m.schema = "qdres/fig5-minima v1";
    m.columns = {"level", "lambda_L", "lambda_R", "anchor_overlap", "lambda_DO", "E_DO", "status"};
    for (int n = 2; n <= 7; ++n) {
      try {
        const auto f = fidelity_curve(scan, n, cfg.fidelity_delta, po);
        const auto [L, R] = do_anchors_from_fidelity(f, scan, cfg.do_margin);
        const auto c = do_curve(scan, n, L, R, cfg.do_max_anchor_overlap);
        for (std::size_t i = 0; i < c.lambdas.size(); ++i)
          t.add({fmt_num(c.lambdas[i]), std::to_string(n), fmt_num(c.values[i]), fmt_num(c.energies[i])});
        m.add({std::to_string(n), fmt_num(L), fmt_num(R), fmt_num(c.anchor_overlap),
               c.lambda_min ? fmt_num(*c.lambda_min) : "nan", c.energy_min ? fmt_num(*c.energy_min) : "nan", "ok"});
      } catch (const Error& e) {
        m.add({std::to_string(n), "nan", "nan", "nan", "nan", "nan", to_string(e.kind())});
        warn("fig5 level " + std::to_string(n) + ": " + e.what());
      }
    }
    out.push_back(t);
    out.push_back(m);
  } else if (id == "6" || id == "9a") {
    const auto& scan = ws.scan();
    const auto& map = ws.schmidt();
    CsvTable t, m;
    t.file = id == "6" ? "fig6_entropy.csv" : "fig9a_linear_entropy.csv";
    t.schema = "qdres/fig6 v1";
    t.notes = {"linear and von Neumann (log2) entropy of the one-electron reduced density matrix",
               "spatial part only; the singlet spinor is a constant factor"};
    t.columns = {"lambda", "level", "S_lin", "S_vN", "trace"};
    m.file = id == "6" ? "fig6_minima.csv" : "fig9a_linear_minima.csv";
    m.schema = "qdres/fig6-minima v1";
    m.columns = {"level", "lambda_S", "S_min", "E"};
    for (int j = 1; j <= 7; ++j) {
      std::vector<double> S(scan.lambdas.size()), V(scan.lambdas.size()), tr(scan.lambdas.size());
      parallel_for(scan.lambdas.size(), [&](std::size_t i) {
        const auto r = entropy_report(map, scan.slices[i].Y.col(j - 1));
        S[i] = r.S_lin.real();
        V[i] = *r.S_vN;
        tr[i] = r.trace.real();
      }, cfg.workers);
      for (std::size_t i = 0; i < S.size(); ++i)
        t.add({fmt_num(scan.lambdas[i]), std::to_string(j), fmt_num(S[i]), fmt_num(V[i]), fmt_num(tr[i])});
      const auto im = static_cast<std::size_t>(std::min_element(S.begin(), S.end()) - S.begin());
      const double lm = parabolic_vertex(scan.lambdas, S, im);
      m.add({std::to_string(j), fmt_num(lm), fmt_num(S[im]), fmt_num(scan.slices[im].energies(j - 1))});
    }
    out.push_back(t);
    out.push_back(m);
    if (id == "9a") {
      auto more = run_figure("9b", ws, nullptr);
      out.insert(out.end(), more.begin(), more.end());
    }
  } else if (id == "7") {
    const auto& scan = ws.scan();
    CsvTable t;
    t.file = "fig7_hf.csv";
    t.schema = "qdres/fig7 v1";
    t.notes = {"<1/r12>_n of the variational states at alpha=" + fmt_num(cfg.alpha),
               "dEr_dlambda rows: Re <1/r12>_theta of the resonance (generalized Hellmann-Feynman) and the "
               "fixed-theta central difference of Re E, theta=" + fmt_num(cfg.reference_theta)};
    t.columns = {"lambda", "series", "level", "value", "finite_difference"};
    for (std::size_t i = 0; i < scan.lambdas.size(); ++i)
      for (int n = 1; n <= 8; ++n)
        t.add({fmt_num(scan.lambdas[i]), "r12", std::to_string(n), fmt_num(coulomb_expectation(scan.slices[i], n - 1)),
               ""});
    for (const auto& bp : ws.branch(true)) {
      if (!bp.ok()) continue;
      t.add({fmt_num(bp.lambda), "dEr_dlambda", "", fmt_num(bp.r12[static_cast<std::size_t>(ref)].real()),
             fmt_num(bp.dE_dl[static_cast<std::size_t>(ref)].real())});
    }
    out.push_back(t);
  } else if (id == "8") {
    CsvTable t;
    t.file = "fig8_r12.csv";
    t.schema = "qdres/fig8 v1";
    t.notes = {"variational rows: <1/r12>_2 for several alpha",
               "complex rows: <1/r12>_theta = e^{-i theta} y^T W y (c-product) at theta=" + fmt_num(cfg.reference_theta) +
                   " and the fixed-theta central difference dE/dlambda"};
    t.columns = {"lambda", "series", "alpha", "re", "im", "finite_difference_re", "finite_difference_im"};
    std::vector<double> alphas;
    for (int k = 0; k <= 15; ++k) alphas.push_back(2.0 + 0.1 * k);
    for (double a : {4.0, 4.5, 5.0, 5.5}) alphas.push_back(a);
    for (double a : alphas) {
      const auto s = ws.scan_at(a, 2);
      for (std::size_t i = 0; i < s.lambdas.size(); ++i)
        t.add({fmt_num(s.lambdas[i]), "variational", fmt_num(a), fmt_num(coulomb_expectation(s.slices[i], 1)), "0", "",
               ""});
    }
    std::vector<double> ls;
    std::vector<std::complex<double>> r12;
    for (const auto& bp : ws.branch(true)) {
      if (!bp.ok()) continue;
      const auto k = static_cast<std::size_t>(ref);
      t.add({fmt_num(bp.lambda), "complex", fmt_num(cfg.alpha), fmt_num(bp.r12[k].real()), fmt_num(bp.r12[k].imag()),
             fmt_num(bp.dE_dl[k].real()), fmt_num(bp.dE_dl[k].imag())});
      ls.push_back(bp.lambda);
      r12.push_back(bp.r12[k]);
    }
    const auto lrep = detect_lambda_rep(ls, r12, cfg.lambda_rep_threshold);
    t.notes.push_back("lambda_rep (first |Im <1/r12>_theta| > " + fmt_num(cfg.lambda_rep_threshold) +
                      ") = " + (lrep ? fmt_num(*lrep) : std::string("not reached")));
    if (store) store->note("lambda_rep", lrep ? nlohmann::json(*lrep) : nlohmann::json(nullptr));
    out.push_back(t);
  } else if (id == "9b") {
    CsvTable t;
    t.file = "fig9_complex_entropy.csv";
    t.schema = "qdres/fig9 v1";
    t.notes = {"complex linear entropy S^theta = 1 - tr (rho^theta_red)^2 of the c-normalized resonance vector",
               "trace is tr rho^theta_red (1 by c-normalization)"};
    t.columns = {"lambda", "theta", "S_re", "S_im", "E_re", "E_im", "trace_re", "trace_im"};
    for (const auto& bp : ws.branch(true)) {
      if (!bp.ok()) continue;
      for (std::size_t k = 0; k < bp.thetas.size(); ++k)
        t.add({fmt_num(bp.lambda), fmt_num(bp.thetas[k]), fmt_num(bp.S[k].real()), fmt_num(bp.S[k].imag()),
               fmt_num(bp.E[k].real()), fmt_num(bp.E[k].imag()), fmt_num(bp.trace[k].real()),
               fmt_num(bp.trace[k].imag())});
    }
    out.push_back(t);
  }

  if (id == "1b" || id == "2a" || id == "2b" || id == "7" || id == "8" || id == "9a" || id == "9b") {
    for (const auto& bp : ws.branch(id != "1b" && id != "2a" && id != "2b"))
      if (bp.failure && *bp.failure != ErrorKind::NoStationaryPoint)
        warn("resonance branch lambda=" + fmt_num(bp.lambda) + ": " + bp.message);
  }
  if (store)
    for (const auto& t : out) store->write(t);
  return out;
}

}  // namespace qdres
