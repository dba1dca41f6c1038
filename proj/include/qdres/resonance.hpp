#pragma once
// Resonance position and width from
//  (a) the stabilization density of states rho_j(E) = |dE_j/dalpha|^{-1}
//      fitted with a Lorentzian, and
//  (b) complex-scaling eigenvalue trajectories in theta.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qdres/error.hpp"
#include "qdres/spectra.hpp"
#include "qdres/util.hpp"

namespace qdres {

enum class ResonanceMethod { dos_fit, complex_scaling, fidelity, double_orthogonality };

inline const char* to_string(ResonanceMethod m) {
  switch (m) {
    case ResonanceMethod::dos_fit: return "dos_fit";
    case ResonanceMethod::complex_scaling: return "complex_scaling";
    case ResonanceMethod::fidelity: return "fidelity";
    case ResonanceMethod::double_orthogonality: return "double_orthogonality";
  }
  return "unknown";
}

struct ResonanceEstimate {
  double lambda = 0.0;
  double E_r = 0.0;
  double Gamma = std::numeric_limits<double>::quiet_NaN();
  ResonanceMethod method = ResonanceMethod::dos_fit;
  double chi2 = std::numeric_limits<double>::quiet_NaN();
  int level = 0;  // 1-based variational level, 0 when not applicable
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double theta = std::numeric_limits<double>::quiet_NaN();

  bool in_window(double epsilon) const { return E_r > epsilon && E_r < 0.0; }
  /// False when the finite basis leaves the eigenvalue on or above the real axis.
  bool width_resolved() const { return Gamma > 0.0; }
};

// ---------------------------------------------------------------------------
// Stabilization grid and density of states

struct StabilizationGrid {
  double lambda = 0.0;
  std::vector<double> alphas;
  std::vector<Eigen::VectorXd> energies;  // one ascending spectrum per alpha

  void validate() const {
    if (alphas.size() < 3) throw Error(ErrorKind::InvalidArgument, "stabilization grid needs >= 3 alphas");
    if (!strictly_increasing(alphas)) throw Error(ErrorKind::InvalidArgument, "alphas must be strictly increasing");
    if (energies.size() != alphas.size()) throw Error(ErrorKind::InvalidArgument, "one spectrum per alpha required");
  }
};

/// Real spectra at one lambda over an alpha grid.
inline StabilizationGrid build_stabilization_grid(double lambda, const std::vector<double>& alphas, int N, double V0,
                                                  double tau = kDefaultOverlapCutoff) {
  StabilizationGrid g;
  g.lambda = lambda;
  g.alphas = alphas;
  g.energies.resize(alphas.size());
  parallel_for(alphas.size(), [&](std::size_t i) {
    auto red = prepare_basis({N, alphas[i]}, tau);
    g.energies[i] = solve_real(red, {V0, lambda, 0.0}, false).energies;
  });
  g.validate();
  return g;
}

/// Same, reusing prepared bases (one per alpha, ascending).
inline StabilizationGrid build_stabilization_grid(double lambda,
                                                  const std::vector<std::shared_ptr<const ReducedOperators>>& bases,
                                                  double V0) {
  StabilizationGrid g;
  g.lambda = lambda;
  for (const auto& b : bases) g.alphas.push_back(b->basis().alpha);
  g.energies.resize(bases.size());
  parallel_for(bases.size(), [&](std::size_t i) { g.energies[i] = solve_real(bases[i], {V0, lambda, 0.0}, false).energies; });
  g.validate();
  return g;
}

struct DosSample {
  double alpha = 0.0;
  double E = 0.0;
  double rho = 0.0;
};

struct DosCurve {
  int level = 0;  // 1-based
  double lambda = 0.0;
  std::vector<DosSample> samples;
  std::vector<std::string> warnings;
};

/// Centered-difference density of states for level j (1-based) at the
/// interior alpha points. Samples with a vanishing difference are dropped.
inline DosCurve dos_from_levels(const StabilizationGrid& grid, int level) {
  grid.validate();
  if (level < 1) throw Error(ErrorKind::InvalidArgument, "level is 1-based");
  const auto j = static_cast<Eigen::Index>(level - 1);
  for (const auto& e : grid.energies)
    if (e.size() <= j) throw Error(ErrorKind::InvalidArgument, "level missing from a slice");
  DosCurve c;
  c.level = level;
  c.lambda = grid.lambda;
  for (std::size_t i = 1; i + 1 < grid.alphas.size(); ++i) {
    const double dE = grid.energies[i + 1](j) - grid.energies[i - 1](j);
    const double da = grid.alphas[i + 1] - grid.alphas[i - 1];
    const double scale = std::max(std::abs(grid.energies[i + 1](j)), std::abs(grid.energies[i - 1](j)));
    if (std::abs(dE) <= 4.0 * std::numeric_limits<double>::epsilon() * scale) {
      c.warnings.push_back(Error(ErrorKind::DegenerateDifference,
                                 "alpha index " + std::to_string(i) + " dropped").what());
      continue;
    }
    c.samples.push_back({grid.alphas[i], grid.energies[i](j), std::abs(da / dE)});
  }
  return c;
}

// ---------------------------------------------------------------------------
// Lorentzian fit  rho(E) = rho0 + (A/pi) (Gamma/2) / ((E - E_r)^2 + (Gamma/2)^2)

struct LorentzianParams {
  double rho0 = 0.0;
  double A = 0.0;
  double E_r = 0.0;
  double Gamma = 0.0;

  double operator()(double E) const {
    const double g = 0.5 * Gamma;
    const double d = E - E_r;
    return rho0 + A / std::numbers::pi * g / (d * d + g * g);
  }
};

struct LorentzianFit {
  LorentzianParams params;
  double chi2 = 0.0;
  int iterations = 0;
  std::vector<double> chi2_history;  // chi^2 after each accepted step
};

struct FitOptions {
  int max_iterations = 200;
  double step_tolerance = 1e-10;
};

/// Peak-based starting point: E_r at the sample maximum, Gamma from the
/// half-maximum width, rho0 from the edge samples, A from the peak height.
inline LorentzianParams lorentzian_initial_guess(const std::vector<double>& E, const std::vector<double>& rho) {
  const std::size_t n = E.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return E[a] < E[b]; });
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = E[order[i]];
    y[i] = rho[order[i]];
  }
  const auto imax = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  if (imax == 0 || imax + 1 == n) throw Error(ErrorKind::NoPeak, "density maximum lies on the sample boundary");
  LorentzianParams p;
  p.rho0 = std::max(0.0, std::min(y.front(), y.back()));
  const double half = p.rho0 + 0.5 * (y[imax] - p.rho0);
  auto crossing = [&](int dir) {
    for (auto i = static_cast<long>(imax); i + dir >= 0 && i + dir < static_cast<long>(n); i += dir) {
      const auto a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(i + dir);
      if (y[b] <= half) return x[a] + (x[b] - x[a]) * (y[a] - half) / (y[a] - y[b]);
    }
    return dir < 0 ? x.front() : x.back();
  };
  const double left = crossing(-1), right = crossing(+1);
  p.E_r = x[imax];
  p.Gamma = std::max(right - left, 1e-6 * std::max(1.0, std::abs(p.E_r)));
  p.A = (y[imax] - p.rho0) * std::numbers::pi * 0.5 * p.Gamma;
  return p;
}

/// Levenberg-damped Gauss-Newton with the analytic Jacobian. Only steps that
/// lower chi^2 are accepted.
inline LorentzianFit fit_lorentzian(const std::vector<double>& E, const std::vector<double>& rho,
                                    std::optional<LorentzianParams> init = std::nullopt,
                                    const FitOptions& opt = {}) {
  if (E.size() != rho.size()) throw Error(ErrorKind::InvalidArgument, "sample size mismatch");
  if (E.size() < 6) throw Error(ErrorKind::NoPeak, "need at least 6 samples");
  const auto n = static_cast<Eigen::Index>(E.size());
  LorentzianParams p = init ? *init : lorentzian_initial_guess(E, rho);

  auto residuals = [&](const LorentzianParams& q, Eigen::VectorXd& r) {
    r.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = rho[static_cast<std::size_t>(i)] - q(E[static_cast<std::size_t>(i)]);
    return r.squaredNorm();
  };
  auto jacobian = [&](const LorentzianParams& q) {
    Eigen::MatrixXd J(n, 4);
    const double g = 0.5 * q.Gamma;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = E[static_cast<std::size_t>(i)] - q.E_r;
      const double D = d * d + g * g;
      J(i, 0) = 1.0;
      J(i, 1) = g / (std::numbers::pi * D);
      J(i, 2) = q.A / std::numbers::pi * g * 2.0 * d / (D * D);
      J(i, 3) = q.A / (2.0 * std::numbers::pi) * (d * d - g * g) / (D * D);
    }
    return J;
  };
  auto to_vec = [](const LorentzianParams& q) { return Eigen::Vector4d(q.rho0, q.A, q.E_r, q.Gamma); };
  auto from_vec = [](const Eigen::Vector4d& v) { return LorentzianParams{v(0), v(1), v(2), v(3)}; };

  LorentzianFit fit;
  Eigen::VectorXd r;
  double chi2 = residuals(p, r);
  double mu = 1e-3;
  bool converged = false;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    const Eigen::MatrixXd J = jacobian(p);
    const Eigen::Matrix4d JtJ = J.transpose() * J;
    const Eigen::Vector4d g = J.transpose() * r;
    bool accepted = false;
    while (mu < 1e16) {
      Eigen::Matrix4d Aug = JtJ;
      for (int k = 0; k < 4; ++k) Aug(k, k) += mu * std::max(JtJ(k, k), 1e-300);
      const Eigen::Vector4d step = Aug.ldlt().solve(g);
      const Eigen::Vector4d pv = to_vec(p);
      const LorentzianParams trial = from_vec(pv + step);
      Eigen::VectorXd rt;
      const double chi2t = trial.Gamma > 0.0 ? residuals(trial, rt) : std::numeric_limits<double>::infinity();
      if (std::isfinite(chi2t) && chi2t < chi2) {
        const double rel = step.cwiseAbs().cwiseQuotient(pv.cwiseAbs().cwiseMax(1e-300)).maxCoeff();
        p = trial;
        r = std::move(rt);
        chi2 = chi2t;
        fit.chi2_history.push_back(chi2);
        mu = std::max(mu / 10.0, 1e-12);
        accepted = true;
        if (rel < opt.step_tolerance) converged = true;
        break;
      }
      mu *= 10.0;
    }
    // No downhill step at any damping: chi^2 is at a (numerical) minimum.
    if (!accepted || converged || chi2 == 0.0) {
      converged = true;
      break;
    }
  }
  if (!converged) throw Error(ErrorKind::FitDiverged, "iteration cap reached");
  if (!std::isfinite(chi2) || !(p.Gamma > 0.0)) throw Error(ErrorKind::FitDiverged, "non-finite or non-positive width");
  const auto [emin, emax] = std::minmax_element(E.begin(), E.end());
  if (p.E_r < *emin || p.E_r > *emax) throw Error(ErrorKind::NoPeak, "fitted centre outside the sampled energies");
  fit.params = p;
  fit.chi2 = chi2;
  fit.iterations = it;
  return fit;
}

inline ResonanceEstimate lorentzian_fit(const DosCurve& curve, std::optional<LorentzianParams> init = std::nullopt,
                                        const FitOptions& opt = {}) {
  std::vector<double> E, rho;
  for (const auto& s : curve.samples) {
    E.push_back(s.E);
    rho.push_back(s.rho);
  }
  const auto fit = fit_lorentzian(E, rho, init, opt);
  ResonanceEstimate est;
  est.lambda = curve.lambda;
  est.E_r = fit.params.E_r;
  est.Gamma = fit.params.Gamma;
  est.method = ResonanceMethod::dos_fit;
  est.chi2 = fit.chi2;
  est.level = curve.level;
  // alpha at which the level sits closest to the fitted centre
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : curve.samples)
    if (std::abs(s.E - est.E_r) < best) {
      best = std::abs(s.E - est.E_r);
      est.alpha = s.alpha;
    }
  return est;
}

/// Minimum chi^2; ties go to the larger level. With a threshold given, only
/// estimates inside the resonance window (epsilon, 0) compete.
inline ResonanceEstimate select_best_fit(const std::vector<ResonanceEstimate>& estimates,
                                         std::optional<double> epsilon = std::nullopt) {
  const ResonanceEstimate* best = nullptr;
  for (const auto& e : estimates) {
    if (epsilon && !e.in_window(*epsilon)) continue;
    if (!best || e.chi2 < best->chi2 || (e.chi2 == best->chi2 && e.level > best->level)) best = &e;
  }
  if (!best) throw Error(ErrorKind::AllFitsFailed, "no successful fit");
  return *best;
}

// ---------------------------------------------------------------------------
// Complex-scaling theta trajectories

struct TrajectoryOptions {
  double epsilon = 0.0;          // ionization threshold (required, < 0)
  double imag_floor = -0.25;     // ignore eigenvalues deeper than this
  double imag_slack = 2e-3;      // admit Im E up to this (finite-basis noise)
  double speed_floor = 0.2;      // max normalized speed of a stationary family
};

struct ThetaFamily {
  std::vector<std::complex<double>> values;  // one per theta
  double median_speed = 0.0;                 // normalized |dE/dtheta|
};

struct TrajectoryResult {
  ResonanceEstimate estimate;
  std::vector<double> thetas;
  std::vector<ThetaFamily> families;
  std::size_t selected = 0;
};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// A continuum eigenvalue on a rotated cut moves with |dE/dtheta| ~ 2|E - E_t|
// for its threshold E_t in {epsilon, 0}; divide that out so the resonance
// stands out as ~0 while continuum states sit near 1.
inline double normalized_speed(std::complex<double> a, std::complex<double> b, double dtheta, double eps) {
  const std::complex<double> mid = 0.5 * (a + b);
  const double dist = std::max(1e-12, std::min(std::abs(mid - eps), std::abs(mid)));
  return std::abs(b - a) / dtheta / (2.0 * dist);
}

}  // namespace detail

/// Eigenvalue families tracked across an ascending theta grid from
/// precomputed spectra (one eigenvalue list per theta).
inline TrajectoryResult analyze_theta_trajectory(const std::vector<double>& thetas,
                                                 const std::vector<Eigen::VectorXcd>& spectra, double lambda,
                                                 const TrajectoryOptions& opt) {
  if (thetas.size() < 3 || !strictly_increasing(thetas))
    throw Error(ErrorKind::InvalidArgument, "theta grid must be ascending with >= 3 points");
  if (!(opt.epsilon < 0.0)) throw Error(ErrorKind::InvalidArgument, "trajectory needs the threshold epsilon < 0");
  auto candidates = [&](const Eigen::VectorXcd& ev, double margin) {
    std::vector<std::complex<double>> out;
    for (Eigen::Index k = 0; k < ev.size(); ++k) {
      const auto e = ev(k);
      if (e.real() > opt.epsilon - margin && e.real() < margin && e.imag() <= opt.imag_slack + margin &&
          e.imag() >= opt.imag_floor - margin)
        out.push_back(e);
    }
    return out;
  };

  TrajectoryResult res;
  res.thetas = thetas;
  auto heads = candidates(spectra[0], 0.0);
  std::vector<ThetaFamily> fams(heads.size());
  for (std::size_t f = 0; f < heads.size(); ++f) fams[f].values.push_back(heads[f]);
  std::vector<bool> alive(heads.size(), true);

  for (std::size_t t = 1; t < thetas.size(); ++t) {
    const auto next = candidates(spectra[t], 0.05);
    std::vector<std::size_t> live;
    for (std::size_t f = 0; f < fams.size(); ++f)
      if (alive[f]) live.push_back(f);
    if (live.empty()) break;
    if (next.size() < live.size()) {
      // more families than targets: keep the closest ones alive
      std::vector<std::pair<double, std::size_t>> d;
      for (auto f : live) {
        double best = std::numeric_limits<double>::infinity();
        for (auto e : next) best = std::min(best, std::abs(e - fams[f].values.back()));
        d.push_back({best, f});
      }
      std::sort(d.begin(), d.end());
      for (std::size_t k = next.size(); k < d.size(); ++k) alive[d[k].second] = false;
      live.clear();
      for (std::size_t k = 0; k < std::min(next.size(), d.size()); ++k) live.push_back(d[k].second);
      std::sort(live.begin(), live.end());
    }
    std::vector<std::vector<double>> cost(live.size(), std::vector<double>(next.size()));
    for (std::size_t a = 0; a < live.size(); ++a)
      for (std::size_t b = 0; b < next.size(); ++b) cost[a][b] = std::abs(next[b] - fams[live[a]].values.back());
    const auto assign = min_cost_assignment(cost);
    for (std::size_t a = 0; a < live.size(); ++a) fams[live[a]].values.push_back(next[static_cast<std::size_t>(assign[a])]);
  }

  for (std::size_t f = 0; f < fams.size(); ++f) {
    if (fams[f].values.size() != thetas.size()) continue;
    std::vector<double> speeds;
    for (std::size_t t = 0; t + 1 < thetas.size(); ++t)
      speeds.push_back(detail::normalized_speed(fams[f].values[t], fams[f].values[t + 1], thetas[t + 1] - thetas[t],
                                                opt.epsilon));
    fams[f].median_speed = detail::median(speeds);
    res.families.push_back(fams[f]);
  }

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < res.families.size(); ++f)
    if (res.families[f].median_speed < best) {
      best = res.families[f].median_speed;
      res.selected = f;
    }
  if (res.families.empty() || best > opt.speed_floor)
    throw Error(ErrorKind::NoStationaryPoint, "no theta-stationary eigenvalue in the resonance window");

  // Stationary theta: smallest local speed, averaged over adjacent steps.
  const auto& v = res.families[res.selected].values;
  std::size_t tstar = 0;
  double slow = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < v.size(); ++t) {
    double s = 0.0;
    int cnt = 0;
    if (t > 0) {
      s += std::abs(v[t] - v[t - 1]) / (thetas[t] - thetas[t - 1]);
      ++cnt;
    }
    if (t + 1 < v.size()) {
      s += std::abs(v[t + 1] - v[t]) / (thetas[t + 1] - thetas[t]);
      ++cnt;
    }
    s /= cnt;
    if (s < slow) {
      slow = s;
      tstar = t;
    }
  }
  auto& est = res.estimate;
  est.lambda = lambda;
  est.E_r = v[tstar].real();
  est.Gamma = -2.0 * v[tstar].imag();
  est.method = ResonanceMethod::complex_scaling;
  est.theta = thetas[tstar];
  return res;
}

inline TrajectoryResult theta_trajectory(const std::shared_ptr<const ReducedOperators>& red, const ModelParams& params,
                                         const std::vector<double>& thetas, const TrajectoryOptions& opt) {
  std::vector<Eigen::VectorXcd> spectra(thetas.size());
  parallel_for(thetas.size(), [&](std::size_t t) {
    ModelParams p = params;
    p.theta = thetas[t];
    spectra[t] = solve_complex(red, p, false).eigenvalues;
  });
  auto res = analyze_theta_trajectory(thetas, spectra, params.lambda, opt);
  res.estimate.alpha = red->basis().alpha;
  return res;
}

}  // namespace qdres
