#pragma once
// One-electron s-wave problem  -1/2 u'' - V0 e^{-r} u = eps u.
//
// With x = 2 sqrt(2 V0) e^{-r/2} the radial equation becomes Bessel's
// equation of order nu = 2 sqrt(-2 eps); regularity at infinity selects J_nu
// and u(0) = 0 gives J_nu(2 sqrt(2 V0)) = 0. The ground state is the largest
// nu for which 2 sqrt(2 V0) is the *first* zero of J_nu.

#include <algorithm>
#include <cmath>
#include <vector>

#include "qdres/error.hpp"

namespace qdres {

enum class ThresholdMethod { bessel_condition, radial_grid };

struct ThresholdResult {
  double epsilon = 0.0;
  ThresholdMethod method = ThresholdMethod::bessel_condition;
  double residual = 0.0;
};

/// First positive zero of J_0.
constexpr double kBesselJ0FirstZero = 2.404825557695773;

inline ThresholdResult threshold_bessel(double V0) {
  if (!(V0 > 0.0)) throw Error(ErrorKind::InvalidArgument, "V0 must be > 0");
  const double x0 = 2.0 * std::sqrt(2.0 * V0);
  if (x0 <= kBesselJ0FirstZero) throw Error(ErrorKind::NoBoundState, "well too shallow for a bound state");

  auto J = [x0](double nu) { return std::cyl_bessel_j(nu, x0); };
  // J_nu(x0) > 0 for nu >= x0 (x0 lies before the first zero); step down
  // until the sign flips, then bisect the last bracket.
  double hi = x0;
  const double step = 1e-2;
  double lo = hi - step;
  while (lo > 0.0 && J(lo) > 0.0) {
    hi = lo;
    lo -= step;
  }
  if (lo <= 0.0) lo = 0.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (J(mid) > 0.0 ? hi : lo) = mid;
  }
  const double nu = 0.5 * (lo + hi);
  return {-nu * nu / 8.0, ThresholdMethod::bessel_condition, std::abs(J(nu))};
}

struct RadialGridOptions {
  double R = 80.0;          // box radius
  int points = 8000;        // interior points on the coarsest mesh
  int richardson_levels = 3;  // meshes h, h/2, h/4, ...
};

namespace detail {

// Lowest eigenvalue of the symmetric tridiagonal (diag d, offdiag e) by
// Sturm-sequence bisection.
inline double lowest_tridiagonal_eigenvalue(const std::vector<double>& d, double e) {
  double lo = 1e300, hi = -1e300;
  for (double di : d) {
    lo = std::min(lo, di - 2.0 * std::abs(e));
    hi = std::max(hi, di + 2.0 * std::abs(e));
  }
  auto count_below = [&](double x) {
    int count = 0;
    double q = d[0] - x;
    if (q < 0) ++count;
    for (std::size_t i = 1; i < d.size(); ++i) {
      if (q == 0.0) q = 1e-300;
      q = d[i] - x - e * e / q;
      if (q < 0) ++count;
    }
    return count;
  };
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (count_below(mid) >= 1 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double fd_ground_energy(double V0, double R, int n) {
  const double h = R / (n + 1);
  std::vector<double> d(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double r = (i + 1) * h;
    d[static_cast<std::size_t>(i)] = 1.0 / (h * h) - V0 * std::exp(-r);
  }
  return lowest_tridiagonal_eigenvalue(d, -0.5 / (h * h));
}

}  // namespace detail

/// Second-order finite differences on u(0) = u(R) = 0, Richardson
/// extrapolated over successively halved meshes.
inline ThresholdResult threshold_grid(double V0, const RadialGridOptions& opt = {}) {
  if (!(V0 > 0.0)) throw Error(ErrorKind::InvalidArgument, "V0 must be > 0");
  const int L = std::max(2, opt.richardson_levels);
  // Tableau of Richardson extrapolants; mesh spacing halves each level and
  // the error expands in even powers of h.
  std::vector<std::vector<double>> tab(static_cast<std::size_t>(L));
  int n = opt.points;
  for (int i = 0; i < L; ++i) {
    tab[static_cast<std::size_t>(i)].push_back(detail::fd_ground_energy(V0, opt.R, n));
    n = 2 * n + 1;  // exact halving of h = R / (n + 1)
    double factor = 4.0;
    for (int j = 1; j <= i; ++j, factor *= 4.0) {
      const double fine = tab[static_cast<std::size_t>(i)][static_cast<std::size_t>(j - 1)];
      const double coarse = tab[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)];
      tab[static_cast<std::size_t>(i)].push_back(fine + (fine - coarse) / (factor - 1.0));
    }
  }
  const auto& last = tab.back();
  const double eps = last.back();
  const double residual = std::abs(last.back() - tab[static_cast<std::size_t>(L - 2)].back());
  if (eps >= 0.0) throw Error(ErrorKind::NoBoundState, "no negative eigenvalue on the radial grid");
  return {eps, ThresholdMethod::radial_grid, residual};
}

}  // namespace qdres
