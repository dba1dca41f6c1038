#pragma once
// Matrix elements of the two-electron dot Hamiltonian
//   H = T - V0 (e^{-r1} + e^{-r2}) + lambda / r12
// in the symmetrized Slater basis, and its complex-scaled form
//   H(theta) = e^{-2i theta} T - V0 V(theta) + lambda e^{-i theta} W.
//
// Everything is assembled in long double: the Slater Gram matrix at N = 14
// has eigenvalues down to ~1e-26, so the canonical reduction downstream
// needs the extra digits to keep H and S consistent.

#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "qdres/basis.hpp"
#include "qdres/error.hpp"

namespace qdres {

using ld = long double;
using cld = std::complex<long double>;
using MatrixXld = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using MatrixXcld = Eigen::Matrix<std::complex<long double>, Eigen::Dynamic, Eigen::Dynamic>;
using VectorXld = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

struct ModelParams {
  double V0 = 5.0;
  double lambda = 0.0;
  double theta = 0.0;

  void validate() const {
    if (!(V0 > 0.0)) throw Error(ErrorKind::InvalidArgument, "V0 must be > 0");
    if (!(lambda >= 0.0)) throw Error(ErrorKind::InvalidArgument, "lambda must be >= 0");
    if (!(theta >= 0.0 && theta < std::numbers::pi / 4))
      throw Error(ErrorKind::InvalidArgument, "theta must lie in [0, pi/4)");
  }
};

/// <n| exp(-r e^{i theta}) |n'> for Slater orbitals with exponent alpha.
/// theta = 0 gives the plain exponential-well element; theta > 0 is its
/// analytic continuation under r -> r e^{i theta}.
template <class Real = double>
std::complex<Real> exp_potential_element(int n, int np, double alpha, double theta) {
  if (n < 0 || np < 0) throw Error(ErrorKind::InvalidArgument, "orbital index must be >= 0");
  if (!(alpha > 0.0)) throw Error(ErrorKind::InvalidArgument, "alpha must be > 0");
  const ld a = alpha;
  const cld base = a / (a + std::polar(1.0L, static_cast<ld>(theta)));
  const cld val = std::pow(base, n + np + 3) * orbital_overlap<ld>(n, np);
  return {static_cast<Real>(val.real()), static_cast<Real>(val.imag())};
}

/// Radial kinetic element of -1/2 (d^2/dr^2 + (2/r) d/dr - l(l+1)/r^2)
/// between phi_n and phi_n' (integrated by parts, both orbitals decay).
template <class Real = double>
Real kinetic_element(int n, int np, int l, double alpha) {
  if (n < 0 || np < 0 || l < 0) throw Error(ErrorKind::InvalidArgument, "index must be >= 0");
  if (!(alpha > 0.0)) throw Error(ErrorKind::InvalidArgument, "alpha must be > 0");
  const ld s = n + np;
  const ld bracket = static_cast<ld>(n) * np + static_cast<ld>(l) * (l + 1) -
                     s * (s + 1) / 2.0L + (s + 1) * (s + 2) / 4.0L;
  const ld a = alpha;
  return static_cast<Real>(a * a / 2.0L * orbital_overlap<ld>(n, np) / ((s + 1) * (s + 2)) *
                           bracket);
}

namespace detail {

// A(m, n) = int_0^inf dx x^m e^{-alpha x} int_0^x dy y^n e^{-alpha y}, n >= 0,
// m + n + 1 >= 0. Written as a positive series, so no cancellation:
//   A = (m+n+1)! / ((n+1) (2 alpha)^{m+n+2}) * sum_i rho_i,
//   rho_0 = 1, rho_{i+1} / rho_i = (m + j + 1) / (2 (j + 1)), j = n + 1 + i.
inline ld ordered_pair_integral(int m, int n, ld alpha) {
  const int top = m + n + 1;
  ld sum = 0.0L;
  ld term = 1.0L;
  for (int j = n + 1; j < n + 100000; ++j) {
    sum += term;
    term *= static_cast<ld>(m + j + 1) / (2.0L * static_cast<ld>(j + 1));
    if (term < sum * 1e-21L && j > m + 1) break;
  }
  const ld logpre = log_factorial(top) - std::log(static_cast<ld>(n + 1)) -
                    static_cast<ld>(top + 1) * std::log(2.0L * alpha);
  return std::exp(logpre) * sum;
}

}  // namespace detail

/// Int int r1^p r2^q e^{-alpha (r1 + r2)} r_<^k / r_>^{k+1} dr1 dr2, split at
/// r1 = r2. Requires p, q >= 2 (the r^2 volume weights are included).
template <class Real = double>
Real slater_radial_integral(int p, int q, int k, double alpha) {
  if (p < 2 || q < 2 || k < 0) throw Error(ErrorKind::InvalidArgument, "need p, q >= 2, k >= 0");
  if (!(alpha > 0.0)) throw Error(ErrorKind::InvalidArgument, "alpha must be > 0");
  const ld a = alpha;
  return static_cast<Real>(detail::ordered_pair_integral(p - k - 1, q + k, a) +
                           detail::ordered_pair_integral(q - k - 1, p + k, a));
}

/// S, T, V, W in the symmetrized basis; V is e^{-r1} + e^{-r2} (positive,
/// unit depth) and W is 1/r12 at unit strength. The real Hamiltonian is
/// T - V0 V + lambda W.
struct OperatorSet {
  BasisSpec basis;
  std::vector<BasisIndex> index;
  MatrixXld S, T, V, W;

  std::size_t size() const { return index.size(); }
  /// Angular block label of every basis function (its l).
  std::vector<int> blocks() const {
    std::vector<int> b;
    b.reserve(index.size());
    for (const auto& i : index) b.push_back(i.l);
    return b;
  }
};

namespace detail {

// Direct + exchange combination for a symmetric one-body operator o:
//   2 (o_ac s_bd + s_ac o_bd + o_ad s_bc + s_ad o_bc)
// and the overlap-only version 2 (s_ac s_bd + s_ad s_bc).
template <class T, class Table>
T one_body_pair(const Table& s, const Table& o, int a, int b, int c, int d) {
  return T(2) * (o(a, c) * s(b, d) + s(a, c) * o(b, d) + o(a, d) * s(b, c) + s(a, d) * o(b, c));
}

}  // namespace detail

constexpr int kDefaultMaxN = 20;

inline OperatorSet build_operator_set(const BasisSpec& spec, int max_N = kDefaultMaxN) {
  spec.validate();
  if (spec.N > max_N)
    throw Error(ErrorKind::InvalidArgument, "basis N exceeds configured maximum");

  OperatorSet ops;
  ops.basis = spec;
  ops.index = enumerate_basis(spec);
  const int N = spec.N;
  const auto M = static_cast<Eigen::Index>(ops.index.size());
  const int no = N + 1;

  MatrixXld ov(no, no), vexp(no, no);
  std::vector<MatrixXld> kin(static_cast<std::size_t>(no), MatrixXld(no, no));
  for (int a = 0; a < no; ++a)
    for (int c = 0; c < no; ++c) {
      ov(a, c) = orbital_overlap<ld>(a, c);
      vexp(a, c) = exp_potential_element<ld>(a, c, spec.alpha, 0.0).real();
      for (int l = 0; l <= N; ++l) kin[static_cast<std::size_t>(l)](a, c) =
          kinetic_element<ld>(a, c, l, spec.alpha);
    }

  // Coulomb radial integrals are homogeneous of degree one in alpha once the
  // orbital normalizations are folded in, so tabulate them at alpha = 1.
  const int pmax = 2 * N + 2;
  const int kmax = 2 * N;
  const auto pq = static_cast<std::size_t>(pmax + 1);
  std::vector<ld> radial(pq * pq * static_cast<std::size_t>(kmax + 1), 0.0L);
  auto rad = [&](int p, int q, int k) -> ld& {
    return radial[(static_cast<std::size_t>(p) * pq + static_cast<std::size_t>(q)) *
                      static_cast<std::size_t>(kmax + 1) +
                  static_cast<std::size_t>(k)];
  };
  for (int p = 2; p <= pmax; ++p)
    for (int q = 2; q <= pmax; ++q)
      for (int k = 0; k <= kmax; ++k) rad(p, q, k) = slater_radial_integral<ld>(p, q, k, 1.0);
  std::vector<ld> orbnorm(static_cast<std::size_t>(no));
  for (int a = 0; a < no; ++a) orbnorm[static_cast<std::size_t>(a)] = std::exp(-0.5L * log_factorial(2 * a + 2));
  auto rk = [&](int a, int c, int b, int d, int k) {
    return rad(a + c + 2, b + d + 2, k) * orbnorm[static_cast<std::size_t>(a)] *
           orbnorm[static_cast<std::size_t>(c)] * orbnorm[static_cast<std::size_t>(b)] *
           orbnorm[static_cast<std::size_t>(d)];
  };

  const AngularCoefficientTable ang(N);
  std::vector<ld> norm(static_cast<std::size_t>(M));
  for (Eigen::Index i = 0; i < M; ++i) {
    const auto& bi = ops.index[static_cast<std::size_t>(i)];
    norm[static_cast<std::size_t>(i)] = pair_norm<ld>(bi.n1, bi.n2);
  }

  ops.S = MatrixXld::Zero(M, M);
  ops.T = MatrixXld::Zero(M, M);
  ops.V = MatrixXld::Zero(M, M);
  ops.W = MatrixXld::Zero(M, M);
  const ld alpha = spec.alpha;
  for (Eigen::Index i = 0; i < M; ++i) {
    const auto [a, b, l] = ops.index[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j <= i; ++j) {
      const auto [c, d, lp] = ops.index[static_cast<std::size_t>(j)];
      const ld denom = norm[static_cast<std::size_t>(i)] * norm[static_cast<std::size_t>(j)];
      if (l == lp) {
        const auto& t = kin[static_cast<std::size_t>(l)];
        const ld s = 2.0L * (ov(a, c) * ov(b, d) + ov(a, d) * ov(b, c)) / denom;
        ops.S(i, j) = ops.S(j, i) = s;
        ops.T(i, j) = ops.T(j, i) = detail::one_body_pair<ld>(ov, t, a, b, c, d) / denom;
        ops.V(i, j) = ops.V(j, i) = detail::one_body_pair<ld>(ov, vexp, a, b, c, d) / denom;
      }
      ld w = 0.0L;
      for (int k = std::abs(l - lp); k <= l + lp; k += 2) {
        const ld ak = ang(l, lp, k);
        if (ak == 0.0L) continue;
        w += ak * (rk(a, c, b, d, k) + rk(a, d, b, c, k));
      }
      ops.W(i, j) = ops.W(j, i) = 2.0L * alpha * w / denom;
    }
  }
  return ops;
}

/// Complex-scaled potential matrix V(theta) in the symmetrized basis.
inline MatrixXcld scaled_potential(const OperatorSet& ops, double theta) {
  const int no = ops.basis.N + 1;
  Eigen::Matrix<cld, Eigen::Dynamic, Eigen::Dynamic> ov(no, no), vexp(no, no);
  for (int a = 0; a < no; ++a)
    for (int c = 0; c < no; ++c) {
      ov(a, c) = orbital_overlap<ld>(a, c);
      vexp(a, c) = exp_potential_element<ld>(a, c, ops.basis.alpha, theta);
    }
  const auto M = static_cast<Eigen::Index>(ops.size());
  MatrixXcld V = MatrixXcld::Zero(M, M);
  for (Eigen::Index i = 0; i < M; ++i) {
    const auto [a, b, l] = ops.index[static_cast<std::size_t>(i)];
    const ld ni = pair_norm<ld>(a, b);
    for (Eigen::Index j = 0; j <= i; ++j) {
      const auto [c, d, lp] = ops.index[static_cast<std::size_t>(j)];
      if (l != lp) continue;
      const ld denom = ni * pair_norm<ld>(c, d);
      V(i, j) = V(j, i) = detail::one_body_pair<cld>(ov, vexp, a, b, c, d) / denom;
    }
  }
  return V;
}

struct ScaledHamiltonian {
  MatrixXcld H;
  double theta = 0.0;
  ModelParams params;
};

inline ScaledHamiltonian build_scaled_hamiltonian(const OperatorSet& ops, const ModelParams& params) {
  params.validate();
  const ld th = params.theta;
  const cld rot2 = std::polar(1.0L, -2.0L * th);
  const cld rot1 = std::polar(1.0L, -th);
  const MatrixXcld Vt = scaled_potential(ops, params.theta);
  ScaledHamiltonian h;
  h.theta = params.theta;
  h.params = params;
  h.H = rot2 * ops.T.cast<cld>() - static_cast<ld>(params.V0) * Vt +
        (static_cast<ld>(params.lambda) * rot1) * ops.W.cast<cld>();
  return h;
}

}  // namespace qdres
