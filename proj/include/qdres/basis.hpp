#pragma once
// Two-electron s-wave singlet basis |n1,n2;l> built from Slater-type
// orbitals phi_n(r) ~ r^n exp(-alpha r / 2), plus the one-orbital overlaps
// and the angular coupling coefficients of the multipole expansion.

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "qdres/error.hpp"

namespace qdres {

/// log(n!) in extended precision. Direct products up to 30!, log-gamma above.
inline long double log_factorial(int n) {
  static const std::array<long double, 31> table = [] {
    std::array<long double, 31> t{};
    long double f = 1.0L;
    t[0] = 0.0L;
    for (int i = 1; i <= 30; ++i) {
      f *= static_cast<long double>(i);
      t[i] = std::log(f);
    }
    return t;
  }();
  if (n < 0) throw Error(ErrorKind::InvalidArgument, "log_factorial of negative argument");
  if (n <= 30) return table[n];
  return std::lgamma(static_cast<long double>(n) + 1.0L);
}

struct BasisSpec {
  int N = 14;
  double alpha = 2.0;

  void validate() const {
    if (N < 0) throw Error(ErrorKind::InvalidArgument, "basis N must be >= 0");
    if (!(alpha > 0.0)) throw Error(ErrorKind::InvalidArgument, "basis alpha must be > 0");
  }
  friend bool operator==(const BasisSpec&, const BasisSpec&) = default;
};

struct BasisIndex {
  int n1 = 0;
  int n2 = 0;
  int l = 0;
  friend bool operator==(const BasisIndex&, const BasisIndex&) = default;
};

constexpr std::size_t basis_size(int N) {
  if (N < 0) return 0;
  const auto n = static_cast<std::size_t>(N);
  return (n + 1) * (n + 2) * (n + 3) / 6;
}

/// All (n1, n2, l) with N >= n1 >= n2 >= l >= 0, lexicographic in (n1, n2, l).
/// The ordering is part of the on-disk coefficient layout.
inline std::vector<BasisIndex> enumerate_basis(const BasisSpec& spec) {
  spec.validate();
  std::vector<BasisIndex> out;
  out.reserve(basis_size(spec.N));
  for (int n1 = 0; n1 <= spec.N; ++n1)
    for (int n2 = 0; n2 <= n1; ++n2)
      for (int l = 0; l <= n2; ++l) out.push_back({n1, n2, l});
  return out;
}

/// <n|n'> = (n+n'+2)! / sqrt((2n+2)! (2n'+2)!); independent of alpha.
template <class Real = double>
Real orbital_overlap(int n, int np) {
  if (n < 0 || np < 0) throw Error(ErrorKind::InvalidArgument, "orbital index must be >= 0");
  if (n == np) return Real(1);
  const long double lg = log_factorial(n + np + 2) -
                         0.5L * (log_factorial(2 * n + 2) + log_factorial(2 * np + 2));
  return static_cast<Real>(std::exp(lg));
}

/// Denominator [2 (1 + <n1|n2>^2)]^{1/2} of the symmetrized radial pair.
template <class Real = double>
Real pair_norm(int n1, int n2) {
  const long double s = orbital_overlap<long double>(n1, n2);
  return static_cast<Real>(std::sqrt(2.0L * (1.0L + s * s)));
}

namespace detail {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

inline cpp_int factorial_exact(int n) {
  cpp_int f = 1;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

}  // namespace detail

/// Square of the Wigner 3j symbol (l1 l2 l3; 0 0 0) as an exact rational.
/// Zero unless the triangle condition holds and l1+l2+l3 is even.
inline detail::cpp_rational threej_000_squared(int l1, int l2, int l3) {
  using detail::cpp_rational;
  using detail::factorial_exact;
  if (l1 < 0 || l2 < 0 || l3 < 0) return cpp_rational(0);
  const int J = l1 + l2 + l3;
  if (J % 2 != 0) return cpp_rational(0);
  if (l3 < std::abs(l1 - l2) || l3 > l1 + l2) return cpp_rational(0);
  const int g = J / 2;
  cpp_rational delta(factorial_exact(J - 2 * l1) * factorial_exact(J - 2 * l2) *
                         factorial_exact(J - 2 * l3),
                     factorial_exact(J + 1));
  cpp_rational ratio(factorial_exact(g),
                     factorial_exact(g - l1) * factorial_exact(g - l2) * factorial_exact(g - l3));
  return delta * ratio * ratio;
}

/// a_k(l,l') = <Y^l_00 | P_k(cos theta_12) | Y^l'_00>
///           = (-1)^k sqrt((2l+1)(2l'+1)) (3j(l k l'; 0 0 0))^2.
inline double angular_coefficient(int l, int lp, int k) {
  if (l < 0 || lp < 0 || k < 0) return 0.0;
  const auto w2 = threej_000_squared(l, k, lp);
  if (w2 == 0) return 0.0;
  const long double mag = std::sqrt(static_cast<long double>((2 * l + 1) * (2 * lp + 1))) *
                          static_cast<long double>(w2);
  return static_cast<double>((k % 2 == 0) ? mag : -mag);
}

/// Dense lookup of a_k(l,l') for l, l' <= lmax and k <= 2 lmax.
class AngularCoefficientTable {
 public:
  explicit AngularCoefficientTable(int lmax) : lmax_(lmax), kmax_(2 * lmax) {
    if (lmax < 0) throw Error(ErrorKind::InvalidArgument, "lmax must be >= 0");
    const auto n = static_cast<std::size_t>(lmax_ + 1);
    values_.assign(n * n * static_cast<std::size_t>(kmax_ + 1), 0.0);
    for (int l = 0; l <= lmax_; ++l)
      for (int lp = 0; lp <= lmax_; ++lp)
        for (int k = std::abs(l - lp); k <= l + lp; k += 2)
          values_[index(l, lp, k)] = angular_coefficient(l, lp, k);
  }

  int lmax() const { return lmax_; }

  double operator()(int l, int lp, int k) const {
    if (l < 0 || lp < 0 || k < 0 || l > lmax_ || lp > lmax_ || k > kmax_) return 0.0;
    return values_[index(l, lp, k)];
  }

 private:
  std::size_t index(int l, int lp, int k) const {
    return (static_cast<std::size_t>(l) * static_cast<std::size_t>(lmax_ + 1) +
            static_cast<std::size_t>(lp)) *
               static_cast<std::size_t>(kmax_ + 1) +
           static_cast<std::size_t>(k);
  }

  int lmax_;
  int kmax_;
  std::vector<double> values_;
};

}  // namespace qdres
