#pragma once
// State diagnostics along a lambda sweep: fidelity and double orthogonality
// detectors, Coulomb expectations (Hellmann-Feynman), and one-electron
// reduced density matrices with their entropies.
//
// All overlaps are taken in the reduced (S-orthonormal) coordinates of a
// single ReducedOperators, where c_A^T S c_B = y_A^T y_B. The full expansion
// coefficients c = X y carry large cancellations at N = 14 and are avoided.

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qdres/error.hpp"
#include "qdres/spectra.hpp"
#include "qdres/util.hpp"

namespace qdres {

// ---------------------------------------------------------------------------
// Overlaps

inline void require_same_basis(const ReducedOperators& a, const ReducedOperators& b) {
  if (&a == &b) return;
  if (!(a.basis() == b.basis()) || a.transform.cutoff() != b.transform.cutoff() || a.dim() != b.dim())
    throw Error(ErrorKind::BasisMismatch, "states live in different bases");
}

/// c_A^T S c_B for real eigenstates i of A and j of B.
inline double overlap(const SpectrumSlice& a, Eigen::Index i, const SpectrumSlice& b, Eigen::Index j) {
  require_same_basis(*a.basis, *b.basis);
  if (i >= a.Y.cols() || j >= b.Y.cols()) throw Error(ErrorKind::InvalidArgument, "eigenvector not stored");
  return a.Y.col(i).dot(b.Y.col(j));
}

/// c-product c_A^T S c_B (no conjugation) for complex-scaled states.
inline std::complex<double> overlap(const ComplexSpectrum& a, Eigen::Index i, const ComplexSpectrum& b,
                                    Eigen::Index j) {
  require_same_basis(*a.basis, *b.basis);
  if (i >= a.Y.cols() || j >= b.Y.cols()) throw Error(ErrorKind::InvalidArgument, "eigenvector not stored");
  return (a.Y.col(i).transpose() * b.Y.col(j))(0, 0);
}

// ---------------------------------------------------------------------------
// Lambda sweeps at fixed (N, alpha)

/// Real spectra over a lambda grid, keeping only the lowest `levels` vectors.
struct LambdaScan {
  std::shared_ptr<const ReducedOperators> basis;
  double V0 = 5.0;
  int levels = 0;
  std::vector<double> lambdas;
  std::vector<SpectrumSlice> slices;

  double step() const { return lambdas.size() > 1 ? lambdas[1] - lambdas[0] : 0.0; }

  /// Slice at an arbitrary lambda; grid points are reused.
  SpectrumSlice at(double lambda, bool with_vectors = true) const {
    const double tol = 1e-9 * std::max(1.0, std::abs(lambda));
    for (std::size_t i = 0; i < lambdas.size(); ++i)
      if (std::abs(lambdas[i] - lambda) < tol) return slices[i];
    return solve_real(basis, {V0, lambda, 0.0}, with_vectors, levels);
  }
};

inline LambdaScan scan_lambda(std::shared_ptr<const ReducedOperators> red, double V0,
                              const std::vector<double>& lambdas, int levels, unsigned workers = 0) {
  if (lambdas.empty() || !strictly_increasing(lambdas))
    throw Error(ErrorKind::InvalidArgument, "lambda grid must be non-empty and increasing");
  if (levels < 1) throw Error(ErrorKind::InvalidArgument, "need at least one level");
  LambdaScan scan;
  scan.basis = std::move(red);
  scan.V0 = V0;
  scan.levels = levels;
  scan.lambdas = lambdas;
  scan.slices.resize(lambdas.size());
  parallel_for(
      lambdas.size(),
      [&](std::size_t i) { scan.slices[i] = solve_real(scan.basis, {V0, lambdas[i], 0.0}, true, levels); },
      workers);
  return scan;
}

// ---------------------------------------------------------------------------
// Fidelity and double orthogonality

enum class DetectorKind { fidelity, double_orthogonality };

inline const char* to_string(DetectorKind k) {
  return k == DetectorKind::fidelity ? "fidelity" : "double_orthogonality";
}

struct DetectorCurve {
  DetectorKind kind = DetectorKind::fidelity;
  int level = 1;  // 1-based
  std::vector<double> lambdas;
  std::vector<double> values;
  std::vector<double> energies;     // E_n at each sample
  std::vector<double> peaks;        // fidelity peak positions, ascending
  std::optional<double> lambda_min; // refined interior minimum
  std::optional<double> energy_min; // E_n(lambda_min)
  double delta = 0.0;               // fidelity step
  double lambda_L = 0.0, lambda_R = 0.0;
  double anchor_overlap = 0.0;      // |<Psi(lambda_L), Psi(lambda_R)>|^2
  std::optional<ErrorKind> failure;
  std::string message;

  bool ok() const { return !failure && lambda_min.has_value(); }
};

struct PeakOptions {
  double floor = 1e-4;  // smallest G counted as a peak
};

/// Local maxima of v with v >= floor, by descending height.
inline std::vector<std::size_t> find_peaks(const std::vector<double>& v, double floor) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const bool left = i == 0 || v[i] > v[i - 1];
    const bool right = i + 1 == v.size() || v[i] >= v[i + 1];
    if (left && right && v[i] >= floor) out.push_back(i);
  }
  std::sort(out.begin(), out.end(), [&](auto a, auto b) { return v[a] > v[b]; });
  return out;
}

namespace detail {

// Index of the smallest sample strictly between lo and hi.
inline std::optional<std::size_t> interior_argmin(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
  std::optional<std::size_t> best;
  for (std::size_t i = lo + 1; i < hi; ++i)
    if (!best || v[i] < v[*best]) best = i;
  return best;
}

inline void locate_minimum(DetectorCurve& c, const LambdaScan& scan, std::size_t lo, std::size_t hi) {
  const auto im = interior_argmin(c.values, lo, hi);
  if (!im) {
    c.failure = ErrorKind::PeakCountMismatch;
    c.message = "no sample between the bracketing points";
    return;
  }
  const double lm = parabolic_vertex(c.lambdas, c.values, *im);
  c.lambda_min = lm;
  c.energy_min = scan.at(lm, false).energies(c.level - 1);
}

}  // namespace detail

/// G_n(lambda) = 1 - |<Psi_n(lambda), Psi_n(lambda + delta)>|^2. For n >= 2
/// the two highest peaks bracket the resonance and the minimum between them
/// gives lambda_n^f. delta <= 0 means one grid step.
inline DetectorCurve fidelity_curve(const LambdaScan& scan, int level, double delta = 0.0,
                                    const PeakOptions& opt = {}) {
  if (level < 1 || level > scan.levels) throw Error(ErrorKind::InvalidArgument, "level outside the scan");
  if (scan.lambdas.size() < 3) throw Error(ErrorKind::InvalidArgument, "fidelity needs >= 3 lambda points");
  if (delta <= 0.0) delta = scan.step();
  const auto n = static_cast<Eigen::Index>(level - 1);
  DetectorCurve c;
  c.kind = DetectorKind::fidelity;
  c.level = level;
  c.delta = delta;
  c.lambdas = scan.lambdas;
  c.values.resize(scan.lambdas.size());
  c.energies.resize(scan.lambdas.size());
  const double tol = 1e-9 * std::max(1.0, delta);
  parallel_for(scan.lambdas.size(), [&](std::size_t i) {
    const auto& a = scan.slices[i];
    const bool reuse = i + 1 < scan.lambdas.size() && std::abs(scan.lambdas[i + 1] - scan.lambdas[i] - delta) < tol;
    const SpectrumSlice b = reuse ? scan.slices[i + 1] : scan.at(scan.lambdas[i] + delta);
    const double o = overlap(a, n, b, n);
    c.values[i] = std::clamp(1.0 - o * o, 0.0, 1.0);
    c.energies[i] = a.energies(n);
  });

  auto peaks = find_peaks(c.values, opt.floor);
  for (auto p : peaks) c.peaks.push_back(c.lambdas[p]);
  std::sort(c.peaks.begin(), c.peaks.end());
  if (level == 1) {
    if (peaks.size() != 1) {
      c.failure = ErrorKind::PeakCountMismatch;
      c.message = "expected a single peak for the lowest level";
    }
    return c;  // no interior minimum for the lowest level
  }
  if (peaks.size() < 2) {
    c.failure = ErrorKind::PeakCountMismatch;
    c.message = "expected two peaks, found " + std::to_string(peaks.size());
    return c;
  }
  const std::size_t lo = std::min(peaks[0], peaks[1]), hi = std::max(peaks[0], peaks[1]);
  detail::locate_minimum(c, scan, lo, hi);
  return c;
}

/// DO_n(lambda) = |<Psi_n(lambda_L), Psi_n(lambda)>|^2 + |<Psi_n(lambda_R), Psi_n(lambda)>|^2
/// on the grid points inside (lambda_L, lambda_R).
inline DetectorCurve do_curve(const LambdaScan& scan, int level, double lambda_L, double lambda_R,
                              double max_anchor_overlap = 0.1) {
  if (level < 1 || level > scan.levels) throw Error(ErrorKind::InvalidArgument, "level outside the scan");
  if (!(lambda_L < lambda_R)) throw Error(ErrorKind::InvalidArgument, "need lambda_L < lambda_R");
  const auto n = static_cast<Eigen::Index>(level - 1);
  const SpectrumSlice L = scan.at(lambda_L), R = scan.at(lambda_R);
  const double lr = overlap(L, n, R, n);
  DetectorCurve c;
  c.kind = DetectorKind::double_orthogonality;
  c.level = level;
  c.lambda_L = lambda_L;
  c.lambda_R = lambda_R;
  c.anchor_overlap = lr * lr;
  if (c.anchor_overlap > max_anchor_overlap)
    throw Error(ErrorKind::AnchorInsideResonance, "anchor states overlap: |<L|R>|^2 = " + std::to_string(c.anchor_overlap));

  const double tol = 1e-9;
  for (std::size_t i = 0; i < scan.lambdas.size(); ++i) {
    const double l = scan.lambdas[i];
    if (l <= lambda_L + tol || l >= lambda_R - tol) continue;
    const auto& s = scan.slices[i];
    const double a = overlap(L, n, s, n), b = overlap(R, n, s, n);
    c.lambdas.push_back(l);
    c.values.push_back(std::clamp(a * a + b * b, 0.0, 2.0));
    c.energies.push_back(s.energies(n));
  }
  if (c.values.size() < 3) {
    c.failure = ErrorKind::InvalidArgument;
    c.message = "fewer than three grid points between the anchors";
    return c;
  }
  const auto im = std::min_element(c.values.begin(), c.values.end()) - c.values.begin();
  const double lm = parabolic_vertex(c.lambdas, c.values, static_cast<std::size_t>(im));
  c.lambda_min = lm;
  c.energy_min = scan.at(lm, false).energies(n);
  return c;
}

/// Anchors for DO_n taken outside the two fidelity peaks, pushed out by
/// `margin` times the peak separation and clipped to the grid.
inline std::pair<double, double> do_anchors_from_fidelity(const DetectorCurve& fid, const LambdaScan& scan,
                                                          double margin = 0.5) {
  if (fid.peaks.size() < 2) throw Error(ErrorKind::PeakCountMismatch, "fidelity curve lacks two peaks");
  // the two highest peaks, in ascending order
  const auto idx = find_peaks(fid.values, 0.0);
  double p1 = fid.lambdas[idx[0]], p2 = fid.lambdas[idx[1]];
  if (p1 > p2) std::swap(p1, p2);
  const double h = scan.step();
  const double gap = std::max(p2 - p1, 2.0 * h);
  auto snap = [&](double x) {
    x = std::clamp(x, scan.lambdas.front(), scan.lambdas.back());
    const auto k = std::lround((x - scan.lambdas.front()) / h);
    return scan.lambdas[static_cast<std::size_t>(std::clamp<long>(k, 0, static_cast<long>(scan.lambdas.size()) - 1))];
  };
  return {snap(p1 - margin * gap), snap(p2 + margin * gap)};
}

// ---------------------------------------------------------------------------
// Coulomb repulsion and Hellmann-Feynman

/// <1/r12> for a normalized real state in reduced coordinates.
inline double coulomb_expectation(const ReducedOperators& red, const Eigen::VectorXd& y) {
  return y.dot(red.W * y);
}

inline double coulomb_expectation(const SpectrumSlice& s, Eigen::Index j) {
  return coulomb_expectation(*s.basis, s.Y.col(j));
}

/// e^{-i theta} y^T W y for a c-normalized complex-scaled state.
inline std::complex<double> complex_coulomb_expectation(const ReducedOperators& red, const Eigen::VectorXcd& y,
                                                        double theta) {
  const Eigen::VectorXcd Wy = red.W.cast<std::complex<double>>() * y;
  return std::polar(1.0, -theta) * (y.transpose() * Wy)(0, 0);
}

/// Smallest lambda where |Im <1/r12>_theta| first exceeds the threshold.
inline std::optional<double> detect_lambda_rep(const std::vector<double>& lambdas,
                                               const std::vector<std::complex<double>>& r12, double threshold = 1e-3) {
  for (std::size_t i = 0; i < std::min(lambdas.size(), r12.size()); ++i)
    if (std::abs(r12[i].imag()) > threshold) return lambdas[i];
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Reduced density matrices
//
// With an orthonormal radial set chi (chi = B^{-T} phi, B = s^{1/2} U^T from
// the orbital Gram matrix g = U s U^T) a singlet s-wave state reads
//   Psi = sum_l sum_ab C^l_ab chi_a(r1) chi_b(r2) Y^l_00,
//   Y^l_00 = (-1)^l / sqrt(2l+1) sum_mu S_lmu(1) S_lmu(2)
// with real spherical harmonics S_lmu. The one-electron density matrix is
// block diagonal in (l, mu) with block C^l C^l^T / (2l+1) (C^l C^l^H for the
// Hermitian product), repeated 2l+1 times.

enum class RdmConvention { hermitian, c_product };

inline const char* to_string(RdmConvention c) { return c == RdmConvention::hermitian ? "hermitian" : "c_product"; }

struct SchmidtBlocks {
  RdmConvention convention = RdmConvention::hermitian;
  std::vector<Eigen::MatrixXcd> C;  // indexed by l

  /// Block of rho_red for one (l, mu), before the 1/(2l+1) factor.
  Eigen::MatrixXcd gram(std::size_t l) const {
    const auto& c = C[l];
    return convention == RdmConvention::hermitian ? Eigen::MatrixXcd(c * c.adjoint())
                                                  : Eigen::MatrixXcd(c * c.transpose());
  }

  std::complex<double> trace() const {
    std::complex<double> t = 0.0;
    for (std::size_t l = 0; l < C.size(); ++l) t += gram(l).trace();
    return t;
  }

  std::complex<double> purity() const {
    std::complex<double> p = 0.0;
    for (std::size_t l = 0; l < C.size(); ++l) {
      const Eigen::MatrixXcd g = gram(l);
      p += (g * g).trace() / static_cast<double>(2 * l + 1);
    }
    return p;
  }

  /// Eigenvalues of rho_red, each listed once per mu (Hermitian only).
  std::vector<double> occupations() const {
    if (convention != RdmConvention::hermitian)
      throw Error(ErrorKind::ConventionMismatch, "occupations need the Hermitian convention");
    std::vector<double> occ;
    for (std::size_t l = 0; l < C.size(); ++l) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(gram(l), Eigen::EigenvaluesOnly);
      for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
        const double v = std::max(0.0, es.eigenvalues()(k)) / static_cast<double>(2 * l + 1);
        for (std::size_t mu = 0; mu < 2 * l + 1; ++mu) occ.push_back(v);
      }
    }
    return occ;
  }
};

/// Linear map from reduced coordinates to the blocks C^l. Reduced column k
/// belongs to a single l (X is block diagonal in l) and maps to Z_k.
class SchmidtMap {
 public:
  explicit SchmidtMap(const ReducedOperators& red) : dim_(red.dim()) {
    const auto& ops = *red.ops;
    const int N = ops.basis.N;
    const int no = N + 1;
    MatrixXld g(no, no);
    for (int a = 0; a < no; ++a)
      for (int b = 0; b < no; ++b) g(a, b) = orbital_overlap<ld>(a, b);
    Eigen::SelfAdjointEigenSolver<MatrixXld> es(g);
    const VectorXld s = es.eigenvalues().cwiseMax(0.0L).cwiseSqrt();
    const MatrixXld B = s.asDiagonal() * es.eigenvectors().transpose();

    lmax_ = 0;
    for (const auto& i : ops.index) lmax_ = std::max(lmax_, i.l);
    col_l_.assign(static_cast<std::size_t>(dim_), 0);
    Z_.resize(static_cast<std::size_t>(dim_));
    for (const auto& blk : red.transform.blocks()) {
      for (Eigen::Index j = 0; j < blk.X.cols(); ++j) {
        MatrixXld R = MatrixXld::Zero(no, no);
        int l = 0;
        for (std::size_t r = 0; r < blk.rows.size(); ++r) {
          const auto& bi = ops.index[static_cast<std::size_t>(blk.rows[r])];
          l = bi.l;
          const ld v = blk.X(static_cast<Eigen::Index>(r), j) / pair_norm<ld>(bi.n1, bi.n2);
          R(bi.n1, bi.n2) += v;
          R(bi.n2, bi.n1) += v;
        }
        const Eigen::Index k = blk.col0 + j;
        col_l_[static_cast<std::size_t>(k)] = l;
        // (-1)^l from Y^l_00 squares away in every trace; dropped
        Z_[static_cast<std::size_t>(k)] = (B * R * B.transpose()).cast<double>();
      }
    }
  }

  Eigen::Index dim() const { return dim_; }
  int lmax() const { return lmax_; }

  template <class Vec>
  SchmidtBlocks blocks(const Vec& y, RdmConvention conv) const {
    if (y.size() != dim_) throw Error(ErrorKind::BasisMismatch, "state dimension does not match the map");
    SchmidtBlocks sb;
    sb.convention = conv;
    const auto no = Z_.empty() ? 0 : Z_.front().rows();
    sb.C.assign(static_cast<std::size_t>(lmax_ + 1), Eigen::MatrixXcd::Zero(no, no));
    for (Eigen::Index k = 0; k < dim_; ++k)
      sb.C[static_cast<std::size_t>(col_l_[static_cast<std::size_t>(k)])] +=
          std::complex<double>(y(k)) * Z_[static_cast<std::size_t>(k)].template cast<std::complex<double>>();
    return sb;
  }

 private:
  Eigen::Index dim_ = 0;
  int lmax_ = 0;
  std::vector<int> col_l_;
  std::vector<Eigen::MatrixXd> Z_;
};

inline SchmidtBlocks schmidt_blocks(const SchmidtMap& map, const Eigen::VectorXd& y) {
  return map.blocks(y, RdmConvention::hermitian);
}

inline SchmidtBlocks schmidt_blocks(const SchmidtMap& map, const Eigen::VectorXcd& y, RdmConvention conv) {
  return map.blocks(y, conv);
}

struct EntropyReport {
  std::complex<double> S_lin = 0.0;
  std::optional<double> S_vN;  // Hermitian convention only
  std::complex<double> trace = 0.0;
  double theta = 0.0;
  RdmConvention convention = RdmConvention::hermitian;
};

inline EntropyReport linear_entropy(const SchmidtBlocks& sb, double theta = 0.0) {
  EntropyReport r;
  r.convention = sb.convention;
  r.theta = theta;
  r.trace = sb.trace();
  r.S_lin = 1.0 - sb.purity();
  return r;
}

/// -sum p log2 p over the (l, mu)-resolved occupations.
inline double von_neumann_entropy(const SchmidtBlocks& sb) {
  if (sb.convention != RdmConvention::hermitian)
    throw Error(ErrorKind::ConventionMismatch, "von Neumann entropy needs real occupations");
  double S = 0.0;
  for (double p : sb.occupations())
    if (p > 0.0) S -= p * std::log2(p);
  return S;
}

/// Linear and von Neumann entropy of a real state.
inline EntropyReport entropy_report(const SchmidtMap& map, const Eigen::VectorXd& y) {
  const auto sb = schmidt_blocks(map, y);
  auto r = linear_entropy(sb);
  r.S_vN = von_neumann_entropy(sb);
  return r;
}

/// S^theta = 1 - tr (rho^theta_red)^2 for a c-normalized resonance vector.
inline EntropyReport complex_linear_entropy(const SchmidtMap& map, const Eigen::VectorXcd& y, double theta) {
  const std::complex<double> n2 = (y.transpose() * y)(0, 0);
  if (std::abs(n2) < kCNormFloor * y.squaredNorm())
    throw Error(ErrorKind::CNormBreakdown, "self-orthogonal resonance vector");
  return linear_entropy(schmidt_blocks(map, Eigen::VectorXcd(y / std::sqrt(n2)), RdmConvention::c_product), theta);
}

}  // namespace qdres
