#pragma once
// Generalized eigenproblems H c = E S c (real) and H(theta) c = E S c
// (complex symmetric), solved after canonical orthogonalization of S.

#include <algorithm>
#include <complex>
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qdres/error.hpp"
#include "qdres/operators.hpp"

namespace qdres {

constexpr double kDefaultOverlapCutoff = 1e-12;
constexpr double kMaxReducedCondition = 1e13;

/// Canonical orthogonalization X = U s^{-1/2} restricted to the eigenvectors
/// of S with s >= tau * max(s). X^T S X = 1 on the retained subspace.
///
/// When a block labelling is supplied (S block diagonal in those labels) the
/// decomposition is done block by block, which is exact and much cheaper.
/// X is then stored as dense per-block pieces.
class CanonicalTransform {
 public:
  struct Block {
    std::vector<Eigen::Index> rows;  // indices into the full basis
    Eigen::Index col0 = 0;           // first reduced column owned by the block
    MatrixXld X;                     // rows.size() x retained
  };

  Eigen::Index full_dim() const { return full_dim_; }
  Eigen::Index retained_dim() const { return retained_dim_; }
  /// max/min retained eigenvalue of S.
  double condition() const { return cond_; }
  double cutoff() const { return tau_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  /// X as a dense full_dim x retained_dim matrix.
  MatrixXld dense() const {
    MatrixXld X = MatrixXld::Zero(full_dim_, retained_dim_);
    for (const auto& b : blocks_)
      for (std::size_t i = 0; i < b.rows.size(); ++i)
        X.block(b.rows[i], b.col0, 1, b.X.cols()) = b.X.row(static_cast<Eigen::Index>(i));
    return X;
  }

  /// X^T A X, exploiting the block structure of X.
  template <class Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> project(
      const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& A, bool block_diagonal = false) const {
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Mat out = Mat::Zero(retained_dim_, retained_dim_);
    for (const auto& p : blocks_) {
      if (p.X.cols() == 0) continue;
      const Mat Xp = p.X.template cast<Scalar>();
      for (const auto& q : blocks_) {
        if (q.X.cols() == 0) continue;
        if (block_diagonal && &p != &q) continue;
        const Mat Apq = A(p.rows, q.rows);
        out.block(p.col0, q.col0, p.X.cols(), q.X.cols()) =
            Xp.transpose() * Apq * q.X.template cast<Scalar>();
      }
    }
    return out;
  }

  /// c = X y.
  template <class Scalar>
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> expand(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& y) const {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> c = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(full_dim_);
    for (const auto& b : blocks_) {
      if (b.X.cols() == 0) continue;
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> part =
          b.X.template cast<Scalar>() * y.segment(b.col0, b.X.cols());
      for (std::size_t i = 0; i < b.rows.size(); ++i) c(b.rows[i]) += part(static_cast<Eigen::Index>(i));
    }
    return c;
  }

  friend CanonicalTransform condition_and_reduce(const MatrixXld& S, double tau,
                                                 std::span<const int> block_of);

 private:
  Eigen::Index full_dim_ = 0;
  Eigen::Index retained_dim_ = 0;
  double cond_ = 1.0;
  double tau_ = kDefaultOverlapCutoff;
  std::vector<Block> blocks_;
};

inline CanonicalTransform condition_and_reduce(const MatrixXld& S, double tau = kDefaultOverlapCutoff,
                                               std::span<const int> block_of = {}) {
  if (S.rows() != S.cols()) throw Error(ErrorKind::InvalidArgument, "S must be square");
  const Eigen::Index M = S.rows();
  if (!block_of.empty() && static_cast<Eigen::Index>(block_of.size()) != M)
    throw Error(ErrorKind::InvalidArgument, "block labelling size mismatch");

  std::map<int, std::vector<Eigen::Index>> groups;
  for (Eigen::Index i = 0; i < M; ++i) groups[block_of.empty() ? 0 : block_of[static_cast<std::size_t>(i)]].push_back(i);

  struct Decomp {
    std::vector<Eigen::Index> rows;
    VectorXld evals;
    MatrixXld evecs;
  };
  std::vector<Decomp> decomps;
  ld smax = 0.0L;
  for (auto& [label, rows] : groups) {
    const MatrixXld Sb = S(rows, rows);
    Eigen::SelfAdjointEigenSolver<MatrixXld> es(Sb);
    if (es.info() != Eigen::Success) throw Error(ErrorKind::IllConditioned, "overlap eigensolver failed");
    smax = std::max(smax, es.eigenvalues().maxCoeff());
    decomps.push_back({rows, es.eigenvalues(), es.eigenvectors()});
  }

  CanonicalTransform t;
  t.full_dim_ = M;
  t.tau_ = tau;
  const ld floor = static_cast<ld>(tau) * smax;
  ld smin = smax;
  Eigen::Index col = 0;
  for (auto& d : decomps) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index k = 0; k < d.evals.size(); ++k)
      if (d.evals(k) >= floor) keep.push_back(k);
    CanonicalTransform::Block b;
    b.rows = d.rows;
    b.col0 = col;
    b.X.resize(static_cast<Eigen::Index>(d.rows.size()), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
      const ld s = d.evals(keep[j]);
      smin = std::min(smin, s);
      b.X.col(static_cast<Eigen::Index>(j)) = d.evecs.col(keep[j]) / std::sqrt(s);
    }
    col += b.X.cols();
    t.blocks_.push_back(std::move(b));
  }
  t.retained_dim_ = col;
  t.cond_ = col > 0 ? static_cast<double>(smax / smin) : 1.0;
  return t;
}

/// Operators mapped into the S-orthonormal reduced space of one (N, alpha).
/// T, V, W are cached here and reused for every lambda.
struct ReducedOperators {
  std::shared_ptr<const OperatorSet> ops;
  CanonicalTransform transform;
  Eigen::MatrixXd T, V, W;

  const BasisSpec& basis() const { return ops->basis; }
  Eigen::Index dim() const { return transform.retained_dim(); }

  Eigen::MatrixXd hamiltonian(const ModelParams& p) const { return T - p.V0 * V + p.lambda * W; }

  /// Reduced complex-scaled Hamiltonian.
  Eigen::MatrixXcd scaled_hamiltonian(const ModelParams& p) const {
    using cd = std::complex<double>;
    const MatrixXcld Vt = transform.project<cld>(scaled_potential(*ops, p.theta), true);
    const cd rot2 = std::polar(1.0, -2.0 * p.theta);
    const cd rot1 = std::polar(1.0, -p.theta);
    Eigen::MatrixXcd H = rot2 * T.cast<cd>() - p.V0 * Vt.cast<cd>() + (p.lambda * rot1) * W.cast<cd>();
    return H;
  }
};

inline std::shared_ptr<const ReducedOperators> reduce_operators(std::shared_ptr<const OperatorSet> ops,
                                                                double tau = kDefaultOverlapCutoff) {
  auto r = std::make_shared<ReducedOperators>();
  const auto labels = ops->blocks();
  r->transform = condition_and_reduce(ops->S, tau, labels);
  if (r->transform.condition() > kMaxReducedCondition)
    throw Error(ErrorKind::IllConditioned, "reduced overlap condition number exceeds 1e13");
  r->T = r->transform.project<ld>(ops->T, true).cast<double>();
  r->V = r->transform.project<ld>(ops->V, true).cast<double>();
  r->W = r->transform.project<ld>(ops->W).cast<double>();
  r->ops = std::move(ops);
  return r;
}

inline std::shared_ptr<const ReducedOperators> prepare_basis(const BasisSpec& spec,
                                                             double tau = kDefaultOverlapCutoff) {
  return reduce_operators(std::make_shared<const OperatorSet>(build_operator_set(spec)), tau);
}

/// Real variational spectrum at one (lambda, alpha). Eigenvectors are kept in
/// reduced coordinates Y (orthonormal columns); c = X y gives the expansion
/// coefficients in the symmetrized basis with c^T S c = 1.
struct SpectrumSlice {
  double lambda = 0.0;
  double alpha = 0.0;
  double V0 = 0.0;
  Eigen::VectorXd energies;
  Eigen::MatrixXd Y;
  double cond_S = 1.0;
  Eigen::Index retained_dim = 0;
  std::shared_ptr<const ReducedOperators> basis;

  Eigen::Index size() const { return energies.size(); }
  Eigen::VectorXd reduced_state(Eigen::Index j) const { return Y.col(j); }
  /// Expansion coefficients of state j in the |n1,n2;l> basis.
  Eigen::VectorXd coefficients(Eigen::Index j) const {
    const VectorXld y = Y.col(j).cast<ld>();
    return basis->transform.expand<ld>(y).cast<double>();
  }
};

namespace detail {

template <class Vec>
void fix_sign(Vec&& v) {
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  if (v(imax) < 0) v = -v;
}

}  // namespace detail

/// keep_vectors < 0 keeps every eigenvector, otherwise only the lowest ones.
inline SpectrumSlice solve_real(const std::shared_ptr<const ReducedOperators>& red, const ModelParams& params,
                                bool with_vectors = true, Eigen::Index keep_vectors = -1) {
  params.validate();
  if (params.theta != 0.0) throw Error(ErrorKind::InvalidArgument, "solve_real requires theta = 0");
  SpectrumSlice out;
  out.lambda = params.lambda;
  out.alpha = red->basis().alpha;
  out.V0 = params.V0;
  out.cond_S = red->transform.condition();
  out.retained_dim = red->dim();
  out.basis = red;
  const Eigen::MatrixXd H = red->hamiltonian(params);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, with_vectors ? Eigen::ComputeEigenvectors
                                                                     : Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::IllConditioned, "real eigensolver failed");
  out.energies = es.eigenvalues();
  if (with_vectors) {
    const Eigen::Index k = keep_vectors < 0 ? red->dim() : std::min(keep_vectors, red->dim());
    out.Y = es.eigenvectors().leftCols(k);
    for (Eigen::Index j = 0; j < out.Y.cols(); ++j) detail::fix_sign(out.Y.col(j));
  }
  return out;
}

/// Eigenpairs of the complex-symmetric pencil (H(theta), S). Vectors are
/// c-normalized: y^T y = 1 (transpose, no conjugation), i.e. c^T S c = 1.
struct ComplexSpectrum {
  double theta = 0.0;
  double lambda = 0.0;
  double alpha = 0.0;
  Eigen::VectorXcd eigenvalues;
  Eigen::MatrixXcd Y;               // empty when vectors were not requested
  std::vector<bool> artifact;       // Im E > +1e-8
  std::vector<bool> cnorm_breakdown;
  std::shared_ptr<const ReducedOperators> basis;

  Eigen::VectorXcd coefficients(Eigen::Index j) const {
    const Eigen::Matrix<cld, Eigen::Dynamic, 1> y = Y.col(j).cast<cld>();
    return basis->transform.expand<cld>(y).cast<std::complex<double>>();
  }
};

constexpr double kArtifactImag = 1e-8;
constexpr double kCNormFloor = 1e-10;

namespace detail {

// c-normalize in place; false if y^T y vanishes (self-orthogonal vector).
inline bool c_normalize(Eigen::Ref<Eigen::VectorXcd> y) {
  const std::complex<double> n2 = (y.transpose() * y)(0, 0);
  if (std::abs(n2) < kCNormFloor * y.squaredNorm()) return false;
  std::complex<double> n = std::sqrt(n2);
  y /= n;
  // phase convention: largest-magnitude component has positive real part
  Eigen::Index imax = 0;
  y.cwiseAbs().maxCoeff(&imax);
  if (y(imax).real() < 0) y = -y;
  return true;
}

}  // namespace detail

inline ComplexSpectrum solve_complex_reduced(const std::shared_ptr<const ReducedOperators>& red,
                                             const Eigen::MatrixXcd& H, double theta, double lambda,
                                             bool with_vectors) {
  ComplexSpectrum out;
  out.theta = theta;
  out.lambda = lambda;
  out.alpha = red->basis().alpha;
  out.basis = red;
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(H, with_vectors);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::IllConditioned, "complex eigensolver failed");
  const Eigen::Index n = H.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const auto& ev = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    if (ev(a).real() != ev(b).real()) return ev(a).real() < ev(b).real();
    return ev(a).imag() < ev(b).imag();
  });
  out.eigenvalues.resize(n);
  if (with_vectors) out.Y.resize(n, n);
  out.artifact.resize(static_cast<std::size_t>(n));
  out.cnorm_breakdown.assign(static_cast<std::size_t>(n), false);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto src = order[static_cast<std::size_t>(k)];
    out.eigenvalues(k) = ev(src);
    out.artifact[static_cast<std::size_t>(k)] = ev(src).imag() > kArtifactImag;
    if (with_vectors) {
      out.Y.col(k) = es.eigenvectors().col(src);
      out.cnorm_breakdown[static_cast<std::size_t>(k)] = !detail::c_normalize(out.Y.col(k));
    }
  }
  return out;
}

inline ComplexSpectrum solve_complex(const std::shared_ptr<const ReducedOperators>& red, const ModelParams& params,
                                     bool with_vectors = true) {
  params.validate();
  if (!(params.theta > 0.0)) throw Error(ErrorKind::InvalidArgument, "solve_complex requires theta > 0");
  return solve_complex_reduced(red, red->scaled_hamiltonian(params), params.theta, params.lambda, with_vectors);
}

/// Full-matrix entry point: reduce an assembled H(theta) with the overlap of
/// `ops` and solve.
inline ComplexSpectrum solve_complex(const ScaledHamiltonian& h, const std::shared_ptr<const OperatorSet>& ops,
                                     bool with_vectors = true, double tau = kDefaultOverlapCutoff) {
  if (!(h.theta > 0.0)) throw Error(ErrorKind::InvalidArgument, "solve_complex requires theta > 0");
  auto red = reduce_operators(ops, tau);
  const Eigen::MatrixXcd H = red->transform.project<cld>(h.H).cast<std::complex<double>>();
  return solve_complex_reduced(red, H, h.theta, h.params.lambda, with_vectors);
}

/// Right eigenvector of the reduced complex-symmetric H for the eigenvalue
/// closest to `E`, by shifted inverse iteration; c-normalized.
inline Eigen::VectorXcd complex_eigenvector(const Eigen::MatrixXcd& H, std::complex<double> E,
                                            std::complex<double>* refined = nullptr) {
  const Eigen::Index n = H.rows();
  const double scale = std::max(1.0, std::abs(E));
  const std::complex<double> shift = E + std::complex<double>(1e-10 * scale, 1e-10 * scale);
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(H - shift * Eigen::MatrixXcd::Identity(n, n));
  Eigen::VectorXcd y = Eigen::VectorXcd::Ones(n) / std::sqrt(static_cast<double>(n));
  std::complex<double> rq = E;
  for (int it = 0; it < 30; ++it) {
    y = lu.solve(y);
    y.normalize();
    const std::complex<double> prev = rq;
    rq = (y.transpose() * (H * y))(0, 0) / (y.transpose() * y)(0, 0);
    if (it >= 2 && std::abs(rq - prev) < 1e-14 * std::max(1.0, std::abs(rq))) break;
  }
  if (refined) *refined = rq;
  if (!detail::c_normalize(y)) throw Error(ErrorKind::CNormBreakdown, "self-orthogonal eigenvector");
  return y;
}

}  // namespace qdres
