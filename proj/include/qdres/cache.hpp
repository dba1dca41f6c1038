#pragma once
// On-disk cache for operator sets and lambda sweeps.
//
// Files are little-endian binary: magic, format version, the canonical key
// text, then typed arrays. long double entries are stored as their 10
// significant x87 bytes so a reload is bit-identical. Keys are SHA-256
// digests of a canonical text in which every double is printed as a hex
// float, so a one-ulp change yields a different file.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include "qdres/diagnostics.hpp"
#include "qdres/error.hpp"
#include "qdres/operators.hpp"
#include "qdres/spectra.hpp"

namespace qdres {

constexpr std::uint32_t kCacheFormatVersion = 1;

static_assert(std::endian::native == std::endian::little, "cache files assume a little-endian host");
static_assert(std::numeric_limits<long double>::digits == 64, "cache files assume x87 extended precision");

inline std::string sha256_hex(std::string_view text) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::Io, "SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string hexfloat(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

/// Everything that determines a cached object. Unset optionals do not apply
/// to the object kind (an operator set does not depend on V0 or lambda).
struct CacheKey {
  std::string kind;
  int N = 0;
  double alpha = 0.0;
  std::optional<double> V0;
  std::optional<double> theta;
  std::vector<double> lambdas;
  double cutoff = 0.0;
  int levels = 0;
  std::uint32_t format = kCacheFormatVersion;

  std::string canonical() const {
    std::string s = "kind=" + kind + ";N=" + std::to_string(N) + ";alpha=" + hexfloat(alpha);
    s += ";V0=" + (V0 ? hexfloat(*V0) : std::string("-"));
    s += ";theta=" + (theta ? hexfloat(*theta) : std::string("-"));
    s += ";lambda=";
    for (double l : lambdas) s += hexfloat(l) + ",";
    s += ";cutoff=" + hexfloat(cutoff) + ";levels=" + std::to_string(levels);
    s += ";format=" + std::to_string(format);
    return s;
  }
};

inline std::string cache_key(const CacheKey& k) { return sha256_hex(k.canonical()); }

namespace detail {

constexpr char kCacheMagic[8] = {'Q', 'D', 'R', 'E', 'S', 'C', 'A', 'C'};

class BlobWriter {
 public:
  explicit BlobWriter(const std::filesystem::path& p) : path_(p), tmp_(p.string() + ".tmp"), out_(tmp_, std::ios::binary) {
    if (!out_) throw Error(ErrorKind::Io, "cannot write " + tmp_.string());
  }
  template <class T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint64_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void ld(long double v) {
    unsigned char b[16] = {};
    std::memcpy(b, &v, sizeof v);
    out_.write(reinterpret_cast<const char*>(b), 10);
  }
  void header(const CacheKey& key) {
    out_.write(kCacheMagic, sizeof kCacheMagic);
    pod(kCacheFormatVersion);
    str(key.canonical());
  }
  // rename into place only once complete
  void commit() {
    out_.close();
    if (!out_) throw Error(ErrorKind::Io, "write failed for " + tmp_.string());
    std::filesystem::rename(tmp_, path_);
  }

 private:
  std::filesystem::path path_, tmp_;
  std::ofstream out_;
};

class BlobReader {
 public:
  explicit BlobReader(const std::filesystem::path& p) : in_(p, std::ios::binary), path_(p) {
    if (!in_) throw Error(ErrorKind::Io, "cannot read " + p.string());
  }
  template <class T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1u << 20)) throw Error(ErrorKind::CacheFormat, "oversized string in " + path_.string());
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  long double ld() {
    unsigned char b[16] = {};
    in_.read(reinterpret_cast<char*>(b), 10);
    check();
    long double v = 0.0L;
    std::memcpy(&v, b, sizeof v);
    return v;
  }
  void header(const CacheKey& key) {
    char magic[sizeof kCacheMagic];
    in_.read(magic, sizeof magic);
    check();
    if (std::memcmp(magic, kCacheMagic, sizeof magic) != 0) throw Error(ErrorKind::CacheFormat, "bad magic in " + path_.string());
    if (pod<std::uint32_t>() != kCacheFormatVersion)
      throw Error(ErrorKind::CacheFormat, "format version mismatch in " + path_.string());
    if (str() != key.canonical()) throw Error(ErrorKind::CacheFormat, "key mismatch in " + path_.string());
  }

 private:
  void check() {
    if (!in_) throw Error(ErrorKind::CacheFormat, "truncated cache file " + path_.string());
  }
  std::ifstream in_;
  std::filesystem::path path_;
};

inline void write_symmetric(BlobWriter& w, const MatrixXld& A) {
  w.pod(static_cast<std::int64_t>(A.rows()));
  for (Eigen::Index j = 0; j < A.cols(); ++j)
    for (Eigen::Index i = 0; i <= j; ++i) w.ld(A(i, j));
}

inline MatrixXld read_symmetric(BlobReader& r, Eigen::Index expect) {
  const auto n = r.pod<std::int64_t>();
  if (n != expect) throw Error(ErrorKind::CacheFormat, "matrix size mismatch");
  MatrixXld A(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i <= j; ++i) A(i, j) = A(j, i) = r.ld();
  return A;
}

inline void write_dense(BlobWriter& w, const Eigen::MatrixXd& A) {
  w.pod(static_cast<std::int64_t>(A.rows()));
  w.pod(static_cast<std::int64_t>(A.cols()));
  for (Eigen::Index j = 0; j < A.cols(); ++j)
    for (Eigen::Index i = 0; i < A.rows(); ++i) w.pod(A(i, j));
}

inline Eigen::MatrixXd read_dense(BlobReader& r) {
  const auto rows = r.pod<std::int64_t>(), cols = r.pod<std::int64_t>();
  if (rows < 0 || cols < 0 || rows * cols > (std::int64_t{1} << 28)) throw Error(ErrorKind::CacheFormat, "bad matrix shape");
  Eigen::MatrixXd A(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) A(i, j) = r.pod<double>();
  return A;
}

}  // namespace detail

inline CacheKey operator_key(const BasisSpec& spec) {
  CacheKey k;
  k.kind = "operators";
  k.N = spec.N;
  k.alpha = spec.alpha;
  return k;
}

inline void save_operator_set(const std::filesystem::path& p, const OperatorSet& ops) {
  detail::BlobWriter w(p);
  w.header(operator_key(ops.basis));
  for (const MatrixXld* m : {&ops.S, &ops.T, &ops.V, &ops.W}) detail::write_symmetric(w, *m);
  w.commit();
}

inline OperatorSet load_operator_set(const std::filesystem::path& p, const BasisSpec& spec) {
  detail::BlobReader r(p);
  r.header(operator_key(spec));
  OperatorSet ops;
  ops.basis = spec;
  ops.index = enumerate_basis(spec);
  const auto M = static_cast<Eigen::Index>(ops.index.size());
  for (MatrixXld* m : {&ops.S, &ops.T, &ops.V, &ops.W}) *m = detail::read_symmetric(r, M);
  return ops;
}

inline CacheKey scan_key(const BasisSpec& spec, double cutoff, double V0, const std::vector<double>& lambdas,
                         int levels) {
  CacheKey k;
  k.kind = "lambda-scan";
  k.N = spec.N;
  k.alpha = spec.alpha;
  k.V0 = V0;
  k.theta = 0.0;
  k.lambdas = lambdas;
  k.cutoff = cutoff;
  k.levels = levels;
  return k;
}

inline void save_scan(const std::filesystem::path& p, const LambdaScan& scan) {
  detail::BlobWriter w(p);
  w.header(scan_key(scan.basis->basis(), scan.basis->transform.cutoff(), scan.V0, scan.lambdas, scan.levels));
  w.pod(static_cast<std::uint64_t>(scan.slices.size()));
  for (const auto& s : scan.slices) {
    detail::write_dense(w, s.energies);
    detail::write_dense(w, s.Y);
  }
  w.commit();
}

inline LambdaScan load_scan(const std::filesystem::path& p, std::shared_ptr<const ReducedOperators> red, double V0,
                            const std::vector<double>& lambdas, int levels) {
  detail::BlobReader r(p);
  r.header(scan_key(red->basis(), red->transform.cutoff(), V0, lambdas, levels));
  LambdaScan scan;
  scan.basis = red;
  scan.V0 = V0;
  scan.levels = levels;
  scan.lambdas = lambdas;
  const auto n = r.pod<std::uint64_t>();
  if (n != lambdas.size()) throw Error(ErrorKind::CacheFormat, "scan length mismatch");
  scan.slices.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = scan.slices[i];
    s.lambda = lambdas[i];
    s.alpha = red->basis().alpha;
    s.V0 = V0;
    s.cond_S = red->transform.condition();
    s.retained_dim = red->dim();
    s.basis = red;
    s.energies = detail::read_dense(r).col(0);
    s.Y = detail::read_dense(r);
    if (s.Y.rows() != red->dim()) throw Error(ErrorKind::CacheFormat, "scan vectors do not match the basis");
  }
  return scan;
}

/// Directory-backed cache. An empty directory disables it; unreadable or
/// stale files are rebuilt and overwritten.
class Cache {
 public:
  Cache() = default;
  explicit Cache(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
  }

  bool enabled() const { return !dir_.empty(); }
  const std::filesystem::path& dir() const { return dir_; }
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

  std::filesystem::path path_for(const CacheKey& k) const { return dir_ / (k.kind + "-" + cache_key(k) + ".bin"); }

  std::shared_ptr<const OperatorSet> operators(const BasisSpec& spec) {
    if (enabled()) {
      const auto p = path_for(operator_key(spec));
      if (std::filesystem::exists(p)) {
        try {
          auto ops = std::make_shared<const OperatorSet>(load_operator_set(p, spec));
          ++hits_;
          return ops;
        } catch (const Error&) {
        }
      }
      ++misses_;
      auto ops = std::make_shared<const OperatorSet>(build_operator_set(spec));
      save_operator_set(p, *ops);
      return ops;
    }
    return std::make_shared<const OperatorSet>(build_operator_set(spec));
  }

  std::shared_ptr<const ReducedOperators> reduced(const BasisSpec& spec, double cutoff) {
    return reduce_operators(operators(spec), cutoff);
  }

  LambdaScan scan(std::shared_ptr<const ReducedOperators> red, double V0, const std::vector<double>& lambdas,
                  int levels, unsigned workers = 0) {
    if (!enabled()) return scan_lambda(std::move(red), V0, lambdas, levels, workers);
    const auto p = path_for(scan_key(red->basis(), red->transform.cutoff(), V0, lambdas, levels));
    if (std::filesystem::exists(p)) {
      try {
        auto s = load_scan(p, red, V0, lambdas, levels);
        ++hits_;
        return s;
      } catch (const Error&) {
      }
    }
    ++misses_;
    auto s = scan_lambda(std::move(red), V0, lambdas, levels, workers);
    save_scan(p, s);
    return s;
  }

 private:
  std::filesystem::path dir_;
  std::size_t hits_ = 0, misses_ = 0;
};

}  // namespace qdres
