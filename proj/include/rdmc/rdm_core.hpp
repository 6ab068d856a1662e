#pragma once

// Two-particle reduced density matrices in spin-sector packed form.
//
// Index convention: P_{ik,jl} = <a+_i a+_k a_l a_j>.  A spin sector stores
// the unique pair-pair block of P as a symmetric d x d matrix:
//   aaaa / bbbb : pairs (i,k) with i > k, numbered row-major
//                 (1,0),(2,0),(2,1),(3,0),...  d = n(n-1)/2
//   abab        : pairs (i_alpha, k_beta), index i*n + k,  d = n^2
// Packed entries hold P_{ik,jl} directly, without any sqrt(2) weights.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rdmc/errors.hpp"

namespace rdmc {

enum class SpinSector { aaaa, bbbb, abab };

inline constexpr std::array<SpinSector, 3> kAllSectors{SpinSector::aaaa, SpinSector::bbbb,
                                                       SpinSector::abab};

inline std::string_view to_string(SpinSector s) {
  switch (s) {
    case SpinSector::aaaa: return "aaaa";
    case SpinSector::bbbb: return "bbbb";
    case SpinSector::abab: return "abab";
  }
  return "?";
}

inline SpinSector parse_sector(std::string_view name) {
  if (name == "aaaa") return SpinSector::aaaa;
  if (name == "bbbb") return SpinSector::bbbb;
  if (name == "abab") return SpinSector::abab;
  throw Error("unknown spin sector '" + std::string(name) + "'");
}

inline bool is_same_spin(SpinSector s) { return s != SpinSector::abab; }

inline std::size_t sector_index(SpinSector s) { return static_cast<std::size_t>(s); }

struct SystemMeta {
  int n = 0;        // active spatial orbitals
  int n_alpha = 0;  // spin-up electrons
  int n_beta = 0;   // spin-down electrons

  int n_el() const { return n_alpha + n_beta; }

  void validate() const {
    if (n < 1) throw DimensionMismatch("SystemMeta: n must be >= 1");
    if (n_alpha < 0 || n_alpha > n || n_beta < 0 || n_beta > n)
      throw DimensionMismatch("SystemMeta: electron counts out of range for n=" +
                              std::to_string(n));
  }

  bool operator==(const SystemMeta&) const = default;
};

// ---------------------------------------------------------------------------
// Pair indexing

inline Eigen::Index same_spin_pair(int i, int k) {
  return static_cast<Eigen::Index>(i) * (i - 1) / 2 + k;
}

inline Eigen::Index mixed_pair(int i, int k, int n) {
  return static_cast<Eigen::Index>(i) * n + k;
}

inline Eigen::Index packed_dim(SpinSector s, int n) {
  return is_same_spin(s) ? static_cast<Eigen::Index>(n) * (n - 1) / 2
                         : static_cast<Eigen::Index>(n) * n;
}

/// Orbital labels (first, second) of packed pair index p.
inline std::pair<int, int> pair_labels(SpinSector s, Eigen::Index p, int n) {
  if (!is_same_spin(s)) return {static_cast<int>(p / n), static_cast<int>(p % n)};
  int i = static_cast<int>((1.0 + std::sqrt(1.0 + 8.0 * static_cast<double>(p))) / 2.0);
  while (same_spin_pair(i, 0) > p) --i;
  while (same_spin_pair(i + 1, 0) <= p) ++i;
  return {i, static_cast<int>(p - same_spin_pair(i, 0))};
}

/// Signed packed index of an ordered same-spin pair; sign 0 when i == k.
struct SignedPair {
  Eigen::Index index = 0;
  int sign = 0;
};

inline SignedPair same_spin_signed_pair(int i, int k) {
  if (i == k) return {};
  if (i > k) return {same_spin_pair(i, k), 1};
  return {same_spin_pair(k, i), -1};
}

// ---------------------------------------------------------------------------
// Dense four-index tensor, element (i,k,j,l) <-> P_{ik,jl}

class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(int n) : n_(n), data_(static_cast<std::size_t>(n) * n * n * n, 0.0) {}

  int n() const { return n_; }
  double& operator()(int i, int k, int j, int l) { return data_[offset(i, k, j, l)]; }
  double operator()(int i, int k, int j, int l) const { return data_[offset(i, k, j, l)]; }
  const std::vector<double>& raw() const { return data_; }
  std::vector<double>& raw() { return data_; }

 private:
  std::size_t offset(int i, int k, int j, int l) const {
    return ((static_cast<std::size_t>(i) * n_ + k) * n_ + j) * n_ + l;
  }
  int n_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Packed sector matrix

inline double max_abs(const Eigen::MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline bool is_symmetric(const Eigen::MatrixXd& m, double rel_tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  if (m.size() == 0) return true;
  return max_abs(m - m.transpose()) <= rel_tol * std::max(1.0, max_abs(m));
}

struct PackedRDM {
  SpinSector sector = SpinSector::abab;
  SystemMeta meta;
  Eigen::MatrixXd data;

  Eigen::Index dim() const { return data.rows(); }

  static PackedRDM zeros(SpinSector s, const SystemMeta& meta) {
    const auto d = packed_dim(s, meta.n);
    return {s, meta, Eigen::MatrixXd::Zero(d, d)};
  }

  void check() const {
    const auto d = packed_dim(sector, meta.n);
    if (data.rows() != d || data.cols() != d)
      throw DimensionMismatch("PackedRDM " + std::string(to_string(sector)) + ": expected " +
                              std::to_string(d) + "x" + std::to_string(d) + ", got " +
                              std::to_string(data.rows()) + "x" + std::to_string(data.cols()));
    if (!is_symmetric(data))
      throw SymmetryViolation("PackedRDM " + std::string(to_string(sector)) + " is not symmetric");
  }

  /// Full four-index element P_{ik,jl} of this sector (orbital labels).
  double element(int i, int k, int j, int l) const {
    if (!is_same_spin(sector)) return data(mixed_pair(i, k, meta.n), mixed_pair(j, l, meta.n));
    const auto row = same_spin_signed_pair(i, k);
    const auto col = same_spin_signed_pair(j, l);
    if (row.sign == 0 || col.sign == 0) return 0.0;
    return row.sign * col.sign * data(row.index, col.index);
  }
};

inline double trace(const PackedRDM& p) { return p.data.trace(); }

inline PackedRDM pack_sector(const Tensor4& p4, SpinSector sector, const SystemMeta& meta,
                             double tol = 1e-8) {
  meta.validate();
  const int n = meta.n;
  if (p4.n() != n)
    throw DimensionMismatch("pack_sector: tensor has n=" + std::to_string(p4.n()) +
                            ", meta has n=" + std::to_string(n));
  double scale = 1.0;
  for (double v : p4.raw()) scale = std::max(scale, std::abs(v));
  const double limit = tol * scale;

  double residual = 0.0;
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l) {
          const double v = p4(i, k, j, l);
          residual = std::max(residual, std::abs(v - p4(j, l, i, k)));
          if (is_same_spin(sector)) {
            residual = std::max(residual, std::abs(v + p4(k, i, j, l)));
            residual = std::max(residual, std::abs(v + p4(i, k, l, j)));
          }
        }
  if (residual > limit)
    throw SymmetryViolation("pack_sector(" + std::string(to_string(sector)) +
                            "): symmetry residual " + std::to_string(residual));

  PackedRDM out = PackedRDM::zeros(sector, meta);
  const auto d = out.dim();
  for (Eigen::Index p = 0; p < d; ++p) {
    const auto [i, k] = pair_labels(sector, p, n);
    for (Eigen::Index q = 0; q <= p; ++q) {
      const auto [j, l] = pair_labels(sector, q, n);
      const double v = 0.5 * (p4(i, k, j, l) + p4(j, l, i, k));
      out.data(p, q) = v;
      out.data(q, p) = v;
    }
  }
  return out;
}

inline Tensor4 unpack_sector(const PackedRDM& p) {
  const int n = p.meta.n;
  Tensor4 t(n);
  const auto d = p.dim();
  for (Eigen::Index a = 0; a < d; ++a) {
    const auto [i, k] = pair_labels(p.sector, a, n);
    for (Eigen::Index b = 0; b < d; ++b) {
      const auto [j, l] = pair_labels(p.sector, b, n);
      const double v = p.data(a, b);
      t(i, k, j, l) = v;
      if (is_same_spin(p.sector)) {
        t(k, i, j, l) = -v;
        t(i, k, l, j) = -v;
        t(k, i, l, j) = v;
      }
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Spin-resolved sets

struct SpinRDMSet {
  SystemMeta meta;
  PackedRDM aaaa;
  PackedRDM bbbb;
  PackedRDM abab;

  static SpinRDMSet zeros(const SystemMeta& meta) {
    return {meta, PackedRDM::zeros(SpinSector::aaaa, meta), PackedRDM::zeros(SpinSector::bbbb, meta),
            PackedRDM::zeros(SpinSector::abab, meta)};
  }

  const PackedRDM& sector(SpinSector s) const {
    switch (s) {
      case SpinSector::aaaa: return aaaa;
      case SpinSector::bbbb: return bbbb;
      default: return abab;
    }
  }
  PackedRDM& sector(SpinSector s) {
    return const_cast<PackedRDM&>(std::as_const(*this).sector(s));
  }

  void check() const {
    meta.validate();
    for (auto s : kAllSectors) {
      const auto& p = sector(s);
      if (!(p.meta == meta) || p.sector != s)
        throw DimensionMismatch("SpinRDMSet: sector " + std::string(to_string(s)) +
                                " has inconsistent metadata");
      p.check();
    }
  }

  /// Max deviation between the aaaa and bbbb sectors (meaningful for S_z = 0 states).
  double sz_asymmetry() const { return max_abs(aaaa.data - bbbb.data); }
};

struct OneRDM {
  Eigen::MatrixXd alpha;
  Eigen::MatrixXd beta;

  const Eigen::MatrixXd& channel(bool is_alpha) const { return is_alpha ? alpha : beta; }
};

/// Physical trace of a sector: N_s(N_s-1)/2 for same spin, N_a*N_b for the mixed sector.
inline double trace_target(const SystemMeta& meta, SpinSector s) {
  switch (s) {
    case SpinSector::aaaa: return 0.5 * meta.n_alpha * (meta.n_alpha - 1);
    case SpinSector::bbbb: return 0.5 * meta.n_beta * (meta.n_beta - 1);
    default: return static_cast<double>(meta.n_alpha) * meta.n_beta;
  }
}

// ---------------------------------------------------------------------------
// Integrals and energies

struct IntegralSet {
  int n = 0;
  Eigen::MatrixXd t;        // one-electron integrals t_ij
  std::vector<double> eri;  // (ij|kl) in chemists' notation, row-major n^4
  double e_core = 0.0;      // constant energy shift (frozen core, nuclear repulsion)

  static IntegralSet zeros(int n) {
    return {n, Eigen::MatrixXd::Zero(n, n), std::vector<double>(static_cast<std::size_t>(n) * n * n * n, 0.0),
            0.0};
  }

  double& v(int i, int j, int k, int l) { return eri[index(i, j, k, l)]; }
  double v(int i, int j, int k, int l) const { return eri[index(i, j, k, l)]; }

  /// Writes value into all eight real-orbital permutations of (ij|kl).
  void set_symmetric(int i, int j, int k, int l, double value) {
    for (auto [a, b, c, e] : {std::array{i, j, k, l}, std::array{j, i, k, l}, std::array{i, j, l, k},
                              std::array{j, i, l, k}, std::array{k, l, i, j}, std::array{l, k, i, j},
                              std::array{k, l, j, i}, std::array{l, k, j, i}})
      v(a, b, c, e) = value;
  }

  void validate(double tol = 1e-12) const {
    if (t.rows() != n || t.cols() != n || eri.size() != static_cast<std::size_t>(n) * n * n * n)
      throw DimensionMismatch("IntegralSet: shapes inconsistent with n=" + std::to_string(n));
    if (!is_symmetric(t, tol)) throw SymmetryViolation("IntegralSet: t is not symmetric");
    double scale = 1.0;
    for (double x : eri) scale = std::max(scale, std::abs(x));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          for (int l = 0; l < n; ++l) {
            const double x = v(i, j, k, l);
            if (std::abs(x - v(j, i, k, l)) > tol * scale || std::abs(x - v(i, j, l, k)) > tol * scale ||
                std::abs(x - v(k, l, i, j)) > tol * scale)
              throw SymmetryViolation("IntegralSet: eri lacks 8-fold symmetry");
          }
  }

 private:
  std::size_t index(int i, int j, int k, int l) const {
    return ((static_cast<std::size_t>(i) * n + j) * n + k) * n + l;
  }
};

/// D_ij = sum_k P_{ik,jk} / (N_el - 1), resolved per spin channel.
inline OneRDM contract_to_1rdm(const SpinRDMSet& p) {
  const int n = p.meta.n;
  const int nel = p.meta.n_el();
  if (nel < 2) throw DegenerateSystem("contract_to_1rdm: need at least two electrons");
  OneRDM d{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double a = 0.0, b = 0.0;
      for (int k = 0; k < n; ++k) {
        a += p.aaaa.element(i, k, j, k) + p.abab.data(mixed_pair(i, k, n), mixed_pair(j, k, n));
        b += p.bbbb.element(i, k, j, k) + p.abab.data(mixed_pair(k, i, n), mixed_pair(k, j, n));
      }
      d.alpha(i, j) = a / (nel - 1);
      d.beta(i, j) = b / (nel - 1);
    }
  return d;
}

struct EnergyTerms {
  double total = 0.0;     // one-body + two-body + e_core
  double one_body = 0.0;
  double two_body = 0.0;  // E2
};

/// Two-electron energy 1/2 sum V_{ikjl} P_{ik,jl} over spin orbitals, V_{ikjl} = (ij|kl).
inline double two_body_energy(const SpinRDMSet& p, const IntegralSet& ints) {
  const int n = p.meta.n;
  if (ints.n != n) throw DimensionMismatch("energy: integrals and RDM disagree on n");
  double same = 0.0, mixed = 0.0;
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      const auto row = mixed_pair(i, k, n);
      for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l) {
          const double v = ints.v(i, j, k, l);
          if (v == 0.0) continue;
          same += v * (p.aaaa.element(i, k, j, l) + p.bbbb.element(i, k, j, l));
          mixed += v * p.abab.data(row, mixed_pair(j, l, n));
        }
    }
  return 0.5 * same + mixed;
}

inline EnergyTerms energy(const SpinRDMSet& p, const IntegralSet& ints) {
  if (ints.n != p.meta.n || ints.t.rows() != p.meta.n)
    throw DimensionMismatch("energy: integrals and RDM disagree on n");
  EnergyTerms e;
  e.two_body = two_body_energy(p, ints);
  if (p.meta.n_el() >= 2) {
    const auto d = contract_to_1rdm(p);
    e.one_body = (ints.t.array() * (d.alpha + d.beta).array()).sum();
  }
  e.total = e.one_body + e.two_body + ints.e_core;
  return e;
}

// ---------------------------------------------------------------------------
// Hartree-Fock 2-RDM

inline SpinRDMSet hf_2rdm(const Eigen::MatrixXd& d_alpha, const Eigen::MatrixXd& d_beta,
                          double tol = 1e-8) {
  const auto n = d_alpha.rows();
  if (d_alpha.cols() != n || d_beta.rows() != n || d_beta.cols() != n)
    throw DimensionMismatch("hf_2rdm: density matrices must be square and equal size");
  for (const auto* d : {&d_alpha, &d_beta}) {
    if (max_abs(*d * *d - *d) > tol) throw NotIdempotent("hf_2rdm: D^2 != D");
    const double tr = d->trace();
    if (std::abs(tr - std::round(tr)) > tol) throw NotIdempotent("hf_2rdm: non-integer trace");
  }
  SystemMeta meta{static_cast<int>(n), static_cast<int>(std::lround(d_alpha.trace())),
                  static_cast<int>(std::lround(d_beta.trace()))};
  auto out = SpinRDMSet::zeros(meta);
  const int nn = meta.n;
  for (auto s : {SpinSector::aaaa, SpinSector::bbbb}) {
    const auto& d = s == SpinSector::aaaa ? d_alpha : d_beta;
    auto& m = out.sector(s).data;
    for (Eigen::Index p = 0; p < m.rows(); ++p) {
      const auto [i, k] = pair_labels(s, p, nn);
      for (Eigen::Index q = 0; q < m.cols(); ++q) {
        const auto [j, l] = pair_labels(s, q, nn);
        m(p, q) = d(i, j) * d(k, l) - d(i, l) * d(k, j);
      }
    }
  }
  auto& m = out.abab.data;
  for (int i = 0; i < nn; ++i)
    for (int k = 0; k < nn; ++k)
      for (int j = 0; j < nn; ++j)
        for (int l = 0; l < nn; ++l)
          m(mixed_pair(i, k, nn), mixed_pair(j, l, nn)) = d_alpha(i, j) * d_beta(k, l);
  return out;
}

// ---------------------------------------------------------------------------
// Error metrics and spectra

/// Relative Frobenius error ||a - b|| / ||b||.
inline double rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionMismatch("rel_error: shapes differ");
  const double ref = b.norm();
  if (ref == 0.0) throw ZeroReference("rel_error: reference has zero norm");
  return (a - b).norm() / ref;
}

inline double rel_error(const PackedRDM& a, const PackedRDM& b) {
  if (a.sector != b.sector) throw DimensionMismatch("rel_error: sectors differ");
  return rel_error(a.data, b.data);
}

/// Symmetric eigendecomposition with eigenvalues ordered by magnitude.
struct SpectralDecomposition {
  Eigen::MatrixXd U;       // d x k orthonormal columns
  Eigen::VectorXd values;  // singular values |lambda|, descending
  Eigen::VectorXd signs;   // sign of each eigenvalue (+1 / -1)

  Eigen::Index dim() const { return U.rows(); }
  Eigen::Index size() const { return values.size(); }

  SpectralDecomposition truncated(Eigen::Index r) const {
    r = std::min(r, size());
    return {U.leftCols(r), values.head(r), signs.head(r)};
  }

  Eigen::MatrixXd reconstruct() const {
    return U * (values.array() * signs.array()).matrix().asDiagonal() * U.transpose();
  }

  /// sqrt(sum_{i >= r} values_i^2): Frobenius error of the rank-r truncation.
  double tail_norm(Eigen::Index r) const {
    return r >= size() ? 0.0 : values.tail(size() - r).norm();
  }
};

inline SpectralDecomposition spectrum(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const auto d = m.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto& ev = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return std::abs(ev(a)) > std::abs(ev(b)); });
  SpectralDecomposition out{Eigen::MatrixXd(d, d), Eigen::VectorXd(d), Eigen::VectorXd(d)};
  for (Eigen::Index c = 0; c < d; ++c) {
    const auto src = order[static_cast<std::size_t>(c)];
    out.U.col(c) = es.eigenvectors().col(src);
    out.values(c) = std::abs(ev(src));
    out.signs(c) = ev(src) < 0.0 ? -1.0 : 1.0;
  }
  return out;
}

inline SpectralDecomposition spectrum(const PackedRDM& p) { return spectrum(p.data); }

/// Number of singular values above cutoff.
inline Eigen::Index numerical_rank(const SpectralDecomposition& s, double cutoff) {
  return (s.values.array() > cutoff).count();
}

inline constexpr double kDefaultKappa = 0.5;

/// Smallest r with eps(P^r, P) < kappa * eps0, P^r keeping the r largest singular values.
inline Eigen::Index select_rank(const SpectralDecomposition& s, double eps0,
                                double kappa = kDefaultKappa) {
  if (!(eps0 > 0.0 && eps0 < 1.0)) throw Error("select_rank: eps0 must lie in (0, 1)");
  if (!(kappa > 0.0 && kappa <= 1.0)) throw Error("select_rank: kappa must lie in (0, 1]");
  const double total = s.values.norm();
  if (total == 0.0) throw ZeroReference("select_rank: matrix is zero");
  const double threshold = kappa * eps0;
  // Suffix sums accumulated from the small end keep the tail norms accurate.
  const auto d = s.size();
  std::vector<double> tail(static_cast<std::size_t>(d) + 1, 0.0);
  for (Eigen::Index i = d - 1; i >= 0; --i)
    tail[static_cast<std::size_t>(i)] = tail[static_cast<std::size_t>(i) + 1] + s.values(i) * s.values(i);
  for (Eigen::Index r = 1; r <= d; ++r)
    if (std::sqrt(tail[static_cast<std::size_t>(r)]) / total < threshold) return r;
  throw RankExhausted("select_rank: no rank meets the truncation threshold");
}

inline Eigen::Index select_rank(const PackedRDM& p, double eps0, double kappa = kDefaultKappa) {
  return select_rank(spectrum(p), eps0, kappa);
}

}  // namespace rdmc
