#pragma once

// Geometric coherence mu = (d/r) max_i ||e_i^T U||^2 and its reduction by
// orbital rotations.  An orbital rotation C (n x n, orthogonal) acts on a
// pair vector v as the two-index transform  V -> C V C^T  of its n x n
// reshaping (antisymmetric for same-spin sectors).

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rdmc/errors.hpp"
#include "rdmc/lbfgs.hpp"
#include "rdmc/rdm_core.hpp"
#include "rdmc/rng.hpp"

namespace rdmc {

struct RotationBasis {
  Eigen::MatrixXd C;
  std::string provenance = "identity";

  static RotationBasis identity(int n) { return {Eigen::MatrixXd::Identity(n, n), "identity"}; }
  double orthogonality_drift() const {
    return max_abs(C.transpose() * C - Eigen::MatrixXd::Identity(C.rows(), C.cols()));
  }
};

struct CoherenceReport {
  double mu = 0.0;
  Eigen::Index r = 0;
  Eigen::Index d = 0;
  Eigen::VectorXd leverage;  // (d/r) ||e_i^T U||^2 per row
};

/// Coherence of the column space of U (d x r, orthonormal columns).
inline CoherenceReport coherence(const Eigen::MatrixXd& U) {
  CoherenceReport rep;
  rep.d = U.rows();
  rep.r = U.cols();
  if (rep.r == 0 || rep.d == 0) throw DimensionMismatch("coherence: empty singular-vector matrix");
  const double scale = static_cast<double>(rep.d) / static_cast<double>(rep.r);
  rep.leverage = scale * U.rowwise().squaredNorm();
  rep.mu = rep.leverage.maxCoeff();
  return rep;
}

inline CoherenceReport coherence(const SpectralDecomposition& dec, Eigen::Index r) {
  return coherence(Eigen::MatrixXd(dec.U.leftCols(std::min(r, dec.size()))));
}

// ---------------------------------------------------------------------------
// Pair-space transforms

/// n x n matrix form of a pair vector.
inline Eigen::MatrixXd pair_matrix(const Eigen::Ref<const Eigen::VectorXd>& v, SpinSector s, int n) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index p = 0; p < v.size(); ++p) {
    const auto [i, k] = pair_labels(s, p, n);
    m(i, k) = v(p);
    if (is_same_spin(s)) m(k, i) = -v(p);
  }
  return m;
}

inline void pair_vector(const Eigen::MatrixXd& m, SpinSector s, Eigen::Ref<Eigen::VectorXd> out) {
  const int n = static_cast<int>(m.rows());
  for (Eigen::Index p = 0; p < out.size(); ++p) {
    const auto [i, k] = pair_labels(s, p, n);
    out(p) = m(i, k);
  }
}

/// Applies the pair-space rotation induced by C to every column of V.
inline Eigen::MatrixXd rotate_pair_vectors(const Eigen::MatrixXd& V, SpinSector s, const Eigen::MatrixXd& C) {
  const int n = static_cast<int>(C.rows());
  if (V.rows() != packed_dim(s, n)) throw DimensionMismatch("rotate_pair_vectors: dimension mismatch");
  Eigen::MatrixXd out(V.rows(), V.cols());
  for (Eigen::Index c = 0; c < V.cols(); ++c) {
    const Eigen::MatrixXd b = C * pair_matrix(V.col(c), s, n) * C.transpose();
    pair_vector(b, s, out.col(c));
  }
  return out;
}

/// P' = R P R^T with R the pair-space image of C.
inline PackedRDM rotate_rdm(const PackedRDM& p, const Eigen::MatrixXd& C) {
  if (C.rows() != p.meta.n || C.cols() != p.meta.n) throw DimensionMismatch("rotate_rdm: C has wrong size");
  if (C.isIdentity(0.0)) return p;
  const Eigen::MatrixXd rp = rotate_pair_vectors(p.data, p.sector, C);
  Eigen::MatrixXd out = rotate_pair_vectors(rp.transpose(), p.sector, C);
  out = 0.5 * (out + out.transpose()).eval();
  return {p.sector, p.meta, std::move(out)};
}

inline SpinRDMSet rotate_rdm(const SpinRDMSet& p, const Eigen::MatrixXd& C) {
  return {p.meta, rotate_rdm(p.aaaa, C), rotate_rdm(p.bbbb, C), rotate_rdm(p.abab, C)};
}

inline OneRDM rotate_1rdm(const OneRDM& d, const Eigen::MatrixXd& C) {
  return {C * d.alpha * C.transpose(), C * d.beta * C.transpose()};
}

// ---------------------------------------------------------------------------
// Differentiable surrogate

/// Leading singular vectors of one sector of the model.
struct SectorBasis {
  SpinSector sector = SpinSector::abab;
  Eigen::MatrixXd U;  // d x r
};

/// sum over sectors and packed rows of (||row of R(C) U||^2)^exponent; gradient w.r.t. C.
inline double surrogate_objective(std::span<const SectorBasis> sectors, const Eigen::MatrixXd& C,
                                  Eigen::MatrixXd* grad = nullptr, double exponent = 4.0) {
  const int n = static_cast<int>(C.rows());
  double f = 0.0;
  if (grad) grad->setZero(n, n);
  for (const auto& sb : sectors) {
    const Eigen::Index d = sb.U.rows(), r = sb.U.cols();
    if (d != packed_dim(sb.sector, n)) throw DimensionMismatch("surrogate_objective: basis size mismatch");
    std::vector<Eigen::MatrixXd> a(static_cast<std::size_t>(r)), b(static_cast<std::size_t>(r));
    Eigen::VectorXd h = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd rotated(d, r);
    for (Eigen::Index s = 0; s < r; ++s) {
      a[s] = pair_matrix(sb.U.col(s), sb.sector, n);
      b[s] = C * a[s] * C.transpose();
      pair_vector(b[s], sb.sector, rotated.col(s));
    }
    h = rotated.rowwise().squaredNorm();
    for (Eigen::Index p = 0; p < d; ++p) f += std::pow(h(p), exponent);
    if (!grad) continue;
    // dF/d(rotated)_{p,s} = 2 e h_p^{e-1} rotated_{p,s}
    Eigen::VectorXd w(d);
    for (Eigen::Index p = 0; p < d; ++p) w(p) = 2.0 * exponent * std::pow(h(p), exponent - 1.0);
    for (Eigen::Index s = 0; s < r; ++s) {
      Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
      for (Eigen::Index p = 0; p < d; ++p) {
        const auto [i, k] = pair_labels(sb.sector, p, n);
        g(i, k) = w(p) * rotated(p, s);
      }
      *grad += g * C * a[s].transpose() + g.transpose() * C * a[s];
    }
  }
  return f;
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with sign-fixed R diagonal.
inline Eigen::MatrixXd haar_orthogonal(int n, std::uint64_t seed) {
  auto rng = make_rng(seed, {0x4A});
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = gauss(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd r = qr.matrixQR();
  for (int c = 0; c < n; ++c)
    if (r(c, c) < 0.0) q.col(c) = -q.col(c);
  return q;
}

/// Antisymmetric matrix from its strictly-lower-triangle parameters.
inline Eigen::MatrixXd antisymmetric(const Eigen::VectorXd& a, int n) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  Eigen::Index idx = 0;
  for (int i = 1; i < n; ++i)
    for (int j = 0; j < i; ++j) {
      m(i, j) = a(idx);
      m(j, i) = -a(idx);
      ++idx;
    }
  return m;
}

/// Frechet derivative of exp at X in direction E (block-triangular exponential).
inline Eigen::MatrixXd expm_frechet(const Eigen::MatrixXd& X, const Eigen::MatrixXd& E) {
  const auto n = X.rows();
  Eigen::MatrixXd big = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  big.topLeftCorner(n, n) = X;
  big.bottomRightCorner(n, n) = X;
  big.topRightCorner(n, n) = E;
  const Eigen::MatrixXd e = big.exp();
  return e.topRightCorner(n, n);
}

/// Nearest orthogonal matrix (polar factor).
inline Eigen::MatrixXd reorthonormalize(const Eigen::MatrixXd& C) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

/// Surrogate at C = exp(A(a)) C0 with its gradient in the antisymmetric parameters a.
inline double rotation_objective(std::span<const SectorBasis> sectors, const Eigen::VectorXd& a,
                                 const Eigen::MatrixXd& c0, Eigen::VectorXd* grad = nullptr,
                                 double exponent = 4.0) {
  const int n = static_cast<int>(c0.rows());
  const Eigen::MatrixXd A = antisymmetric(a, n);
  const Eigen::MatrixXd C = A.exp() * c0;
  if (!grad) return surrogate_objective(sectors, C, nullptr, exponent);
  Eigen::MatrixXd gc(n, n);
  const double f = surrogate_objective(sectors, C, &gc, exponent);
  const Eigen::MatrixXd ga = expm_frechet(A.transpose(), gc * c0.transpose());
  grad->resize(a.size());
  Eigen::Index idx = 0;
  for (int i = 1; i < n; ++i)
    for (int j = 0; j < i; ++j) (*grad)(idx++) = ga(i, j) - ga(j, i);
  return f;
}

struct CoherenceOptions {
  int n_starts = 10;
  std::uint64_t seed = 0;
  int max_iter = 2000;
  double grad_tol = 1e-8;
  double exponent = 4.0;
};

struct RestartRecord {
  std::string provenance;
  double surrogate = 0.0;
  double mu = 0.0;  // max over sectors
  int iterations = 0;
  bool finite = true;
};

struct CoherenceOutcome {
  RotationBasis basis;
  std::vector<double> mu_before;  // per sector, identity basis
  std::vector<double> mu_after;   // per sector, returned basis
  double aggregate_before = 0.0;  // max over sectors
  double aggregate_after = 0.0;
  std::vector<RestartRecord> restarts;
};

/// Per-sector coherence of the rotated bases.
inline std::vector<double> rotated_coherence(std::span<const SectorBasis> sectors, const Eigen::MatrixXd& C) {
  std::vector<double> mus;
  for (const auto& sb : sectors) mus.push_back(coherence(rotate_pair_vectors(sb.U, sb.sector, C)).mu);
  return mus;
}

inline double aggregate_mu(const std::vector<double>& mus) {
  double m = 0.0;
  for (double x : mus) m = std::max(m, x);
  return m;
}

/// Minimizes the coherence surrogate over C = exp(A) C0 from the identity and
/// n_starts Haar-random C0; returns the candidate with the smallest coherence.
inline CoherenceOutcome minimize_coherence(std::span<const SectorBasis> sectors, int n,
                                           const CoherenceOptions& opt = {}) {
  if (sectors.empty()) throw Error("minimize_coherence: no sectors given");
  CoherenceOutcome out;
  out.basis = RotationBasis::identity(n);
  out.mu_before = rotated_coherence(sectors, out.basis.C);
  out.aggregate_before = aggregate_mu(out.mu_before);
  out.mu_after = out.mu_before;
  out.aggregate_after = out.aggregate_before;
  out.restarts.push_back({"identity", surrogate_objective(sectors, out.basis.C, nullptr, opt.exponent),
                          out.aggregate_before, 0, true});

  const Eigen::Index n_params = static_cast<Eigen::Index>(n) * (n - 1) / 2;
  if (n_params == 0) return out;
  int n_finite = 0;
  for (int k = 0; k < opt.n_starts; ++k) {
    const Eigen::MatrixXd c0 = haar_orthogonal(n, derive_seed(opt.seed, {static_cast<std::uint64_t>(k)}));
    auto fn = [&](const Eigen::VectorXd& a, Eigen::VectorXd& g) {
      return rotation_objective(sectors, a, c0, &g, opt.exponent);
    };
    LbfgsOptions lo;
    lo.max_iter = opt.max_iter;
    lo.grad_tol = opt.grad_tol;
    lo.record_trace = false;
    const auto res = lbfgs_minimize(fn, Eigen::VectorXd::Zero(n_params), lo);
    RestartRecord rec{"optimized-from haar-seed " + std::to_string(k), res.f, 0.0, res.iterations,
                      std::isfinite(res.f) && res.x.allFinite()};
    if (!rec.finite) {
      out.restarts.push_back(rec);
      continue;
    }
    ++n_finite;
    const Eigen::MatrixXd raw = antisymmetric(res.x, n).exp() * c0;
    const Eigen::MatrixXd C = reorthonormalize(raw);
    if (max_abs(C - raw) > 1e-8) throw OptimizationFailure("minimize_coherence: orthogonality drift above 1e-8");
    const auto mus = rotated_coherence(sectors, C);
    rec.mu = aggregate_mu(mus);
    out.restarts.push_back(rec);
    if (rec.mu < out.aggregate_after) {
      out.aggregate_after = rec.mu;
      out.mu_after = mus;
      out.basis = {C, rec.provenance};
    }
  }
  if (n_finite == 0 && opt.n_starts > 0)
    throw OptimizationFailure("minimize_coherence: every restart diverged");
  return out;
}

}  // namespace rdmc
