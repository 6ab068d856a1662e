#pragma once

// Exact diagonalization on small Fock spaces.  Provides ground states,
// exact 1-/2-RDMs and Pauli-string expectations that serve as reference
// values for every other module.
//
// Occupation basis: bit q of a basis index is the occupation of qubit q,
// with alpha orbitals on qubits 0..n-1 and beta orbitals on n..2n-1.

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rdmc/errors.hpp"
#include "rdmc/pauli.hpp"
#include "rdmc/rdm_core.hpp"
#include "rdmc/rng.hpp"

namespace rdmc {

inline constexpr int kMaxToySpinOrbitals = 12;

inline int alpha_mode(int p) { return p; }
inline int beta_mode(int p, int n) { return n + p; }

enum class ToyFamily { hubbard_chain, random_two_body };

inline std::string_view to_string(ToyFamily f) {
  return f == ToyFamily::hubbard_chain ? "hubbard-chain" : "random-two-body";
}

struct ToyHamiltonian {
  SystemMeta meta;
  IntegralSet ints;
  ToyFamily family = ToyFamily::hubbard_chain;
  double hopping = 0.0;
  double onsite = 0.0;
  std::uint64_t seed = 0;
  double interaction_scale = 1.0;
};

struct Statevector {
  int n_qubits = 0;
  Eigen::VectorXd amp;  // length 2^n_qubits

  double norm() const { return amp.norm(); }
};

inline ToyHamiltonian hubbard_chain(int sites, int n_alpha, int n_beta, double hopping, double onsite,
                                    bool periodic = false) {
  SystemMeta meta{sites, n_alpha, n_beta};
  meta.validate();
  auto ints = IntegralSet::zeros(sites);
  for (int p = 0; p + 1 < sites; ++p) ints.t(p, p + 1) = ints.t(p + 1, p) = -hopping;
  if (periodic && sites > 2) ints.t(0, sites - 1) = ints.t(sites - 1, 0) = -hopping;
  for (int p = 0; p < sites; ++p) ints.v(p, p, p, p) = onsite;
  return {meta, std::move(ints), ToyFamily::hubbard_chain, hopping, onsite, 0, 1.0};
}

/// Random real Hamiltonian; (ij|kl) = sum_Q B^Q_ij B^Q_kl is a positive semidefinite supermatrix.
inline ToyHamiltonian random_two_body(int n, int n_alpha, int n_beta, std::uint64_t seed) {
  SystemMeta meta{n, n_alpha, n_beta};
  meta.validate();
  auto rng = make_rng(seed, {0x70'79});
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto ints = IntegralSet::zeros(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) ints.t(i, j) = ints.t(j, i) = 0.5 * gauss(rng);
  std::vector<Eigen::MatrixXd> b;
  for (int q = 0; q < n; ++q) {
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) m(i, j) = m(j, i) = 0.4 * gauss(rng);
    b.push_back(std::move(m));
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          double v = 0.0;
          for (const auto& m : b) v += m(i, j) * m(k, l);
          ints.v(i, j, k, l) = v;
        }
  return {meta, std::move(ints), ToyFamily::random_two_body, 0.0, 0.0, seed, 1.0};
}

/// Same one-body part, two-electron integrals multiplied by factor.
inline ToyHamiltonian scale_interaction(ToyHamiltonian h, double factor) {
  for (auto& v : h.ints.eri) v *= factor;
  h.onsite *= factor;
  h.interaction_scale *= factor;
  return h;
}

// ---------------------------------------------------------------------------
// Ladder operators on occupation bitstrings

/// a_q |b>; returns false when the result vanishes. sign is multiplied by the JW parity.
inline bool annihilate(std::uint64_t& b, int q, int& sign) {
  const std::uint64_t bit = std::uint64_t{1} << q;
  if (!(b & bit)) return false;
  if (std::popcount(b & (bit - 1)) & 1) sign = -sign;
  b ^= bit;
  return true;
}

inline bool create(std::uint64_t& b, int q, int& sign) {
  const std::uint64_t bit = std::uint64_t{1} << q;
  if (b & bit) return false;
  if (std::popcount(b & (bit - 1)) & 1) sign = -sign;
  b ^= bit;
  return true;
}

/// Occupation-number basis of the (N_alpha, N_beta) sector, ascending.
inline std::vector<std::uint64_t> sector_basis(const SystemMeta& meta) {
  const int nq = 2 * meta.n;
  if (nq > kMaxToySpinOrbitals)
    throw TooLarge("toy oracle supports at most " + std::to_string(kMaxToySpinOrbitals) +
                   " spin orbitals, got " + std::to_string(nq));
  const std::uint64_t alpha_mask = (std::uint64_t{1} << meta.n) - 1;
  std::vector<std::uint64_t> basis;
  for (std::uint64_t b = 0; b < (std::uint64_t{1} << nq); ++b)
    if (std::popcount(b & alpha_mask) == meta.n_alpha && std::popcount(b >> meta.n) == meta.n_beta)
      basis.push_back(b);
  return basis;
}

inline Eigen::MatrixXd sector_hamiltonian(const ToyHamiltonian& h, const std::vector<std::uint64_t>& basis) {
  const int n = h.meta.n;
  const auto dim = static_cast<Eigen::Index>(basis.size());
  std::unordered_map<std::uint64_t, Eigen::Index> where;
  for (Eigen::Index i = 0; i < dim; ++i) where[basis[static_cast<std::size_t>(i)]] = i;

  Eigen::MatrixXd hm = Eigen::MatrixXd::Constant(dim, dim, 0.0);
  hm.diagonal().setConstant(h.ints.e_core);
  for (Eigen::Index col = 0; col < dim; ++col) {
    const auto b0 = basis[static_cast<std::size_t>(col)];
    for (int spin = 0; spin < 2; ++spin)
      for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) {
          const double t = h.ints.t(p, q);
          if (t == 0.0) continue;
          auto b = b0;
          int sign = 1;
          if (!annihilate(b, q + spin * n, sign) || !create(b, p + spin * n, sign)) continue;
          hm(where.at(b), col) += sign * t;
        }
    // 1/2 sum (ij|kl) a+_{i s} a+_{k t} a_{l t} a_{j s}
    for (int s = 0; s < 2; ++s)
      for (int u = 0; u < 2; ++u)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
              for (int l = 0; l < n; ++l) {
                const double v = h.ints.v(i, j, k, l);
                if (v == 0.0) continue;
                auto b = b0;
                int sign = 1;
                if (!annihilate(b, j + s * n, sign) || !annihilate(b, l + u * n, sign) ||
                    !create(b, k + u * n, sign) || !create(b, i + s * n, sign))
                  continue;
                hm(where.at(b), col) += 0.5 * sign * v;
              }
  }
  return hm;
}

inline void fix_gauge(Eigen::VectorXd& v) {
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  if (v(imax) < 0.0) v = -v;
}

struct GroundState {
  double energy = 0.0;
  Statevector psi;
  Eigen::VectorXd sector_amplitudes;
  std::vector<std::uint64_t> basis;
};

inline GroundState ground_state(const ToyHamiltonian& h) {
  auto basis = sector_basis(h.meta);
  if (basis.empty()) throw DegenerateSystem("ground_state: empty particle-number sector");
  const auto hm = sector_hamiltonian(h, basis);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hm);
  Eigen::VectorXd v = es.eigenvectors().col(0);
  fix_gauge(v);
  GroundState gs;
  gs.energy = es.eigenvalues()(0);
  gs.psi.n_qubits = 2 * h.meta.n;
  gs.psi.amp = Eigen::VectorXd::Zero(Eigen::Index{1} << gs.psi.n_qubits);
  for (std::size_t i = 0; i < basis.size(); ++i)
    gs.psi.amp(static_cast<Eigen::Index>(basis[i])) = v(static_cast<Eigen::Index>(i));
  gs.sector_amplitudes = std::move(v);
  gs.basis = std::move(basis);
  return gs;
}

// ---------------------------------------------------------------------------
// Exact reduced density matrices

struct ExactRDMs {
  OneRDM one;
  SpinRDMSet two;
};

inline ExactRDMs exact_rdms(const Statevector& psi, const SystemMeta& meta) {
  meta.validate();
  const int n = meta.n;
  const int nq = 2 * n;
  if (psi.n_qubits != nq) throw DimensionMismatch("exact_rdms: statevector size does not match meta");
  // gamma(I,K,J,L) = <a+_I a+_K a_L a_J> over spin orbitals.
  std::vector<double> gamma(static_cast<std::size_t>(nq) * nq * nq * nq, 0.0);
  Eigen::MatrixXd d1 = Eigen::MatrixXd::Zero(nq, nq);
  auto g = [&](int i, int k, int j, int l) -> double& {
    return gamma[((static_cast<std::size_t>(i) * nq + k) * nq + j) * nq + l];
  };
  for (Eigen::Index idx = 0; idx < psi.amp.size(); ++idx) {
    const double c = psi.amp(idx);
    if (c == 0.0) continue;
    const auto b0 = static_cast<std::uint64_t>(idx);
    for (int j = 0; j < nq; ++j) {
      auto b1 = b0;
      int s1 = 1;
      if (!annihilate(b1, j, s1)) continue;
      for (int i = 0; i < nq; ++i) {
        auto b = b1;
        int s = s1;
        if (!create(b, i, s)) continue;
        d1(i, j) += s * c * psi.amp(static_cast<Eigen::Index>(b));
      }
      for (int l = 0; l < nq; ++l) {
        auto b2 = b1;
        int s2 = s1;
        if (!annihilate(b2, l, s2)) continue;
        for (int k = 0; k < nq; ++k) {
          auto b3 = b2;
          int s3 = s2;
          if (!create(b3, k, s3)) continue;
          for (int i = 0; i < nq; ++i) {
            auto b = b3;
            int s = s3;
            if (!create(b, i, s)) continue;
            g(i, k, j, l) += s * c * psi.amp(static_cast<Eigen::Index>(b));
          }
        }
      }
    }
  }
  ExactRDMs out;
  out.one.alpha = d1.topLeftCorner(n, n);
  out.one.beta = d1.bottomRightCorner(n, n);
  Tensor4 aa(n), bb(n), ab(n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l) {
          aa(i, k, j, l) = g(i, k, j, l);
          bb(i, k, j, l) = g(n + i, n + k, n + j, n + l);
          ab(i, k, j, l) = g(i, n + k, j, n + l);
        }
  out.two = SpinRDMSet{meta, pack_sector(aa, SpinSector::aaaa, meta), pack_sector(bb, SpinSector::bbbb, meta),
                       pack_sector(ab, SpinSector::abab, meta)};
  return out;
}

/// <psi|Q|psi> for a real statevector.
inline double pauli_expectation(const Statevector& psi, const PauliString& q) {
  std::uint64_t flip = 0, phase_mask = 0;
  int n_y = 0;
  for (const auto& [qubit, op] : q.ops) {
    if (qubit >= psi.n_qubits) throw DimensionMismatch("pauli_expectation: qubit out of range");
    const std::uint64_t bit = std::uint64_t{1} << qubit;
    if (op == 'X' || op == 'Y') flip |= bit;
    if (op == 'Y' || op == 'Z') phase_mask |= bit;
    if (op == 'Y') ++n_y;
  }
  cplx acc = 0.0;
  const cplx ipow = i_power(n_y);
  for (Eigen::Index idx = 0; idx < psi.amp.size(); ++idx) {
    const double c = psi.amp(idx);
    if (c == 0.0) continue;
    const auto b = static_cast<std::uint64_t>(idx);
    const double sign = (std::popcount(b & phase_mask) & 1) ? -1.0 : 1.0;
    acc += psi.amp(static_cast<Eigen::Index>(b ^ flip)) * sign * c * ipow;
  }
  return acc.real();
}

/// Slater determinant with occupied orbitals given as columns (coefficients over spatial orbitals).
inline Statevector determinant_state(const Eigen::MatrixXd& occ_alpha, const Eigen::MatrixXd& occ_beta) {
  const int n = static_cast<int>(occ_alpha.rows());
  if (occ_beta.rows() != n) throw DimensionMismatch("determinant_state: orbital counts differ");
  const int nq = 2 * n;
  if (nq > kMaxToySpinOrbitals) throw TooLarge("determinant_state: too many spin orbitals");
  Statevector psi{nq, Eigen::VectorXd::Zero(Eigen::Index{1} << nq)};
  psi.amp(0) = 1.0;
  auto apply_orbital = [&](const Eigen::VectorXd& coef, int offset) {
    Eigen::VectorXd next = Eigen::VectorXd::Zero(psi.amp.size());
    for (Eigen::Index idx = 0; idx < psi.amp.size(); ++idx) {
      if (psi.amp(idx) == 0.0) continue;
      for (int p = 0; p < n; ++p) {
        if (coef(p) == 0.0) continue;
        auto b = static_cast<std::uint64_t>(idx);
        int s = 1;
        if (!create(b, p + offset, s)) continue;
        next(static_cast<Eigen::Index>(b)) += s * coef(p) * psi.amp(idx);
      }
    }
    psi.amp = std::move(next);
  };
  for (Eigen::Index c = 0; c < occ_alpha.cols(); ++c) apply_orbital(occ_alpha.col(c), 0);
  for (Eigen::Index c = 0; c < occ_beta.cols(); ++c) apply_orbital(occ_beta.col(c), n);
  const double nrm = psi.amp.norm();
  if (nrm == 0.0) throw DegenerateSystem("determinant_state: orbitals are linearly dependent");
  psi.amp /= nrm;
  return psi;
}

}  // namespace rdmc
