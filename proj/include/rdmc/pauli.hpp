#pragma once

// Pauli strings and the Jordan-Wigner image of fermionic ladder operators.
//
// Mode ordering: spin orbital (p, alpha) -> qubit p, (p, beta) -> qubit n + p.
// a_p = Z_0 ... Z_{p-1} (X_p + i Y_p) / 2.

#include <complex>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rdmc/errors.hpp"

namespace rdmc {

using cplx = std::complex<double>;

/// Pauli string as a sorted list of (qubit, op) with op in {'X','Y','Z'}; identity elsewhere.
struct PauliString {
  std::vector<std::pair<int, char>> ops;

  bool is_identity() const { return ops.empty(); }
  std::size_t weight() const { return ops.size(); }

  char at(int qubit) const {
    for (const auto& [q, op] : ops)
      if (q == qubit) return op;
    return 'I';
  }

  std::string to_string() const {
    if (ops.empty()) return "I";
    std::string s;
    for (const auto& [q, op] : ops) {
      if (!s.empty()) s += ' ';
      s += op;
      s += std::to_string(q);
    }
    return s;
  }

  auto operator<=>(const PauliString&) const = default;
};

// ---------------------------------------------------------------------------
// Bitmask Pauli algebra on up to 32 qubits.  A mask (x, z) denotes the
// operator prod_q i^{x_q z_q} X^{x_q} Z^{z_q}, so (1,1) on a qubit is Y.

struct PauliMask {
  std::uint32_t x = 0;
  std::uint32_t z = 0;
  auto operator<=>(const PauliMask&) const = default;
};

/// a * b = i^phase * result.
inline std::pair<int, PauliMask> multiply(PauliMask a, PauliMask b) {
  int phase = 0;
  for (int q = 0; q < 32; ++q) {
    const int xa = (a.x >> q) & 1, za = (a.z >> q) & 1;
    const int xb = (b.x >> q) & 1, zb = (b.z >> q) & 1;
    if (!(xa | za | xb | zb)) continue;
    const int x = xa ^ xb, z = za ^ zb;
    phase += xa * za + xb * zb + 2 * za * xb - x * z;
  }
  return {((phase % 4) + 4) % 4, PauliMask{a.x ^ b.x, a.z ^ b.z}};
}

inline cplx i_power(int k) {
  switch (((k % 4) + 4) % 4) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, -1.0};
  }
}

using PauliSum = std::map<PauliMask, cplx>;

inline PauliSum multiply(const PauliSum& a, const PauliSum& b) {
  PauliSum out;
  for (const auto& [pa, ca] : a)
    for (const auto& [pb, cb] : b) {
      const auto [phase, p] = multiply(pa, pb);
      out[p] += ca * cb * i_power(phase);
    }
  for (auto it = out.begin(); it != out.end();) {
    if (std::abs(it->second) < 1e-15)
      it = out.erase(it);
    else
      ++it;
  }
  return out;
}

/// Jordan-Wigner image of a_q (dagger = false) or a+_q (dagger = true).
inline PauliSum jw_ladder(int q, bool dagger) {
  if (q < 0 || q >= 32) throw DimensionMismatch("jw_ladder: qubit index out of mask range");
  const std::uint32_t below = (std::uint32_t{1} << q) - 1;
  const std::uint32_t bit = std::uint32_t{1} << q;
  PauliSum s;
  s[PauliMask{bit, below}] = 0.5;                        // Z_{<q} X_q
  s[PauliMask{bit, below | bit}] = dagger ? cplx{0.0, -0.5} : cplx{0.0, 0.5};  // Z_{<q} Y_q
  return s;
}

inline PauliString to_pauli_string(PauliMask m, int n_qubits) {
  PauliString s;
  for (int q = 0; q < n_qubits; ++q) {
    const bool x = (m.x >> q) & 1, z = (m.z >> q) & 1;
    if (x && z)
      s.ops.emplace_back(q, 'Y');
    else if (x)
      s.ops.emplace_back(q, 'X');
    else if (z)
      s.ops.emplace_back(q, 'Z');
  }
  return s;
}

}  // namespace rdmc
