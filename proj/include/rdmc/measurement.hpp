#pragma once

// Simulated Pauli-string measurement of 2-RDM elements.
//
// Every packed element P_{ik,jl} belongs to exactly one spin-orbital quartet
// (the multiset {i, k, j, l}).  A quartet is measured through a small set of
// Jordan-Wigner Pauli strings whose expectations are linear in the quartet's
// 2-RDM elements and, for repeated indices, in a few 1-RDM elements:
//
//     <Q> = T x + offset,     x = T_inv (<Q> - offset).
//
// T is derived symbolically: on k <= 4 distinct modes the products of
// {1, a, a+, n} per mode form a basis of all 4^k operators, so each Pauli
// string is a unique combination of mode-ordered monomials, and each monomial
// expectation is a signed 1- or 2-RDM element.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "rdmc/completion.hpp"
#include "rdmc/errors.hpp"
#include "rdmc/pauli.hpp"
#include "rdmc/rdm_core.hpp"
#include "rdmc/rng.hpp"

namespace rdmc {

// ---------------------------------------------------------------------------
// Quartets

enum class QuartetKind { all_distinct, one_repeated, pair_diagonal };

inline std::string_view to_string(QuartetKind k) {
  switch (k) {
    case QuartetKind::all_distinct: return "all-distinct";
    case QuartetKind::one_repeated: return "one-repeated";
    default: return "pair-diagonal";
  }
}

/// Multiset of four spin-orbital labels (alpha orbital p -> p, beta orbital p -> n + p).
struct Quartet {
  std::array<int, 4> labels{};  // sorted ascending
  int n = 0;                    // spatial orbitals

  std::vector<int> modes() const {
    std::vector<int> m(labels.begin(), labels.end());
    m.erase(std::unique(m.begin(), m.end()), m.end());
    return m;
  }
  QuartetKind kind() const {
    switch (modes().size()) {
      case 4: return QuartetKind::all_distinct;
      case 3: return QuartetKind::one_repeated;
      case 2: return QuartetKind::pair_diagonal;
      default: throw Error("Quartet: invalid label multiset");
    }
  }
  std::string to_string() const {
    std::string s;
    for (int x : labels) {
      if (!s.empty()) s += ',';
      s += std::to_string(x % n) + (x < n ? "a" : "b");
    }
    return s;
  }
  auto operator<=>(const Quartet&) const = default;
};

/// Quartet owning packed element (row, col) of a sector.
inline Quartet quartet_of(SpinSector s, Eigen::Index row, Eigen::Index col, int n) {
  const auto [i, k] = pair_labels(s, row, n);
  const auto [j, l] = pair_labels(s, col, n);
  Quartet q;
  q.n = n;
  switch (s) {
    case SpinSector::aaaa: q.labels = {i, k, j, l}; break;
    case SpinSector::bbbb: q.labels = {n + i, n + k, n + j, n + l}; break;
    case SpinSector::abab: q.labels = {i, n + k, j, n + l}; break;
  }
  std::sort(q.labels.begin(), q.labels.end());
  return q;
}

// ---------------------------------------------------------------------------
// Fermionic unknowns

/// One unknown of a quartet map: a packed 2-RDM element (row >= col) or a
/// spin-channel 1-RDM element (first >= second).
struct FermionVariable {
  enum class Kind { two_body, one_body };
  Kind kind = Kind::two_body;
  int channel = 0;  // sector index for two_body, 0 = alpha / 1 = beta for one_body
  Eigen::Index a = 0;
  Eigen::Index b = 0;

  bool is_element() const { return kind == Kind::two_body; }
  SpinSector sector() const { return static_cast<SpinSector>(channel); }
  auto operator<=>(const FermionVariable&) const = default;
};

struct SignedVariable {
  int sign = 0;  // 0 = identically zero
  FermionVariable var;
};

inline FermionVariable two_body_variable(SpinSector s, Eigen::Index row, Eigen::Index col) {
  return {FermionVariable::Kind::two_body, static_cast<int>(s), std::max(row, col), std::min(row, col)};
}

/// Spin-orbital P_{ik,jl} = <a+_i a+_k a_l a_j> as a signed packed element.
inline SignedVariable canonical_two_body(int i, int k, int j, int l, int n) {
  const int si = i / n, sk = k / n, sj = j / n, sl = l / n;
  i %= n, k %= n, j %= n, l %= n;
  auto same = [&](SpinSector s) -> SignedVariable {
    const auto r = same_spin_signed_pair(i, k);
    const auto c = same_spin_signed_pair(j, l);
    if (r.sign == 0 || c.sign == 0) return {};
    return {r.sign * c.sign, two_body_variable(s, r.index, c.index)};
  };
  auto ab = [&](int sign, int p, int q, int r, int t) -> SignedVariable {
    return {sign, two_body_variable(SpinSector::abab, mixed_pair(p, q, n), mixed_pair(r, t, n))};
  };
  if (si == 0 && sk == 0 && sj == 0 && sl == 0) return same(SpinSector::aaaa);
  if (si == 1 && sk == 1 && sj == 1 && sl == 1) return same(SpinSector::bbbb);
  if (si == 0 && sk == 1 && sj == 0 && sl == 1) return ab(1, i, k, j, l);
  if (si == 1 && sk == 0 && sj == 1 && sl == 0) return ab(1, k, i, l, j);
  if (si == 0 && sk == 1 && sj == 1 && sl == 0) return ab(-1, i, k, l, j);
  if (si == 1 && sk == 0 && sj == 0 && sl == 1) return ab(-1, k, i, j, l);
  return {};
}

/// Spin-orbital <a+_c a_x> as a signed 1-RDM element.
inline SignedVariable canonical_one_body(int c, int x, int n) {
  if (c / n != x / n) return {};
  const int ch = c / n;
  c %= n, x %= n;
  return {1, {FermionVariable::Kind::one_body, ch, std::max(c, x), std::min(c, x)}};
}

// ---------------------------------------------------------------------------
// Ladder algebra on k virtual modes

/// W(j, b): Pauli string j = sum_b W(j, b) * monomial b on k contiguous modes.
/// Pauli digit per mode: 0 I, 1 X, 2 Y, 3 Z.  Monomial digit: 0 one, 1 a, 2 a+, 3 n.
struct LadderAlgebra {
  int k = 0;
  Eigen::MatrixXcd W;

  static int digit(int code, int v) {
    for (int t = 0; t < v; ++t) code /= 4;
    return code % 4;
  }

  static LadderAlgebra build(int k) {
    const int dim = 1 << (2 * k);
    Eigen::MatrixXcd L = Eigen::MatrixXcd::Zero(dim, dim);  // L(j, b): coefficient of Pauli j in monomial b
    for (int b = 0; b < dim; ++b) {
      PauliSum acc{{PauliMask{}, cplx{1.0, 0.0}}};
      for (int v = 0; v < k; ++v) {
        switch (digit(b, v)) {
          case 1: acc = multiply(acc, jw_ladder(v, false)); break;
          case 2: acc = multiply(acc, jw_ladder(v, true)); break;
          case 3: acc = multiply(acc, multiply(jw_ladder(v, true), jw_ladder(v, false))); break;
          default: break;
        }
      }
      for (const auto& [mask, coef] : acc) {
        int j = 0, scale = 1;
        for (int v = 0; v < k; ++v, scale *= 4) {
          const bool x = (mask.x >> v) & 1, z = (mask.z >> v) & 1;
          j += scale * (x ? (z ? 2 : 1) : (z ? 3 : 0));
        }
        L(j, b) += coef;
      }
    }
    // monomial vector = L^T * Pauli vector
    LadderAlgebra alg;
    alg.k = k;
    alg.W = L.transpose().partialPivLu().inverse();
    return alg;
  }

  static const LadderAlgebra& get(int k) {
    static std::once_flag flags[5];
    static LadderAlgebra cache[5];
    if (k < 1 || k > 4) throw DimensionMismatch("LadderAlgebra: supports 1 to 4 modes");
    std::call_once(flags[k], [k] { cache[k] = build(k); });
    return cache[k];
  }
};

/// Expectation of monomial b on physical modes as a signed fermionic variable;
/// nullopt for monomials whose expectation vanishes under N and S_z
/// conservation, sign with an empty variable for the identity.
struct MonomialTerm {
  bool identity = false;
  bool beyond_two_body = false;
  SignedVariable sv;
};

inline std::optional<MonomialTerm> monomial_term(int b, const std::vector<int>& modes, int n) {
  std::vector<std::pair<int, bool>> ops;  // (mode, is_creator) in mode order
  for (std::size_t v = 0; v < modes.size(); ++v) {
    switch (LadderAlgebra::digit(b, static_cast<int>(v))) {
      case 1: ops.emplace_back(modes[v], false); break;
      case 2: ops.emplace_back(modes[v], true); break;
      case 3:
        ops.emplace_back(modes[v], true);
        ops.emplace_back(modes[v], false);
        break;
      default: break;
    }
  }
  std::vector<int> cre, ann;
  int swaps = 0, ann_seen = 0;
  int spin_balance = 0;
  for (const auto& [mode, is_cre] : ops) {
    if (is_cre) {
      cre.push_back(mode);
      swaps += ann_seen;
      spin_balance += mode / n;
    } else {
      ann.push_back(mode);
      ++ann_seen;
      spin_balance -= mode / n;
    }
  }
  if (cre.size() != ann.size() || spin_balance != 0) return std::nullopt;
  const int sign = (swaps % 2) ? -1 : 1;
  MonomialTerm t;
  if (cre.empty()) {
    t.identity = true;
    t.sv.sign = sign;
    return t;
  }
  if (cre.size() == 1) {
    t.sv = canonical_one_body(cre[0], ann[0], n);
  } else if (cre.size() == 2) {
    // a+_c0 a+_c1 a_x0 a_x1 = P_{c0 c1, x1 x0}
    t.sv = canonical_two_body(cre[0], cre[1], ann[1], ann[0], n);
  } else {
    t.beyond_two_body = true;
    return t;
  }
  if (t.sv.sign == 0) return std::nullopt;
  t.sv.sign *= sign;
  return t;
}

/// Physical string of virtual Pauli j placed on sorted modes, with the
/// Jordan-Wigner Z parity on qubits between consecutive modes.
inline PauliString physical_string(int j, const std::vector<int>& modes) {
  PauliString s;
  int parity = 0;
  for (std::size_t v = 0; v < modes.size(); ++v) {
    const int code = LadderAlgebra::digit(j, static_cast<int>(v));
    if (code != 0) s.ops.emplace_back(modes[v], " XYZ"[code]);
    if (code == 1 || code == 2) parity ^= 1;
    if (v + 1 < modes.size() && parity)
      for (int g = modes[v] + 1; g < modes[v + 1]; ++g) s.ops.emplace_back(g, 'Z');
  }
  return s;
}

// ---------------------------------------------------------------------------
// Fermion <-> Pauli map of one quartet

struct FermiPauliMap {
  Quartet quartet;
  std::vector<PauliString> strings;
  std::vector<FermionVariable> variables;
  Eigen::MatrixXd T;        // strings x variables
  Eigen::VectorXd offset;   // identity contribution per string
  Eigen::MatrixXd T_inv;    // left inverse of T

  std::size_t n_strings() const { return strings.size(); }
  double left_inverse_residual() const {
    return max_abs(T_inv * T - Eigen::MatrixXd::Identity(T.cols(), T.cols()));
  }
};

/// Candidate virtual strings: X/Y on singly-occupied modes, I/Z on doubly-occupied ones.
inline std::vector<int> candidate_strings(const Quartet& q) {
  const auto modes = q.modes();
  std::vector<bool> doubled(modes.size());
  for (std::size_t v = 0; v < modes.size(); ++v)
    doubled[v] = std::count(q.labels.begin(), q.labels.end(), modes[v]) == 2;
  std::vector<int> out;
  const int k = static_cast<int>(modes.size());
  for (int mask = 0; mask < (1 << k); ++mask) {
    int j = 0, scale = 1;
    for (int v = 0; v < k; ++v, scale *= 4) {
      const bool bit = (mask >> v) & 1;
      j += scale * (doubled[v] ? (bit ? 3 : 0) : (bit ? 2 : 1));
    }
    if (j != 0) out.push_back(j);
  }
  return out;
}

inline FermiPauliMap build_map(const Quartet& q) {
  const auto modes = q.modes();
  const int k = static_cast<int>(modes.size());
  const auto& alg = LadderAlgebra::get(k);
  const int dim = 1 << (2 * k);

  std::vector<int> cand = candidate_strings(q);
  std::map<FermionVariable, Eigen::Index> column;
  std::vector<FermionVariable> vars;
  std::vector<std::vector<std::pair<Eigen::Index, cplx>>> rows(cand.size());
  std::vector<cplx> offsets(cand.size(), 0.0);

  std::vector<std::optional<MonomialTerm>> terms(static_cast<std::size_t>(dim));
  for (int b = 0; b < dim; ++b) terms[b] = monomial_term(b, modes, q.n);

  for (std::size_t r = 0; r < cand.size(); ++r) {
    for (int b = 0; b < dim; ++b) {
      const cplx w = alg.W(cand[r], b);
      if (std::abs(w) < 1e-14 || !terms[b]) continue;
      const auto& t = *terms[b];
      if (t.beyond_two_body)
        throw Error("build_map: quartet " + q.to_string() + " needs expectations beyond the 2-RDM");
      if (t.identity) {
        offsets[r] += w * static_cast<double>(t.sv.sign);
        continue;
      }
      auto [it, fresh] = column.try_emplace(t.sv.var, static_cast<Eigen::Index>(vars.size()));
      if (fresh) vars.push_back(t.sv.var);
      rows[r].emplace_back(it->second, w * static_cast<double>(t.sv.sign));
    }
  }

  Eigen::MatrixXcd Tc = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(cand.size()),
                                               static_cast<Eigen::Index>(vars.size()));
  for (std::size_t r = 0; r < cand.size(); ++r)
    for (const auto& [c, w] : rows[r]) Tc(static_cast<Eigen::Index>(r), c) += w;
  double imag = Tc.imag().cwiseAbs().maxCoeff();
  for (const auto& o : offsets) imag = std::max(imag, std::abs(o.imag()));
  if (imag > 1e-12) throw Error("build_map: complex coefficients for quartet " + q.to_string());

  const Eigen::MatrixXd Tr = Tc.real();
  std::vector<Eigen::Index> keep_rows, keep_cols;
  for (Eigen::Index r = 0; r < Tr.rows(); ++r)
    if (Tr.row(r).cwiseAbs().maxCoeff() > 1e-12) keep_rows.push_back(r);
  for (Eigen::Index c = 0; c < Tr.cols(); ++c)
    if (Tr.col(c).cwiseAbs().maxCoeff() > 1e-12) keep_cols.push_back(c);

  FermiPauliMap m;
  m.quartet = q;
  m.T.resize(static_cast<Eigen::Index>(keep_rows.size()), static_cast<Eigen::Index>(keep_cols.size()));
  m.offset.resize(static_cast<Eigen::Index>(keep_rows.size()));
  for (std::size_t r = 0; r < keep_rows.size(); ++r) {
    m.strings.push_back(physical_string(cand[keep_rows[r]], modes));
    m.offset(static_cast<Eigen::Index>(r)) = offsets[keep_rows[r]].real();
    for (std::size_t c = 0; c < keep_cols.size(); ++c)
      m.T(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = Tr(keep_rows[r], keep_cols[c]);
  }
  for (auto c : keep_cols) m.variables.push_back(vars[c]);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(m.T);
  if (cod.rank() != m.T.cols())
    throw Error("build_map: fermionic unknowns of quartet " + q.to_string() + " are not identifiable");
  m.T_inv = cod.pseudoInverse();
  return m;
}

// ---------------------------------------------------------------------------
// Shot noise

/// Estimate of <Q> from m single-shot +-1 outcomes.
inline double simulate_shots(double q_true, long long m, Rng& rng) {
  if (m < 1) throw Error("simulate_shots: m must be >= 1");
  const double p = std::clamp(0.5 * (1.0 + q_true), 0.0, 1.0);
  std::binomial_distribution<long long> dist(m, p);
  const long long k = dist(rng);
  return 2.0 * static_cast<double>(k) / static_cast<double>(m) - 1.0;
}

// ---------------------------------------------------------------------------
// Measurement layouts

/// One independently measured unit: a quartet map and the packed positions it reconstructs.
struct MeasurementGroup {
  FermiPauliMap map;
  std::vector<Position> positions;          // row >= col
  std::vector<Eigen::Index> element_column; // column of T for each position
};

struct SectorLayout {
  SpinSector sector = SpinSector::abab;
  Eigen::Index d = 0;
  std::vector<MeasurementGroup> groups;

  std::size_t total_strings() const {
    std::size_t s = 0;
    for (const auto& g : groups) s += g.map.n_strings();
    return s;
  }
  std::size_t strings_of(const std::vector<std::size_t>& idx) const {
    std::size_t s = 0;
    for (auto i : idx) s += groups[i].map.n_strings();
    return s;
  }
};

/// Quartet grouping of all unique packed positions of one sector.
inline SectorLayout make_sector_layout(SpinSector s, int n) {
  SectorLayout lay;
  lay.sector = s;
  lay.d = packed_dim(s, n);
  std::map<Quartet, std::size_t> index;
  for (Eigen::Index row = 0; row < lay.d; ++row)
    for (Eigen::Index col = 0; col <= row; ++col) {
      const Quartet q = quartet_of(s, row, col, n);
      auto [it, fresh] = index.try_emplace(q, lay.groups.size());
      if (fresh) lay.groups.push_back({build_map(q), {}, {}});
      lay.groups[it->second].positions.push_back({row, col});
    }
  for (auto& g : lay.groups) {
    std::size_t n_elements = 0;
    for (const auto& v : g.map.variables) n_elements += v.is_element();
    if (n_elements != g.positions.size())
      throw Error("make_sector_layout: quartet " + g.map.quartet.to_string() +
                  " does not determine exactly its own elements");
    for (const auto& [row, col] : g.positions) {
      const auto key = two_body_variable(s, row, col);
      const auto it = std::find(g.map.variables.begin(), g.map.variables.end(), key);
      if (it == g.map.variables.end())
        throw Error("make_sector_layout: element missing from quartet " + g.map.quartet.to_string());
      g.element_column.push_back(it - g.map.variables.begin());
    }
  }
  return lay;
}

/// Layout measuring every unique element of a d x d matrix directly through
/// one placeholder string (expectation equal to the element itself).
inline SectorLayout element_layout(Eigen::Index d, SpinSector s = SpinSector::abab) {
  SectorLayout lay;
  lay.sector = s;
  lay.d = d;
  for (Eigen::Index row = 0; row < d; ++row)
    for (Eigen::Index col = 0; col <= row; ++col) {
      MeasurementGroup g;
      g.map.strings = {PauliString{{{0, 'Z'}}}};
      g.map.variables = {two_body_variable(s, row, col)};
      g.map.T = Eigen::MatrixXd::Ones(1, 1);
      g.map.offset = Eigen::VectorXd::Zero(1);
      g.map.T_inv = Eigen::MatrixXd::Ones(1, 1);
      g.positions = {{row, col}};
      g.element_column = {0};
      lay.groups.push_back(std::move(g));
    }
  return lay;
}

/// Exact values of a group's unknowns from the sector matrix and (if needed) the 1-RDM.
inline Eigen::VectorXd exact_variables(const MeasurementGroup& g, const Eigen::MatrixXd& sector,
                                       const OneRDM* one) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(g.map.variables.size()));
  for (std::size_t c = 0; c < g.map.variables.size(); ++c) {
    const auto& v = g.map.variables[c];
    if (v.is_element()) {
      x(static_cast<Eigen::Index>(c)) = sector(v.a, v.b);
    } else {
      if (!one) throw Error("exact_variables: quartet needs 1-RDM elements but none were supplied");
      x(static_cast<Eigen::Index>(c)) = one->channel(v.channel == 0)(v.a, v.b);
    }
  }
  return x;
}

/// Forward map T x + offset with the physical-range check.
inline Eigen::VectorXd forward_expectations(const MeasurementGroup& g, const Eigen::VectorXd& x) {
  Eigen::VectorXd q = g.map.T * x + g.map.offset;
  for (Eigen::Index i = 0; i < q.size(); ++i)
    if (std::abs(q(i)) > 1.0 + 1e-6 || !std::isfinite(q(i)))
      throw UnphysicalExpectation("Pauli expectation " + std::to_string(q(i)) + " of " +
                                  g.map.strings[static_cast<std::size_t>(i)].to_string() +
                                  " lies outside [-1, 1]");
  return q;
}

/// Pauli expectations of a quartet computed from RDMs (all three sectors needed for lookup).
inline Eigen::VectorXd exact_pauli_expectations(const SpinRDMSet& p, const OneRDM& d, const Quartet& q) {
  MeasurementGroup g;
  g.map = build_map(q);
  Eigen::VectorXd x(static_cast<Eigen::Index>(g.map.variables.size()));
  for (std::size_t c = 0; c < g.map.variables.size(); ++c) {
    const auto& v = g.map.variables[c];
    x(static_cast<Eigen::Index>(c)) =
        v.is_element() ? p.sector(v.sector()).data(v.a, v.b) : d.channel(v.channel == 0)(v.a, v.b);
  }
  return forward_expectations(g, x);
}

/// Reconstructed unknowns of one group; m = 0 skips sampling (noiseless bypass).
inline Eigen::VectorXd measure_group(const MeasurementGroup& g, const Eigen::VectorXd& x_exact, long long m,
                                     Rng& rng) {
  Eigen::VectorXd q = forward_expectations(g, x_exact);
  if (m > 0)
    for (Eigen::Index i = 0; i < q.size(); ++i) q(i) = simulate_shots(q(i), m, rng);
  return g.map.T_inv * (q - g.map.offset);
}

/// Measured values on the positions of a subset of groups.
struct Observation {
  SampleSet sample;
  Eigen::MatrixXd observed;  // symmetric; zero off the sample
  std::size_t n_strings = 0;
  double total_shots = 0.0;
};

inline Observation observe(const SectorLayout& lay, const Eigen::MatrixXd& exact, const OneRDM* one,
                           const std::vector<std::size_t>& groups, long long m, std::uint64_t seed) {
  if (exact.rows() != lay.d || exact.cols() != lay.d) throw DimensionMismatch("observe: matrix size mismatch");
  Observation obs;
  obs.sample.sector = lay.sector;
  obs.sample.d = lay.d;
  obs.sample.seed = seed;
  obs.observed = Eigen::MatrixXd::Zero(lay.d, lay.d);
  for (auto gi : groups) {
    const auto& g = lay.groups[gi];
    auto rng = make_rng(seed, {static_cast<std::uint64_t>(gi)});
    const Eigen::VectorXd x = measure_group(g, exact_variables(g, exact, one), m, rng);
    for (std::size_t e = 0; e < g.positions.size(); ++e) {
      const auto [row, col] = g.positions[e];
      obs.observed(row, col) = obs.observed(col, row) = x(g.element_column[e]);
      obs.sample.indices.push_back(g.positions[e]);
    }
    obs.n_strings += g.map.n_strings();
  }
  obs.sample.normalize();
  obs.total_shots = static_cast<double>(std::max<long long>(m, 0)) * static_cast<double>(obs.n_strings);
  return obs;
}

inline std::vector<std::size_t> all_groups(const SectorLayout& lay) {
  std::vector<std::size_t> idx(lay.groups.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

/// Uniform sample of groups without replacement, sorted.
inline std::vector<std::size_t> sample_groups(std::size_t n_groups, std::size_t n_pick, std::uint64_t seed) {
  if (n_pick > n_groups) throw BudgetExceedsUnique("sample_groups: more groups requested than exist");
  std::vector<std::size_t> all(n_groups), out;
  for (std::size_t i = 0; i < n_groups; ++i) all[i] = i;
  auto rng = make_rng(seed, {0x9E});
  std::sample(all.begin(), all.end(), std::back_inserter(out), n_pick, rng);
  return out;
}

/// Standard-scheme measurement of every quartet of every sector with m shots per string.
inline SpinRDMSet measure_rdm(const SpinRDMSet& p, const OneRDM& d, long long m, std::uint64_t seed) {
  SpinRDMSet out = SpinRDMSet::zeros(p.meta);
  for (auto s : kAllSectors) {
    const auto lay = make_sector_layout(s, p.meta.n);
    out.sector(s).data = observe(lay, p.sector(s).data, &d, all_groups(lay), m,
                                 derive_seed(seed, {sector_index(s)}))
                             .observed;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shot budgets

struct ShotBudget {
  long long m_per_string = 0;
  double total_shots = 0.0;
  double n_settings = 0.0;
  double c = 0.0;
  double f_m = std::numeric_limits<double>::quiet_NaN();

  double cost() const { return total_shots + c * n_settings; }
};

struct CalibrationPoint {
  long long m = 0;
  double mean_eps = 0.0;
  double std_eps = 0.0;
};

struct CalibrationOptions {
  int n_trials = 10;
  int refine_steps = 1;
  double m_cap = 1e10;
  std::uint64_t seed = 0;
};

struct Calibration {
  long long m0 = 0;
  std::size_t n_strings = 0;
  double total_shots = 0.0;
  std::vector<CalibrationPoint> curve;  // in evaluation order
};

inline CalibrationPoint standard_error_at(const SectorLayout& lay, const Eigen::MatrixXd& exact, const OneRDM* one,
                                          long long m, const CalibrationOptions& opt) {
  const auto groups = all_groups(lay);
  std::vector<double> eps;
  for (int t = 0; t < opt.n_trials; ++t) {
    const auto obs = observe(lay, exact, one, groups, m,
                             derive_seed(opt.seed, {0x57D, static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(t)}));
    eps.push_back(rel_error(obs.observed, exact));
  }
  CalibrationPoint pt{m, 0.0, 0.0};
  for (double e : eps) pt.mean_eps += e / static_cast<double>(eps.size());
  for (double e : eps) pt.std_eps += (e - pt.mean_eps) * (e - pt.mean_eps);
  pt.std_eps = eps.size() > 1 ? std::sqrt(pt.std_eps / static_cast<double>(eps.size() - 1)) : 0.0;
  return pt;
}

/// Smallest equal-shot m (doubling, then bisection) whose mean error over trials is below eps0.
inline Calibration calibrate_standard(const SectorLayout& lay, const Eigen::MatrixXd& exact, const OneRDM* one,
                                      double eps0, const CalibrationOptions& opt = {}) {
  if (!(eps0 > 0.0)) throw Error("calibrate_standard: eps0 must be positive");
  Calibration cal;
  cal.n_strings = lay.total_strings();
  long long m = 1;
  for (;;) {
    const auto pt = standard_error_at(lay, exact, one, m, opt);
    cal.curve.push_back(pt);
    if (pt.mean_eps < eps0) break;
    if (static_cast<double>(m) * 2.0 > opt.m_cap)
      throw BudgetCap("calibrate_standard: shots per string would exceed the cap of " + std::to_string(opt.m_cap));
    m *= 2;
  }
  long long lo = m / 2, hi = m;
  for (int s = 0; s < opt.refine_steps && hi - lo > 1 && lo >= 1; ++s) {
    const long long mid = lo + (hi - lo) / 2;
    const auto pt = standard_error_at(lay, exact, one, mid, opt);
    cal.curve.push_back(pt);
    (pt.mean_eps < eps0 ? hi : lo) = mid;
  }
  cal.m0 = hi;
  cal.total_shots = static_cast<double>(cal.m0) * static_cast<double>(cal.n_strings);
  return cal;
}

// ---------------------------------------------------------------------------
// Noisy-completion planning

struct PlanOptions {
  std::vector<double> fractions{0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0};  // fraction of quartets
  int n_trials = 10;
  int refine_steps = 3;
  double m_cap = 1e10;
  std::uint64_t seed = 0;
  std::optional<long long> m_standard;  // enables the standard-scheme fallback and f_m
  CompletionConfig completion;          // rank and seed are overwritten
};

struct PlanPoint {
  double fraction = 0.0;
  long long m = 0;
  double f_sample = 0.0;  // mean element fraction
  double mean_strings = 0.0;
  double mean_eps = 0.0;
  double std_eps = 0.0;
  int n_converged = 0;
  bool feasible = false;
};

struct NoisyPlan {
  bool standard_fallback = false;
  double fraction = 1.0;
  double f_sample = 1.0;
  std::size_t n_groups = 0;
  ShotBudget budget;
  std::vector<PlanPoint> curve;  // every evaluated (fraction, m)
};

inline std::size_t groups_for_fraction(double f, std::size_t n_groups) {
  const auto k = static_cast<std::size_t>(std::llround(f * static_cast<double>(n_groups)));
  return std::clamp<std::size_t>(k, 1, n_groups);
}

inline std::uint64_t group_sampling_seed(std::uint64_t seed, std::size_t n_pick, int trial) {
  return derive_seed(seed, {0x6A, n_pick, static_cast<std::uint64_t>(trial)});
}

/// Mean completion error of noisy measurements of a group subset.
inline PlanPoint noisy_completion_error(const SectorLayout& lay, const Eigen::MatrixXd& model, const OneRDM* one,
                                        Eigen::Index r, double fraction, long long m, const PlanOptions& opt) {
  const std::size_t n_pick = groups_for_fraction(fraction, lay.groups.size());
  PlanPoint pt;
  pt.fraction = fraction;
  pt.m = m;
  CompletionConfig cfg = opt.completion;
  cfg.rank = r;
  std::vector<double> eps;
  for (int t = 0; t < opt.n_trials; ++t) {
    const auto groups = n_pick == lay.groups.size() ? all_groups(lay)
                                                   : sample_groups(lay.groups.size(), n_pick,
                                                                   group_sampling_seed(opt.seed, n_pick, t));
    const auto obs = observe(lay, model, one, groups, m,
                             derive_seed(opt.seed, {0x70, n_pick, static_cast<std::uint64_t>(m),
                                                    static_cast<std::uint64_t>(t)}));
    pt.f_sample += obs.sample.f_sample() / opt.n_trials;
    pt.mean_strings += static_cast<double>(obs.n_strings) / opt.n_trials;
    cfg.seed = derive_seed(opt.seed, {0x71, n_pick, static_cast<std::uint64_t>(t)});
    const auto res = complete(obs.observed, obs.sample, cfg);
    if (!res.converged) continue;
    eps.push_back(rel_error(res.completed, model));
  }
  pt.n_converged = static_cast<int>(eps.size());
  if (eps.empty()) {
    pt.mean_eps = std::numeric_limits<double>::infinity();
    return pt;
  }
  for (double e : eps) pt.mean_eps += e / static_cast<double>(eps.size());
  for (double e : eps) pt.std_eps += (e - pt.mean_eps) * (e - pt.mean_eps);
  pt.std_eps = eps.size() > 1 ? std::sqrt(pt.std_eps / static_cast<double>(eps.size() - 1)) : 0.0;
  return pt;
}

/// For each quartet fraction, the smallest m whose mean completion error is
/// below eps0 (doubling, then bisection); returns the (m, fraction) pair of
/// least cost (m + c) * strings, or the standard scheme when that is cheaper.
inline NoisyPlan plan_noisy(const SectorLayout& lay, const Eigen::MatrixXd& model, const OneRDM* one,
                            Eigen::Index r, double eps0, double c, const PlanOptions& opt = {}) {
  if (opt.fractions.empty()) throw Error("plan_noisy: empty fraction grid");
  std::vector<double> fractions = opt.fractions;
  std::sort(fractions.rbegin(), fractions.rend());
  NoisyPlan plan;
  double best_cost = std::numeric_limits<double>::infinity();
  std::optional<PlanPoint> best;
  const double all_strings = static_cast<double>(lay.total_strings());

  for (double f : fractions) {
    auto eval = [&](long long m) {
      auto pt = noisy_completion_error(lay, model, one, r, f, m, opt);
      pt.feasible = pt.mean_eps < eps0;
      plan.curve.push_back(pt);
      return pt;
    };
    long long m = 1;
    std::optional<PlanPoint> hit;
    double strings = -1.0;
    for (;;) {
      if (strings > 0.0 && (static_cast<double>(m) + c) * strings >= best_cost) break;
      const auto pt = eval(m);
      strings = pt.mean_strings;
      if (pt.feasible) {
        hit = pt;
        break;
      }
      if (static_cast<double>(m) * 2.0 > opt.m_cap) break;
      m *= 2;
    }
    if (!hit) continue;
    long long lo = m / 2, hi = m;
    for (int s = 0; s < opt.refine_steps && hi - lo > 1 && lo >= 1; ++s) {
      const long long mid = lo + (hi - lo) / 2;
      const auto pt = eval(mid);
      if (pt.feasible) {
        hi = mid;
        hit = pt;
      } else {
        lo = mid;
      }
    }
    const double cost = (static_cast<double>(hit->m) + c) * hit->mean_strings;
    if (cost < best_cost) {
      best_cost = cost;
      best = hit;
    }
  }

  if (opt.m_standard) {
    const double std_cost = (static_cast<double>(*opt.m_standard) + c) * all_strings;
    if (!best || std_cost <= best_cost) {
      plan.standard_fallback = true;
      plan.fraction = 1.0;
      plan.f_sample = 1.0;
      plan.n_groups = lay.groups.size();
      plan.budget = {*opt.m_standard, static_cast<double>(*opt.m_standard) * all_strings, all_strings, c, 1.0};
      return plan;
    }
  }
  if (!best) throw NoFeasiblePoint("plan_noisy: no (m, f_sample) pair reaches eps0 under the shot cap");
  plan.fraction = best->fraction;
  plan.f_sample = best->f_sample;
  plan.n_groups = groups_for_fraction(best->fraction, lay.groups.size());
  plan.budget.m_per_string = best->m;
  plan.budget.n_settings = best->mean_strings;
  plan.budget.total_shots = static_cast<double>(best->m) * best->mean_strings;
  plan.budget.c = c;
  if (opt.m_standard)
    plan.budget.f_m = plan.budget.total_shots / (static_cast<double>(*opt.m_standard) * all_strings);
  return plan;
}

}  // namespace rdmc
