#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rdmc/rdm_core.hpp"
#include "rdmc/rng.hpp"
#include "rdmc/toy_oracle.hpp"

namespace rdmc {
namespace {

Eigen::MatrixXd random_orthogonal(int n, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = g(rng);
  return Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
}

/// Projector onto `occ` random orthonormal orbitals.
Eigen::MatrixXd random_idempotent(int n, int occ, std::uint64_t seed) {
  const Eigen::MatrixXd q = random_orthogonal(n, seed).leftCols(occ);
  return q * q.transpose();
}

PackedRDM random_symmetric(SpinSector s, const SystemMeta& meta, std::uint64_t seed) {
  auto p = PackedRDM::zeros(s, meta);
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Eigen::Index i = 0; i < p.dim(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j) p.data(i, j) = p.data(j, i) = u(rng);
  return p;
}

TEST(Packing, DimensionsFollowSectorFormula) {
  const SystemMeta meta{2, 1, 1};
  EXPECT_EQ(PackedRDM::zeros(SpinSector::aaaa, meta).dim(), 1);
  EXPECT_EQ(PackedRDM::zeros(SpinSector::abab, meta).dim(), 4);
  EXPECT_EQ(packed_dim(SpinSector::bbbb, 5), 10);
  EXPECT_EQ(pair_labels(SpinSector::aaaa, 0, 2), (std::pair<int, int>{1, 0}));
}

TEST(Packing, PairLabelsInvertPairIndex) {
  for (int n : {1, 2, 5, 9}) {
    for (Eigen::Index p = 0; p < packed_dim(SpinSector::aaaa, n); ++p) {
      const auto [i, k] = pair_labels(SpinSector::aaaa, p, n);
      EXPECT_GT(i, k);
      EXPECT_EQ(same_spin_pair(i, k), p);
    }
    for (Eigen::Index p = 0; p < packed_dim(SpinSector::abab, n); ++p) {
      const auto [i, k] = pair_labels(SpinSector::abab, p, n);
      EXPECT_EQ(mixed_pair(i, k, n), p);
    }
  }
}

TEST(Packing, RoundTripIsBitwise) {
  const SystemMeta meta{4, 2, 2};
  for (auto s : kAllSectors) {
    const auto p = random_symmetric(s, meta, 7 + sector_index(s));
    const auto back = pack_sector(unpack_sector(p), s, meta);
    EXPECT_TRUE((back.data.array() == p.data.array()).all());
  }
}

TEST(Packing, ZeroRoundTrip) {
  const SystemMeta meta{3, 1, 1};
  const auto t = unpack_sector(PackedRDM::zeros(SpinSector::aaaa, meta));
  for (double v : t.raw()) EXPECT_EQ(v, 0.0);
}

TEST(Packing, SingleSameSpinValueExpandsWithSigns) {
  const SystemMeta meta{2, 2, 0};
  auto p = PackedRDM::zeros(SpinSector::aaaa, meta);
  p.data(0, 0) = 0.7;
  const auto t = unpack_sector(p);
  EXPECT_EQ(t(1, 0, 1, 0), 0.7);
  EXPECT_EQ(t(0, 1, 1, 0), -0.7);
  EXPECT_EQ(t(1, 0, 0, 1), -0.7);
  EXPECT_EQ(t(0, 1, 0, 1), 0.7);
  EXPECT_EQ(t(0, 0, 1, 1), 0.0);
}

TEST(Packing, BrokenAntisymmetryIsRejected) {
  const SystemMeta meta{2, 2, 0};
  Tensor4 t(2);
  t(1, 0, 1, 0) = 1.0;
  t(0, 1, 1, 0) = 1.0;  // should be -1
  t(1, 0, 0, 1) = -1.0;
  t(0, 1, 0, 1) = 1.0;
  EXPECT_THROW(pack_sector(t, SpinSector::aaaa, meta), SymmetryViolation);
  EXPECT_THROW(pack_sector(Tensor4(3), SpinSector::aaaa, meta), DimensionMismatch);
}

TEST(HartreeFock, RanksMatchElectronCounts) {
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 5, na = 1 + trial % 4, nb = 1 + (trial * 3) % 5;
    const auto p = hf_2rdm(random_idempotent(n, na, 100 + trial), random_idempotent(n, nb, 200 + trial));
    EXPECT_EQ(numerical_rank(spectrum(p.aaaa), 1e-10), na * (na - 1) / 2);
    EXPECT_EQ(numerical_rank(spectrum(p.bbbb), 1e-10), nb * (nb - 1) / 2);
    EXPECT_EQ(numerical_rank(spectrum(p.abab), 1e-10), na * nb);
    for (auto s : kAllSectors) {
      const auto& m = p.sector(s).data;
      const double lo = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues()(0);
      EXPECT_GE(lo, -1e-10 * std::max(1.0, m.norm()));
      EXPECT_NEAR(trace(p.sector(s)), trace_target(p.meta, s), 1e-8);
    }
  }
}

TEST(HartreeFock, SingleAlphaElectronHasNoSameSpinPairs) {
  const auto p = hf_2rdm(random_idempotent(4, 1, 3), random_idempotent(4, 2, 4));
  EXPECT_LT(p.aaaa.data.norm(), 1e-14);
}

TEST(HartreeFock, NonIdempotentInputIsRejected) {
  Eigen::MatrixXd d = 0.5 * Eigen::MatrixXd::Identity(3, 3);
  EXPECT_THROW(hf_2rdm(d, d), NotIdempotent);
}

TEST(Contraction, RecoversIdempotentDensity) {
  const Eigen::MatrixXd da = random_idempotent(5, 3, 8), db = random_idempotent(5, 2, 9);
  const auto d = contract_to_1rdm(hf_2rdm(da, db));
  EXPECT_LT(max_abs(d.alpha - da), 1e-10);
  EXPECT_LT(max_abs(d.beta - db), 1e-10);
}

TEST(Contraction, ZeroInZeroOut) {
  const auto d = contract_to_1rdm(SpinRDMSet::zeros({3, 1, 1}));
  EXPECT_EQ(d.alpha.norm() + d.beta.norm(), 0.0);
  EXPECT_THROW(contract_to_1rdm(SpinRDMSet::zeros({3, 1, 0})), DegenerateSystem);
}

TEST(Contraction, MatchesOracleOneRdm) {
  const auto h = random_two_body(4, 2, 1, 12);
  const auto rdms = exact_rdms(ground_state(h).psi, h.meta);
  const auto d = contract_to_1rdm(rdms.two);
  EXPECT_LT(max_abs(d.alpha - rdms.one.alpha), 1e-10);
  EXPECT_LT(max_abs(d.beta - rdms.one.beta), 1e-10);
  EXPECT_NEAR(d.alpha.trace() + d.beta.trace(), 3.0, 1e-8);
}

TEST(Energy, TrivialIntegrals) {
  const auto p = hf_2rdm(random_idempotent(3, 1, 1), random_idempotent(3, 1, 2));
  auto ints = IntegralSet::zeros(3);
  EXPECT_EQ(energy(p, ints).total, 0.0);
  EXPECT_EQ(energy(p, ints).two_body, 0.0);
  ints.t = Eigen::MatrixXd::Identity(3, 3) * 0.3;
  const auto d = contract_to_1rdm(p);
  EXPECT_NEAR(energy(p, ints).total, 0.3 * (d.alpha.trace() + d.beta.trace()), 1e-12);
  EXPECT_EQ(energy(p, ints).two_body, 0.0);
  EXPECT_THROW(energy(p, IntegralSet::zeros(4)), DimensionMismatch);
}

TEST(Energy, MatchesExactDiagonalization) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto h = random_two_body(4, 2, 2, seed);
    const auto gs = ground_state(h);
    const auto rdms = exact_rdms(gs.psi, h.meta);
    EXPECT_NEAR(energy(rdms.two, h.ints).total, gs.energy, 1e-9);
  }
  const auto h = hubbard_chain(4, 2, 2, 1.0, 4.0);
  const auto gs = ground_state(h);
  EXPECT_NEAR(energy(exact_rdms(gs.psi, h.meta).two, h.ints).total, gs.energy, 1e-9);
}

TEST(RelError, ElementaryValues) {
  const auto m = random_symmetric(SpinSector::abab, {3, 1, 1}, 4);
  EXPECT_EQ(rel_error(m, m), 0.0);
  PackedRDM twice = m;
  twice.data *= 2.0;
  EXPECT_NEAR(rel_error(twice, m), 1.0, 1e-15);
  EXPECT_THROW(rel_error(m, PackedRDM::zeros(SpinSector::abab, {3, 1, 1})), ZeroReference);
}

TEST(RelError, MatchesElementwiseLoop) {
  const auto a = random_symmetric(SpinSector::abab, {3, 1, 1}, 5);
  const auto b = random_symmetric(SpinSector::abab, {3, 1, 1}, 6);
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < a.dim(); ++i)
    for (Eigen::Index j = 0; j < a.dim(); ++j) {
      num += (a.data(i, j) - b.data(i, j)) * (a.data(i, j) - b.data(i, j));
      den += b.data(i, j) * b.data(i, j);
    }
  EXPECT_NEAR(rel_error(a, b), std::sqrt(num / den), 1e-14);
}

TEST(Spectrum, IdentityHasUnitValues) {
  const auto s = spectrum(Eigen::MatrixXd::Identity(6, 6));
  EXPECT_LT((s.values.array() - 1.0).abs().maxCoeff(), 1e-14);
}

TEST(Spectrum, ReconstructionAndEckartYoungTail) {
  const auto p = random_symmetric(SpinSector::abab, {3, 1, 1}, 10);
  const auto s = spectrum(p);
  EXPECT_LT((s.reconstruct() - p.data).norm(), 1e-9 * p.data.norm());
  EXPECT_LT((s.U.transpose() * s.U - Eigen::MatrixXd::Identity(9, 9)).norm(), 1e-10);
  for (Eigen::Index r = 1; r < s.size(); ++r) {
    EXPECT_GE(s.values(r - 1), s.values(r));
    EXPECT_NEAR((s.truncated(r).reconstruct() - p.data).norm(), s.tail_norm(r), 1e-10);
  }
}

TEST(SelectRank, RankOneMatrix) {
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(6, 1.0, 2.0);
  for (double eps0 : {0.5, 0.01, 1e-4}) EXPECT_EQ(select_rank(spectrum(v * v.transpose()), eps0), 1);
}

TEST(SelectRank, TailNormsByBruteForce) {
  const Eigen::Vector4d vals(1.0, 0.1, 0.01, 0.001);
  const Eigen::MatrixXd m = vals.asDiagonal();
  const double total = vals.norm();
  // r = 1: tail sqrt(0.1^2 + 0.01^2 + 0.001^2) / total ~ 0.1 > 0.005
  // r = 2: sqrt(0.01^2 + 0.001^2) / total ~ 0.01 > 0.005
  // r = 3: 0.001 / total ~ 0.000995 < 0.005
  EXPECT_GT(std::sqrt(0.01 * 0.01 + 0.001 * 0.001) / total, 0.005);
  EXPECT_LT(0.001 / total, 0.005);
  EXPECT_EQ(select_rank(spectrum(m), 0.01, 0.5), 3);
  EXPECT_EQ(kDefaultKappa, 0.5);
}

TEST(SelectRank, MonotoneInTarget) {
  const auto h = hubbard_chain(4, 2, 2, 1.0, 4.0);
  const auto p = exact_rdms(ground_state(h).psi, h.meta).two.abab;
  Eigen::Index prev = 0;
  for (double eps0 : {0.5, 0.2, 0.1, 0.05, 0.01, 0.001}) {
    const auto r = select_rank(p, eps0);
    EXPECT_GE(r, prev);
    prev = r;
  }
}

TEST(TraceRules, ExactStatesSatisfySumRules) {
  for (auto meta : {SystemMeta{4, 2, 2}, SystemMeta{4, 3, 1}, SystemMeta{3, 2, 2}}) {
    const auto h = random_two_body(meta.n, meta.n_alpha, meta.n_beta, 31);
    const auto p = exact_rdms(ground_state(h).psi, meta).two;
    for (auto s : kAllSectors) EXPECT_NEAR(trace(p.sector(s)), trace_target(meta, s), 1e-8);
  }
}

}  // namespace
}  // namespace rdmc
