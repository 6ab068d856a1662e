#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "rdmc/measurement.hpp"
#include "rdmc/toy_oracle.hpp"

namespace rdmc {
namespace {

/// Random normalized real state inside a fixed (N_alpha, N_beta) sector.
Statevector random_sector_state(const SystemMeta& meta, std::uint64_t seed) {
  const auto basis = sector_basis(meta);
  auto rng = make_rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Statevector psi{2 * meta.n, Eigen::VectorXd::Zero(Eigen::Index{1} << (2 * meta.n))};
  for (auto b : basis) psi.amp(static_cast<Eigen::Index>(b)) = g(rng);
  psi.amp /= psi.amp.norm();
  return psi;
}

/// Max deviation between map-predicted and statevector Pauli expectations over every quartet.
double oracle_deviation(const Statevector& psi, const SystemMeta& meta, std::size_t* n_checked = nullptr) {
  const auto rdms = exact_rdms(psi, meta);
  double worst = 0.0;
  for (auto s : kAllSectors) {
    const auto lay = make_sector_layout(s, meta.n);
    for (const auto& g : lay.groups) {
      const auto q = forward_expectations(g, exact_variables(g, rdms.two.sector(s).data, &rdms.one));
      for (std::size_t i = 0; i < g.map.strings.size(); ++i) {
        worst = std::max(worst, std::abs(q(static_cast<Eigen::Index>(i)) - pauli_expectation(psi, g.map.strings[i])));
        if (n_checked) ++*n_checked;
      }
    }
  }
  return worst;
}

TEST(Quartet, KindsFollowMultiplicity) {
  EXPECT_EQ(quartet_of(SpinSector::aaaa, same_spin_pair(3, 2), same_spin_pair(1, 0), 4).kind(),
            QuartetKind::all_distinct);
  EXPECT_EQ(quartet_of(SpinSector::abab, mixed_pair(0, 1, 4), mixed_pair(0, 2, 4), 4).kind(),
            QuartetKind::one_repeated);
  EXPECT_EQ(quartet_of(SpinSector::abab, mixed_pair(1, 1, 4), mixed_pair(1, 1, 4), 4).kind(),
            QuartetKind::pair_diagonal);
}

TEST(BuildMap, AllDistinctSameSpinUsesEightStrings) {
  const auto q = quartet_of(SpinSector::aaaa, same_spin_pair(3, 2), same_spin_pair(1, 0), 4);
  const auto m = build_map(q);
  EXPECT_EQ(m.strings.size(), 8u);
  EXPECT_EQ(m.variables.size(), 3u);
  for (const auto& s : m.strings) {
    int xy = 0;
    for (const auto& [qb, op] : s.ops) xy += (op == 'X' || op == 'Y');
    EXPECT_EQ(xy, 4);
  }
}

TEST(BuildMap, PairDiagonalUsesOnlyZ) {
  const auto q = quartet_of(SpinSector::aaaa, same_spin_pair(2, 0), same_spin_pair(2, 0), 3);
  const auto m = build_map(q);
  EXPECT_EQ(m.strings.size(), 3u);
  for (const auto& s : m.strings)
    for (const auto& [qb, op] : s.ops) EXPECT_EQ(op, 'Z');
  // n_p n_q, D_pp, D_qq
  EXPECT_EQ(m.variables.size(), 3u);
}

TEST(BuildMap, LeftInverseIsExactForEveryQuartet) {
  for (int n : {3, 4})
    for (auto s : kAllSectors)
      for (const auto& g : make_sector_layout(s, n).groups) {
        EXPECT_LT(g.map.left_inverse_residual(), 1e-12) << g.map.quartet.to_string();
        EXPECT_LE(g.map.strings.size(), 8u);
        std::size_t n_elem = 0;
        for (const auto& v : g.map.variables) n_elem += v.is_element();
        EXPECT_LE(n_elem, 3u);
      }
}

TEST(BuildMap, LayoutCoversEveryUniqueElementOnce) {
  for (auto s : kAllSectors) {
    const auto lay = make_sector_layout(s, 4);
    std::set<Position> seen;
    for (const auto& g : lay.groups)
      for (const auto& p : g.positions) EXPECT_TRUE(seen.insert(p).second);
    EXPECT_EQ(seen.size(), unique_count(lay.d));
  }
}

TEST(BuildMap, ExhaustiveStatevectorOracleSixSpinOrbitals) {
  for (auto meta : {SystemMeta{3, 2, 1}, SystemMeta{3, 1, 1}, SystemMeta{3, 2, 2}}) {
    std::size_t checked = 0;
    EXPECT_LT(oracle_deviation(random_sector_state(meta, 11), meta, &checked), 1e-10);
    EXPECT_GT(checked, 0u);
    const auto gs = ground_state(random_two_body(3, meta.n_alpha, meta.n_beta, 5));
    EXPECT_LT(oracle_deviation(gs.psi, meta), 1e-10);
  }
}

TEST(BuildMap, ExhaustiveStatevectorOracleEightSpinOrbitals) {
  for (auto meta : {SystemMeta{4, 2, 2}, SystemMeta{4, 3, 1}}) {
    EXPECT_LT(oracle_deviation(random_sector_state(meta, 23), meta), 1e-10);
    const auto gs = ground_state(hubbard_chain(4, meta.n_alpha, meta.n_beta, 1.0, 4.0));
    EXPECT_LT(oracle_deviation(gs.psi, meta), 1e-10);
  }
}

TEST(ExactPauliExpectations, ZeroRdmsGiveZeroNonIdentityParts) {
  const SystemMeta meta{3, 1, 1};
  const auto p = SpinRDMSet::zeros(meta);
  const OneRDM d{Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Zero(3, 3)};
  for (auto s : kAllSectors)
    for (const auto& g : make_sector_layout(s, 3).groups) {
      const auto q = exact_pauli_expectations(p, d, g.map.quartet);
      EXPECT_LT(max_abs(q - g.map.offset), 1e-15);
    }
}

TEST(ExactPauliExpectations, DeterminantAgreesWithStatevector) {
  const int n = 4;
  Eigen::MatrixXd rot = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd::Random(n, n)).householderQ();
  const Eigen::MatrixXd occ_a = rot.leftCols(2), occ_b = rot.rightCols(1);
  const auto psi = determinant_state(occ_a, occ_b);
  const Eigen::MatrixXd da = occ_a * occ_a.transpose(), db = occ_b * occ_b.transpose();
  const auto hf = hf_2rdm(da, db);
  const OneRDM d{da, db};
  for (auto s : kAllSectors)
    for (const auto& g : make_sector_layout(s, n).groups) {
      const auto q = exact_pauli_expectations(hf, d, g.map.quartet);
      for (std::size_t i = 0; i < g.map.strings.size(); ++i)
        EXPECT_NEAR(q(static_cast<Eigen::Index>(i)), pauli_expectation(psi, g.map.strings[i]), 1e-10);
    }
}

TEST(ExactPauliExpectations, UnphysicalInputIsRejected) {
  const SystemMeta meta{2, 1, 1};
  auto p = SpinRDMSet::zeros(meta);
  p.abab.data(0, 0) = 5.0;
  const OneRDM d{Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 2)};
  const auto q = quartet_of(SpinSector::abab, 0, 0, 2);
  EXPECT_THROW(exact_pauli_expectations(p, d, q), UnphysicalExpectation);
}

TEST(SimulateShots, EndpointsAreDeterministic) {
  auto rng = make_rng(1);
  for (long long m : {1LL, 7LL, 1000LL}) {
    EXPECT_EQ(simulate_shots(1.0, m, rng), 1.0);
    EXPECT_EQ(simulate_shots(-1.0, m, rng), -1.0);
  }
  EXPECT_THROW(simulate_shots(0.0, 0, rng), Error);
}

TEST(SimulateShots, SingleShotAtZeroHasUnitVariance) {
  auto rng = make_rng(2);
  double s = 0.0, s2 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double x = simulate_shots(0.0, 1, rng);
    EXPECT_TRUE(x == 1.0 || x == -1.0);
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0, 0.01);
}

TEST(SimulateShots, VarianceMatchesBinomialFormula) {
  const int n = 100000;
  for (double q : {0.0, 0.5, -0.5})
    for (long long m : {10LL, 100LL}) {
      auto rng = make_rng(3, {static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(q * 10 + 10)});
      double s = 0.0, s2 = 0.0;
      for (int i = 0; i < n; ++i) {
        const double x = simulate_shots(q, m, rng);
        s += x;
        s2 += x * x;
      }
      const double mean = s / n, var = s2 / n - mean * mean;
      const double expect = (1.0 + q) * (1.0 - q) / static_cast<double>(m);
      EXPECT_NEAR(var / expect, 1.0, 0.05) << "q=" << q << " m=" << m;
    }
}

struct ToyFixture {
  SystemMeta meta{3, 2, 1};
  ExactRDMs rdms;
  ToyFixture() { rdms = exact_rdms(ground_state(random_two_body(3, 2, 1, 9)).psi, meta); }
};

TEST(MeasureRdm, NoiselessBypassIsExact) {
  ToyFixture fx;
  const auto out = measure_rdm(fx.rdms.two, fx.rdms.one, 0, 4);
  for (auto s : kAllSectors) EXPECT_LT(max_abs(out.sector(s).data - fx.rdms.two.sector(s).data), 1e-12);
}

TEST(MeasureRdm, LargeShotCountConverges) {
  ToyFixture fx;
  const auto out = measure_rdm(fx.rdms.two, fx.rdms.one, 100000000LL, 4);
  for (auto s : kAllSectors) EXPECT_LT(max_abs(out.sector(s).data - fx.rdms.two.sector(s).data), 3e-4);
  EXPECT_TRUE(is_symmetric(out.abab.data));
}

TEST(MeasureRdm, ReconstructionIsUnbiasedWithPropagatedVariance) {
  ToyFixture fx;
  const auto lay = make_sector_layout(SpinSector::abab, fx.meta.n);
  const Eigen::MatrixXd& exact = fx.rdms.two.abab.data;
  const long long m = 50;
  const int reps = 10000;
  for (std::size_t gi = 0; gi < lay.groups.size(); gi += 3) {
    const auto& g = lay.groups[gi];
    const Eigen::VectorXd x = exact_variables(g, exact, &fx.rdms.one);
    const Eigen::VectorXd q = forward_expectations(g, x);
    // linear propagation: var(x_c) = sum_i T_inv(c, i)^2 (1 - q_i^2) / m
    Eigen::VectorXd pred = Eigen::VectorXd::Zero(x.size());
    for (Eigen::Index i = 0; i < q.size(); ++i)
      pred += g.map.T_inv.col(i).cwiseAbs2() * (1.0 - q(i) * q(i)) / static_cast<double>(m);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(x.size()), s2 = s;
    auto rng = make_rng(77, {gi});
    for (int r = 0; r < reps; ++r) {
      const Eigen::VectorXd xh = measure_group(g, x, m, rng);
      s += xh;
      s2 += xh.cwiseAbs2();
    }
    const Eigen::VectorXd mean = s / reps;
    const Eigen::VectorXd var = s2 / reps - mean.cwiseAbs2();
    for (Eigen::Index c = 0; c < x.size(); ++c) {
      if (pred(c) < 1e-14) continue;
      EXPECT_LT(std::abs(mean(c) - x(c)), 4.0 * std::sqrt(pred(c) / reps)) << g.map.quartet.to_string();
      EXPECT_NEAR(var(c) / pred(c), 1.0, 0.1) << g.map.quartet.to_string();
    }
  }
}

TEST(CalibrateStandard, ErrorScalesAsInverseSquareRoot) {
  ToyFixture fx;
  const auto lay = make_sector_layout(SpinSector::abab, fx.meta.n);
  CalibrationOptions opt;
  opt.n_trials = 40;
  const auto a = standard_error_at(lay, fx.rdms.two.abab.data, &fx.rdms.one, 1000, opt);
  const auto b = standard_error_at(lay, fx.rdms.two.abab.data, &fx.rdms.one, 2000, opt);
  EXPECT_NEAR(a.mean_eps / b.mean_eps, std::sqrt(2.0), 0.15 * std::sqrt(2.0));
}

TEST(CalibrateStandard, LooseTargetNeedsOneShot) {
  ToyFixture fx;
  const auto lay = make_sector_layout(SpinSector::abab, fx.meta.n);
  const auto cal = calibrate_standard(lay, fx.rdms.two.abab.data, &fx.rdms.one, 10.0);
  EXPECT_EQ(cal.m0, 1);
  EXPECT_EQ(cal.total_shots, static_cast<double>(lay.total_strings()));
}

TEST(CalibrateStandard, FindsThresholdAndRespectsCap) {
  ToyFixture fx;
  const auto lay = make_sector_layout(SpinSector::abab, fx.meta.n);
  CalibrationOptions opt;
  opt.refine_steps = 3;
  const auto cal = calibrate_standard(lay, fx.rdms.two.abab.data, &fx.rdms.one, 0.05, opt);
  EXPECT_GT(cal.m0, 1);
  EXPECT_LT(standard_error_at(lay, fx.rdms.two.abab.data, &fx.rdms.one, cal.m0, opt).mean_eps, 0.05);
  opt.m_cap = 4;
  EXPECT_THROW(calibrate_standard(lay, fx.rdms.two.abab.data, &fx.rdms.one, 1e-6, opt), BudgetCap);
}

TEST(PlanNoisy, DeterministicAndBookkept) {
  ToyFixture fx;
  const auto lay = make_sector_layout(SpinSector::abab, fx.meta.n);
  PlanOptions po;
  po.fractions = {0.8, 1.0};
  po.n_trials = 3;
  po.m_standard = 1 << 20;
  const auto& m = fx.rdms.two.abab.data;
  const auto r = select_rank(fx.rdms.two.abab, 0.05);
  const auto a = plan_noisy(lay, m, &fx.rdms.one, r, 0.05, 0.0, po);
  const auto b = plan_noisy(lay, m, &fx.rdms.one, r, 0.05, 0.0, po);
  EXPECT_EQ(a.budget.m_per_string, b.budget.m_per_string);
  EXPECT_EQ(a.fraction, b.fraction);
  EXPECT_EQ(a.budget.total_shots, b.budget.total_shots);
  EXPECT_DOUBLE_EQ(a.budget.f_m, a.budget.total_shots / (static_cast<double>(*po.m_standard) * lay.total_strings()));
  EXPECT_LE(a.budget.f_m, 1.0);
}

TEST(PlanNoisy, FallsBackToStandardWhenCheaper) {
  ToyFixture fx;
  const auto lay = make_sector_layout(SpinSector::abab, fx.meta.n);
  PlanOptions po;
  po.fractions = {1.0};
  po.n_trials = 2;
  po.m_standard = 1;
  const auto plan = plan_noisy(lay, fx.rdms.two.abab.data, &fx.rdms.one, 1, 10.0, 0.0, po);
  EXPECT_TRUE(plan.standard_fallback);
  EXPECT_EQ(plan.budget.f_m, 1.0);
}

TEST(ElementLayout, OneGroupPerUniqueElement) {
  const auto lay = element_layout(5);
  EXPECT_EQ(lay.groups.size(), unique_count(5));
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(5, 5, 0.25);
  const auto obs = observe(lay, m, nullptr, all_groups(lay), 0, 1);
  EXPECT_LT(max_abs(obs.observed - m), 1e-15);
  EXPECT_EQ(obs.sample.f_sample(), 1.0);
}

}  // namespace
}  // namespace rdmc
