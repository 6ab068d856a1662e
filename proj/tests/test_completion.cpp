#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "rdmc/completion.hpp"

namespace rdmc {
namespace {

/// Random PSD matrix of exact rank r with O(1) entries.
Eigen::MatrixXd random_low_rank(Eigen::Index d, Eigen::Index r, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd x(d, r);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = g(rng);
  return x * x.transpose() / static_cast<double>(r);
}

TEST(Sampling, FullSampleCoversLowerTriangle) {
  const auto s = sample_uniform(6, unique_count(6), 3);
  EXPECT_EQ(s, (SampleSet{SpinSector::abab, 6, SampleSet::full(6).indices, 3}));
  EXPECT_DOUBLE_EQ(s.f_sample(), 1.0);
}

TEST(Sampling, UniqueSortedAndInRange) {
  const auto s = sample_uniform(10, 20, 4);
  EXPECT_EQ(s.n_sample(), 20u);
  std::set<Position> seen(s.indices.begin(), s.indices.end());
  EXPECT_EQ(seen.size(), 20u);
  for (const auto& [r, c] : s.indices) {
    EXPECT_GE(r, c);
    EXPECT_LT(r, 10);
  }
  EXPECT_TRUE(std::is_sorted(s.indices.begin(), s.indices.end()));
}

TEST(Sampling, EveryPositionEquallyLikely) {
  const Eigen::Index d = 4;
  const int draws = 20000;
  Eigen::MatrixXd hits = Eigen::MatrixXd::Zero(d, d);
  for (int t = 0; t < draws; ++t)
    for (const auto& [r, c] : sample_uniform(d, 3, 1000 + t).indices) hits(r, c) += 1.0;
  const double p = 3.0 / 10.0, expect = p * draws, sd = std::sqrt(draws * p * (1 - p));
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c <= r; ++c) EXPECT_NEAR(hits(r, c), expect, 5 * sd);
}

TEST(Sampling, BudgetOutsideRangeIsRejected) {
  EXPECT_THROW(sample_uniform(3, 7, 0), BudgetExceedsUnique);
  EXPECT_THROW(sample_uniform(3, 0, 0), BudgetExceedsUnique);
}

TEST(Sampling, LowerPositionInvertsLinearIndex) {
  std::size_t idx = 0;
  for (Eigen::Index r = 0; r < 30; ++r)
    for (Eigen::Index c = 0; c <= r; ++c) EXPECT_EQ(lower_position(idx++), (Position{r, c}));
}

TEST(InfoBound, KnownValues) {
  EXPECT_DOUBLE_EQ(info_bound(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(info_bound(4, 4), 1.0);
  EXPECT_DOUBLE_EQ(info_bound(1, 4), 8.0 / 20.0);  // 2rd - r^2 + r = 8 of d(d+1) = 20
  EXPECT_THROW(info_bound(0, 4), Error);
  EXPECT_THROW(info_bound(5, 4), Error);
}

TEST(Objective, GradientMatchesFiniteDifferences) {
  const Eigen::Index d = 7, r = 3;
  const auto m = random_low_rank(d, 2, 5);
  const auto s = sample_uniform(d, 15, 6);
  auto rng = make_rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int pt = 0; pt < 5; ++pt) {
    Eigen::MatrixXd l(r, d);
    for (Eigen::Index i = 0; i < l.size(); ++i) l(i) = g(rng);
    Eigen::MatrixXd grad;
    completion_objective(l, m, s, &grad);
    Eigen::MatrixXd fd(r, d);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < l.size(); ++i) {
      Eigen::MatrixXd lp = l, lm = l;
      lp(i) += h;
      lm(i) -= h;
      fd(i) = (completion_objective(lp, m, s) - completion_objective(lm, m, s)) / (2 * h);
    }
    EXPECT_LT((grad - fd).norm() / fd.norm(), 1e-6) << "point " << pt;
  }
}

TEST(Objective, ZeroAtExactFactor) {
  const auto m = random_low_rank(6, 2, 8);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::MatrixXd l = (es.eigenvectors().rightCols(2) * es.eigenvalues().tail(2).cwiseSqrt().asDiagonal()).transpose();
  EXPECT_LT(completion_objective(l, m, SampleSet::full(6)), 1e-24);
}

TEST(Complete, RecoversFromFullSample) {
  const auto m = random_low_rank(12, 3, 9);
  CompletionConfig cfg;
  cfg.rank = 3;
  const auto res = complete(m, SampleSet::full(12), cfg);
  EXPECT_TRUE(res.converged);
  EXPECT_LT(rel_error(res.completed, m), 1e-6);
}

TEST(Complete, RecoversRankFiveFromOneAndAHalfInfoBound) {
  const Eigen::Index d = 50, r = 5;
  const auto m = random_low_rank(d, r, 10);
  CompletionConfig cfg;
  cfg.rank = r;
  const auto n = samples_for_fraction(1.5 * info_bound(r, d), d);
  int recovered = 0;
  for (int t = 0; t < 5; ++t) {
    const auto res = complete(m, sample_uniform(d, n, 50 + t), cfg);
    if (rel_error(res.completed, m) < 1e-4) ++recovered;
  }
  EXPECT_GE(recovered, 4);
}

TEST(Complete, ResultIsPsdWithBoundedRank) {
  const auto m = random_low_rank(15, 6, 11);
  CompletionConfig cfg;
  cfg.rank = 2;
  const auto res = complete(m, sample_uniform(15, 60, 12), cfg);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(res.completed);
  EXPECT_GE(es.eigenvalues()(0), -1e-10 * es.eigenvalues().cwiseAbs().maxCoeff());
  EXPECT_LE(numerical_rank(spectrum(res.completed), 1e-9), 2);
  EXPECT_EQ(res.factor.rank(), 2);
}

TEST(Complete, DeterministicForFixedSeed) {
  const auto m = random_low_rank(10, 2, 13);
  const auto s = sample_uniform(10, 30, 14);
  CompletionConfig cfg;
  cfg.rank = 2;
  cfg.seed = 77;
  const auto a = complete(m, s, cfg), b = complete(m, s, cfg);
  EXPECT_TRUE((a.completed.array() == b.completed.array()).all());
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Complete, InvalidInputsAreRejected) {
  const auto m = random_low_rank(4, 1, 1);
  CompletionConfig cfg;
  cfg.rank = 5;
  EXPECT_THROW(complete(m, SampleSet::full(4), cfg), DimensionMismatch);
  cfg.rank = 1;
  EXPECT_THROW(complete(m, SampleSet::full(3), cfg), DimensionMismatch);
  cfg.eps0 = -1;
  EXPECT_THROW(complete(m, SampleSet::full(4), cfg), Error);
}

TEST(Fsample, FeasibleAtFullSampleAndMonotoneSample) {
  const Eigen::Index d = 20, r = 2;
  const auto m = random_low_rank(d, r, 15);
  CompletionConfig cfg;
  cfg.rank = r;
  cfg.n_trials = 3;
  const auto grid = default_fsample_grid(r, d);
  EXPECT_EQ(grid.back(), 1.0);
  EXPECT_TRUE(std::is_sorted(grid.begin(), grid.end()));
  const auto search = find_fsample(m, cfg, grid);
  ASSERT_TRUE(search.chosen.has_value());
  EXPECT_LE(search.best().f_sample, 1.0);
  EXPECT_DOUBLE_EQ(search.curve.back().success_fraction, 1.0);
  for (std::size_t i = 1; i < search.curve.size(); ++i)
    EXPECT_GE(search.curve[i].n_sample, search.curve[i - 1].n_sample);
}

TEST(Fsample, TruncatedModelSaturatesAtEckartYoungTail) {
  // completing a full-rank matrix at rank r from every element lands at the best rank-r error
  const Eigen::Index d = 12, r = 3;
  Eigen::MatrixXd m = random_low_rank(d, r, 16) + 0.05 * random_low_rank(d, d, 17);
  CompletionConfig cfg;
  cfg.rank = r;
  cfg.n_trials = 2;
  cfg.eps0 = 0.5;
  const auto search = find_fsample(m, cfg, {1.0});
  const auto dec = spectrum(m);
  const double tail = dec.tail_norm(r) / m.norm();
  EXPECT_NEAR(search.curve.back().mean_error, tail, 0.1 * tail);
}

TEST(Fsample, StopAtFirstEndsScan) {
  const auto m = random_low_rank(10, 1, 18);
  CompletionConfig cfg;
  cfg.rank = 1;
  cfg.n_trials = 2;
  const auto all = find_fsample(m, cfg, {0.5, 0.8, 1.0});
  const auto first = find_fsample(m, cfg, {0.5, 0.8, 1.0}, true);
  ASSERT_TRUE(first.chosen.has_value());
  EXPECT_EQ(first.curve.size(), *first.chosen + 1);
  EXPECT_EQ(all.chosen, first.chosen);
  EXPECT_THROW(find_fsample(m, cfg, {1.0, 0.5}), Error);
}

}  // namespace
}  // namespace rdmc
