#include <gtest/gtest.h>

#include "rdmc/postprocess.hpp"
#include "rdmc/toy_oracle.hpp"

namespace rdmc {
namespace {

PackedRDM exact_abab() {
  const auto h = hubbard_chain(3, 1, 1, 1.0, 2.0);
  return exact_rdms(ground_state(h).psi, h.meta).two.abab;
}

TEST(Restore, OverwritesOnlySampledPositions) {
  const Eigen::MatrixXd observed = Eigen::MatrixXd::Constant(3, 3, 7.0);
  const Eigen::MatrixXd completed = Eigen::MatrixXd::Zero(3, 3);
  SampleSet s{SpinSector::abab, 3, {{1, 0}, {2, 2}}, 0};
  const auto out = restore_sampled(completed, observed, s);
  Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(3, 3);
  expect(1, 0) = expect(0, 1) = expect(2, 2) = 7.0;
  EXPECT_TRUE((out.array() == expect.array()).all());
}

TEST(Restore, RejectedForNoisyData) {
  const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_THROW(restore_sampled(m, m, SampleSet::full(2), MeasurementMode::noisy), ModeMismatch);
  EXPECT_THROW(restore_sampled(m, Eigen::MatrixXd::Identity(3, 3), SampleSet::full(2)), DimensionMismatch);
}

TEST(Normalize, HitsParticleNumberTarget) {
  auto p = exact_abab();
  p.data *= 1.3;
  const auto q = normalize_trace(p);
  EXPECT_NEAR(trace(q), 1.0, 1e-14);  // N_alpha N_beta
  EXPECT_LT(max_abs(q.data - p.data / 1.3), 1e-14);
}

TEST(Normalize, ZeroTraceRaisesAndEmptySectorPasses) {
  EXPECT_THROW(normalize_trace(PackedRDM::zeros(SpinSector::abab, {3, 1, 1})), ZeroTrace);
  const auto empty = PackedRDM::zeros(SpinSector::aaaa, {3, 1, 1});
  EXPECT_NO_THROW(normalize_trace(empty));
}

TEST(ModelCorrection, AddsModelResidual) {
  const Eigen::MatrixXd t = Eigen::MatrixXd::Constant(2, 2, 1.0);
  const Eigen::MatrixXd m = Eigen::MatrixXd::Constant(2, 2, 3.0);
  const Eigen::MatrixXd cm = Eigen::MatrixXd::Constant(2, 2, 2.5);
  const auto s = SampleSet::full(2);
  EXPECT_TRUE((model_correction(t, m, cm, s, s).array() == 1.5).all());
  auto other = s;
  other.seed = 9;
  EXPECT_THROW(model_correction(t, m, cm, s, other), SampleSetMismatch);
}

TEST(ModelCorrection, ExactWhenTargetEqualsModel) {
  const auto p = exact_abab();
  const Eigen::MatrixXd completed = p.data * 0.9;
  const auto s = sample_uniform(p.dim(), 10, 3);
  EXPECT_LT(max_abs(model_correction(completed, p.data, completed, s, s) - p.data), 1e-15);
}

TEST(Chain, OrderIsValidated) {
  PostprocessConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.steps = {PostprocessStep::normalize_trace, PostprocessStep::restore_sampled};
  EXPECT_THROW(cfg.validate(), Error);
  cfg.steps = {PostprocessStep::normalize_trace, PostprocessStep::normalize_trace};
  EXPECT_THROW(cfg.validate(), Error);
  cfg.steps = {PostprocessStep::restore_sampled};
  cfg.mode = MeasurementMode::noisy;
  EXPECT_THROW(cfg.validate(), ModeMismatch);
  cfg.steps = {PostprocessStep::normalize_trace};
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Chain, ReportsEveryStage) {
  const auto p = exact_abab();
  const auto s = sample_uniform(p.dim(), 20, 4);
  const Eigen::MatrixXd completed = 0.8 * p.data;
  SectorPostprocessInput in{{p.sector, p.meta, completed}, p, s, &p, &completed, &s};
  const auto stages = postprocess(in, {});
  ASSERT_EQ(stages.size(), 3u);
  EXPECT_EQ(stages[0].step, PostprocessStep::restore_sampled);
  for (const auto& [i, j] : s.indices) EXPECT_EQ(stages[0].result.data(i, j), p.data(i, j));
  EXPECT_NEAR(trace(stages[1].result), 1.0, 1e-12);
  EXPECT_NEAR(stages[2].min_eigenvalue, min_eigenvalue(stages[2].result.data), 0.0);
  SectorPostprocessInput missing = in;
  missing.model = nullptr;
  EXPECT_THROW(postprocess(missing, {}), Error);
}

TEST(Chain, CorrectionIsExactWhenTargetEqualsModel) {
  const auto p = exact_abab();
  const auto s = sample_uniform(p.dim(), 12, 5);
  const Eigen::MatrixXd completed = 0.7 * p.data + 0.01 * Eigen::MatrixXd::Ones(p.dim(), p.dim());
  SectorPostprocessInput in{{p.sector, p.meta, completed}, p, s, &p, &completed, &s};
  const auto stages = postprocess(in, {});
  EXPECT_LT(max_abs(stages.back().result.data - p.data), 1e-14);
}

}  // namespace
}  // namespace rdmc
