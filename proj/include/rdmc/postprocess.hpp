#pragma once

// Post-processing of completed 2-RDMs: restore sampled elements, normalize
// sector traces, and add the model's completion residual.

#include <Eigen/Dense>

#include <algorithm>
#include <string>
#include <vector>

#include "rdmc/completion.hpp"
#include "rdmc/errors.hpp"
#include "rdmc/rdm_core.hpp"

namespace rdmc {

enum class PostprocessStep { restore_sampled, normalize_trace, model_correction };
enum class MeasurementMode { noiseless, noisy };

inline std::string_view to_string(PostprocessStep s) {
  switch (s) {
    case PostprocessStep::restore_sampled: return "restore-sampled";
    case PostprocessStep::normalize_trace: return "normalize-trace";
    default: return "model-correction";
  }
}

/// Overwrites the sampled positions of `completed` with the observed values.
inline Eigen::MatrixXd restore_sampled(const Eigen::MatrixXd& completed, const Eigen::MatrixXd& observed,
                                       const SampleSet& sample, MeasurementMode mode = MeasurementMode::noiseless) {
  if (mode != MeasurementMode::noiseless)
    throw ModeMismatch("restore_sampled: only valid when observed values are exact");
  if (completed.rows() != observed.rows() || completed.cols() != observed.cols() || sample.d != completed.rows())
    throw DimensionMismatch("restore_sampled: matrix sizes differ");
  Eigen::MatrixXd out = completed;
  for (const auto& [i, j] : sample.indices) out(i, j) = out(j, i) = observed(i, j);
  return out;
}

inline PackedRDM restore_sampled(const PackedRDM& completed, const PackedRDM& observed, const SampleSet& sample,
                                 MeasurementMode mode = MeasurementMode::noiseless) {
  return {completed.sector, completed.meta, restore_sampled(completed.data, observed.data, sample, mode)};
}

/// Scales each sector so its trace equals the particle-number target.
inline PackedRDM normalize_trace(const PackedRDM& p) {
  const double target = trace_target(p.meta, p.sector);
  const double tr = trace(p);
  if (target == 0.0) return p;
  if (tr == 0.0 || !std::isfinite(tr))
    throw ZeroTrace("normalize_trace: sector " + std::string(to_string(p.sector)) + " has zero trace");
  return {p.sector, p.meta, p.data * (target / tr)};
}

inline SpinRDMSet normalize_trace(const SpinRDMSet& p) {
  return {p.meta, normalize_trace(p.aaaa), normalize_trace(p.bbbb), normalize_trace(p.abab)};
}

/// completed_target + (P_M - completed_model); both completions must share their sample set.
inline Eigen::MatrixXd model_correction(const Eigen::MatrixXd& completed_target, const Eigen::MatrixXd& model,
                                        const Eigen::MatrixXd& completed_model, const SampleSet& target_sample,
                                        const SampleSet& model_sample) {
  if (!(target_sample == model_sample))
    throw SampleSetMismatch("model_correction: target and model were completed from different samples");
  if (completed_target.rows() != model.rows() || completed_model.rows() != model.rows())
    throw DimensionMismatch("model_correction: matrix sizes differ");
  return completed_target + (model - completed_model);
}

struct PostprocessConfig {
  std::vector<PostprocessStep> steps{PostprocessStep::restore_sampled, PostprocessStep::normalize_trace,
                                     PostprocessStep::model_correction};
  MeasurementMode mode = MeasurementMode::noiseless;

  void validate() const {
    for (std::size_t i = 1; i < steps.size(); ++i)
      if (static_cast<int>(steps[i]) <= static_cast<int>(steps[i - 1]))
        throw Error("PostprocessConfig: steps must follow restore, normalize, correct order without repeats");
    if (mode == MeasurementMode::noisy)
      for (auto s : steps)
        if (s != PostprocessStep::normalize_trace)
          throw ModeMismatch("PostprocessConfig: only trace normalization applies to noisy data");
  }
  bool has(PostprocessStep s) const { return std::find(steps.begin(), steps.end(), s) != steps.end(); }
};

/// Inputs of one sector for the configured post-processing chain.
struct SectorPostprocessInput {
  PackedRDM completed;
  PackedRDM observed;  // exact or measured values on the sample
  SampleSet sample;
  const PackedRDM* model = nullptr;            // P_M
  const Eigen::MatrixXd* completed_model = nullptr;
  const SampleSet* model_sample = nullptr;
};

struct PostprocessStage {
  PostprocessStep step;
  PackedRDM result;
  double min_eigenvalue = 0.0;
};

inline double min_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

/// Applies the configured steps in order; reports every intermediate result.
inline std::vector<PostprocessStage> postprocess(const SectorPostprocessInput& in, const PostprocessConfig& cfg) {
  cfg.validate();
  const bool correct = cfg.has(PostprocessStep::model_correction);
  if (correct && (!in.model || !in.completed_model || !in.model_sample))
    throw Error("postprocess: model correction needs the model and its completion");
  std::vector<PostprocessStage> out;
  PackedRDM cur = in.completed;
  // the model completion passes through the same steps so the correction compares like with like
  PackedRDM cur_model = correct ? PackedRDM{in.model->sector, in.model->meta, *in.completed_model} : cur;
  for (auto step : cfg.steps) {
    switch (step) {
      case PostprocessStep::restore_sampled:
        cur = restore_sampled(cur, in.observed, in.sample, cfg.mode);
        if (correct) cur_model = restore_sampled(cur_model, *in.model, *in.model_sample, cfg.mode);
        break;
      case PostprocessStep::normalize_trace:
        cur = normalize_trace(cur);
        if (correct) cur_model = normalize_trace(cur_model);
        break;
      case PostprocessStep::model_correction:
        cur.data = model_correction(cur.data, in.model->data, cur_model.data, in.sample, *in.model_sample);
        break;
    }
    out.push_back({step, cur, min_eigenvalue(cur.data)});
  }
  return out;
}

}  // namespace rdmc
