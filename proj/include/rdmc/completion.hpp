#pragma once

// Low-rank positive semidefinite completion: minimize
//   sum_{(i,j) in Omega} ((L^T L)_ij - M_ij)^2
// over an r x d factor L, so the completion L^T L is PSD with rank <= r.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rdmc/errors.hpp"
#include "rdmc/lbfgs.hpp"
#include "rdmc/rdm_core.hpp"
#include "rdmc/rng.hpp"

namespace rdmc {

using Position = std::pair<Eigen::Index, Eigen::Index>;  // (row, col), row >= col

inline std::size_t unique_count(Eigen::Index d) {
  return static_cast<std::size_t>(d) * static_cast<std::size_t>(d + 1) / 2;
}

/// Lower-triangle position of linear index idx (row-major, diagonal included).
inline Position lower_position(std::size_t idx) {
  auto row = static_cast<Eigen::Index>((std::sqrt(8.0 * static_cast<double>(idx) + 1.0) - 1.0) / 2.0);
  while (unique_count(row) > idx) --row;
  while (unique_count(row + 1) <= idx) ++row;
  return {row, static_cast<Eigen::Index>(idx - unique_count(row))};
}

struct SampleSet {
  SpinSector sector = SpinSector::abab;
  Eigen::Index d = 0;
  std::vector<Position> indices;  // sorted, unique, row >= col
  std::uint64_t seed = 0;

  std::size_t n_sample() const { return indices.size(); }
  double f_sample() const {
    return d == 0 ? 0.0 : static_cast<double>(indices.size()) / static_cast<double>(unique_count(d));
  }

  void normalize() {
    for (auto& [r, c] : indices)
      if (r < c) std::swap(r, c);
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  }

  static SampleSet full(Eigen::Index d, SpinSector s = SpinSector::abab) {
    SampleSet out{s, d, {}, 0};
    out.indices.reserve(unique_count(d));
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c <= r; ++c) out.indices.emplace_back(r, c);
    return out;
  }

  bool operator==(const SampleSet&) const = default;
};

/// Uniform sample of n_sample unique positions without replacement.
inline SampleSet sample_uniform(Eigen::Index d, std::size_t n_sample, std::uint64_t seed,
                                SpinSector sector = SpinSector::abab) {
  const auto total = unique_count(d);
  if (n_sample < 1 || n_sample > total)
    throw BudgetExceedsUnique("sample_uniform: requested " + std::to_string(n_sample) + " of " +
                              std::to_string(total) + " unique elements");
  std::vector<std::size_t> all(total);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> picked;
  picked.reserve(n_sample);
  auto rng = make_rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), static_cast<std::ptrdiff_t>(n_sample), rng);
  SampleSet out{sector, d, {}, seed};
  out.indices.reserve(n_sample);
  for (auto idx : picked) out.indices.push_back(lower_position(idx));
  out.normalize();
  return out;
}

/// Degrees of freedom of a rank-r symmetric d x d matrix relative to a full one.
inline double info_bound(Eigen::Index r, Eigen::Index d) {
  if (r < 1 || r > d) throw Error("info_bound: need 1 <= r <= d");
  const double rr = static_cast<double>(r), dd = static_cast<double>(d);
  return (2.0 * rr * dd - rr * rr + rr) / (dd * (dd + 1.0));
}

struct CompletionConfig {
  Eigen::Index rank = 1;
  double eps0 = 0.01;
  double kappa = kDefaultKappa;
  int max_iter = 15000;
  double grad_tol = 1e-8;
  int memory = 10;
  int n_trials = 10;
  double success_quorum = 0.9;
  std::uint64_t seed = 0;
  std::optional<double> trace_hint;  // expected Tr M, scales the initial factor

  void validate() const {
    if (rank < 1) throw Error("CompletionConfig: rank must be >= 1");
    if (!(eps0 > 0.0) || !(kappa > 0.0) || max_iter < 1 || !(grad_tol > 0.0) || n_trials < 1)
      throw Error("CompletionConfig: parameters must be positive");
    if (!(success_quorum > 0.0 && success_quorum <= 1.0))
      throw Error("CompletionConfig: success_quorum must lie in (0, 1]");
  }
};

struct LowRankFactor {
  Eigen::MatrixXd L;  // r x d

  Eigen::Index rank() const { return L.rows(); }
  Eigen::MatrixXd completed() const { return L.transpose() * L; }
};

/// Sum of squared residuals on the sample; writes dF/dL into grad when given.
inline double completion_objective(const Eigen::MatrixXd& L, const Eigen::MatrixXd& observed,
                                   const SampleSet& sample, Eigen::MatrixXd* grad = nullptr) {
  double f = 0.0;
  if (grad) grad->setZero(L.rows(), L.cols());
  for (const auto& [i, j] : sample.indices) {
    const double res = L.col(i).dot(L.col(j)) - observed(i, j);
    f += res * res;
    if (!grad) continue;
    if (i == j) {
      grad->col(i) += 4.0 * res * L.col(i);
    } else {
      grad->col(i) += 2.0 * res * L.col(j);
      grad->col(j) += 2.0 * res * L.col(i);
    }
  }
  return f;
}

struct CompletionResult {
  LowRankFactor factor;
  Eigen::MatrixXd completed;
  bool converged = false;
  LbfgsStatus status = LbfgsStatus::max_iter;
  int iterations = 0;
  double final_objective = 0.0;
  double grad_norm = 0.0;
  std::vector<double> objective_trace;
};

/// Trace estimate used to scale the random initial factor.
inline double initial_trace(const Eigen::MatrixXd& observed, const SampleSet& sample,
                            const std::optional<double>& hint) {
  if (hint && *hint > 0.0) return *hint;
  double diag = 0.0, sq = 0.0;
  std::size_t n_diag = 0;
  for (const auto& [i, j] : sample.indices) {
    sq += observed(i, j) * observed(i, j);
    if (i == j) {
      diag += observed(i, i);
      ++n_diag;
    }
  }
  const auto d = static_cast<double>(sample.d);
  if (n_diag > 0 && diag > 0.0) return diag / static_cast<double>(n_diag) * d;
  const double rms = sample.n_sample() ? std::sqrt(sq / static_cast<double>(sample.n_sample())) : 0.0;
  return rms > 0.0 ? rms * d : d;
}

inline CompletionResult complete(const Eigen::MatrixXd& observed, const SampleSet& sample,
                                 const CompletionConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = observed.rows();
  if (observed.cols() != d || sample.d != d) throw DimensionMismatch("complete: sample and matrix sizes differ");
  if (cfg.rank > d) throw DimensionMismatch("complete: rank exceeds dimension");
  if (sample.indices.empty()) throw Error("complete: empty sample set");
  const Eigen::Index r = cfg.rank;

  // i.i.d. Gaussian start with E[Tr L^T L] equal to the trace estimate.
  const double tr = initial_trace(observed, sample, cfg.trace_hint);
  const double sigma = std::sqrt(std::abs(tr) / static_cast<double>(r * d));
  auto rng = make_rng(cfg.seed, {0xC0, static_cast<std::uint64_t>(sample.n_sample()),
                                 static_cast<std::uint64_t>(sample.seed)});
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd x0(r * d);
  for (Eigen::Index i = 0; i < x0.size(); ++i) x0(i) = sigma * gauss(rng);

  Eigen::MatrixXd grad(r, d);
  auto fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const Eigen::Map<const Eigen::MatrixXd> L(x.data(), r, d);
    const double f = completion_objective(L, observed, sample, &grad);
    g = Eigen::Map<const Eigen::VectorXd>(grad.data(), grad.size());
    return f;
  };
  LbfgsOptions opt;
  opt.memory = cfg.memory;
  opt.max_iter = cfg.max_iter;
  opt.grad_tol = cfg.grad_tol;
  auto res = lbfgs_minimize(fn, std::move(x0), opt);
  if (res.status == LbfgsStatus::non_finite || !std::isfinite(res.f))
    throw NonFiniteObjective("complete: objective became non-finite");

  CompletionResult out;
  out.factor.L = Eigen::Map<const Eigen::MatrixXd>(res.x.data(), r, d);
  out.completed = out.factor.completed();
  out.converged = res.converged();
  out.status = res.status;
  out.iterations = res.iterations;
  out.final_objective = res.f;
  out.grad_norm = res.grad_norm;
  out.objective_trace = std::move(res.trace);
  return out;
}

// ---------------------------------------------------------------------------
// Sample-budget search on a model matrix

struct FsampleTrial {
  std::uint64_t sample_seed = 0;
  double error = 0.0;
  bool converged = false;
};

struct FsamplePoint {
  double f_requested = 0.0;
  double f_sample = 0.0;  // realized N_sample / unique count
  std::size_t n_sample = 0;
  double mean_error = std::numeric_limits<double>::quiet_NaN();  // over converged trials
  double std_error = std::numeric_limits<double>::quiet_NaN();
  double success_fraction = 0.0;  // trials with error <= eps0
  int n_converged = 0;
  std::vector<FsampleTrial> trials;
};

struct FsampleSearch {
  std::optional<std::size_t> chosen;  // index into curve
  std::vector<FsamplePoint> curve;

  const FsamplePoint& best() const {
    if (!chosen) throw NoFeasiblePoint("find_fsample: no feasible grid point");
    return curve[*chosen];
  }
};

/// Geometric grid from 0.5x to 8x the information bound (12 points), clipped at 1, plus 1.
inline std::vector<double> default_fsample_grid(Eigen::Index r, Eigen::Index d) {
  const double ib = info_bound(r, d);
  std::vector<double> grid;
  for (int i = 0; i < 12; ++i) {
    const double f = ib * 0.5 * std::pow(16.0, static_cast<double>(i) / 11.0);
    if (f < 1.0) grid.push_back(f);
  }
  grid.push_back(1.0);
  return grid;
}

inline std::size_t samples_for_fraction(double f, Eigen::Index d) {
  const auto total = unique_count(d);
  const auto n = static_cast<std::size_t>(std::llround(f * static_cast<double>(total)));
  return std::clamp<std::size_t>(n, 1, total);
}

/// Seed of sampling `trial` at budget n_sample; shared between model and target completions.
inline std::uint64_t sampling_seed(std::uint64_t seed, std::size_t n_sample, int trial) {
  return derive_seed(seed, {0x5A, static_cast<std::uint64_t>(n_sample), static_cast<std::uint64_t>(trial)});
}

/// Error-vs-f_sample curve of completing `model` from its own sampled elements.
/// With stop_at_first, scanning ends at the first grid point meeting the quorum.
inline FsampleSearch find_fsample(const Eigen::MatrixXd& model, const CompletionConfig& cfg,
                                  const std::vector<double>& grid, bool stop_at_first = false,
                                  SpinSector sector = SpinSector::abab) {
  cfg.validate();
  if (!std::is_sorted(grid.begin(), grid.end())) throw Error("find_fsample: grid must be ascending");
  const Eigen::Index d = model.rows();
  FsampleSearch out;
  for (double f : grid) {
    FsamplePoint pt;
    pt.f_requested = f;
    pt.n_sample = samples_for_fraction(f, d);
    pt.f_sample = static_cast<double>(pt.n_sample) / static_cast<double>(unique_count(d));
    int successes = 0;
    double sum = 0.0, sum2 = 0.0;
    for (int t = 0; t < cfg.n_trials; ++t) {
      const auto seed = sampling_seed(cfg.seed, pt.n_sample, t);
      const auto sample = sample_uniform(d, pt.n_sample, seed, sector);
      const auto res = complete(model, sample, cfg);
      const double err = rel_error(res.completed, model);
      pt.trials.push_back({seed, err, res.converged});
      if (err <= cfg.eps0) ++successes;
      if (res.converged) {
        ++pt.n_converged;
        sum += err;
        sum2 += err * err;
      }
    }
    pt.success_fraction = static_cast<double>(successes) / cfg.n_trials;
    if (pt.n_converged > 0) {
      pt.mean_error = sum / pt.n_converged;
      pt.std_error = std::sqrt(std::max(0.0, sum2 / pt.n_converged - pt.mean_error * pt.mean_error));
    }
    out.curve.push_back(std::move(pt));
    if (!out.chosen && out.curve.back().success_fraction >= cfg.success_quorum) {
      out.chosen = out.curve.size() - 1;
      if (stop_at_first) break;
    }
  }
  return out;
}

}  // namespace rdmc
