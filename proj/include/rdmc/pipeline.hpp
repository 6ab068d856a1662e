#pragma once

// Experiment drivers: toy bundle generation, the noiseless pipeline
// (rank -> rotation -> f_sample search -> completion -> post-processing) and
// the noisy pipeline (standard calibration -> planning -> measurement ->
// completion -> trace normalization), with JSON run reports.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rdmc/bundle.hpp"
#include "rdmc/coherence.hpp"
#include "rdmc/completion.hpp"
#include "rdmc/errors.hpp"
#include "rdmc/measurement.hpp"
#include "rdmc/postprocess.hpp"
#include "rdmc/rdm_core.hpp"
#include "rdmc/toy_oracle.hpp"

namespace rdmc {

/// Error raised inside a pipeline stage, tagged with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

template <class F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

// ---------------------------------------------------------------------------
// Toy bundles

struct ToySpec {
  ToyFamily family = ToyFamily::hubbard_chain;
  int n = 4;
  int n_alpha = 2;
  int n_beta = 2;
  double hopping = 1.0;
  double onsite = 4.0;
  std::uint64_t seed = 0;
  double model_scale = 0.8;
};

inline ToyHamiltonian toy_hamiltonian(const ToySpec& spec) {
  if (2 * spec.n > kMaxToySpinOrbitals)
    throw TooLarge("gen_toy: " + std::to_string(2 * spec.n) + " spin orbitals exceed the limit of " +
                   std::to_string(kMaxToySpinOrbitals));
  return spec.family == ToyFamily::hubbard_chain
             ? hubbard_chain(spec.n, spec.n_alpha, spec.n_beta, spec.hopping, spec.onsite)
             : random_two_body(spec.n, spec.n_alpha, spec.n_beta, spec.seed);
}

inline RdmBundle exact_bundle(const ToyHamiltonian& h, const std::string& producer) {
  const auto gs = ground_state(h);
  const auto rdms = exact_rdms(gs.psi, h.meta);
  RdmBundle b;
  b.meta = h.meta;
  b.basis_label = std::string("toy-") + std::string(to_string(h.family));
  b.producer = producer;
  b.rdm = rdms.two;
  b.one = rdms.one;
  b.ints = h.ints;
  return b;
}

struct ToyPair {
  RdmBundle model;
  RdmBundle target;
};

/// Target: exact ground-state RDMs; model: the same Hamiltonian with the interaction scaled.
inline ToyPair gen_toy(const ToySpec& spec) {
  const auto h = toy_hamiltonian(spec);
  ToyPair p;
  p.target = exact_bundle(h, "rdmc-toy-exact");
  if (spec.model_scale == 1.0) {
    p.model = p.target;
  } else {
    p.model = exact_bundle(scale_interaction(h, spec.model_scale), "rdmc-toy-scaled-model");
  }
  p.model.producer = "rdmc-toy-scaled-model";
  return p;
}

// ---------------------------------------------------------------------------
// Configuration and reports

struct PipelineConfig {
  double eps0 = 0.01;
  double kappa = kDefaultKappa;
  std::optional<Eigen::Index> rank;  // override for every sector
  std::uint64_t seed = 0;
  double switch_cost = 0.0;
  int trials = 10;
  int coherence_starts = 10;
  bool rotate = true;
  std::optional<std::vector<double>> fsample_grid;
  std::vector<double> plan_fractions{0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0};
  int calibration_refine_steps = 1;
  int plan_refine_steps = 3;
  double m_cap = 1e10;
};

inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json j{{"eps0", c.eps0},
                   {"kappa", c.kappa},
                   {"seed", c.seed},
                   {"switch_cost", c.switch_cost},
                   {"trials", c.trials},
                   {"coherence_starts", c.coherence_starts},
                   {"rotate", c.rotate},
                   {"plan_fractions", c.plan_fractions},
                   {"calibration_refine_steps", c.calibration_refine_steps},
                   {"plan_refine_steps", c.plan_refine_steps},
                   {"m_cap", c.m_cap},
                   {"lbfgs", {{"memory", 10}, {"line_search", "strong Wolfe, c1=1e-4, c2=0.9"},
                              {"max_iter", 15000}, {"grad_tol", 1e-8}}}};
  j["rank"] = c.rank ? nlohmann::json(*c.rank) : nlohmann::json(nullptr);
  if (c.fsample_grid) j["fsample_grid"] = *c.fsample_grid;
  return j;
}

/// Sectors that carry information: nonzero trace target and nonzero model.
inline std::vector<SpinSector> active_sectors(const SpinRDMSet& model) {
  std::vector<SpinSector> out;
  for (auto s : kAllSectors)
    if (trace_target(model.meta, s) > 0.0 && model.sector(s).data.norm() > 0.0) out.push_back(s);
  return out;
}

struct RotationStage {
  std::vector<SpinSector> sectors;
  std::vector<Eigen::Index> ranks;  // per active sector
  CoherenceOutcome coherence;
};

inline Eigen::Index sector_rank(const PackedRDM& model, const PipelineConfig& cfg) {
  if (cfg.rank) return std::clamp<Eigen::Index>(*cfg.rank, 1, model.dim());
  return select_rank(model, cfg.eps0, cfg.kappa);
}

/// Rank selection on the model and coherence minimization over all active sectors.
inline RotationStage rank_and_rotate(const SpinRDMSet& model, const PipelineConfig& cfg) {
  RotationStage st;
  st.sectors = active_sectors(model);
  if (st.sectors.empty()) throw Error("model has no nonzero sector");
  std::vector<SectorBasis> bases;
  run_stage("rank", [&] {
    for (auto s : st.sectors) {
      const Eigen::Index r = sector_rank(model.sector(s), cfg);
      st.ranks.push_back(r);
      bases.push_back({s, spectrum(model.sector(s)).U.leftCols(r)});
    }
  });
  run_stage("rotate", [&] {
    CoherenceOptions co;
    co.seed = derive_seed(cfg.seed, {0xC047});
    co.n_starts = cfg.rotate ? cfg.coherence_starts : 0;
    st.coherence = minimize_coherence(bases, model.meta.n, co);
  });
  return st;
}

struct StepStats {
  std::string step;
  std::array<double, 3> eps{};             // mean over converged trials per sector (NaN if inactive)
  std::array<double, 3> min_eigenvalue{};  // of the first converged trial
  std::vector<double> e2_error;            // signed, per usable trial
  double mean_abs_e2_error = std::numeric_limits<double>::quiet_NaN();
};

inline nlohmann::json to_json(const StepStats& s) {
  nlohmann::json j{{"step", s.step}};
  for (auto sec : kAllSectors) {
    const auto i = sector_index(sec);
    const auto key = std::string(to_string(sec));
    j["eps"][key] = std::isnan(s.eps[i]) ? nlohmann::json(nullptr) : nlohmann::json(s.eps[i]);
    j["min_eigenvalue"][key] =
        std::isnan(s.min_eigenvalue[i]) ? nlohmann::json(nullptr) : nlohmann::json(s.min_eigenvalue[i]);
  }
  if (!s.e2_error.empty()) {
    j["e2_error"] = s.e2_error;
    j["mean_abs_e2_error"] = s.mean_abs_e2_error;
  } else {
    j["e2_error"] = nullptr;
  }
  return j;
}

struct SectorSummary {
  SpinSector sector = SpinSector::abab;
  Eigen::Index d = 0;
  Eigen::Index r = 0;
  double mu_before = 0.0;
  double mu_after = 0.0;
  double f_sample = 1.0;
  std::size_t n_sample = 0;
  double model_eps = std::numeric_limits<double>::quiet_NaN();  // model completion error at the budget
  // noisy mode
  long long m0 = 0;
  long long m = 0;
  double standard_shots = 0.0;
  double planned_shots = 0.0;
  bool standard_fallback = false;
  std::vector<FsamplePoint> fsample_curve;
  std::vector<CalibrationPoint> calibration_curve;
  std::vector<PlanPoint> plan_curve;
};

struct RunReport {
  std::string mode;
  PipelineConfig config;
  SystemMeta meta;
  std::string model_hash;
  std::string target_hash;
  std::vector<SectorSummary> sectors;
  std::vector<RestartRecord> restarts;
  std::vector<StepStats> steps;
  std::optional<double> exact_e2;
  double f_m = std::numeric_limits<double>::quiet_NaN();
  int usable_trials = 0;
  double wall_seconds = 0.0;

  const StepStats& step(const std::string& name) const {
    for (const auto& s : steps)
      if (s.step == name) return s;
    throw Error("RunReport: no step named " + name);
  }
};

inline nlohmann::json to_json(const RunReport& r) {
  nlohmann::json j;
  j["mode"] = r.mode;
  j["config"] = to_json(r.config);
  j["meta"] = {{"n", r.meta.n}, {"N_alpha", r.meta.n_alpha}, {"N_beta", r.meta.n_beta}};
  j["inputs"] = {{"model_hash", r.model_hash}, {"target_hash", r.target_hash}};
  for (const auto& s : r.sectors) {
    nlohmann::json js{{"sector", std::string(to_string(s.sector))},
                      {"d", s.d},
                      {"r", s.r},
                      {"coherence_before", s.mu_before},
                      {"coherence_after", s.mu_after},
                      {"f_sample", s.f_sample},
                      {"n_sample", s.n_sample}};
    if (!std::isnan(s.model_eps)) js["model_eps"] = s.model_eps;
    if (r.mode == "noisy") {
      js["m0"] = s.m0;
      js["m"] = s.m;
      js["standard_shots"] = s.standard_shots;
      js["planned_shots"] = s.planned_shots;
      js["standard_fallback"] = s.standard_fallback;
      js["f_m"] = s.standard_shots > 0.0 ? s.planned_shots / s.standard_shots : 0.0;
    }
    j["sectors"].push_back(js);
  }
  for (const auto& rs : r.restarts)
    j["coherence_restarts"].push_back(
        {{"provenance", rs.provenance}, {"surrogate", rs.surrogate}, {"mu", rs.mu}, {"iterations", rs.iterations}});
  for (const auto& s : r.steps) j["steps"].push_back(to_json(s));
  j["exact_e2"] = r.exact_e2 ? nlohmann::json(*r.exact_e2) : nlohmann::json(nullptr);
  if (r.mode == "noisy") j["f_m"] = r.f_m;
  j["usable_trials"] = r.usable_trials;
  j["wall_seconds"] = r.wall_seconds;
  return j;
}

// ---------------------------------------------------------------------------
// Shared helpers

inline void require_same_meta(const RdmBundle& model, const RdmBundle& target) {
  if (!(model.meta == target.meta)) throw DimensionMismatch("model and target bundles describe different systems");
}

/// Aggregates per-trial full RDM sets (original basis) into step statistics.
struct StepAccumulator {
  std::string name;
  std::vector<std::optional<SpinRDMSet>> trials;  // nullopt = unusable trial
};

inline StepStats summarize(const StepAccumulator& acc, const SpinRDMSet& target_rotated_back,
                           const std::vector<SpinSector>& sectors, const std::optional<IntegralSet>& ints,
                           const std::vector<std::array<std::optional<double>, 3>>& min_eigs) {
  StepStats st;
  st.step = acc.name;
  st.eps.fill(std::numeric_limits<double>::quiet_NaN());
  st.min_eigenvalue.fill(std::numeric_limits<double>::quiet_NaN());
  std::array<int, 3> cnt{};
  std::array<double, 3> sum{};
  const double e2_exact = ints ? two_body_energy(target_rotated_back, *ints) : 0.0;
  double abs_sum = 0.0;
  for (std::size_t t = 0; t < acc.trials.size(); ++t) {
    if (!acc.trials[t]) continue;
    for (auto s : sectors) {
      const auto i = sector_index(s);
      sum[i] += rel_error(acc.trials[t]->sector(s), target_rotated_back.sector(s));
      ++cnt[i];
      if (std::isnan(st.min_eigenvalue[i]) && min_eigs[t][i]) st.min_eigenvalue[i] = *min_eigs[t][i];
    }
    if (ints) {
      const double err = two_body_energy(*acc.trials[t], *ints) - e2_exact;
      st.e2_error.push_back(err);
      abs_sum += std::abs(err);
    }
  }
  for (auto s : sectors) {
    const auto i = sector_index(s);
    if (cnt[i]) st.eps[i] = sum[i] / cnt[i];
  }
  if (!st.e2_error.empty()) st.mean_abs_e2_error = abs_sum / static_cast<double>(st.e2_error.size());
  return st;
}

// ---------------------------------------------------------------------------
// Noiseless pipeline

inline RunReport run_noiseless(const RdmBundle& model_b, const RdmBundle& target_b, const PipelineConfig& cfg,
                               std::string model_hash = {}, std::string target_hash = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  require_same_meta(model_b, target_b);
  RunReport rep;
  rep.mode = "noiseless";
  rep.config = cfg;
  rep.meta = target_b.meta;
  rep.model_hash = std::move(model_hash);
  rep.target_hash = std::move(target_hash);

  const auto rot = rank_and_rotate(model_b.rdm, cfg);
  const Eigen::MatrixXd& C = rot.coherence.basis.C;
  const SpinRDMSet model = rotate_rdm(model_b.rdm, C);
  const SpinRDMSet target = rotate_rdm(target_b.rdm, C);
  rep.restarts = rot.coherence.restarts;

  const std::vector<std::string> names{"completed", "restore-sampled", "normalize-trace", "model-correction"};
  std::vector<StepAccumulator> acc;
  for (const auto& nm : names) acc.push_back({nm, std::vector<std::optional<SpinRDMSet>>(cfg.trials, target)});
  std::vector<std::vector<std::array<std::optional<double>, 3>>> eigs(
      names.size(), std::vector<std::array<std::optional<double>, 3>>(cfg.trials));
  std::vector<bool> usable(static_cast<std::size_t>(cfg.trials), true);

  for (std::size_t si = 0; si < rot.sectors.size(); ++si) {
    const SpinSector s = rot.sectors[si];
    const Eigen::Index r = rot.ranks[si];
    const auto& pm = model.sector(s);
    const auto& pt = target.sector(s);
    SectorSummary sum;
    sum.sector = s;
    sum.d = pm.dim();
    sum.r = r;
    sum.mu_before = rot.coherence.mu_before[si];
    sum.mu_after = rot.coherence.mu_after[si];

    CompletionConfig cc;
    cc.rank = r;
    cc.eps0 = cfg.eps0;
    cc.kappa = cfg.kappa;
    cc.n_trials = cfg.trials;
    cc.seed = derive_seed(cfg.seed, {0xF5, sector_index(s)});
    cc.trace_hint = trace_target(pm.meta, s);
    const auto grid = cfg.fsample_grid ? *cfg.fsample_grid : default_fsample_grid(r, pm.dim());
    const auto search = run_stage("fsample:" + std::string(to_string(s)),
                                  [&] { return find_fsample(pm.data, cc, grid, true, s); });
    sum.fsample_curve = search.curve;
    const auto& best = run_stage("fsample:" + std::string(to_string(s)), [&]() -> const FsamplePoint& {
      return search.best();
    });
    sum.f_sample = best.f_sample;
    sum.n_sample = best.n_sample;
    sum.model_eps = best.mean_error;

    run_stage("complete:" + std::string(to_string(s)), [&] {
      for (int t = 0; t < cfg.trials; ++t) {
        const auto sample = sample_uniform(pm.dim(), best.n_sample, sampling_seed(cc.seed, best.n_sample, t), s);
        const auto model_res = complete(pm.data, sample, cc);
        const auto target_res = complete(pt.data, sample, cc);
        if (!model_res.converged || !target_res.converged) {
          usable[static_cast<std::size_t>(t)] = false;
          continue;
        }
        SectorPostprocessInput in{{s, pm.meta, target_res.completed}, pt, sample, &pm, &model_res.completed, &sample};
        const auto stages = postprocess(in, PostprocessConfig{});
        acc[0].trials[t]->sector(s).data = target_res.completed;
        eigs[0][t][sector_index(s)] = min_eigenvalue(target_res.completed);
        for (std::size_t k = 0; k < stages.size(); ++k) {
          acc[k + 1].trials[t]->sector(s).data = stages[k].result.data;
          eigs[k + 1][t][sector_index(s)] = stages[k].min_eigenvalue;
        }
      }
    });
    rep.sectors.push_back(std::move(sum));
  }

  const Eigen::MatrixXd Ct = C.transpose();
  const SpinRDMSet target_back = target_b.rdm;
  for (int t = 0; t < cfg.trials; ++t) {
    for (auto& a : acc) {
      if (!usable[static_cast<std::size_t>(t)])
        a.trials[t].reset();
      else
        a.trials[t] = rotate_rdm(*a.trials[t], Ct);
    }
    rep.usable_trials += usable[static_cast<std::size_t>(t)];
  }
  if (target_b.ints) rep.exact_e2 = two_body_energy(target_back, *target_b.ints);
  for (std::size_t k = 0; k < acc.size(); ++k)
    rep.steps.push_back(summarize(acc[k], target_back, rot.sectors, target_b.ints, eigs[k]));
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// ---------------------------------------------------------------------------
// Noisy pipeline

inline RunReport run_noisy(const RdmBundle& model_b, const RdmBundle& target_b, const PipelineConfig& cfg,
                           std::string model_hash = {}, std::string target_hash = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  require_same_meta(model_b, target_b);
  RunReport rep;
  rep.mode = "noisy";
  rep.config = cfg;
  rep.meta = target_b.meta;
  rep.model_hash = std::move(model_hash);
  rep.target_hash = std::move(target_hash);

  const auto rot = rank_and_rotate(model_b.rdm, cfg);
  const Eigen::MatrixXd& C = rot.coherence.basis.C;
  const SpinRDMSet model = rotate_rdm(model_b.rdm, C);
  const SpinRDMSet target = rotate_rdm(target_b.rdm, C);
  const OneRDM model_one = rotate_1rdm(model_b.one_rdm(), C);
  const OneRDM target_one = rotate_1rdm(target_b.one_rdm(), C);
  rep.restarts = rot.coherence.restarts;

  std::vector<StepAccumulator> acc{{"measured", std::vector<std::optional<SpinRDMSet>>(cfg.trials, target)},
                                   {"normalize-trace", std::vector<std::optional<SpinRDMSet>>(cfg.trials, target)}};
  std::vector<std::vector<std::array<std::optional<double>, 3>>> eigs(
      2, std::vector<std::array<std::optional<double>, 3>>(cfg.trials));
  std::vector<bool> usable(static_cast<std::size_t>(cfg.trials), true);
  double standard_total = 0.0, planned_total = 0.0;

  for (std::size_t si = 0; si < rot.sectors.size(); ++si) {
    const SpinSector s = rot.sectors[si];
    const std::string tag = std::string(to_string(s));
    const Eigen::Index r = rot.ranks[si];
    const auto& pm = model.sector(s);
    const auto& pt = target.sector(s);
    SectorSummary sum;
    sum.sector = s;
    sum.d = pm.dim();
    sum.r = r;
    sum.mu_before = rot.coherence.mu_before[si];
    sum.mu_after = rot.coherence.mu_after[si];
    const auto lay = run_stage("layout:" + tag, [&] { return make_sector_layout(s, pm.meta.n); });

    CalibrationOptions co;
    co.n_trials = cfg.trials;
    co.refine_steps = cfg.calibration_refine_steps;
    co.m_cap = cfg.m_cap;
    co.seed = derive_seed(cfg.seed, {0xCA1, sector_index(s)});
    const auto cal = run_stage("calibrate:" + tag, [&] { return calibrate_standard(lay, pt.data, &target_one, cfg.eps0, co); });
    sum.m0 = cal.m0;
    sum.standard_shots = cal.total_shots;
    sum.calibration_curve = cal.curve;

    PlanOptions po;
    po.fractions = cfg.plan_fractions;
    po.n_trials = cfg.trials;
    po.refine_steps = cfg.plan_refine_steps;
    po.m_cap = cfg.m_cap;
    po.seed = derive_seed(cfg.seed, {0x91A, sector_index(s)});
    po.m_standard = cal.m0;
    po.completion.trace_hint = trace_target(pm.meta, s);
    const auto plan = run_stage("plan:" + tag, [&] {
      return plan_noisy(lay, pm.data, &model_one, r, cfg.eps0, cfg.switch_cost, po);
    });
    sum.plan_curve = plan.curve;
    sum.m = plan.budget.m_per_string;
    sum.standard_fallback = plan.standard_fallback;

    CompletionConfig cc = po.completion;
    cc.rank = r;
    double shots = 0.0, fsum = 0.0;
    run_stage("measure:" + tag, [&] {
      for (int t = 0; t < cfg.trials; ++t) {
        const auto groups = plan.n_groups == lay.groups.size()
                                ? all_groups(lay)
                                : sample_groups(lay.groups.size(), plan.n_groups,
                                                group_sampling_seed(derive_seed(cfg.seed, {0xE5, sector_index(s)}),
                                                                    plan.n_groups, t));
        const auto obs = observe(lay, pt.data, &target_one, groups, plan.budget.m_per_string,
                                 derive_seed(cfg.seed, {0xE6, sector_index(s), static_cast<std::uint64_t>(t)}));
        shots += obs.total_shots / cfg.trials;
        fsum += obs.sample.f_sample() / cfg.trials;
        Eigen::MatrixXd recon = obs.observed;
        if (!plan.standard_fallback) {
          cc.seed = derive_seed(cfg.seed, {0xE7, sector_index(s), static_cast<std::uint64_t>(t)});
          const auto res = complete(obs.observed, obs.sample, cc);
          if (!res.converged) {
            usable[static_cast<std::size_t>(t)] = false;
            continue;
          }
          recon = res.completed;
        }
        const PackedRDM measured{s, pm.meta, recon};
        const PackedRDM normalized = normalize_trace(measured);
        acc[0].trials[t]->sector(s) = measured;
        acc[1].trials[t]->sector(s) = normalized;
        eigs[0][t][sector_index(s)] = min_eigenvalue(measured.data);
        eigs[1][t][sector_index(s)] = min_eigenvalue(normalized.data);
      }
    });
    sum.planned_shots = shots;
    sum.f_sample = fsum;
    sum.n_sample = static_cast<std::size_t>(std::llround(fsum * static_cast<double>(unique_count(sum.d))));
    standard_total += sum.standard_shots;
    planned_total += sum.planned_shots;
    rep.sectors.push_back(std::move(sum));
  }

  const Eigen::MatrixXd Ct = C.transpose();
  for (int t = 0; t < cfg.trials; ++t) {
    for (auto& a : acc) {
      if (!usable[static_cast<std::size_t>(t)])
        a.trials[t].reset();
      else
        a.trials[t] = rotate_rdm(*a.trials[t], Ct);
    }
    rep.usable_trials += usable[static_cast<std::size_t>(t)];
  }
  if (target_b.ints) rep.exact_e2 = two_body_energy(target_b.rdm, *target_b.ints);
  for (std::size_t k = 0; k < acc.size(); ++k)
    rep.steps.push_back(summarize(acc[k], target_b.rdm, rot.sectors, target_b.ints, eigs[k]));
  rep.f_m = standard_total > 0.0 ? planned_total / standard_total : std::numeric_limits<double>::quiet_NaN();
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// ---------------------------------------------------------------------------
// Output helpers

/// Writes text atomically (temporary file in the same directory, then rename).
inline void write_text_atomic(const std::filesystem::path& file, const std::string& text) {
  namespace fs = std::filesystem;
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw Error("cannot write " + tmp.string());
    os << text;
    if (!os) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, file);
}

/// Comma-separated table with a header row.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  template <class... Ts>
  void row(const Ts&... cells) {
    std::vector<std::string> r;
    (r.push_back(cell(cells)), ...);
    if (r.size() != header_.size()) throw Error("CsvTable: row width differs from header");
    rows_.push_back(std::move(r));
  }

  std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
      out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
  }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(std::string_view s) { return std::string(s); }
  template <class T>
  static std::string cell(const T& v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline CsvTable fsample_table(const RunReport& rep) {
  CsvTable t({"sector", "f_requested", "f_sample", "n_sample", "mean_error", "std_error", "success_fraction",
              "n_converged"});
  for (const auto& s : rep.sectors)
    for (const auto& p : s.fsample_curve)
      t.row(to_string(s.sector), p.f_requested, p.f_sample, p.n_sample, p.mean_error, p.std_error,
            p.success_fraction, p.n_converged);
  return t;
}

inline CsvTable plan_table(const RunReport& rep) {
  CsvTable t({"sector", "fraction", "m", "f_sample", "mean_strings", "mean_error", "std_error", "n_converged",
              "feasible"});
  for (const auto& s : rep.sectors)
    for (const auto& p : s.plan_curve)
      t.row(to_string(s.sector), p.fraction, p.m, p.f_sample, p.mean_strings, p.mean_eps, p.std_eps,
            p.n_converged, p.feasible ? 1 : 0);
  return t;
}

inline CsvTable calibration_table(const RunReport& rep) {
  CsvTable t({"sector", "m", "mean_error", "std_error"});
  for (const auto& s : rep.sectors)
    for (const auto& p : s.calibration_curve) t.row(to_string(s.sector), p.m, p.mean_eps, p.std_eps);
  return t;
}

}  // namespace rdmc
