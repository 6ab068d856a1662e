// Command-line driver: toy bundle generation, spectra, rotations, planning,
// noiseless and noisy pipeline runs, and report summaries.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "rdmc/bundle.hpp"
#include "rdmc/coherence.hpp"
#include "rdmc/completion.hpp"
#include "rdmc/measurement.hpp"
#include "rdmc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace rdmc;

namespace {

struct CommonFlags {
  double eps0 = 0.01;
  double kappa = kDefaultKappa;
  std::optional<long long> rank;
  std::uint64_t seed = 0;
  double switch_cost = 0.0;
  int trials = 10;
  std::string out = "rdmc-out";

  PipelineConfig config() const {
    PipelineConfig c;
    c.eps0 = eps0;
    c.kappa = kappa;
    if (rank) c.rank = static_cast<Eigen::Index>(*rank);
    c.seed = seed;
    c.switch_cost = switch_cost;
    c.trials = trials;
    return c;
  }
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--eps0", f.eps0, "Target relative error")->capture_default_str();
  app->add_option("--kappa", f.kappa, "Truncation safety factor for rank selection")->capture_default_str();
  app->add_option("--rank", f.rank, "Override the selected rank in every sector");
  app->add_option("--seed", f.seed, "Root seed")->capture_default_str();
  app->add_option("--switch-cost", f.switch_cost, "Cost of one measurement setting in shot units")
      ->capture_default_str();
  app->add_option("--trials", f.trials, "Trials per evaluated point")->capture_default_str();
  app->add_option("--out", f.out, "Output directory")->capture_default_str();
}

struct LoadedBundle {
  RdmBundle bundle;
  std::string hash;
};

LoadedBundle load(const std::string& dir) {
  return run_stage("load", [&] { return LoadedBundle{load_bundle(dir), hex64(bundle_hash(dir))}; });
}

void write_json(const fs::path& file, const nlohmann::json& j) { write_text_atomic(file, j.dump(2) + "\n"); }

// --- gen -------------------------------------------------------------------

void cmd_gen(const CommonFlags& f, const std::string& family, int sites, int na, int nb, double t, double u,
             double scale) {
  ToySpec spec;
  if (family == "hubbard")
    spec.family = ToyFamily::hubbard_chain;
  else if (family == "random")
    spec.family = ToyFamily::random_two_body;
  else
    throw StageError("gen", "unknown family '" + family + "' (expected hubbard or random)");
  spec.n = sites;
  spec.n_alpha = na;
  spec.n_beta = nb;
  spec.hopping = t;
  spec.onsite = u;
  spec.seed = f.seed;
  spec.model_scale = scale;
  const auto pair = run_stage("gen", [&] { return gen_toy(spec); });
  const fs::path out(f.out);
  run_stage("write", [&] {
    save_bundle(pair.model, out / "model");
    save_bundle(pair.target, out / "target");
  });
  std::cout << "model  " << (out / "model").string() << "  " << hex64(bundle_hash(out / "model")) << "\n"
            << "target " << (out / "target").string() << "  " << hex64(bundle_hash(out / "target")) << "\n";
}

// --- spectrum --------------------------------------------------------------

void cmd_spectrum(const CommonFlags& f, const std::string& bundle_dir, double cutoff) {
  const auto in = load(bundle_dir);
  CsvTable table({"sector", "index", "singular_value", "sign"});
  nlohmann::json j{{"bundle", bundle_dir}, {"hash", in.hash}, {"cutoff", cutoff}};
  run_stage("spectrum", [&] {
    for (auto s : kAllSectors) {
      const auto& p = in.bundle.rdm.sector(s);
      if (p.dim() == 0) continue;
      const auto dec = spectrum(p);
      for (Eigen::Index i = 0; i < dec.size(); ++i) table.row(to_string(s), i, dec.values(i), dec.signs(i));
      nlohmann::json js{{"d", p.dim()}, {"numerical_rank", numerical_rank(dec, cutoff)}};
      if (p.data.norm() > 0.0) js["selected_rank"] = select_rank(dec, f.eps0, f.kappa);
      j["sectors"][std::string(to_string(s))] = js;
      std::cout << to_string(s) << ": d=" << p.dim() << " nonzero=" << numerical_rank(dec, cutoff) << "\n";
    }
  });
  write_text_atomic(fs::path(f.out) / "spectrum.csv", table.str());
  write_json(fs::path(f.out) / "spectrum.json", j);
}

// --- rotate ----------------------------------------------------------------

void cmd_rotate(const CommonFlags& f, const std::string& bundle_dir, int starts, const std::string& save_rotated) {
  const auto in = load(bundle_dir);
  auto cfg = f.config();
  cfg.coherence_starts = starts;
  const auto rot = rank_and_rotate(in.bundle.rdm, cfg);
  const Eigen::MatrixXd& C = rot.coherence.basis.C;

  nlohmann::json j{{"bundle", bundle_dir}, {"hash", in.hash}, {"config", to_json(cfg)},
                   {"provenance", rot.coherence.basis.provenance},
                   {"orthogonality_drift", rot.coherence.basis.orthogonality_drift()},
                   {"aggregate_before", rot.coherence.aggregate_before},
                   {"aggregate_after", rot.coherence.aggregate_after}};
  CsvTable leverage({"sector", "row", "leverage_before", "leverage_after"});
  for (std::size_t i = 0; i < rot.sectors.size(); ++i) {
    const auto s = rot.sectors[i];
    const Eigen::MatrixXd u = spectrum(in.bundle.rdm.sector(s)).U.leftCols(rot.ranks[i]);
    const auto before = coherence(u), after = coherence(rotate_pair_vectors(u, s, C));
    for (Eigen::Index p = 0; p < u.rows(); ++p) leverage.row(to_string(s), p, before.leverage(p), after.leverage(p));
    j["sectors"].push_back({{"sector", std::string(to_string(s))},
                            {"d", u.rows()},
                            {"r", rot.ranks[i]},
                            {"coherence_before", rot.coherence.mu_before[i]},
                            {"coherence_after", rot.coherence.mu_after[i]}});
    std::cout << to_string(s) << ": r=" << rot.ranks[i] << " mu " << rot.coherence.mu_before[i] << " -> "
              << rot.coherence.mu_after[i] << "\n";
  }
  for (const auto& r : rot.coherence.restarts)
    j["restarts"].push_back({{"provenance", r.provenance}, {"surrogate", r.surrogate}, {"mu", r.mu},
                             {"iterations", r.iterations}, {"finite", r.finite}});
  CsvTable basis({"row", "col", "value"});
  for (Eigen::Index r = 0; r < C.rows(); ++r)
    for (Eigen::Index c = 0; c < C.cols(); ++c) basis.row(r, c, C(r, c));

  const fs::path out(f.out);
  write_json(out / "rotation.json", j);
  write_text_atomic(out / "leverage.csv", leverage.str());
  write_text_atomic(out / "basis.csv", basis.str());
  if (!save_rotated.empty()) {
    run_stage("write", [&] {
      RdmBundle b = in.bundle;
      b.rdm = rotate_rdm(b.rdm, C);
      if (b.one) b.one = rotate_1rdm(*b.one, C);
      b.ints.reset();  // integrals are not rotated
      b.producer = "rdmc-rotate";
      save_bundle(b, save_rotated);
    });
  }
}

// --- plan ------------------------------------------------------------------

void cmd_plan(const CommonFlags& f, const std::string& model_dir, bool shots, bool no_rotate) {
  const auto in = load(model_dir);
  auto cfg = f.config();
  cfg.rotate = !no_rotate;
  const auto rot = rank_and_rotate(in.bundle.rdm, cfg);
  const Eigen::MatrixXd& C = rot.coherence.basis.C;
  const SpinRDMSet model = rotate_rdm(in.bundle.rdm, C);
  const OneRDM one = rotate_1rdm(in.bundle.one_rdm(), C);

  CsvTable curve({"sector", "r", "d", "info_bound", "f_requested", "f_sample", "n_sample", "mean_error", "std_error",
                  "success_fraction", "n_converged", "eckart_young_tail"});
  CsvTable shot_curve({"sector", "fraction", "m", "f_sample", "mean_strings", "mean_error", "std_error",
                       "n_converged", "feasible", "cost"});
  nlohmann::json j{{"model", model_dir}, {"hash", in.hash}, {"config", to_json(cfg)}};
  for (std::size_t i = 0; i < rot.sectors.size(); ++i) {
    const auto s = rot.sectors[i];
    const std::string tag(to_string(s));
    const auto r = rot.ranks[i];
    const auto& pm = model.sector(s);
    CompletionConfig cc;
    cc.rank = r;
    cc.eps0 = cfg.eps0;
    cc.kappa = cfg.kappa;
    cc.n_trials = cfg.trials;
    cc.seed = derive_seed(cfg.seed, {0xF5, sector_index(s)});
    cc.trace_hint = trace_target(pm.meta, s);
    const auto search =
        run_stage("fsample:" + tag, [&] { return find_fsample(pm.data, cc, default_fsample_grid(r, pm.dim()), false, s); });
    const double tail = spectrum(pm).tail_norm(r) / pm.data.norm();
    for (const auto& p : search.curve)
      curve.row(tag, r, pm.dim(), info_bound(r, pm.dim()), p.f_requested, p.f_sample, p.n_sample, p.mean_error,
                p.std_error, p.success_fraction, p.n_converged, tail);
    nlohmann::json js{{"sector", tag}, {"r", r}, {"d", pm.dim()}, {"info_bound", info_bound(r, pm.dim())},
                      {"coherence_after", rot.coherence.mu_after[i]}};
    js["f_sample"] = search.chosen ? nlohmann::json(search.best().f_sample) : nlohmann::json(nullptr);

    if (shots) {
      const auto lay = make_sector_layout(s, pm.meta.n);
      CalibrationOptions co;
      co.n_trials = cfg.trials;
      co.seed = derive_seed(cfg.seed, {0xCA1, sector_index(s)});
      const auto cal = run_stage("calibrate:" + tag, [&] { return calibrate_standard(lay, pm.data, &one, cfg.eps0, co); });
      PlanOptions po;
      po.n_trials = cfg.trials;
      po.seed = derive_seed(cfg.seed, {0x91A, sector_index(s)});
      po.m_standard = cal.m0;
      po.completion.trace_hint = trace_target(pm.meta, s);
      const auto plan =
          run_stage("plan:" + tag, [&] { return plan_noisy(lay, pm.data, &one, r, cfg.eps0, cfg.switch_cost, po); });
      for (const auto& p : plan.curve)
        shot_curve.row(tag, p.fraction, p.m, p.f_sample, p.mean_strings, p.mean_eps, p.std_eps, p.n_converged,
                       p.feasible ? 1 : 0, (static_cast<double>(p.m) + cfg.switch_cost) * p.mean_strings);
      js["m0"] = cal.m0;
      js["standard_shots"] = cal.total_shots;
      js["plan"] = {{"standard_fallback", plan.standard_fallback},
                    {"fraction", plan.fraction},
                    {"f_sample", plan.f_sample},
                    {"m", plan.budget.m_per_string},
                    {"total_shots", plan.budget.total_shots},
                    {"settings", plan.budget.n_settings},
                    {"f_m", plan.budget.f_m}};
    }
    j["sectors"].push_back(js);
    std::cout << tag << ": r=" << r << " d=" << pm.dim() << " f_sample="
              << (search.chosen ? std::to_string(search.best().f_sample) : std::string("none")) << "\n";
  }
  const fs::path out(f.out);
  write_text_atomic(out / "fsample_curve.csv", curve.str());
  if (shots) write_text_atomic(out / "shot_plan.csv", shot_curve.str());
  write_json(out / "plan.json", j);
}

// --- complete / measure -----------------------------------------------------

void cmd_run(const CommonFlags& f, const std::string& model_dir, const std::string& target_dir, bool noisy) {
  const auto model = load(model_dir);
  const auto target = load(target_dir);
  const auto cfg = f.config();
  const auto rep = noisy ? run_noisy(model.bundle, target.bundle, cfg, model.hash, target.hash)
                         : run_noiseless(model.bundle, target.bundle, cfg, model.hash, target.hash);
  const fs::path out(f.out);
  write_json(out / "report.json", to_json(rep));
  if (noisy) {
    write_text_atomic(out / "shot_plan.csv", plan_table(rep).str());
    write_text_atomic(out / "calibration.csv", calibration_table(rep).str());
  } else {
    write_text_atomic(out / "fsample_curve.csv", fsample_table(rep).str());
  }
  for (const auto& st : rep.steps) {
    std::cout << st.step;
    for (auto s : kAllSectors)
      if (!std::isnan(st.eps[sector_index(s)])) std::cout << "  eps_" << to_string(s) << "=" << st.eps[sector_index(s)];
    if (!st.e2_error.empty()) std::cout << "  mean|dE2|=" << st.mean_abs_e2_error;
    std::cout << "\n";
  }
  if (noisy) std::cout << "f_m=" << rep.f_m << "\n";
}

// --- report ----------------------------------------------------------------

void cmd_report(const CommonFlags& f, const std::string& report_file) {
  nlohmann::json j;
  run_stage("report", [&] {
    std::ifstream is(report_file);
    if (!is) throw Error("cannot open " + report_file);
    j = nlohmann::json::parse(is);
  });
  CsvTable t({"step", "sector", "eps", "min_eigenvalue", "mean_abs_e2_error"});
  std::cout << "mode " << j.value("mode", std::string("?")) << ", usable trials " << j.value("usable_trials", 0)
            << ", wall " << j.value("wall_seconds", 0.0) << " s\n";
  for (const auto& s : j["sectors"])
    std::cout << "  " << s["sector"].get<std::string>() << ": d=" << s["d"] << " r=" << s["r"] << " mu "
              << s["coherence_before"] << " -> " << s["coherence_after"] << " f_sample=" << s["f_sample"] << "\n";
  for (const auto& st : j["steps"]) {
    for (const auto& [sec, eps] : st["eps"].items()) {
      if (eps.is_null()) continue;
      const auto e2 = st["e2_error"].is_null() ? std::string("") : st["mean_abs_e2_error"].dump();
      t.row(st["step"].get<std::string>(), sec, eps.get<double>(), st["min_eigenvalue"][sec].dump(), e2);
    }
  }
  if (j.contains("f_m")) std::cout << "  f_m=" << j["f_m"] << "\n";
  std::cout << t.str();
  write_text_atomic(fs::path(f.out) / "summary.csv", t.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank reconstruction of two-particle reduced density matrices"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* gen = app.add_subcommand("gen", "Write a toy model/target bundle pair");
  std::string family = "hubbard";
  int sites = 4, na = 2, nb = 2;
  double hop = 1.0, onsite = 4.0, scale = 0.8;
  gen->add_option("--family", family, "hubbard or random")->capture_default_str();
  gen->add_option("--sites", sites, "Spatial orbitals")->capture_default_str();
  gen->add_option("--n-alpha", na)->capture_default_str();
  gen->add_option("--n-beta", nb)->capture_default_str();
  gen->add_option("--hopping", hop)->capture_default_str();
  gen->add_option("--onsite", onsite)->capture_default_str();
  gen->add_option("--model-scale", scale, "Interaction scale of the model Hamiltonian")->capture_default_str();
  add_common(gen, flags);

  auto* spec = app.add_subcommand("spectrum", "Singular values and ranks of every sector");
  std::string bundle;
  double cutoff = 1e-10;
  spec->add_option("--bundle", bundle)->required();
  spec->add_option("--cutoff", cutoff, "Nonzero cutoff")->capture_default_str();
  add_common(spec, flags);

  auto* rot = app.add_subcommand("rotate", "Minimize coherence over orbital rotations");
  int starts = 10;
  std::string save_rotated;
  rot->add_option("--bundle", bundle)->required();
  rot->add_option("--starts", starts, "Random restarts")->capture_default_str();
  rot->add_option("--save-rotated", save_rotated, "Write the rotated bundle here");
  add_common(rot, flags);

  auto* plan = app.add_subcommand("plan", "Sample-budget and shot planning on the model");
  std::string model_dir, target_dir;
  bool shots = false, no_rotate = false;
  plan->add_option("--model", model_dir)->required();
  plan->add_flag("--shots", shots, "Also calibrate and plan noisy measurements");
  plan->add_flag("--no-rotate", no_rotate, "Skip coherence minimization");
  add_common(plan, flags);

  auto* comp = app.add_subcommand("complete", "Noiseless pipeline run");
  comp->add_option("--model", model_dir)->required();
  comp->add_option("--target", target_dir)->required();
  add_common(comp, flags);

  auto* meas = app.add_subcommand("measure", "Noisy pipeline run");
  meas->add_option("--model", model_dir)->required();
  meas->add_option("--target", target_dir)->required();
  add_common(meas, flags);

  auto* rep = app.add_subcommand("report", "Summarize a run report");
  std::string report_file;
  rep->add_option("--in", report_file)->required();
  add_common(rep, flags);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) cmd_gen(flags, family, sites, na, nb, hop, onsite, scale);
    if (*spec) cmd_spectrum(flags, bundle, cutoff);
    if (*rot) cmd_rotate(flags, bundle, starts, save_rotated);
    if (*plan) cmd_plan(flags, model_dir, shots, no_rotate);
    if (*comp) cmd_run(flags, model_dir, target_dir, false);
    if (*meas) cmd_run(flags, model_dir, target_dir, true);
    if (*rep) cmd_report(flags, report_file);
  } catch (const StageError& e) {
    std::cerr << "rdmc: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "rdmc: [unexpected] " << e.what() << "\n";
    return 3;
  }
  return 0;
}
