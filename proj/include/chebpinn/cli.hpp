#pragma once

// Command implementations behind the chebpinn executable. Each command
// returns a process exit code: 0 ok, 2 configuration, 3 training, 4 solve.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "chebpinn/bench.hpp"
#include "chebpinn/config.hpp"
#include "chebpinn/error.hpp"
#include "chebpinn/io.hpp"
#include "chebpinn/pretrain.hpp"

namespace chebpinn::cli {

namespace fs = std::filesystem;

enum Exit : int { kOk = 0, kUsage = 1, kConfig = 2, kTraining = 3, kSolve = 4 };

inline constexpr const char* kOutEnv = "CHEBPINN_OUT";

inline fs::path default_out_dir() {
  const char* env = std::getenv(kOutEnv);
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("chebpinn_out");
}

inline int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::ConfigError: return kConfig;
    case ErrorCode::DivergedLoss: return kTraining;
    default: return kSolve;
  }
}

/// Runs a command body, mapping library errors onto exit codes.
inline int guarded(const std::function<int()>& body, std::ostream& err = std::cerr) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kSolve;
  }
}

/// Preset name, config file, or both (the file wins).
struct ConfigSource {
  std::optional<std::string> preset;
  std::optional<fs::path> config;
};

inline RunConfig load_config(const ConfigSource& src) {
  if (src.config) {
    std::ifstream in(*src.config, std::ios::binary);
    if (!in) fail(ErrorCode::ConfigError, "cannot read config file " + src.config->string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
      return RunConfig::parse(ss.str());
    } catch (const Error& e) {
      fail(ErrorCode::ConfigError, src.config->string() + ": " + e.what());
    }
  }
  if (src.preset) return RunConfig::preset(*src.preset);
  fail(ErrorCode::ConfigError, "give --preset or --config");
}

inline fs::path model_stem(const fs::path& out, const RunConfig& cfg) { return out / to_string(cfg.family); }

inline void write_text(const fs::path& p, const std::string& text) {
  if (!p.parent_path().empty()) fs::create_directories(p.parent_path());
  io::write_file(p, text);
}

inline void write_loss_csv(std::ostream& out, const TrainingLog& log) {
  out << "iteration,loss,pde,bc,data,lr\n" << std::setprecision(10);
  for (const auto& r : log.rows)
    out << r.iteration << ',' << r.loss << ',' << r.pde << ',' << r.bc << ',' << r.data << ',' << r.lr << '\n';
}

/// Trains per configuration and writes <stem>.body, <stem>.json, <stem>.cfg
/// and <stem>_loss.csv.
inline FeatureMap pretrain_and_save(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  fs::create_directories(out);
  const Bundle bundle = cfg.bundle();
  TrainConfig tc = cfg.train_config();
  log << "training " << to_string(cfg.family) << ": K=" << cfg.heads << " h=" << cfg.feature_dim
      << " iterations=" << tc.iterations << '\n';
  TrainResult r = train_bundle(bundle, cfg.body_config(), tc);
  r.feature_map.family = to_string(cfg.family);
  const fs::path stem = model_stem(out, cfg);
  save_feature_map(stem, r.feature_map);
  write_text(fs::path(stem.string() + ".cfg"), cfg.serialize());
  std::ostringstream csv;
  write_loss_csv(csv, r.log);
  write_text(fs::path(stem.string() + "_loss.csv"), csv.str());
  log << "final loss " << r.log.final_loss << " after " << r.log.seconds << " s";
  if (!r.log.flagged.empty()) log << " (" << r.log.flagged.size() << " flagged iterations)";
  log << "\nwrote " << stem.string() << ".{body,json,cfg} and " << stem.string() << "_loss.csv\n";
  return r.feature_map;
}

struct PretrainArgs {
  ConfigSource source;
  fs::path out = default_out_dir();
  std::optional<std::size_t> iterations;
};

inline int cmd_pretrain(const PretrainArgs& a, std::ostream& log = std::cout) {
  RunConfig cfg = load_config(a.source);
  if (a.iterations) cfg.iterations = *a.iterations;
  pretrain_and_save(cfg, a.out, log);
  return kOk;
}

/// Configuration stored next to a model, else the family preset.
inline RunConfig config_for_model(const fs::path& model, const FeatureMap& fm, const std::optional<fs::path>& override_cfg) {
  if (override_cfg) return load_config({std::nullopt, override_cfg});
  fs::path stem = model;
  if (stem.extension() == ".json") stem.replace_extension();
  const fs::path side(stem.string() + ".cfg");
  if (fs::exists(side)) return load_config({std::nullopt, side});
  if (fm.family.empty()) fail(ErrorCode::ConfigError, "model has no family record; pass --config");
  return RunConfig::preset(fm.family);
}

inline ProblemInstance problem_for(const InstanceSpec& spec, const RunConfig& cfg) {
  const OnlineSettings s = spec.settings(cfg);
  if (spec.family == Family::Pde1) return pde_problem(spec.pde_benchmark(cfg), s);
  return ode_problem(spec.ode_benchmark(cfg), s);
}

/// Reconstruction on the evaluation grid: 100 points on [0, T] for ODEs,
/// the 61 × 61 grid for the PDE.
inline void write_solution_grid(std::ostream& out, const SeriesSolution& sol, const FeatureMap& fm,
                                const InstanceSpec& spec, const RunConfig& cfg) {
  out << std::setprecision(17);
  if (spec.family == Family::Pde1) {
    const ManufacturedField m = manufactured_pde(spec.pde_benchmark(cfg));
    const Grid u = reconstruct(sol, fm, m.points);
    out << "x,t,u\n";
    for (std::size_t i = 0; i < u.size(); ++i) out << m.points(i, 0) << ',' << m.points(i, 1) << ',' << u[i] << '\n';
    return;
  }
  const auto ts = linspace(0.0, cfg.ode.t_end, 100);
  const Grid u = reconstruct(sol, fm, Matrix(ts.size(), 1, ts));
  out << "t,u\n";
  for (std::size_t i = 0; i < u.size(); ++i) out << ts[i] << ',' << u[i] << '\n';
}

struct SolveArgs {
  fs::path model;
  fs::path instance;
  std::optional<fs::path> config;
  std::optional<double> epsilon;
  bool linear = false;
  fs::path out = default_out_dir();
  std::string name = "solution";
};

/// Writes <name>.sol, <name>.json (diagnostics) and <name>_grid.csv.
inline int cmd_solve(const SolveArgs& a, std::ostream& log = std::cout) {
  InstanceSpec spec;
  {
    std::ifstream in(a.instance, std::ios::binary);
    if (!in) fail(ErrorCode::ConfigError, "cannot read instance file " + a.instance.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
      spec = InstanceSpec::parse(ss.str());
    } catch (const Error& e) {
      fail(ErrorCode::ConfigError, a.instance.string() + ": " + e.what());
    }
  }
  if (a.epsilon) spec.epsilon = *a.epsilon;
  const FeatureMap fm = load_feature_map(a.model);
  const RunConfig cfg = config_for_model(a.model, fm, a.config);
  if ((spec.family == Family::Pde1) != cfg.is_pde()) {
    fail(ErrorCode::ConfigError, "instance family " + to_string(spec.family) + " does not match the model");
  }
  const OneShotSystem sys = assemble_system(fm, fm.op, fm.weights);
  const ProblemInstance inst = problem_for(spec, cfg);
  const SeriesSolution sol = a.linear ? linear_solve(sys, inst) : online_solve(sys, fm, inst);
  fs::create_directories(a.out);
  const fs::path stem = a.out / a.name;
  save_solution(stem, sol);
  std::ostringstream grid;
  write_solution_grid(grid, sol, fm, spec, cfg);
  write_text(fs::path(stem.string() + "_grid.csv"), grid.str());
  log << "solved " << to_string(spec.family) << " eps=" << sol.epsilon << " orders=" << sol.heads.size()
      << " online " << sol.diagnostics.seconds << " s, range warnings " << sol.diagnostics.range_warnings << '\n';
  return kOk;
}

/// Loads the model from `model`, from <out>/<family> if present, or trains it
/// when `train` is set.
inline FeatureMap obtain_model(const RunConfig& cfg, const std::optional<fs::path>& model, bool train,
                               const fs::path& out, std::ostream& log) {
  if (model) return load_feature_map(*model);
  if (train) return pretrain_and_save(cfg, out, log);
  const fs::path stem = model_stem(out, cfg);
  if (fs::exists(fs::path(stem.string() + ".json"))) return load_feature_map(stem);
  fail(ErrorCode::ConfigError, "no model at " + stem.string() + ".json; run pretrain, pass --model, or add --train");
}

inline std::vector<OdeBenchmark> ode_suite_for(const RunConfig& cfg, std::size_t n) {
  const OdeKind kind = cfg.family == Family::Ode1 ? OdeKind::Ode1 : OdeKind::Ode2;
  return ode_test_suite(kind, cfg.ode, n, cfg.online.epsilon, cfg.test_seed, cfg.online.range.u_min(),
                        cfg.online.range.u_max());
}

inline std::vector<PdeBenchmark> pde_suite_for(const RunConfig& cfg, std::size_t n) {
  auto suite = pde_test_suite(cfg.diffusion, cfg.reaction_delta, cfg.online.epsilon);
  if (n < suite.size()) suite.resize(n);
  return suite;
}

/// Fixed PDE instance used for ablations and the field figure.
inline PdeBenchmark pde_fixed_instance(const RunConfig& cfg) {
  PdeBenchmark b;
  b.diffusion = cfg.diffusion;
  b.delta = cfg.reaction_delta;
  b.amplitude = 2.0;
  b.wavenumber = 2.0 * std::numbers::pi;
  b.offset = 0.4;
  b.epsilon = cfg.online.epsilon;
  return b;
}

struct BenchmarkArgs {
  ConfigSource source;
  std::optional<fs::path> model;
  bool train = false;
  std::optional<std::size_t> instances;
  bool baseline = true;
  std::size_t jobs = 1;
  fs::path out = default_out_dir();
  std::optional<std::size_t> iterations;
};

inline void print_summary(std::ostream& log, const std::string& name, const SuiteSummary& s) {
  log << std::setw(6) << "bench" << std::setw(14) << "mse" << std::setw(14) << "online_s" << std::setw(14)
      << "baseline_s" << std::setw(12) << "converged" << '\n';
  log << std::setw(6) << name << std::setw(14) << std::setprecision(4) << s.mean_mse << std::setw(14)
      << s.mean_online_seconds << std::setw(14);
  if (s.mean_baseline_seconds) {
    log << *s.mean_baseline_seconds;
  } else {
    log << "-";
  }
  log << std::setw(12) << (s.baseline_runs ? std::to_string(s.baseline_converged) + "/" + std::to_string(s.baseline_runs) : "-")
      << '\n';
}

/// Writes <family>_results.csv and the figure data files.
inline int cmd_benchmark(const BenchmarkArgs& a, std::ostream& log = std::cout) {
  RunConfig cfg = load_config(a.source);
  if (a.iterations) cfg.iterations = *a.iterations;
  const std::size_t n = a.instances.value_or(cfg.instances);
  const FeatureMap fm = obtain_model(cfg, a.model, a.train, a.out, log);
  const OneShotSystem sys = assemble_system(fm, fm.op, fm.weights);
  SuiteOptions opt;
  opt.settings = cfg.online;
  opt.jobs = a.jobs;
  if (a.baseline) opt.baseline = cfg.baseline;
  fs::create_directories(a.out);
  const std::string name = to_string(cfg.family);
  const fs::path stem = a.out / name;
  std::vector<SeriesSolution> sols;
  std::vector<ResultRow> rows;
  if (cfg.is_pde()) {
    const auto suite = pde_suite_for(cfg, n);
    rows = run_pde_suite(sys, fm, suite, opt, &sols);
    const PdeBenchmark fixed = pde_fixed_instance(cfg);
    const SeriesSolution fsol = online_solve(sys, fm, pde_problem(fixed, cfg.online));
    std::ostringstream field;
    write_pde_field_csv(field, fm, fsol, fixed);
    write_text(fs::path(stem.string() + "_field.csv"), field.str());
  } else {
    const auto suite = ode_suite_for(cfg, n);
    rows = run_ode_suite(sys, fm, suite, opt, &sols);
    std::ostringstream traj;
    std::ostringstream disc;
    write_ode_trajectories_csv(traj, fm, suite, sols);
    write_ode_discrepancy_csv(disc, fm, suite, sols);
    write_text(fs::path(stem.string() + "_trajectories.csv"), traj.str());
    write_text(fs::path(stem.string() + "_discrepancy.csv"), disc.str());
  }
  std::ostringstream csv;
  write_results_csv(csv, rows, cfg.test_seed);
  write_text(fs::path(stem.string() + "_results.csv"), csv.str());
  print_summary(log, name, summarize(rows));
  return kOk;
}

inline AblationAxis axis_from_string(const std::string& s) {
  if (s == "eps" || s == "epsilon") return AblationAxis::Epsilon;
  if (s == "p" || s == "order") return AblationAxis::Order;
  if (s == "m" || s == "degree") return AblationAxis::Degree;
  fail(ErrorCode::ConfigError, "unknown ablation axis '" + s + "' (expected eps, p or m)");
}

struct AblateArgs {
  std::string axis;
  ConfigSource source;
  std::optional<fs::path> model;
  bool train = false;
  std::optional<std::vector<double>> values;
  fs::path out = default_out_dir();
  std::optional<std::size_t> iterations;
};

/// Writes <family>_ablate_<axis>.csv with one (value, mse) row per setting.
inline int cmd_ablate(const AblateArgs& a, std::ostream& log = std::cout) {
  const AblationAxis axis = axis_from_string(a.axis);
  RunConfig cfg = load_config(a.source);
  if (a.iterations) cfg.iterations = *a.iterations;
  const FeatureMap fm = obtain_model(cfg, a.model, a.train, a.out, log);
  const OneShotSystem sys = assemble_system(fm, fm.op, fm.weights);
  const auto values = a.values.value_or(default_ablation_values(axis, cfg.is_pde()));
  const auto metric = cfg.is_pde() ? pde_ablation_metric(sys, fm, pde_fixed_instance(cfg))
                                   : ode_ablation_metric(sys, fm, ode_suite_for(cfg, 1).front());
  const auto rows = run_ablation(axis, values, cfg.online, metric);
  std::ostringstream csv;
  write_ablation_csv(csv, axis, rows);
  fs::create_directories(a.out);
  const fs::path path = a.out / (to_string(cfg.family) + "_ablate_" + to_string(axis) + ".csv");
  write_text(path, csv.str());
  log << csv.str() << "wrote " << path.string() << '\n';
  return kOk;
}

/// Describes a feature map (.json/.body), solution (.sol) or config file.
inline int cmd_inspect(const fs::path& path, std::ostream& log = std::cout) {
  const std::string ext = path.extension().string();
  if (ext == ".sol") {
    const SeriesSolution sol = load_solution(path);
    log << "solution: eps=" << sol.epsilon << " orders=" << sol.heads.size()
        << " h=" << (sol.heads.empty() ? 0 : sol.heads.front().size()) << '\n';
    return kOk;
  }
  if (ext == ".body") {
    const BodyParams body = load_body(path);
    log << "body: input_dim=" << body.config.input_dim << " hidden=" << cfgfmt::fmt(body.config.hidden)
        << " feature_dim=" << body.config.feature_dim << " state_dim=" << body.config.state_dim
        << " parameters=" << body.size() << '\n';
    return kOk;
  }
  if (ext == ".cfg" || ext == ".txt") {
    log << load_config({std::nullopt, path}).serialize();
    return kOk;
  }
  const FeatureMap fm = load_feature_map(path);
  log << "feature map: family=" << (fm.family.empty() ? "?" : fm.family)
      << " operator=" << operator_to_json(fm.op).dump() << " bundle_seed=" << fm.bundle_seed << '\n'
      << "  body: hidden=" << cfgfmt::fmt(fm.body.config.hidden) << " feature_dim=" << fm.body.config.feature_dim
      << " state_dim=" << fm.body.config.state_dim << " parameters=" << fm.body.size() << '\n'
      << "  interior points=" << fm.interior.rows() << " constraint rows=" << fm.constraints.size()
      << " weights=(" << fm.weights.pde << ", " << fm.weights.bc << ", " << fm.weights.data << ")\n";
  return kOk;
}

inline int cmd_config_show(const std::string& preset, std::ostream& out = std::cout) {
  out << RunConfig::preset(preset).serialize();
  return kOk;
}

}  // namespace chebpinn::cli
