#include <malloc.h>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "chebpinn/cli.hpp"

namespace cli = chebpinn::cli;

namespace {

void add_source(CLI::App* cmd, cli::ConfigSource& src, std::string& preset, std::string& config) {
  cmd->add_option("--preset", preset, "Named preset: ode1, ode2 or pde1");
  cmd->add_option("--config", config, "Config file (chebpinn-config format)");
  cmd->parse_complete_callback([&src, &preset, &config] {
    if (!preset.empty()) src.preset = preset;
    if (!config.empty()) src.config = config;
  });
}

}  // namespace

int main(int argc, char** argv) {
  // Large scratch buffers are reused across training iterations; keep them
  // out of mmap so they are not returned to the kernel every step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Chebyshev-augmented one-shot transfer learning for weakly nonlinear ODE/PDE instances"};
  app.require_subcommand(1);
  const std::string out_help = std::string("Output directory (default $") + cli::kOutEnv + " or ./chebpinn_out)";

  cli::PretrainArgs pre;
  std::string pre_preset, pre_config, pre_out;
  std::optional<std::size_t> pre_iters;
  auto* c_pre = app.add_subcommand("pretrain", "Train the shared feature map");
  add_source(c_pre, pre.source, pre_preset, pre_config);
  c_pre->add_option("--out", pre_out, out_help);
  c_pre->add_option("--iters", pre_iters, "Override the iteration count");

  cli::SolveArgs sol;
  std::string sol_out, sol_config;
  std::optional<double> sol_eps;
  auto* c_sol = app.add_subcommand("solve", "Solve one instance online");
  c_sol->add_option("--model", sol.model, "Feature map sidecar (.json) or stem")->required();
  c_sol->add_option("--instance", sol.instance, "Instance file (chebpinn-instance format)")->required();
  c_sol->add_option("--config", sol_config, "Config file (default: the model's .cfg or family preset)");
  c_sol->add_option("--eps", sol_eps, "Override epsilon");
  c_sol->add_flag("--linear", sol.linear, "Linear solve only (nonlinearity dropped)");
  c_sol->add_option("--name", sol.name, "Output file stem");
  c_sol->add_option("--out", sol_out, out_help);

  cli::BenchmarkArgs ben;
  std::string ben_preset, ben_config, ben_out, ben_model, ben_baseline = "on";
  std::optional<std::size_t> ben_instances, ben_iters;
  auto* c_ben = app.add_subcommand("benchmark", "Run a benchmark suite");
  add_source(c_ben, ben.source, ben_preset, ben_config);
  c_ben->add_option("--model", ben_model, "Feature map (default <out>/<family>)");
  c_ben->add_flag("--train", ben.train, "Pretrain before benchmarking");
  c_ben->add_option("--iters", ben_iters, "Override the iteration count when training");
  c_ben->add_option("--instances", ben_instances, "Number of test instances");
  c_ben->add_option("--baseline", ben_baseline, "Gradient-descent baseline")->check(CLI::IsMember({"on", "off"}));
  c_ben->add_option("--jobs", ben.jobs, "Worker threads for untimed metrics")->check(CLI::PositiveNumber);
  c_ben->add_option("--out", ben_out, out_help);

  cli::AblateArgs abl;
  std::string abl_preset, abl_config, abl_out, abl_model;
  std::optional<std::size_t> abl_iters;
  std::vector<double> abl_values;
  auto* c_abl = app.add_subcommand("ablate", "Sweep one online setting");
  c_abl->add_option("axis", abl.axis, "eps, p or m")->required()->check(CLI::IsMember({"eps", "p", "m"}));
  add_source(c_abl, abl.source, abl_preset, abl_config);
  c_abl->add_option("--model", abl_model, "Feature map (default <out>/<family>)");
  c_abl->add_flag("--train", abl.train, "Pretrain before sweeping");
  c_abl->add_option("--iters", abl_iters, "Override the iteration count when training");
  c_abl->add_option("--values", abl_values, "Comma-separated values")->delimiter(',');
  c_abl->add_option("--out", abl_out, out_help);

  std::string ins_path;
  auto* c_ins = app.add_subcommand("inspect", "Describe a model, solution or config file");
  c_ins->add_option("path", ins_path)->required();

  std::string show_preset;
  auto* c_cfg = app.add_subcommand("config", "Configuration utilities");
  c_cfg->require_subcommand(1);
  auto* c_show = c_cfg->add_subcommand("show", "Print a preset");
  c_show->add_option("preset", show_preset)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? cli::kOk : cli::kUsage;
  }

  auto out_or_default = [](const std::string& s) { return s.empty() ? cli::default_out_dir() : cli::fs::path(s); };

  return cli::guarded([&]() -> int {
    if (c_pre->parsed()) {
      pre.out = out_or_default(pre_out);
      pre.iterations = pre_iters;
      return cli::cmd_pretrain(pre);
    }
    if (c_sol->parsed()) {
      sol.out = out_or_default(sol_out);
      if (!sol_config.empty()) sol.config = sol_config;
      sol.epsilon = sol_eps;
      return cli::cmd_solve(sol);
    }
    if (c_ben->parsed()) {
      ben.out = out_or_default(ben_out);
      if (!ben_model.empty()) ben.model = ben_model;
      ben.instances = ben_instances;
      ben.iterations = ben_iters;
      ben.baseline = ben_baseline == "on";
      return cli::cmd_benchmark(ben);
    }
    if (c_abl->parsed()) {
      abl.out = out_or_default(abl_out);
      if (!abl_model.empty()) abl.model = abl_model;
      if (!abl_values.empty()) abl.values = abl_values;
      abl.iterations = abl_iters;
      return cli::cmd_ablate(abl);
    }
    if (c_ins->parsed()) return cli::cmd_inspect(ins_path);
    return cli::cmd_config_show(show_preset);
  });
}
