#include <cstdlib>
#include <fstream>
#include <sstream>

#include "chebpinn/cli.hpp"
#include "test_util.hpp"

using namespace chebpinn;
using namespace chebpinn::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("chebpinn_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t data_rows(const fs::path& csv) {
  std::istringstream in(slurp(csv));
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && line[0] != '#') ++n;
  return n - 1;
}

/// Small ODE1 configuration written to dir/small.cfg.
fs::path small_config(const fs::path& dir, std::size_t iterations = 300) {
  RunConfig cfg = RunConfig::preset(Family::Ode1);
  cfg.hidden = {16, 16};
  cfg.feature_dim = 16;
  cfg.iterations = iterations;
  cfg.instances = 5;
  cfg.baseline.cap = 200;
  const fs::path p = dir / "small.cfg";
  cli::write_text(p, cfg.serialize());
  return p;
}

fs::path write_instance(const fs::path& dir, const std::string& body) {
  const fs::path p = dir / "inst.txt";
  cli::write_text(p, "chebpinn-instance 1\n" + body);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CHEBPINN_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, PresetsRoundTripByteExact) {
  for (Family f : {Family::Ode1, Family::Ode2, Family::Pde1}) {
    const std::string text = RunConfig::preset(f).serialize();
    EXPECT_EQ(RunConfig::parse(text).serialize(), text) << to_string(f);
  }
}

TEST(Config, PresetValues) {
  const RunConfig o1 = RunConfig::preset(Family::Ode1);
  EXPECT_EQ(o1.online, OnlineSettings::ode1());
  EXPECT_EQ(o1.heads, 10u);
  EXPECT_EQ(o1.hidden, (std::vector<std::size_t>{64, 64, 64}));
  EXPECT_EQ(o1.lr, 4e-4);
  EXPECT_EQ(o1.iterations, 5000u);
  EXPECT_EQ(o1.baseline.tau, 5e-4);
  const RunConfig o2 = RunConfig::preset(Family::Ode2);
  EXPECT_EQ(o2.online, OnlineSettings::ode2());
  EXPECT_EQ(o2.baseline.init, HeadInit::Random);
  const RunConfig p = RunConfig::preset(Family::Pde1);
  EXPECT_EQ(p.online, OnlineSettings::pde1());
  EXPECT_EQ(p.heads, 16u);
  EXPECT_EQ(p.instances, 32u);
  EXPECT_EQ(p.baseline.cap, 4000u);
  EXPECT_EQ(p.baseline.lr, 3e-3);
}

TEST(Config, RejectsMalformedInput) {
  const std::string good = RunConfig::preset(Family::Ode1).serialize();
  EXPECT_ERROR(RunConfig::parse("family = ode1\n"), ErrorCode::ConfigError);
  EXPECT_ERROR(RunConfig::parse(good + "bogus = 1\n"), ErrorCode::ConfigError);
  EXPECT_ERROR(RunConfig::parse(good + "heads = 3\n"), ErrorCode::ConfigError);
  std::string bad = good;
  bad.replace(bad.find("heads = 10"), 10, "heads = x");
  EXPECT_ERROR(RunConfig::parse(bad), ErrorCode::ConfigError);
  bad = good;
  bad.replace(bad.find("quad_size = 1000"), 16, "quad_size = 5");
  EXPECT_ERROR(RunConfig::parse(bad), ErrorCode::ConfigError);
  EXPECT_ERROR(RunConfig::preset("ode3"), ErrorCode::ConfigError);
}

TEST(Config, InstanceRoundTrip) {
  const std::string text = "chebpinn-instance 1\nfamily = pde1\namplitude = 2\nwavenumber = 6.25\noffset = 0.4\nepsilon = 0.2\n";
  const InstanceSpec s = InstanceSpec::parse(text);
  EXPECT_EQ(InstanceSpec::parse(s.serialize()).serialize(), s.serialize());
  EXPECT_EQ(s.settings(RunConfig::preset(Family::Pde1)).epsilon, 0.2);
  EXPECT_ERROR(InstanceSpec::parse("chebpinn-instance 1\nfamily = ode1\ngamma = 1\nu0 = 1\nv0 = 0\n"),
               ErrorCode::ConfigError);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli::exit_code_for(ErrorCode::ConfigError), cli::kConfig);
  EXPECT_EQ(cli::exit_code_for(ErrorCode::DivergedLoss), cli::kTraining);
  EXPECT_EQ(cli::exit_code_for(ErrorCode::NonFactorizable), cli::kSolve);
  std::ostringstream err;
  EXPECT_EQ(cli::guarded([]() -> int { fail(ErrorCode::ConfigError, "nope"); }, err), cli::kConfig);
  EXPECT_NE(err.str().find("ConfigError"), std::string::npos);
}

TEST(Cli, ProcessExitCodes) {
  const fs::path dir = scratch_dir("exit");
  EXPECT_EQ(run_cli("config show ode1"), cli::kOk);
  EXPECT_EQ(run_cli("pretrain --config " + (dir / "missing.cfg").string() + " --out " + dir.string()), cli::kConfig);
  EXPECT_EQ(run_cli("config show nosuch"), cli::kConfig);
  EXPECT_EQ(run_cli("frobnicate"), cli::kUsage);
}

TEST(Cli, MissingConfigNamesThePath) {
  const fs::path missing = scratch_dir("missing") / "nowhere.cfg";
  try {
    (void)cli::load_config({std::nullopt, missing});
    FAIL() << "expected ConfigError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    EXPECT_NE(std::string(e.what()).find("nowhere.cfg"), std::string::npos);
  }
}

TEST(Cli, PretrainWritesLossRowEveryHundredIterations) {
  const fs::path dir = scratch_dir("pretrain");
  cli::PretrainArgs a;
  a.source.config = small_config(dir, 5000);
  a.out = dir;
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_pretrain(a, log), cli::kOk);
  EXPECT_EQ(data_rows(dir / "ode1_loss.csv"), 50u);
  EXPECT_TRUE(fs::exists(dir / "ode1.body"));
  EXPECT_TRUE(fs::exists(dir / "ode1.json"));
  EXPECT_TRUE(fs::exists(dir / "ode1.cfg"));
}

TEST(Cli, ZeroIterationArtifactIsTheInitialBody) {
  const fs::path dir = scratch_dir("iters0");
  cli::PretrainArgs a;
  a.source.config = small_config(dir);
  a.out = dir;
  a.iterations = 0;
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_pretrain(a, log), cli::kOk);
  const RunConfig cfg = cli::load_config(a.source);
  EXPECT_EQ(load_body(dir / "ode1.body"), body_init(cfg.body_config()));
}

TEST(Cli, PretrainIsDeterministic) {
  const fs::path d1 = scratch_dir("det1");
  const fs::path d2 = scratch_dir("det2");
  for (const auto& d : {d1, d2}) {
    cli::PretrainArgs a;
    a.source.config = small_config(d1);
    a.out = d;
    std::ostringstream log;
    ASSERT_EQ(cli::cmd_pretrain(a, log), cli::kOk);
  }
  EXPECT_EQ(slurp(d1 / "ode1.body"), slurp(d2 / "ode1.body"));
  EXPECT_EQ(slurp(d1 / "ode1_loss.csv"), slurp(d2 / "ode1_loss.csv"));
}

TEST(Cli, SolveAtEpsilonZeroMatchesLinearSolveBytes) {
  const fs::path dir = scratch_dir("solve");
  cli::PretrainArgs pa;
  pa.source.config = small_config(dir);
  pa.out = dir;
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_pretrain(pa, log), cli::kOk);
  const fs::path inst = write_instance(dir, "family = ode1\nbeta = 1\nomega = 2\nu0 = 0.5\nv0 = 0\n");
  cli::SolveArgs s;
  s.model = dir / "ode1";
  s.instance = inst;
  s.out = dir;
  s.epsilon = 0.0;
  s.name = "eps0";
  ASSERT_EQ(cli::cmd_solve(s, log), cli::kOk);
  s.epsilon.reset();
  s.linear = true;
  s.name = "linear";
  ASSERT_EQ(cli::cmd_solve(s, log), cli::kOk);
  EXPECT_EQ(slurp(dir / "eps0_grid.csv"), slurp(dir / "linear_grid.csv"));
  EXPECT_EQ(data_rows(dir / "eps0_grid.csv"), 100u);
  s.linear = false;
  s.name = "full";
  ASSERT_EQ(cli::cmd_solve(s, log), cli::kOk);
  const SeriesSolution sol = load_solution(dir / "full.sol");
  EXPECT_EQ(sol.heads.size(), 13u);
  const auto diag = nlohmann::json::parse(slurp(dir / "full.json"));
  EXPECT_TRUE(diag.contains("online_seconds"));
}

TEST(Cli, SolvePdeRecordsEveryOrder) {
  const fs::path dir = scratch_dir("solve_pde");
  RunConfig cfg = RunConfig::preset(Family::Pde1);
  cfg.hidden = {12, 12};
  cfg.feature_dim = 12;
  cfg.iterations = 20;
  cfg.pde.grid = 8;
  cfg.pde.boundary_points = 6;
  cli::write_text(dir / "pde.cfg", cfg.serialize());
  cli::PretrainArgs pa;
  pa.source.config = dir / "pde.cfg";
  pa.out = dir;
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_pretrain(pa, log), cli::kOk);
  cli::SolveArgs s;
  s.model = dir / "pde1";
  s.instance = write_instance(dir, "family = pde1\namplitude = 2\nwavenumber = 6.283185307179586\noffset = 0.4\n");
  s.out = dir;
  ASSERT_EQ(cli::cmd_solve(s, log), cli::kOk);
  const auto diag = nlohmann::json::parse(slurp(dir / "solution.json"));
  EXPECT_EQ(diag.at("orders").size(), 21u);
  EXPECT_EQ(data_rows(dir / "solution_grid.csv"), 61u * 61u);
}

TEST(Cli, BenchmarkRowsAndBaselineColumns) {
  const fs::path dir = scratch_dir("bench");
  cli::BenchmarkArgs b;
  b.source.config = small_config(dir);
  b.train = true;
  b.out = dir;
  b.baseline = false;
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_benchmark(b, log), cli::kOk);
  EXPECT_EQ(data_rows(dir / "ode1_results.csv"), 5u);
  EXPECT_EQ(data_rows(dir / "ode1_trajectories.csv"), 500u);
  EXPECT_EQ(data_rows(dir / "ode1_discrepancy.csv"), 100u);
  std::istringstream in(slurp(dir / "ode1_results.csv"));
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_NE(line.find(",,,"), std::string::npos);

  b.train = false;
  b.model = dir / "ode1";
  b.baseline = true;
  b.instances = 2;
  ASSERT_EQ(cli::cmd_benchmark(b, log), cli::kOk);
  EXPECT_EQ(data_rows(dir / "ode1_results.csv"), 2u);
  in = std::istringstream(slurp(dir / "ode1_results.csv"));
  std::getline(in, line);
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_EQ(line.find(",,,"), std::string::npos);
}

TEST(Cli, AblateRowCounts) {
  const fs::path dir = scratch_dir("ablate");
  cli::PretrainArgs pa;
  pa.source.config = small_config(dir);
  pa.out = dir;
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_pretrain(pa, log), cli::kOk);
  cli::AblateArgs a;
  a.source.config = pa.source.config;
  a.model = dir / "ode1";
  a.out = dir;
  a.axis = "eps";
  ASSERT_EQ(cli::cmd_ablate(a, log), cli::kOk);
  EXPECT_EQ(data_rows(dir / "ode1_ablate_eps.csv"), 5u);
  a.axis = "p";
  ASSERT_EQ(cli::cmd_ablate(a, log), cli::kOk);
  EXPECT_EQ(data_rows(dir / "ode1_ablate_p.csv"), 20u);
  a.axis = "m";
  a.values = std::vector<double>{2, 4, 8};
  ASSERT_EQ(cli::cmd_ablate(a, log), cli::kOk);
  EXPECT_EQ(data_rows(dir / "ode1_ablate_m.csv"), 3u);
  a.axis = "q";
  EXPECT_ERROR(cli::cmd_ablate(a, log), ErrorCode::ConfigError);
}

TEST(Cli, InspectDescribesArtifacts) {
  const fs::path dir = scratch_dir("inspect");
  cli::PretrainArgs pa;
  pa.source.config = small_config(dir);
  pa.out = dir;
  pa.iterations = 0;
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_pretrain(pa, log), cli::kOk);
  std::ostringstream out;
  ASSERT_EQ(cli::cmd_inspect(dir / "ode1.body", out), cli::kOk);
  EXPECT_NE(out.str().find("feature_dim=16"), std::string::npos);
  out.str("");
  ASSERT_EQ(cli::cmd_inspect(dir / "ode1.json", out), cli::kOk);
  EXPECT_NE(out.str().find("family=ode1"), std::string::npos);
  out.str("");
  ASSERT_EQ(cli::cmd_inspect(dir / "ode1.cfg", out), cli::kOk);
  EXPECT_EQ(out.str(), slurp(dir / "ode1.cfg"));
}
