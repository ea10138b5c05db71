#include <numbers>
#include <sstream>

#include "test_util.hpp"

using namespace chebpinn;
using namespace chebpinn::testing;

namespace {

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

const OneShotSystem& ode1_system() {
  static const OneShotSystem sys = [] {
    const FeatureMap& fm = small_ode1_model().feature_map;
    return assemble_system(fm, fm.op, fm.weights);
  }();
  return sys;
}

}  // namespace

TEST(Rk45, HarmonicOscillator) {
  const auto traj = rk45_integrate<2>(
      [](double, const std::array<double, 2>& y) { return std::array<double, 2>{y[1], -y[0]}; }, 0.0, std::numbers::pi,
      {1.0, 0.0});
  EXPECT_NEAR(traj(std::numbers::pi)[0], -1.0, 1e-8);
  EXPECT_NEAR(traj(1.0)[0], std::cos(1.0), 1e-8);
}

TEST(Rk45, ExponentialDecay) {
  const auto traj = rk45_integrate<1>([](double, const std::array<double, 1>& y) { return std::array<double, 1>{-y[0]}; },
                                      0.0, 5.0, {1.0});
  for (double t : {0.5, 2.0, 5.0}) EXPECT_NEAR(traj(t)[0], std::exp(-t), 1e-8);
}

TEST(Rk45, RejectsEmptyInterval) {
  EXPECT_ERROR(rk45_integrate<1>([](double, const std::array<double, 1>& y) { return y; }, 1.0, 1.0, {1.0}),
               ErrorCode::InvalidArgument);
}

TEST(Rk45, ReferenceSelfConvergence) {
  const auto suite = ode_test_suite(OdeKind::Ode1, OdeFamily::ode1(), 3, 0.5, 11);
  for (const auto& b : suite) {
    const auto a = rk45_reference(b);
    const auto tight = rk45_reference(b, 1e-12, 1e-14);
    for (double t : linspace(0.0, b.t_end, 51)) EXPECT_LE(std::abs(a(t)[0] - tight(t)[0]), 1e-7);
  }
}

TEST(Rk45, ReferenceSatisfiesTheEquation) {
  // the primary residual evaluated on the reference, with v' by central
  // differences, vanishes to the difference error
  for (OdeKind kind : {OdeKind::Ode1, OdeKind::Ode2}) {
    const OdeFamily fam = kind == OdeKind::Ode1 ? OdeFamily::ode1() : OdeFamily::ode2();
    const auto suite = ode_test_suite(kind, fam, 2, kind == OdeKind::Ode1 ? 0.5 : 0.1, 11);
    for (const auto& b : suite) {
      const auto ref = rk45_reference(b, 1e-12, 1e-14);
      const double e = 1e-4;
      for (double t : linspace(0.2, b.t_end - 0.2, 25)) {
        const auto y = ref(t);
        const double dv = (ref(t + e)[1] - ref(t - e)[1]) / (2 * e);
        EXPECT_LE(std::abs(ode_primary_residual(b, t, y[0], y[1], dv)), 1e-6);
      }
    }
  }
}

TEST(OdeSuite, DeterministicAndSized) {
  const auto a = ode_test_suite(OdeKind::Ode1, OdeFamily::ode1(), 20, 0.5, 11);
  const auto b = ode_test_suite(OdeKind::Ode1, OdeFamily::ode1(), 20, 0.5, 11);
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(a[i].beta, b[i].beta);
    EXPECT_EQ(a[i].u0, b[i].u0);
    EXPECT_EQ(a[i].epsilon, 0.5);
  }
}

TEST(OdeSuite, Ode2ReferencesStayInsideSurrogateRange) {
  const auto suite = ode_test_suite(OdeKind::Ode2, OdeFamily::ode2(), 20, 0.1, 11, 0.5, 6.0);
  ASSERT_EQ(suite.size(), 20u);
  for (const auto& b : suite) {
    const auto ref = rk45_reference(b);
    for (double t : linspace(0.0, b.t_end, 501)) {
      EXPECT_GE(ref(t)[0], 0.5);
      EXPECT_LE(ref(t)[0], 6.0);
    }
  }
}

TEST(ManufacturedPde, HandValues) {
  const PdeBenchmark b{0.1, 0.5, 1.0, std::numbers::pi, 0.4, 0.5};
  EXPECT_NEAR(b.u_true(0.5, 0.5), -0.25 + 0.4, 1e-15);
  EXPECT_NEAR(b.u_true(0.0, 0.3), 0.4, 1e-15);
  EXPECT_NEAR(b.u_true(1.0, 0.7), 0.4, 1e-15);
  EXPECT_NEAR(b.u_true(0.3, 0.0), 0.4, 1e-15);
  const ManufacturedField m = manufactured_pde(b);
  EXPECT_EQ(m.u.size(), 61u * 61u);
  EXPECT_EQ(m.points.rows(), 61u * 61u);
  EXPECT_DOUBLE_EQ(m.points(61, 0), m.x[1]);
  EXPECT_DOUBLE_EQ(m.points(61, 1), 0.0);
}

TEST(ManufacturedPde, ForcingMatchesFiniteDifferences) {
  for (const auto& b : pde_test_suite(0.05, 0.0, 0.5)) {
    const double e = 1e-5;
    for (auto [x, t] : std::vector<std::pair<double, double>>{{0.25, 0.4}, {0.6, 0.8}}) {
      const double u = b.u_true(x, t);
      const double ut = (b.u_true(x, t + e) - b.u_true(x, t - e)) / (2 * e);
      const double uxx = (b.u_true(x + e, t) - 2 * u + b.u_true(x - e, t)) / (e * e);
      const double expected = ut - b.diffusion * uxx + b.epsilon * reaction_nonlinearity(b.delta).value(u);
      EXPECT_NEAR(b.forcing(x, t), expected, 1e-6);
    }
  }
}

TEST(ManufacturedPde, PoleInReaction) {
  // A x(x−1) sin(kt) + b reaches −1 at x = 1/2, t = π/(2k) when b − A/4 = −1
  const PdeBenchmark b{0.1, 0.5, 4.0, std::numbers::pi, 0.0, 0.5};
  EXPECT_ERROR(manufactured_pde(b, 3), ErrorCode::PoleInReaction);
}

TEST(PdeSuite, ThirtyTwoInstancesInsideRange) {
  const auto suite = pde_test_suite(0.05, 0.0, 0.5);
  ASSERT_EQ(suite.size(), 32u);
  const RangeMap r = OnlineSettings::pde1().range;
  for (const auto& b : suite) {
    const ManufacturedField m = manufactured_pde(b, 21);
    for (double u : m.u) EXPECT_TRUE(r.contains(u));
  }
}

TEST(BaselineConfig, PresetValues) {
  const auto o1 = BaselineConfig::ode1();
  EXPECT_EQ(o1.lr, 1e-2);
  EXPECT_EQ(o1.step_size, 100u);
  EXPECT_EQ(o1.gamma, 0.92);
  EXPECT_EQ(o1.tau, 5e-4);
  EXPECT_EQ(o1.cap, 20000u);
  EXPECT_FALSE(o1.clip.has_value());
  const auto o2 = BaselineConfig::ode2();
  EXPECT_EQ(o2.tau, 5e-3);
  EXPECT_EQ(o2.clip, 1.0);
  EXPECT_EQ(o2.init, HeadInit::Random);
  const auto p = BaselineConfig::pde1();
  EXPECT_EQ(p.lr, 3e-3);
  EXPECT_EQ(p.step_size, 200u);
  EXPECT_EQ(p.gamma, 0.96);
  EXPECT_EQ(p.tau, 1e-2);
  EXPECT_EQ(p.cap, 4000u);
  EXPECT_EQ(p.interior_points, 60u);
  EXPECT_EQ(p.boundary_points, 200u);
}

TEST(Baseline, InfiniteToleranceStopsAtFirstIteration) {
  const FeatureMap& fm = small_ode1_model().feature_map;
  const auto suite = ode_test_suite(OdeKind::Ode1, OdeFamily::ode1(), 1, 0.5, 11);
  BaselineConfig cfg;
  cfg.tau = INFINITY;
  const BaselineResult r = run_baseline(fm, ode_problem(suite[0], OnlineSettings::ode1()), cfg);
  EXPECT_EQ(r.iterations, 1u);
  EXPECT_TRUE(r.reached);
  for (double w : r.head) EXPECT_EQ(w, 0.0);
}

TEST(Baseline, CapBoundsIterations) {
  const FeatureMap& fm = small_ode1_model().feature_map;
  const auto suite = ode_test_suite(OdeKind::Ode1, OdeFamily::ode1(), 1, 0.5, 11);
  BaselineConfig cfg;
  cfg.tau = 0.0;
  cfg.cap = 25;
  const BaselineResult r = run_baseline(fm, ode_problem(suite[0], OnlineSettings::ode1()), cfg);
  EXPECT_EQ(r.iterations, 25u);
  EXPECT_FALSE(r.reached);
}

TEST(Baseline, DeterministicForSeed) {
  const FeatureMap& fm = small_ode1_model().feature_map;
  const auto suite = ode_test_suite(OdeKind::Ode1, OdeFamily::ode1(), 1, 0.5, 11);
  BaselineConfig cfg = BaselineConfig::ode2();
  cfg.cap = 50;
  cfg.tau = 0.0;
  const auto inst = ode_problem(suite[0], OnlineSettings::ode1());
  EXPECT_EQ(run_baseline(fm, inst, cfg).head, run_baseline(fm, inst, cfg).head);
}

TEST(Timing, OnlineSolveExcludesAssembly) {
  const FeatureMap& fm = small_ode1_model().feature_map;
  const auto suite = ode_test_suite(OdeKind::Ode1, OdeFamily::ode1(), 5, 0.5, 11);
  for (const auto& b : suite) {
    const TimedSolve ts = timed_online(ode1_system(), fm, ode_problem(b, OnlineSettings::ode1()));
    EXPECT_GT(ts.seconds, 0.0);
    EXPECT_LT(ts.seconds, 1.0);
    EXPECT_EQ(ts.solution.diagnostics.factorizations, 0u);
  }
}

TEST(Suites, OdeRowsAndCsv) {
  const FeatureMap& fm = small_ode1_model().feature_map;
  const auto suite = ode_test_suite(OdeKind::Ode1, OdeFamily::ode1(), 5, 0.5, 11);
  SuiteOptions opt{OnlineSettings::ode1(), std::nullopt, 2};
  const auto rows = run_ode_suite(ode1_system(), fm, suite, opt);
  ASSERT_EQ(rows.size(), 5u);
  std::ostringstream os;
  write_results_csv(os, rows, 11);
  const auto lines = lines_of(os.str());
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], "# rng=mt19937_64 seed=11");
  EXPECT_EQ(lines[1],
            "benchmark,instance_id,epsilon,p,m,M_quad,mse,online_seconds,baseline_seconds,baseline_converged,"
            "range_warnings");
  EXPECT_EQ(lines[2].rfind("ode1,0,0.5,12,20,1000,", 0), 0u);
  // baseline columns are empty when the baseline is off
  EXPECT_NE(lines[2].find(",,,"), std::string::npos);
  const auto s = summarize(rows);
  EXPECT_FALSE(s.mean_baseline_seconds.has_value());
  EXPECT_EQ(s.baseline_runs, 0u);
}

TEST(Suites, JobsDoNotChangeMetrics) {
  const FeatureMap& fm = small_ode1_model().feature_map;
  const auto suite = ode_test_suite(OdeKind::Ode1, OdeFamily::ode1(), 4, 0.5, 11);
  const auto a = run_ode_suite(ode1_system(), fm, suite, {OnlineSettings::ode1(), std::nullopt, 1});
  const auto b = run_ode_suite(ode1_system(), fm, suite, {OnlineSettings::ode1(), std::nullopt, 3});
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a[i].mse, b[i].mse);
    EXPECT_EQ(a[i].sup_gap, b[i].sup_gap);
  }
}

TEST(Suites, SummaryAveragesConvergedBaselinesOnly) {
  std::vector<ResultRow> rows(3);
  rows[0].mse = 1.0;
  rows[1].mse = 2.0;
  rows[2].mse = 3.0;
  rows[0].baseline_seconds = 4.0;
  rows[0].baseline_converged = true;
  rows[1].baseline_seconds = 100.0;
  rows[1].baseline_converged = false;
  rows[2].baseline_seconds = 6.0;
  rows[2].baseline_converged = true;
  const auto s = summarize(rows);
  EXPECT_DOUBLE_EQ(s.mean_mse, 2.0);
  EXPECT_DOUBLE_EQ(*s.mean_baseline_seconds, 5.0);
  EXPECT_EQ(s.baseline_converged, 2u);
  EXPECT_EQ(s.baseline_runs, 3u);
}

TEST(Ablation, DefaultValueCounts) {
  EXPECT_EQ(default_ablation_values(AblationAxis::Epsilon, true).size(), 5u);
  EXPECT_EQ(default_ablation_values(AblationAxis::Order, true).size(), 20u);
  EXPECT_EQ(default_ablation_values(AblationAxis::Degree, true).size(), 20u);
  EXPECT_EQ(default_ablation_values(AblationAxis::Degree, false).size(), 20u);
}

TEST(Ablation, SweepsOnlyTheChosenAxis) {
  std::vector<OnlineSettings> seen;
  const std::vector<double> values{2, 4, 8};
  const auto rows = run_ablation(AblationAxis::Degree, values, OnlineSettings::ode1(), [&](const OnlineSettings& s) {
    seen.push_back(s);
    return static_cast<double>(s.degree);
  });
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(rows[i].mse, values[i]);
    EXPECT_EQ(seen[i].order, 12u);
    EXPECT_EQ(seen[i].epsilon, 0.5);
  }
  std::ostringstream os;
  write_ablation_csv(os, AblationAxis::Degree, rows);
  const auto lines = lines_of(os.str());
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "m,mse");
  EXPECT_ERROR(run_ablation(AblationAxis::Order, std::span<const double>{}, OnlineSettings{}, {}),
               ErrorCode::InvalidArgument);
}

TEST(Ablation, OdeMetricDecreasesWithDegree) {
  const FeatureMap& fm = small_ode1_model().feature_map;
  const auto suite = ode_test_suite(OdeKind::Ode1, OdeFamily::ode1(), 1, 0.5, 11);
  const std::vector<double> values{2, 8};
  const auto rows = run_ablation(AblationAxis::Degree, values, OnlineSettings::ode1(),
                                 ode_ablation_metric(ode1_system(), fm, suite[0]));
  EXPECT_LT(rows[1].mse, rows[0].mse);
}

TEST(Metrics, EffectiveHeadSumsWeightedOrders) {
  SeriesSolution sol;
  sol.epsilon = 0.5;
  sol.heads = {{1.0, 2.0}, {4.0, 0.0}, {8.0, -4.0}};
  const HeadWeights w = effective_head(sol);
  EXPECT_DOUBLE_EQ(w[0], 1.0 + 2.0 + 2.0);
  EXPECT_DOUBLE_EQ(w[1], 2.0 - 1.0);
}
