#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "dfsolve/harness.hpp"

using namespace dfsolve;
using nlohmann::json;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("dfsolve_test_" + name);
  std::filesystem::remove_all(d);
  return d;
}

std::vector<std::string> lines_of(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Config, RoundTrip) {
  ExperimentConfig c = default_config(Experiment::Ex2);
  c.degree = 1;
  c.solver.damping = 0.75;
  c.precond.variant = PrecondVariant::ScaledRiesz;
  c.ex4.n_values = {4, 8};
  c.formats = {"json"};
  const ExperimentConfig back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.experiment, Experiment::Ex2);
  EXPECT_EQ(back.kappa.type, "heterogeneous-ex2");
  EXPECT_DOUBLE_EQ(back.solver.damping, 0.75);
}

TEST(Config, PartialFileKeepsDefaults) {
  const json j = json::parse(R"({"experiment": "ex3", "params": {"F": 10}})");
  const ExperimentConfig c = config_from_json(j);
  EXPECT_EQ(c.degree, 1);
  EXPECT_EQ(c.kappa.type, "tensor-ex3");
  EXPECT_DOUBLE_EQ(c.forchheimer, 10.0);
  const ExperimentConfig k = config_from_json(json::parse(R"({"params": {"kappa": 0.5}})"));
  EXPECT_EQ(k.kappa.type, "constant");
  EXPECT_DOUBLE_EQ(k.kappa.value, 0.5);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  for (const char* text : {R"({"levles": 3})", R"({"solver": {"tol": 1}})", R"({"degree": 2})",
                           R"({"degree": "one"})", R"({"params": {"r": 1.5}})",
                           R"({"params": {"kappa": {"type": "granite"}}})", R"({"experiment": "ex9"})",
                           R"({"output": {"formats": ["xlsx"]}})", R"({"ex4": {"domain": "disc"}})",
                           R"({"precond": {"variant": "jacobi"}})"}) {
    EXPECT_THROW(config_from_json(json::parse(text)), std::invalid_argument) << text;
  }
  try {
    config_from_json(json::parse(R"({"solver": {"tol": 1}})"));
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("solver.tol"), std::string::npos);
  }
}

TEST(Config, Permeabilities) {
  const Permeability het = make_permeability({"heterogeneous-ex2", 1e-8});
  // On the ridge 10y - 5 = sin(10x) the field doubles.
  const double x = 0.3;
  const Vec2 ridge(x, (5.0 + std::sin(10.0 * x)) / 10.0);
  EXPECT_NEAR(het(ridge)(0, 0), 2e-8, 1e-20);
  const double s = -5.0 - std::sin(3.0);
  EXPECT_NEAR(het(Vec2(0.3, 0.0))(0, 0), 1e-8 * (1.0 + std::exp(-0.5 * s * s)), 1e-22);
  const Mat2 k = make_permeability({"tensor-ex3", 0.0})(Vec2::Zero());
  Eigen::SelfAdjointEigenSolver<Mat2> es(k);
  EXPECT_NEAR(es.eigenvalues()(0), 1e-4, 1e-16);
  EXPECT_NEAR(es.eigenvalues()(1), 5e-4, 1e-16);
  EXPECT_NEAR(std::atan2(es.eigenvectors()(1, 1), es.eigenvectors()(0, 1)), 0.082, 1e-12);
}

TEST(Manufactured, SelfCheckPasses) {
  for (double r : {2.0, 3.0, 3.5}) {
    ModelParams p;
    p.kappa = Permeability::scalar(1e-3);
    p.forchheimer = 10.0;
    p.r = r;
    EXPECT_LT(smooth_solution(p).self_check(p), 1e-10) << r;
  }
}

TEST(Manufactured, SelfCheckCatchesWrongData) {
  ModelParams p;
  p.r = 3.5;
  ManufacturedSolution m = smooth_solution(p);
  const auto f = m.f;
  m.f = [f](const Vec2& x) { return Vec2(f(x) + Vec2(1e-6 * x.x(), 0.0)); };
  EXPECT_GT(m.self_check(p), 1e-8);
  // Data built for one r does not solve another.
  ModelParams q = p;
  q.r = 3.0;
  EXPECT_GT(smooth_solution(p).self_check(q), 1e-3);
}

TEST(Runs, SmallSmoothStudy) {
  ExperimentConfig c = default_config(Experiment::Ex1);
  c.levels = 4;
  const ConvergenceResult res = run_ex1(c);
  ASSERT_EQ(res.report.levels.size(), 4u);
  EXPECT_FALSE(res.rate_u[0].has_value());
  for (const auto& l : res.report.levels) {
    EXPECT_TRUE(l.newton_converged);
    EXPECT_LE(l.newton_iters, 4);
    EXPECT_LE(l.div_residual_inf, 1e-10);
  }
  EXPECT_GT(*res.rate_u[3], 0.85);
  EXPECT_LT(*res.rate_u[3], 1.05);
  EXPECT_GT(*res.rate_p[3], 0.85);
  EXPECT_NEAR(res.report.levels[0].h, std::sqrt(0.5), 1e-12);
}

TEST(Runs, SmallChannelStudyHasWeightedErrors) {
  ExperimentConfig c = default_config(Experiment::Ex2);
  c.levels = 2;
  c.reference_levels = 1;
  const ConvergenceResult res = run_ex2(c);
  ASSERT_EQ(res.rate_p_weighted.size(), 2u);
  for (const auto& l : res.report.levels) {
    ASSERT_TRUE(l.err_p_Qhat.has_value());
    EXPECT_LT(*l.err_p_Qhat, l.err_p_l2);
    EXPECT_TRUE(l.newton_converged);
  }
}

TEST(Conditions, ScaledRowsDoNotDependOnForchheimerAtRest) {
  ExperimentConfig c = default_config(Experiment::Ex4);
  c.precond.variant = PrecondVariant::ScaledRiesz;
  c.ex4.r_values = {4.0};
  c.ex4.kappa_values = {1e-4};
  c.ex4.n_values = {4};
  const ConditionTable t = run_ex4(c);
  ASSERT_EQ(t.cells.size(), 3u);
  for (const auto& cell : t.cells) {
    ASSERT_TRUE(cell.cond.has_value()) << cell.error;
    EXPECT_NEAR(*cell.cond, *t.cells[0].cond, 1e-8 * *t.cells[0].cond);
  }
  EXPECT_NE(t.find(4.0, 1e-4, 1e3, 4), nullptr);
  EXPECT_EQ(t.find(4.0, 1e-4, 1e3, 8), nullptr);
}

TEST(Conditions, UnpreconditionedDegrades) {
  ExperimentConfig c = default_config(Experiment::Ex4);
  c.precond.variant = PrecondVariant::None;
  const ConditionCell a = condition_cell(c, 3.0, 1.0, 1.0, 4);
  const ConditionCell b = condition_cell(c, 3.0, 1e-8, 1.0, 4);
  ASSERT_TRUE(a.cond && b.cond);
  EXPECT_GT(*b.cond / *a.cond, 1e3);
}

TEST(Conditions, FailuresAreRecordedPerCell) {
  ExperimentConfig c = default_config(Experiment::Ex4);
  const ConditionCell bad = condition_cell(c, 3.0, -1.0, 1.0, 4);
  EXPECT_FALSE(bad.cond.has_value());
  EXPECT_FALSE(bad.error.empty());
}

TEST(Output, ReportRoundTripsAndCsvShape) {
  ConvergenceResult res;
  for (int i = 0; i < 3; ++i) {
    LevelErrors e;
    e.h = std::pow(0.5, i);
    e.n_dofs = 10 << (2 * i);
    e.err_u_h3div = 0.1 * std::pow(0.5, i);
    e.err_p_l2 = 0.2 * std::pow(0.25, i);
    e.err_p_Qhat = 1e-5 * std::pow(0.5, i);
    e.err_u_V = 3.0 * std::pow(0.5, i);
    e.newton_iters = 3;
    e.newton_converged = true;
    res.report.levels.push_back(e);
  }
  const auto h = std::vector<double>{1.0, 0.5, 0.25};
  res.rate_u = convergence_rates(h, {0.1, 0.05, 0.025});
  res.rate_p = convergence_rates(h, {0.2, 0.05, 0.0125});
  res.rate_u_weighted = res.rate_u;
  res.rate_p_weighted = res.rate_u;
  const auto dir = scratch_dir("report");
  emit_report(res, dir, {"csv", "json"});

  const auto errors = lines_of(dir / "errors.csv");
  ASSERT_EQ(errors.size(), 4u);
  EXPECT_EQ(errors[0], "level,dofs,h,err_u,err_p,err_u_weighted,err_p_weighted,div_residual,newton_iters,converged");
  EXPECT_EQ(errors[2], "1,40,0.5000,5.00e-02,5.00e-02,1.50e+00,5.00e-06,0.00e+00,3,1");
  const auto rates = lines_of(dir / "rates.csv");
  ASSERT_EQ(rates.size(), 4u);
  EXPECT_EQ(rates[1], "0,,,,");
  EXPECT_EQ(rates[3], "2,1.000,2.000,1.000,1.000");

  std::ifstream in(dir / "report.json");
  const json j = json::parse(in);
  const ErrorReport back = error_report_from_json(j);
  EXPECT_EQ(to_json(back), to_json(res.report));
  EXPECT_TRUE(j.at("rate_u")[0].is_null());
  EXPECT_DOUBLE_EQ(j.at("rate_p")[2].get<double>(), 2.0);
}

TEST(Output, ConditionTableLayout) {
  ConditionTable t;
  t.domain = "unit_square";
  t.state = "rest";
  for (double f : {1.0, 1e3})
    for (int n : {4, 8}) t.cells.push_back({3.0, 1e-8, f, n, 1.0 / n, 1.5 * n, {}});
  t.cells.back().cond.reset();
  t.cells.back().error = "boom";
  const auto path = scratch_dir("cond") / "cond.csv";
  emit_conditions(t, path);
  const auto l = lines_of(path);
  ASSERT_EQ(l.size(), 5u);
  EXPECT_EQ(l[1], "r,kappa,F,h=1/4,h=1/8");
  EXPECT_EQ(l[2], "3,1e-08,1,6.00,12.00");
  EXPECT_EQ(l[3], "3,1e-08,1000,6.00,error");
  EXPECT_NE(l[4].find("boom"), std::string::npos);
}

TEST(Output, VtkHasOneValuePerCell) {
  const Mesh m = structured_rectangle(2, 2, Rectangle{}, SideTags{});
  const FeSpace v = FeSpace::raviart_thomas(m, 0), q = FeSpace::discontinuous(m, 0);
  const FeFunction u = interpolate_rt([](const Vec2&) { return Vec2(3.0, 4.0); }, v);
  const FeFunction p = project_l2([](const Vec2&) { return 2.0; }, q);
  const auto path = scratch_dir("vtk") / "f.vtk";
  write_vtk(u, p, path);
  const auto l = lines_of(path);
  std::ostringstream all;
  for (const auto& s : l) all << s << '\n';
  EXPECT_NE(all.str().find("CELLS 8 32"), std::string::npos);
  int fives = 0, twos = 0;
  for (const auto& s : l) {
    fives += s == "5";
    twos += s == "2";
  }
  // 8 cell types plus 8 magnitudes of |(3,4)| = 5.
  EXPECT_EQ(fives, 16);
  EXPECT_EQ(twos, 8);
}
