#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "paraopt/parallel.hpp"
#include "paraopt/runner.hpp"
#include "test_support.hpp"

using namespace paraopt;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case, removed on destruction.
struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("paraopt-test-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name, const std::string& content) const {
    const fs::path p = path / name;
    std::ofstream out(p);
    out << content;
    return p.string();
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_linear_config() {
  RunConfig c;
  c.name = "lin";
  c.problem = ProblemKind::Linear;
  c.N = 4;
  c.L = 3;
  c.fine_steps = 16;
  c.coarse_steps = 2;
  c.gamma = 1.0;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(PARAOPT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

}  // namespace

TEST_SUITE("runner") {

TEST_CASE("config files parse every key, comments and blanks included") {
  TempDir tmp;
  const std::string path = tmp.file("full.cfg",
                                    "# experiment description\n"
                                    "name = demo\n"
                                    "problem = linear   # inline comment\n"
                                    "objective = tracking\n"
                                    "setup = nonsmooth\n"
                                    "\n"
                                    "n = 12\n"
                                    "l = 5\n"
                                    "fine_steps = 40\n"
                                    "coarse_steps = 4\n"
                                    "gamma = 0.25\n"
                                    "nu = 0.02\n"
                                    "t = 2.5\n"
                                    "alpha_arg = 0.7853981633974483\n"
                                    "precond = diag\n"
                                    "inner_method = inner_gmres\n"
                                    "combined_derivatives = off\n"
                                    "newton_tol = 1e-9\n"
                                    "gmres_tol = 1e-7\n"
                                    "inner_tol = 1e-11\n"
                                    "max_newton = 30\n"
                                    "max_gmres = 150\n");
  const RunConfig c = parse_config_file(path);
  CHECK(c.name == "demo");
  CHECK(c.problem == ProblemKind::Linear);
  CHECK(c.objective == ObjectiveKind::Tracking);
  CHECK(c.setup == SetupKind::Nonsmooth);
  CHECK(c.N == 12);
  CHECK(c.L == 5);
  CHECK(c.fine_steps == 40);
  CHECK(c.coarse_steps == 4);
  CHECK(c.gamma == 0.25);
  CHECK(c.nu == 0.02);
  CHECK(c.T == 2.5);
  CHECK(c.alpha_arg == doctest::Approx(M_PI / 4.0).epsilon(1e-15));
  CHECK(c.precond == PrecondKind::Diag);
  CHECK(c.inner_method == InnerMethod::InnerGmres);
  CHECK(c.combined_derivatives == false);
  CHECK(c.newton_tol == 1e-9);
  CHECK(c.gmres_tol == 1e-7);
  CHECK(c.inner_tol == 1e-11);
  CHECK(c.max_newton == 30);
  CHECK(c.max_gmres == 150);
}

TEST_CASE("the run name defaults to the file stem") {
  TempDir tmp;
  const std::string path = tmp.file("heat_sweep.cfg", "problem = linear\n");
  CHECK(parse_config_file(path).name == "heat_sweep");
}

TEST_CASE("config errors carry the file position") {
  TempDir tmp;
  SUBCASE("unknown key") {
    const std::string path = tmp.file("bad.cfg", "problem = linear\nbogus = 1\n");
    try {
      parse_config_file(path);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find(":2:") != std::string::npos);
      CHECK(msg.find("bogus") != std::string::npos);
    }
  }
  SUBCASE("malformed integer") {
    const std::string path = tmp.file("bad.cfg", "n = twelve\n");
    try {
      parse_config_file(path);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find(":1:") != std::string::npos);
      CHECK(msg.find("integer") != std::string::npos);
    }
  }
  SUBCASE("missing separator") {
    const std::string path = tmp.file("bad.cfg", "problem linear\n");
    CHECK_THROWS_AS(parse_config_file(path), ConfigError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(parse_config_file((tmp.path / "nope.cfg").string()), ConfigError);
  }
}

TEST_CASE("overrides trim, lowercase and validate like the file parser") {
  RunConfig c;
  apply_override(c, "  N ", " 12 ");
  CHECK(c.N == 12);
  apply_override(c, "PRECOND", "Diag");
  CHECK(c.precond == PrecondKind::Diag);
  apply_override(c, "combined_derivatives", "no");
  CHECK(c.combined_derivatives == false);
  apply_override(c, "combined_derivatives", "1");
  CHECK(c.combined_derivatives == true);
  CHECK_THROWS_AS(apply_override(c, "bogus", "1"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "gamma", "abc"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "combined_derivatives", "maybe"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "n", "7.5"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "", "1"), ConfigError);
}

TEST_CASE("the small preset shrinks only the problem size") {
  RunConfig c;
  c.fine_steps = 128;
  apply_small_preset(c);
  CHECK(c.N == 8);
  CHECK(c.L == 4);
  CHECK(c.fine_steps == 128);
  CHECK(c.coarse_steps == 2);
}

TEST_CASE("resolve derives gamma from the setup") {
  RunConfig c;
  CHECK(resolve(c).gamma == 1.0);
  c.setup = SetupKind::Nonsmooth;
  CHECK(resolve(c).gamma == 0.05);
  c.gamma = 0.7;
  CHECK(resolve(c).gamma == 0.7);
}

TEST_CASE("resolve rejects inconsistent configurations") {
  auto broken = [](auto mutate) {
    RunConfig c = small_linear_config();
    mutate(c);
    CHECK_THROWS_AS(resolve(c), ConfigError);
  };
  broken([](RunConfig& c) { c.N = 0; });
  broken([](RunConfig& c) { c.problem = ProblemKind::Burgers; c.N = 1; });
  broken([](RunConfig& c) { c.L = 0; });
  broken([](RunConfig& c) { c.coarse_steps = 0; });
  broken([](RunConfig& c) { c.fine_steps = 1; });
  broken([](RunConfig& c) { c.gamma = 0.0; });
  broken([](RunConfig& c) { c.problem = ProblemKind::Burgers; c.nu = 0.0; });
  broken([](RunConfig& c) { c.T = 0.0; });
  broken([](RunConfig& c) { c.newton_tol = 0.0; });
  broken([](RunConfig& c) { c.max_newton = -1; });
  broken([](RunConfig& c) { c.max_gmres = 0; });
}

TEST_CASE("the linear problem is the scaled second-difference stencil") {
  RunConfig c = small_linear_config();
  c.N = 5;
  const ControlProblem p = build_problem(resolve(c));
  REQUIRE(p.dim == 5);

  // g(e_2) exposes the middle column of K: N^2 * (0, 1, -2, 1, 0).
  RealVec e2 = RealVec::Zero(5);
  e2[2] = 1.0;
  RealVec col(5);
  col << 0.0, 25.0, -50.0, 25.0, 0.0;
  CHECK((p.g(e2) - col).norm() == 0.0);

  // The smooth profile is sampled on the uniform interior grid.
  for (int i = 0; i < 5; ++i)
    CHECK(p.y_init[i] ==
          doctest::Approx(std::sin(4.0 * M_PI * (i + 1) / 6.0)).epsilon(1e-15));
  CHECK(p.objective.kind == ObjectiveKind::FinalValue);
  CHECK(p.objective.y_target.norm() == 0.0);
}

TEST_CASE("the nonsmooth setup tracks its own initial profile") {
  RunConfig c;
  c.problem = ProblemKind::Burgers;
  c.objective = ObjectiveKind::Tracking;
  c.setup = SetupKind::Nonsmooth;
  c.N = 6;
  const ControlProblem p = build_problem(resolve(c));
  REQUIRE(p.dim == 6);
  const BurgersModel m = chebyshev_setup(6, c.nu);
  CHECK((p.y_init - sample_initial(InitialProfile::Nonsmooth, m.nodes)).norm() == 0.0);
  CHECK(p.objective.kind == ObjectiveKind::Tracking);
  CHECK((p.desired_state(0.3) - p.y_init).norm() == 0.0);
  CHECK(p.gamma == 0.05);
}

TEST_CASE("a run produces a convergent, monotone report") {
  const RunReport rep = run(small_linear_config());
  CHECK(rep.converged);
  CHECK(rep.error.empty());
  REQUIRE(rep.rows.size() >= 2);
  CHECK(rep.rows.front().newton_index == 0);
  CHECK(rep.rows.back().residual_inf_norm <= 1e-8);
  for (size_t k = 1; k < rep.rows.size(); ++k) {
    CHECK(rep.rows[k].newton_index == static_cast<int>(k));
    CHECK(rep.rows[k].gmres_iters_cum >= rep.rows[k - 1].gmres_iters_cum);
    CHECK(rep.rows[k].coarse_linear_solves_per_subinterval_cum >=
          rep.rows[k - 1].coarse_linear_solves_per_subinterval_cum);
    CHECK(rep.rows[k].coarse_nonlinear_solves_cum >
          rep.rows[k - 1].coarse_nonlinear_solves_cum);
    CHECK(rep.rows[k].fine_solves_cum > rep.rows[k - 1].fine_solves_cum);
  }
  // The initial-guess row reports the residual before any GMRES work.
  CHECK(rep.rows.front().gmres_iters_cum == 0);
}

TEST_CASE("reports serialize deterministically") {
  TempDir tmp;
  const std::string a = (tmp.path / "a.csv").string();
  const std::string b = (tmp.path / "b.csv").string();
  write_csv(run(small_linear_config()), a);
  write_csv(run(small_linear_config()), b);
  const std::string ca = slurp(a);
  CHECK(ca == slurp(b));
  CHECK(ca.rfind("# paraopt-report v1\n", 0) == 0);
  CHECK(ca.find("# converged=true\n") != std::string::npos);
  CHECK(ca.find("newton_index,residual_inf_norm,gmres_iters_cum,") != std::string::npos);
  CHECK(ca.find("problem=linear") != std::string::npos);
}

TEST_CASE("reports do not depend on the worker count") {
  TempDir tmp;
  const std::string a = (tmp.path / "w1.csv").string();
  const std::string b = (tmp.path / "w4.csv").string();
  set_max_workers(1);
  write_csv(run(small_linear_config()), a);
  set_max_workers(4);
  write_csv(run(small_linear_config()), b);
  set_max_workers(0);
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("plots render the counters and reject empty reports") {
  TempDir tmp;
  const RunReport rep = run(small_linear_config());
  const std::string svg_path = (tmp.path / "run.svg").string();
  emit_plot(rep, svg_path);
  const std::string svg = slurp(svg_path);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
  CHECK(svg.find("gmres_iters_cum") != std::string::npos);

  RunReport empty;
  empty.config = rep.config;
  const std::string missing = (tmp.path / "none.svg").string();
  CHECK_THROWS_WITH_AS(emit_plot(empty, missing), "plot: report has no rows",
                       std::runtime_error);
  CHECK(!fs::exists(missing));
}

TEST_CASE("compare requires at least two matching configurations") {
  TempDir tmp;
  CHECK_THROWS_AS(compare({small_linear_config()}, tmp.path.string()), ConfigError);

  RunConfig a = small_linear_config();
  RunConfig b = small_linear_config();
  b.N = 6;
  CHECK_THROWS_AS(compare({a, b}, tmp.path.string()), ConfigError);
}

TEST_CASE("compare writes per-run reports, a joined summary and charts") {
  TempDir tmp;
  RunConfig plain = small_linear_config();
  plain.name = "plain";
  RunConfig adjusted = small_linear_config();
  adjusted.name = "adjusted";
  adjusted.precond = PrecondKind::Diag;
  adjusted.inner_method = InnerMethod::AdjustedBC;
  RunConfig krylov = small_linear_config();
  krylov.name = "krylov";
  krylov.precond = PrecondKind::Diag;
  krylov.inner_method = InnerMethod::InnerGmres;
  krylov.combined_derivatives = false;

  const std::vector<RunReport> reports =
      compare({plain, adjusted, krylov}, tmp.path.string());
  REQUIRE(reports.size() == 3);
  for (const RunReport& r : reports) CHECK(r.converged);

  CHECK(fs::exists(tmp.path / "run1_plain.csv"));
  CHECK(fs::exists(tmp.path / "run2_adjusted.csv"));
  CHECK(fs::exists(tmp.path / "run3_krylov.csv"));
  CHECK(fs::exists(tmp.path / "gmres_iters.svg"));
  CHECK(fs::exists(tmp.path / "coarse_linear_solves.svg"));

  const std::string summary = slurp((tmp.path / "summary.csv").string());
  CHECK(summary.rfind("# paraopt-compare v1\n", 0) == 0);
  CHECK(summary.find("run1.residual_inf_norm") != std::string::npos);
  CHECK(summary.find("run3.fine_solves_cum") != std::string::npos);

  // The joined table has one line per Newton index of the longest run, after
  // the version line, one config echo per run, and the column header.
  size_t max_rows = 0;
  for (const RunReport& r : reports) max_rows = std::max(max_rows, r.rows.size());
  const size_t lines = static_cast<size_t>(
      std::count(summary.begin(), summary.end(), '\n'));
  CHECK(lines == 1 + reports.size() + 1 + max_rows);
}

TEST_CASE("command line: solve, report and chart round trip") {
  TempDir tmp;
  const std::string cfg = std::string(PARAOPT_TEST_DATA) + "/linear_small.cfg";
  const std::string csv = (tmp.path / "out.csv").string();
  const std::string svg = (tmp.path / "out.svg").string();
  const int code =
      run_cli("run --config " + cfg + " --out " + csv + " --plot " + svg + " --quiet");
  CHECK(code == 0);
  CHECK(slurp(csv).rfind("# paraopt-report v1\n", 0) == 0);
  CHECK(slurp(svg).find("<svg") != std::string::npos);
}

TEST_CASE("command line: usage and configuration errors exit with 1") {
  TempDir tmp;
  CHECK(run_cli("run --config " + (tmp.path / "nope.cfg").string()) == 1);
  const std::string bad = tmp.file("bad.cfg", "bogus = 1\n");
  CHECK(run_cli("run --config " + bad) == 1);
  CHECK(run_cli("compare --out-dir " + tmp.path.string()) == 1);
  CHECK(run_cli("frobnicate") == 1);
}

TEST_CASE("command line: a non-convergent solve exits with 2") {
  const std::string cfg = std::string(PARAOPT_TEST_DATA) + "/linear_small.cfg";
  const int code = run_cli("run --config " + cfg +
                           " --quiet --set max_newton=1 --set newton_tol=1e-15");
  CHECK(code == 2);
}

}  // TEST_SUITE
