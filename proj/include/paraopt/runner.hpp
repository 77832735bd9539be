#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "paraopt/model.hpp"
#include "paraopt/precond.hpp"
#include "paraopt/shooting.hpp"

namespace paraopt {

/// Invalid configuration or malformed config file (a usage error at the CLI).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ProblemKind { Linear, Burgers };
enum class SetupKind { Smooth, Nonsmooth };
enum class PrecondKind { None, Diag };

/// One experiment configuration. `setup` selects the initial profile and the
/// target (smooth: sin(4 pi x) toward zero; nonsmooth: the indicator of
/// (0, 1/2] toward itself) and, unless overridden, the regularization
/// (smooth: 1, nonsmooth: 0.05).
struct RunConfig {
  std::string name = "run";
  ProblemKind problem = ProblemKind::Burgers;
  ObjectiveKind objective = ObjectiveKind::FinalValue;
  SetupKind setup = SetupKind::Smooth;
  int N = 32;
  int L = 20;
  int fine_steps = 64;
  int coarse_steps = 2;
  double gamma = -1.0;  // negative: derived from setup at resolve time
  double nu = 0.01;
  double T = 1.0;
  double alpha_arg = 0.0;  // alpha = exp(i * alpha_arg), unit modulus by construction
  PrecondKind precond = PrecondKind::None;
  InnerMethod inner_method = InnerMethod::AdjustedBC;
  bool combined_derivatives = true;
  double newton_tol = 1e-8;
  double gmres_tol = 1e-8;
  double inner_tol = 1e-10;
  int max_newton = 50;
  int max_gmres = 200;
};

/// Parses a flat key = value file ('#' starts a comment). Unknown keys and
/// malformed values raise ConfigError with the line number.
RunConfig parse_config_file(const std::string& path);

/// Applies one key = value override (the CLI's --set flag shares the file
/// parser's key table).
void apply_override(RunConfig& c, const std::string& key, const std::string& value);

/// Shrinks the configuration to the CI-sized preset (N = 8, L = 4).
void apply_small_preset(RunConfig& c);

/// Fills setup-derived defaults and validates; returns the finalized config.
RunConfig resolve(RunConfig c);

/// Instantiates the configured control problem (dynamics, boundary data,
/// objective).
ControlProblem build_problem(const RunConfig& c);

struct ReportRow {
  int newton_index = 0;
  double residual_inf_norm = 0.0;
  long gmres_iters_cum = 0;
  long coarse_linear_solves_per_subinterval_cum = 0;  // max over subintervals
  long coarse_nonlinear_solves_cum = 0;               // total over subintervals
  long fine_solves_cum = 0;                           // total over subintervals
};

struct RunReport {
  RunConfig config;
  std::vector<ReportRow> rows;
  bool converged = false;
  std::string error;  // nonempty when the solver stopped on a failure
};

/// Resolves the config, runs the Newton iteration, and converts the history
/// into report rows. Solver failures inside the iteration end up in `error`
/// with the rows recorded so far preserved.
RunReport run(const RunConfig& c);

/// Writes the report as CSV with a versioned header comment. Identical
/// configurations produce byte-identical files.
void write_csv(const RunReport& r, const std::string& path);

/// Renders the cumulative counters as a static SVG line chart. An empty
/// report is an error and produces no file.
void emit_plot(const RunReport& r, const std::string& path);

/// Runs each configuration (they must describe the same problem), writing
/// per-run CSVs, a summary CSV joined on the Newton index, and comparison
/// charts of the two headline counters into out_dir.
std::vector<RunReport> compare(const std::vector<RunConfig>& configs,
                               const std::string& out_dir);

}  // namespace paraopt
