#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "paraopt/runner.hpp"

namespace {

void apply_cli_overrides(paraopt::RunConfig& cfg, bool small,
                         const std::vector<std::string>& sets) {
  if (small) paraopt::apply_small_preset(cfg);
  for (const std::string& kv : sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw paraopt::ConfigError("--set expects key=value, got '" + kv + "'");
    paraopt::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
}

void print_report(const paraopt::RunReport& rep) {
  std::printf("%s: %s", rep.config.name.c_str(),
              rep.converged ? "converged" : "did not converge");
  if (!rep.rows.empty())
    std::printf(" (%zu Newton steps, final |f|_inf = %.3e)", rep.rows.size() - 1,
                rep.rows.back().residual_inf_norm);
  std::printf("\n");
  if (!rep.error.empty()) std::printf("  solver stopped early: %s\n", rep.error.c_str());
  std::printf("  %4s  %-14s %10s %12s %12s %10s\n", "k", "|f|_inf", "gmres_cum",
              "lin/sub_cum", "nonlin_cum", "fine_cum");
  for (const paraopt::ReportRow& row : rep.rows)
    std::printf("  %4d  %-14.6e %10ld %12ld %12ld %10ld\n", row.newton_index,
                row.residual_inf_norm, row.gmres_iters_cum,
                row.coarse_linear_solves_per_subinterval_cum, row.coarse_nonlinear_solves_cum,
                row.fine_solves_cum);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-parallel solver for PDE-constrained optimal control"};
  app.require_subcommand(1);

  std::string config_path, out_csv, plot_svg;
  bool quiet = false, run_small = false;
  std::vector<std::string> run_sets;
  CLI::App* run_cmd = app.add_subcommand("run", "Solve one configuration");
  run_cmd->add_option("--config", config_path, "Configuration file (key = value lines)")
      ->required();
  run_cmd->add_option("--out", out_csv, "Write the per-iteration report as CSV");
  run_cmd->add_option("--plot", plot_svg, "Write an SVG chart of the solve counters");
  run_cmd->add_flag("--quiet", quiet, "Suppress the report table");
  run_cmd->add_flag("--small", run_small, "Shrink the problem to N=8, L=4");
  run_cmd->add_option("--set", run_sets, "Override a config entry, e.g. --set gamma=0.1");

  std::vector<std::string> config_paths;
  std::string out_dir;
  bool cmp_small = false;
  std::vector<std::string> cmp_sets;
  CLI::App* cmp_cmd =
      app.add_subcommand("compare", "Run several solver variants on the same problem");
  cmp_cmd->add_option("--configs", config_paths, "Comma-separated configuration files")
      ->required()
      ->delimiter(',');
  cmp_cmd->add_option("--out-dir", out_dir, "Directory for per-run CSVs, summary and charts")
      ->required();
  cmp_cmd->add_flag("--small", cmp_small, "Shrink every problem to N=8, L=4");
  cmp_cmd->add_option("--set", cmp_sets, "Override a config entry in every configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run_cmd->parsed()) {
      paraopt::RunConfig cfg = paraopt::parse_config_file(config_path);
      apply_cli_overrides(cfg, run_small, run_sets);
      const paraopt::RunReport rep = paraopt::run(cfg);
      if (!out_csv.empty()) paraopt::write_csv(rep, out_csv);
      if (!plot_svg.empty()) paraopt::emit_plot(rep, plot_svg);
      if (!quiet) print_report(rep);
      return rep.converged ? 0 : 2;
    }

    std::vector<paraopt::RunConfig> cfgs;
    for (const std::string& path : config_paths) {
      paraopt::RunConfig cfg = paraopt::parse_config_file(path);
      apply_cli_overrides(cfg, cmp_small, cmp_sets);
      cfgs.push_back(std::move(cfg));
    }
    const std::vector<paraopt::RunReport> reports = paraopt::compare(cfgs, out_dir);
    bool all_converged = true;
    for (size_t i = 0; i < reports.size(); ++i) {
      const paraopt::RunReport& rep = reports[i];
      all_converged = all_converged && rep.converged;
      std::printf("run%zu %s: %s, %zu Newton steps, %ld GMRES iterations, "
                  "%ld coarse linear solves per subinterval\n",
                  i + 1, rep.config.name.c_str(),
                  rep.converged ? "converged" : "did not converge",
                  rep.rows.empty() ? 0 : rep.rows.size() - 1,
                  rep.rows.empty() ? 0L : rep.rows.back().gmres_iters_cum,
                  rep.rows.empty() ? 0L
                                   : rep.rows.back().coarse_linear_solves_per_subinterval_cum);
    }
    std::printf("outputs written to %s\n", out_dir.c_str());
    return all_converged ? 0 : 2;
  } catch (const paraopt::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
