#include "paraopt/runner.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace paraopt {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

int parse_int(const std::string& key, const std::string& value) {
  size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(value, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + value + "'");
  }
  if (pos != value.size())
    throw ConfigError("config key '" + key + "': expected an integer, got '" + value + "'");
  return v;
}

double parse_double(const std::string& key, const std::string& value) {
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
  }
  if (pos != value.size())
    throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = lower(value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + value + "'");
}

const char* problem_name(ProblemKind p) {
  return p == ProblemKind::Linear ? "linear" : "burgers";
}
const char* objective_name(ObjectiveKind o) {
  return o == ObjectiveKind::FinalValue ? "final_value" : "tracking";
}
const char* setup_name(SetupKind s) { return s == SetupKind::Smooth ? "smooth" : "nonsmooth"; }
const char* precond_name(PrecondKind p) { return p == PrecondKind::None ? "none" : "diag"; }
const char* inner_name(InnerMethod m) {
  switch (m) {
    case InnerMethod::AdjustedBC: return "adjusted_bc";
    case InnerMethod::InnerGmres: return "inner_gmres";
    case InnerMethod::Direct: return "direct";
  }
  return "?";
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void apply_override(RunConfig& c, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = lower(trim(raw_key));
  const std::string value = trim(raw_value);
  if (key.empty()) throw ConfigError("empty config key");

  if (key == "name") {
    c.name = value;
  } else if (key == "problem") {
    const std::string v = lower(value);
    if (v == "linear")
      c.problem = ProblemKind::Linear;
    else if (v == "burgers")
      c.problem = ProblemKind::Burgers;
    else
      throw ConfigError("config key 'problem': expected linear|burgers, got '" + value + "'");
  } else if (key == "objective") {
    const std::string v = lower(value);
    if (v == "final_value")
      c.objective = ObjectiveKind::FinalValue;
    else if (v == "tracking")
      c.objective = ObjectiveKind::Tracking;
    else
      throw ConfigError("config key 'objective': expected final_value|tracking, got '" +
                        value + "'");
  } else if (key == "setup") {
    const std::string v = lower(value);
    if (v == "smooth")
      c.setup = SetupKind::Smooth;
    else if (v == "nonsmooth")
      c.setup = SetupKind::Nonsmooth;
    else
      throw ConfigError("config key 'setup': expected smooth|nonsmooth, got '" + value + "'");
  } else if (key == "n") {
    c.N = parse_int(key, value);
  } else if (key == "l") {
    c.L = parse_int(key, value);
  } else if (key == "fine_steps") {
    c.fine_steps = parse_int(key, value);
  } else if (key == "coarse_steps") {
    c.coarse_steps = parse_int(key, value);
  } else if (key == "gamma") {
    c.gamma = parse_double(key, value);
  } else if (key == "nu") {
    c.nu = parse_double(key, value);
  } else if (key == "t") {
    c.T = parse_double(key, value);
  } else if (key == "alpha_arg") {
    c.alpha_arg = parse_double(key, value);
  } else if (key == "precond") {
    const std::string v = lower(value);
    if (v == "none")
      c.precond = PrecondKind::None;
    else if (v == "diag")
      c.precond = PrecondKind::Diag;
    else
      throw ConfigError("config key 'precond': expected none|diag, got '" + value + "'");
  } else if (key == "inner_method") {
    const std::string v = lower(value);
    if (v == "adjusted_bc")
      c.inner_method = InnerMethod::AdjustedBC;
    else if (v == "inner_gmres")
      c.inner_method = InnerMethod::InnerGmres;
    else if (v == "direct")
      c.inner_method = InnerMethod::Direct;
    else
      throw ConfigError(
          "config key 'inner_method': expected adjusted_bc|inner_gmres|direct, got '" + value +
          "'");
  } else if (key == "combined_derivatives") {
    c.combined_derivatives = parse_bool(key, value);
  } else if (key == "newton_tol") {
    c.newton_tol = parse_double(key, value);
  } else if (key == "gmres_tol") {
    c.gmres_tol = parse_double(key, value);
  } else if (key == "inner_tol") {
    c.inner_tol = parse_double(key, value);
  } else if (key == "max_newton") {
    c.max_newton = parse_int(key, value);
  } else if (key == "max_gmres") {
    c.max_gmres = parse_int(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");

  RunConfig c;
  c.name = std::filesystem::path(path).stem().string();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      apply_override(c, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

void apply_small_preset(RunConfig& c) {
  c.N = 8;
  c.L = 4;
}

RunConfig resolve(RunConfig c) {
  if (c.gamma < 0.0) c.gamma = c.setup == SetupKind::Smooth ? 1.0 : 0.05;

  if (c.N < 1) throw ConfigError("N must be >= 1");
  if (c.problem == ProblemKind::Burgers && c.N < 2)
    throw ConfigError("the Burgers discretization needs N >= 2");
  if (c.L < 1) throw ConfigError("L must be >= 1");
  if (c.coarse_steps < 1) throw ConfigError("coarse_steps must be >= 1");
  if (c.fine_steps < c.coarse_steps) throw ConfigError("fine_steps must be >= coarse_steps");
  if (c.gamma <= 0.0) throw ConfigError("gamma must be positive");
  if (c.problem == ProblemKind::Burgers && c.nu <= 0.0)
    throw ConfigError("nu must be positive");
  if (c.T <= 0.0) throw ConfigError("T must be positive");
  if (c.newton_tol <= 0.0 || c.gmres_tol <= 0.0 || c.inner_tol <= 0.0)
    throw ConfigError("tolerances must be positive");
  if (c.max_newton < 0) throw ConfigError("max_newton must be >= 0");
  if (c.max_gmres < 1) throw ConfigError("max_gmres must be >= 1");
  return c;
}

ControlProblem build_problem(const RunConfig& c) {
  RealVec nodes;
  if (c.problem == ProblemKind::Burgers) {
    // nodes set below from the collocation grid
  } else {
    nodes.resize(c.N);
    for (int i = 0; i < c.N; ++i) nodes[i] = static_cast<double>(i + 1) / (c.N + 1);
  }

  const auto profile =
      c.setup == SetupKind::Smooth ? InitialProfile::Smooth : InitialProfile::Nonsmooth;

  if (c.problem == ProblemKind::Burgers) {
    BurgersModel m = chebyshev_setup(c.N, c.nu);
    nodes = m.nodes;
    const RealVec y0 = sample_initial(profile, nodes);
    const RealVec target = c.setup == SetupKind::Smooth
                               ? RealVec(RealVec::Zero(c.N))
                               : sample_initial(InitialProfile::Nonsmooth, nodes);
    Objective obj = c.objective == ObjectiveKind::FinalValue
                        ? Objective::final_value(target)
                        : Objective::tracking_constant(target);
    return make_burgers_problem(m, c.gamma, c.T, y0, std::move(obj));
  }

  // Heat-like stiffness: second-difference stencil scaled by N^2.
  LinearModel m;
  m.K = RealMat::Zero(c.N, c.N);
  const double s = static_cast<double>(c.N) * c.N;
  for (int i = 0; i < c.N; ++i) {
    m.K(i, i) = -2.0 * s;
    if (i > 0) m.K(i, i - 1) = s;
    if (i + 1 < c.N) m.K(i, i + 1) = s;
  }
  const RealVec y0 = sample_initial(profile, nodes);
  const RealVec target = c.setup == SetupKind::Smooth
                             ? RealVec(RealVec::Zero(c.N))
                             : sample_initial(InitialProfile::Nonsmooth, nodes);
  Objective obj = c.objective == ObjectiveKind::FinalValue
                      ? Objective::final_value(target)
                      : Objective::tracking_constant(target);
  return make_linear_problem(m, c.gamma, c.T, y0, std::move(obj));
}

RunReport run(const RunConfig& raw) {
  const RunConfig c = resolve(raw);
  const ControlProblem p = build_problem(c);

  NewtonOptions opts;
  opts.L = c.L;
  opts.coarse_steps = c.coarse_steps;
  opts.fine_steps = c.fine_steps;
  opts.newton_tol = c.newton_tol;
  opts.max_newton = c.max_newton;
  opts.gmres_tol = c.gmres_tol;
  opts.max_gmres = c.max_gmres;
  opts.combined_derivatives = c.combined_derivatives;

  PrecondFactory factory;
  if (c.precond == PrecondKind::Diag) {
    PrecondOptions po;
    po.alpha = std::polar(1.0, c.alpha_arg);
    po.method = c.inner_method;
    po.inner_tol = c.inner_tol;
    po.coarse_steps = c.coarse_steps;
    factory = make_diag_precond_factory(p, c.L, po);
  }

  const NewtonResult res = newton_solve(p, opts, factory);

  RunReport rep;
  rep.config = c;
  rep.converged = res.converged;
  rep.error = res.error;
  rep.rows.reserve(res.history.size());
  for (const NewtonStepRecord& rec : res.history) {
    ReportRow row;
    row.newton_index = rec.newton_index;
    row.residual_inf_norm = rec.residual_norm;
    row.gmres_iters_cum = rec.ledger.gmres_iters;
    row.coarse_linear_solves_per_subinterval_cum = rec.ledger.max_coarse_linear();
    row.coarse_nonlinear_solves_cum = rec.ledger.total_coarse_nonlinear();
    row.fine_solves_cum = rec.ledger.total_fine();
    rep.rows.push_back(row);
  }
  return rep;
}

namespace {

std::string config_echo(const RunConfig& c) {
  std::ostringstream o;
  o << "name=" << c.name << " problem=" << problem_name(c.problem)
    << " objective=" << objective_name(c.objective) << " setup=" << setup_name(c.setup)
    << " N=" << c.N << " L=" << c.L << " fine_steps=" << c.fine_steps
    << " coarse_steps=" << c.coarse_steps << " gamma=" << fmt_double(c.gamma)
    << " nu=" << fmt_double(c.nu) << " T=" << fmt_double(c.T)
    << " alpha_arg=" << fmt_double(c.alpha_arg) << " precond=" << precond_name(c.precond)
    << " inner_method=" << inner_name(c.inner_method)
    << " combined_derivatives=" << (c.combined_derivatives ? "true" : "false")
    << " newton_tol=" << fmt_double(c.newton_tol) << " gmres_tol=" << fmt_double(c.gmres_tol)
    << " inner_tol=" << fmt_double(c.inner_tol) << " max_newton=" << c.max_newton
    << " max_gmres=" << c.max_gmres;
  return o.str();
}

constexpr const char* kCsvColumns =
    "newton_index,residual_inf_norm,gmres_iters_cum,"
    "coarse_linear_solves_per_subinterval_cum,coarse_nonlinear_solves_cum,fine_solves_cum";

void write_report_body(std::ostream& out, const RunReport& r) {
  out << "# paraopt-report v1\n";
  out << "# " << config_echo(r.config) << "\n";
  out << "# converged=" << (r.converged ? "true" : "false") << "\n";
  if (!r.error.empty()) out << "# error=" << r.error << "\n";
  out << kCsvColumns << "\n";
  for (const ReportRow& row : r.rows) {
    out << row.newton_index << ',' << fmt_double(row.residual_inf_norm) << ','
        << row.gmres_iters_cum << ',' << row.coarse_linear_solves_per_subinterval_cum << ','
        << row.coarse_nonlinear_solves_cum << ',' << row.fine_solves_cum << "\n";
  }
}

}  // namespace

void write_csv(const RunReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_report_body(out, r);
  if (!out) throw std::runtime_error("failed while writing '" + path + "'");
}

namespace {

struct Series {
  std::string label;
  std::vector<double> values;  // indexed by newton step
};

std::string fmt_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

/// Minimal deterministic SVG line chart: integer x axis, linear y axis.
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& y_label, const std::vector<Series>& series) {
  size_t max_len = 0;
  double y_max = 0.0;
  for (const Series& s : series) {
    max_len = std::max(max_len, s.values.size());
    for (double v : s.values) y_max = std::max(y_max, v);
  }
  if (max_len == 0) throw std::runtime_error("plot: no data rows");
  if (y_max <= 0.0) y_max = 1.0;
  const double x_max = static_cast<double>(max_len - 1);

  const double w = 760, h = 460;
  const double ml = 70, mr = 160, mt = 40, mb = 50;
  const double pw = w - ml - mr, ph = h - mt - mb;
  auto px = [&](double x) { return ml + (x_max > 0 ? x / x_max : 0.5) * pw; };
  auto py = [&](double y) { return mt + ph - (y / y_max) * ph; };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                 "#9467bd", "#ff7f0e", "#8c564b"};
  const int ncolors = 6;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << w << " " << h
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << ml << "\" y=\"22\" font-size=\"15\">" << title << "</text>\n";

  // Axes and ticks.
  out << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
      << mt + ph << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
      << "\" stroke=\"black\"/>\n";
  const int x_step = std::max(1, static_cast<int>(max_len - 1) / 10);
  for (size_t i = 0; i < max_len; i += static_cast<size_t>(x_step)) {
    const double x = px(static_cast<double>(i));
    out << "<line x1=\"" << fmt_coord(x) << "\" y1=\"" << mt + ph << "\" x2=\"" << fmt_coord(x)
        << "\" y2=\"" << mt + ph + 5 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << fmt_coord(x) << "\" y=\"" << mt + ph + 20
        << "\" text-anchor=\"middle\">" << i << "</text>\n";
  }
  for (int t = 0; t <= 5; ++t) {
    const double yv = y_max * t / 5.0;
    const double y = py(yv);
    out << "<line x1=\"" << ml - 5 << "\" y1=\"" << fmt_coord(y) << "\" x2=\"" << ml + pw
        << "\" y2=\"" << fmt_coord(y) << "\" stroke=\"#dddddd\"/>\n";
    char lab[32];
    std::snprintf(lab, sizeof(lab), "%g", yv);
    out << "<text x=\"" << ml - 8 << "\" y=\"" << fmt_coord(y + 4)
        << "\" text-anchor=\"end\">" << lab << "</text>\n";
  }
  out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << h - 12
      << "\" text-anchor=\"middle\">Newton iteration</text>\n";
  out << "<text x=\"18\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << mt + ph / 2 << ")\">"
      << y_label << "</text>\n";

  // Series polylines and legend.
  for (size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const char* color = colors[si % ncolors];
    if (!s.values.empty()) {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
      for (size_t i = 0; i < s.values.size(); ++i) {
        if (i) out << ' ';
        out << fmt_coord(px(static_cast<double>(i))) << ',' << fmt_coord(py(s.values[i]));
      }
      out << "\"/>\n";
      for (size_t i = 0; i < s.values.size(); ++i)
        out << "<circle cx=\"" << fmt_coord(px(static_cast<double>(i))) << "\" cy=\""
            << fmt_coord(py(s.values[i])) << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }
    const double ly = mt + 14 + 18 * static_cast<double>(si);
    out << "<line x1=\"" << ml + pw + 12 << "\" y1=\"" << fmt_coord(ly - 4) << "\" x2=\""
        << ml + pw + 34 << "\" y2=\"" << fmt_coord(ly - 4) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << ml + pw + 40 << "\" y=\"" << fmt_coord(ly) << "\">" << s.label
        << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("failed while writing '" + path + "'");
}

}  // namespace

void emit_plot(const RunReport& r, const std::string& path) {
  if (r.rows.empty()) throw std::runtime_error("plot: report has no rows");
  std::vector<Series> series(4);
  series[0].label = "gmres_iters_cum";
  series[1].label = "coarse_linear/subint";
  series[2].label = "coarse_nonlinear_cum";
  series[3].label = "fine_solves_cum";
  for (const ReportRow& row : r.rows) {
    series[0].values.push_back(static_cast<double>(row.gmres_iters_cum));
    series[1].values.push_back(static_cast<double>(row.coarse_linear_solves_per_subinterval_cum));
    series[2].values.push_back(static_cast<double>(row.coarse_nonlinear_solves_cum));
    series[3].values.push_back(static_cast<double>(row.fine_solves_cum));
  }
  write_svg_chart(path, r.config.name, "cumulative count", series);
}

namespace {

std::string sanitize(const std::string& name) {
  std::string out;
  for (char ch : name)
    out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_') ? ch : '-';
  return out.empty() ? std::string("run") : out;
}

void check_same_problem(const RunConfig& a, const RunConfig& b) {
  const bool same = a.problem == b.problem && a.objective == b.objective &&
                    a.setup == b.setup && a.N == b.N && a.L == b.L &&
                    a.fine_steps == b.fine_steps && a.coarse_steps == b.coarse_steps &&
                    a.gamma == b.gamma && a.nu == b.nu && a.T == b.T;
  if (!same)
    throw ConfigError("compare: configurations '" + a.name + "' and '" + b.name +
                      "' describe different problems");
}

}  // namespace

std::vector<RunReport> compare(const std::vector<RunConfig>& configs,
                               const std::string& out_dir) {
  if (configs.size() < 2) throw ConfigError("compare: need at least two configurations");

  std::vector<RunConfig> resolved;
  resolved.reserve(configs.size());
  for (const RunConfig& c : configs) resolved.push_back(resolve(c));
  for (size_t i = 1; i < resolved.size(); ++i) check_same_problem(resolved[0], resolved[i]);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create directory '" + out_dir + "'");

  std::vector<RunReport> reports;
  reports.reserve(resolved.size());
  for (size_t i = 0; i < resolved.size(); ++i) {
    RunReport rep = run(resolved[i]);
    const std::string base =
        "run" + std::to_string(i + 1) + "_" + sanitize(rep.config.name);
    write_csv(rep, (std::filesystem::path(out_dir) / (base + ".csv")).string());
    reports.push_back(std::move(rep));
  }

  // Joined summary, one column group per run, keyed by Newton index.
  {
    const std::string path = (std::filesystem::path(out_dir) / "summary.csv").string();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "# paraopt-compare v1\n";
    for (size_t i = 0; i < reports.size(); ++i)
      out << "# run" << i + 1 << ": " << config_echo(reports[i].config)
          << " converged=" << (reports[i].converged ? "true" : "false") << "\n";
    out << "newton_index";
    for (size_t i = 0; i < reports.size(); ++i) {
      const std::string p = "run" + std::to_string(i + 1);
      out << ',' << p << ".residual_inf_norm" << ',' << p << ".gmres_iters_cum" << ',' << p
          << ".coarse_linear_solves_per_subinterval_cum" << ',' << p
          << ".coarse_nonlinear_solves_cum" << ',' << p << ".fine_solves_cum";
    }
    out << "\n";
    size_t max_rows = 0;
    for (const RunReport& r : reports) max_rows = std::max(max_rows, r.rows.size());
    for (size_t k = 0; k < max_rows; ++k) {
      out << k;
      for (const RunReport& r : reports) {
        if (k < r.rows.size()) {
          const ReportRow& row = r.rows[k];
          out << ',' << fmt_double(row.residual_inf_norm) << ',' << row.gmres_iters_cum << ','
              << row.coarse_linear_solves_per_subinterval_cum << ','
              << row.coarse_nonlinear_solves_cum << ',' << row.fine_solves_cum;
        } else {
          out << ",,,,,";
        }
      }
      out << "\n";
    }
    if (!out) throw std::runtime_error("failed while writing '" + path + "'");
  }

  // Comparison charts of the two headline counters.
  for (int metric = 0; metric < 2; ++metric) {
    std::vector<Series> series;
    for (const RunReport& r : reports) {
      Series s;
      s.label = r.config.name;
      for (const ReportRow& row : r.rows)
        s.values.push_back(static_cast<double>(
            metric == 0 ? row.gmres_iters_cum : row.coarse_linear_solves_per_subinterval_cum));
      series.push_back(std::move(s));
    }
    const char* fname = metric == 0 ? "gmres_iters.svg" : "coarse_linear_solves.svg";
    const char* ylab = metric == 0 ? "cumulative GMRES iterations"
                                   : "cumulative coarse linear solves per subinterval";
    write_svg_chart((std::filesystem::path(out_dir) / fname).string(),
                    metric == 0 ? "Outer GMRES iterations" : "Coarse solves per subinterval",
                    ylab, series);
  }

  return reports;
}

}  // namespace paraopt
