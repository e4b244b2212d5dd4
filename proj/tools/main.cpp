// countgam command-line interface: fit / predict / diagnose / simulate /
// demo-splines.  Commands emit plot-ready CSV/JSON tables plus a run
// manifest beside the primary output.  stdout stays silent unless
// --verbose; diagnostics go to stderr.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "countgam/diagnostics.hpp"
#include "countgam/fitter.hpp"
#include "countgam/simulate.hpp"
#include "sha256.hpp"

namespace {

using countgam::Panel;
using nlohmann::json;

bool g_verbose = false;

void progress(const std::string& msg) {
  if (g_verbose) std::cout << msg << "\n";
}

void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

// Moves a file written by a library helper into place atomically.
template <typename WriteFn>
void atomic_via(const std::string& path, WriteFn&& write_fn) {
  const std::string tmp = path + ".tmp";
  write_fn(tmp);
  std::filesystem::rename(tmp, path);
}

struct Manifest {
  std::string command_line;
  std::map<std::string, std::string> input_digests;
  std::vector<std::string> outputs;
  std::vector<std::uint64_t> seeds;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void add_input(const std::string& path) {
    input_digests[path] = countgam::tools::sha256_file(path);
  }

  void write(const std::string& path) {
    json doc;
    doc["tool"] = "countgam";
    doc["version"] = "0.1.0";
    doc["command_line"] = command_line;
    doc["inputs"] = input_digests;
    doc["outputs"] = outputs;
    doc["seeds"] = seeds;
    doc["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    atomic_write(path, doc.dump(2) + "\n");
  }
};

std::string join_args(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    if (i) out += ' ';
    out += argv[i];
  }
  return out;
}

countgam::OffsetRule parse_offset_flag(const std::string& text) {
  if (text == "person-years") return {countgam::OffsetKind::PersonYears100k, ""};
  if (text == "none") return {countgam::OffsetKind::None, ""};
  if (text.rfind("column:", 0) == 0) return {countgam::OffsetKind::Column, text.substr(7)};
  throw CLI::ValidationError("--offset", "expected person-years|none|column:NAME");
}

std::map<std::string, double> parse_fixed(const std::vector<std::string>& fixes) {
  std::map<std::string, double> fixed;
  for (const auto& item : fixes) {
    auto eq = item.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--fix expects col=value, got '" + item + "'");
    fixed[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
  }
  return fixed;
}

// Grid spec "var=lo:hi:n[,var=lo:hi:n...]" expanded as a Cartesian product.
std::map<std::string, Eigen::VectorXd> parse_grid_spec(const std::string& spec) {
  struct Axis {
    std::string name;
    double lo, hi;
    int n;
  };
  std::vector<Axis> axes;
  std::istringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    auto eq = part.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--grid expects var=lo:hi:n, got '" + part + "'");
    Axis axis;
    axis.name = part.substr(0, eq);
    std::string range = part.substr(eq + 1);
    auto c1 = range.find(':');
    auto c2 = range.find(':', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw std::runtime_error("--grid expects var=lo:hi:n, got '" + part + "'");
    axis.lo = std::stod(range.substr(0, c1));
    axis.hi = std::stod(range.substr(c1 + 1, c2 - c1 - 1));
    axis.n = std::stoi(range.substr(c2 + 1));
    if (axis.n < 1) throw std::runtime_error("--grid axis needs at least 1 point");
    axes.push_back(axis);
  }
  if (axes.empty()) throw std::runtime_error("--grid is empty");
  long total = 1;
  for (const auto& axis : axes) total *= axis.n;
  std::map<std::string, Eigen::VectorXd> columns;
  long repeat = 1;  // rightmost axis varies fastest
  for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
    Eigen::VectorXd col(total);
    long idx = 0;
    while (idx < total)
      for (int i = 0; i < it->n; ++i)
        for (long r = 0; r < repeat; ++r) col[idx++] = it->n == 1
                                                          ? it->lo
                                                          : it->lo + (it->hi - it->lo) * i /
                                                                         double(it->n - 1);
    repeat *= it->n;
    columns[it->name] = col;
  }
  return columns;
}

std::map<std::string, Eigen::VectorXd> load_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grid file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty grid file");
  std::vector<std::string> names;
  {
    std::istringstream ss(line);
    std::string name;
    while (std::getline(ss, name, ',')) {
      while (!name.empty() && (name.back() == '\r' || name.back() == ' ')) name.pop_back();
      names.push_back(name);
    }
  }
  std::vector<std::vector<double>> cols(names.size());
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::istringstream ss(line);
    std::string field;
    std::size_t c = 0;
    while (std::getline(ss, field, ',') && c < names.size()) cols[c++].push_back(std::stod(field));
    if (c != names.size()) throw std::runtime_error("ragged grid file row");
  }
  std::map<std::string, Eigen::VectorXd> out;
  for (std::size_t i = 0; i < names.size(); ++i)
    out[names[i]] = Eigen::Map<Eigen::VectorXd>(cols[i].data(),
                                                static_cast<Eigen::Index>(cols[i].size()));
  return out;
}

countgam::SimConfig load_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  countgam::SimConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
    };
    trim(key);
    trim(value);
    if (key == "n_units") config.n_units = std::stoi(value);
    else if (key == "n_months") config.n_months = std::stoi(value);
    else if (key == "popsize_log_mean") config.popsize_log_mean = std::stod(value);
    else if (key == "popsize_log_sd") config.popsize_log_sd = std::stod(value);
    else if (key == "surface") config.surface = value;
    else if (key == "phi") config.phi = std::stod(value);
    else if (key == "seed") config.seed = std::stoull(value);
    else if (key == "params") {
      config.surface_params.clear();
      std::istringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) config.surface_params.push_back(std::stod(item));
    } else {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": unknown key '" +
                               key + "'");
    }
  }
  return config;
}

std::string format_csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int cmd_fit(const std::string& data_path, const std::string& formula_text,
            const std::string& family_flag, const std::string& offset_flag,
            const std::string& roster_path, const std::string& out_path, Manifest& manifest) {
  countgam::ModelSpec spec = countgam::parse_formula(formula_text);
  spec.family = family_flag == "poisson" ? countgam::Family::Poisson : countgam::Family::NegBin;
  spec.offset = parse_offset_flag(offset_flag);

  countgam::LoadOptions load_opts;
  manifest.add_input(data_path);
  if (!roster_path.empty()) {
    manifest.add_input(roster_path);
    std::ifstream roster(roster_path);
    if (!roster) throw std::runtime_error("cannot open roster '" + roster_path + "'");
    std::set<std::string> ids;
    std::string id;
    while (std::getline(roster, id)) {
      while (!id.empty() && (id.back() == '\r' || id.back() == ' ')) id.pop_back();
      if (!id.empty()) ids.insert(id);
    }
    load_opts.unit_roster = std::move(ids);
  }
  countgam::LoadReport report;
  Panel panel = countgam::load_panel(data_path, load_opts, &report);
  progress("loaded " + std::to_string(panel.n_rows()) + " rows (" +
           std::to_string(report.rows_dropped) + " dropped)");

  countgam::FitResult fit = countgam::select_smoothing(spec, panel);
  for (const auto& note : fit.notes) std::cerr << "note: " << note << "\n";
  progress("fit: deviance=" + std::to_string(fit.deviance) +
           " edf=" + std::to_string(fit.edf_total) +
           (fit.converged ? " (converged)" : " (NOT converged)"));

  atomic_write(out_path, countgam::fit_result_to_json(fit).dump(2) + "\n");
  manifest.outputs.push_back(out_path);
  manifest.write(out_path + ".manifest.json");
  if (!fit.converged) {
    std::cerr << "warning: smoothing selection did not converge; result written anyway\n";
    return 2;
  }
  return 0;
}

int cmd_predict(const std::string& fit_path, const std::string& grid_spec,
                const std::string& grid_file, const std::vector<std::string>& fixes,
                const std::string& out_path, Manifest& manifest) {
  manifest.add_input(fit_path);
  std::ifstream in(fit_path);
  if (!in) throw std::runtime_error("cannot open '" + fit_path + "'");
  json doc = json::parse(in);
  countgam::FitResult fit = countgam::fit_result_from_json(doc);

  std::map<std::string, Eigen::VectorXd> columns;
  if (!grid_file.empty()) {
    manifest.add_input(grid_file);
    columns = load_grid_file(grid_file);
  } else if (!grid_spec.empty()) {
    columns = parse_grid_spec(grid_spec);
  } else {
    throw std::runtime_error("predict needs --grid or --grid-file");
  }
  auto fixed = parse_fixed(fixes);
  auto rows = countgam::predict(fit, columns, fixed);

  std::ostringstream csv;
  std::vector<std::string> names;
  for (const auto& [name, v] : rows.front().covariate_values) names.push_back(name);
  for (const auto& name : names) csv << name << ',';
  csv << "rate_per_100k_py\n";
  for (const auto& row : rows) {
    for (const auto& name : names) csv << format_csv_number(row.covariate_values.at(name)) << ',';
    csv << format_csv_number(row.rate) << '\n';
  }
  atomic_write(out_path, csv.str());
  manifest.outputs.push_back(out_path);
  manifest.write(out_path + ".manifest.json");
  return 0;
}

int cmd_diagnose(const std::string& data_path, const std::string& edges_path,
                 const std::string& month, int acf_maxlag, const std::string& out_path,
                 Manifest& manifest) {
  manifest.add_input(data_path);
  Panel panel = countgam::load_panel(data_path);

  if (acf_maxlag > 0) {
    auto summaries = countgam::temporal_acf(panel, "crude_rate", acf_maxlag);
    std::ostringstream csv;
    csv << "lag,q05,q25,q50,q75,q95,n_units,n_excluded\n";
    for (const auto& s : summaries) {
      csv << s.lag;
      for (double level : {0.05, 0.25, 0.5, 0.75, 0.95})
        csv << ',' << format_csv_number(s.weighted_quantiles.at(level));
      csv << ',' << s.per_unit_acf.size() << ',' << s.n_units_excluded << '\n';
    }
    atomic_write(out_path, csv.str());
    manifest.outputs.push_back(out_path);
    manifest.write(out_path + ".manifest.json");
    return 0;
  }

  if (edges_path.empty()) throw std::runtime_error("Moran diagnostic needs --edges");
  manifest.add_input(edges_path);
  const int month_index = countgam::month_index_from_iso(month);
  std::map<std::string, double> values;
  Eigen::VectorXd rates = countgam::crude_rates(panel);
  bool found = false;
  for (std::size_t i = 0; i < panel.n_rows(); ++i)
    if (panel.months[i] == month_index) {
      values[panel.unit_ids[i]] = rates[static_cast<Eigen::Index>(i)];
      found = true;
    }
  if (!found) throw std::runtime_error("month " + month + " not present in panel");

  auto graph = countgam::build_neighbor_graph(edges_path);
  countgam::MoranResult moran;
  try {
    moran = countgam::morans_i(values, graph);
  } catch (const countgam::DiagnosticsError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::ostringstream csv;
  csv << "id,value,neighbor_mean\n";
  for (const auto& [id, nb_mean] : moran.neighbor_means)
    csv << id << ',' << format_csv_number(values.at(id)) << ',' << format_csv_number(nb_mean)
        << '\n';
  atomic_write(out_path, csv.str());
  json summary = {{"I", moran.I},
                  {"slope", moran.slope},
                  {"n_used", moran.n_used},
                  {"n_isolated", moran.n_isolated}};
  const std::string summary_path = out_path + ".summary.json";
  atomic_write(summary_path, summary.dump() + "\n");
  manifest.outputs.push_back(out_path);
  manifest.outputs.push_back(summary_path);
  manifest.write(out_path + ".manifest.json");
  return 0;
}

int cmd_simulate(const std::string& config_path, std::int64_t seed_override,
                 const std::string& out_prefix, Manifest& manifest) {
  manifest.add_input(config_path);
  countgam::SimConfig config = load_sim_config(config_path);
  if (seed_override >= 0) config.seed = static_cast<std::uint64_t>(seed_override);
  manifest.seeds.push_back(config.seed);
  countgam::SimulatedPanel sim = countgam::simulate_panel(config);

  const std::string panel_path = out_prefix + ".csv";
  const std::string truth_path = out_prefix + "_truth.csv";
  atomic_via(panel_path, [&](const std::string& p) { countgam::save_panel(sim.panel, p); });
  atomic_via(truth_path, [&](const std::string& p) { countgam::save_truth(sim, p); });
  manifest.outputs.push_back(panel_path);
  manifest.outputs.push_back(truth_path);
  manifest.write(out_prefix + ".manifest.json");
  return 0;
}

int cmd_demo_splines(std::uint64_t seed, const std::string& out_prefix, Manifest& manifest) {
  manifest.seeds.push_back(seed);
  countgam::SplineDemo demo = countgam::spline_demo(seed);

  std::ostringstream data_csv;
  data_csv << "x,y\n";
  for (Eigen::Index i = 0; i < demo.data_x.size(); ++i)
    data_csv << format_csv_number(demo.data_x[i]) << ','
             << static_cast<long long>(demo.data_y[i]) << '\n';

  std::ostringstream basis_csv;
  basis_csv << "x";
  for (Eigen::Index j = 0; j < demo.basis.cols(); ++j) basis_csv << ",b" << (j + 1);
  basis_csv << '\n';
  for (Eigen::Index i = 0; i < demo.grid.size(); ++i) {
    basis_csv << format_csv_number(demo.grid[i]);
    for (Eigen::Index j = 0; j < demo.basis.cols(); ++j)
      basis_csv << ',' << format_csv_number(demo.basis(i, j));
    basis_csv << '\n';
  }

  std::ostringstream fit_csv;
  fit_csv << "x";
  for (Eigen::Index j = 0; j < demo.weighted_basis.cols(); ++j) fit_csv << ",w" << (j + 1);
  fit_csv << ",intercept,fitted_curve,true_link\n";
  for (Eigen::Index i = 0; i < demo.grid.size(); ++i) {
    fit_csv << format_csv_number(demo.grid[i]);
    for (Eigen::Index j = 0; j < demo.weighted_basis.cols(); ++j)
      fit_csv << ',' << format_csv_number(demo.weighted_basis(i, j));
    fit_csv << ',' << format_csv_number(demo.intercept) << ','
            << format_csv_number(demo.fitted_curve[i]) << ','
            << format_csv_number(demo.true_link[i]) << '\n';
  }

  const std::string data_path = out_prefix + "_data.csv";
  const std::string basis_path = out_prefix + "_basis.csv";
  const std::string fit_path = out_prefix + "_fit.csv";
  atomic_write(data_path, data_csv.str());
  atomic_write(basis_path, basis_csv.str());
  atomic_write(fit_path, fit_csv.str());
  manifest.outputs = {data_path, basis_path, fit_path};
  manifest.write(out_prefix + ".manifest.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"penalized GAM engine for overdispersed count panels"};
  app.require_subcommand(1);
  app.add_flag("--verbose", g_verbose, "progress messages on stdout");

  Manifest manifest;
  manifest.command_line = join_args(argc, argv);

  // fit
  auto* fit = app.add_subcommand("fit", "fit a model to a panel CSV");
  std::string fit_data, fit_formula, fit_family = "nb", fit_offset = "person-years";
  std::string fit_roster, fit_out;
  fit->add_option("--data", fit_data, "panel CSV")->required();
  fit->add_option("--formula", fit_formula, "model formula")->required();
  fit->add_option("--family", fit_family, "nb|poisson")
      ->check(CLI::IsMember({"nb", "poisson"}));
  fit->add_option("--offset", fit_offset, "person-years|none|column:NAME");
  fit->add_option("--roster", fit_roster, "unit-id roster file (one id per line)");
  fit->add_option("--out", fit_out, "output fit JSON")->required();

  // predict
  auto* predict = app.add_subcommand("predict", "rates over a covariate grid");
  std::string pr_fit, pr_grid, pr_grid_file, pr_out;
  std::vector<std::string> pr_fix;
  predict->add_option("--fit", pr_fit, "fit JSON from the fit command")->required();
  predict->add_option("--grid", pr_grid, "grid spec var=lo:hi:n[,...]");
  predict->add_option("--grid-file", pr_grid_file, "grid CSV");
  predict->add_option("--fix", pr_fix, "held-constant value col=value (repeatable)");
  predict->add_option("--out", pr_out, "output rate CSV")->required();

  // diagnose
  auto* diagnose = app.add_subcommand("diagnose", "Moran's I / temporal ACF tables");
  std::string dg_data, dg_edges, dg_month, dg_out;
  int dg_maxlag = 0;
  diagnose->add_option("--data", dg_data, "panel CSV")->required();
  diagnose->add_option("--edges", dg_edges, "adjacency CSV (id_a,id_b)");
  diagnose->add_option("--month", dg_month, "month YYYY-MM for Moran's I");
  diagnose->add_option("--acf-maxlag", dg_maxlag, "temporal ACF up to this lag");
  diagnose->add_option("--out", dg_out, "output table path")->required();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "synthetic panel from a surface catalog");
  std::string sm_config, sm_out;
  std::int64_t sm_seed = -1;
  simulate->add_option("--config", sm_config, "key=value config file")->required();
  simulate->add_option("--seed", sm_seed, "seed override");
  simulate->add_option("--out", sm_out, "output prefix")->required();

  // demo-splines
  auto* demo = app.add_subcommand("demo-splines", "B-spline fitting demonstration tables");
  std::string dm_out;
  std::uint64_t dm_seed = 42;
  demo->add_option("--seed", dm_seed, "seed");
  demo->add_option("--out", dm_out, "output prefix")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit) return cmd_fit(fit_data, fit_formula, fit_family, fit_offset, fit_roster, fit_out,
                             manifest);
    if (*predict) return cmd_predict(pr_fit, pr_grid, pr_grid_file, pr_fix, pr_out, manifest);
    if (*diagnose) {
      if ((dg_maxlag > 0) == !dg_month.empty())
        throw std::runtime_error("diagnose needs exactly one of --month or --acf-maxlag");
      return cmd_diagnose(dg_data, dg_edges, dg_month, dg_maxlag, dg_out, manifest);
    }
    if (*simulate) return cmd_simulate(sm_config, sm_seed, sm_out, manifest);
    if (*demo) return cmd_demo_splines(dm_seed, dm_out, manifest);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
