#include "countgam/simulate.hpp"

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>
#include <cmath>
#include <fstream>
#include <random>

#include "countgam/family.hpp"
#include "countgam/fitter.hpp"

namespace countgam {

namespace {

constexpr double kTwoPi = 6.283185307179586;

struct Surface {
  std::string name;
  std::size_t arity;
  // f(x, u, v, t): covariate x, unit-square coords (u, v), month t.
  double (*eval)(const std::vector<double>&, double, double, double, double);
};

double eval_constant(const std::vector<double>& p, double, double, double, double) {
  return p[0];
}
double eval_linear(const std::vector<double>& p, double x, double, double, double) {
  return p[0] + p[1] * x;
}
double eval_quadratic(const std::vector<double>& p, double x, double, double, double) {
  return p[0] + p[1] * (x - p[2]) * (x - p[2]);
}
double eval_sine(const std::vector<double>& p, double x, double, double, double) {
  return p[0] + p[1] * std::sin(kTwoPi * p[2] * x);
}
double eval_bump(const std::vector<double>& p, double, double u, double v, double) {
  const double du = u - p[2], dv = v - p[3];
  return p[0] + p[1] * std::exp(-(du * du + dv * dv) / (2.0 * p[4] * p[4]));
}
double eval_sst(const std::vector<double>& p, double, double u, double v, double t) {
  const double du = u - 0.5, dv = v - 0.5;
  const double s = 0.15;
  return p[0] + p[1] * std::exp(-(du * du + dv * dv) / (2.0 * s * s)) +
         p[2] * std::sin(kTwoPi * t / 12.0);
}

const Surface kCatalog[] = {
    {"constant", 1, eval_constant},
    {"linear", 2, eval_linear},
    {"quadratic", 3, eval_quadratic},
    {"sine", 3, eval_sine},
    {"gaussian-bump-2d", 5, eval_bump},
    {"separable-space-time", 3, eval_sst},
};

const Surface& find_surface(const SimConfig& config) {
  for (const auto& s : kCatalog)
    if (s.name == config.surface) {
      if (config.surface_params.size() != s.arity)
        throw SimulateError("surface '" + s.name + "' takes " + std::to_string(s.arity) +
                            " parameters, got " + std::to_string(config.surface_params.size()));
      return s;
    }
  throw SimulateError("unknown surface '" + config.surface + "'");
}

}  // namespace

SimulatedPanel simulate_panel(const SimConfig& config) {
  if (config.n_units < 1 || config.n_months < 1)
    throw SimulateError("n_units and n_months must be positive");
  if (!(config.phi > 0)) throw SimulateError("phi must be positive");
  const Surface& surface = find_surface(config);

  std::mt19937_64 rng(config.seed);
  boost::random::uniform_real_distribution<double> unif(0.0, 1.0);
  boost::random::normal_distribution<double> normal(0.0, 1.0);

  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(config.n_units))));
  std::vector<double> unit_u(config.n_units), unit_v(config.n_units), unit_x(config.n_units);
  std::vector<double> unit_pop(config.n_units);
  for (int i = 0; i < config.n_units; ++i) {
    const int gi = i % side, gj = i / side;
    unit_u[i] = (gi + 0.5 + 0.8 * (unif(rng) - 0.5)) / side;
    unit_v[i] = (gj + 0.5 + 0.8 * (unif(rng) - 0.5)) / side;
    unit_x[i] = unif(rng);
    const double pop =
        std::exp(config.popsize_log_mean + config.popsize_log_sd * normal(rng));
    unit_pop[i] = std::max(1000.0, std::round(pop));
  }

  SimulatedPanel sim;
  const Eigen::Index n = static_cast<Eigen::Index>(config.n_units) * config.n_months;
  sim.panel.deaths.resize(n);
  sim.panel.popsize.resize(n);
  sim.true_link.resize(n);
  Eigen::VectorXd lat(n), lon(n), xcol(n);
  Eigen::Index row = 0;
  for (int i = 0; i < config.n_units; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "u%05d", i);
    for (int t = 0; t < config.n_months; ++t, ++row) {
      sim.panel.unit_ids.emplace_back(id);
      sim.panel.months.push_back(t);
      const double f = surface.eval(config.surface_params, unit_x[i], unit_u[i], unit_v[i],
                                    static_cast<double>(t));
      const double offset = person_years_offset(unit_pop[i]);
      if (f + offset > 30.0) throw SimulateError("surface produces mean overflow (link > 30)");
      const double mu = std::exp(offset + f);
      sim.panel.popsize[row] = unit_pop[i];
      sim.panel.deaths[row] = static_cast<double>(sample_nb(mu, config.phi, rng));
      sim.true_link[row] = f;
      lat[row] = 30.0 + 18.0 * unit_v[i];
      lon[row] = -120.0 + 45.0 * unit_u[i];
      xcol[row] = unit_x[i];
    }
  }
  sim.panel.covariates["latitude"] = lat;
  sim.panel.covariates["longitude"] = lon;
  sim.panel.covariates["x"] = xcol;
  return sim;
}

void save_truth(const SimulatedPanel& sim, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw SimulateError("cannot write '" + path + "'");
  out.precision(17);
  out << "unit,month,true_link\n";
  for (std::size_t i = 0; i < sim.panel.n_rows(); ++i)
    out << sim.panel.unit_ids[i] << ',' << iso_from_month_index(sim.panel.months[i]) << ','
        << sim.true_link[static_cast<Eigen::Index>(i)] << '\n';
}

SplineDemo spline_demo(std::uint64_t seed) {
  // 1-D count dataset from a smooth rate curve, fit with a single s(x) term.
  SimConfig config;
  config.n_units = 150;
  config.n_months = 1;
  config.surface = "sine";
  config.surface_params = {std::log(40.0), 0.9, 1.1};
  config.phi = 8.0;
  config.popsize_log_mean = 13.0;
  config.popsize_log_sd = 0.3;
  config.seed = seed;
  SimulatedPanel sim = simulate_panel(config);

  ModelSpec spec = parse_formula("deaths ~ s(x)");
  FitResult fit = select_smoothing(spec, sim.panel);

  SplineDemo demo;
  demo.data_x = sim.panel.covariates.at("x");
  demo.data_y = sim.panel.deaths;

  const TermModel& model = fit.term_models.front();
  const MarginalBasis& basis = model.marginals.front();
  const int n_grid = 201;
  demo.grid.resize(n_grid);
  for (int i = 0; i < n_grid; ++i)
    demo.grid[i] = basis.domain_lo() +
                   (basis.domain_hi() - basis.domain_lo()) * i / static_cast<double>(n_grid - 1);
  demo.basis = bspline_design(demo.grid, basis);

  Eigen::VectorXd coef = fit.coefficients.segment(model.col_offset, model.n_cols);
  Eigen::MatrixXd constrained = demo.basis * model.constraint;
  demo.weighted_basis = constrained.array().rowwise() * coef.transpose().array();
  demo.intercept = fit.coefficients[0];
  demo.fitted_curve =
      Eigen::VectorXd::Constant(n_grid, demo.intercept) + demo.weighted_basis.rowwise().sum();
  demo.true_link.resize(n_grid);
  for (int i = 0; i < n_grid; ++i)
    demo.true_link[i] = config.surface_params[0] +
                        config.surface_params[1] *
                            std::sin(kTwoPi * config.surface_params[2] * demo.grid[i]);
  return demo;
}

}  // namespace countgam
