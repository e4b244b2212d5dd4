#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "countgam/data.hpp"

namespace countgam {

class SimulateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fixed catalog of true link-scale surfaces.  Arities:
//   constant(c); linear(a, b); quadratic(a, b, c) = a + b*(x - c)^2;
//   sine(a, b, freq) = a + b*sin(2*pi*freq*x);
//   gaussian-bump-2d(a, b, cx, cy, s) over unit-square coordinates;
//   separable-space-time(a, b, c) = a + spatial bump * b + c*sin(2*pi*t/12).
struct SimConfig {
  int n_units = 100;
  int n_months = 12;
  double popsize_log_mean = 11.0;  // lognormal parameters of unit popsize
  double popsize_log_sd = 1.0;
  std::string surface = "constant";
  std::vector<double> surface_params = {std::log(100.0)};
  double phi = 10.0;
  std::uint64_t seed = 1;
};

struct SimulatedPanel {
  Panel panel;                // columns: x, latitude, longitude (+ time built in)
  Eigen::VectorXd true_link;  // aligned with panel rows
};

// Deterministic under seed: units on a jittered lattice in the unit square
// (mapped to plausible lat/long), popsize lognormal, deaths drawn from the
// gamma-Poisson mixture around mu = exp(offset + f).
SimulatedPanel simulate_panel(const SimConfig& config);

// Seed for replicate r of a base seed (documented splitting rule).
inline std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t replicate) {
  return seed + replicate;
}

void save_truth(const SimulatedPanel& sim, const std::string& path);

// The three panels of the B-spline demonstration: a simulated 1-D count
// dataset, the basis on a grid, and the weighted basis functions whose sum
// plus the intercept is the fitted curve.
struct SplineDemo {
  Eigen::VectorXd data_x, data_y;
  Eigen::VectorXd grid;            // evaluation grid
  Eigen::MatrixXd basis;           // raw marginal basis on the grid
  Eigen::MatrixXd weighted_basis;  // constrained columns scaled by coefficients
  double intercept = 0.0;
  Eigen::VectorXd fitted_curve;    // intercept + row sums of weighted_basis
  Eigen::VectorXd true_link;       // the generating function on the grid
};

SplineDemo spline_demo(std::uint64_t seed);

}  // namespace countgam
