#pragma once

#include <Eigen/Dense>
#include <functional>

namespace countgam {

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

struct NelderMeadOptions {
  double initial_step = 2.0;
  double ftol = 1e-7;
  int max_evaluations = 200;
};

// Minimizes f over R^n from the given start point.  Deterministic.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& start, const NelderMeadOptions& options = {});

struct GoldenSectionResult {
  double x = 0.0;
  double value = 0.0;
  int evaluations = 0;
};

// Minimizes a unimodal f on [lo, hi] to within xtol.
GoldenSectionResult golden_section_minimize(const std::function<double(double)>& f, double lo,
                                            double hi, double xtol, int max_evaluations = 200);

}  // namespace countgam
