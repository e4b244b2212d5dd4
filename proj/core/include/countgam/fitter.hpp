#pragma once

#include <Eigen/Dense>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "countgam/basis.hpp"
#include "countgam/data.hpp"
#include "countgam/formula.hpp"

namespace countgam {

class FitterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FitOptions {
  double pirls_tol = 1e-8;
  int pirls_max_iter = 200;
  // Inner GCV optimizer (Nelder-Mead on log-lambda): cold-start budget, the
  // single restart from log-lambda = 5, and the warm-start budget used
  // while profiling phi.
  int inner_max_eval = 120;
  int inner_restart_max_eval = 60;
  int inner_warm_max_eval = 60;
  int inner_eval_flag_limit = 500;  // exceeded -> result flagged non-converged
  // Outer golden-section search for phi on the log scale.
  double log_phi_lo = -4.6051701859880914;  // log 1e-2
  double log_phi_hi = 18.420680743952367;   // log 1e8
  double log_phi_tol = 0.1;
};

// Full design plus the penalty layout.  Column 0 is the intercept, then the
// parametric columns, then one constrained block per smooth term.
struct DesignBlocks {
  Eigen::MatrixXd design;
  struct PenaltyEntry {
    Eigen::MatrixXd matrix;  // block-local, size = term block width
    int col_offset = 0;
    int term_index = 0;
    std::string label;
  };
  std::vector<PenaltyEntry> penalties;  // one per smoothing parameter
  std::vector<std::pair<int, int>> term_ranges;  // (col_offset, width) per smooth term
};

struct PirlsResult {
  Eigen::VectorXd beta;
  Eigen::VectorXd edf_per_term;
  double edf_total = 0.0;
  double deviance = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> penalized_deviance_trajectory;
};

// Penalized IRLS at fixed (lambda, phi).  Working response
// z = eta + (y - mu)/mu with weights mu^2/var(mu); stops when the relative
// deviance change drops below pirls_tol.  phi is ignored for Poisson.
PirlsResult pirls(const DesignBlocks& blocks, const Eigen::VectorXd& log_lambdas,
                  const Eigen::VectorXd& y, const Eigen::VectorXd& offset, double phi,
                  Family family, const FitOptions& options = {},
                  const Eigen::VectorXd* warm_start = nullptr);

// n * deviance / (n - edf)^2, gamma inflation fixed at 1.
double gcv_score(double deviance, int n, double edf_total);

// Everything needed to rebuild one smooth term's design at new points.
struct TermModel {
  SmoothTerm term;
  std::vector<MarginalBasis> marginals;
  Eigen::MatrixXd constraint;
  int col_offset = 0;
  int n_cols = 0;
};

struct FitResult {
  ModelSpec spec;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd log_lambdas;
  std::vector<std::string> lambda_labels;
  double phi = 0.0;  // +inf for Poisson
  double edf_total = 0.0;
  Eigen::VectorXd edf_per_term;
  double deviance = 0.0;
  double loglik = 0.0;
  double aic = 0.0;
  double gcv = 0.0;
  int n_obs = 0;
  int n_rows_dropped = 0;
  bool converged = false;
  std::vector<std::string> notes;
  std::vector<TermModel> term_models;
  std::vector<std::string> parametric_columns;  // design cols 1..k
};

// Nested smoothing selection: inner Nelder-Mead over log-lambda minimizing
// GCV (started at 0, restarted once from 5), outer golden-section over
// log(phi) maximizing the NB log-likelihood at the inner optimum.
// Deterministic given (spec, panel, options).
FitResult select_smoothing(const ModelSpec& spec, const Panel& panel,
                           const FitOptions& options = {});

struct ModelComparison {
  double lrt_stat = 0.0;
  double df = 0.0;       // edf difference; the chi-square test is approximate
  double lrt_p = 1.0;
  double lrt_log_p = 0.0;
  double delta_aic = 0.0;
};

ModelComparison compare_models(const FitResult& fit_small, const FitResult& fit_big);

struct PredictionRow {
  double linear_predictor = 0.0;  // link scale, offset excluded
  double rate = 0.0;              // per 100,000 person-years
  std::map<std::string, double> covariate_values;
};

// Rates over a covariate table; values in `fixed` override table columns
// (e.g. {median_age: 38.8}).  Points outside the training domain are an
// error.
std::vector<PredictionRow> predict(const FitResult& fit,
                                   const std::map<std::string, Eigen::VectorXd>& columns,
                                   const std::map<std::string, double>& fixed = {});

nlohmann::json fit_result_to_json(const FitResult& fit);
FitResult fit_result_from_json(const nlohmann::json& doc);

}  // namespace countgam
