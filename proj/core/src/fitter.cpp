#include "countgam/fitter.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "countgam/family.hpp"
#include "countgam/optim.hpp"

namespace countgam {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEtaClamp = 30.0;

bool is_poisson(Family family, double phi) { return family == Family::Poisson || phi == kInf; }

double deviance_of(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double phi,
                   Family family) {
  return is_poisson(family, phi) ? poisson_deviance(y, mu) : nb_deviance(y, mu, phi);
}

double loglik_of(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double phi, Family family) {
  double ll = 0.0;
  const bool poisson = is_poisson(family, phi);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    auto yi = static_cast<std::int64_t>(std::llround(y[i]));
    ll += poisson ? poisson_logpmf(yi, mu[i]) : nb_logpmf(yi, mu[i], phi);
  }
  return ll;
}

Eigen::VectorXd mean_from_eta(const Eigen::VectorXd& eta, const Eigen::VectorXd& offset) {
  Eigen::VectorXd mu(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    mu[i] = std::exp(std::clamp(eta[i] + offset[i], -kEtaClamp, kEtaClamp));
  return mu;
}

struct Assembled {
  DesignBlocks blocks;
  Eigen::VectorXd y;
  Eigen::VectorXd offset;
  std::vector<TermModel> term_models;
  std::vector<std::string> parametric;
  std::vector<std::string> lambda_labels;
  int n_dropped = 0;
};

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

Assembled assemble(const ModelSpec& spec, const Panel& panel) {
  const Eigen::Index n_all = static_cast<Eigen::Index>(panel.n_rows());
  if (n_all == 0) throw FitterError("empty panel");

  std::vector<std::string> needed;
  needed.push_back(spec.response);
  for (const auto& name : spec.parametric_terms) needed.push_back(name);
  for (const auto& term : spec.smooth_terms)
    for (const auto& v : term.variables) needed.push_back(v);
  if (spec.offset.kind == OffsetKind::Column) needed.push_back(spec.offset.column);
  std::map<std::string, Eigen::VectorXd> cols;
  for (const auto& name : needed) {
    if (!panel.has_column(name)) throw FitterError("panel has no column '" + name + "'");
    cols.emplace(name, panel.column(name));
  }

  // Rows with a missing value in any referenced column are dropped.
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n_all; ++i) {
    bool ok = true;
    for (const auto& [name, col] : cols)
      if (!std::isfinite(col[i])) {
        ok = false;
        break;
      }
    if (ok) keep.push_back(i);
  }
  Assembled out;
  out.n_dropped = static_cast<int>(n_all - static_cast<Eigen::Index>(keep.size()));
  const Eigen::Index n = static_cast<Eigen::Index>(keep.size());
  if (n == 0) throw FitterError("all rows dropped (missing covariates)");
  auto subset = [&](const Eigen::VectorXd& full) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = full[keep[i]];
    return v;
  };

  out.y = subset(cols.at(spec.response));
  for (Eigen::Index i = 0; i < n; ++i)
    if (out.y[i] < 0 || std::abs(out.y[i] - std::round(out.y[i])) > 1e-9)
      throw FitterError("response must be non-negative counts");

  switch (spec.offset.kind) {
    case OffsetKind::PersonYears100k: {
      Eigen::VectorXd pop = subset(panel.popsize);
      out.offset.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) out.offset[i] = person_years_offset(pop[i]);
      break;
    }
    case OffsetKind::None:
      out.offset = Eigen::VectorXd::Zero(n);
      break;
    case OffsetKind::Column:
      out.offset = subset(cols.at(spec.offset.column));
      break;
  }

  // Build term blocks, then paste into the full design.
  std::vector<TermBlock> term_blocks;
  int p = 1 + static_cast<int>(spec.parametric_terms.size());
  for (const auto& term : spec.smooth_terms) {
    std::vector<MarginalBasis> marginals;
    std::vector<Eigen::VectorXd> columns;
    std::size_t var = 0;
    for (std::size_t g = 0; g < term.d_groups.size(); ++g) {
      for (int a = 0; a < term.d_groups[g]; ++a) {
        columns.push_back(subset(cols.at(term.variables[var])));
        marginals.push_back(make_quantile_basis(columns.back(), term.basis_dims[g]));
        ++var;
      }
    }
    TermBlock block = tensor_term(marginals, term.d_groups, columns);
    block.col_offset = p;
    // Label each smoothing parameter by its group's variables.
    var = 0;
    for (std::size_t g = 0; g < term.d_groups.size(); ++g) {
      std::vector<std::string> group_vars(term.variables.begin() + var,
                                          term.variables.begin() + var + term.d_groups[g]);
      block.group_labels[g] = join(group_vars, "+");
      var += static_cast<std::size_t>(term.d_groups[g]);
    }
    p += static_cast<int>(block.design.cols());

    TermModel model;
    model.term = term;
    model.marginals = marginals;
    model.constraint = block.constraint;
    model.col_offset = block.col_offset;
    model.n_cols = static_cast<int>(block.design.cols());
    out.term_models.push_back(std::move(model));
    term_blocks.push_back(std::move(block));
  }

  out.blocks.design.resize(n, p);
  out.blocks.design.col(0).setOnes();
  int col = 1;
  for (const auto& name : spec.parametric_terms) {
    out.blocks.design.col(col++) = subset(cols.at(name));
    out.parametric.push_back(name);
  }
  for (std::size_t t = 0; t < term_blocks.size(); ++t) {
    auto& block = term_blocks[t];
    out.blocks.design.middleCols(block.col_offset, block.design.cols()) = block.design;
    out.blocks.term_ranges.emplace_back(block.col_offset, static_cast<int>(block.design.cols()));
    for (std::size_t g = 0; g < block.penalties.size(); ++g) {
      DesignBlocks::PenaltyEntry entry;
      entry.matrix = std::move(block.penalties[g]);
      entry.col_offset = block.col_offset;
      entry.term_index = static_cast<int>(t);
      entry.label = block.group_labels[g];
      out.blocks.penalties.push_back(std::move(entry));
      out.lambda_labels.push_back(out.blocks.penalties.back().label);
    }
  }
  return out;
}

Eigen::MatrixXd penalty_sum(const DesignBlocks& blocks, const Eigen::VectorXd& log_lambdas,
                            int p) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t g = 0; g < blocks.penalties.size(); ++g) {
    const auto& entry = blocks.penalties[g];
    const int w = static_cast<int>(entry.matrix.rows());
    s.block(entry.col_offset, entry.col_offset, w, w) += std::exp(log_lambdas[g]) * entry.matrix;
  }
  return s;
}

}  // namespace

double gcv_score(double deviance, int n, double edf_total) {
  if (!(static_cast<double>(n) > edf_total)) throw FitterError("edf must be below n for GCV");
  const double denom = static_cast<double>(n) - edf_total;
  return static_cast<double>(n) * deviance / (denom * denom);
}

PirlsResult pirls(const DesignBlocks& blocks, const Eigen::VectorXd& log_lambdas,
                  const Eigen::VectorXd& y, const Eigen::VectorXd& offset, double phi,
                  Family family, const FitOptions& options, const Eigen::VectorXd* warm_start) {
  const Eigen::MatrixXd& x = blocks.design;
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (y.size() != n || offset.size() != n) throw FitterError("pirls: length mismatch");
  if (static_cast<std::size_t>(log_lambdas.size()) != blocks.penalties.size())
    throw FitterError("pirls: one log-lambda required per penalty");
  const bool poisson = is_poisson(family, phi);
  if (!poisson && !(phi > 0)) throw FitterError("pirls: phi must be positive");

  const Eigen::MatrixXd s_lambda = penalty_sum(blocks, log_lambdas, static_cast<int>(p));

  Eigen::VectorXd beta;
  Eigen::VectorXd eta;
  if (warm_start && warm_start->size() == p) {
    beta = *warm_start;
    eta = x * beta;
  } else {
    beta = Eigen::VectorXd::Zero(p);
    eta.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) eta[i] = std::log(y[i] + 0.5) - offset[i];
  }

  auto penalized_dev = [&](const Eigen::VectorXd& b, const Eigen::VectorXd& mu) {
    return deviance_of(y, mu, phi, family) + b.dot(s_lambda * b);
  };

  Eigen::VectorXd mu = mean_from_eta(eta, offset);
  // The cold-start eta (from mu0 = y + 0.5) is not generated by any beta, so
  // its deviance is near-saturated and must not gate step acceptance: the
  // first solved candidate is accepted unconditionally.  A warm start is a
  // real coefficient vector and does provide a reference value.
  const bool warm = warm_start && warm_start->size() == p;
  double pen_dev = warm ? penalized_dev(beta, mu) : kInf;

  PirlsResult result;
  if (warm) result.penalized_deviance_trajectory.push_back(pen_dev);

  Eigen::VectorXd w(n), z(n), sw(n);
  Eigen::MatrixXd xtwx(p, p);
  Eigen::MatrixXd a(p, p);
  bool ridged = false;

  for (int iter = 0; iter < options.pirls_max_iter; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = mu[i];
      w[i] = poisson ? m : m / (1.0 + m / phi);
      z[i] = eta[i] + (y[i] - m) / m;
      sw[i] = std::sqrt(w[i]);
    }
    Eigen::MatrixXd xw = x.array().colwise() * sw.array();
    xtwx.setZero();
    xtwx.selfadjointView<Eigen::Lower>().rankUpdate(xw.transpose());
    xtwx = xtwx.selfadjointView<Eigen::Lower>();
    a = xtwx + s_lambda;
    Eigen::VectorXd b = x.transpose() * (w.array() * z.array()).matrix();

    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      // Rank-deficient penalized system: tiny ridge, logged via the flag.
      a.diagonal().array() += 1e-10 * a.trace() / static_cast<double>(p) + 1e-300;
      ldlt.compute(a);
      ridged = true;
      if (ldlt.info() != Eigen::Success)
        throw FitterError("pirls: penalized system is rank deficient (all lambda zero with "
                          "collinear columns?)");
    }
    Eigen::VectorXd beta_new = ldlt.solve(b);

    // Step-halving keeps the accepted penalized deviance non-increasing.
    Eigen::VectorXd step = beta_new - beta;
    double new_pen_dev = 0.0;
    Eigen::VectorXd mu_new;
    bool accepted = false;
    for (int half = 0; half < 30; ++half) {
      Eigen::VectorXd candidate = beta + step;
      Eigen::VectorXd eta_c = x * candidate;
      mu_new = mean_from_eta(eta_c, offset);
      new_pen_dev = penalized_dev(candidate, mu_new);
      if (std::isfinite(new_pen_dev) && new_pen_dev <= pen_dev * (1.0 + 1e-12) + 1e-12) {
        beta = candidate;
        eta = eta_c;
        mu = mu_new;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++result.iterations;
    if (!accepted) {
      result.converged = true;  // no improving step remains
      break;
    }
    const double change = std::abs(pen_dev - new_pen_dev);
    pen_dev = new_pen_dev;
    result.penalized_deviance_trajectory.push_back(pen_dev);
    if (change <= options.pirls_tol * (std::abs(pen_dev) + 0.1)) {
      result.converged = true;
      break;
    }
  }

  result.beta = beta;
  result.deviance = deviance_of(y, mu, phi, family);

  // Effective degrees of freedom: trace of F = (X'WX + S_lambda)^-1 X'WX.
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = mu[i];
    sw[i] = std::sqrt(poisson ? m : m / (1.0 + m / phi));
  }
  Eigen::MatrixXd xw = x.array().colwise() * sw.array();
  xtwx.setZero();
  xtwx.selfadjointView<Eigen::Lower>().rankUpdate(xw.transpose());
  xtwx = xtwx.selfadjointView<Eigen::Lower>();
  a = xtwx + s_lambda;
  if (ridged) a.diagonal().array() += 1e-10 * a.trace() / static_cast<double>(p);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  Eigen::MatrixXd influence = ldlt.solve(xtwx);
  result.edf_total = influence.trace();
  result.edf_per_term.resize(static_cast<Eigen::Index>(blocks.term_ranges.size()));
  for (std::size_t t = 0; t < blocks.term_ranges.size(); ++t) {
    auto [off, width] = blocks.term_ranges[t];
    result.edf_per_term[static_cast<Eigen::Index>(t)] =
        influence.diagonal().segment(off, width).sum();
  }
  return result;
}

namespace {

struct InnerOutcome {
  Eigen::VectorXd log_lambdas;
  PirlsResult fit;
  double gcv = kInf;
  int evaluations = 0;
  bool flagged = false;
};

// Inner loop: Nelder-Mead over log-lambda minimizing GCV at fixed phi.
InnerOutcome optimize_lambdas(const Assembled& assembled, double phi, Family family,
                              const FitOptions& options, const Eigen::VectorXd* warm_lambdas,
                              Eigen::VectorXd* warm_beta) {
  const int n = static_cast<int>(assembled.y.size());
  const int n_lam = static_cast<int>(assembled.blocks.penalties.size());
  InnerOutcome outcome;
  if (n_lam == 0) {
    outcome.log_lambdas.resize(0);
    outcome.fit = pirls(assembled.blocks, outcome.log_lambdas, assembled.y, assembled.offset, phi,
                        family, options, warm_beta && warm_beta->size() ? warm_beta : nullptr);
    outcome.gcv = gcv_score(outcome.fit.deviance, n, outcome.fit.edf_total);
    if (warm_beta) *warm_beta = outcome.fit.beta;
    return outcome;
  }

  Eigen::VectorXd beta_cache = warm_beta ? *warm_beta : Eigen::VectorXd();
  int evals = 0;
  auto objective = [&](const Eigen::VectorXd& log_lam) {
    ++evals;
    Eigen::VectorXd clamped = log_lam.cwiseMax(-18.0).cwiseMin(18.0);
    PirlsResult fit;
    try {
      fit = pirls(assembled.blocks, clamped, assembled.y, assembled.offset, phi, family, options,
                  beta_cache.size() ? &beta_cache : nullptr);
    } catch (const FitterError&) {
      return 1e30;
    }
    beta_cache = fit.beta;
    if (!(fit.edf_total < n)) return 1e30;
    return gcv_score(fit.deviance, n, fit.edf_total);
  };

  std::vector<std::pair<Eigen::VectorXd, double>> candidates;
  NelderMeadOptions nm;
  if (warm_lambdas && warm_lambdas->size() == n_lam) {
    nm.max_evaluations = options.inner_warm_max_eval;
    nm.initial_step = 1.0;
    auto res = nelder_mead(objective, *warm_lambdas, nm);
    candidates.emplace_back(res.x, res.value);
  } else {
    nm.max_evaluations = options.inner_max_eval;
    auto res = nelder_mead(objective, Eigen::VectorXd::Zero(n_lam), nm);
    candidates.emplace_back(res.x, res.value);
    nm.max_evaluations = options.inner_restart_max_eval;
    auto res2 = nelder_mead(objective, Eigen::VectorXd::Constant(n_lam, 5.0), nm);
    candidates.emplace_back(res2.x, res2.value);
  }

  // Ties break toward the smoother model (larger total log-lambda).
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double a = candidates[i].second, b = candidates[best].second;
    if (a < b * (1.0 - 1e-12) ||
        (std::abs(a - b) <= 1e-12 * (std::abs(b) + 1e-300) &&
         candidates[i].first.sum() > candidates[best].first.sum()))
      best = i;
  }
  outcome.log_lambdas = candidates[best].first.cwiseMax(-18.0).cwiseMin(18.0);
  outcome.fit = pirls(assembled.blocks, outcome.log_lambdas, assembled.y, assembled.offset, phi,
                      family, options, beta_cache.size() ? &beta_cache : nullptr);
  outcome.gcv = gcv_score(outcome.fit.deviance, n, outcome.fit.edf_total);
  outcome.evaluations = evals;
  outcome.flagged = evals > options.inner_eval_flag_limit;
  if (warm_beta) *warm_beta = outcome.fit.beta;
  return outcome;
}

}  // namespace

FitResult select_smoothing(const ModelSpec& spec, const Panel& panel, const FitOptions& options) {
  Assembled assembled = assemble(spec, panel);
  const int n = static_cast<int>(assembled.y.size());
  const int p = static_cast<int>(assembled.blocks.design.cols());

  FitResult result;
  result.spec = spec;
  result.n_obs = n;
  result.n_rows_dropped = assembled.n_dropped;
  result.term_models = assembled.term_models;
  result.parametric_columns = assembled.parametric;
  result.lambda_labels = assembled.lambda_labels;
  if (n < 10 * p)
    result.notes.push_back("fewer than 10 rows per coefficient (" + std::to_string(n) + " rows, " +
                           std::to_string(p) + " coefficients)");

  Eigen::VectorXd warm_beta;
  InnerOutcome final_inner;
  double phi = kInf;
  bool flagged = false;

  if (spec.family == Family::Poisson) {
    final_inner = optimize_lambdas(assembled, kInf, spec.family, options, nullptr, &warm_beta);
    flagged = final_inner.flagged;
  } else {
    // Outer phi search: golden section on log(phi) maximizing the profile
    // log-likelihood (inner lambda optimum re-solved per phi, warm-started).
    Eigen::VectorXd warm_lam;
    bool have_warm = false;
    auto profile = [&](double log_phi) {
      const double ph = std::exp(log_phi);
      InnerOutcome inner = optimize_lambdas(assembled, ph, spec.family, options,
                                            have_warm ? &warm_lam : nullptr, &warm_beta);
      flagged = flagged || inner.flagged;
      warm_lam = inner.log_lambdas;
      have_warm = true;
      Eigen::VectorXd mu =
          mean_from_eta(assembled.blocks.design * inner.fit.beta, assembled.offset);
      return -loglik_of(assembled.y, mu, ph, spec.family);
    };
    auto gs = golden_section_minimize(profile, options.log_phi_lo, options.log_phi_hi,
                                      options.log_phi_tol);
    phi = std::exp(gs.x);
    final_inner = optimize_lambdas(assembled, phi, spec.family, options,
                                   have_warm ? &warm_lam : nullptr, &warm_beta);
    flagged = flagged || final_inner.flagged;
  }

  const PirlsResult& fit = final_inner.fit;
  Eigen::VectorXd mu = mean_from_eta(assembled.blocks.design * fit.beta, assembled.offset);
  result.coefficients = fit.beta;
  result.log_lambdas = final_inner.log_lambdas;
  result.phi = phi;
  result.edf_total = fit.edf_total;
  result.edf_per_term = fit.edf_per_term;
  result.deviance = fit.deviance;
  result.loglik = loglik_of(assembled.y, mu, phi, spec.family);
  result.aic = -2.0 * result.loglik + 2.0 * (result.edf_total + 1.0);
  result.gcv = final_inner.gcv;
  result.converged = fit.converged && !flagged;
  return result;
}

namespace {

bool term_in(const SmoothTerm& term, const std::vector<SmoothTerm>& terms) {
  return std::find(terms.begin(), terms.end(), term) != terms.end();
}

bool nested_in(const ModelSpec& small, const ModelSpec& big) {
  if (small.response != big.response) return false;
  for (const auto& name : small.parametric_terms)
    if (std::find(big.parametric_terms.begin(), big.parametric_terms.end(), name) ==
        big.parametric_terms.end())
      return false;
  for (const auto& term : small.smooth_terms)
    if (!term_in(term, big.smooth_terms)) return false;
  return true;
}

// log of the chi-square upper tail; falls back to the asymptotic expansion
// of the incomplete gamma when the tail underflows.
double chisq_log_sf(double stat, double df) {
  boost::math::chi_squared dist(df);
  double p = boost::math::cdf(boost::math::complement(dist, stat));
  if (p > 1e-290) return std::log(p);
  const double a = df / 2.0, x = stat / 2.0;
  // Q(a,x) ~ x^(a-1) e^-x / Gamma(a) * (1 + (a-1)/x + (a-1)(a-2)/x^2 + ...)
  double series = 1.0, term = 1.0;
  for (int k = 1; k < 8; ++k) {
    term *= (a - static_cast<double>(k)) / x;
    series += term;
  }
  return (a - 1.0) * std::log(x) - x - std::lgamma(a) + std::log(std::max(series, 1e-300));
}

}  // namespace

ModelComparison compare_models(const FitResult& fit_small, const FitResult& fit_big) {
  if (fit_small.n_obs != fit_big.n_obs)
    throw FitterError("compare_models: fits use different numbers of observations");
  if (!nested_in(fit_small.spec, fit_big.spec))
    throw FitterError("compare_models: small spec is not nested in big spec");
  ModelComparison cmp;
  cmp.lrt_stat = 2.0 * (fit_big.loglik - fit_small.loglik);
  if (cmp.lrt_stat < -1e-6)
    throw FitterError("compare_models: negative LRT statistic (optimizer failure?)");
  cmp.lrt_stat = std::max(cmp.lrt_stat, 0.0);
  cmp.df = fit_big.edf_total - fit_small.edf_total;
  cmp.delta_aic = fit_big.aic - fit_small.aic;
  if (cmp.lrt_stat <= 0.0 || cmp.df <= 1e-8) {
    cmp.lrt_p = 1.0;
    cmp.lrt_log_p = 0.0;
  } else {
    cmp.lrt_log_p = chisq_log_sf(cmp.lrt_stat, cmp.df);
    cmp.lrt_p = std::exp(cmp.lrt_log_p);
  }
  return cmp;
}

std::vector<PredictionRow> predict(const FitResult& fit,
                                   const std::map<std::string, Eigen::VectorXd>& columns,
                                   const std::map<std::string, double>& fixed) {
  Eigen::Index n = -1;
  for (const auto& [name, col] : columns) {
    if (n < 0) n = col.size();
    if (col.size() != n) throw FitterError("predict: grid columns differ in length");
  }
  if (n < 0) {
    if (fixed.empty() && (!fit.parametric_columns.empty() || !fit.term_models.empty()))
      throw FitterError("predict: no grid columns supplied");
    n = 1;
  }

  auto resolve = [&](const std::string& name) -> Eigen::VectorXd {
    if (auto it = fixed.find(name); it != fixed.end())
      return Eigen::VectorXd::Constant(n, it->second);
    if (auto it = columns.find(name); it != columns.end()) return it->second;
    throw FitterError("predict: variable '" + name + "' missing from grid and fixed values");
  };

  Eigen::VectorXd lp = Eigen::VectorXd::Constant(n, fit.coefficients[0]);
  int col = 1;
  for (const auto& name : fit.parametric_columns)
    lp += resolve(name) * fit.coefficients[col++];

  for (const auto& model : fit.term_models) {
    std::vector<Eigen::VectorXd> cols;
    for (std::size_t v = 0; v < model.term.variables.size(); ++v) {
      Eigen::VectorXd values = resolve(model.term.variables[v]);
      const auto& basis = model.marginals[v];
      std::ostringstream bad;
      int n_bad = 0;
      for (Eigen::Index i = 0; i < values.size(); ++i)
        if (!(values[i] >= basis.domain_lo() && values[i] <= basis.domain_hi())) {
          if (n_bad < 5) bad << (n_bad ? ", " : "") << values[i];
          ++n_bad;
        }
      if (n_bad > 0) {
        std::ostringstream msg;
        msg << "predict: " << n_bad << " value(s) of '" << model.term.variables[v]
            << "' outside training domain [" << basis.domain_lo() << ", " << basis.domain_hi()
            << "]: " << bad.str();
        throw FitterError(msg.str());
      }
      cols.push_back(std::move(values));
    }
    Eigen::MatrixXd raw = tensor_design_raw(model.marginals, cols);
    lp += raw * (model.constraint * fit.coefficients.segment(model.col_offset, model.n_cols));
  }

  std::vector<PredictionRow> rows(static_cast<std::size_t>(n));
  std::set<std::string> names;
  for (const auto& [name, c] : columns) names.insert(name);
  for (const auto& [name, v] : fixed) names.insert(name);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& row = rows[static_cast<std::size_t>(i)];
    row.linear_predictor = lp[i];
    row.rate = std::exp(lp[i]);
    for (const auto& name : names) {
      auto it = fixed.find(name);
      row.covariate_values[name] = it != fixed.end() ? it->second : columns.at(name)[i];
    }
  }
  return rows;
}

namespace {

nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vec_from_json(const nlohmann::json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  return v;
}

nlohmann::json mat_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd mat_from_json(const nlohmann::json& rows) {
  if (rows.empty()) return {};
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
  return m;
}

}  // namespace

nlohmann::json fit_result_to_json(const FitResult& fit) {
  nlohmann::json doc;
  doc["schema"] = "countgam.fit.v1";
  doc["formula"] = format_spec(fit.spec);
  doc["family"] = fit.spec.family == Family::Poisson ? "poisson" : "nb";
  switch (fit.spec.offset.kind) {
    case OffsetKind::PersonYears100k:
      doc["offset"] = {{"kind", "person_years_100k"}};
      break;
    case OffsetKind::None:
      doc["offset"] = {{"kind", "none"}};
      break;
    case OffsetKind::Column:
      doc["offset"] = {{"kind", "column"}, {"column", fit.spec.offset.column}};
      break;
  }
  doc["coefficients"] = vec_to_json(fit.coefficients);
  doc["log_lambdas"] = vec_to_json(fit.log_lambdas);
  doc["lambda_labels"] = fit.lambda_labels;
  if (std::isinf(fit.phi))
    doc["phi"] = nullptr;
  else
    doc["phi"] = fit.phi;
  doc["edf_total"] = fit.edf_total;
  doc["edf_per_term"] = vec_to_json(fit.edf_per_term);
  doc["deviance"] = fit.deviance;
  doc["loglik"] = fit.loglik;
  doc["aic"] = fit.aic;
  doc["gcv"] = fit.gcv;
  doc["n_obs"] = fit.n_obs;
  doc["n_rows_dropped"] = fit.n_rows_dropped;
  doc["converged"] = fit.converged;
  doc["notes"] = fit.notes;
  doc["parametric_columns"] = fit.parametric_columns;
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& model : fit.term_models) {
    nlohmann::json t;
    t["col_offset"] = model.col_offset;
    t["n_cols"] = model.n_cols;
    nlohmann::json marginals = nlohmann::json::array();
    for (const auto& basis : model.marginals)
      marginals.push_back({{"degree", basis.degree}, {"knots", vec_to_json(basis.knots)}});
    t["marginals"] = std::move(marginals);
    t["constraint"] = mat_to_json(model.constraint);
    terms.push_back(std::move(t));
  }
  doc["terms"] = std::move(terms);
  return doc;
}

FitResult fit_result_from_json(const nlohmann::json& doc) {
  if (doc.value("schema", "") != "countgam.fit.v1")
    throw FitterError("unrecognized fit document schema");
  FitResult fit;
  fit.spec = parse_formula(doc.at("formula").get<std::string>());
  fit.spec.family = doc.at("family").get<std::string>() == "poisson" ? Family::Poisson
                                                                     : Family::NegBin;
  const auto& off = doc.at("offset");
  const std::string kind = off.at("kind").get<std::string>();
  if (kind == "person_years_100k")
    fit.spec.offset = {OffsetKind::PersonYears100k, ""};
  else if (kind == "none")
    fit.spec.offset = {OffsetKind::None, ""};
  else
    fit.spec.offset = {OffsetKind::Column, off.at("column").get<std::string>()};
  fit.coefficients = vec_from_json(doc.at("coefficients"));
  fit.log_lambdas = vec_from_json(doc.at("log_lambdas"));
  fit.lambda_labels = doc.at("lambda_labels").get<std::vector<std::string>>();
  fit.phi = doc.at("phi").is_null() ? kInf : doc.at("phi").get<double>();
  fit.edf_total = doc.at("edf_total").get<double>();
  fit.edf_per_term = vec_from_json(doc.at("edf_per_term"));
  fit.deviance = doc.at("deviance").get<double>();
  fit.loglik = doc.at("loglik").get<double>();
  fit.aic = doc.at("aic").get<double>();
  fit.gcv = doc.at("gcv").get<double>();
  fit.n_obs = doc.at("n_obs").get<int>();
  fit.n_rows_dropped = doc.at("n_rows_dropped").get<int>();
  fit.converged = doc.at("converged").get<bool>();
  fit.notes = doc.at("notes").get<std::vector<std::string>>();
  fit.parametric_columns = doc.at("parametric_columns").get<std::vector<std::string>>();
  const auto& terms = doc.at("terms");
  if (terms.size() != fit.spec.smooth_terms.size())
    throw FitterError("fit document: term count does not match formula");
  for (std::size_t t = 0; t < terms.size(); ++t) {
    TermModel model;
    model.term = fit.spec.smooth_terms[t];
    model.col_offset = terms[t].at("col_offset").get<int>();
    model.n_cols = terms[t].at("n_cols").get<int>();
    for (const auto& m : terms[t].at("marginals"))
      model.marginals.push_back(
          make_basis_from_knots(vec_from_json(m.at("knots")), m.at("degree").get<int>()));
    model.constraint = mat_from_json(terms[t].at("constraint"));
    fit.term_models.push_back(std::move(model));
  }
  return fit;
}

}  // namespace countgam
