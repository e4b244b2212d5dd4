#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace countgam {

class FamilyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Negative binomial in the mean-dispersion parametrization: mean mu,
// var(y) = mu + mu^2/phi, log link.  Poisson is the phi -> infinity limit.
struct NBFamily {
  double phi;
  explicit NBFamily(double phi_) : phi(phi_) {
    if (!(phi > 0)) throw FamilyError("phi must be positive");
  }
  double variance(double mu) const { return mu + mu * mu / phi; }
};

// log P(Y = y) for Y ~ NB(mu, phi).  Stable for y up to 1e6 and phi up to
// 1e12 (large-phi cancellation in the gamma-function ratio is avoided).
double nb_logpmf(std::int64_t y, double mu, double phi);

double poisson_logpmf(std::int64_t y, double mu);

// 2 * (saturated loglik - fitted loglik) at the shared phi; >= 0.  The
// saturated y=0 term is the analytic mu -> 0 limit (zero contribution).
double nb_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, double phi);

double poisson_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu);

// Gamma-Poisson mixture draw: theta ~ Gamma(shape=phi, rate=phi/mu), then
// y ~ Poisson(theta).  Uses boost.random distributions, so the draw
// sequence for a given seed is reproducible across platforms.
std::int64_t sample_nb(double mu, double phi, std::mt19937_64& rng);

}  // namespace countgam
