#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "countgam/family.hpp"
#include "oracles.hpp"

using namespace countgam;

TEST_CASE("y=0 closed form") {
  // log P(0) = phi * log(phi/(phi+mu)); mu=1, phi=1 -> log(1/2)
  CHECK(nb_logpmf(0, 1.0, 1.0) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  for (double mu : {0.3, 2.0, 17.5})
    for (double phi : {0.5, 1.0, 8.0})
      CHECK(nb_logpmf(0, mu, phi) ==
            doctest::Approx(phi * std::log(phi / (phi + mu))).epsilon(1e-12));
}

TEST_CASE("matches direct closed-form pmf") {
  for (long y : {0L, 1L, 5L, 40L, 300L})
    for (double mu : {0.5, 3.0, 25.0})
      for (double phi : {0.7, 2.0, 50.0})
        CHECK(nb_logpmf(y, mu, phi) ==
              doctest::Approx(oracle::nb_logpmf_direct(y, mu, phi)).epsilon(1e-10));
}

TEST_CASE("Poisson limit at phi=1e9") {
  CHECK(std::abs(nb_logpmf(2, 3.0, 1e9) - poisson_logpmf(2, 3.0)) < 1e-6);
  for (long y = 0; y <= 100; y += 7)
    for (double mu : {0.5, 3.0, 20.0, 50.0})
      CHECK(std::abs(nb_logpmf(y, mu, 1e9) - poisson_logpmf(y, mu)) < 1e-6);
}

TEST_CASE("pmf normalizes") {
  double total = 0.0;
  for (long y = 0; y <= 200; ++y) total += std::exp(nb_logpmf(y, 2.0, 1.5));
  CHECK(std::abs(total - 1.0) < 1e-8);
}

TEST_CASE("stability at extreme arguments") {
  CHECK(std::isfinite(nb_logpmf(1000000, 1e6, 1e12)));
  CHECK(std::isfinite(nb_logpmf(1000000, 2.0, 0.5)));
  CHECK(std::isfinite(nb_logpmf(0, 1e6, 1e12)));
  CHECK_THROWS_AS(nb_logpmf(1, 0.0, 1.0), FamilyError);
  CHECK_THROWS_AS(nb_logpmf(1, 1.0, -2.0), FamilyError);
}

TEST_CASE("unimodal in mu with mode at y") {
  for (long y : {1L, 4L, 30L}) {
    for (double phi : {0.8, 5.0}) {
      double at_y = nb_logpmf(y, static_cast<double>(y), phi);
      CHECK(at_y > nb_logpmf(y, y * 0.8, phi));
      CHECK(at_y > nb_logpmf(y, y * 1.25, phi));
    }
  }
}

TEST_CASE("deviance basics") {
  Eigen::VectorXd y(3), mu(3);
  y << 2, 4, 9;
  mu << 2, 4, 9;
  CHECK(nb_deviance(y, mu, 3.0) == doctest::Approx(0.0));
  // y=0 saturated term is the analytic mu -> 0 limit: deviance stays finite
  // and tends to the fitted-only contribution.
  Eigen::VectorXd y0(1), mu0(1);
  y0 << 0;
  mu0 << 1e-12;
  CHECK(nb_deviance(y0, mu0, 3.0) < 1e-8);

  // Single observation equals the two-term log-likelihood difference.
  Eigen::VectorXd y1(1), mu1(1);
  y1 << 5;
  mu1 << 2;
  double expected = 2.0 * (nb_logpmf(5, 5.0, 3.0) - nb_logpmf(5, 2.0, 3.0));
  CHECK(nb_deviance(y1, mu1, 3.0) == doctest::Approx(expected).epsilon(1e-12));

  // Additivity under dataset doubling.
  Eigen::VectorXd y2(4), mu2(4);
  y2 << 3, 7, 3, 7;
  mu2 << 2.5, 6.0, 2.5, 6.0;
  CHECK(nb_deviance(y2, mu2, 2.0) ==
        doctest::Approx(2.0 * nb_deviance(y2.head(2), mu2.head(2), 2.0)).epsilon(1e-12));

  Eigen::VectorXd bad(2);
  CHECK_THROWS_AS(nb_deviance(y1, bad, 1.0), FamilyError);
}

TEST_CASE("deviance non-negative on random pairs") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> unif(0.1, 20.0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd y(5), mu(5);
    for (int i = 0; i < 5; ++i) {
      y[i] = std::floor(unif(rng));
      mu[i] = unif(rng);
    }
    CHECK(nb_deviance(y, mu, unif(rng)) >= 0.0);
  }
}

TEST_CASE("sampler mean and variance") {
  std::mt19937_64 rng(1234);
  const int n = 1'000'000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    double d = static_cast<double>(sample_nb(4.0, 2.0, rng));
    sum += d;
    sumsq += d * d;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean - 4.0) < 0.02);
  CHECK(std::abs(var - 12.0) < 0.3);  // 4 + 16/2
}

TEST_CASE("sampler Poisson limit dispersion") {
  std::mt19937_64 rng(777);
  const int n = 1'000'000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    double d = static_cast<double>(sample_nb(1.0, 1e9, rng));
    sum += d;
    sumsq += d * d;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  CHECK(var / mean > 0.98);
  CHECK(var / mean < 1.02);
}

TEST_CASE("fixed seed reproduces the draw sequence") {
  std::mt19937_64 a(99), b(99);
  for (int i = 0; i < 1000; ++i) CHECK(sample_nb(3.3, 1.7, a) == sample_nb(3.3, 1.7, b));
}

TEST_CASE("mixture identity: empirical pmf matches nb_logpmf") {
  std::mt19937_64 rng(2024);
  const int n = 1'000'000;
  const double mu = 5.0, phi = 1.8;
  std::vector<long> counts(51, 0);
  for (int i = 0; i < n; ++i) {
    auto d = sample_nb(mu, phi, rng);
    if (d <= 50) ++counts[static_cast<std::size_t>(d)];
  }
  for (long y = 0; y <= 50; ++y) {
    double p = std::exp(nb_logpmf(y, mu, phi));
    double empirical = static_cast<double>(counts[static_cast<std::size_t>(y)]) / n;
    double tol = 3.0 * std::sqrt(p * (1.0 - p) / n);
    CHECK(std::abs(empirical - p) <= tol + 1e-9);
  }
}
