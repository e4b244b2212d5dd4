#include "countgam/optim.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace countgam {

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& start, const NelderMeadOptions& options) {
  const int n = static_cast<int>(start.size());
  NelderMeadResult result;
  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    return f(x);
  };

  std::vector<Eigen::VectorXd> verts(n + 1, start);
  std::vector<double> vals(n + 1);
  for (int i = 0; i < n; ++i) verts[i + 1][i] += options.initial_step;
  for (int i = 0; i <= n; ++i) vals[i] = eval(verts[i]);

  const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;
  while (evals < options.max_evaluations) {
    std::vector<int> order(n + 1);
    for (int i = 0; i <= n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] < vals[b]; });
    {
      std::vector<Eigen::VectorXd> v2;
      std::vector<double> f2;
      for (int i : order) {
        v2.push_back(verts[i]);
        f2.push_back(vals[i]);
      }
      verts = std::move(v2);
      vals = std::move(f2);
    }
    if (std::abs(vals[n] - vals[0]) <= options.ftol * (1.0 + std::abs(vals[0]))) {
      result.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += verts[i];
    centroid /= static_cast<double>(n);

    Eigen::VectorXd reflected = centroid + alpha * (centroid - verts[n]);
    double f_ref = eval(reflected);
    if (f_ref < vals[0]) {
      Eigen::VectorXd expanded = centroid + gamma * (reflected - centroid);
      double f_exp = eval(expanded);
      if (f_exp < f_ref) {
        verts[n] = expanded;
        vals[n] = f_exp;
      } else {
        verts[n] = reflected;
        vals[n] = f_ref;
      }
    } else if (f_ref < vals[n - 1]) {
      verts[n] = reflected;
      vals[n] = f_ref;
    } else {
      Eigen::VectorXd contracted = centroid + rho * (verts[n] - centroid);
      double f_con = eval(contracted);
      if (f_con < vals[n]) {
        verts[n] = contracted;
        vals[n] = f_con;
      } else {
        for (int i = 1; i <= n; ++i) {
          verts[i] = verts[0] + sigma * (verts[i] - verts[0]);
          vals[i] = eval(verts[i]);
        }
      }
    }
  }

  int best = 0;
  for (int i = 1; i <= n; ++i)
    if (vals[i] < vals[best]) best = i;
  result.x = verts[best];
  result.value = vals[best];
  result.evaluations = evals;
  return result;
}

GoldenSectionResult golden_section_minimize(const std::function<double(double)>& f, double lo,
                                            double hi, double xtol, int max_evaluations) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  GoldenSectionResult result;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  result.evaluations = 2;
  while (b - a > xtol && result.evaluations < max_evaluations) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
    ++result.evaluations;
  }
  if (fc < fd) {
    result.x = c;
    result.value = fc;
  } else {
    result.x = d;
    result.value = fd;
  }
  return result;
}

}  // namespace countgam
