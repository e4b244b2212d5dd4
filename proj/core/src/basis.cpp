#include "countgam/basis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace countgam {

namespace {

// Type-7 sample quantile (linear interpolation between order statistics).
double quantile(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  double h = p * static_cast<double>(n - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(h));
  std::size_t hi = std::min(lo + 1, n - 1);
  double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

int find_span(double x, const MarginalBasis& basis) {
  const auto& t = basis.knots;
  const int degree = basis.degree;
  const int n = basis.num_basis() - 1;
  if (x >= t[n + 1]) return n;
  if (x <= t[degree]) return degree;
  int lo = degree, hi = n + 1;
  while (hi - lo > 1) {
    int mid = (lo + hi) / 2;
    if (x < t[mid])
      hi = mid;
    else
      lo = mid;
  }
  return lo;
}

}  // namespace

MarginalBasis make_basis_from_knots(const Eigen::VectorXd& knots, int degree) {
  if (degree < 0) throw BasisError("degree must be >= 0");
  if (knots.size() < 2 * (degree + 1)) {
    if (knots.size() < degree + 2) throw BasisError("degenerate knot vector: too few knots");
  }
  for (Eigen::Index i = 1; i < knots.size(); ++i)
    if (knots[i] < knots[i - 1]) throw BasisError("knot vector must be non-decreasing");
  if (knots[0] == knots[knots.size() - 1]) throw BasisError("degenerate knot vector: zero-width domain");
  MarginalBasis basis{knots, degree};
  if (basis.num_basis() < degree + 1) throw BasisError("degenerate knot vector: num_basis < degree + 1");
  return basis;
}

MarginalBasis make_quantile_basis(const Eigen::VectorXd& values, int num_basis, int degree) {
  if (num_basis < degree + 1) throw BasisError("num_basis must be >= degree + 1");
  if (values.size() < 2) throw BasisError("need at least 2 data values for knot placement");
  std::vector<double> sorted(values.data(), values.data() + values.size());
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front();
  const double hi = sorted.back();
  if (!(hi > lo)) throw BasisError("cannot place knots: variable is constant");

  const int n_interior = num_basis - degree - 1;
  std::vector<double> interior(static_cast<std::size_t>(std::max(n_interior, 0)));
  for (int j = 1; j <= n_interior; ++j)
    interior[j - 1] = quantile(sorted, static_cast<double>(j) / (n_interior + 1));
  // Quantile knots can collide on heavily tied data; fall back to uniform.
  bool ok = true;
  double prev = lo;
  for (double k : interior) {
    if (!(k > prev) || !(k < hi)) {
      ok = false;
      break;
    }
    prev = k;
  }
  if (!ok)
    for (int j = 1; j <= n_interior; ++j)
      interior[j - 1] = lo + (hi - lo) * static_cast<double>(j) / (n_interior + 1);

  Eigen::VectorXd knots(num_basis + degree + 1);
  int idx = 0;
  for (int r = 0; r <= degree; ++r) knots[idx++] = lo;
  for (double k : interior) knots[idx++] = k;
  for (int r = 0; r <= degree; ++r) knots[idx++] = hi;
  return MarginalBasis{knots, degree};
}

Eigen::MatrixXd bspline_design(const Eigen::VectorXd& x, const MarginalBasis& basis) {
  const int k = basis.num_basis();
  const int degree = basis.degree;
  if (k < degree + 1) throw BasisError("degenerate knot vector");
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(x.size(), k);
  std::vector<double> N(degree + 1), left(degree + 1), right(degree + 1);
  const auto& t = basis.knots;
  for (Eigen::Index row = 0; row < x.size(); ++row) {
    const double xi = x[row];
    if (!(xi >= basis.domain_lo() && xi <= basis.domain_hi())) {
      std::ostringstream msg;
      msg << "value " << xi << " outside basis domain [" << basis.domain_lo() << ", "
          << basis.domain_hi() << "]";
      throw BasisError(msg.str());
    }
    const int span = find_span(xi, basis);
    N[0] = 1.0;
    for (int j = 1; j <= degree; ++j) {
      left[j] = xi - t[span + 1 - j];
      right[j] = t[span + j] - xi;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        double denom = right[r + 1] + left[j - r];
        double temp = denom != 0.0 ? N[r] / denom : 0.0;
        N[r] = saved + right[r + 1] * temp;
        saved = left[j - r] * temp;
      }
      N[j] = saved;
    }
    for (int j = 0; j <= degree; ++j) design(row, span - degree + j) = N[j];
  }
  return design;
}

Eigen::MatrixXd difference_penalty(int num_basis, int order) {
  if (order < 1) throw BasisError("penalty order must be >= 1");
  if (order >= num_basis) throw BasisError("penalty order must be < num_basis");
  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(num_basis, num_basis);
  for (int pass = 0; pass < order; ++pass) {
    Eigen::MatrixXd next(d.rows() - 1, d.cols());
    for (Eigen::Index i = 0; i < next.rows(); ++i) next.row(i) = d.row(i + 1) - d.row(i);
    d = std::move(next);
  }
  return d.transpose() * d;
}

Eigen::MatrixXd kronecker(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

namespace {

// Row-wise Kronecker product: each output row is the flattened outer
// product of the corresponding input rows, columns of `b` varying fastest.
Eigen::MatrixXd rowwise_kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    out.middleCols(i * b.cols(), b.cols()) = b.array().colwise() * a.col(i).array();
  return out;
}

}  // namespace

Eigen::MatrixXd tensor_design_raw(const std::vector<MarginalBasis>& marginals,
                                  const std::vector<Eigen::VectorXd>& data_columns) {
  if (marginals.size() != data_columns.size())
    throw BasisError("one data column required per marginal basis");
  const Eigen::Index n = data_columns.front().size();
  for (const auto& col : data_columns)
    if (col.size() != n) throw BasisError("mismatched column lengths");
  Eigen::MatrixXd design = bspline_design(data_columns[0], marginals[0]);
  for (std::size_t v = 1; v < marginals.size(); ++v)
    design = rowwise_kron(design, bspline_design(data_columns[v], marginals[v]));
  return design;
}

TermBlock tensor_term(const std::vector<MarginalBasis>& marginals,
                      const std::vector<int>& d_groups,
                      const std::vector<Eigen::VectorXd>& data_columns, int penalty_order) {
  const std::size_t n_vars = marginals.size();
  std::size_t d_sum = 0;
  for (int d : d_groups) {
    if (d < 1 || d > 2) throw BasisError("anisotropy group size must be 1 or 2");
    d_sum += static_cast<std::size_t>(d);
  }
  if (d_sum != n_vars) throw BasisError("d-groups must partition the variables");

  Eigen::MatrixXd raw = tensor_design_raw(marginals, data_columns);
  const Eigen::Index p = raw.cols();

  // One penalty per group: identity factors on all other axes, the group's
  // marginal penalty (or the tied two-axis sum) on its own.
  std::vector<Eigen::MatrixXd> penalties;
  std::vector<std::string> labels;
  std::size_t var = 0;
  Eigen::Index dim_before = 1;
  std::vector<Eigen::Index> group_dims;
  std::vector<Eigen::MatrixXd> group_pens;
  for (int d : d_groups) {
    Eigen::MatrixXd s_group;
    std::string label;
    if (d == 1) {
      s_group = difference_penalty(marginals[var].num_basis(), penalty_order);
      label = "var" + std::to_string(var);
    } else {
      const int ka = marginals[var].num_basis();
      const int kb = marginals[var + 1].num_basis();
      Eigen::MatrixXd sa = difference_penalty(ka, penalty_order);
      Eigen::MatrixXd sb = difference_penalty(kb, penalty_order);
      s_group = kronecker(sa, Eigen::MatrixXd::Identity(kb, kb)) +
                kronecker(Eigen::MatrixXd::Identity(ka, ka), sb);
      label = "var" + std::to_string(var) + "+var" + std::to_string(var + 1);
    }
    group_dims.push_back(s_group.rows());
    group_pens.push_back(std::move(s_group));
    labels.push_back(std::move(label));
    var += static_cast<std::size_t>(d);
  }
  Eigen::Index total_dim = 1;
  for (Eigen::Index gd : group_dims) total_dim *= gd;
  if (total_dim != p) throw BasisError("internal: tensor dimension bookkeeping");
  for (std::size_t g = 0; g < group_pens.size(); ++g) {
    Eigen::Index dim_after = p / (dim_before * group_dims[g]);
    Eigen::MatrixXd full =
        kronecker(Eigen::MatrixXd::Identity(dim_before, dim_before),
                  kronecker(group_pens[g], Eigen::MatrixXd::Identity(dim_after, dim_after)));
    penalties.push_back(std::move(full));
    dim_before *= group_dims[g];
  }

  // Sum-to-zero identifiability: reparameterize onto the null space of the
  // column-sum constraint, computed from the training rows.
  Eigen::RowVectorXd colsums = raw.colwise().sum();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(colsums.transpose());
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd constraint = q.rightCols(p - 1);

  TermBlock block;
  block.design = raw * constraint;
  block.constraint = std::move(constraint);
  block.cols_unconstrained = static_cast<int>(p);
  block.group_labels = std::move(labels);
  block.penalties.reserve(penalties.size());
  for (auto& pen : penalties) {
    Eigen::MatrixXd constrained = block.constraint.transpose() * pen * block.constraint;
    block.penalties.push_back(0.5 * (constrained + constrained.transpose()));
  }
  return block;
}

}  // namespace countgam
