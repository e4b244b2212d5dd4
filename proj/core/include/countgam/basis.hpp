#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "countgam/formula.hpp"

namespace countgam {

class BasisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Clamped (open) B-spline basis on [domain_lo, domain_hi].  The knot vector
// repeats the end knots degree+1 times; num_basis() = knots.size() - degree - 1.
struct MarginalBasis {
  Eigen::VectorXd knots;
  int degree = 3;

  int num_basis() const { return static_cast<int>(knots.size()) - degree - 1; }
  double domain_lo() const { return knots[0]; }
  double domain_hi() const { return knots[knots.size() - 1]; }
};

// Basis from an explicit full knot vector (must be non-decreasing with
// enough knots for the degree).
MarginalBasis make_basis_from_knots(const Eigen::VectorXd& knots, int degree);

// Cubic basis with num_basis functions; interior knots at quantiles of the
// training values, clamped ends at the data min/max.  Falls back to uniform
// interior knots when quantiles collide (heavily tied data).
MarginalBasis make_quantile_basis(const Eigen::VectorXd& values, int num_basis, int degree = 3);

// Evaluate all basis functions at each x (Cox-de Boor recursion).
// Rows are non-negative and sum to 1.  Values outside the domain are an
// error, never extrapolated.
Eigen::MatrixXd bspline_design(const Eigen::VectorXd& x, const MarginalBasis& basis);

// S = D'D for the order-th forward difference operator D; rank num_basis - order.
Eigen::MatrixXd difference_penalty(int num_basis, int order);

// Design-matrix block for one smooth term: constrained design columns plus
// one penalty per anisotropy group.  The sum-to-zero constraint over the
// training rows has already been absorbed: design = raw_design * constraint,
// and each penalty is constraint' * S * constraint.
struct TermBlock {
  Eigen::MatrixXd design;                  // n x (cols_unconstrained - 1)
  std::vector<Eigen::MatrixXd> penalties;  // one per d-group, constrained size
  std::vector<std::string> group_labels;
  Eigen::MatrixXd constraint;  // cols_unconstrained x (cols_unconstrained - 1)
  int cols_unconstrained = 0;
  int col_offset = 0;  // set by the fitter when assembling the full design
};

// Build a tensor-product term block.  marginals/data_columns are aligned
// per variable; d_groups partitions the variables in order into groups of
// size 1 or 2.  Design rows are Kronecker products of the marginal rows
// (last variable varies fastest).  Each group's penalty embeds the group's
// marginal penalty with identity factors on the other axes; a 2-variable
// group uses S_a (x) I + I (x) S_b so both axes share one smoothing
// parameter.
TermBlock tensor_term(const std::vector<MarginalBasis>& marginals,
                      const std::vector<int>& d_groups,
                      const std::vector<Eigen::VectorXd>& data_columns,
                      int penalty_order = 2);

// Raw (unconstrained) tensor design rows for prediction; same column
// ordering as tensor_term's pre-constraint design.
Eigen::MatrixXd tensor_design_raw(const std::vector<MarginalBasis>& marginals,
                                  const std::vector<Eigen::VectorXd>& data_columns);

Eigen::MatrixXd kronecker(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace countgam
