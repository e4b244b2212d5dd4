#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "countgam/data.hpp"

namespace countgam {

class DiagnosticsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Symmetric unit adjacency with row-standardized weights: each unit's
// neighbor weights sum to 1, so the weighted neighbor mean is literally
// the average of its neighbors' values.  Isolated units are kept in the
// roster but excluded from Moran's I.
struct NeighborGraph {
  std::vector<std::string> unit_ids;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<std::pair<std::size_t, double>>> neighbors;

  std::size_t n_units() const { return unit_ids.size(); }
  std::size_t n_isolated() const;
};

// Reads an edge-list CSV with header `id_a,id_b`; symmetrizes, dedups, and
// row-standardizes.  When a roster is given, edges naming unknown ids are
// an error and roster units with no edges become isolated units.
NeighborGraph build_neighbor_graph(const std::string& edges_path,
                                   const std::vector<std::string>* unit_roster = nullptr);

struct MoranResult {
  double I = 0.0;
  std::map<std::string, double> neighbor_means;  // non-isolated units only
  double slope = 0.0;  // OLS slope of neighbor means on values; == I under
                       // row-standardized weights
  std::size_t n_used = 0;
  std::size_t n_isolated = 0;
};

MoranResult morans_i(const std::map<std::string, double>& values, const NeighborGraph& graph);

struct AcfSummary {
  int lag = 0;
  std::map<std::string, double> per_unit_acf;
  std::map<double, double> weighted_quantiles;  // level -> value
  std::size_t n_units_excluded = 0;             // constant series
};

// Per-unit lag-l sample autocorrelation of a rate column for l = 1..max_lag,
// summarized across units by population-weighted quantiles at
// {5, 25, 50, 75, 95}%.
std::vector<AcfSummary> temporal_acf(const Panel& panel, const std::string& rate_column,
                                     int max_lag, const std::string& weight_column = "popsize");

// Weighted quantile with midpoint cumulative-weight interpolation: with
// equal weights the median of an odd count is the middle order statistic.
double weighted_quantile(std::vector<std::pair<double, double>> value_weight, double level);

// deaths / (popsize/1e5/12): crude rate per 100,000 person-years.
Eigen::VectorXd crude_rates(const Panel& panel);

}  // namespace countgam
