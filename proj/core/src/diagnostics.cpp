#include "countgam/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace countgam {

std::size_t NeighborGraph::n_isolated() const {
  std::size_t count = 0;
  for (const auto& nb : neighbors)
    if (nb.empty()) ++count;
  return count;
}

NeighborGraph build_neighbor_graph(const std::string& edges_path,
                                   const std::vector<std::string>* unit_roster) {
  std::ifstream in(edges_path);
  if (!in) throw DiagnosticsError("cannot open '" + edges_path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DiagnosticsError("empty edge file");
  while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
  if (line != "id_a,id_b")
    throw DiagnosticsError("edge file must start with the header 'id_a,id_b', got '" + line +
                           "'");

  NeighborGraph graph;
  auto intern = [&](const std::string& id) -> std::size_t {
    auto it = graph.index.find(id);
    if (it != graph.index.end()) return it->second;
    if (unit_roster)
      throw DiagnosticsError("edge references id '" + id + "' not in the unit roster");
    std::size_t idx = graph.unit_ids.size();
    graph.index.emplace(id, idx);
    graph.unit_ids.push_back(id);
    graph.neighbors.emplace_back();
    return idx;
  };
  if (unit_roster) {
    for (const auto& id : *unit_roster) {
      if (graph.index.count(id)) throw DiagnosticsError("duplicate id in roster: " + id);
      graph.index.emplace(id, graph.unit_ids.size());
      graph.unit_ids.push_back(id);
      graph.neighbors.emplace_back();
    }
  }

  std::set<std::pair<std::size_t, std::size_t>> edges;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::istringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b))
      throw DiagnosticsError("malformed edge at line " + std::to_string(line_no));
    while (!b.empty() && (b.back() == '\r' || b.back() == ' ')) b.pop_back();
    if (a == b) throw DiagnosticsError("self-loop on '" + a + "' at line " + std::to_string(line_no));
    std::size_t ia = intern(a), ib = intern(b);
    edges.emplace(std::min(ia, ib), std::max(ia, ib));
  }

  for (auto [ia, ib] : edges) {
    graph.neighbors[ia].emplace_back(ib, 1.0);
    graph.neighbors[ib].emplace_back(ia, 1.0);
  }
  for (auto& nb : graph.neighbors) {
    std::sort(nb.begin(), nb.end());
    if (!nb.empty()) {
      const double w = 1.0 / static_cast<double>(nb.size());
      for (auto& [idx, weight] : nb) weight = w;
    }
  }
  return graph;
}

MoranResult morans_i(const std::map<std::string, double>& values, const NeighborGraph& graph) {
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < graph.n_units(); ++i) {
    if (graph.neighbors[i].empty()) continue;
    if (!values.count(graph.unit_ids[i]))
      throw DiagnosticsError("no value supplied for unit '" + graph.unit_ids[i] + "'");
    used.push_back(i);
  }
  MoranResult result;
  result.n_isolated = graph.n_isolated();
  result.n_used = used.size();
  if (used.size() < 2) throw DiagnosticsError("Moran's I needs at least 2 non-isolated units");

  std::vector<double> x(used.size());
  double mean = 0.0;
  for (std::size_t k = 0; k < used.size(); ++k) {
    x[k] = values.at(graph.unit_ids[used[k]]);
    mean += x[k];
  }
  mean /= static_cast<double>(used.size());
  double ss = 0.0;
  for (double xi : x) ss += (xi - mean) * (xi - mean);
  if (!(ss > 0)) throw DiagnosticsError("Moran's I undefined for a constant field");

  std::map<std::size_t, std::size_t> pos;
  for (std::size_t k = 0; k < used.size(); ++k) pos[used[k]] = k;

  double cross = 0.0;
  double w_sum = 0.0;
  for (std::size_t k = 0; k < used.size(); ++k) {
    double nb_mean = 0.0;
    double nb_wsum = 0.0;
    for (auto [j, w] : graph.neighbors[used[k]]) {
      auto it = pos.find(j);
      if (it == pos.end()) continue;  // neighbor is isolated-only in the used set? cannot happen
      cross += w * (x[k] - mean) * (x[it->second] - mean);
      nb_mean += w * x[it->second];
      nb_wsum += w;
      w_sum += w;
    }
    result.neighbor_means[graph.unit_ids[used[k]]] = nb_wsum > 0 ? nb_mean / nb_wsum : 0.0;
  }
  result.I = (static_cast<double>(used.size()) / w_sum) * cross / ss;

  // OLS slope of neighbor means on values.
  double sxy = 0.0, sxx = 0.0, ybar = 0.0;
  for (std::size_t k = 0; k < used.size(); ++k)
    ybar += result.neighbor_means[graph.unit_ids[used[k]]];
  ybar /= static_cast<double>(used.size());
  for (std::size_t k = 0; k < used.size(); ++k) {
    const double yk = result.neighbor_means[graph.unit_ids[used[k]]];
    sxy += (x[k] - mean) * (yk - ybar);
    sxx += (x[k] - mean) * (x[k] - mean);
  }
  result.slope = sxy / sxx;
  return result;
}

double weighted_quantile(std::vector<std::pair<double, double>> value_weight, double level) {
  if (value_weight.empty()) throw DiagnosticsError("weighted_quantile: empty input");
  if (!(level >= 0.0 && level <= 1.0))
    throw DiagnosticsError("weighted_quantile: level must be in [0, 1]");
  std::sort(value_weight.begin(), value_weight.end());
  double total = 0.0;
  for (auto [v, w] : value_weight) {
    if (!(w >= 0)) throw DiagnosticsError("weighted_quantile: negative weight");
    total += w;
  }
  if (!(total > 0)) throw DiagnosticsError("weighted_quantile: zero total weight");

  // Midpoint rule: the i-th sorted value sits at cumulative probability
  // (S_i - w_i/2) / S_n; interpolate linearly between those points.
  const std::size_t n = value_weight.size();
  std::vector<double> p(n);
  double cum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = (cum + value_weight[i].second / 2.0) / total;
    cum += value_weight[i].second;
  }
  if (level <= p.front()) return value_weight.front().first;
  if (level >= p.back()) return value_weight.back().first;
  for (std::size_t i = 1; i < n; ++i) {
    if (level <= p[i]) {
      const double frac = (level - p[i - 1]) / (p[i] - p[i - 1]);
      return value_weight[i - 1].first +
             frac * (value_weight[i].first - value_weight[i - 1].first);
    }
  }
  return value_weight.back().first;
}

Eigen::VectorXd crude_rates(const Panel& panel) {
  const Eigen::Index n = static_cast<Eigen::Index>(panel.n_rows());
  Eigen::VectorXd rates(n);
  for (Eigen::Index i = 0; i < n; ++i)
    rates[i] = panel.deaths[i] / (panel.popsize[i] / 1e5 / 12.0);
  return rates;
}

std::vector<AcfSummary> temporal_acf(const Panel& panel, const std::string& rate_column,
                                     int max_lag, const std::string& weight_column) {
  if (max_lag < 1) throw DiagnosticsError("max_lag must be >= 1");
  Eigen::VectorXd rates =
      rate_column == "crude_rate" ? crude_rates(panel) : panel.column(rate_column);
  Eigen::VectorXd weights = panel.column(weight_column);

  // Gather each unit's series in month order.
  std::map<std::string, std::vector<std::pair<int, double>>> series;
  std::map<std::string, double> unit_weight;
  std::map<std::string, int> unit_weight_n;
  for (std::size_t i = 0; i < panel.n_rows(); ++i) {
    series[panel.unit_ids[i]].emplace_back(panel.months[i],
                                           rates[static_cast<Eigen::Index>(i)]);
    unit_weight[panel.unit_ids[i]] += weights[static_cast<Eigen::Index>(i)];
    unit_weight_n[panel.unit_ids[i]] += 1;
  }
  for (auto& [id, s] : series) {
    std::sort(s.begin(), s.end());
    if (static_cast<int>(s.size()) < max_lag + 2)
      throw DiagnosticsError("unit '" + id + "' has fewer than max_lag + 2 months");
    for (auto [m, v] : s)
      if (!std::isfinite(v)) throw DiagnosticsError("non-finite rate for unit '" + id + "'");
  }

  std::vector<AcfSummary> out;
  for (int lag = 1; lag <= max_lag; ++lag) {
    AcfSummary summary;
    summary.lag = lag;
    std::vector<std::pair<double, double>> acf_weight;
    for (const auto& [id, s] : series) {
      const int t_len = static_cast<int>(s.size());
      double mean = 0.0;
      for (auto [m, v] : s) mean += v;
      mean /= t_len;
      double denom = 0.0;
      for (auto [m, v] : s) denom += (v - mean) * (v - mean);
      if (!(denom > 0)) {
        ++summary.n_units_excluded;  // constant series: acf undefined
        continue;
      }
      double num = 0.0;
      for (int t = 0; t + lag < t_len; ++t)
        num += (s[t].second - mean) * (s[t + lag].second - mean);
      const double acf = num / denom;
      summary.per_unit_acf[id] = acf;
      acf_weight.emplace_back(acf, unit_weight.at(id) / unit_weight_n.at(id));
    }
    if (acf_weight.empty()) throw DiagnosticsError("all unit series are constant");
    for (double level : {0.05, 0.25, 0.5, 0.75, 0.95})
      summary.weighted_quantiles[level] = weighted_quantile(acf_weight, level);
    out.push_back(std::move(summary));
  }
  return out;
}

}  // namespace countgam
