#include <benchmark/benchmark.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "countgam/basis.hpp"
#include "countgam/diagnostics.hpp"
#include "countgam/family.hpp"
#include "countgam/fitter.hpp"
#include "countgam/formula.hpp"
#include "countgam/simulate.hpp"

using namespace countgam;

namespace {

Eigen::VectorXd random_unit_column(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = unif(rng);
  x[0] = 0.0;
  x[1] = 1.0;
  return x;
}

void BM_bspline_design(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  Eigen::VectorXd x = random_unit_column(n, 1);
  MarginalBasis basis = make_quantile_basis(x, 10);
  for (auto _ : state) benchmark::DoNotOptimize(bspline_design(x, basis));
  state.SetItemsProcessed(state.iterations() * n);
}

void BM_tensor_term(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  std::vector<Eigen::VectorXd> cols = {random_unit_column(n, 2), random_unit_column(n, 3)};
  std::vector<MarginalBasis> marginals = {make_quantile_basis(cols[0], 5),
                                          make_quantile_basis(cols[1], 5)};
  for (auto _ : state) benchmark::DoNotOptimize(tensor_term(marginals, {2}, cols));
}

void BM_nb_logpmf(benchmark::State& state) {
  long y = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(nb_logpmf(y % 200, 25.0, 4.0));
    ++y;
  }
}

void BM_pirls_smooth(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Eigen::VectorXd x = random_unit_column(n, 4);
  std::vector<MarginalBasis> marginals = {make_quantile_basis(x, 10)};
  TermBlock term = tensor_term(marginals, {1}, {x});
  DesignBlocks blocks;
  blocks.design.resize(n, 1 + term.design.cols());
  blocks.design.col(0).setOnes();
  blocks.design.rightCols(term.design.cols()) = term.design;
  DesignBlocks::PenaltyEntry pen;
  pen.matrix = term.penalties[0];
  pen.col_offset = 1;
  pen.label = "x";
  blocks.penalties.push_back(pen);
  blocks.term_ranges.emplace_back(1, static_cast<int>(term.design.cols()));
  std::mt19937_64 rng(5);
  Eigen::VectorXd y(n), offset = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i)
    y[i] = static_cast<double>(sample_nb(std::exp(2.0 + std::sin(6.28 * x[i])), 5.0, rng));
  Eigen::VectorXd log_lambda = Eigen::VectorXd::Zero(1);
  for (auto _ : state)
    benchmark::DoNotOptimize(pirls(blocks, log_lambda, y, offset, 5.0, Family::NegBin));
}

void BM_select_smoothing(benchmark::State& state) {
  SimConfig config;
  config.n_units = static_cast<int>(state.range(0));
  config.n_months = 6;
  config.surface = "sine";
  config.surface_params = {std::log(80.0), 0.8, 1.0};
  config.phi = 8.0;
  config.seed = 6;
  SimulatedPanel sim = simulate_panel(config);
  ModelSpec spec = parse_formula("deaths ~ s(x)");
  for (auto _ : state) benchmark::DoNotOptimize(select_smoothing(spec, sim.panel));
}

void BM_morans_i(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  // Rook lattice built in memory through the CSV loader's row standardization.
  std::string path = "bench_edges.csv";
  {
    std::ofstream out(path);
    out << "id_a,id_b\n";
    auto id = [](int i, int j) { return "r" + std::to_string(i) + "c" + std::to_string(j); };
    for (int i = 0; i < side; ++i)
      for (int j = 0; j < side; ++j) {
        if (i + 1 < side) out << id(i, j) << ',' << id(i + 1, j) << '\n';
        if (j + 1 < side) out << id(i, j) << ',' << id(i, j + 1) << '\n';
      }
  }
  NeighborGraph graph = build_neighbor_graph(path);
  std::remove(path.c_str());
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::map<std::string, double> values;
  for (const auto& id : graph.unit_ids) values[id] = normal(rng);
  for (auto _ : state) benchmark::DoNotOptimize(morans_i(values, graph));
}

}  // namespace

BENCHMARK(BM_bspline_design)->Arg(1000)->Arg(10000);
BENCHMARK(BM_tensor_term)->Arg(1000)->Arg(5000);
BENCHMARK(BM_nb_logpmf);
BENCHMARK(BM_pirls_smooth)->Arg(1000)->Arg(5000);
BENCHMARK(BM_select_smoothing)->Arg(50)->Arg(150)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_morans_i)->Arg(20)->Arg(50);

BENCHMARK_MAIN();
