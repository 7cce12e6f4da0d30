#include <benchmark/benchmark.h>

#include <random>

#include "ascpipe/ascm.hpp"
#include "ascpipe/pca.hpp"
#include "ascpipe/tree.hpp"

namespace {

void BM_FitScWeights(benchmark::State& state) {
  const int t0 = 15;
  const int donors = static_cast<int>(state.range(0));
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd donor_pre(t0, donors);
  for (int t = 0; t < t0; ++t)
    for (int j = 0; j < donors; ++j) donor_pre(t, j) = normal(rng);
  Eigen::VectorXd treated = donor_pre.rowwise().mean();
  for (int t = 0; t < t0; ++t) treated[t] += 0.1 * normal(rng);
  const Eigen::VectorXd x_t;
  const Eigen::MatrixXd x_d;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ascpipe::fit_sc_weights(treated, donor_pre, x_t, x_d, 0.25));
  }
}
BENCHMARK(BM_FitScWeights)->Arg(5)->Arg(20)->Arg(100);

void BM_TreeFit(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd x(n, 9);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 9; ++j) x(i, j) = normal(rng);
    y[i] = (x(i, 0) > 0 ? 1.0 : -1.0) + 0.2 * normal(rng);
  }
  const std::vector<std::string> names = {"a", "b", "c", "d", "e", "f", "g", "h", "i"};
  for (auto _ : state) {
    benchmark::DoNotOptimize(ascpipe::tree_fit(y, x, names, {}));
  }
}
BENCHMARK(BM_TreeFit)->Arg(50)->Arg(200);

void BM_PcaFit(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(13);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd x(n, 12);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 12; ++j) x(i, j) = normal(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ascpipe::pca_fit(x, true));
  }
}
BENCHMARK(BM_PcaFit)->Arg(100)->Arg(500);

}  // namespace

BENCHMARK_MAIN();
