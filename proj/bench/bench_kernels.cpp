// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <map>
#include <random>

#include "spechomog/cell.hpp"
#include "spechomog/config.hpp"
#include "spechomog/direct.hpp"
#include "spechomog/kernels.hpp"

using namespace spechomog;

namespace {

Model bench_model(double sigma) {
  nlohmann::json m = {{"dimension", 1},
                      {"kernel", {{"type", "gaussian"}, {"sigma", sigma}}},
                      {"kappa", "1 + 0.5*sin(2*pi*(xi1 - eta1))"},
                      {"a", "2 + x1 + 0.3*sin(2*pi*xi1)"}};
  return Model::validated(cli::parse_config({{"model", m}}).model);
}

std::vector<double> random_vec(int n) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_DenseMatvec(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const DenseMatrix A = DenseMatrix::Random(n, n);
  const auto x = random_vec(n);
  std::vector<double> y(n);
  for (auto _ : st) {
    if constexpr (Parallel)
      kernels::dense_matvec(A, x, y);
    else
      kernels::dense_matvec_serial(A, x, y);
    benchmark::DoNotOptimize(y.data());
  }
  st.SetItemsProcessed(st.iterations() * n * n);
}

const direct::DirectOperator& direct_op(int K) {
  static std::map<int, direct::DirectOperator> cache;
  auto it = cache.find(K);
  if (it == cache.end()) {
    const auto m = bench_model(1.0);
    it = cache.emplace(K, direct::assemble_L_eps(m, direct::EpsGrid::make(m.domain(), K, 8), 1e-10)).first;
  }
  return it->second;
}

template <bool Parallel>
void BM_CsrMatvec(benchmark::State& st) {
  const auto& L = direct_op(static_cast<int>(st.range(0))).L;
  const auto x = random_vec(L.rows);
  std::vector<double> y(L.rows);
  for (auto _ : st) {
    if constexpr (Parallel)
      kernels::csr_matvec(L, x, y);
    else
      kernels::csr_matvec_serial(L, x, y);
    benchmark::DoNotOptimize(y.data());
  }
  st.SetItemsProcessed(st.iterations() * L.nnz());
}

template <bool Parallel>
void BM_CellAssembly(benchmark::State& st) {
  const auto m = bench_model(0.3);
  const auto grid = cell::TorusGrid::make(1, static_cast<int>(st.range(0)));
  Point p{}, x{};
  p[0] = 0.5;
  x[0] = 0.5;
  for (auto _ : st) benchmark::DoNotOptimize(cell::assemble_cell_operator(m, grid, p, x, 1e-10, Parallel).M.data());
}

template <bool Parallel>
void BM_DirectBottom(benchmark::State& st) {
  const auto& op = direct_op(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(direct::bottom_of_spectrum(op, 1e-10, 2000000, Parallel).lambda_eps);
}

}  // namespace

BENCHMARK(BM_DenseMatvec<false>)->Arg(256)->Arg(1024);
BENCHMARK(BM_DenseMatvec<true>)->Arg(256)->Arg(1024);
BENCHMARK(BM_CsrMatvec<false>)->Arg(32)->Arg(128);
BENCHMARK(BM_CsrMatvec<true>)->Arg(32)->Arg(128);
BENCHMARK(BM_CellAssembly<false>)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CellAssembly<true>)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DirectBottom<false>)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DirectBottom<true>)->Arg(32)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
