#include "fedcof/client_stats.hpp"
#include "fedcof/classifier.hpp"
#include "fedcof/partitioner.hpp"
#include "fedcof/privacy.hpp"
#include "fedcof/server_aggregation.hpp"

#include <benchmark/benchmark.h>

#include <vector>

using namespace fedcof;

namespace {

struct Federation {
  FeatureDataset data;
  std::vector<ClientShare> shares;
};

Federation make_federation(std::uint32_t dim, std::uint32_t clients) {
  Federation f;
  f.data = generate_synthetic(anisotropic_benchmark(10, dim, 500, 100.0, 2.0, 7));
  const ClientAssignment a = dirichlet_partition(f.data, clients, 0.1, 11);
  const auto members = a.members();
  for (ClientId k = 0; k < clients; ++k) f.shares.push_back(compute_class_means(f.data, members[k], k));
  return f;
}

void BM_Partition(benchmark::State& state) {
  const FeatureDataset data = generate_synthetic(anisotropic_benchmark(10, 8, 5000, 10.0, 1.0, 3));
  for (auto _ : state) {
    benchmark::DoNotOptimize(dirichlet_partition(data, static_cast<std::uint32_t>(state.range(0)), 0.1, 5));
  }
}
BENCHMARK(BM_Partition)->Arg(10)->Arg(100)->Arg(1000);

void BM_EstimateCovariances(benchmark::State& state) {
  const Federation f = make_federation(static_cast<std::uint32_t>(state.range(0)), 100);
  const GlobalMeans g = aggregate_means(f.shares);
  for (auto _ : state) {
    benchmark::DoNotOptimize(estimate_covariances(f.shares, g, 1.0, InsufficientMeans::Shrinkage));
  }
}
BENCHMARK(BM_EstimateCovariances)->Arg(32)->Arg(128)->Arg(512);

void BM_SolveAndNormalize(benchmark::State& state) {
  const Federation f = make_federation(static_cast<std::uint32_t>(state.range(0)), 100);
  const GlobalMeans g = aggregate_means(f.shares);
  const CovarianceEstimate covs = estimate_covariances(f.shares, g, 1.0, InsufficientMeans::Shrinkage);
  const Matrix G = build_G_variant(g, covs, ScatterVariant::WithinOnly);
  const Matrix B = build_B(g);
  for (auto _ : state) benchmark::DoNotOptimize(solve_and_normalize(G, B));
}
BENCHMARK(BM_SolveAndNormalize)->Arg(32)->Arg(128)->Arg(512);

void BM_SecureAggregation(benchmark::State& state) {
  const Federation f = make_federation(16, static_cast<std::uint32_t>(state.range(0)));
  const SecureConfig cfg{99, 1.0};
  for (auto _ : state) {
    const PhaseOneResult p1 = secure_phase1(f.shares, cfg);
    benchmark::DoNotOptimize(secure_phase2(f.shares, p1.broadcast, 1.0, cfg, InsufficientMeans::Shrinkage));
  }
}
BENCHMARK(BM_SecureAggregation)->Arg(5)->Arg(20)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
