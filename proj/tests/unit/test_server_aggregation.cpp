#include "fedcof/client_stats.hpp"
#include "fedcof/error.hpp"
#include "fedcof/server_aggregation.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>

using namespace fedcof;

namespace {

ClientShare share1(ClientId id, std::vector<std::pair<double, double>> entries, ClassIndex label = 0,
                   std::uint32_t classes = 1) {
  ClientShare s{id, 1, classes, {}};
  for (auto [n, m] : entries) s.entries.push_back({label, n, Vector::Constant(1, m)});
  return s;
}

std::vector<ClientShare> shares_of(const FeatureDataset& d, const ClientAssignment& a) {
  std::vector<ClientShare> out;
  for (ClientId k = 0; k < a.num_clients; ++k) out.push_back(compute_class_means(d, a, k));
  return out;
}

std::vector<ClientOracleStats> oracle_stats_of(const FeatureDataset& d, const ClientAssignment& a) {
  std::vector<ClientOracleStats> out;
  for (ClientId k = 0; k < a.num_clients; ++k) out.push_back(compute_class_covariances(d, a, k));
  return out;
}

std::string code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST_CASE("global means of small federations") {
  const std::vector<ClientShare> one{share1(0, {{2, 5.0}})};
  const GlobalMeans g1 = aggregate_means(one);
  CHECK(g1.classes[0]->mean(0) == 5.0);
  CHECK(g1.classes[0]->count == 2.0);

  const std::vector<ClientShare> two{share1(0, {{1, 0.0}}), share1(1, {{3, 4.0}})};
  const GlobalMeans g = aggregate_means(two);
  CHECK(g.classes[0]->mean(0) == 3.0);
  CHECK(g.total_count == 4.0);
  CHECK(g.global_mean(0) == 3.0);

  CHECK(code_of([] { aggregate_means(std::vector<ClientShare>{}); }) == "empty_federation");
  CHECK(code_of([] { aggregate_means(std::vector<ClientShare>{ClientShare{0, 1, 1, {}}}); }) == "empty_federation");
}

TEST_CASE("aggregated means equal centralized class means for any partition") {
  const FeatureDataset d = oracle::random_dataset(12, 500, 8, 6);
  const auto want = oracle::class_moments(d, oracle::all_indices(d));
  for (std::uint32_t k : {1u, 3u, 40u}) {
    const GlobalMeans g = aggregate_means(shares_of(d, oracle::random_assignment(k, 500, k)));
    double n = 0.0;
    Vector mix = Vector::Zero(8);
    for (const auto& [c, m] : want) {
      CHECK(oracle::rel_diff(g.classes[c]->mean, m.mean) < 1e-10);
      CHECK(g.classes[c]->count == m.count);
      n += g.classes[c]->count;
      mix += g.classes[c]->count * g.classes[c]->mean;
    }
    CHECK(g.total_count == n);
    CHECK((g.global_mean - mix / n).norm() <= 1e-10 * g.global_mean.norm());
  }
}

TEST_CASE("absent classes are reported") {
  const std::vector<ClientShare> s{share1(0, {{2, 1.0}}, 1, 3)};
  const GlobalMeans g = aggregate_means(s);
  CHECK(g.absent_classes() == std::vector<ClassIndex>{0, 2});
}

TEST_CASE("reduction order does not depend on share order") {
  const FeatureDataset d = oracle::random_dataset(2, 300, 5, 3);
  auto shares = shares_of(d, oracle::random_assignment(2, 300, 12));
  const GlobalMeans a = aggregate_means(shares);
  std::reverse(shares.begin(), shares.end());
  const GlobalMeans b = aggregate_means(shares);
  const CovarianceEstimate ca = estimate_covariances(shares, a, 0.5);
  std::rotate(shares.begin(), shares.begin() + 5, shares.end());
  const CovarianceEstimate cb = estimate_covariances(shares, b, 0.5);
  for (ClassIndex c = 0; c < 3; ++c) {
    CHECK(a.classes[c]->mean == b.classes[c]->mean);
    CHECK(ca.classes[c]->covariance == cb.classes[c]->covariance);
  }
}

TEST_CASE("estimator on hand-sized inputs") {
  const std::vector<ClientShare> same{share1(0, {{3, 2.0}}), share1(1, {{5, 2.0}}), share1(2, {{1, 2.0}})};
  const GlobalMeans g = aggregate_means(same);
  const CovarianceEstimate e = estimate_covariances(same, g, 0.7);
  CHECK(e.classes[0]->covariance(0, 0) == 0.7);
  CHECK(e.classes[0]->mean_count == 3);

  const std::vector<ClientShare> two{share1(0, {{2, 1.0}}), share1(1, {{2, -1.0}})};
  const GlobalMeans g2 = aggregate_means(two);
  CHECK(g2.classes[0]->mean(0) == 0.0);
  CHECK(estimate_covariances(two, g2, 0.0).classes[0]->covariance(0, 0) == 4.0);
}

TEST_CASE("estimator matches a brute-force evaluation and is PSD") {
  const FeatureDataset d = oracle::random_dataset(31, 400, 6, 3);
  ClientAssignment a = oracle::random_assignment(31, 400, 25);
  const auto shares = shares_of(d, a);
  const GlobalMeans g = aggregate_means(shares);
  const double gamma = 0.25;
  const CovarianceEstimate e = estimate_covariances(shares, g, gamma);
  for (ClassIndex c = 0; c < 3; ++c) {
    std::vector<std::pair<double, oracle::Vec>> means;
    for (const auto& s : shares)
      for (const auto& m : s.entries)
        if (m.label == c) means.push_back({m.count, oracle::Vec(m.mean.data(), m.mean.data() + m.mean.size())});
    const Matrix& cov = e.classes[c]->covariance;
    CHECK(e.classes[c]->mean_count == means.size());
    CHECK(oracle::rel_diff(cov, oracle::estimator(means, gamma)) < 1e-12);
    CHECK(cov == cov.transpose());
    const Matrix raw = cov - gamma * Matrix::Identity(6, 6);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(raw);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * std::max(1.0, eig.eigenvalues().maxCoeff()));
  }
}

TEST_CASE("too few means is an error unless shrinkage fallback is requested") {
  const std::vector<ClientShare> s{share1(0, {{4, 1.0}})};
  const GlobalMeans g = aggregate_means(s);
  CHECK(code_of([&] { estimate_covariances(s, g, 1.0); }) == "insufficient_means");
  const CovarianceEstimate e = estimate_covariances(s, g, 1.5, InsufficientMeans::Shrinkage);
  CHECK(e.classes[0]->fallback);
  CHECK(e.classes[0]->covariance(0, 0) == 1.5);
  CHECK(code_of([&] { estimate_covariances(s, g, -1.0); }) == "invalid_argument");
}

TEST_CASE("estimator scales quadratically with the features") {
  const FeatureDataset d = oracle::random_dataset(13, 200, 4, 2);
  FeatureDataset scaled = d;
  scaled.features *= 4.0;  // power of two keeps the scaling exact
  const ClientAssignment a = oracle::random_assignment(13, 200, 8);
  const auto s1 = shares_of(d, a);
  const auto s2 = shares_of(scaled, a);
  const CovarianceEstimate e1 = estimate_covariances(s1, aggregate_means(s1), 0.0);
  const CovarianceEstimate e2 = estimate_covariances(s2, aggregate_means(s2), 0.0);
  for (ClassIndex c = 0; c < 2; ++c) CHECK(e2.classes[c]->covariance == 16.0 * e1.classes[c]->covariance);
}

TEST_CASE("oracle pooling equals centralized covariances") {
  SUBCASE("hand-sized") {
    FeatureDataset d;
    d.dim = 1;
    d.num_classes = 1;
    d.labels = {0, 0};
    d.features.resize(2, 1);
    d.features << 0.0, 2.0;
    ClientAssignment a;
    a.num_clients = 2;
    a.owner = {0, 1};
    CHECK(aggregate_oracle_covariances(oracle_stats_of(d, a)).classes[0]->covariance(0, 0) == doctest::Approx(2.0));
  }
  SUBCASE("single client holds the class") {
    const FeatureDataset d = oracle::random_dataset(4, 60, 3, 1);
    ClientAssignment a;
    a.num_clients = 1;
    a.owner.assign(60, 0);
    const auto stats = oracle_stats_of(d, a);
    const Matrix pooled = aggregate_oracle_covariances(stats, 0.5).classes[0]->covariance;
    CHECK((pooled - stats[0].classes[0].covariance - 0.5 * Matrix::Identity(3, 3)).norm() < 1e-12 * pooled.norm());
  }
  SUBCASE("random partitions") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const FeatureDataset d = oracle::random_dataset(seed, 350, 1 + seed % 9, 1 + seed % 5);
      const ClientAssignment a = oracle::random_assignment(seed, 350, 1 + static_cast<std::uint32_t>(seed * 3));
      const CovarianceEstimate e = aggregate_oracle_covariances(oracle_stats_of(d, a));
      for (const auto& [c, m] : oracle::class_moments(d, oracle::all_indices(d))) {
        CHECK(oracle::rel_diff(e.classes[c]->covariance, m.cov) <= 1e-10);
      }
    }
  }
  SUBCASE("class with one sample overall") {
    FeatureDataset d;
    d.dim = 1;
    d.num_classes = 1;
    d.labels = {0};
    d.features = Matrix::Ones(1, 1);
    ClientAssignment a;
    a.num_clients = 1;
    a.owner = {0};
    CHECK(code_of([&] { aggregate_oracle_covariances(oracle_stats_of(d, a)); }) == "insufficient_samples");
  }
}

TEST_CASE("Gram aggregation") {
  const FeatureDataset d = oracle::random_dataset(17, 180, 6, 3);
  const ClientAssignment a = oracle::random_assignment(17, 180, 3);
  std::vector<ClientSecondOrder> stats;
  for (ClientId k = 0; k < 3; ++k) stats.push_back(compute_gram_stats(d, a, k));
  const GramAggregate agg = aggregate_gram(stats);
  CHECK(oracle::rel_diff(agg.gram, oracle::gram(d, oracle::all_indices(d))) < 1e-12);
  CHECK(oracle::rel_diff(agg.label_sums, oracle::label_sums(d, oracle::all_indices(d))) < 1e-12);

  const GramAggregate single = aggregate_gram(std::vector<ClientSecondOrder>{stats[1]});
  CHECK(single.gram == stats[1].gram);

  const std::vector<ClientSecondOrder> empty{compute_gram_stats(d, std::vector<std::size_t>{}, 0),
                                             compute_gram_stats(d, std::vector<std::size_t>{}, 1)};
  CHECK(aggregate_gram(empty).gram.isZero(0.0));

  ClientSecondOrder wrong = stats[0];
  wrong.gram = Matrix::Zero(2, 2);
  CHECK(code_of([&] { aggregate_gram(std::vector<ClientSecondOrder>{stats[0], wrong}); }) == "dimension_mismatch");
  CHECK_THROWS_AS(aggregate_gram(std::vector<ClientSecondOrder>{}), Error);
}

TEST_CASE("share-once accumulation") {
  const FeatureDataset d = oracle::random_dataset(5, 240, 4, 3);
  const auto shares = shares_of(d, oracle::random_assignment(5, 240, 10));

  ServerAccumulator acc;
  RoundSubmission r1 = accumulate_round(acc, std::vector<ClientShare>{shares[5], shares[2]});
  CHECK(r1.accepted == std::vector<ClientId>{5, 2});
  RoundSubmission r2 = accumulate_round(acc, std::vector<ClientShare>{shares[5]});
  CHECK(r2.ignored == std::vector<ClientId>{5});
  CHECK(acc.size() == 2);
  CHECK(acc.round() == 2);
  CHECK(acc.warnings().size() == 1);

  for (std::size_t k = 0; k < shares.size(); k += 3) {
    std::vector<ClientShare> batch(shares.begin() + k, shares.begin() + std::min(k + 3, shares.size()));
    accumulate_round(acc, batch);
  }
  const GlobalMeans multi = aggregate_means(acc.payloads());
  const GlobalMeans single = aggregate_means(shares);
  for (ClassIndex c = 0; c < 3; ++c) {
    CHECK(multi.classes[c]->mean == single.classes[c]->mean);
    CHECK(multi.classes[c]->count == single.classes[c]->count);
  }
  CHECK(multi.global_mean == single.global_mean);
}
