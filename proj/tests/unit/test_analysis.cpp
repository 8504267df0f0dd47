#include "fedcof/analysis.hpp"
#include "fedcof/error.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <sstream>

using namespace fedcof;

namespace {

std::string code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

constexpr std::uint64_t kShares[] = {2870, 3470, 2353, 2634, 54590};

std::string mb(CommMethod m, std::uint64_t shares, std::uint32_t clients, std::uint32_t dim) {
  return format_megabytes(uplink_bytes(m, {shares, clients, dim, 0}));
}

SyntheticSpec diagonal_spec(std::uint32_t dim, std::uint32_t classes, std::size_t per_class,
                            const std::vector<double>& diag, std::uint64_t seed) {
  SyntheticSpec s;
  s.num_classes = classes;
  s.dim = dim;
  s.samples_per_class.assign(classes, per_class);
  s.class_means = Matrix::Zero(classes, dim);
  for (std::uint32_t c = 0; c < classes; ++c) s.class_means(c, c % dim) = 3.0 * (c + 1);
  Matrix cov = Matrix::Zero(dim, dim);
  for (std::uint32_t i = 0; i < dim; ++i) cov(i, i) = diag[i];
  s.class_covariances = {cov};
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("uplink bytes use exact integer formulas") {
  CHECK(uplink_bytes(CommMethod::FedCOF, {2870, 100, 512, 100}) == 5877760);
  CHECK(uplink_bytes(CommMethod::FedNCM, {2870, 100, 512, 100}) == 5877760);
  CHECK(uplink_bytes(CommMethod::Oracle, {2870, 100, 512, 100}) == 3015290880ULL);
  CHECK(uplink_bytes(CommMethod::FedNCM, {54590, 9275, 512, 1203}) == 111800320);
  CHECK(uplink_bytes(CommMethod::Fed3R, {2870, 100, 512, 100}) == 5877760 + 100ULL * 512 * 512 * 4);
  CHECK(uplink_bytes(CommMethod::SecureFedCOF, {0, 3, 4, 2}) == 3ULL * (2 * 6 + 16) * 4);
}

TEST_CASE("decimal megabytes round half up") {
  CHECK(format_megabytes(5877760) == "5.9");
  CHECK(format_megabytes(3015290880ULL) == "3015.3");
  CHECK(format_megabytes(50000) == "0.1");
  CHECK(format_megabytes(49999) == "0.0");
  CHECK(format_megabytes(1000000) == "1.0");
  CHECK(format_megabytes(0) == "0.0");
}

TEST_CASE("reported first-order costs for the 512-dimensional backbone") {
  const char* want[] = {"5.9", "7.1", "4.8", "5.4", "111.8"};
  for (int i = 0; i < 5; ++i) {
    CHECK(mb(CommMethod::FedNCM, kShares[i], 100, 512) == want[i]);
    CHECK(mb(CommMethod::FedCOF, kShares[i], 100, 512) == want[i]);
  }
}

TEST_CASE("reported full-covariance costs") {
  CHECK(mb(CommMethod::Oracle, 2870, 100, 512) == "3015.3");
  CHECK(mb(CommMethod::Oracle, 3470, 100, 512) == "3645.7");
  CHECK(mb(CommMethod::Oracle, 2353, 100, 512) == "2472.1");
  CHECK(mb(CommMethod::Oracle, 2634, 100, 512) == "2767.3");
  CHECK(mb(CommMethod::Oracle, 2870, 100, 1280) == "18823.5");
  CHECK(mb(CommMethod::Oracle, 2870, 100, 768) == "6780.0");
}

TEST_CASE("other backbones with the same share counts") {
  const char* d1280[] = {"14.7", "17.8", "12.0", "13.5", "279.5"};
  const char* d768[] = {"8.8", "10.7", "7.2", "8.1", "167.7"};
  for (int i = 0; i < 5; ++i) {
    CHECK(mb(CommMethod::FedCOF, kShares[i], 100, 1280) == d1280[i]);
    CHECK(mb(CommMethod::FedCOF, kShares[i], 100, 768) == d768[i]);
  }
}

TEST_CASE("ridge cost is close to the tabulated value") {
  const double bytes = static_cast<double>(uplink_bytes(CommMethod::Fed3R, {2870, 100, 512, 100}));
  CHECK(format_megabytes(static_cast<std::uint64_t>(bytes)) == "110.7");
  CHECK(std::abs(bytes / 1e6 - 110.2) / 110.2 < 0.01);
}

TEST_CASE("ledger from per-client class counts") {
  const std::vector<std::uint32_t> classes{3, 1, 4, 1, 5};
  const CommLedger l = comm_cost({CommMethod::FedCOF, CommMethod::Fed3R, CommMethod::Oracle, CommMethod::SecureFedCOF},
                                 classes, 8, 6);
  CHECK(l.inputs.total_shares == 14);
  CHECK(l.inputs.num_clients == 5);
  for (const auto& e : l.entries) {
    REQUIRE(e.per_client.size() == 5);
    std::uint64_t sum = 0;
    for (auto b : e.per_client) sum += b;
    CHECK(sum == e.total_bytes);
    CHECK(e.total_bytes == uplink_bytes(e.method, l.inputs));
  }
  CHECK(l.entries[0].per_client[2] == 4 * 8 * 4);
  CHECK(l.entries[1].per_client[1] == (8 + 64) * 4);

  std::ostringstream os;
  write_comm_table(os, l);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  CHECK(header == "method,M,K,d,C,bytes,MB");
  std::string line;
  std::getline(is, line);
  CHECK(line == "fedcof,14,5,8,6,448,0.0");
}

TEST_CASE("comm method names") {
  for (auto m : {CommMethod::FedNCM, CommMethod::FedCOF, CommMethod::Fed3R, CommMethod::Oracle, CommMethod::SecureFedCOF})
    CHECK(parse_comm_method(comm_method_name(m)) == m);
  CHECK(comm_method_of(Method::FedCOFOracle) == CommMethod::Oracle);
  CHECK(comm_method_of(Method::FedCOFBetweenOnly) == CommMethod::FedCOF);
  CHECK(code_of([] { parse_comm_method("carrier-pigeon"); }) != "");
}

TEST_CASE("bias formula") {
  SUBCASE("identical populations give the exact zero matrix") {
    Vector mu(2);
    mu << 0.3, -1.2;
    Matrix sigma(2, 2);
    sigma << 2.0, 0.4, 0.4, 1.0;
    std::vector<ClientPopulation> clients(5, ClientPopulation{40, mu, sigma});
    CHECK(bias_formula(clients, mu, sigma).isZero(0.0));
  }
  SUBCASE("hand case") {
    Matrix sigma = Matrix::Constant(1, 1, 0.7);
    std::vector<ClientPopulation> clients{{1, Vector::Constant(1, 1.0), sigma}, {1, Vector::Constant(1, -1.0), sigma}};
    CHECK(bias_formula(clients, Vector::Zero(1), sigma)(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  }
  SUBCASE("inconsistent global mean") {
    Matrix sigma = Matrix::Identity(1, 1);
    std::vector<ClientPopulation> clients{{2, Vector::Constant(1, 1.0), sigma}, {2, Vector::Constant(1, 0.0), sigma}};
    CHECK(code_of([&] { bias_formula(clients, Vector::Constant(1, 0.4), sigma); }) == "inconsistent_population");
  }
  SUBCASE("exact bias keeps the finite-sample factor") {
    Matrix sigma = Matrix::Identity(1, 1);
    std::vector<ClientPopulation> clients{{3, Vector::Zero(1), sigma}, {1, Vector::Zero(1), sigma}};
    // 1/(K-1) sum (1 - n_k/N) Sigma - Sigma = (1 - 3/4 + 1 - 1/4) - 1 = 0
    CHECK(std::abs(exact_bias(clients, Vector::Zero(1), sigma)(0, 0)) < 1e-15);
  }
  SUBCASE("mixture moments") {
    std::vector<ClientPopulation> clients{{1, Vector::Constant(1, 1.0), Matrix::Identity(1, 1)},
                                          {3, Vector::Constant(1, -1.0), Matrix::Identity(1, 1)}};
    const auto [mean, cov] = mixture_moments(clients);
    CHECK(mean(0) == doctest::Approx(-0.5));
    CHECK(cov(0, 0) == doctest::Approx(1.0 + 0.25 * 2.25 + 0.75 * 0.25));
  }
}

TEST_CASE("bias of heterogeneous clients matches a Monte-Carlo estimate") {
  BiasStudyConfig cfg;
  cfg.trials = 20000;
  cfg.seed = 3;
  Vector a(2), b(2);
  a << 1.0, 0.0;
  b << -1.0, 0.0;
  Matrix cov_b = Matrix::Zero(2, 2);
  cov_b.diagonal() << 2.0, 0.5;
  for (int k = 0; k < 4; ++k) cfg.clients.push_back({25, k < 2 ? a : b, k < 2 ? Matrix::Identity(2, 2) : cov_b});
  const BiasStudyResult r = bias_study(cfg);
  CHECK(r.relative_discrepancy <= 0.10);
  CHECK((r.empirical - r.exact).norm() / r.exact.norm() <= 0.05);
  CHECK(r.analytic_norm > 1.0);
}

TEST_CASE("zero-variance populations give exactly zero estimates") {
  UnbiasednessConfig cfg;
  cfg.spec = diagonal_spec(3, 2, 100, {0.0, 0.0, 0.0}, 1);
  cfg.num_clients = 10;
  cfg.alpha = 1.0;
  cfg.trials = 20;
  cfg.checkpoints = {10, 20};
  const UnbiasednessResult r = unbiasedness_mc(cfg);
  for (const auto& avg : r.average) CHECK(avg.isZero(0.0));
}

TEST_CASE("the mean-based estimator is unbiased under iid sampling") {
  UnbiasednessConfig big;
  big.spec = diagonal_spec(4, 2, 1000, {1, 2, 3, 4}, 5);
  big.num_clients = 200;
  big.alpha = 100.0;
  big.trials = 1000;
  big.checkpoints = {100, 1000};
  big.seed = 5;
  const UnbiasednessResult r = unbiasedness_mc(big);
  REQUIRE(r.curve.size() == 2);
  CHECK(r.curve.back().relative_error <= 0.05);
  CHECK(r.curve.back().relative_error < r.curve.front().relative_error);

  UnbiasednessConfig small = big;
  small.num_clients = 2;
  small.checkpoints = {1000};
  const UnbiasednessResult s = unbiasedness_mc(small);
  CHECK(s.curve.back().relative_error > r.curve.back().relative_error);
}

TEST_CASE("Monte-Carlo studies are deterministic in the seed") {
  UnbiasednessConfig cfg;
  cfg.spec = diagonal_spec(3, 2, 200, {1, 1, 2}, 2);
  cfg.num_clients = 20;
  cfg.alpha = 0.5;
  cfg.trials = 30;
  cfg.checkpoints = {10, 30};
  cfg.seed = 9;
  const auto a = unbiasedness_mc(cfg);
  const auto b = unbiasedness_mc(cfg);
  CHECK(a.curve.back().relative_error == b.curve.back().relative_error);
  CHECK(a.resampled == b.resampled);
  cfg.seed = 10;
  CHECK(unbiasedness_mc(cfg).curve.back().relative_error != a.curve.back().relative_error);
}

TEST_CASE("estimator error over means and shrinkage") {
  MseConfig cfg;
  cfg.spec = anisotropic_benchmark(5, 8, 300, 10.0, 2.0, 4);
  cfg.num_clients = 10;
  cfg.alpha = 0.1;
  cfg.means_per_client = {1, 2, 4};
  cfg.gammas = {0.0, 1.0, 2.0};
  cfg.trials = 60;
  cfg.seed = 4;
  const MseResult r = estimator_mse(cfg);
  REQUIRE(r.cells.size() == 9);
  CHECK(r.at(2, 0.0).mse < r.at(1, 0.0).mse);
  CHECK(r.at(4, 0.0).mse < r.at(2, 0.0).mse);
  CHECK(r.at(4, 0.0).mean_means_per_class > r.at(1, 0.0).mean_means_per_class);
  // ||E + g I||^2 = ||E||^2 + 2 g tr(E) + g^2 d, so the second difference in g is 2 d exactly.
  for (std::uint32_t m : {1u, 2u, 4u}) {
    const double second = r.at(m, 2.0).mse - 2.0 * r.at(m, 1.0).mse + r.at(m, 0.0).mse;
    CHECK(second == doctest::Approx(2.0 * 8).epsilon(1e-8));
  }
  CHECK_THROWS_AS(r.at(3, 0.0), Error);

  std::ostringstream os;
  write_mse_table(os, r);
  const std::string table = os.str();
  CHECK(std::count(table.begin(), table.end(), '\n') == 10);
}

TEST_CASE("vector angles") {
  Vector a(2), b(2);
  a << 1, 0;
  b << 0, 3;
  CHECK(vector_angle(a, b) == doctest::Approx(std::acos(0.0)));
  CHECK(vector_angle(a, 5.0 * a) == 0.0);
  CHECK(vector_angle(Vector::Zero(2), Vector::Zero(2)) == 0.0);
  Vector c(2);
  c << 1, 1e-9;
  CHECK(vector_angle(a, c) == doctest::Approx(1e-9).epsilon(1e-6));
}

TEST_CASE("scatter identity and secure studies") {
  const IdentityStudy id = scatter_identity_study(20, 1);
  CHECK(id.instances == 20);
  CHECK(id.max_residual <= 1e-10);
  const SecureStudy s = secure_aggregation_study(6, 2, {5, 20}, 8);
  CHECK(s.instances == 6);
  CHECK(s.max_angle <= 1e-5);
  CHECK(s.max_mask_residual <= 1e-6);
  const RandomInstance inst = random_instance(7, 32, 10, 500, 20);
  CHECK(inst.data.dim <= 32);
  CHECK(inst.data.num_classes <= 10);
  CHECK(inst.data.size() <= 500);
  CHECK(inst.assignment.num_clients <= 20);
}
