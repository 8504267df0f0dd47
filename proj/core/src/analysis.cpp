#include "fedcof/analysis.hpp"

#include "fedcof/client_stats.hpp"
#include "fedcof/error.hpp"
#include "fedcof/partitioner.hpp"
#include "fedcof/privacy.hpp"
#include "fedcof/rng.hpp"
#include "fedcof/server_aggregation.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

namespace fedcof {
namespace {

constexpr std::uint64_t kValueBytes = kBytesPerValue;

std::vector<ClientShare> mean_shares(const FeatureDataset& data, const ClientAssignment& assignment,
                                     std::uint32_t means_per_client, std::uint64_t seed) {
  const auto members = assignment.members();
  std::vector<ClientShare> shares;
  shares.reserve(members.size());
  for (ClientId k = 0; k < members.size(); ++k) {
    if (means_per_client == 1) {
      shares.push_back(compute_class_means(data, members[k], k));
    } else {
      shares.push_back(sample_multi_means(data, members[k], k, means_per_client, seed));
    }
  }
  return shares;
}

bool has_insufficient_class(std::span<const ClientShare> shares, const GlobalMeans& g) {
  std::vector<std::size_t> means(g.num_classes, 0);
  for (const auto& s : shares) {
    for (const auto& e : s.entries) ++means[e.label];
  }
  for (ClassIndex c = 0; c < g.num_classes; ++c) {
    if (g.has(c) && means[c] < 2) return true;
  }
  return false;
}

double relative_frobenius(const Matrix& estimate, const Matrix& truth) {
  const double denom = truth.norm();
  const double diff = (estimate - truth).norm();
  return denom > 0.0 ? diff / denom : diff;
}

void check_populations(const std::vector<ClientPopulation>& clients) {
  if (clients.size() < 2) fail("invalid_argument", "bias analysis needs at least 2 clients");
  const auto d = clients.front().mean.size();
  for (const auto& p : clients) {
    if (p.count == 0) fail("invalid_argument", "client population with zero samples");
    if (p.mean.size() != d || p.covariance.rows() != d || p.covariance.cols() != d) {
      fail("dimension_mismatch", "client populations disagree on dimension");
    }
  }
}

void check_global_mean(const std::vector<ClientPopulation>& clients, const Vector& mu) {
  Vector weighted = Vector::Zero(mu.size());
  double total = 0.0;
  for (const auto& p : clients) {
    weighted += static_cast<double>(p.count) * p.mean;
    total += static_cast<double>(p.count);
  }
  weighted /= total;
  const double scale = std::max({1.0, mu.norm(), weighted.norm()});
  if ((weighted - mu).norm() > 1e-8 * scale) {
    fail("inconsistent_population", "global mean does not equal the count-weighted client means");
  }
}

}  // namespace

std::string_view comm_method_name(CommMethod m) {
  switch (m) {
    case CommMethod::FedNCM: return "fedncm";
    case CommMethod::FedCOF: return "fedcof";
    case CommMethod::Fed3R: return "fed3r";
    case CommMethod::Oracle: return "fedcof-oracle";
    case CommMethod::SecureFedCOF: return "fedcof-secure";
  }
  return "unknown";
}

CommMethod parse_comm_method(std::string_view name) {
  for (CommMethod m : {CommMethod::FedNCM, CommMethod::FedCOF, CommMethod::Fed3R, CommMethod::Oracle,
                       CommMethod::SecureFedCOF}) {
    if (comm_method_name(m) == name) return m;
  }
  fail("unknown_method", "unknown method '" + std::string(name) + "'");
}

CommMethod comm_method_of(Method m) {
  if (m == Method::FedNCM) return CommMethod::FedNCM;
  if (m == Method::Fed3R) return CommMethod::Fed3R;
  if (uses_oracle_covariances(m)) return CommMethod::Oracle;
  return CommMethod::FedCOF;
}

std::uint64_t uplink_bytes(CommMethod method, const CommInputs& in) {
  const std::uint64_t m = in.total_shares;
  const std::uint64_t k = in.num_clients;
  const std::uint64_t d = in.dim;
  switch (method) {
    case CommMethod::FedNCM:
    case CommMethod::FedCOF: return m * d * kValueBytes;
    case CommMethod::Fed3R: return (m * d + k * d * d) * kValueBytes;
    case CommMethod::Oracle: return m * (d + d * d) * kValueBytes;
    case CommMethod::SecureFedCOF: return k * secure_uplink_values(in.dim, in.num_classes) * kValueBytes;
  }
  return 0;
}

std::uint64_t client_uplink_bytes(CommMethod method, std::uint32_t classes_on_client, std::uint32_t dim,
                                  std::uint32_t num_classes) {
  return uplink_bytes(method, CommInputs{classes_on_client, 1, dim, num_classes});
}

std::string format_megabytes(std::uint64_t bytes) {
  const std::uint64_t tenths = (bytes + 50'000) / 100'000;
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

CommLedger comm_cost(const std::vector<CommMethod>& methods, const CommInputs& inputs) {
  CommLedger ledger{inputs, {}};
  for (CommMethod m : methods) ledger.entries.push_back({m, uplink_bytes(m, inputs), {}});
  return ledger;
}

CommLedger comm_cost(const std::vector<CommMethod>& methods, const std::vector<std::uint32_t>& classes_per_client,
                     std::uint32_t dim, std::uint32_t num_classes) {
  CommInputs inputs;
  inputs.num_clients = static_cast<std::uint32_t>(classes_per_client.size());
  inputs.dim = dim;
  inputs.num_classes = num_classes;
  for (auto ck : classes_per_client) inputs.total_shares += ck;
  CommLedger ledger = comm_cost(methods, inputs);
  for (auto& entry : ledger.entries) {
    std::uint64_t sum = 0;
    for (auto ck : classes_per_client) {
      entry.per_client.push_back(client_uplink_bytes(entry.method, ck, dim, num_classes));
      sum += entry.per_client.back();
    }
    if (sum != entry.total_bytes) {
      fail("ledger_mismatch", std::string(comm_method_name(entry.method)) + ": per-client bytes do not sum to the total");
    }
  }
  return ledger;
}

void write_comm_table(std::ostream& os, const CommLedger& ledger) {
  os << "method,M,K,d,C,bytes,MB\n";
  for (const auto& e : ledger.entries) {
    os << comm_method_name(e.method) << ',' << ledger.inputs.total_shares << ',' << ledger.inputs.num_clients << ','
       << ledger.inputs.dim << ',' << ledger.inputs.num_classes << ',' << e.total_bytes << ','
       << format_megabytes(e.total_bytes) << '\n';
  }
}

Matrix bias_formula(const std::vector<ClientPopulation>& clients, const Vector& mu, const Matrix& sigma) {
  check_populations(clients);
  check_global_mean(clients, mu);
  const double scale = 1.0 / static_cast<double>(clients.size() - 1);
  Matrix bias = Matrix::Zero(sigma.rows(), sigma.cols());
  for (const auto& p : clients) {
    const Vector diff = p.mean - mu;
    bias += p.covariance - sigma;
    bias.noalias() += static_cast<double>(p.count) * diff * diff.transpose();
  }
  return scale * bias;
}

Matrix exact_bias(const std::vector<ClientPopulation>& clients, const Vector& mu, const Matrix& sigma) {
  check_populations(clients);
  check_global_mean(clients, mu);
  double total = 0.0;
  for (const auto& p : clients) total += static_cast<double>(p.count);
  // sum_k (1 - n_k/N) = K - 1 exactly, so Sigma cancels term by term.
  Matrix bias = Matrix::Zero(sigma.rows(), sigma.cols());
  for (const auto& p : clients) {
    const Vector diff = p.mean - mu;
    bias += (1.0 - static_cast<double>(p.count) / total) * (p.covariance - sigma);
    bias.noalias() += static_cast<double>(p.count) * diff * diff.transpose();
  }
  return bias / static_cast<double>(clients.size() - 1);
}

std::pair<Vector, Matrix> mixture_moments(const std::vector<ClientPopulation>& clients) {
  check_populations(clients);
  const auto d = clients.front().mean.size();
  double total = 0.0;
  Vector mu = Vector::Zero(d);
  for (const auto& p : clients) {
    total += static_cast<double>(p.count);
    mu += static_cast<double>(p.count) * p.mean;
  }
  mu /= total;
  Matrix sigma = Matrix::Zero(d, d);
  for (const auto& p : clients) {
    const Vector diff = p.mean - mu;
    sigma += static_cast<double>(p.count) / total * (p.covariance + diff * diff.transpose());
  }
  return {mu, sigma};
}

BiasStudyResult bias_study(const BiasStudyConfig& config) {
  check_populations(config.clients);
  if (config.trials == 0) fail("invalid_argument", "bias study needs at least one trial");
  const auto [mu, sigma] = mixture_moments(config.clients);
  const auto k = static_cast<std::uint32_t>(config.clients.size());
  const auto d = static_cast<std::uint32_t>(mu.size());

  // Each client population is drawn as one "class" of a synthetic spec.
  SyntheticSpec spec;
  spec.num_classes = k;
  spec.dim = d;
  spec.class_means.resize(k, d);
  for (std::uint32_t i = 0; i < k; ++i) {
    spec.samples_per_class.push_back(config.clients[i].count);
    spec.class_means.row(i) = config.clients[i].mean.transpose();
    spec.class_covariances.push_back(config.clients[i].covariance);
  }

  Matrix sum = Matrix::Zero(d, d);
  for (std::size_t t = 0; t < config.trials; ++t) {
    spec.seed = derive_seed(config.seed, {stream::kTrial, t});
    const FeatureDataset data = generate_synthetic(spec);
    std::vector<ClientShare> shares(k);
    std::size_t row = 0;
    for (std::uint32_t i = 0; i < k; ++i) {
      const std::size_t n = config.clients[i].count;
      const Vector mean = data.features.middleRows(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(n))
                              .colwise()
                              .mean()
                              .transpose();
      shares[i] = ClientShare{i, d, 1, {MeanEntry{0, static_cast<double>(n), mean}}};
      row += n;
    }
    const GlobalMeans g = aggregate_means(shares);
    const CovarianceEstimate est = estimate_covariances(shares, g, 0.0);
    sum += est.classes[0]->covariance;
  }

  BiasStudyResult r;
  r.analytic = bias_formula(config.clients, mu, sigma);
  r.exact = exact_bias(config.clients, mu, sigma);
  r.empirical = sum / static_cast<double>(config.trials) - sigma;
  r.analytic_norm = r.analytic.norm();
  r.relative_discrepancy = relative_frobenius(r.empirical, r.analytic);
  return r;
}

UnbiasednessResult unbiasedness_mc(const UnbiasednessConfig& config) {
  config.spec.validate();
  if (config.trials < 10) fail("invalid_argument", "unbiasedness study needs at least 10 trials");
  const std::uint32_t classes = config.spec.num_classes;
  const std::uint32_t d = config.spec.dim;

  std::vector<std::size_t> checkpoints;
  for (auto c : config.checkpoints) {
    if (c >= 1 && c <= config.trials) checkpoints.push_back(c);
  }
  checkpoints.push_back(config.trials);
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());

  UnbiasednessResult result;
  std::vector<Matrix> sum(classes, Matrix::Zero(d, d));
  std::size_t next = 0;
  double means_total = 0.0;
  for (std::size_t t = 0; t < config.trials; ++t) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      SyntheticSpec spec = config.spec;
      spec.seed = derive_seed(config.seed, {stream::kTrial, t, attempt, 0});
      const FeatureDataset data = generate_synthetic(spec);
      const ClientAssignment assignment =
          dirichlet_partition(data, config.num_clients, config.alpha, derive_seed(config.seed, {stream::kTrial, t, attempt, 1}));
      const auto shares = mean_shares(data, assignment, 1, 0);
      const GlobalMeans g = aggregate_means(shares);
      if (has_insufficient_class(shares, g)) {
        ++result.resampled;
        continue;
      }
      const CovarianceEstimate est = estimate_covariances(shares, g, 0.0);
      for (ClassIndex c = 0; c < classes; ++c) {
        if (!est.has(c)) fail("insufficient_samples", "class " + std::to_string(c) + " has no samples");
        sum[c] += est.classes[c]->covariance;
        means_total += static_cast<double>(est.classes[c]->mean_count);
      }
      break;
    }
    if (next < checkpoints.size() && t + 1 == checkpoints[next]) {
      double worst = 0.0;
      for (ClassIndex c = 0; c < classes; ++c) {
        worst = std::max(worst, relative_frobenius(sum[c] / static_cast<double>(t + 1), config.spec.covariance(c)));
      }
      result.curve.push_back({t + 1, worst});
      ++next;
    }
  }
  result.mean_means_per_class = means_total / static_cast<double>(config.trials * classes);
  for (auto& s : sum) result.average.push_back(s / static_cast<double>(config.trials));
  return result;
}

const MseCell& MseResult::at(std::uint32_t m, double gamma) const {
  for (const auto& c : cells) {
    if (c.means_per_client == m && c.gamma == gamma) return c;
  }
  fail("invalid_argument", "no MSE cell for M=" + std::to_string(m) + ", gamma=" + std::to_string(gamma));
}

MseResult estimator_mse(const MseConfig& config) {
  config.spec.validate();
  if (config.means_per_client.empty() || config.gammas.empty() || config.trials == 0) {
    fail("invalid_argument", "MSE grid and trial count must be nonempty");
  }
  for (auto m : config.means_per_client) {
    if (m == 0) fail("invalid_argument", "means per client must be >= 1");
  }
  for (double g : config.gammas) {
    if (!(g >= 0.0)) fail("invalid_argument", "shrinkage must be >= 0");
  }
  const std::uint32_t classes = config.spec.num_classes;
  const std::uint32_t d = config.spec.dim;

  std::vector<Matrix> truth_inv(classes);
  for (ClassIndex c = 0; c < classes; ++c) truth_inv[c] = config.spec.covariance(c).inverse();

  const std::size_t n_m = config.means_per_client.size();
  const std::size_t n_g = config.gammas.size();
  MseResult result;
  for (auto m : config.means_per_client) {
    for (double g : config.gammas) result.cells.push_back({m, g, 0.0, 0.0, 0.0});
  }

  const Matrix eye = Matrix::Identity(d, d);
  for (std::size_t t = 0; t < config.trials; ++t) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      SyntheticSpec spec = config.spec;
      spec.seed = derive_seed(config.seed, {stream::kTrial, t, attempt, 0});
      const FeatureDataset data = generate_synthetic(spec);
      const ClientAssignment assignment =
          dirichlet_partition(data, config.num_clients, config.alpha, derive_seed(config.seed, {stream::kTrial, t, attempt, 1}));
      const std::uint64_t mm_seed = derive_seed(config.seed, {stream::kTrial, t, attempt, 2});

      std::vector<CovarianceEstimate> per_m;
      bool ok = true;
      for (auto m : config.means_per_client) {
        const auto shares = mean_shares(data, assignment, m, mm_seed);
        const GlobalMeans g = aggregate_means(shares);
        if (g.absent_classes().size() != 0 || has_insufficient_class(shares, g)) {
          ok = false;
          break;
        }
        per_m.push_back(estimate_covariances(shares, g, 0.0));
      }
      if (!ok) {
        ++result.resampled;
        continue;
      }

      for (std::size_t i = 0; i < n_m; ++i) {
        for (ClassIndex c = 0; c < classes; ++c) {
          const ClassCovariance& cc = *per_m[i].classes[c];
          const Matrix& truth = config.spec.covariance(c);
          Eigen::SelfAdjointEigenSolver<Matrix> eig(cc.covariance);
          const Vector& evals = eig.eigenvalues();
          const Matrix& evecs = eig.eigenvectors();
          for (std::size_t j = 0; j < n_g; ++j) {
            MseCell& cell = result.cells[i * n_g + j];
            const double gamma = config.gammas[j];
            const Matrix estimate = cc.covariance + gamma * eye;
            cell.mse += (estimate - truth).squaredNorm();
            cell.mean_means_per_class += static_cast<double>(cc.mean_count);
            const Vector shifted = evals.array() + gamma;
            if (shifted.minCoeff() <= 1e-12 * std::max(1.0, shifted.maxCoeff())) {
              cell.precision_error = std::numeric_limits<double>::infinity();
            } else {
              const Matrix inv = evecs * shifted.cwiseInverse().asDiagonal() * evecs.transpose();
              cell.precision_error += relative_frobenius(inv, truth_inv[c]);
            }
          }
        }
      }
      break;
    }
  }
  const double denom = static_cast<double>(config.trials * classes);
  for (auto& cell : result.cells) {
    cell.mse /= denom;
    cell.precision_error /= denom;
    cell.mean_means_per_class /= denom;
  }
  return result;
}

void write_mse_table(std::ostream& os, const MseResult& result) {
  os << "means_per_client,gamma,mse,precision_error,mean_means_per_class\n";
  for (const auto& c : result.cells) {
    os << c.means_per_client << ',' << c.gamma << ',' << c.mse << ',' << c.precision_error << ','
       << c.mean_means_per_class << '\n';
  }
}

void write_curve(std::ostream& os, const UnbiasednessResult& result) {
  os << "trials,relative_error\n";
  for (const auto& p : result.curve) os << p.trials << ',' << p.relative_error << '\n';
}

double scatter_identity_residual(const FeatureDataset& dataset, const ClientAssignment& assignment) {
  dataset.validate();
  check_paired(assignment, dataset);
  const auto members = assignment.members();
  std::vector<ClientOracleStats> stats;
  std::vector<ClientShare> shares;
  for (ClientId k = 0; k < members.size(); ++k) {
    stats.push_back(compute_class_covariances(dataset, members[k], k));
    shares.push_back(to_share(stats.back()));
  }
  const GlobalMeans g = aggregate_means(shares);
  const CovarianceEstimate covs = aggregate_oracle_covariances(stats, 0.0);
  const Matrix lhs = build_G_variant(g, covs, ScatterVariant::WithinPlusBetween);
  const Matrix ffT = dataset.features.transpose() * dataset.features;
  return (lhs - ffT).norm() / ffT.norm();
}

RandomInstance random_instance(std::uint64_t seed, std::uint32_t max_dim, std::uint32_t max_classes,
                               std::size_t max_samples, std::uint32_t max_clients) {
  Rng rng = make_rng(seed, {stream::kTest});
  const auto pick = [&](std::uint64_t lo, std::uint64_t hi) {
    return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng);
  };
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticSpec spec;
  spec.dim = static_cast<std::uint32_t>(pick(1, max_dim));
  spec.num_classes = static_cast<std::uint32_t>(pick(1, std::min<std::size_t>(max_classes, max_samples / 2)));
  const std::size_t per_class_cap = max_samples / spec.num_classes;
  spec.class_means.resize(spec.num_classes, spec.dim);
  const double offset = normal(rng) * 2.0;
  for (std::uint32_t c = 0; c < spec.num_classes; ++c) {
    spec.samples_per_class.push_back(pick(2, per_class_cap));
    for (std::uint32_t j = 0; j < spec.dim; ++j) spec.class_means(c, j) = offset + 3.0 * normal(rng);
    Matrix a(spec.dim, spec.dim);
    for (auto& v : a.reshaped()) v = normal(rng);
    spec.class_covariances.push_back(a * a.transpose() / spec.dim + 0.1 * Matrix::Identity(spec.dim, spec.dim));
  }
  spec.seed = derive_seed(seed, {1});

  RandomInstance inst;
  inst.data = generate_synthetic(spec);
  const auto clients = static_cast<std::uint32_t>(pick(1, max_clients));
  const double alpha = std::exp(std::uniform_real_distribution<double>(std::log(0.05), std::log(10.0))(rng));
  inst.assignment = dirichlet_partition(inst.data, clients, alpha, derive_seed(seed, {2}));
  return inst;
}

IdentityStudy scatter_identity_study(std::size_t instances, std::uint64_t seed) {
  IdentityStudy study;
  for (std::size_t i = 0; i < instances; ++i) {
    const RandomInstance inst = random_instance(derive_seed(seed, {stream::kTrial, i}), 32, 10, 500, 20);
    study.max_residual = std::max(study.max_residual, scatter_identity_residual(inst.data, inst.assignment));
    ++study.instances;
  }
  return study;
}

double vector_angle(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 && nb == 0.0) return 0.0;
  if (na == 0.0 || nb == 0.0) return std::acos(-1.0) / 2.0;
  const Vector ua = a / na;
  const Vector ub = b / nb;
  return 2.0 * std::atan2((ua - ub).norm(), (ua + ub).norm());
}

SecureStudy secure_aggregation_study(std::size_t instances, std::uint64_t seed,
                                     const std::vector<std::uint32_t>& client_counts, std::uint32_t max_dim,
                                     double mask_scale) {
  if (client_counts.empty()) fail("invalid_argument", "secure study needs at least one client count");
  SecureStudy study;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::uint64_t inst_seed = derive_seed(seed, {stream::kTrial, i});
    const std::uint32_t k = client_counts[i % client_counts.size()];
    RandomInstance inst = random_instance(inst_seed, max_dim, 6, 600, 1);
    inst.assignment = dirichlet_partition(inst.data, k, 0.5, derive_seed(inst_seed, {3}));

    const auto shares = mean_shares(inst.data, inst.assignment, 1, 0);
    const double gamma = 1.0;
    const GlobalMeans g = aggregate_means(shares);
    const CovarianceEstimate covs = estimate_covariances(shares, g, gamma, InsufficientMeans::Shrinkage);
    const Matrix g_plain = build_G_variant(g, covs, ScatterVariant::WithinOnly);
    const ClassifierWeights plain = solve_and_normalize(g_plain, build_B(g));

    const SecureConfig secure{derive_seed(inst_seed, {4}), mask_scale};
    const PhaseOneResult p1 = secure_phase1(shares, secure);
    const PhaseTwoResult p2 = secure_phase2(shares, p1.broadcast, gamma, secure, InsufficientMeans::Shrinkage);
    const ClassifierWeights masked = solve_and_normalize(p2.g_hat, build_B(p1.broadcast.means));

    for (Eigen::Index c = 0; c < plain.weights.cols(); ++c) {
      study.max_angle = std::max(study.max_angle, vector_angle(plain.weights.col(c), masked.weights.col(c)));
    }
    study.max_mask_residual = std::max(study.max_mask_residual, verify_mask_cancellation(p1.masked, p2.masked).max());
    study.max_g_gap = std::max(study.max_g_gap, relative_frobenius(p2.g_hat, g_plain));
    ++study.instances;
  }
  return study;
}

}  // namespace fedcof
