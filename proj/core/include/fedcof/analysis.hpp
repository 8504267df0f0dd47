#pragma once

#include "fedcof/classifier.hpp"
#include "fedcof/feature_store.hpp"
#include "fedcof/partitioner.hpp"
#include "fedcof/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace fedcof {

// ---------------------------------------------------------------------------
// Communication accounting. Every transmitted value costs 4 bytes.

enum class CommMethod { FedNCM, FedCOF, Fed3R, Oracle, SecureFedCOF };

std::string_view comm_method_name(CommMethod m);
CommMethod parse_comm_method(std::string_view name);
CommMethod comm_method_of(Method m);

struct CommInputs {
  std::uint64_t total_shares = 0;  // M = sum_k C_k
  std::uint32_t num_clients = 0;   // K
  std::uint32_t dim = 0;           // d
  std::uint32_t num_classes = 0;   // C (secure aggregation only)
};

/// Closed-form uplink bytes:
///   FedNCM, FedCOF  4 M d
///   Fed3R           4 (M d + K d^2)
///   Oracle          4 M (d + d^2)
///   SecureFedCOF    4 K (C (d + 2) + d^2)
std::uint64_t uplink_bytes(CommMethod method, const CommInputs& in);

/// Bytes client k sends given its class count C_k (and which values it must
/// send independently of C_k, e.g. the Fed3R Gram matrix).
std::uint64_t client_uplink_bytes(CommMethod method, std::uint32_t classes_on_client, std::uint32_t dim,
                                  std::uint32_t num_classes);

/// Decimal megabytes (1 MB = 10^6 bytes), rounded half-up to one decimal.
std::string format_megabytes(std::uint64_t bytes);

struct CommEntry {
  CommMethod method = CommMethod::FedCOF;
  std::uint64_t total_bytes = 0;
  std::vector<std::uint64_t> per_client;  // empty when client counts were not given
};

struct CommLedger {
  CommInputs inputs;
  std::vector<CommEntry> entries;
};

CommLedger comm_cost(const std::vector<CommMethod>& methods, const CommInputs& inputs);
/// Builds the ledger from actual per-client class counts; throws
/// "ledger_mismatch" if the per-client sum drifts from the closed form.
CommLedger comm_cost(const std::vector<CommMethod>& methods, const std::vector<std::uint32_t>& classes_per_client,
                     std::uint32_t dim, std::uint32_t num_classes);

void write_comm_table(std::ostream& os, const CommLedger& ledger);

// ---------------------------------------------------------------------------
// Bias of the mean-based estimator under heterogeneous client populations.

struct ClientPopulation {
  std::size_t count = 0;  // n_k
  Vector mean;            // mu_k
  Matrix covariance;      // Sigma_k
};

/// Bias of the estimator for one class given per-client populations and the
/// class-level (mu, Sigma):
///   1/(K-1) sum_k (Sigma_k - Sigma) + 1/(K-1) sum_k n_k (mu_k - mu)(mu_k - mu)^T.
/// This drops terms of order n_k/N; exact_bias keeps them.
/// Throws "inconsistent_population" when sum n_k mu_k / N differs from mu.
Matrix bias_formula(const std::vector<ClientPopulation>& clients, const Vector& mu, const Matrix& sigma);

/// E[Sigma_hat] - Sigma without the large-N approximation:
///   1/(K-1) sum_k [ (1 - n_k/N) Sigma_k + n_k (mu_k - mu)(mu_k - mu)^T ] - Sigma.
Matrix exact_bias(const std::vector<ClientPopulation>& clients, const Vector& mu, const Matrix& sigma);

/// Mixture mean and covariance of the client populations (the class-level
/// population a centralized learner would see).
std::pair<Vector, Matrix> mixture_moments(const std::vector<ClientPopulation>& clients);

struct BiasStudyConfig {
  std::vector<ClientPopulation> clients;
  std::size_t trials = 20000;
  std::uint64_t seed = 0;
};

struct BiasStudyResult {
  Matrix analytic;  // bias_formula
  Matrix exact;     // exact_bias
  Matrix empirical;
  double relative_discrepancy = 0.0;  // ||empirical - analytic|| / ||analytic|| (absolute if analytic is 0)
  double analytic_norm = 0.0;
};

/// Monte-Carlo estimate of the bias with Sigma the mixture covariance.
BiasStudyResult bias_study(const BiasStudyConfig& config);

// ---------------------------------------------------------------------------
// Unbiasedness under i.i.d. sampling.

struct UnbiasednessConfig {
  SyntheticSpec spec;
  std::uint32_t num_clients = 100;
  double alpha = 0.1;
  std::size_t trials = 1000;
  std::vector<std::size_t> checkpoints = {10, 100, 1000};
  std::uint64_t seed = 0;
};

struct CurvePoint {
  std::size_t trials = 0;
  double relative_error = 0.0;  // max over classes ||mean Sigma_hat - Sigma|| / ||Sigma||
};

struct UnbiasednessResult {
  std::vector<CurvePoint> curve;
  std::size_t resampled = 0;  // trials redrawn because some class had m_c < 2
  double mean_means_per_class = 0.0;
  std::vector<Matrix> average;  // running mean of Sigma_hat per class at the last trial
};

UnbiasednessResult unbiasedness_mc(const UnbiasednessConfig& config);

// ---------------------------------------------------------------------------
// Estimator error over a (means-per-client, shrinkage) grid.

struct MseConfig {
  SyntheticSpec spec;
  std::uint32_t num_clients = 10;
  double alpha = 0.1;
  std::vector<std::uint32_t> means_per_client = {1};
  std::vector<double> gammas = {0.0};
  std::size_t trials = 200;
  std::uint64_t seed = 0;
};

struct MseCell {
  std::uint32_t means_per_client = 1;
  double gamma = 0.0;
  double mse = 0.0;                // mean over trials and classes of ||Sigma_hat - Sigma||_F^2
  double precision_error = 0.0;    // mean ||Sigma_hat^-1 - Sigma^-1||_F / ||Sigma^-1||_F; inf if singular
  double mean_means_per_class = 0.0;
};

struct MseResult {
  std::vector<MseCell> cells;  // row-major over (means_per_client, gamma)
  std::size_t resampled = 0;
  const MseCell& at(std::uint32_t m, double gamma) const;
};

/// All cells of one trial share the same dataset and partition.
MseResult estimator_mse(const MseConfig& config);

void write_mse_table(std::ostream& os, const MseResult& result);
void write_curve(std::ostream& os, const UnbiasednessResult& result);

/// ||G_with + G_btw + N mu_g mu_g^T - F^T F||_F / ||F^T F||_F (F is N x d), with the
/// scatter built from oracle statistics pooled over `assignment`.
double scatter_identity_residual(const FeatureDataset& dataset, const ClientAssignment& assignment);

/// Random Gaussian instance (d <= max_dim, C <= max_classes, N <= max_samples,
/// at least 2 samples per class) with a Dirichlet partition over K <= max_clients.
struct RandomInstance {
  FeatureDataset data;
  ClientAssignment assignment;
};
RandomInstance random_instance(std::uint64_t seed, std::uint32_t max_dim, std::uint32_t max_classes,
                               std::size_t max_samples, std::uint32_t max_clients);

struct IdentityStudy {
  std::size_t instances = 0;
  double max_residual = 0.0;
};
/// Scatter decomposition identity over random instances (d <= 32, N <= 500, C <= 10).
IdentityStudy scatter_identity_study(std::size_t instances, std::uint64_t seed);

struct SecureStudy {
  std::size_t instances = 0;
  double max_angle = 0.0;          // radians, per column, secure vs plain weights
  double max_mask_residual = 0.0;  // max |sum of masks|
  double max_g_gap = 0.0;          // ||G_secure - G_plain||_F / ||G_plain||_F
};
/// Secure aggregation against plain FedCOF over random instances, cycling
/// K over `client_counts` with d <= max_dim.
SecureStudy secure_aggregation_study(std::size_t instances, std::uint64_t seed,
                                     const std::vector<std::uint32_t>& client_counts = {5, 20, 100},
                                     std::uint32_t max_dim = 16, double mask_scale = 1.0);

/// Angle between two vectors, stable for near-parallel inputs; 0 when both are zero.
double vector_angle(const Vector& a, const Vector& b);

}  // namespace fedcof
