#pragma once

#include "fedcof/analysis.hpp"
#include "fedcof/classifier.hpp"
#include "fedcof/client_stats.hpp"
#include "fedcof/feature_store.hpp"
#include "fedcof/partitioner.hpp"
#include "fedcof/privacy.hpp"
#include "fedcof/server_aggregation.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fedcof {

/// Inline synthetic data: the anisotropic benchmark population, with a
/// train and a test draw.
struct SyntheticDataConfig {
  std::uint32_t num_classes = 10;
  std::uint32_t dim = 32;
  std::size_t train_per_class = 500;
  std::size_t test_per_class = 200;
  double condition_number = 100.0;
  double mean_scale = 2.0;
  std::uint64_t seed = 0;
};

/// Experiment schema (JSON object; unknown keys are errors):
///   data                 {"train": path, "test": path}   exactly one of data / synthetic
///   synthetic            {num_classes, dim, train_per_class, test_per_class,
///                         condition_number, mean_scale, seed}
///   num_clients          K
///   alpha | assignment   Dirichlet concentration, or a FEDA path (exactly one)
///   method               fedncm | fed3r | fedcof | fedcof-oracle
///   variant              within | within-between | between (fedcof, fedcof-oracle)
///   gamma, lambda        shrinkage (default 1) and Fed3R ridge (default 0.01 tr(G)/d)
///   means_per_client     multi-mean sampling per class (default 1)
///   participation        rho in (0, 1]
///   max_rounds           round limit (default 1000)
///   noise                {"kind": uniform|gaussian|laplace, "epsilon": e}
///   secure_aggregation   bool (fedcof with rho = 1 only)
///   insufficient_means   error | shrinkage
///   evaluate_each_round  bool
///   seed                 base seed for partition, sampling, noise, masks and schedule
struct ExperimentConfig {
  std::optional<std::filesystem::path> train_path;
  std::optional<std::filesystem::path> test_path;
  std::optional<SyntheticDataConfig> synthetic;
  std::uint32_t num_clients = 0;
  std::optional<double> alpha;
  std::optional<std::filesystem::path> assignment_path;
  Method method = Method::FedCOF;  // including the scatter variant
  double gamma = 1.0;
  std::optional<double> lambda;
  std::uint32_t means_per_client = 1;
  double participation = 1.0;
  std::uint32_t max_rounds = 1000;
  std::optional<NoiseSpec> noise;  // NoiseSpec::seed is derived from `seed`
  bool secure_aggregation = false;
  InsufficientMeans insufficient_means = InsufficientMeans::Error;
  bool evaluate_each_round = false;
  std::uint64_t seed = 0;

  /// Throws "invalid_config" on any violated invariant.
  void validate() const;
  std::uint32_t clients_per_round() const;
};

/// Parses the JSON schema above. Relative paths resolve against `base_dir`.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);

/// What one client uploads, for every method.
struct ClientUpload {
  ClientShare share;                        // counts and means (all methods; Fed3R only uses it for C_k)
  std::optional<ClientSecondOrder> second;  // Fed3R
  std::optional<ClientOracleStats> oracle;  // oracle covariances
  std::uint64_t shares = 0;                 // mean vectors (or class blocks) sent
  std::uint64_t bytes = 0;
};

using UploadAccumulator = ShareOnceAccumulator<ClientUpload>;

struct RoundLog {
  std::uint32_t round = 0;
  std::vector<ClientId> new_clients;
  std::uint32_t returning_clients = 0;  // scheduled but already shared; nothing sent
  double coverage = 0.0;
  std::uint64_t uplink_bytes = 0;
  std::optional<double> accuracy;
};

/// Participants per round: a uniform subset of `per_round` distinct clients,
/// ascending, drawn until every client has appeared or `max_rounds` is hit.
std::vector<std::vector<ClientId>> participation_schedule(std::uint32_t num_clients, std::uint32_t per_round,
                                                          std::uint32_t max_rounds, std::uint64_t seed);

using UploadFn = std::function<ClientUpload(ClientId)>;
using RoundHook = std::function<std::optional<double>(const UploadAccumulator&)>;

/// Plays `schedule` against `acc`. Only clients not yet seen are asked for an
/// upload; returning participants send nothing and are only counted in the
/// round log. Stops once coverage reaches 1.
std::vector<RoundLog> run_rounds(UploadAccumulator& acc, const std::vector<std::vector<ClientId>>& schedule,
                                 std::uint32_t num_clients, const UploadFn& upload, const RoundHook& hook = {});

struct ExperimentInputs {
  FeatureDataset train;
  std::optional<FeatureDataset> test;
  ClientAssignment assignment;
};

/// Loads or generates the data and partition described by `config`.
ExperimentInputs prepare_inputs(const ExperimentConfig& config);

/// The persisted summary a report is rendered from.
struct ExperimentReport {
  std::string method;
  std::uint64_t dataset_hash = 0;
  std::uint32_t num_clients = 0;
  std::uint32_t dim = 0;
  std::uint32_t num_classes = 0;
  std::uint64_t total_shares = 0;  // realized M
  std::uint64_t uplink_bytes = 0;  // sum over rounds
  std::uint64_t closed_form_bytes = 0;
  std::uint32_t rounds_to_coverage = 0;
  double coverage = 0.0;
  double condition_number = 1.0;
  std::optional<double> accuracy;
  std::vector<RoundLog> rounds;
  std::vector<std::string> warnings;
};

struct ExperimentResult {
  ClassifierWeights weights;
  std::optional<Evaluation> evaluation;
  CommLedger ledger;
  ExperimentReport report;
};

/// Builds the classifier from the uploads gathered so far.
ClassifierWeights solve_uploads(const ExperimentConfig& config, const std::vector<ClientUpload>& uploads,
                                std::uint32_t dim, std::uint32_t num_classes);

ExperimentResult run_experiment(const ExperimentConfig& config);
ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentInputs& inputs);

/// Line-delimited key=value text, one block per report.
std::string report_text(const std::vector<ExperimentReport>& reports);
/// Comma-separated table with a header row, one row per report.
std::string report_csv(const std::vector<ExperimentReport>& reports);

std::string report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(std::string_view text);

}  // namespace fedcof
