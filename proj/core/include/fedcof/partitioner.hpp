#pragma once

#include "fedcof/feature_store.hpp"
#include "fedcof/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fedcof {

/// Owner client of every sample. Per-client per-class counts are derived
/// against a dataset (see client_class_counts / partition_stats).
struct ClientAssignment {
  std::uint32_t num_clients = 0;
  std::vector<ClientId> owner;

  std::size_t size() const { return owner.size(); }
  void validate() const;

  /// Sample indices owned by each client, ascending.
  std::vector<std::vector<std::size_t>> members() const;
  std::vector<std::size_t> members_of(ClientId client) const;
};

/// Symmetric Dirichlet(alpha) label skew: for each class independently draw
/// p ~ Dir(alpha 1_K) and send each of its samples to client k with
/// probability p_k. Class c uses the stream derived from (seed, c).
ClientAssignment dirichlet_partition(const FeatureDataset& dataset, std::uint32_t num_clients,
                                     double alpha, std::uint64_t seed);

/// FEDA: "FEDA" | u32 version=1 | u32 K | u64 N | N x u32 owners.
void write_assignment(const ClientAssignment& assignment, const std::filesystem::path& path);
ClientAssignment load_assignment(const std::filesystem::path& path);

/// Throws "size_mismatch" when the assignment does not cover exactly the dataset.
void check_paired(const ClientAssignment& assignment, const FeatureDataset& dataset);

struct PartitionStats {
  std::vector<std::uint32_t> clients_per_class;                // K_c
  std::vector<std::vector<std::size_t>> client_class_counts;   // [k][c] = n_{k,c}
  std::vector<std::uint32_t> classes_per_client;               // C_k
  std::uint64_t total_shares = 0;                              // M = sum_k C_k
  double mean_clients_per_class = 0.0;                         // over non-empty classes
  std::size_t min_client_samples = 0;
  std::size_t max_client_samples = 0;
  std::size_t empty_clients = 0;
};

PartitionStats partition_stats(const ClientAssignment& assignment, const FeatureDataset& dataset);

}  // namespace fedcof
