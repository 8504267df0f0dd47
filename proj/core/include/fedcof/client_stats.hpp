#pragma once

#include "fedcof/feature_store.hpp"
#include "fedcof/partitioner.hpp"
#include "fedcof/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fedcof {

/// One transmitted (count, mean) pair. Counts are real-valued because count
/// perturbation (privacy.hpp) may leave non-integer values.
struct MeanEntry {
  ClassIndex label = 0;
  double count = 0.0;
  Vector mean;
};

/// Everything a mean-sharing client uploads. Entries are ordered by class;
/// multi-mean sampling may produce several consecutive entries per class.
struct ClientShare {
  ClientId client_id = 0;
  std::uint32_t dim = 0;
  std::uint32_t num_classes = 0;
  std::vector<MeanEntry> entries;

  std::size_t means_for(ClassIndex c) const;
  /// Number of distinct classes present (C_k).
  std::uint32_t class_count() const;
};

/// Fed3R client statistics: G_k = F_k F_k^T and B_k = F_k Y_k.
struct ClientSecondOrder {
  ClientId client_id = 0;
  Matrix gram;         // d x d
  Matrix label_sums;   // d x C
  std::uint32_t class_count = 0;
};

struct ClassCovarianceStats {
  ClassIndex label = 0;
  std::size_t count = 0;
  Vector mean;
  Matrix covariance;     // (n-1)-normalized; zero when undefined
  bool defined = false;  // false when count < 2
};

/// Full per-class first and second moments, as shared by the oracle baseline.
struct ClientOracleStats {
  ClientId client_id = 0;
  std::uint32_t dim = 0;
  std::uint32_t num_classes = 0;
  std::vector<ClassCovarianceStats> classes;
};

/// Client-side class means over the samples in `members` (indices into dataset).
ClientShare compute_class_means(const FeatureDataset& dataset, std::span<const std::size_t> members, ClientId client_id);
ClientShare compute_class_means(const FeatureDataset& dataset, const ClientAssignment& assignment, ClientId client_id);

/// Up to `means_per_class` disjoint-subset means per class. Subsets hold at
/// least two samples; the remainder after equal splitting joins the last
/// subset. A class with a single sample emits that sample with count 1.
/// means_per_class == 1 is exactly compute_class_means.
ClientShare sample_multi_means(const FeatureDataset& dataset, std::span<const std::size_t> members, ClientId client_id,
                               std::uint32_t means_per_class, std::uint64_t seed);
ClientShare sample_multi_means(const FeatureDataset& dataset, const ClientAssignment& assignment, ClientId client_id,
                               std::uint32_t means_per_class, std::uint64_t seed);

ClientSecondOrder compute_gram_stats(const FeatureDataset& dataset, std::span<const std::size_t> members, ClientId client_id);
ClientSecondOrder compute_gram_stats(const FeatureDataset& dataset, const ClientAssignment& assignment, ClientId client_id);

ClientOracleStats compute_class_covariances(const FeatureDataset& dataset, std::span<const std::size_t> members,
                                            ClientId client_id);
ClientOracleStats compute_class_covariances(const FeatureDataset& dataset, const ClientAssignment& assignment,
                                            ClientId client_id);

/// The (count, mean) view of oracle statistics.
ClientShare to_share(const ClientOracleStats& stats);

}  // namespace fedcof
