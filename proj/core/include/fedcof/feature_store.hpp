#pragma once

#include "fedcof/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fedcof {

/// N labeled d-dimensional feature vectors. Features are held in double
/// precision in memory (one row per sample) and stored as float32 on disk.
struct FeatureDataset {
  std::uint32_t dim = 0;
  std::uint32_t num_classes = 0;
  std::vector<ClassIndex> labels;
  Matrix features;  // N x d, row-major semantics (row i is sample i)

  std::size_t size() const { return labels.size(); }

  /// Throws Error("invalid_dataset" / "empty dataset") on any invariant violation.
  void validate() const;
};

/// Population parameters for Gaussian class-conditional synthetic data.
struct SyntheticSpec {
  std::uint32_t num_classes = 0;
  std::uint32_t dim = 0;
  std::vector<std::size_t> samples_per_class;
  Matrix class_means;                    // C x d
  std::vector<Matrix> class_covariances;  // one shared or C per-class, each d x d
  std::uint64_t seed = 0;

  const Matrix& covariance(ClassIndex c) const {
    return class_covariances.size() == 1 ? class_covariances.front() : class_covariances.at(c);
  }

  /// Checks shapes and symmetric positive semi-definiteness (smallest
  /// eigenvalue >= -1e-8 * largest).
  void validate() const;
};

/// Writes the FEDF format:
///   "FEDF" | u32 version=1 | u32 d | u32 C | u64 N | N x u32 labels |
///   N x d float32 features (row-major), little-endian, no padding.
void write_dataset(const FeatureDataset& dataset, const std::filesystem::path& path);
FeatureDataset read_dataset(const std::filesystem::path& path);

/// Draws samples_per_class[c] samples from N(mu_c, Sigma_c) for every class,
/// in class-blocked order. Each class uses its own RNG stream derived from
/// (seed, c), so the output is a pure function of the spec.
FeatureDataset generate_synthetic(const SyntheticSpec& spec);

/// Desk-scale benchmark population: a shared covariance Q diag(l) Q^T with
/// eigenvalues log-spaced over [1, condition_number] and a random rotation Q,
/// and class means drawn from N(0, mean_scale^2 I).
SyntheticSpec anisotropic_benchmark(std::uint32_t num_classes, std::uint32_t dim,
                                    std::size_t samples_per_class, double condition_number,
                                    double mean_scale, std::uint64_t seed);

struct DatasetSummary {
  std::vector<std::size_t> class_counts;
  Vector global_mean;
  double covariance_trace = 0.0;  // trace of the (N-1)-normalized global covariance
};

DatasetSummary summarize(const FeatureDataset& dataset);

/// FNV-1a over the on-disk (float32) representation; identifies a dataset in reports.
std::uint64_t dataset_hash(const FeatureDataset& dataset);

/// Rows of `dataset` restricted to `indices`, same dim and class count.
FeatureDataset subset(const FeatureDataset& dataset, const std::vector<std::size_t>& indices);

}  // namespace fedcof
