#include "fedcof/client_stats.hpp"

#include "fedcof/error.hpp"
#include "fedcof/rng.hpp"

#include <algorithm>
#include <map>

namespace fedcof {
namespace {

// Sample indices of `members` grouped by label, preserving order.
std::map<ClassIndex, std::vector<std::size_t>> group_by_class(const FeatureDataset& dataset,
                                                              std::span<const std::size_t> members) {
  std::map<ClassIndex, std::vector<std::size_t>> groups;
  for (std::size_t idx : members) groups[dataset.labels.at(idx)].push_back(idx);
  return groups;
}

Vector mean_of(const FeatureDataset& dataset, std::span<const std::size_t> indices) {
  Vector sum = Vector::Zero(dataset.dim);
  for (std::size_t idx : indices) sum += dataset.features.row(static_cast<Eigen::Index>(idx)).transpose();
  return sum / static_cast<double>(indices.size());
}

}  // namespace

std::size_t ClientShare::means_for(ClassIndex c) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [c](const MeanEntry& e) { return e.label == c; }));
}

std::uint32_t ClientShare::class_count() const {
  std::uint32_t n = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i == 0 || entries[i].label != entries[i - 1].label) ++n;
  }
  return n;
}

ClientShare compute_class_means(const FeatureDataset& dataset, std::span<const std::size_t> members, ClientId client_id) {
  ClientShare share{client_id, dataset.dim, dataset.num_classes, {}};
  for (const auto& [label, indices] : group_by_class(dataset, members)) {
    share.entries.push_back({label, static_cast<double>(indices.size()), mean_of(dataset, indices)});
  }
  return share;
}

ClientShare compute_class_means(const FeatureDataset& dataset, const ClientAssignment& assignment, ClientId client_id) {
  check_paired(assignment, dataset);
  const auto members = assignment.members_of(client_id);
  return compute_class_means(dataset, members, client_id);
}

ClientShare sample_multi_means(const FeatureDataset& dataset, std::span<const std::size_t> members, ClientId client_id,
                               std::uint32_t means_per_class, std::uint64_t seed) {
  if (means_per_class == 0) fail("invalid_argument", "means per class must be >= 1");
  if (means_per_class == 1) return compute_class_means(dataset, members, client_id);

  ClientShare share{client_id, dataset.dim, dataset.num_classes, {}};
  for (auto& [label, indices] : group_by_class(dataset, members)) {
    const std::size_t n = indices.size();
    if (n == 1) {
      share.entries.push_back({label, 1.0, mean_of(dataset, indices)});
      continue;
    }
    Rng rng = make_rng(seed, {stream::kMultiMean, client_id, label});
    std::shuffle(indices.begin(), indices.end(), rng);

    const std::size_t subsets = std::min<std::size_t>(means_per_class, n / 2);
    const std::size_t size = n / subsets;
    std::size_t begin = 0;
    for (std::size_t s = 0; s < subsets; ++s) {
      const std::size_t end = (s + 1 == subsets) ? n : begin + size;
      std::span<const std::size_t> part(indices.data() + begin, end - begin);
      share.entries.push_back({label, static_cast<double>(part.size()), mean_of(dataset, part)});
      begin = end;
    }
  }
  return share;
}

ClientShare sample_multi_means(const FeatureDataset& dataset, const ClientAssignment& assignment, ClientId client_id,
                               std::uint32_t means_per_class, std::uint64_t seed) {
  check_paired(assignment, dataset);
  const auto members = assignment.members_of(client_id);
  return sample_multi_means(dataset, members, client_id, means_per_class, seed);
}

ClientSecondOrder compute_gram_stats(const FeatureDataset& dataset, std::span<const std::size_t> members, ClientId client_id) {
  ClientSecondOrder out;
  out.client_id = client_id;
  out.gram = Matrix::Zero(dataset.dim, dataset.dim);
  out.label_sums = Matrix::Zero(dataset.dim, dataset.num_classes);
  std::vector<bool> seen(dataset.num_classes, false);
  for (std::size_t idx : members) {
    const auto f = dataset.features.row(static_cast<Eigen::Index>(idx)).transpose();
    out.gram.selfadjointView<Eigen::Lower>().rankUpdate(f);
    const ClassIndex label = dataset.labels[idx];
    out.label_sums.col(label) += f;
    if (!seen[label]) {
      seen[label] = true;
      ++out.class_count;
    }
  }
  out.gram = out.gram.selfadjointView<Eigen::Lower>();
  return out;
}

ClientSecondOrder compute_gram_stats(const FeatureDataset& dataset, const ClientAssignment& assignment, ClientId client_id) {
  check_paired(assignment, dataset);
  const auto members = assignment.members_of(client_id);
  return compute_gram_stats(dataset, members, client_id);
}

ClientOracleStats compute_class_covariances(const FeatureDataset& dataset, std::span<const std::size_t> members,
                                            ClientId client_id) {
  ClientOracleStats out{client_id, dataset.dim, dataset.num_classes, {}};
  for (const auto& [label, indices] : group_by_class(dataset, members)) {
    ClassCovarianceStats cs;
    cs.label = label;
    cs.count = indices.size();
    cs.mean = mean_of(dataset, indices);
    cs.covariance = Matrix::Zero(dataset.dim, dataset.dim);
    if (cs.count >= 2) {
      for (std::size_t idx : indices) {
        const Vector diff = dataset.features.row(static_cast<Eigen::Index>(idx)).transpose() - cs.mean;
        cs.covariance.selfadjointView<Eigen::Lower>().rankUpdate(diff);
      }
      cs.covariance = cs.covariance.selfadjointView<Eigen::Lower>();
      cs.covariance /= static_cast<double>(cs.count - 1);
      cs.defined = true;
    }
    out.classes.push_back(std::move(cs));
  }
  return out;
}

ClientOracleStats compute_class_covariances(const FeatureDataset& dataset, const ClientAssignment& assignment,
                                            ClientId client_id) {
  check_paired(assignment, dataset);
  const auto members = assignment.members_of(client_id);
  return compute_class_covariances(dataset, members, client_id);
}

ClientShare to_share(const ClientOracleStats& stats) {
  ClientShare share{stats.client_id, stats.dim, stats.num_classes, {}};
  for (const auto& cs : stats.classes) share.entries.push_back({cs.label, static_cast<double>(cs.count), cs.mean});
  return share;
}

}  // namespace fedcof
