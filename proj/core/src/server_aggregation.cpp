#include "fedcof/server_aggregation.hpp"

#include "fedcof/error.hpp"

#include <algorithm>
#include <numeric>

namespace fedcof {
namespace {

template <typename T>
std::vector<const T*> by_client_id(std::span<const T> items) {
  std::vector<const T*> out;
  out.reserve(items.size());
  for (const T& item : items) out.push_back(&item);
  std::stable_sort(out.begin(), out.end(), [](const T* a, const T* b) { return a->client_id < b->client_id; });
  return out;
}

void check_share_shapes(std::span<const ClientShare> shares) {
  for (const auto& s : shares) {
    if (s.dim != shares.front().dim || s.num_classes != shares.front().num_classes) {
      fail("dimension_mismatch", "client shares disagree on dimension or class count");
    }
    for (const auto& e : s.entries) {
      if (e.label >= s.num_classes || static_cast<std::uint32_t>(e.mean.size()) != s.dim) {
        fail("dimension_mismatch", "share entry from client " + std::to_string(s.client_id) + " is malformed");
      }
    }
  }
}

}  // namespace

std::vector<ClassIndex> GlobalMeans::absent_classes() const {
  std::vector<ClassIndex> out;
  for (ClassIndex c = 0; c < num_classes; ++c) {
    if (!has(c)) out.push_back(c);
  }
  return out;
}

GlobalMeans aggregate_means(std::span<const ClientShare> shares) {
  bool any = false;
  for (const auto& s : shares) any = any || !s.entries.empty();
  if (shares.empty() || !any) fail("empty_federation", "no client reported any class mean");
  check_share_shapes(shares);

  GlobalMeans g;
  g.dim = shares.front().dim;
  g.num_classes = shares.front().num_classes;
  std::vector<double> counts(g.num_classes, 0.0);
  std::vector<Vector> sums(g.num_classes, Vector::Zero(g.dim));
  std::vector<bool> present(g.num_classes, false);

  for (const ClientShare* s : by_client_id(shares)) {
    for (const auto& e : s->entries) {
      counts[e.label] += e.count;
      sums[e.label] += e.count * e.mean;
      present[e.label] = true;
    }
  }

  g.classes.resize(g.num_classes);
  g.global_mean = Vector::Zero(g.dim);
  for (ClassIndex c = 0; c < g.num_classes; ++c) {
    if (!present[c] || !(counts[c] > 0.0)) continue;
    g.classes[c] = ClassMean{counts[c], sums[c] / counts[c]};
    g.total_count += counts[c];
    g.global_mean += counts[c] * g.classes[c]->mean;
  }
  g.global_mean /= g.total_count;
  return g;
}

CovarianceEstimate estimate_covariances(std::span<const ClientShare> shares, const GlobalMeans& global, double gamma,
                                        InsufficientMeans policy) {
  if (!(gamma >= 0.0)) fail("invalid_argument", "shrinkage must be >= 0");
  check_share_shapes(shares);
  const std::uint32_t d = global.dim;

  std::vector<Matrix> scatter(global.num_classes, Matrix::Zero(d, d));
  std::vector<std::size_t> means(global.num_classes, 0);
  for (const ClientShare* s : by_client_id(shares)) {
    for (const auto& e : s->entries) {
      if (!global.has(e.label)) fail("invalid_argument", "share reports a class missing from the global means");
      const Vector diff = e.mean - global.classes[e.label]->mean;
      scatter[e.label].selfadjointView<Eigen::Lower>().rankUpdate(diff, e.count);
      ++means[e.label];
    }
  }

  CovarianceEstimate est;
  est.shrinkage = gamma;
  est.classes.resize(global.num_classes);
  const Matrix shrink = gamma * Matrix::Identity(d, d);
  for (ClassIndex c = 0; c < global.num_classes; ++c) {
    if (!global.has(c)) continue;
    if (means[c] < 2) {
      if (policy == InsufficientMeans::Error) {
        fail("insufficient_means", "class " + std::to_string(c) + " has " + std::to_string(means[c]) +
                                       " mean(s); at least 2 are required");
      }
      est.classes[c] = ClassCovariance{shrink, means[c], true};
      continue;
    }
    Matrix cov = scatter[c].selfadjointView<Eigen::Lower>();
    cov /= static_cast<double>(means[c] - 1);
    cov += shrink;
    est.classes[c] = ClassCovariance{std::move(cov), means[c], false};
  }
  return est;
}

CovarianceEstimate aggregate_oracle_covariances(std::span<const ClientOracleStats> stats, double gamma) {
  if (stats.empty()) fail("empty_federation", "no oracle statistics");
  if (!(gamma >= 0.0)) fail("invalid_argument", "shrinkage must be >= 0");
  const std::uint32_t d = stats.front().dim;
  const std::uint32_t classes = stats.front().num_classes;

  std::vector<double> counts(classes, 0.0);
  std::vector<Vector> sums(classes, Vector::Zero(d));
  std::vector<std::size_t> contributors(classes, 0);
  for (const ClientOracleStats* s : by_client_id(stats)) {
    if (s->dim != d || s->num_classes != classes) fail("dimension_mismatch", "oracle statistics disagree on shape");
    for (const auto& cs : s->classes) {
      counts[cs.label] += static_cast<double>(cs.count);
      sums[cs.label] += static_cast<double>(cs.count) * cs.mean;
      ++contributors[cs.label];
    }
  }

  std::vector<Matrix> pooled(classes, Matrix::Zero(d, d));
  std::vector<Vector> global_means(classes);
  for (ClassIndex c = 0; c < classes; ++c) {
    if (contributors[c] == 0) continue;
    if (counts[c] < 2.0) fail("insufficient_samples", "class " + std::to_string(c) + " has fewer than 2 samples");
    global_means[c] = sums[c] / counts[c];
  }

  for (const ClientOracleStats* s : by_client_id(stats)) {
    for (const auto& cs : s->classes) {
      const double denom = counts[cs.label] - 1.0;
      const auto n = static_cast<double>(cs.count);
      if (cs.defined) pooled[cs.label] += ((n - 1.0) / denom) * cs.covariance;
      pooled[cs.label].noalias() += (n / denom) * cs.mean * cs.mean.transpose();
    }
  }

  CovarianceEstimate est;
  est.shrinkage = gamma;
  est.classes.resize(classes);
  for (ClassIndex c = 0; c < classes; ++c) {
    if (contributors[c] == 0) continue;
    const double n = counts[c];
    Matrix cov = pooled[c] - (n / (n - 1.0)) * global_means[c] * global_means[c].transpose();
    cov = 0.5 * (cov + cov.transpose());
    cov += gamma * Matrix::Identity(d, d);
    est.classes[c] = ClassCovariance{std::move(cov), contributors[c], false};
  }
  return est;
}

GramAggregate aggregate_gram(std::span<const ClientSecondOrder> stats) {
  if (stats.empty()) fail("empty_federation", "no second-order statistics");
  const auto d = stats.front().gram.rows();
  const auto c = stats.front().label_sums.cols();
  GramAggregate out{Matrix::Zero(d, d), Matrix::Zero(d, c)};
  for (const ClientSecondOrder* s : by_client_id(stats)) {
    if (s->gram.rows() != d || s->gram.cols() != d || s->label_sums.rows() != d || s->label_sums.cols() != c) {
      fail("dimension_mismatch", "client " + std::to_string(s->client_id) + " sent mis-shaped Gram statistics");
    }
    out.gram += s->gram;
    out.label_sums += s->label_sums;
  }
  return out;
}

RoundSubmission accumulate_round(ServerAccumulator& acc, std::span<const ClientShare> new_shares) {
  RoundSubmission r;
  for (const auto& share : new_shares) {
    if (acc.submit(share.client_id, share)) {
      r.accepted.push_back(share.client_id);
    } else {
      r.ignored.push_back(share.client_id);
    }
  }
  acc.advance_round();
  return r;
}

}  // namespace fedcof
