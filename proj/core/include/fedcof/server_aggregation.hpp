#pragma once

#include "fedcof/client_stats.hpp"
#include "fedcof/types.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fedcof {

struct ClassMean {
  double count = 0.0;  // N_c
  Vector mean;         // global class mean
};

/// Server view of first-order statistics. Classes never reported by any
/// client are std::nullopt.
struct GlobalMeans {
  std::uint32_t dim = 0;
  std::uint32_t num_classes = 0;
  std::vector<std::optional<ClassMean>> classes;
  double total_count = 0.0;  // N
  Vector global_mean;        // (1/N) sum_c N_c mu_c

  bool has(ClassIndex c) const { return c < classes.size() && classes[c].has_value(); }
  std::vector<ClassIndex> absent_classes() const;
};

struct ClassCovariance {
  Matrix covariance;
  std::size_t mean_count = 0;  // m_c: number of (pseudo-)client means used
  bool fallback = false;       // true when too few means and gamma*I was substituted
};

struct CovarianceEstimate {
  double shrinkage = 0.0;
  std::vector<std::optional<ClassCovariance>> classes;

  bool has(ClassIndex c) const { return c < classes.size() && classes[c].has_value(); }
};

enum class InsufficientMeans {
  Error,      // throw "insufficient_means"
  Shrinkage,  // substitute gamma*I and flag the class
};

/// mu_c = (1/N_c) sum_k n_{k,c} mu_{k,c}. Reduction runs in ascending client id.
GlobalMeans aggregate_means(std::span<const ClientShare> shares);

/// sigma_c = 1/(m_c - 1) sum_means n (mu_i - mu_c)(mu_i - mu_c)^T + gamma I, where
/// m_c counts the means received for class c.
CovarianceEstimate estimate_covariances(std::span<const ClientShare> shares, const GlobalMeans& global, double gamma,
                                        InsufficientMeans policy = InsufficientMeans::Error);

/// Exact pooling of client covariances:
/// sum_k (n_k-1)/(N_c-1) S_k + sum_k n_k/(N_c-1) mu_k mu_k^T - N_c/(N_c-1) mu_c mu_c^T, plus gamma I.
CovarianceEstimate aggregate_oracle_covariances(std::span<const ClientOracleStats> stats, double gamma = 0.0);

struct GramAggregate {
  Matrix gram;        // G = sum_k G_k
  Matrix label_sums;  // B = sum_k B_k
};

GramAggregate aggregate_gram(std::span<const ClientSecondOrder> stats);

/// Share-once buffer: keeps the first payload received from every client and
/// hands them back in ascending client id, so downstream reductions do not
/// depend on arrival order.
template <typename Payload>
class ShareOnceAccumulator {
 public:
  bool seen(ClientId id) const { return payloads_.count(id) != 0; }

  /// Returns false (and records a warning) when `id` already contributed.
  bool submit(ClientId id, Payload payload) {
    if (seen(id)) {
      warnings_.push_back("client " + std::to_string(id) + " already shared its statistics; submission ignored");
      return false;
    }
    payloads_.emplace(id, std::move(payload));
    return true;
  }

  std::vector<Payload> payloads() const {
    std::vector<Payload> out;
    out.reserve(payloads_.size());
    for (const auto& [id, p] : payloads_) out.push_back(p);
    return out;
  }

  std::size_t size() const { return payloads_.size(); }
  std::uint32_t round() const { return round_; }
  void advance_round() { ++round_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::map<ClientId, Payload> payloads_;
  std::vector<std::string> warnings_;
  std::uint32_t round_ = 0;
};

using ServerAccumulator = ShareOnceAccumulator<ClientShare>;

struct RoundSubmission {
  std::vector<ClientId> accepted;
  std::vector<ClientId> ignored;
};

/// Appends shares from unseen clients and advances the round counter.
RoundSubmission accumulate_round(ServerAccumulator& acc, std::span<const ClientShare> new_shares);

}  // namespace fedcof
