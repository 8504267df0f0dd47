#pragma once

#include "fedcof/client_stats.hpp"
#include "fedcof/server_aggregation.hpp"
#include "fedcof/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace fedcof {

enum class NoiseKind { Uniform, Gaussian, Laplace };

std::string_view noise_name(NoiseKind kind);
NoiseKind parse_noise(std::string_view name);

/// Count perturbation. Lower epsilon means more noise:
///   Uniform  U(-(1-eps) n, (1-eps) n), requires 0 < eps <= 1
///   Gaussian N(0, 1/eps) (variance 1/eps)
///   Laplace  L(0, 1/eps) (scale 1/eps)
struct NoiseSpec {
  NoiseKind kind = NoiseKind::Uniform;
  double epsilon = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// max(count + noise, 0), or nullopt when the result is below 0.5 and the
/// client withholds the entry.
std::optional<double> clip_noisy_count(double count, double noise);

/// Perturbs every entry count; means are untouched. Noise for entry i of
/// client k is drawn from the stream (seed, k, i).
ClientShare perturb_counts(const ClientShare& share, const NoiseSpec& spec);

// ---------------------------------------------------------------------------
// Two-phase secure aggregation with pairwise zero-sum masks.
//
// Phase 1: client k sends, for every class c (present or not),
//   u = q_{k,c} + n_{k,c},  t = r_{k,c} + (#means of class c),  v = p_{k,c} + sum n mu
// The server recovers N_c, m_c and mu_c from the sums and broadcasts them.
// Phase 2: client k sends S_k = sum_c (N_c-1)/(m_c-1) sum n (mu - mu_c)(mu - mu_c)^T + M_k
// and the server forms G = sum_k S_k + sum_c (N_c-1) gamma I + N mu_g mu_g^T.

struct SecureConfig {
  std::uint64_t seed = 0;
  double mask_scale = 1.0;  // 0 disables masking
};

/// Masks one client added in phase 1; kept by the simulation for verification only.
struct PhaseOneMasks {
  std::vector<double> count;       // C
  std::vector<double> mean_count;  // C
  Matrix sum;                      // d x C
};

struct MaskedClassStats {
  double count = 0.0;
  double mean_count = 0.0;
  Vector weighted_sum;
};

struct MaskedShare {
  ClientId client_id = 0;
  std::vector<MaskedClassStats> classes;  // one per class
  PhaseOneMasks applied;
};

struct SecureBroadcast {
  GlobalMeans means;
  std::vector<std::size_t> mean_counts;  // m_c per class
  std::vector<ClientId> participants;    // phase 2 must see exactly these clients
};

struct PhaseOneResult {
  std::vector<MaskedShare> masked;
  SecureBroadcast broadcast;
};

PhaseOneResult secure_phase1(std::span<const ClientShare> shares, const SecureConfig& config);

struct MaskedScatter {
  ClientId client_id = 0;
  Matrix masked;   // S_k
  Matrix applied;  // M_k (simulation-side)
};

struct PhaseTwoResult {
  std::vector<MaskedScatter> masked;
  Matrix g_hat;
};

PhaseTwoResult secure_phase2(std::span<const ClientShare> shares, const SecureBroadcast& broadcast, double gamma,
                             const SecureConfig& config, InsufficientMeans policy = InsufficientMeans::Error);

struct MaskResiduals {
  double count = 0.0;
  double mean_count = 0.0;
  double sum = 0.0;
  double scatter = 0.0;

  double max() const;
};

/// Max-abs entries of the federation-wide mask sums (zero in exact arithmetic).
MaskResiduals verify_mask_cancellation(std::span<const MaskedShare> phase1, std::span<const MaskedScatter> phase2 = {});

/// Per-client uplink values of both phases: C (d + 2) + d^2.
std::uint64_t secure_uplink_values(std::uint32_t dim, std::uint32_t num_classes);

}  // namespace fedcof
