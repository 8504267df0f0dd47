#include "fedcof/privacy.hpp"

#include "fedcof/error.hpp"
#include "fedcof/rng.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace fedcof {
namespace {

double draw_noise(const NoiseSpec& spec, double count, Rng& rng) {
  switch (spec.kind) {
    case NoiseKind::Uniform: {
      const double width = (1.0 - spec.epsilon) * count;
      if (!(width > 0.0)) return 0.0;
      return std::uniform_real_distribution<double>(-width, width)(rng);
    }
    case NoiseKind::Gaussian:
      return std::normal_distribution<double>(0.0, std::sqrt(1.0 / spec.epsilon))(rng);
    case NoiseKind::Laplace: {
      const double scale = 1.0 / spec.epsilon;
      std::uniform_real_distribution<double> unif(-0.5, 0.5);
      double u = unif(rng);
      while (u == -0.5) u = unif(rng);
      return -scale * std::copysign(1.0, u) * std::log1p(-2.0 * std::abs(u));
    }
  }
  return 0.0;
}

std::vector<const ClientShare*> sorted_clients(std::span<const ClientShare> shares) {
  std::vector<const ClientShare*> out;
  for (const auto& s : shares) out.push_back(&s);
  std::sort(out.begin(), out.end(), [](const ClientShare* a, const ClientShare* b) { return a->client_id < b->client_id; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i]->client_id == out[i - 1]->client_id) fail("duplicate_client", "client ids must be unique");
  }
  if (out.size() < 2) fail("too_few_clients", "secure aggregation needs at least 2 clients");
  for (const auto* s : out) {
    if (s->dim != out.front()->dim || s->num_classes != out.front()->num_classes) {
      fail("dimension_mismatch", "client shares disagree on dimension or class count");
    }
  }
  return out;
}

// Pairwise masks: for each unordered pair {i, j} the pair stream yields
// z_ij and z_ji; client i adds z_ij - z_ji and client j adds z_ji - z_ij,
// which is exactly the negation, so the federation sum vanishes.
std::vector<Vector> pairwise_masks(const std::vector<const ClientShare*>& clients, std::size_t length,
                                   const SecureConfig& config, std::uint64_t phase) {
  std::vector<Vector> masks(clients.size(), Vector::Zero(static_cast<Eigen::Index>(length)));
  if (config.mask_scale == 0.0) return masks;
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z_ij(static_cast<Eigen::Index>(length));
  Vector z_ji(static_cast<Eigen::Index>(length));
  for (std::size_t i = 0; i < clients.size(); ++i) {
    for (std::size_t j = i + 1; j < clients.size(); ++j) {
      Rng rng = make_rng(config.seed, {stream::kMask, phase, clients[i]->client_id, clients[j]->client_id});
      for (auto& v : z_ij) v = normal(rng);
      for (auto& v : z_ji) v = normal(rng);
      masks[i] += config.mask_scale * (z_ij - z_ji);
      masks[j] += config.mask_scale * (z_ji - z_ij);
    }
  }
  return masks;
}

}  // namespace

std::string_view noise_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Uniform: return "uniform";
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::Laplace: return "laplace";
  }
  return "unknown";
}

NoiseKind parse_noise(std::string_view name) {
  if (name == "uniform") return NoiseKind::Uniform;
  if (name == "gaussian") return NoiseKind::Gaussian;
  if (name == "laplace") return NoiseKind::Laplace;
  fail("unknown_noise", "unknown noise kind '" + std::string(name) + "'");
}

void NoiseSpec::validate() const {
  if (!(epsilon > 0.0)) fail("invalid_argument", "noise epsilon must be > 0");
  if (kind == NoiseKind::Uniform && epsilon > 1.0) fail("invalid_argument", "uniform noise needs epsilon <= 1");
}

std::optional<double> clip_noisy_count(double count, double noise) {
  const double noisy = std::max(count + noise, 0.0);
  if (noisy < 0.5) return std::nullopt;
  return noisy;
}

ClientShare perturb_counts(const ClientShare& share, const NoiseSpec& spec) {
  spec.validate();
  ClientShare out{share.client_id, share.dim, share.num_classes, {}};
  for (std::size_t i = 0; i < share.entries.size(); ++i) {
    const MeanEntry& e = share.entries[i];
    Rng rng = make_rng(spec.seed, {stream::kNoise, share.client_id, i});
    if (auto noisy = clip_noisy_count(e.count, draw_noise(spec, e.count, rng))) {
      out.entries.push_back({e.label, *noisy, e.mean});
    }
  }
  return out;
}

PhaseOneResult secure_phase1(std::span<const ClientShare> shares, const SecureConfig& config) {
  const auto clients = sorted_clients(shares);
  const std::uint32_t d = clients.front()->dim;
  const std::uint32_t classes = clients.front()->num_classes;
  const std::size_t length = std::size_t{classes} * (d + 2);
  const auto masks = pairwise_masks(clients, length, config, 1);

  PhaseOneResult result;
  for (const auto* c : clients) result.broadcast.participants.push_back(c->client_id);
  for (std::size_t k = 0; k < clients.size(); ++k) {
    const ClientShare& share = *clients[k];
    const Vector& mask = masks[k];
    MaskedShare ms;
    ms.client_id = share.client_id;
    ms.applied.count.resize(classes);
    ms.applied.mean_count.resize(classes);
    ms.applied.sum.resize(d, classes);
    for (ClassIndex c = 0; c < classes; ++c) {
      ms.applied.count[c] = mask(c);
      ms.applied.mean_count[c] = mask(classes + c);
      ms.applied.sum.col(c) = mask.segment(2 * classes + std::size_t{c} * d, d);
    }
    ms.classes.resize(classes);
    for (ClassIndex c = 0; c < classes; ++c) {
      ms.classes[c] = {ms.applied.count[c], ms.applied.mean_count[c], ms.applied.sum.col(c)};
    }
    for (const auto& e : share.entries) {
      auto& slot = ms.classes.at(e.label);
      slot.count += e.count;
      slot.mean_count += 1.0;
      slot.weighted_sum += e.count * e.mean;
    }
    result.masked.push_back(std::move(ms));
  }

  // Server side: only sums of masked values are used.
  std::vector<double> counts(classes, 0.0);
  std::vector<double> mean_counts(classes, 0.0);
  std::vector<Vector> sums(classes, Vector::Zero(d));
  for (const auto& ms : result.masked) {
    for (ClassIndex c = 0; c < classes; ++c) {
      counts[c] += ms.classes[c].count;
      mean_counts[c] += ms.classes[c].mean_count;
      sums[c] += ms.classes[c].weighted_sum;
    }
  }

  GlobalMeans& g = result.broadcast.means;
  g.dim = d;
  g.num_classes = classes;
  g.classes.resize(classes);
  g.global_mean = Vector::Zero(d);
  result.broadcast.mean_counts.assign(classes, 0);
  for (ClassIndex c = 0; c < classes; ++c) {
    const double rounded = std::round(mean_counts[c]);
    if (rounded < 1.0 || counts[c] < 0.5) continue;
    result.broadcast.mean_counts[c] = static_cast<std::size_t>(rounded);
    g.classes[c] = ClassMean{counts[c], sums[c] / counts[c]};
    g.total_count += counts[c];
    g.global_mean += counts[c] * g.classes[c]->mean;
  }
  if (!(g.total_count > 0.0)) fail("empty_federation", "no client reported any class mean");
  g.global_mean /= g.total_count;
  return result;
}

PhaseTwoResult secure_phase2(std::span<const ClientShare> shares, const SecureBroadcast& broadcast, double gamma,
                             const SecureConfig& config, InsufficientMeans policy) {
  if (!(gamma >= 0.0)) fail("invalid_argument", "shrinkage must be >= 0");
  const auto clients = sorted_clients(shares);
  std::vector<ClientId> ids;
  for (const auto* c : clients) ids.push_back(c->client_id);
  if (ids != broadcast.participants) fail("participant_mismatch", "phase 2 clients differ from phase 1 participants");
  const GlobalMeans& g = broadcast.means;
  const std::uint32_t d = g.dim;
  if (clients.front()->dim != d || clients.front()->num_classes != g.num_classes) {
    fail("dimension_mismatch", "broadcast does not match the client shares");
  }
  for (ClassIndex c = 0; c < g.num_classes; ++c) {
    if (g.has(c) && broadcast.mean_counts.at(c) < 2 && policy == InsufficientMeans::Error) {
      fail("insufficient_means", "class " + std::to_string(c) + " has " + std::to_string(broadcast.mean_counts[c]) +
                                     " mean(s); at least 2 are required");
    }
  }

  const std::size_t tri = std::size_t{d} * (d + 1) / 2;
  const auto masks = pairwise_masks(clients, tri, config, 2);

  PhaseTwoResult result;
  Matrix total = Matrix::Zero(d, d);
  for (std::size_t k = 0; k < clients.size(); ++k) {
    MaskedScatter ms;
    ms.client_id = clients[k]->client_id;
    ms.applied.resize(d, d);
    std::size_t idx = 0;
    for (std::uint32_t col = 0; col < d; ++col) {
      for (std::uint32_t row = col; row < d; ++row, ++idx) {
        ms.applied(row, col) = masks[k](static_cast<Eigen::Index>(idx));
        ms.applied(col, row) = ms.applied(row, col);
      }
    }
    Matrix scatter = Matrix::Zero(d, d);
    for (const auto& e : clients[k]->entries) {
      if (!g.has(e.label)) continue;
      const std::size_t m = broadcast.mean_counts[e.label];
      if (m < 2) continue;
      const ClassMean& cm = *g.classes[e.label];
      const Vector diff = e.mean - cm.mean;
      const double weight = (cm.count - 1.0) / static_cast<double>(m - 1) * e.count;
      scatter.noalias() += weight * diff * diff.transpose();
    }
    ms.masked = scatter + ms.applied;
    total += ms.masked;
    result.masked.push_back(std::move(ms));
  }

  for (ClassIndex c = 0; c < g.num_classes; ++c) {
    if (g.has(c)) total.diagonal().array() += (g.classes[c]->count - 1.0) * gamma;
  }
  total.noalias() += g.total_count * g.global_mean * g.global_mean.transpose();
  result.g_hat = 0.5 * (total + total.transpose());
  return result;
}

double MaskResiduals::max() const { return std::max({count, mean_count, sum, scatter}); }

MaskResiduals verify_mask_cancellation(std::span<const MaskedShare> phase1, std::span<const MaskedScatter> phase2) {
  MaskResiduals r;
  if (!phase1.empty()) {
    const std::size_t classes = phase1.front().applied.count.size();
    std::vector<double> count(classes, 0.0);
    std::vector<double> mean_count(classes, 0.0);
    Matrix sum = Matrix::Zero(phase1.front().applied.sum.rows(), phase1.front().applied.sum.cols());
    for (const auto& ms : phase1) {
      for (std::size_t c = 0; c < classes; ++c) {
        count[c] += ms.applied.count.at(c);
        mean_count[c] += ms.applied.mean_count.at(c);
      }
      sum += ms.applied.sum;
    }
    for (std::size_t c = 0; c < classes; ++c) {
      r.count = std::max(r.count, std::abs(count[c]));
      r.mean_count = std::max(r.mean_count, std::abs(mean_count[c]));
    }
    r.sum = sum.size() == 0 ? 0.0 : sum.cwiseAbs().maxCoeff();
  }
  if (!phase2.empty()) {
    Matrix total = Matrix::Zero(phase2.front().applied.rows(), phase2.front().applied.cols());
    for (const auto& ms : phase2) total += ms.applied;
    r.scatter = total.size() == 0 ? 0.0 : total.cwiseAbs().maxCoeff();
  }
  return r;
}

std::uint64_t secure_uplink_values(std::uint32_t dim, std::uint32_t num_classes) {
  return std::uint64_t{num_classes} * (dim + 2) + std::uint64_t{dim} * dim;
}

}  // namespace fedcof
