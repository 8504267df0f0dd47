#include "fedcof/partitioner.hpp"

#include "binary_io.hpp"
#include "fedcof/error.hpp"
#include "fedcof/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace fedcof {
namespace {

constexpr std::uint32_t kFedaVersion = 1;

// Dirichlet proportions computed in log space. For small alpha a direct
// Gamma(alpha) draw underflows to zero; instead use
// Gamma(alpha) = Gamma(alpha + 1) * U^(1/alpha).
std::vector<double> dirichlet_proportions(std::uint32_t k, double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha + 1.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> log_g(k);
  for (auto& lg : log_g) {
    const double g = gamma(rng);
    double u = unif(rng);
    while (u <= 0.0) u = unif(rng);
    lg = std::log(g) + std::log(u) / alpha;
  }
  const double top = *std::max_element(log_g.begin(), log_g.end());
  std::vector<double> p(k);
  double total = 0.0;
  for (std::uint32_t i = 0; i < k; ++i) {
    p[i] = std::exp(log_g[i] - top);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  return p;
}

}  // namespace

void ClientAssignment::validate() const {
  if (num_clients == 0) fail("invalid_assignment", "client count must be positive");
  for (ClientId o : owner) {
    if (o >= num_clients) {
      fail("owner_out_of_range", "owner " + std::to_string(o) + " >= client count " + std::to_string(num_clients));
    }
  }
}

std::vector<std::vector<std::size_t>> ClientAssignment::members() const {
  std::vector<std::vector<std::size_t>> out(num_clients);
  for (std::size_t i = 0; i < owner.size(); ++i) out.at(owner[i]).push_back(i);
  return out;
}

std::vector<std::size_t> ClientAssignment::members_of(ClientId client) const {
  if (client >= num_clients) fail("unknown_client", "client " + std::to_string(client) + " does not exist");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < owner.size(); ++i) {
    if (owner[i] == client) out.push_back(i);
  }
  return out;
}

ClientAssignment dirichlet_partition(const FeatureDataset& dataset, std::uint32_t num_clients,
                                     double alpha, std::uint64_t seed) {
  if (num_clients == 0) fail("invalid_argument", "number of clients must be >= 1");
  if (!(alpha > 0.0)) fail("invalid_argument", "alpha must be > 0");

  ClientAssignment a;
  a.num_clients = num_clients;
  a.owner.assign(dataset.size(), 0);
  if (num_clients == 1) return a;

  std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class.at(dataset.labels[i]).push_back(i);

  for (ClassIndex c = 0; c < dataset.num_classes; ++c) {
    if (by_class[c].empty()) continue;
    Rng rng = make_rng(seed, {stream::kPartition, c});
    const auto p = dirichlet_proportions(num_clients, alpha, rng);
    std::discrete_distribution<ClientId> pick(p.begin(), p.end());
    for (std::size_t idx : by_class[c]) a.owner[idx] = pick(rng);
  }
  return a;
}

void write_assignment(const ClientAssignment& assignment, const std::filesystem::path& path) {
  assignment.validate();
  detail::ByteWriter w;
  w.magic("FEDA");
  w.u32(kFedaVersion);
  w.u32(assignment.num_clients);
  w.u64(assignment.owner.size());
  for (ClientId o : assignment.owner) w.u32(o);
  w.save(path);
}

ClientAssignment load_assignment(const std::filesystem::path& path) {
  auto r = detail::ByteReader::load(path, "FEDA " + path.string());
  r.expect_magic("FEDA");
  const std::uint32_t version = r.u32();
  if (version != kFedaVersion) fail("version_mismatch", "unsupported FEDA version " + std::to_string(version));
  ClientAssignment a;
  a.num_clients = r.u32();
  const std::uint64_t n = r.u64();
  r.require(n * 4);
  a.owner.resize(n);
  for (auto& o : a.owner) o = r.u32();
  a.validate();
  return a;
}

void check_paired(const ClientAssignment& assignment, const FeatureDataset& dataset) {
  if (assignment.size() != dataset.size()) {
    fail("size_mismatch", "assignment covers " + std::to_string(assignment.size()) + " samples but dataset has " +
                              std::to_string(dataset.size()));
  }
}

PartitionStats partition_stats(const ClientAssignment& assignment, const FeatureDataset& dataset) {
  check_paired(assignment, dataset);
  assignment.validate();
  const std::uint32_t k = assignment.num_clients;
  const std::uint32_t c = dataset.num_classes;

  PartitionStats s;
  s.client_class_counts.assign(k, std::vector<std::size_t>(c, 0));
  for (std::size_t i = 0; i < dataset.size(); ++i) ++s.client_class_counts[assignment.owner[i]][dataset.labels[i]];

  s.clients_per_class.assign(c, 0);
  s.classes_per_client.assign(k, 0);
  s.min_client_samples = std::numeric_limits<std::size_t>::max();
  for (std::uint32_t client = 0; client < k; ++client) {
    std::size_t samples = 0;
    for (std::uint32_t cls = 0; cls < c; ++cls) {
      const std::size_t n = s.client_class_counts[client][cls];
      samples += n;
      if (n > 0) {
        ++s.clients_per_class[cls];
        ++s.classes_per_client[client];
      }
    }
    s.total_shares += s.classes_per_client[client];
    s.min_client_samples = std::min(s.min_client_samples, samples);
    s.max_client_samples = std::max(s.max_client_samples, samples);
    if (samples == 0) ++s.empty_clients;
  }

  std::size_t nonempty = 0;
  double sum = 0.0;
  for (std::uint32_t v : s.clients_per_class) {
    if (v > 0) {
      ++nonempty;
      sum += v;
    }
  }
  s.mean_clients_per_class = nonempty == 0 ? 0.0 : sum / static_cast<double>(nonempty);
  return s;
}

}  // namespace fedcof
