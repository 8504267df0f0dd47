#include "fedcof/feature_store.hpp"

#include "binary_io.hpp"
#include "fedcof/error.hpp"
#include "fedcof/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

namespace fedcof {
namespace {

constexpr std::uint32_t kFedfVersion = 1;

// Factor F with F F^T = cov. Cholesky when possible, otherwise a clamped
// eigendecomposition so singular (even zero) covariances are supported.
Matrix sampling_factor(const Matrix& cov) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() == Eigen::Success) {
    Matrix l = llt.matrixL();
    if (l.allFinite()) return l;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

}  // namespace

void FeatureDataset::validate() const {
  if (labels.empty()) fail("empty_dataset", "empty dataset");
  if (dim == 0) fail("invalid_dataset", "dimension must be positive");
  if (num_classes == 0) fail("invalid_dataset", "class count must be positive");
  if (static_cast<std::size_t>(features.rows()) != labels.size() ||
      static_cast<std::uint32_t>(features.cols()) != dim) {
    fail("invalid_dataset", "feature matrix shape does not match header");
  }
  for (ClassIndex l : labels) {
    if (l >= num_classes) {
      fail("label_out_of_range", "label " + std::to_string(l) + " >= class count " + std::to_string(num_classes));
    }
  }
  if (!features.allFinite()) fail("invalid_dataset", "features contain NaN or Inf");
}

void SyntheticSpec::validate() const {
  if (num_classes == 0 || dim == 0) fail("invalid_spec", "class count and dimension must be positive");
  if (samples_per_class.size() != num_classes) fail("invalid_spec", "samples_per_class must have one entry per class");
  for (std::size_t n : samples_per_class) {
    if (n == 0) fail("invalid_spec", "samples_per_class entries must be positive");
  }
  if (class_means.rows() != num_classes || class_means.cols() != dim) {
    fail("invalid_spec", "class_means must be C x d");
  }
  if (class_covariances.size() != 1 && class_covariances.size() != num_classes) {
    fail("invalid_spec", "provide one shared covariance or one per class");
  }
  for (const Matrix& cov : class_covariances) {
    if (cov.rows() != dim || cov.cols() != dim) fail("invalid_spec", "covariance must be d x d");
    if ((cov - cov.transpose()).norm() > 1e-12 * std::max(1.0, cov.norm())) {
      fail("non_psd", "covariance is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (lo < -1e-8 * hi) fail("non_psd", "covariance is not positive semi-definite");
  }
}

void write_dataset(const FeatureDataset& dataset, const std::filesystem::path& path) {
  dataset.validate();
  detail::ByteWriter w;
  w.magic("FEDF");
  w.u32(kFedfVersion);
  w.u32(dataset.dim);
  w.u32(dataset.num_classes);
  w.u64(dataset.size());
  for (ClassIndex l : dataset.labels) w.u32(l);
  for (Eigen::Index i = 0; i < dataset.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < dataset.features.cols(); ++j) {
      w.f32(static_cast<float>(dataset.features(i, j)));
    }
  }
  w.save(path);
}

FeatureDataset read_dataset(const std::filesystem::path& path) {
  auto r = detail::ByteReader::load(path, "FEDF " + path.string());
  r.expect_magic("FEDF");
  const std::uint32_t version = r.u32();
  if (version != kFedfVersion) fail("version_mismatch", "unsupported FEDF version " + std::to_string(version));
  FeatureDataset ds;
  ds.dim = r.u32();
  ds.num_classes = r.u32();
  const std::uint64_t n = r.u64();
  r.require(n * 4 + n * ds.dim * 4);
  ds.labels.resize(n);
  for (auto& l : ds.labels) l = r.u32();
  ds.features.resize(static_cast<Eigen::Index>(n), ds.dim);
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) ds.features(i, j) = r.f32();
  }
  ds.validate();
  return ds;
}

FeatureDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::size_t total = 0;
  for (std::size_t n : spec.samples_per_class) total += n;

  FeatureDataset ds;
  ds.dim = spec.dim;
  ds.num_classes = spec.num_classes;
  ds.labels.reserve(total);
  ds.features.resize(static_cast<Eigen::Index>(total), spec.dim);

  Eigen::Index row = 0;
  Vector z(spec.dim);
  for (ClassIndex c = 0; c < spec.num_classes; ++c) {
    const Matrix factor = sampling_factor(spec.covariance(c));
    const Vector mean = spec.class_means.row(c).transpose();
    Rng rng = make_rng(spec.seed, {stream::kSynthetic, c});
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < spec.samples_per_class[c]; ++i, ++row) {
      for (auto& v : z) v = normal(rng);
      ds.features.row(row) = (mean + factor * z).transpose();
      ds.labels.push_back(c);
    }
  }
  return ds;
}

SyntheticSpec anisotropic_benchmark(std::uint32_t num_classes, std::uint32_t dim,
                                    std::size_t samples_per_class, double condition_number,
                                    double mean_scale, std::uint64_t seed) {
  if (condition_number < 1.0) fail("invalid_spec", "condition number must be >= 1");
  Rng rng = make_rng(seed, {stream::kSynthetic, 0xBE4C});
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix gauss(dim, dim);
  for (Eigen::Index i = 0; i < gauss.size(); ++i) gauss.data()[i] = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(gauss);
  const Matrix q = qr.householderQ();

  Vector eigenvalues(dim);
  for (std::uint32_t i = 0; i < dim; ++i) {
    const double t = dim == 1 ? 0.0 : static_cast<double>(i) / (dim - 1);
    eigenvalues(i) = std::pow(condition_number, t);
  }
  Matrix cov = q * eigenvalues.asDiagonal() * q.transpose();
  cov = 0.5 * (cov + cov.transpose());

  SyntheticSpec spec;
  spec.num_classes = num_classes;
  spec.dim = dim;
  spec.samples_per_class.assign(num_classes, samples_per_class);
  spec.class_means.resize(num_classes, dim);
  for (Eigen::Index i = 0; i < spec.class_means.size(); ++i) spec.class_means.data()[i] = mean_scale * normal(rng);
  spec.class_covariances = {cov};
  spec.seed = seed;
  return spec;
}

DatasetSummary summarize(const FeatureDataset& dataset) {
  DatasetSummary s;
  s.class_counts.assign(dataset.num_classes, 0);
  for (ClassIndex l : dataset.labels) ++s.class_counts.at(l);
  const auto n = static_cast<double>(dataset.size());
  s.global_mean = dataset.features.colwise().sum().transpose() / n;
  if (dataset.size() > 1) {
    const Matrix centered = dataset.features.rowwise() - s.global_mean.transpose();
    s.covariance_trace = centered.squaredNorm() / (n - 1.0);
  }
  return s;
}

std::uint64_t dataset_hash(const FeatureDataset& dataset) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  mix(dataset.dim);
  mix(dataset.num_classes);
  for (ClassIndex l : dataset.labels) mix(l);
  for (Eigen::Index i = 0; i < dataset.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < dataset.features.cols(); ++j) {
      mix(std::bit_cast<std::uint32_t>(static_cast<float>(dataset.features(i, j))));
    }
  }
  return h;
}

FeatureDataset subset(const FeatureDataset& dataset, const std::vector<std::size_t>& indices) {
  FeatureDataset out;
  out.dim = dataset.dim;
  out.num_classes = dataset.num_classes;
  out.labels.reserve(indices.size());
  out.features.resize(static_cast<Eigen::Index>(indices.size()), dataset.dim);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.labels.push_back(dataset.labels.at(indices[i]));
    out.features.row(static_cast<Eigen::Index>(i)) = dataset.features.row(static_cast<Eigen::Index>(indices[i]));
  }
  return out;
}

}  // namespace fedcof
