#include "fedcof/classifier.hpp"

#include "binary_io.hpp"
#include "fedcof/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace fedcof {
namespace {

constexpr std::uint32_t kFedwVersion = 1;
constexpr double kEigenFloor = 1e-10;
constexpr double kZeroEigen = 1e-12;

struct MethodInfo {
  Method method;
  std::string_view name;
};

constexpr MethodInfo kMethods[] = {
    {Method::FedNCM, "fedncm"},
    {Method::Fed3R, "fed3r"},
    {Method::FedCOF, "fedcof"},
    {Method::FedCOFOracle, "fedcof-oracle"},
    {Method::FedCOFWithinBetween, "fedcof-within-between"},
    {Method::FedCOFBetweenOnly, "fedcof-between-only"},
    {Method::OracleWithinBetween, "fedcof-oracle-within-between"},
    {Method::OracleBetweenOnly, "fedcof-oracle-between-only"},
};

void check_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) fail("dimension_mismatch", std::string(what) + " must be square and nonempty");
}

Matrix eigen_floored_solve(const Matrix& g, const Matrix& b) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(g);
  const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (!(top > 0.0)) fail("singular_system", "matrix is zero");
  const Vector inv = eig.eigenvalues().cwiseMax(kEigenFloor * top).cwiseInverse();
  return eig.eigenvectors() * inv.asDiagonal() * (eig.eigenvectors().transpose() * b);
}

// Cholesky solve; nullopt when factorization fails or the residual is not
// at the level a backward-stable solve guarantees.
std::optional<Matrix> cholesky_solve(const Matrix& g, const Matrix& b) {
  Eigen::LLT<Matrix> llt(g);
  if (llt.info() != Eigen::Success) return std::nullopt;
  Matrix w = llt.solve(b);
  if (!w.allFinite()) return std::nullopt;
  const double residual = (g * w - b).norm();
  const double scale = g.norm() * w.norm() + b.norm();
  if (residual > 1e-8 * scale) return std::nullopt;
  return w;
}

double tolerant_condition_number(const Matrix& m) {
  try {
    return condition_number(m);
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

std::string_view method_name(Method m) {
  for (const auto& info : kMethods) {
    if (info.method == m) return info.name;
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (const auto& info : kMethods) {
    if (info.name == name) return info.method;
  }
  fail("unknown_method", "unknown method '" + std::string(name) + "'");
}

std::string_view variant_name(ScatterVariant v) {
  switch (v) {
    case ScatterVariant::WithinOnly: return "within";
    case ScatterVariant::WithinPlusBetween: return "within-between";
    case ScatterVariant::BetweenOnly: return "between";
  }
  return "unknown";
}

ScatterVariant parse_variant(std::string_view name) {
  if (name == "within") return ScatterVariant::WithinOnly;
  if (name == "within-between") return ScatterVariant::WithinPlusBetween;
  if (name == "between") return ScatterVariant::BetweenOnly;
  fail("unknown_variant", "unknown scatter variant '" + std::string(name) + "'");
}

Method with_variant(Method base, ScatterVariant variant) {
  const bool oracle = uses_oracle_covariances(base);
  if (!oracle && !uses_estimated_covariances(base)) {
    if (variant != ScatterVariant::WithinOnly) fail("invalid_argument", "scatter variants apply to fedcof methods only");
    return base;
  }
  switch (variant) {
    case ScatterVariant::WithinOnly: return oracle ? Method::FedCOFOracle : Method::FedCOF;
    case ScatterVariant::WithinPlusBetween: return oracle ? Method::OracleWithinBetween : Method::FedCOFWithinBetween;
    case ScatterVariant::BetweenOnly: return oracle ? Method::OracleBetweenOnly : Method::FedCOFBetweenOnly;
  }
  return base;
}

ScatterVariant variant_of(Method m) {
  switch (m) {
    case Method::FedCOFWithinBetween:
    case Method::OracleWithinBetween: return ScatterVariant::WithinPlusBetween;
    case Method::FedCOFBetweenOnly:
    case Method::OracleBetweenOnly: return ScatterVariant::BetweenOnly;
    default: return ScatterVariant::WithinOnly;
  }
}

bool uses_oracle_covariances(Method m) {
  return m == Method::FedCOFOracle || m == Method::OracleWithinBetween || m == Method::OracleBetweenOnly;
}

bool uses_estimated_covariances(Method m) {
  return m == Method::FedCOF || m == Method::FedCOFWithinBetween || m == Method::FedCOFBetweenOnly;
}

std::vector<ClassIndex> normalize_columns(Matrix& w) {
  std::vector<ClassIndex> zero;
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    const double norm = w.col(c).norm();
    if (norm > 0.0) {
      w.col(c) /= norm;
    } else {
      zero.push_back(static_cast<ClassIndex>(c));
    }
  }
  return zero;
}

Matrix build_B(const GlobalMeans& global) {
  Matrix b = Matrix::Zero(global.dim, global.num_classes);
  for (ClassIndex c = 0; c < global.num_classes; ++c) {
    if (global.has(c)) b.col(c) = global.classes[c]->count * global.classes[c]->mean;
  }
  return b;
}

ClassifierWeights fedncm_weights(const GlobalMeans& global) {
  for (ClassIndex c = 0; c < global.num_classes; ++c) {
    if (global.has(c) && !(global.classes[c]->mean.norm() > 0.0)) {
      fail("zero_norm_mean", "class " + std::to_string(c) + " has a zero-norm mean");
    }
  }
  // Normalizing N_c mu_c rather than mu_c gives the same direction and keeps
  // this bit-identical to solve_and_normalize(I, B).
  ClassifierWeights w;
  w.weights = build_B(global);
  w.absent_classes = normalize_columns(w.weights);
  w.normalized = true;
  w.method = Method::FedNCM;
  return w;
}

Matrix build_G_variant(const GlobalMeans& global, const CovarianceEstimate& covs, ScatterVariant variant) {
  const std::uint32_t d = global.dim;
  Matrix g = Matrix::Zero(d, d);
  for (ClassIndex c = 0; c < global.num_classes; ++c) {
    if (!global.has(c)) continue;
    const ClassMean& cm = *global.classes[c];
    if (variant != ScatterVariant::BetweenOnly) {
      if (!covs.has(c)) fail("missing_covariance", "no covariance for class " + std::to_string(c));
      g += (cm.count - 1.0) * covs.classes[c]->covariance;
    }
    if (variant != ScatterVariant::WithinOnly) {
      const Vector diff = cm.mean - global.global_mean;
      g.noalias() += cm.count * diff * diff.transpose();
    }
  }
  g.noalias() += global.total_count * global.global_mean * global.global_mean.transpose();
  return g;
}

ClassifierWeights solve_and_normalize(const Matrix& g_hat, const Matrix& b) {
  check_square(g_hat, "G");
  if (b.rows() != g_hat.rows()) fail("dimension_mismatch", "B row count must equal G dimension");
  if ((g_hat - g_hat.transpose()).norm() > 1e-10 * std::max(1.0, g_hat.norm())) {
    fail("not_symmetric", "G is not symmetric");
  }

  ClassifierWeights w;
  w.solve.condition_number = tolerant_condition_number(g_hat);
  if (auto solved = cholesky_solve(g_hat, b)) {
    w.weights = std::move(*solved);
  } else {
    w.weights = eigen_floored_solve(g_hat, b);
    w.solve.fallback = true;
  }
  w.absent_classes = normalize_columns(w.weights);
  w.normalized = true;
  w.method = Method::FedCOF;
  return w;
}

double default_ridge_lambda(const Matrix& gram) {
  check_square(gram, "G");
  return 0.01 * gram.trace() / static_cast<double>(gram.rows());
}

ClassifierWeights ridge_solve(const Matrix& gram, const Matrix& b, double lambda) {
  check_square(gram, "G");
  if (!(lambda >= 0.0)) fail("invalid_argument", "lambda must be >= 0");
  const Matrix system = gram + lambda * Matrix::Identity(gram.rows(), gram.cols());
  if (lambda == 0.0) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(system, Eigen::EigenvaluesOnly);
    const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (!(top > 0.0) || eig.eigenvalues().minCoeff() <= kZeroEigen * top) {
      fail("singular_system", "G is singular and lambda is 0");
    }
  }
  ClassifierWeights w = solve_and_normalize(system, b);
  w.method = Method::Fed3R;
  w.solve.regularization = lambda;
  return w;
}

std::vector<ClassIndex> predict(const ClassifierWeights& weights, const Matrix& features) {
  if (features.cols() != weights.weights.rows()) fail("dimension_mismatch", "feature dimension does not match weights");
  const Matrix scores = features * weights.weights;
  std::vector<ClassIndex> out(static_cast<std::size_t>(features.rows()), 0);
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c) {
      if (scores(i, c) > scores(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<ClassIndex>(best);
  }
  return out;
}

Evaluation evaluate(const ClassifierWeights& weights, const FeatureDataset& test) {
  if (test.size() == 0) fail("empty_dataset", "empty test set");
  if (test.dim != weights.dim()) fail("dimension_mismatch", "test dimension does not match weights");
  const auto predicted = predict(weights, test.features);

  Evaluation ev;
  const std::uint32_t classes = std::max(test.num_classes, weights.num_classes());
  std::vector<std::size_t> correct(classes, 0);
  ev.per_class_total.assign(classes, 0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const ClassIndex truth = test.labels[i];
    ++ev.per_class_total[truth];
    if (predicted[i] == truth) {
      ++correct[truth];
      ++hits;
    }
  }
  ev.accuracy = static_cast<double>(hits) / static_cast<double>(test.size());
  ev.per_class_accuracy.resize(classes);
  for (std::uint32_t c = 0; c < classes; ++c) {
    ev.per_class_accuracy[c] = ev.per_class_total[c] == 0
                                   ? std::numeric_limits<double>::quiet_NaN()
                                   : static_cast<double>(correct[c]) / static_cast<double>(ev.per_class_total[c]);
  }
  return ev;
}

double condition_number(const Matrix& m) {
  check_square(m, "matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
  const Vector& ev = eig.eigenvalues();
  const double top = ev.maxCoeff();
  if (!(top > 0.0)) fail("zero_matrix", "condition number of a zero matrix is undefined");
  double smallest = top;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > kZeroEigen * top) smallest = std::min(smallest, ev(i));
  }
  return top / smallest;
}

void write_weights(const ClassifierWeights& weights, const std::filesystem::path& path) {
  if (!weights.weights.allFinite()) fail("invalid_weights", "weights contain NaN or Inf");
  detail::ByteWriter w;
  w.magic("FEDW");
  w.u32(kFedwVersion);
  w.u32(weights.dim());
  w.u32(weights.num_classes());
  w.u32(static_cast<std::uint32_t>(weights.method));
  for (Eigen::Index c = 0; c < weights.weights.cols(); ++c) {
    for (Eigen::Index r = 0; r < weights.weights.rows(); ++r) w.f32(static_cast<float>(weights.weights(r, c)));
  }
  w.save(path);
}

ClassifierWeights read_weights(const std::filesystem::path& path) {
  auto r = detail::ByteReader::load(path, "FEDW " + path.string());
  r.expect_magic("FEDW");
  const std::uint32_t version = r.u32();
  if (version != kFedwVersion) fail("version_mismatch", "unsupported FEDW version " + std::to_string(version));
  const std::uint32_t d = r.u32();
  const std::uint32_t c = r.u32();
  const std::uint32_t tag = r.u32();
  if (tag > static_cast<std::uint32_t>(Method::OracleBetweenOnly)) fail("unknown_method", "unknown method tag");
  r.require(std::uint64_t{d} * c * 4);
  ClassifierWeights w;
  w.method = static_cast<Method>(tag);
  w.weights.resize(d, c);
  for (std::uint32_t col = 0; col < c; ++col) {
    for (std::uint32_t row = 0; row < d; ++row) w.weights(row, col) = r.f32();
  }
  w.normalized = true;
  for (std::uint32_t col = 0; col < c; ++col) {
    const double norm = w.weights.col(col).norm();
    if (norm == 0.0) {
      w.absent_classes.push_back(col);
    } else if (std::abs(norm - 1.0) > 1e-5) {
      w.normalized = false;
    }
  }
  return w;
}

}  // namespace fedcof
