#pragma once

#include "fedcof/feature_store.hpp"
#include "fedcof/server_aggregation.hpp"
#include "fedcof/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace fedcof {

/// Method tags; the numeric values are the FEDW on-disk tag.
enum class Method : std::uint32_t {
  FedNCM = 0,
  Fed3R = 1,
  FedCOF = 2,
  FedCOFOracle = 3,
  FedCOFWithinBetween = 4,
  FedCOFBetweenOnly = 5,
  OracleWithinBetween = 6,
  OracleBetweenOnly = 7,
};

std::string_view method_name(Method m);
Method parse_method(std::string_view name);

enum class ScatterVariant { WithinOnly, WithinPlusBetween, BetweenOnly };

std::string_view variant_name(ScatterVariant v);
ScatterVariant parse_variant(std::string_view name);

/// Maps a base method (fedcof / fedcof-oracle) and a scatter variant onto its tag.
Method with_variant(Method base, ScatterVariant variant);
ScatterVariant variant_of(Method m);
bool uses_oracle_covariances(Method m);
bool uses_estimated_covariances(Method m);

struct SolveInfo {
  double regularization = 0.0;    // gamma or lambda used to build the system
  double condition_number = 1.0;  // of the solved matrix (meta only)
  bool fallback = false;          // eigenvalue-floored solve was used
};

/// d x C linear classifier; column c scores class c.
struct ClassifierWeights {
  Matrix weights;
  bool normalized = false;
  Method method = Method::FedNCM;
  SolveInfo solve;
  std::vector<ClassIndex> absent_classes;  // zero columns

  std::uint32_t dim() const { return static_cast<std::uint32_t>(weights.rows()); }
  std::uint32_t num_classes() const { return static_cast<std::uint32_t>(weights.cols()); }
};

/// Column c = mu_c / ||mu_c||. Absent classes get zero columns.
ClassifierWeights fedncm_weights(const GlobalMeans& global);

/// B = [N_c mu_c]; absent classes are zero columns.
Matrix build_B(const GlobalMeans& global);

/// WithinOnly:        sum_c (N_c-1) Sigma_c + N mu_g mu_g^T
/// WithinPlusBetween: adds sum_c N_c (mu_c-mu_g)(mu_c-mu_g)^T
/// BetweenOnly:       between-class scatter + N mu_g mu_g^T
Matrix build_G_variant(const GlobalMeans& global, const CovarianceEstimate& covs, ScatterVariant variant);

/// W = G^-1 B via Cholesky with a residual check, falling back to an
/// eigendecomposition with eigenvalues floored at 1e-10 * lambda_max.
/// Columns are L2-normalized.
ClassifierWeights solve_and_normalize(const Matrix& g_hat, const Matrix& b);

/// Fed3R: W = (G + lambda I)^-1 B, column-normalized.
ClassifierWeights ridge_solve(const Matrix& gram, const Matrix& b, double lambda);

/// Default Fed3R regularization: 0.01 * trace(G) / d.
double default_ridge_lambda(const Matrix& gram);

/// Scales each nonzero column to unit norm; returns indices of zero columns.
std::vector<ClassIndex> normalize_columns(Matrix& w);

/// argmax_c W_c^T f for each row f of `features`; ties go to the smallest index.
std::vector<ClassIndex> predict(const ClassifierWeights& weights, const Matrix& features);

struct Evaluation {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;  // NaN for classes absent from the test set
  std::vector<std::size_t> per_class_total;
};

Evaluation evaluate(const ClassifierWeights& weights, const FeatureDataset& test);

/// lambda_max / smallest eigenvalue above 1e-12 * lambda_max.
double condition_number(const Matrix& m);

/// FEDW: "FEDW" | u32 version=1 | u32 d | u32 C | u32 method tag | W as d x C float32, column-major.
void write_weights(const ClassifierWeights& weights, const std::filesystem::path& path);
ClassifierWeights read_weights(const std::filesystem::path& path);

}  // namespace fedcof
