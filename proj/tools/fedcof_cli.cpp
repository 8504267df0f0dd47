// fedcof command-line tool: data generation, partitioning, classifier
// initialization, evaluation, communication accounting and verification.

#include "fedcof/analysis.hpp"
#include "fedcof/classifier.hpp"
#include "fedcof/error.hpp"
#include "fedcof/experiment.hpp"
#include "fedcof/feature_store.hpp"
#include "fedcof/partitioner.hpp"
#include "fedcof/rng.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace fedcof;

namespace {

struct VerificationFailed {
  std::string message;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("io_error", "cannot write " + path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io_error", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

void check(bool ok, const std::string& what) {
  if (!ok) throw VerificationFailed{what};
}

// -- gen --------------------------------------------------------------------

struct GenOptions {
  std::uint32_t classes = 10;
  std::uint32_t dim = 32;
  std::size_t per_class = 500;
  std::size_t test_per_class = 200;
  double kappa = 100.0;
  double mean_scale = 2.0;
  std::uint64_t seed = 0;
  std::string out;
  std::string test_out;
};

void run_gen(const GenOptions& o) {
  SyntheticSpec spec = anisotropic_benchmark(o.classes, o.dim, o.per_class, o.kappa, o.mean_scale, o.seed);
  const FeatureDataset train = generate_synthetic(spec);
  write_dataset(train, o.out);
  std::cout << "samples=" << train.size() << "\ndim=" << train.dim << "\nclasses=" << train.num_classes
            << "\nhash=" << std::hex << dataset_hash(train) << std::dec << '\n';
  if (!o.test_out.empty()) {
    spec.samples_per_class.assign(o.classes, o.test_per_class);
    spec.seed = derive_seed(o.seed, {stream::kTest});
    const FeatureDataset test = generate_synthetic(spec);
    write_dataset(test, o.test_out);
    std::cout << "test_samples=" << test.size() << '\n';
  }
}

// -- partition ----------------------------------------------------------------

struct PartitionOptions {
  std::string data;
  std::uint32_t clients = 0;
  double alpha = 0.1;
  std::uint64_t seed = 0;
  std::string out;
};

void run_partition(const PartitionOptions& o) {
  const FeatureDataset data = read_dataset(o.data);
  const ClientAssignment a = dirichlet_partition(data, o.clients, o.alpha, o.seed);
  write_assignment(a, o.out);
  const PartitionStats s = partition_stats(a, data);
  std::cout << "clients=" << a.num_clients << "\nsamples=" << a.size() << "\ntotal_shares=" << s.total_shares
            << "\nmean_clients_per_class=" << fmt(s.mean_clients_per_class) << "\nempty_clients=" << s.empty_clients
            << "\nmin_client_samples=" << s.min_client_samples << "\nmax_client_samples=" << s.max_client_samples
            << '\n';
}

// -- init -----------------------------------------------------------------------

struct InitOptions {
  std::string data;
  std::string test;
  std::string assignment;
  std::uint32_t clients = 0;
  double alpha = 0.0;
  std::string method = "fedcof";
  std::string variant = "within";
  double gamma = 1.0;
  double lambda = -1.0;
  std::uint32_t means_per_client = 1;
  std::string noise;
  double epsilon = 1.0;
  bool secure = false;
  std::string insufficient = "error";
  std::uint64_t seed = 0;
  std::string out;
};

void run_init(const InitOptions& o) {
  ExperimentConfig config;
  config.train_path = o.data;
  if (!o.test.empty()) config.test_path = o.test;
  if (!o.assignment.empty()) {
    config.assignment_path = o.assignment;
    config.num_clients = load_assignment(o.assignment).num_clients;
  } else {
    config.alpha = o.alpha;
    config.num_clients = o.clients;
  }
  const Method base = parse_method(o.method);
  config.method = (base == Method::FedNCM || base == Method::Fed3R) ? base : with_variant(base, parse_variant(o.variant));
  config.gamma = o.gamma;
  if (o.lambda >= 0.0) config.lambda = o.lambda;
  config.means_per_client = o.means_per_client;
  if (!o.noise.empty()) config.noise = NoiseSpec{parse_noise(o.noise), o.epsilon, 0};
  config.secure_aggregation = o.secure;
  if (o.insufficient == "shrinkage") {
    config.insufficient_means = InsufficientMeans::Shrinkage;
  } else if (o.insufficient != "error") {
    fail("invalid_argument", "--insufficient-means must be 'error' or 'shrinkage'");
  }
  config.seed = o.seed;
  const ExperimentResult result = run_experiment(config);
  write_weights(result.weights, o.out);
  std::cout << report_text({result.report});
}

// -- eval -------------------------------------------------------------------------

void run_eval(const std::string& weights_path, const std::string& data_path) {
  const ClassifierWeights w = read_weights(weights_path);
  const FeatureDataset data = read_dataset(data_path);
  const Evaluation e = evaluate(w, data);
  std::cout << "method=" << method_name(w.method) << "\naccuracy=" << fmt(e.accuracy, "%.6f") << '\n';
  for (std::size_t c = 0; c < e.per_class_accuracy.size(); ++c) {
    std::cout << "class_" << c << "=" << (std::isnan(e.per_class_accuracy[c]) ? std::string("na")
                                                                                : fmt(e.per_class_accuracy[c], "%.6f"))
              << '\n';
  }
}

// -- comm -------------------------------------------------------------------------

struct CommOptions {
  std::string assignment;
  std::string data;
  std::uint64_t shares = 0;
  std::uint32_t clients = 0;
  std::uint32_t dim = 0;
  std::uint32_t classes = 0;
  std::vector<std::string> methods = {"fedncm", "fedcof", "fed3r", "fedcof-oracle", "fedcof-secure"};
};

void run_comm(const CommOptions& o) {
  std::vector<CommMethod> methods;
  for (const auto& m : o.methods) methods.push_back(parse_comm_method(m));
  CommLedger ledger;
  if (!o.assignment.empty()) {
    if (o.data.empty()) fail("invalid_argument", "--assignment needs --data for per-client class counts");
    const FeatureDataset data = read_dataset(o.data);
    const ClientAssignment a = load_assignment(o.assignment);
    const PartitionStats s = partition_stats(a, data);
    ledger = comm_cost(methods, s.classes_per_client, o.dim ? o.dim : data.dim,
                       o.classes ? o.classes : data.num_classes);
  } else {
    if (o.shares == 0 || o.dim == 0) fail("invalid_argument", "give --assignment/--data or --shares and --dim");
    ledger = comm_cost(methods, CommInputs{o.shares, o.clients, o.dim, o.classes});
  }
  write_comm_table(std::cout, ledger);
}

// -- verify -----------------------------------------------------------------------

struct UnbiasOptions {
  std::uint32_t dim = 8;
  std::uint32_t classes = 2;
  std::size_t per_class = 1000;
  std::uint32_t clients = 200;
  double alpha = 0.1;
  std::size_t trials = 1000;
  double tolerance = 0.05;
  std::uint64_t seed = 0;
  std::string csv;
};

void run_verify_unbiasedness(const UnbiasOptions& o) {
  UnbiasednessConfig cfg;
  cfg.spec.num_classes = o.classes;
  cfg.spec.dim = o.dim;
  cfg.spec.samples_per_class.assign(o.classes, o.per_class);
  cfg.spec.class_means = Matrix::Zero(o.classes, o.dim);
  for (std::uint32_t c = 0; c < o.classes; ++c) cfg.spec.class_means(c, c % o.dim) = 3.0;
  Matrix sigma = Matrix::Zero(o.dim, o.dim);
  for (std::uint32_t j = 0; j < o.dim; ++j) sigma(j, j) = j + 1.0;
  cfg.spec.class_covariances = {sigma};
  cfg.num_clients = o.clients;
  cfg.alpha = o.alpha;
  cfg.trials = o.trials;
  cfg.checkpoints = {10, 100, 1000, 10000};
  cfg.seed = o.seed;
  const UnbiasednessResult r = unbiasedness_mc(cfg);
  for (const auto& p : r.curve) std::cout << "error_at_" << p.trials << "=" << fmt(p.relative_error) << '\n';
  std::cout << "resampled=" << r.resampled << "\nmean_means_per_class=" << fmt(r.mean_means_per_class) << '\n';
  if (!o.csv.empty()) {
    std::ostringstream os;
    write_curve(os, r);
    write_text(o.csv, os.str());
  }
  const double final_error = r.curve.back().relative_error;
  check(final_error <= o.tolerance, "relative error " + fmt(final_error) + " exceeds " + fmt(o.tolerance));
}

void run_verify_prop2(std::size_t instances, double tolerance, std::uint64_t seed) {
  const IdentityStudy s = scatter_identity_study(instances, seed);
  std::cout << "instances=" << s.instances << "\nmax_relative_residual=" << fmt(s.max_residual) << '\n';
  check(s.max_residual <= tolerance, "residual " + fmt(s.max_residual) + " exceeds " + fmt(tolerance));
}

void run_verify_secure(std::size_t instances, double mask_scale, std::uint64_t seed) {
  const SecureStudy s = secure_aggregation_study(instances, seed, {5, 20, 100}, 16, mask_scale);
  std::cout << "instances=" << s.instances << "\nmax_angle=" << fmt(s.max_angle)
            << "\nmax_mask_residual=" << fmt(s.max_mask_residual) << "\nmax_g_gap=" << fmt(s.max_g_gap) << '\n';
  check(s.max_angle <= 1e-5, "angle " + fmt(s.max_angle) + " exceeds 1e-5");
  check(s.max_mask_residual <= 1e-6 * std::max(1.0, mask_scale), "mask residual " + fmt(s.max_mask_residual));
}

void run_verify_bias(std::size_t trials, bool identical, std::uint64_t seed) {
  BiasStudyConfig cfg;
  cfg.trials = trials;
  cfg.seed = seed;
  Vector mean_a(2), mean_b(2);
  mean_a << 1.0, 0.0;
  mean_b << -1.0, 0.0;
  Matrix cov_b = Matrix::Zero(2, 2);
  cov_b.diagonal() << 2.0, 0.5;
  for (int k = 0; k < 4; ++k) {
    const bool first = identical || k < 2;
    cfg.clients.push_back({25, first ? mean_a : mean_b, first ? Matrix::Identity(2, 2) : cov_b});
  }
  const BiasStudyResult r = bias_study(cfg);
  const auto print = [](const char* name, const Matrix& m) {
    std::cout << name << "=" << fmt(m(0, 0)) << "," << fmt(m(0, 1)) << "," << fmt(m(1, 0)) << "," << fmt(m(1, 1)) << '\n';
  };
  print("analytic", r.analytic);
  print("exact", r.exact);
  print("empirical", r.empirical);
  std::cout << "relative_discrepancy=" << fmt(r.relative_discrepancy) << '\n';
  if (identical) {
    check(r.analytic.isZero(0.0), "analytic bias of identical populations is not exactly zero");
  } else {
    check(r.relative_discrepancy <= 0.10, "discrepancy " + fmt(r.relative_discrepancy) + " exceeds 0.10");
  }
}

struct MseOptions {
  std::uint32_t clients = 10;
  std::uint32_t dim = 32;
  std::uint32_t classes = 10;
  std::size_t per_class = 500;
  double alpha = 0.1;
  std::size_t trials = 50;
  std::vector<std::uint32_t> means = {1, 2, 4};
  std::vector<double> gammas = {0.0, 1.0};
  std::uint64_t seed = 0;
  std::string csv;
};

void run_verify_mse(const MseOptions& o) {
  MseConfig cfg;
  cfg.spec = anisotropic_benchmark(o.classes, o.dim, o.per_class, 100.0, 2.0, o.seed);
  cfg.num_clients = o.clients;
  cfg.alpha = o.alpha;
  cfg.means_per_client = o.means;
  cfg.gammas = o.gammas;
  cfg.trials = o.trials;
  cfg.seed = o.seed;
  const MseResult r = estimator_mse(cfg);
  write_mse_table(std::cout, r);
  std::cout << "resampled=" << r.resampled << '\n';
  if (!o.csv.empty()) {
    std::ostringstream os;
    write_mse_table(os, r);
    write_text(o.csv, os.str());
  }
}

// -- run / report -------------------------------------------------------------------

void run_config(const std::string& path, const std::string& weights, const std::string& json_out,
                const std::string& csv_out, const std::uint64_t* seed) {
  ExperimentConfig config = load_config(path);
  if (seed) config.seed = *seed;
  const ExperimentResult result = run_experiment(config);
  if (!weights.empty()) write_weights(result.weights, weights);
  if (!json_out.empty()) write_text(json_out, report_to_json(result.report));
  if (!csv_out.empty()) write_text(csv_out, report_csv({result.report}));
  std::cout << report_text({result.report});
}

void run_report(const std::vector<std::string>& inputs, const std::string& csv_out) {
  std::vector<ExperimentReport> reports;
  for (const auto& p : inputs) reports.push_back(report_from_json(read_text(p)));
  if (!csv_out.empty()) write_text(csv_out, report_csv(reports));
  std::cout << report_text(reports);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free federated classifier initialization"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic FEDF dataset");
  gen_cmd->add_option("--classes", gen.classes);
  gen_cmd->add_option("--dim", gen.dim);
  gen_cmd->add_option("--per-class", gen.per_class);
  gen_cmd->add_option("--test-per-class", gen.test_per_class);
  gen_cmd->add_option("--kappa", gen.kappa, "Condition number of the shared covariance");
  gen_cmd->add_option("--mean-scale", gen.mean_scale);
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--out", gen.out)->required();
  gen_cmd->add_option("--test-out", gen.test_out);

  PartitionOptions part;
  auto* part_cmd = app.add_subcommand("partition", "Dirichlet label-skew partition (FEDF -> FEDA)");
  part_cmd->add_option("--data", part.data)->required();
  part_cmd->add_option("--clients", part.clients)->required();
  part_cmd->add_option("--alpha", part.alpha);
  part_cmd->add_option("--seed", part.seed);
  part_cmd->add_option("--out", part.out)->required();

  InitOptions init;
  auto* init_cmd = app.add_subcommand("init", "Initialize a classifier (-> FEDW)");
  init_cmd->add_option("--data", init.data)->required();
  init_cmd->add_option("--test", init.test);
  auto* init_assign = init_cmd->add_option("--assignment", init.assignment);
  auto* init_alpha = init_cmd->add_option("--alpha", init.alpha);
  init_assign->excludes(init_alpha);
  init_cmd->add_option("--clients", init.clients);
  init_cmd->add_option("--method", init.method);
  init_cmd->add_option("--variant", init.variant);
  init_cmd->add_option("--gamma", init.gamma);
  init_cmd->add_option("--lambda", init.lambda);
  init_cmd->add_option("--means-per-client", init.means_per_client);
  init_cmd->add_option("--noise", init.noise, "uniform | gaussian | laplace");
  init_cmd->add_option("--epsilon", init.epsilon);
  init_cmd->add_flag("--secure", init.secure);
  init_cmd->add_option("--insufficient-means", init.insufficient, "error | shrinkage");
  init_cmd->add_option("--seed", init.seed);
  init_cmd->add_option("--out", init.out)->required();

  std::string eval_weights, eval_data;
  std::uint64_t eval_seed = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Accuracy of a FEDW classifier on a FEDF dataset");
  eval_cmd->add_option("--weights", eval_weights)->required();
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--seed", eval_seed, "Accepted for uniformity; evaluation is deterministic");

  CommOptions comm;
  std::uint64_t comm_seed = 0;
  auto* comm_cmd = app.add_subcommand("comm", "Uplink communication ledger");
  comm_cmd->add_option("--assignment", comm.assignment);
  comm_cmd->add_option("--data", comm.data);
  comm_cmd->add_option("--shares", comm.shares, "M, total class means shared");
  comm_cmd->add_option("--clients", comm.clients);
  comm_cmd->add_option("--dim", comm.dim);
  comm_cmd->add_option("--classes", comm.classes);
  comm_cmd->add_option("--methods", comm.methods)->delimiter(',');
  comm_cmd->add_option("--seed", comm_seed, "Accepted for uniformity; accounting is deterministic");

  auto* verify_cmd = app.add_subcommand("verify", "Statistical and algebraic verification studies");
  verify_cmd->require_subcommand(1);

  UnbiasOptions unbias;
  auto* unbias_cmd = verify_cmd->add_subcommand("unbiasedness", "Monte-Carlo unbiasedness of the estimator");
  unbias_cmd->add_option("--dim", unbias.dim);
  unbias_cmd->add_option("--classes", unbias.classes);
  unbias_cmd->add_option("--per-class", unbias.per_class);
  unbias_cmd->add_option("--clients", unbias.clients);
  unbias_cmd->add_option("--alpha", unbias.alpha);
  unbias_cmd->add_option("--trials", unbias.trials);
  unbias_cmd->add_option("--tolerance", unbias.tolerance);
  unbias_cmd->add_option("--seed", unbias.seed);
  unbias_cmd->add_option("--csv", unbias.csv);

  std::size_t prop2_instances = 100;
  double prop2_tol = 1e-10;
  std::uint64_t prop2_seed = 0;
  auto* prop2_cmd = verify_cmd->add_subcommand("prop2", "Scatter decomposition identity on random instances");
  prop2_cmd->add_option("--instances", prop2_instances);
  prop2_cmd->add_option("--tolerance", prop2_tol);
  prop2_cmd->add_option("--seed", prop2_seed);

  std::size_t secure_instances = 50;
  double mask_scale = 1.0;
  std::uint64_t secure_seed = 0;
  auto* secure_cmd = verify_cmd->add_subcommand("secure-agg", "Secure aggregation against plain FedCOF");
  secure_cmd->add_option("--instances", secure_instances);
  secure_cmd->add_option("--mask-scale", mask_scale);
  secure_cmd->add_option("--seed", secure_seed);

  std::size_t bias_trials = 20000;
  bool bias_identical = false;
  std::uint64_t bias_seed = 0;
  auto* bias_cmd = verify_cmd->add_subcommand("bias", "Non-iid bias formula against Monte-Carlo");
  bias_cmd->add_option("--trials", bias_trials);
  bias_cmd->add_flag("--identical", bias_identical, "Use identical client populations");
  bias_cmd->add_option("--seed", bias_seed);

  MseOptions mse;
  auto* mse_cmd = verify_cmd->add_subcommand("mse", "Estimator error over means-per-client and shrinkage");
  mse_cmd->add_option("--clients", mse.clients);
  mse_cmd->add_option("--dim", mse.dim);
  mse_cmd->add_option("--classes", mse.classes);
  mse_cmd->add_option("--per-class", mse.per_class);
  mse_cmd->add_option("--alpha", mse.alpha);
  mse_cmd->add_option("--trials", mse.trials);
  mse_cmd->add_option("--means", mse.means)->delimiter(',');
  mse_cmd->add_option("--gammas", mse.gammas)->delimiter(',');
  mse_cmd->add_option("--seed", mse.seed);
  mse_cmd->add_option("--csv", mse.csv);

  std::string run_path, run_weights, run_json, run_csv;
  std::uint64_t run_seed = 0;
  auto* run_cmd = app.add_subcommand("run", "Run a full experiment from a JSON config");
  run_cmd->add_option("--config", run_path)->required();
  run_cmd->add_option("--weights", run_weights);
  run_cmd->add_option("--report-json", run_json);
  run_cmd->add_option("--csv", run_csv);
  auto* run_seed_opt = run_cmd->add_option("--seed", run_seed, "Overrides the config seed");

  std::vector<std::string> report_inputs;
  std::string report_csv_out;
  auto* report_cmd = app.add_subcommand("report", "Re-render reports from persisted JSON");
  report_cmd->add_option("inputs", report_inputs)->required();
  report_cmd->add_option("--csv", report_csv_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*gen_cmd) run_gen(gen);
    if (*part_cmd) run_partition(part);
    if (*init_cmd) run_init(init);
    if (*eval_cmd) run_eval(eval_weights, eval_data);
    if (*comm_cmd) run_comm(comm);
    if (*unbias_cmd) run_verify_unbiasedness(unbias);
    if (*prop2_cmd) run_verify_prop2(prop2_instances, prop2_tol, prop2_seed);
    if (*secure_cmd) run_verify_secure(secure_instances, mask_scale, secure_seed);
    if (*bias_cmd) run_verify_bias(bias_trials, bias_identical, bias_seed);
    if (*mse_cmd) run_verify_mse(mse);
    if (*run_cmd) run_config(run_path, run_weights, run_json, run_csv, *run_seed_opt ? &run_seed : nullptr);
    if (*report_cmd) run_report(report_inputs, report_csv_out);
  } catch (const VerificationFailed& e) {
    std::cerr << "error: verification_failed: " << e.message << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
