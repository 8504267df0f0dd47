#include "fedcof/experiment.hpp"

#include "fedcof/error.hpp"
#include "fedcof/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace fedcof {
namespace {

using nlohmann::json;

// Sub-seeds of the experiment seed.
enum SeedUse : std::uint64_t { kPartitionSeed = 1, kMultiMeanSeed = 2, kNoiseSeed = 3, kMaskSeed = 4, kScheduleSeed = 5 };

std::uint64_t sub_seed(const ExperimentConfig& config, SeedUse use) { return derive_seed(config.seed, {use}); }

[[noreturn]] void config_error(const std::string& message) { fail("invalid_config", message); }

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) config_error(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      config_error("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <typename T>
T get(const json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    config_error("field '" + where + key + "' is missing or has the wrong type");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string format_general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string format_hash(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

bool is_secure(const ExperimentConfig& config) { return config.secure_aggregation; }

CommMethod ledger_method(const ExperimentConfig& config) {
  return is_secure(config) ? CommMethod::SecureFedCOF : comm_method_of(config.method);
}

ClientUpload make_upload(const ExperimentConfig& config, const FeatureDataset& train,
                         std::span<const std::size_t> members, ClientId k) {
  ClientUpload up;
  const std::uint64_t d = train.dim;
  if (config.method == Method::Fed3R) {
    up.second = compute_gram_stats(train, members, k);
    up.share = compute_class_means(train, members, k);
    up.shares = up.share.class_count();
  } else if (uses_oracle_covariances(config.method)) {
    up.oracle = compute_class_covariances(train, members, k);
    up.share = to_share(*up.oracle);
    up.shares = up.share.class_count();
  } else {
    up.share = sample_multi_means(train, members, k, config.means_per_client, sub_seed(config, kMultiMeanSeed));
    if (config.noise) {
      NoiseSpec noise = *config.noise;
      noise.seed = sub_seed(config, kNoiseSeed);
      up.share = perturb_counts(up.share, noise);
    }
    up.shares = up.share.entries.size();
  }
  const CommMethod cm = ledger_method(config);
  if (cm == CommMethod::FedNCM || cm == CommMethod::FedCOF) {
    up.bytes = up.shares * d * kBytesPerValue;
  } else {
    up.bytes = client_uplink_bytes(cm, static_cast<std::uint32_t>(up.shares), train.dim, train.num_classes);
  }
  return up;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (synthetic.has_value() == train_path.has_value()) config_error("exactly one of data and synthetic is required");
  if (test_path && !train_path) config_error("a test path needs a train path");
  if (synthetic) {
    if (synthetic->num_classes == 0 || synthetic->dim == 0 || synthetic->train_per_class == 0) {
      config_error("synthetic data needs positive num_classes, dim and train_per_class");
    }
    if (!(synthetic->condition_number >= 1.0)) config_error("synthetic condition_number must be >= 1");
    if (!(synthetic->mean_scale >= 0.0)) config_error("synthetic mean_scale must be >= 0");
  }
  if (num_clients == 0) config_error("num_clients must be >= 1");
  if (alpha.has_value() == assignment_path.has_value()) config_error("exactly one of alpha and assignment is required");
  if (alpha && !(*alpha > 0.0)) config_error("alpha must be > 0");
  if (!(gamma >= 0.0)) config_error("gamma must be >= 0");
  if (lambda && !(*lambda >= 0.0)) config_error("lambda must be >= 0");
  if (means_per_client == 0) config_error("means_per_client must be >= 1");
  if (!(participation > 0.0 && participation <= 1.0)) config_error("participation must be in (0, 1]");
  if (participation * num_clients < 1.0) config_error("participation * num_clients must be >= 1");
  if (max_rounds == 0) config_error("max_rounds must be >= 1");
  const bool mean_method = !uses_oracle_covariances(method) && method != Method::Fed3R;
  if (noise) {
    if (!mean_method) config_error("noise applies to fedncm and fedcof only");
    try {
      noise->validate();
    } catch (const Error& e) {
      config_error(std::string("noise: ") + e.what());
    }
  }
  if (means_per_client != 1 && !mean_method) config_error("means_per_client applies to fedncm and fedcof only");
  if (secure_aggregation) {
    if (method != Method::FedCOF) config_error("secure_aggregation requires method fedcof with variant within");
    if (participation != 1.0) config_error("secure_aggregation requires participation 1");
    if (num_clients < 2) config_error("secure_aggregation requires at least 2 clients");
  }
}

std::uint32_t ExperimentConfig::clients_per_round() const {
  const auto n = static_cast<long long>(std::llround(participation * num_clients));
  return static_cast<std::uint32_t>(std::clamp<long long>(n, 1, num_clients));
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    config_error(std::string("malformed config: ") + e.what());
  }
  check_keys(root, "",
             {"data", "synthetic", "num_clients", "alpha", "assignment", "method", "variant", "gamma", "lambda",
              "means_per_client", "participation", "max_rounds", "noise", "secure_aggregation", "insufficient_means",
              "evaluate_each_round", "seed"});

  ExperimentConfig c;
  if (root.contains("data")) {
    const json& data = root["data"];
    check_keys(data, "data", {"train", "test"});
    c.train_path = resolve(base_dir, get<std::string>(data, "train", "data."));
    if (data.contains("test")) c.test_path = resolve(base_dir, get<std::string>(data, "test", "data."));
  }
  if (root.contains("synthetic")) {
    const json& s = root["synthetic"];
    check_keys(s, "synthetic",
               {"num_classes", "dim", "train_per_class", "test_per_class", "condition_number", "mean_scale", "seed"});
    SyntheticDataConfig syn;
    if (s.contains("num_classes")) syn.num_classes = get<std::uint32_t>(s, "num_classes", "synthetic.");
    if (s.contains("dim")) syn.dim = get<std::uint32_t>(s, "dim", "synthetic.");
    if (s.contains("train_per_class")) syn.train_per_class = get<std::size_t>(s, "train_per_class", "synthetic.");
    if (s.contains("test_per_class")) syn.test_per_class = get<std::size_t>(s, "test_per_class", "synthetic.");
    if (s.contains("condition_number")) syn.condition_number = get<double>(s, "condition_number", "synthetic.");
    if (s.contains("mean_scale")) syn.mean_scale = get<double>(s, "mean_scale", "synthetic.");
    if (s.contains("seed")) syn.seed = get<std::uint64_t>(s, "seed", "synthetic.");
    c.synthetic = syn;
  }
  c.num_clients = get<std::uint32_t>(root, "num_clients", "");
  if (root.contains("alpha")) c.alpha = get<double>(root, "alpha", "");
  if (root.contains("assignment")) c.assignment_path = resolve(base_dir, get<std::string>(root, "assignment", ""));

  const std::string method = root.contains("method") ? get<std::string>(root, "method", "") : "fedcof";
  const std::string variant = root.contains("variant") ? get<std::string>(root, "variant", "") : "within";
  try {
    const Method base = parse_method(method);
    if (base != Method::FedNCM && base != Method::Fed3R && base != Method::FedCOF && base != Method::FedCOFOracle) {
      config_error("method must be one of fedncm, fed3r, fedcof, fedcof-oracle (use variant for ablations)");
    }
    const ScatterVariant v = parse_variant(variant);
    if ((base == Method::FedNCM || base == Method::Fed3R) && v != ScatterVariant::WithinOnly) {
      config_error("variant applies to fedcof and fedcof-oracle only");
    }
    c.method = (base == Method::FedNCM || base == Method::Fed3R) ? base : with_variant(base, v);
  } catch (const Error& e) {
    if (e.code() == "invalid_config") throw;
    config_error(e.what());
  }

  if (root.contains("gamma")) c.gamma = get<double>(root, "gamma", "");
  if (root.contains("lambda") && !root["lambda"].is_null()) c.lambda = get<double>(root, "lambda", "");
  if (root.contains("means_per_client")) c.means_per_client = get<std::uint32_t>(root, "means_per_client", "");
  if (root.contains("participation")) c.participation = get<double>(root, "participation", "");
  if (root.contains("max_rounds")) c.max_rounds = get<std::uint32_t>(root, "max_rounds", "");
  if (root.contains("noise") && !root["noise"].is_null()) {
    const json& n = root["noise"];
    check_keys(n, "noise", {"kind", "epsilon"});
    NoiseSpec spec;
    try {
      spec.kind = parse_noise(get<std::string>(n, "kind", "noise."));
    } catch (const Error& e) {
      if (e.code() == "invalid_config") throw;
      config_error(e.what());
    }
    spec.epsilon = get<double>(n, "epsilon", "noise.");
    c.noise = spec;
  }
  if (root.contains("secure_aggregation")) c.secure_aggregation = get<bool>(root, "secure_aggregation", "");
  if (root.contains("insufficient_means")) {
    const auto policy = get<std::string>(root, "insufficient_means", "");
    if (policy == "error") {
      c.insufficient_means = InsufficientMeans::Error;
    } else if (policy == "shrinkage") {
      c.insufficient_means = InsufficientMeans::Shrinkage;
    } else {
      config_error("insufficient_means must be 'error' or 'shrinkage'");
    }
  }
  if (root.contains("evaluate_each_round")) c.evaluate_each_round = get<bool>(root, "evaluate_each_round", "");
  if (root.contains("seed")) c.seed = get<std::uint64_t>(root, "seed", "");
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("io_error", "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string config_to_json(const ExperimentConfig& c) {
  json root;
  if (c.train_path) {
    root["data"]["train"] = c.train_path->string();
    if (c.test_path) root["data"]["test"] = c.test_path->string();
  }
  if (c.synthetic) {
    const auto& s = *c.synthetic;
    root["synthetic"] = {{"num_classes", s.num_classes},      {"dim", s.dim},
                         {"train_per_class", s.train_per_class}, {"test_per_class", s.test_per_class},
                         {"condition_number", s.condition_number}, {"mean_scale", s.mean_scale},
                         {"seed", s.seed}};
  }
  root["num_clients"] = c.num_clients;
  if (c.alpha) root["alpha"] = *c.alpha;
  if (c.assignment_path) root["assignment"] = c.assignment_path->string();
  const Method base =
      uses_oracle_covariances(c.method) ? Method::FedCOFOracle : (uses_estimated_covariances(c.method) ? Method::FedCOF : c.method);
  root["method"] = std::string(method_name(base));
  root["variant"] = std::string(variant_name(variant_of(c.method)));
  root["gamma"] = c.gamma;
  if (c.lambda) root["lambda"] = *c.lambda;
  root["means_per_client"] = c.means_per_client;
  root["participation"] = c.participation;
  root["max_rounds"] = c.max_rounds;
  if (c.noise) root["noise"] = {{"kind", std::string(noise_name(c.noise->kind))}, {"epsilon", c.noise->epsilon}};
  root["secure_aggregation"] = c.secure_aggregation;
  root["insufficient_means"] = c.insufficient_means == InsufficientMeans::Error ? "error" : "shrinkage";
  root["evaluate_each_round"] = c.evaluate_each_round;
  root["seed"] = c.seed;
  return root.dump(2);
}

std::vector<std::vector<ClientId>> participation_schedule(std::uint32_t num_clients, std::uint32_t per_round,
                                                          std::uint32_t max_rounds, std::uint64_t seed) {
  if (num_clients == 0 || per_round == 0 || per_round > num_clients) {
    fail("invalid_argument", "participants per round must be in [1, num_clients]");
  }
  std::vector<std::vector<ClientId>> schedule;
  std::vector<bool> seen(num_clients, false);
  std::uint32_t covered = 0;
  std::vector<ClientId> pool(num_clients);
  for (std::uint32_t r = 0; r < max_rounds && covered < num_clients; ++r) {
    std::iota(pool.begin(), pool.end(), ClientId{0});
    Rng rng = make_rng(seed, {stream::kSchedule, r});
    // Partial Fisher-Yates: the first per_round slots are a uniform subset.
    for (std::uint32_t i = 0; i < per_round; ++i) {
      std::uniform_int_distribution<std::uint32_t> pick(i, num_clients - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    std::vector<ClientId> round(pool.begin(), pool.begin() + per_round);
    std::sort(round.begin(), round.end());
    for (ClientId k : round) {
      if (!seen[k]) {
        seen[k] = true;
        ++covered;
      }
    }
    schedule.push_back(std::move(round));
  }
  return schedule;
}

std::vector<RoundLog> run_rounds(UploadAccumulator& acc, const std::vector<std::vector<ClientId>>& schedule,
                                 std::uint32_t num_clients, const UploadFn& upload, const RoundHook& hook) {
  std::vector<RoundLog> logs;
  for (const auto& participants : schedule) {
    if (num_clients != 0 && acc.size() >= num_clients) break;
    RoundLog log;
    log.round = acc.round() + 1;
    for (ClientId k : participants) {
      if (k >= num_clients) fail("invalid_argument", "schedule names client " + std::to_string(k) + " outside the federation");
      if (acc.seen(k)) {
        ++log.returning_clients;
        continue;
      }
      ClientUpload up;
      try {
        up = upload(k);
      } catch (const Error& e) {
        fail(e.code(), "round " + std::to_string(log.round) + ", client " + std::to_string(k) + ": " + e.what());
      }
      log.uplink_bytes += up.bytes;
      acc.submit(k, std::move(up));
      log.new_clients.push_back(k);
    }
    log.coverage = static_cast<double>(acc.size()) / static_cast<double>(num_clients);
    if (hook) log.accuracy = hook(acc);
    acc.advance_round();
    logs.push_back(std::move(log));
  }
  return logs;
}

ExperimentInputs prepare_inputs(const ExperimentConfig& config) {
  config.validate();
  ExperimentInputs in;
  if (config.synthetic) {
    const auto& s = *config.synthetic;
    SyntheticSpec spec = anisotropic_benchmark(s.num_classes, s.dim, s.train_per_class, s.condition_number,
                                               s.mean_scale, s.seed);
    in.train = generate_synthetic(spec);
    if (s.test_per_class > 0) {
      spec.samples_per_class.assign(s.num_classes, s.test_per_class);
      spec.seed = derive_seed(s.seed, {stream::kTest});
      in.test = generate_synthetic(spec);
    }
  } else {
    in.train = read_dataset(*config.train_path);
    if (config.test_path) in.test = read_dataset(*config.test_path);
  }
  if (in.test && (in.test->dim != in.train.dim || in.test->num_classes != in.train.num_classes)) {
    fail("dimension_mismatch", "train and test datasets disagree on dimension or class count");
  }
  if (config.alpha) {
    in.assignment = dirichlet_partition(in.train, config.num_clients, *config.alpha, sub_seed(config, kPartitionSeed));
  } else {
    in.assignment = load_assignment(*config.assignment_path);
    check_paired(in.assignment, in.train);
    if (in.assignment.num_clients != config.num_clients) {
      fail("invalid_config", "assignment has " + std::to_string(in.assignment.num_clients) +
                                 " clients but num_clients is " + std::to_string(config.num_clients));
    }
  }
  return in;
}

ClassifierWeights solve_uploads(const ExperimentConfig& config, const std::vector<ClientUpload>& uploads,
                                std::uint32_t dim, std::uint32_t num_classes) {
  std::vector<ClientShare> shares;
  for (const auto& u : uploads) shares.push_back(u.share);
  if (shares.empty()) fail("empty_federation", "no client uploaded statistics");

  ClassifierWeights w;
  if (config.method == Method::Fed3R) {
    std::vector<ClientSecondOrder> second;
    for (const auto& u : uploads) second.push_back(*u.second);
    const GramAggregate agg = aggregate_gram(second);
    const double lambda = config.lambda ? *config.lambda : default_ridge_lambda(agg.gram);
    w = ridge_solve(agg.gram, agg.label_sums, lambda);
  } else if (config.method == Method::FedNCM) {
    w = fedncm_weights(aggregate_means(shares));
  } else if (config.secure_aggregation) {
    const SecureConfig secure{sub_seed(config, kMaskSeed), 1.0};
    const PhaseOneResult p1 = secure_phase1(shares, secure);
    const PhaseTwoResult p2 = secure_phase2(shares, p1.broadcast, config.gamma, secure, config.insufficient_means);
    w = solve_and_normalize(p2.g_hat, build_B(p1.broadcast.means));
  } else if (uses_oracle_covariances(config.method)) {
    std::vector<ClientOracleStats> stats;
    for (const auto& u : uploads) stats.push_back(*u.oracle);
    const GlobalMeans g = aggregate_means(shares);
    const CovarianceEstimate covs = aggregate_oracle_covariances(stats, config.gamma);
    w = solve_and_normalize(build_G_variant(g, covs, variant_of(config.method)), build_B(g));
  } else {
    const GlobalMeans g = aggregate_means(shares);
    const CovarianceEstimate covs = estimate_covariances(shares, g, config.gamma, config.insufficient_means);
    w = solve_and_normalize(build_G_variant(g, covs, variant_of(config.method)), build_B(g));
  }
  w.method = config.method;
  if (config.method != Method::Fed3R && config.method != Method::FedNCM) w.solve.regularization = config.gamma;
  if (w.dim() != dim || w.num_classes() != num_classes) fail("dimension_mismatch", "solved weights have the wrong shape");
  return w;
}

ExperimentResult run_experiment(const ExperimentConfig& config) { return run_experiment(config, prepare_inputs(config)); }

ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentInputs& inputs) {
  config.validate();
  const FeatureDataset& train = inputs.train;
  train.validate();
  check_paired(inputs.assignment, train);
  if (inputs.assignment.num_clients != config.num_clients) {
    fail("invalid_config", "assignment client count differs from num_clients");
  }
  const auto members = inputs.assignment.members();

  UploadAccumulator acc;
  const UploadFn upload = [&](ClientId k) { return make_upload(config, train, members[k], k); };
  RoundHook hook;
  if (config.evaluate_each_round && inputs.test) {
    hook = [&](const UploadAccumulator& a) -> std::optional<double> {
      try {
        return evaluate(solve_uploads(config, a.payloads(), train.dim, train.num_classes), *inputs.test).accuracy;
      } catch (const Error&) {
        return std::nullopt;
      }
    };
  }
  const auto schedule = participation_schedule(config.num_clients, config.clients_per_round(), config.max_rounds,
                                               sub_seed(config, kScheduleSeed));

  ExperimentResult result;
  ExperimentReport& rep = result.report;
  rep.rounds = run_rounds(acc, schedule, config.num_clients, upload, hook);
  rep.warnings = acc.warnings();
  const auto uploads = acc.payloads();

  result.weights = solve_uploads(config, uploads, train.dim, train.num_classes);
  if (inputs.test) result.evaluation = evaluate(result.weights, *inputs.test);

  rep.method = config.secure_aggregation ? "fedcof-secure" : std::string(method_name(config.method));
  rep.dataset_hash = dataset_hash(train);
  rep.num_clients = config.num_clients;
  rep.dim = train.dim;
  rep.num_classes = train.num_classes;
  for (const auto& u : uploads) rep.total_shares += u.shares;
  for (const auto& r : rep.rounds) rep.uplink_bytes += r.uplink_bytes;
  rep.coverage = rep.rounds.empty() ? 0.0 : rep.rounds.back().coverage;
  rep.rounds_to_coverage = rep.coverage >= 1.0 ? rep.rounds.back().round : 0;
  if (rep.coverage < 1.0) {
    rep.warnings.push_back("coverage " + format_double(rep.coverage) + " after " + std::to_string(rep.rounds.size()) +
                           " rounds; classifier built from the clients seen");
  }
  rep.condition_number = result.weights.solve.condition_number;
  if (result.evaluation) rep.accuracy = result.evaluation->accuracy;

  const CommInputs inputs_seen{rep.total_shares, static_cast<std::uint32_t>(uploads.size()), train.dim, train.num_classes};
  result.ledger = comm_cost({ledger_method(config)}, inputs_seen);
  rep.closed_form_bytes = result.ledger.entries.front().total_bytes;
  for (const auto& u : uploads) result.ledger.entries.front().per_client.push_back(u.bytes);
  if (rep.closed_form_bytes != rep.uplink_bytes) {
    fail("ledger_mismatch", "round uplink bytes " + std::to_string(rep.uplink_bytes) + " differ from closed form " +
                                std::to_string(rep.closed_form_bytes));
  }
  return result;
}

std::string report_text(const std::vector<ExperimentReport>& reports) {
  std::ostringstream os;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    if (i > 0) os << '\n';
    os << "method=" << r.method << '\n'
       << "dataset_hash=" << format_hash(r.dataset_hash) << '\n'
       << "clients=" << r.num_clients << '\n'
       << "dim=" << r.dim << '\n'
       << "classes=" << r.num_classes << '\n'
       << "total_shares=" << r.total_shares << '\n'
       << "uplink_bytes=" << r.uplink_bytes << '\n'
       << "uplink_mb=" << format_megabytes(r.uplink_bytes) << '\n'
       << "closed_form_bytes=" << r.closed_form_bytes << '\n'
       << "rounds=" << r.rounds.size() << '\n'
       << "rounds_to_coverage=" << r.rounds_to_coverage << '\n'
       << "coverage=" << format_double(r.coverage) << '\n'
       << "condition_number=" << format_general(r.condition_number) << '\n'
       << "accuracy=" << (r.accuracy ? format_double(*r.accuracy) : std::string("na")) << '\n';
    for (const auto& w : r.warnings) os << "warning=" << w << '\n';
  }
  return os.str();
}

std::string report_csv(const std::vector<ExperimentReport>& reports) {
  std::ostringstream os;
  os << "method,dataset_hash,clients,dim,classes,total_shares,uplink_bytes,uplink_mb,closed_form_bytes,rounds,"
        "rounds_to_coverage,coverage,condition_number,accuracy\n";
  for (const auto& r : reports) {
    os << r.method << ',' << format_hash(r.dataset_hash) << ',' << r.num_clients << ',' << r.dim << ','
       << r.num_classes << ',' << r.total_shares << ',' << r.uplink_bytes << ',' << format_megabytes(r.uplink_bytes)
       << ',' << r.closed_form_bytes << ',' << r.rounds.size() << ',' << r.rounds_to_coverage << ','
       << format_double(r.coverage) << ',' << format_general(r.condition_number) << ','
       << (r.accuracy ? format_double(*r.accuracy) : std::string()) << '\n';
  }
  return os.str();
}

std::string report_to_json(const ExperimentReport& r) {
  json rounds = json::array();
  for (const auto& log : r.rounds) {
    json j = {{"round", log.round}, {"new_clients", log.new_clients},
              {"returning_clients", log.returning_clients}, {"coverage", log.coverage},
              {"uplink_bytes", log.uplink_bytes}};
    j["accuracy"] = log.accuracy ? json(*log.accuracy) : json(nullptr);
    rounds.push_back(std::move(j));
  }
  json root = {{"method", r.method},
               {"dataset_hash", format_hash(r.dataset_hash)},
               {"num_clients", r.num_clients},
               {"dim", r.dim},
               {"num_classes", r.num_classes},
               {"total_shares", r.total_shares},
               {"uplink_bytes", r.uplink_bytes},
               {"closed_form_bytes", r.closed_form_bytes},
               {"rounds_to_coverage", r.rounds_to_coverage},
               {"coverage", r.coverage},
               {"condition_number", r.condition_number},
               {"rounds", rounds},
               {"warnings", r.warnings}};
  root["accuracy"] = r.accuracy ? json(*r.accuracy) : json(nullptr);
  return root.dump(2);
}

ExperimentReport report_from_json(std::string_view text) {
  ExperimentReport r;
  try {
    const json root = json::parse(text);
    r.method = root.at("method").get<std::string>();
    r.dataset_hash = std::stoull(root.at("dataset_hash").get<std::string>(), nullptr, 16);
    r.num_clients = root.at("num_clients").get<std::uint32_t>();
    r.dim = root.at("dim").get<std::uint32_t>();
    r.num_classes = root.at("num_classes").get<std::uint32_t>();
    r.total_shares = root.at("total_shares").get<std::uint64_t>();
    r.uplink_bytes = root.at("uplink_bytes").get<std::uint64_t>();
    r.closed_form_bytes = root.at("closed_form_bytes").get<std::uint64_t>();
    r.rounds_to_coverage = root.at("rounds_to_coverage").get<std::uint32_t>();
    r.coverage = root.at("coverage").get<double>();
    r.condition_number = root.at("condition_number").get<double>();
    if (!root.at("accuracy").is_null()) r.accuracy = root.at("accuracy").get<double>();
    for (const auto& j : root.at("rounds")) {
      RoundLog log;
      log.round = j.at("round").get<std::uint32_t>();
      log.new_clients = j.at("new_clients").get<std::vector<ClientId>>();
      log.returning_clients = j.at("returning_clients").get<std::uint32_t>();
      log.coverage = j.at("coverage").get<double>();
      log.uplink_bytes = j.at("uplink_bytes").get<std::uint64_t>();
      if (!j.at("accuracy").is_null()) log.accuracy = j.at("accuracy").get<double>();
      r.rounds.push_back(std::move(log));
    }
    r.warnings = root.at("warnings").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail("invalid_report", std::string("malformed report: ") + e.what());
  } catch (const std::invalid_argument&) {
    fail("invalid_report", "malformed dataset hash");
  }
  return r;
}

}  // namespace fedcof
