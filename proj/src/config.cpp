#include "emucal/config.hpp"

#include <ctime>
#include <fstream>

namespace emucal {

namespace {

// Typed field access that converts json errors into ConfigError with the
// field path.
template <typename T>
T field_or(const nlohmann::json& j, const std::string& path, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config field '" + (path.empty() ? key : path + "." + key) +
                      "': " + e.what());
  }
}

const nlohmann::json& section(const nlohmann::json& j, const std::string& key) {
  static const nlohmann::json empty = nlohmann::json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw ConfigError("config field '" + key + "': expected a table");
  return j.at(key);
}

NsConfig ns_from_json(const nlohmann::json& j, const std::string& path, const NsConfig& defaults) {
  NsConfig ns = defaults;
  ns.n_live = field_or(j, path, "n_live", ns.n_live);
  ns.tol = field_or(j, path, "tol", ns.tol);
  ns.erf = field_or(j, path, "erf", ns.erf);
  ns.max_iter = field_or(j, path, "max_iter", ns.max_iter);
  ns.seed = field_or<std::uint64_t>(j, path, "seed", ns.seed);
  ns.max_draw_tries = field_or(j, path, "max_draw_tries", ns.max_draw_tries);
  const std::string term = field_or<std::string>(
      j, path, "termination",
      ns.termination == NsConfig::Termination::Paper ? "paper" : "remaining");
  if (term == "paper")
    ns.termination = NsConfig::Termination::Paper;
  else if (term == "remaining")
    ns.termination = NsConfig::Termination::Remaining;
  else
    throw ConfigError("config field '" + path + ".termination': expected 'paper' or 'remaining'");
  return ns;
}

nlohmann::json ns_to_json(const NsConfig& ns, std::uint64_t resolved_seed) {
  return {{"n_live", ns.n_live},
          {"tol", ns.tol},
          {"erf", ns.erf},
          {"max_iter", ns.max_iter},
          {"seed", resolved_seed},
          {"max_draw_tries", ns.max_draw_tries},
          {"termination", ns.termination == NsConfig::Termination::Paper ? "paper" : "remaining"}};
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a table");
  ExperimentConfig cfg;
  cfg.seed = field_or<std::uint64_t>(j, "", "seed", 42);

  const auto& sim = section(j, "simulator");
  cfg.simulator_name = field_or<std::string>(sim, "simulator", "name", "toy");
  cfg.time_steps = field_or(sim, "simulator", "time_steps", 10);
  cfg.delay_per_call = field_or(sim, "simulator", "delay_per_call", 0.0);
  cfg.toy.phi = field_or(sim, "simulator", "phi", 0.1);
  cfg.toy.eta_c = field_or(sim, "simulator", "eta_c", 5.0);

  const auto& prior = section(j, "prior");
  const std::string kind = field_or<std::string>(prior, "prior", "kind", "uniform-box");
  if (kind == "uniform-box") {
    std::vector<double> lo = field_or(prior, "prior", "lower", std::vector<double>{0.0, 0.0});
    std::vector<double> hi = field_or(prior, "prior", "upper", std::vector<double>{15.0, 15.0});
    cfg.prior = PriorSpec::uniform_box(std::move(lo), std::move(hi));
  } else if (kind == "gaussian") {
    std::vector<double> mu = field_or(prior, "prior", "mean", std::vector<double>{});
    std::vector<double> sd = field_or(prior, "prior", "sigma", std::vector<double>{});
    cfg.prior = PriorSpec::gaussian(std::move(mu), std::move(sd));
  } else {
    throw ConfigError("config field 'prior.kind': expected 'uniform-box' or 'gaussian'");
  }

  cfg.truth.theta_star = field_or(j, "", "truth", std::vector<double>{10.0, 10.0});
  cfg.noise_frac = field_or(j, "", "noise_frac", 0.05);
  cfg.scheme = scheme_from_name(field_or<std::string>(j, "", "scheme", "mixed"));
  cfg.n_train = field_or(j, "", "n_train", 2000);
  cfg.k_folds = field_or(j, "", "k_folds", 10);

  const auto& train = section(j, "train");
  cfg.train.epochs = field_or(train, "train", "epochs", 300);
  cfg.train.minibatch = field_or(train, "train", "minibatch", 20);
  cfg.train.complexity_eta = field_or(train, "train", "complexity_eta", 15);
  cfg.train.seed = field_or<std::uint64_t>(train, "train", "seed", 0);
  cfg.train.adam.lr = field_or(train, "train", "lr", 1e-3);
  cfg.train.adam.beta1 = field_or(train, "train", "beta1", 0.9);
  cfg.train.adam.beta2 = field_or(train, "train", "beta2", 0.999);
  cfg.train.adam.eps = field_or(train, "train", "eps", 1e-8);

  cfg.ns_phase1 = ns_from_json(section(j, "ns_phase1"), "ns_phase1", NsConfig{});
  cfg.ns_phase3 = ns_from_json(section(j, "ns_phase3"), "ns_phase3", NsConfig{});
  cfg.verbose = field_or(j, "", "verbose", false);
  return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["simulator"] = {{"name", cfg.simulator_name},
                    {"time_steps", cfg.time_steps},
                    {"delay_per_call", cfg.delay_per_call},
                    {"phi", cfg.toy.phi},
                    {"eta_c", cfg.toy.eta_c}};
  if (cfg.prior.kind == PriorSpec::Kind::UniformBox)
    j["prior"] = {{"kind", "uniform-box"}, {"lower", cfg.prior.lower}, {"upper", cfg.prior.upper}};
  else
    j["prior"] = {{"kind", "gaussian"}, {"mean", cfg.prior.mean}, {"sigma", cfg.prior.sigma}};
  j["truth"] = cfg.truth.theta_star;
  j["noise_frac"] = cfg.noise_frac;
  j["scheme"] = scheme_name(cfg.scheme);
  j["n_train"] = cfg.n_train;
  j["k_folds"] = cfg.k_folds;
  j["train"] = {{"epochs", cfg.train.epochs},
                {"minibatch", cfg.train.minibatch},
                {"complexity_eta", cfg.train.complexity_eta},
                {"seed", cfg.train.seed},
                {"lr", cfg.train.adam.lr},
                {"beta1", cfg.train.adam.beta1},
                {"beta2", cfg.train.adam.beta2},
                {"eps", cfg.train.adam.eps}};
  j["ns_phase1"] = ns_to_json(cfg.ns_phase1, cfg.phase1_seed());
  j["ns_phase3"] = ns_to_json(cfg.ns_phase3, cfg.phase3_seed());
  j["verbose"] = cfg.verbose;
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

std::string now_iso8601() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
  nlohmann::json j;
  j["config_path"] = manifest.config_path;
  j["resolved_config"] = manifest.resolved_config;
  j["output_dir"] = manifest.output_dir;
  j["tool_version"] = manifest.tool_version;
  j["started_at"] = manifest.started_at;
  j["finished_at"] = manifest.finished_at;
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace emucal
