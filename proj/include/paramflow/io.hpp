#pragma once

// JSON serialization of maps, generators and experiment configs; CSV output
// with atomic temp-then-rename writes.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paramflow/flow.hpp"
#include "paramflow/generator.hpp"
#include "paramflow/rkhs.hpp"
#include "paramflow/targets.hpp"
#include "paramflow/trainer.hpp"

namespace paramflow {

using json = nlohmann::json;

constexpr int kFormatVersion = 1;

// ---------------------------------------------------------------------------
// Files

/// Writes through `<path>.tmp` and renames, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + tmp.string() + " for writing");
    body(os);
    os.flush();
    if (!os) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, [&](std::ostream& os) { os << text; });
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path.string());
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

/// Shortest text that reads back to the same double; "nan"/"inf" spelled out.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Feature map and generator blobs

template <typename T>
json to_json(const FeatureMap<T>& map) {
  return {{"format", "paramflow.feature_map"},
          {"version", kFormatVersion},
          {"mode", map.mode() == FeatureMode::identity ? "identity" : "network"},
          {"widths", map.widths()},
          {"seed", map.seed()},
          {"fan_in_scaling", map.fan_in_scaling()}};
}

namespace detail {

inline void check_version(const json& j, const char* format) {
  if (j.value("format", std::string()) != format) throw ConfigError(std::string("expected a ") + format + " blob");
  if (j.value("version", 0) != kFormatVersion) throw ConfigError(std::string(format) + ": unsupported version");
}

template <typename V>
V get_or(const json& j, const char* key, V fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

template <typename V>
V get_req(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("config is missing required field '") + key + "'");
  try {
    return j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw ConfigError("unknown field '" + item.key() + "' in " + where);
  }
}

}  // namespace detail

template <typename T = double>
FeatureMap<T> feature_map_from_json(const json& j) {
  detail::check_version(j, "paramflow.feature_map");
  const auto widths = detail::get_req<std::vector<long>>(j, "widths");
  if (widths.size() < 2) throw ConfigError("feature map blob needs at least two widths");
  if (detail::get_req<std::string>(j, "mode") == "identity") return FeatureMap<T>::identity(widths.front());
  std::vector<long> hidden(widths.begin() + 1, widths.end() - 1);
  return FeatureMap<T>::network(widths.front(), hidden, widths.back(), detail::get_req<std::uint64_t>(j, "seed"),
                                detail::get_or<bool>(j, "fan_in_scaling", false));
}

inline json generator_to_json(const Generator<double>& gen, const VectorX& theta, std::uint64_t seed) {
  detail::require_dim(theta.size(), gen.param_count(), "generator_to_json");
  return {{"format", "paramflow.generator"},
          {"version", kFormatVersion},
          {"mode", gen.mode() == GeneratorMode::constant ? "constant" : "mlp"},
          {"widths", gen.widths()},
          {"seed", seed},
          {"theta", std::vector<double>(theta.data(), theta.data() + theta.size())}};
}

struct GeneratorBlob {
  Generator<double> gen;
  VectorX theta;
  std::uint64_t seed = 0;
};

inline GeneratorBlob generator_from_json(const json& j) {
  detail::check_version(j, "paramflow.generator");
  const auto widths = detail::get_req<std::vector<long>>(j, "widths");
  GeneratorBlob blob;
  if (detail::get_req<std::string>(j, "mode") == "constant") {
    if (widths.size() != 2) throw ConfigError("constant generator blob needs widths [latent, d]");
    blob.gen = Generator<double>::constant(widths.back(), widths.front());
  } else {
    blob.gen = Generator<double>::mlp(widths);
  }
  const auto theta = detail::get_req<std::vector<double>>(j, "theta");
  blob.theta = Eigen::Map<const VectorX>(theta.data(), static_cast<long>(theta.size()));
  detail::require_dim(blob.theta.size(), blob.gen.param_count(), "generator blob theta");
  blob.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
  return blob;
}

// ---------------------------------------------------------------------------
// Experiment config

enum class ExperimentMode { flow, gan, functional };

struct FeatureMapSpec {
  FeatureMode mode = FeatureMode::network;
  long input_dim = 2;
  std::vector<long> hidden{512, 512, 512};
  long feature_dim = 512;
  bool fan_in_scaling = false;
  std::uint64_t seed = 0;

  template <typename T>
  FeatureMap<T> build() const {
    if (mode == FeatureMode::identity) return FeatureMap<T>::identity(input_dim);
    return FeatureMap<T>::network(input_dim, hidden, feature_dim, seed, fan_in_scaling);
  }
};

struct GeneratorSpec {
  GeneratorMode mode = GeneratorMode::mlp;
  std::vector<long> widths{256, 128, 2};
  std::uint64_t init_seed = 0;
  std::string theta_file;  // optional snapshot to start from

  Generator<double> build() const {
    if (mode == GeneratorMode::constant) return Generator<double>::constant(widths.back(), widths.front());
    return Generator<double>::mlp(widths);
  }
};

struct FunctionalConfig {
  std::string kind = "potential";  // potential | interaction | entropy | mmd_to_target
  double alpha = 1.0;
  double beta = 1.0;
  double eps = 1e-3;
  long iterations = 100;
  long latent_batch = 256;
  long target_batch = 512;
  std::string entropy_f = "square";  // square: f(s) = s^2 / 2;  softplus: log(1 + e^s)
  double grid_lo = -3.0;
  double grid_hi = 3.0;
  long grid_n = 21;
  std::uint64_t seed = 0;  // random V, f, g and latent batch
};

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::flow;
  std::uint64_t seed = 0;
  bool use_float = false;
  FeatureMapSpec feature_map;
  GeneratorSpec generator;
  MixtureTarget target;
  std::uint64_t target_seed = 0;
  FlowConfig flow;
  GanConfig gan;
  FunctionalConfig functional;
  std::string out_dir = "out";
  long snapshot_every = 0;
};

/// Component seed streams derived from the master seed.
enum SeedStream : std::uint64_t {
  kSeedFeatureMap = 1,
  kSeedGeneratorInit = 2,
  kSeedLatent = 3,
  kSeedTarget = 4,
  kSeedEval = 5,
  kSeedProbe = 6,
  kSeedFunctional = 7,
};

namespace detail {

inline StepSchedule parse_schedule(const std::string& s) {
  if (s == "constant") return StepSchedule::constant;
  if (s == "inv_sqrt") return StepSchedule::inv_sqrt;
  if (s == "inv") return StepSchedule::inv;
  throw ConfigError("unknown step schedule '" + s + "' (constant | inv_sqrt | inv)");
}

inline MixtureTarget parse_target(const json& j, std::uint64_t seed) {
  const auto kind = get_or<std::string>(j, "kind", "eight_gaussians");
  if (kind == "eight_gaussians") {
    reject_unknown(j, {"kind", "radius", "sigma", "seed"}, "target");
    const double radius = get_or<double>(j, "radius", 2.0);
    return eight_gaussians(radius, get_or<double>(j, "sigma", 0.02 * radius), seed);
  }
  if (kind == "mixture") {
    reject_unknown(j, {"kind", "means", "sigma", "weights", "seed"}, "target");
    const auto means = get_req<std::vector<std::vector<double>>>(j, "means");
    if (means.empty()) throw ConfigError("mixture target needs at least one mean");
    MixtureTarget t;
    t.means.resize(static_cast<long>(means.front().size()), static_cast<long>(means.size()));
    for (std::size_t k = 0; k < means.size(); ++k) {
      if (means[k].size() != means.front().size()) throw ConfigError("mixture means must share a dimension");
      for (std::size_t r = 0; r < means[k].size(); ++r) t.means(static_cast<long>(r), static_cast<long>(k)) = means[k][r];
    }
    t.sigma = get_req<double>(j, "sigma");
    t.weights = get_or<std::vector<double>>(j, "weights",
                                            std::vector<double>(means.size(), 1.0 / static_cast<double>(means.size())));
    t.seed = seed;
    t.validate();
    return t;
  }
  throw ConfigError("unknown target kind '" + kind + "' (eight_gaussians | mixture)");
}

}  // namespace detail

/// Parses and validates an experiment config. `seed_override` replaces the
/// master seed before any component seed is derived.
inline ExperimentConfig parse_experiment(const json& j, std::optional<std::uint64_t> seed_override = std::nullopt) {
  using detail::get_or;
  using detail::get_req;
  detail::reject_unknown(j, {"mode", "seed", "precision", "feature_map", "generator", "target", "flow", "gan",
                             "functional", "output", "comment"},
                         "config");
  ExperimentConfig c;
  const auto mode = get_req<std::string>(j, "mode");
  if (mode == "flow") {
    c.mode = ExperimentMode::flow;
  } else if (mode == "gan") {
    c.mode = ExperimentMode::gan;
  } else if (mode == "functional") {
    c.mode = ExperimentMode::functional;
  } else {
    throw ConfigError("unknown mode '" + mode + "' (flow | gan | functional)");
  }
  c.seed = seed_override ? *seed_override : get_req<std::uint64_t>(j, "seed");
  const auto precision = get_or<std::string>(j, "precision", "double");
  if (precision != "double" && precision != "float") throw ConfigError("precision must be 'double' or 'float'");
  c.use_float = precision == "float";
  auto stream = [&](SeedStream s) { return detail::derive_seed(c.seed, s); };

  const json fm = j.value("feature_map", json::object());
  detail::reject_unknown(fm, {"mode", "input_dim", "hidden", "feature_dim", "fan_in_scaling", "seed"}, "feature_map");
  const auto fm_mode = get_or<std::string>(fm, "mode", "network");
  if (fm_mode != "network" && fm_mode != "identity") throw ConfigError("feature_map.mode must be network or identity");
  c.feature_map.mode = fm_mode == "identity" ? FeatureMode::identity : FeatureMode::network;
  c.feature_map.input_dim = get_or<long>(fm, "input_dim", 2);
  c.feature_map.hidden = get_or<std::vector<long>>(fm, "hidden", {512, 512, 512});
  c.feature_map.feature_dim = get_or<long>(fm, "feature_dim", 512);
  c.feature_map.fan_in_scaling = get_or<bool>(fm, "fan_in_scaling", false);
  c.feature_map.seed = get_or<std::uint64_t>(fm, "seed", stream(kSeedFeatureMap));

  const json gj = j.value("generator", json::object());
  detail::reject_unknown(gj, {"mode", "widths", "init_seed", "theta_file"}, "generator");
  const auto g_mode = get_or<std::string>(gj, "mode", "mlp");
  if (g_mode != "mlp" && g_mode != "constant") throw ConfigError("generator.mode must be mlp or constant");
  c.generator.mode = g_mode == "constant" ? GeneratorMode::constant : GeneratorMode::mlp;
  c.generator.widths = get_or<std::vector<long>>(gj, "widths", {256, 128, 2});
  c.generator.init_seed = get_or<std::uint64_t>(gj, "init_seed", stream(kSeedGeneratorInit));
  c.generator.theta_file = get_or<std::string>(gj, "theta_file", "");
  if (!c.generator.theta_file.empty() && !std::filesystem::exists(c.generator.theta_file)) {
    throw ConfigError("generator.theta_file does not exist: " + c.generator.theta_file);
  }
  if (c.generator.widths.size() < 2) throw ConfigError("generator.widths needs at least [latent, d]");
  if (c.generator.widths.back() != c.feature_map.input_dim) {
    throw ConfigError("generator output dimension must equal feature_map.input_dim");
  }

  const json tj = j.value("target", json::object());
  c.target_seed = get_or<std::uint64_t>(tj, "seed", stream(kSeedTarget));
  c.target = detail::parse_target(tj, c.target_seed);
  if (c.target.dim() != c.feature_map.input_dim) throw ConfigError("target dimension must equal feature_map.input_dim");

  const json out = j.value("output", json::object());
  detail::reject_unknown(out, {"dir", "snapshot_every"}, "output");
  c.out_dir = get_or<std::string>(out, "dir", "out");
  c.snapshot_every = get_or<long>(out, "snapshot_every", 0);

  if (c.mode == ExperimentMode::flow) {
    const json fj = j.value("flow", json::object());
    detail::reject_unknown(fj,
                           {"alpha", "beta", "beta_rule", "schedule", "step", "target_batch", "latent_batch",
                            "iterations", "tau", "resample_latent", "f_tolerance", "halt_on_stall", "backtrack",
                            "max_backtracks", "rank_threshold", "compute_spectrum", "lipschitz_C", "estimate_C",
                            "probe_point_pairs", "probe_theta_pairs", "probe_latent", "record_wallclock"},
                           "flow");
    FlowConfig& f = c.flow;
    f.alpha = get_or<double>(fj, "alpha", f.alpha);
    f.beta = get_or<double>(fj, "beta", f.beta);
    const auto rule = get_or<std::string>(fj, "beta_rule", "fixed");
    if (rule == "fixed") {
      f.beta_rule = BetaRule::fixed;
    } else if (rule == "adaptive") {
      f.beta_rule = BetaRule::adaptive;
    } else {
      throw ConfigError("unknown beta_rule '" + rule + "' (fixed | adaptive)");
    }
    f.step.kind = detail::parse_schedule(get_or<std::string>(fj, "schedule", "constant"));
    f.step.c = get_or<double>(fj, "step", f.step.c);
    f.target_batch = get_or<long>(fj, "target_batch", f.target_batch);
    f.latent_batch = get_or<long>(fj, "latent_batch", f.latent_batch);
    f.iterations = get_or<long>(fj, "iterations", f.iterations);
    f.tau = get_or<double>(fj, "tau", f.tau);
    f.resample_latent = get_or<bool>(fj, "resample_latent", f.resample_latent);
    f.f_tolerance = get_or<double>(fj, "f_tolerance", f.f_tolerance);
    f.halt_on_stall = get_or<bool>(fj, "halt_on_stall", f.halt_on_stall);
    f.backtrack = get_or<bool>(fj, "backtrack", f.backtrack);
    f.max_backtracks = get_or<int>(fj, "max_backtracks", f.max_backtracks);
    f.rank_threshold = get_or<double>(fj, "rank_threshold", f.rank_threshold);
    f.compute_spectrum = get_or<bool>(fj, "compute_spectrum", f.compute_spectrum);
    f.lipschitz_C = get_or<double>(fj, "lipschitz_C", f.lipschitz_C);
    f.estimate_C = get_or<bool>(fj, "estimate_C", f.estimate_C);
    f.probe.point_pairs = get_or<long>(fj, "probe_point_pairs", f.probe.point_pairs);
    f.probe.theta_pairs = get_or<long>(fj, "probe_theta_pairs", f.probe.theta_pairs);
    f.probe.latent_probes = get_or<long>(fj, "probe_latent", f.probe.latent_probes);
    f.probe.seed = stream(kSeedProbe);
    f.latent_seed = stream(kSeedLatent);
    f.snapshot_every = c.snapshot_every;
    f.record_wallclock = get_or<bool>(fj, "record_wallclock", false);
    f.validate();
  } else if (c.mode == ExperimentMode::gan) {
    const json gj2 = j.value("gan", json::object());
    detail::reject_unknown(gj2,
                           {"alpha", "n_critic", "batch", "iterations", "lr_critic", "lr_generator", "rho", "eps_num",
                            "ridge_beta", "split_batch", "resample_critic_batches", "eval_every", "eval_samples",
                            "occupancy_samples", "record_wallclock"},
                           "gan");
    GanConfig& g = c.gan;
    g.alpha = get_or<double>(gj2, "alpha", g.alpha);
    g.n_critic = get_or<long>(gj2, "n_critic", g.n_critic);
    g.batch = get_or<long>(gj2, "batch", g.batch);
    g.iterations = get_or<long>(gj2, "iterations", g.iterations);
    g.lr_critic = get_or<double>(gj2, "lr_critic", g.lr_critic);
    g.lr_generator = get_or<double>(gj2, "lr_generator", g.lr_generator);
    g.rho = get_or<double>(gj2, "rho", g.rho);
    g.eps_num = get_or<double>(gj2, "eps_num", g.eps_num);
    g.ridge_beta = get_or<double>(gj2, "ridge_beta", g.ridge_beta);
    g.split_batch = get_or<bool>(gj2, "split_batch", g.split_batch);
    g.resample_critic_batches = get_or<bool>(gj2, "resample_critic_batches", g.resample_critic_batches);
    g.eval_every = get_or<long>(gj2, "eval_every", g.eval_every);
    g.eval_samples = get_or<long>(gj2, "eval_samples", g.eval_samples);
    g.occupancy_samples = get_or<long>(gj2, "occupancy_samples", g.occupancy_samples);
    g.record_wallclock = get_or<bool>(gj2, "record_wallclock", false);
    g.latent_seed = stream(kSeedLatent);
    g.target_seed = c.target_seed;
    g.eval_seed = stream(kSeedEval);
    g.snapshot_every = c.snapshot_every;
    g.validate();
  } else {
    const json fj = j.value("functional", json::object());
    detail::reject_unknown(fj,
                           {"kind", "alpha", "beta", "eps", "iterations", "latent_batch", "target_batch", "entropy_f",
                            "grid_lo", "grid_hi", "grid_n"},
                           "functional");
    FunctionalConfig& f = c.functional;
    f.kind = get_or<std::string>(fj, "kind", f.kind);
    if (f.kind != "potential" && f.kind != "interaction" && f.kind != "entropy" && f.kind != "mmd_to_target") {
      throw ConfigError("unknown functional kind '" + f.kind + "' (potential | interaction | entropy | mmd_to_target)");
    }
    f.alpha = get_or<double>(fj, "alpha", f.alpha);
    f.beta = get_or<double>(fj, "beta", f.beta);
    f.eps = get_or<double>(fj, "eps", f.eps);
    f.iterations = get_or<long>(fj, "iterations", f.iterations);
    f.latent_batch = get_or<long>(fj, "latent_batch", f.latent_batch);
    f.target_batch = get_or<long>(fj, "target_batch", f.target_batch);
    f.entropy_f = get_or<std::string>(fj, "entropy_f", f.entropy_f);
    if (f.entropy_f != "square" && f.entropy_f != "softplus") throw ConfigError("entropy_f must be square or softplus");
    f.grid_lo = get_or<double>(fj, "grid_lo", f.grid_lo);
    f.grid_hi = get_or<double>(fj, "grid_hi", f.grid_hi);
    f.grid_n = get_or<long>(fj, "grid_n", f.grid_n);
    f.seed = stream(kSeedFunctional);
    RegularizationParams{f.alpha, f.beta}.validate();
    if (!(f.eps > 0) || f.iterations < 0 || f.latent_batch < 1 || f.target_batch < 1) {
      throw ConfigError("functional: need eps > 0, iterations >= 0 and positive batch sizes");
    }
  }
  if (c.snapshot_every < 0) throw ConfigError("output.snapshot_every must be >= 0");
  return c;
}

// ---------------------------------------------------------------------------
// CSV

inline const std::vector<std::string>& flow_csv_columns() {
  static const std::vector<std::string> cols{"iter",  "F",     "mmd",           "mmd_ab",      "lambda_i",
                                             "a",     "chi",   "eps",           "bound",       "rate_residual",
                                             "stepcond_ok", "wallclock_ms", "rate", "alpha", "beta",
                                             "null_ok", "bound_ok", "degenerate", "backtracks"};
  return cols;
}

inline void write_csv_header(std::ostream& os, const std::vector<std::string>& cols) {
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
}

inline void write_flow_csv(std::ostream& os, const std::vector<FlowDiagnostics>& rows) {
  write_csv_header(os, flow_csv_columns());
  for (const auto& r : rows) {
    os << r.iter << ',' << format_double(r.F) << ',' << format_double(r.mmd) << ',' << format_double(r.mmd_ab) << ','
       << format_double(r.lambda_i) << ',' << format_double(r.a) << ',' << format_double(r.chi) << ','
       << format_double(r.eps) << ',' << format_double(r.bound) << ',' << format_double(r.rate_residual) << ','
       << (r.stepcond_ok ? 1 : 0) << ',' << format_double(r.wallclock_ms) << ',' << format_double(r.rate) << ','
       << format_double(r.alpha) << ',' << format_double(r.beta) << ',' << (r.null_ok ? 1 : 0) << ','
       << (r.bound_ok ? 1 : 0) << ',' << (r.degenerate ? 1 : 0) << ',' << r.backtracks << '\n';
  }
}

/// Same leading columns as the flow trajectory, then the critic statistics.
/// Columns the trainer has no value for are written as nan.
inline void write_train_csv(std::ostream& os, const std::vector<TrainRow>& rows) {
  write_csv_header(os, {"iter", "F", "mmd", "mmd_ab", "lambda_i", "a", "chi", "eps", "bound", "rate_residual",
                        "stepcond_ok", "wallclock_ms", "critic_M", "critic_steps", "grad_norm_w", "grad_norm_theta"});
  for (const auto& r : rows) {
    const double F = 0.5 * r.eval_mmd * r.eval_mmd;
    const double mmd_ab = std::sqrt(std::max(0.0, -r.critic_M));
    os << r.iter << ',' << format_double(F) << ',' << format_double(r.eval_mmd) << ','
       << format_double(r.critic_steps > 0 ? mmd_ab : std::nan("")) << ",nan,nan,nan," << format_double(r.eps)
       << ",nan,nan,0," << format_double(r.wallclock_ms) << ','
       << format_double(r.critic_steps > 0 ? r.critic_M : std::nan("")) << ',' << r.critic_steps << ','
       << format_double(r.grad_norm_w) << ',' << format_double(r.grad_norm_theta) << '\n';
  }
}

inline void write_functional_csv(std::ostream& os, const std::vector<FunctionalFlowRow>& rows) {
  write_csv_header(os, {"iter", "value", "rate", "fd_rate", "grad_norm", "eps"});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    const double fd = k + 1 < rows.size() ? (rows[k + 1].value - r.value) / r.eps : std::nan("");
    os << r.iter << ',' << format_double(r.value) << ',' << format_double(r.rate) << ',' << format_double(fd) << ','
       << format_double(r.grad_norm) << ',' << format_double(r.eps) << '\n';
  }
}

inline void write_points_csv(std::ostream& os, const MatrixX& points, const char* source) {
  for (long i = 0; i < points.cols(); ++i) {
    for (long r = 0; r < points.rows(); ++r) os << format_double(points(r, i)) << ',';
    os << source << '\n';
  }
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  long column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<long>(i);
    }
    return -1;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Plain comma-separated table without quoting; throws on ragged rows.
inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(is, line) || line.empty()) throw ConfigError("missing CSV header in " + path.string());
  t.header = split_csv_line(line);
  long lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.header.size()) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(t.header.size()) + " fields, got " + std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

}  // namespace paramflow
