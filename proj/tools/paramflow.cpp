// paramflow: command-line driver for flows, training runs and the property
// suites. Exit codes: 0 ok, 1 configuration / input error, 2 numerical abort,
// 3 verification failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "paramflow/paramflow.hpp"
#include "paramflow/verify.hpp"

namespace fs = std::filesystem;
using namespace paramflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitVerify = 3;

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<long> snapshot_every;
};

ExperimentConfig load_config(const CommonOptions& opt, ExperimentMode expected) {
  if (!fs::exists(opt.config)) throw ConfigError("config file not found: " + opt.config);
  ExperimentConfig cfg = parse_experiment(read_json_file(opt.config), opt.seed);
  if (cfg.mode != expected) throw ConfigError("config mode does not match the command");
  if (!opt.out.empty()) cfg.out_dir = opt.out;
  if (opt.snapshot_every) {
    if (*opt.snapshot_every < 0) throw ConfigError("--snapshot-every must be >= 0");
    cfg.snapshot_every = *opt.snapshot_every;
    cfg.flow.snapshot_every = cfg.snapshot_every;
    cfg.gan.snapshot_every = cfg.snapshot_every;
  }
  return cfg;
}

VectorX initial_theta(const ExperimentConfig& cfg, const Generator<double>& gen) {
  if (cfg.generator.theta_file.empty()) return gen.initial_theta(cfg.generator.init_seed);
  GeneratorBlob blob = generator_from_json(read_json_file(cfg.generator.theta_file));
  if (blob.gen.widths() != gen.widths() || blob.gen.mode() != gen.mode()) {
    throw ConfigError("generator.theta_file architecture does not match generator.widths");
  }
  return blob.theta;
}

json run_header(const ExperimentConfig& cfg, const std::string& mode) {
  json j;
  j["mode"] = mode;
  j["seed"] = cfg.seed;
  j["precision"] = cfg.use_float ? "float" : "double";
  j["feature_map"] = to_json(cfg.feature_map.build<double>());
  j["generator"] = {{"mode", cfg.generator.mode == GeneratorMode::constant ? "constant" : "mlp"},
                    {"widths", cfg.generator.widths},
                    {"init_seed", cfg.generator.init_seed}};
  json means = json::array();
  for (long k = 0; k < cfg.target.components(); ++k) {
    means.push_back(std::vector<double>(cfg.target.means.col(k).data(),
                                        cfg.target.means.col(k).data() + cfg.target.dim()));
  }
  j["target"] = {{"means", means}, {"sigma", cfg.target.sigma}, {"weights", cfg.target.weights},
                 {"seed", cfg.target_seed}};
  return j;
}

void write_snapshots(const fs::path& out, const Generator<double>& gen,
                     const std::vector<std::pair<long, VectorX>>& snaps, std::uint64_t seed) {
  for (const auto& [iter, theta] : snaps) {
    write_text_atomic(out / "snapshots" / ("generator_" + std::to_string(iter) + ".json"),
                      generator_to_json(gen, theta, seed).dump(1) + "\n");
  }
}

int cmd_flow(const CommonOptions& opt, const std::string& dump_operator) {
  const ExperimentConfig cfg = load_config(opt, ExperimentMode::flow);
  const auto map = cfg.feature_map.build<double>();
  const auto gen = cfg.generator.build();
  const VectorX theta0 = initial_theta(cfg, gen);
  TargetSampler target(cfg.target, cfg.target_seed);
  const MatrixX x = target.sample(cfg.flow.target_batch);

  const Trajectory tr = run_flow(map, gen, theta0, x, cfg.flow);
  const fs::path out(cfg.out_dir);
  write_file_atomic(out / "trajectory.csv", [&](std::ostream& os) { write_flow_csv(os, tr.rows); });
  write_snapshots(out, gen, tr.snapshots, cfg.generator.init_seed);
  write_text_atomic(out / "final_generator.json",
                    generator_to_json(gen, tr.final_theta, cfg.generator.init_seed).dump(1) + "\n");

  json run = run_header(cfg, "flow");
  run["stop_reason"] = tr.stop_reason;
  run["aborted"] = tr.aborted;
  run["rows"] = tr.rows.size();
  run["step_bound_C"] = tr.step_bound_C;
  if (tr.lipschitz) {
    const auto& l = *tr.lipschitz;
    run["lipschitz"] = {{"L", l.L},   {"L_tilde", l.L_tilde}, {"mean_D", l.mean_D}, {"mean_D2", l.mean_D2},
                        {"mean_D_tilde", l.mean_D_tilde}, {"C1", l.C1}, {"C2", l.C2}, {"C3", l.C3},
                        {"C4", l.C4}, {"C", l.C}};
  }
  write_text_atomic(out / "run.json", run.dump(2) + "\n");

  if (!dump_operator.empty()) {
    LatentSampler<double> latent(gen.latent_dim(), cfg.flow.latent_seed);
    const OperatorA a = assemble_A(map, gen, tr.final_theta, latent.sample(cfg.flow.latent_batch));
    write_file_atomic(dump_operator, [&](std::ostream& os) { write_operator_csv(os, a); });
    write_file_atomic(dump_operator + ".spectrum.csv",
                      [&](std::ostream& os) { write_spectrum_csv(os, spectrum(a, cfg.flow.rank_threshold)); });
  }
  std::cout << "flow: " << tr.rows.size() << " rows, stop=" << tr.stop_reason << ", F " << tr.rows.front().F
            << " -> " << tr.rows.back().F << "\n";
  if (tr.aborted) {
    std::cerr << "flow aborted: " << tr.stop_reason << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}

template <typename T>
int run_gan(const ExperimentConfig& cfg) {
  const auto map = cfg.feature_map.build<T>();
  const auto gen64 = cfg.generator.build();
  const auto gen = gen64.template cast<T>();
  const VectorX theta0 = initial_theta(cfg, gen64);
  const TrainLog log = train<T>(map, gen, theta0.template cast<T>(), cfg.target, cfg.gan);

  const fs::path out(cfg.out_dir);
  write_file_atomic(out / "trajectory.csv", [&](std::ostream& os) { write_train_csv(os, log.rows); });
  write_snapshots(out, gen64, log.snapshots, cfg.generator.init_seed);
  write_text_atomic(out / "final_generator.json",
                    generator_to_json(gen64, log.final_theta, cfg.generator.init_seed).dump(1) + "\n");
  if (!log.aborted) {
    TargetSampler ref(cfg.target, detail::derive_seed(cfg.gan.eval_seed, 3));
    const MatrixX tx = ref.sample(log.final_samples.cols());
    write_file_atomic(out / "samples_final.csv", [&](std::ostream& os) {
      std::vector<std::string> cols;
      for (long r = 0; r < tx.rows(); ++r) cols.push_back("x" + std::to_string(r));
      cols.emplace_back("source");
      write_csv_header(os, cols);
      write_points_csv(os, tx, "target");
      write_points_csv(os, log.final_samples, "generated");
    });
  }

  json run = run_header(cfg, "gan");
  run["aborted"] = log.aborted;
  run["abort_reason"] = log.abort_reason;
  run["occupancy"] = log.occupancy;
  double first = std::nan(""), at100 = std::nan(""), last = std::nan("");
  for (const auto& r : log.rows) {
    if (std::isnan(r.eval_mmd)) continue;
    if (std::isnan(first)) first = r.eval_mmd;
    if (r.iter == 100) at100 = r.eval_mmd;
    last = r.eval_mmd;
  }
  run["eval_mmd_initial"] = first;
  run["eval_mmd_iter100"] = at100;
  run["eval_mmd_final"] = last;
  write_text_atomic(out / "run.json", run.dump(2) + "\n");

  std::cout << "gan: " << log.rows.size() << " rows, eval mmd " << first << " -> " << last << ", occupancy";
  for (double o : log.occupancy) std::cout << ' ' << o;
  std::cout << "\n";
  if (log.aborted) {
    std::cerr << "gan aborted: " << log.abort_reason << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}

int cmd_gan(const CommonOptions& opt, bool split_batch) {
  ExperimentConfig cfg = load_config(opt, ExperimentMode::gan);
  if (split_batch) cfg.gan.split_batch = true;
  return cfg.use_float ? run_gan<float>(cfg) : run_gan<double>(cfg);
}

FunctionalSpec build_functional(const ExperimentConfig& cfg, const FeatureMap<double>& map) {
  const auto& f = cfg.functional;
  const long m = map.feature_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  if (f.kind == "potential") {
    return PotentialEnergy{RkhsFunction<double>(scale * verify::random_vector(m, detail::derive_seed(f.seed, 1)))};
  }
  if (f.kind == "interaction") {
    return InteractionEnergy{RkhsFunction<double>(scale * verify::random_vector(m, detail::derive_seed(f.seed, 1))),
                             RkhsFunction<double>(scale * verify::random_vector(m, detail::derive_seed(f.seed, 2)))};
  }
  if (f.kind == "entropy") {
    auto [nodes, weights] = uniform_grid(map.input_dim(), f.grid_lo, f.grid_hi, f.grid_n);
    EntropyFunctional e;
    if (f.entropy_f == "square") {
      e.f = [](double s) { return 0.5 * s * s; };
      e.fprime = [](double s) { return s; };
    } else {
      e.f = [](double s) { return s > 30 ? s : std::log1p(std::exp(s)); };
      e.fprime = [](double s) { return 1.0 / (1.0 + std::exp(-s)); };
    }
    e.nodes = std::move(nodes);
    e.weights = std::move(weights);
    return e;
  }
  TargetSampler target(cfg.target, cfg.target_seed);
  return mmd_to_target(map, target.sample(f.target_batch));
}

int cmd_functional(const CommonOptions& opt) {
  const ExperimentConfig cfg = load_config(opt, ExperimentMode::functional);
  const auto map = cfg.feature_map.build<double>();
  const auto gen = cfg.generator.build();
  const auto& f = cfg.functional;
  const FunctionalSpec spec = build_functional(cfg, map);
  LatentSampler<double> latent(gen.latent_dim(), detail::derive_seed(f.seed, 3));
  const MatrixX z = latent.sample(f.latent_batch);
  VectorX final_theta;
  const auto rows = run_functional_flow(spec, map, gen, initial_theta(cfg, gen), z, {f.alpha, f.beta}, f.eps,
                                        f.iterations, &final_theta);
  const fs::path out(cfg.out_dir);
  write_file_atomic(out / "functional.csv", [&](std::ostream& os) { write_functional_csv(os, rows); });
  write_text_atomic(out / "final_generator.json",
                    generator_to_json(gen, final_theta, cfg.generator.init_seed).dump(1) + "\n");
  json run = run_header(cfg, "functional");
  run["functional"] = {{"kind", f.kind}, {"alpha", f.alpha}, {"beta", f.beta}, {"eps", f.eps},
                       {"iterations", f.iterations}};
  write_text_atomic(out / "run.json", run.dump(2) + "\n");
  std::cout << "functional " << f.kind << ": value " << rows.front().value << " -> " << rows.back().value << "\n";
  return kExitOk;
}

int cmd_verify(const std::string& suite) {
  const auto results = verify::run(suite);
  std::size_t failed = 0;
  std::size_t width = 0;
  for (const auto& r : results) width = std::max(width, r.suite.size() + r.name.size() + 2);
  for (const auto& r : results) {
    const std::string label = r.suite + ": " + r.name;
    std::cout << (r.passed ? "PASS  " : "FAIL  ") << label << std::string(width - label.size() + 2, ' ') << r.detail
              << "\n";
    if (!r.passed) ++failed;
  }
  std::cout << results.size() - failed << "/" << results.size() << " checks passed\n";
  return failed == 0 ? kExitOk : kExitVerify;
}

/// Keeps at most `max_points` rows, always including the first and the last.
std::vector<std::size_t> downsample(std::size_t n, std::size_t max_points) {
  std::vector<std::size_t> idx;
  if (n == 0) return idx;
  if (n <= max_points || max_points < 2) {
    for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
    return idx;
  }
  for (std::size_t k = 0; k < max_points; ++k) idx.push_back(k * (n - 1) / (max_points - 1));
  return idx;
}

int cmd_plotdata(const std::string& trajectory, const std::string& out_dir, long max_points, long scatter_points) {
  const CsvTable table = read_csv(trajectory);
  const long c_iter = table.column("iter");
  const long c_mmd = table.column("mmd");
  if (c_iter < 0 || c_mmd < 0) throw ConfigError(trajectory + ": needs iter and mmd columns");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const std::string& v = table.rows[i][static_cast<std::size_t>(c_mmd)];
    char* end = nullptr;
    std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0') throw ConfigError(trajectory + ": malformed mmd value '" + v + "'");
    if (v != "nan") keep.push_back(i);
  }
  const fs::path out(out_dir);
  write_file_atomic(out / "loss_curve.csv", [&](std::ostream& os) {
    os << "iter,mmd\n";
    for (std::size_t k : downsample(keep.size(), static_cast<std::size_t>(max_points))) {
      const auto& row = table.rows[keep[k]];
      os << row[static_cast<std::size_t>(c_iter)] << ',' << row[static_cast<std::size_t>(c_mmd)] << '\n';
    }
  });

  // Scatter files from the generator snapshots next to the trajectory.
  const fs::path run_dir = fs::path(trajectory).parent_path();
  const fs::path run_json = run_dir / "run.json";
  const fs::path snap_dir = run_dir / "snapshots";
  if (!fs::exists(run_json) || !fs::exists(snap_dir)) {
    std::cout << "plot-data: no run.json/snapshots next to the trajectory; scatter files skipped\n";
    return kExitOk;
  }
  const json run = read_json_file(run_json);
  const auto map_dim = run.at("feature_map").at("widths").front().get<long>();
  if (map_dim != 2) {
    std::cout << "plot-data: generator output is " << map_dim << "-dimensional; scatter files skipped\n";
    return kExitOk;
  }
  MixtureTarget target;
  const auto means = run.at("target").at("means").get<std::vector<std::vector<double>>>();
  target.means.resize(2, static_cast<long>(means.size()));
  for (std::size_t k = 0; k < means.size(); ++k) {
    target.means(0, static_cast<long>(k)) = means[k][0];
    target.means(1, static_cast<long>(k)) = means[k][1];
  }
  target.sigma = run.at("target").at("sigma").get<double>();
  target.weights = run.at("target").at("weights").get<std::vector<double>>();
  TargetSampler ts(target, 0);
  const MatrixX tx = ts.sample(scatter_points);
  std::vector<fs::path> snaps;
  for (const auto& e : fs::directory_iterator(snap_dir)) snaps.push_back(e.path());
  std::sort(snaps.begin(), snaps.end());
  for (const auto& path : snaps) {
    const GeneratorBlob blob = generator_from_json(read_json_file(path));
    LatentSampler<double> latent(blob.gen.latent_dim(), 0);
    const MatrixX gx = blob.gen.forward_batch(blob.theta, latent.sample(scatter_points));
    std::string stem = path.stem().string();
    const std::string iter = stem.substr(stem.find('_') + 1);
    write_file_atomic(out / ("scatter_" + iter + ".csv"), [&](std::ostream& os) {
      os << "x,y,source\n";
      write_points_csv(os, tx, "target");
      write_points_csv(os, gx, "generated");
    });
  }
  return kExitOk;
}

void check_threads_env() {
  const char* env = std::getenv("PARAMFLOW_THREADS");
  if (env == nullptr) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*env == '\0' || *end != '\0' || n < 1) throw ConfigError("PARAMFLOW_THREADS must be a positive integer");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"paramflow: parametric kernelized gradient flows and MMD GAN training"};
  app.require_subcommand(1);

  CommonOptions common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "experiment JSON")->required();
    sub->add_option("--out", common.out, "output directory (overrides the config)");
    sub->add_option("--seed", common.seed, "master seed (overrides the config)");
    sub->add_option("--snapshot-every", common.snapshot_every, "write generator snapshots every k iterations");
  };

  auto* flow = app.add_subcommand("flow", "exact-solve discrete flow");
  add_common(flow);
  std::string dump_operator;
  flow->add_option("--dump-operator", dump_operator, "write A and its spectrum at the final state as CSV");

  auto* gan = app.add_subcommand("gan", "min-max training loop");
  add_common(gan);
  bool split_batch = false;
  gan->add_flag("--split-batch", split_batch, "penalty from two independent half batches");

  auto* functional = app.add_subcommand("functional", "gradient flow of a general functional");
  add_common(functional);

  auto* verify_cmd = app.add_subcommand("verify", "run property suites");
  std::string suite = "all";
  verify_cmd->add_option("suite", suite, "suite name or 'all'");

  auto* plot = app.add_subcommand("plot-data", "loss curve and scatter files for external plotting");
  std::string trajectory, plot_out;
  long max_points = 1000, scatter_points = 2048;
  plot->add_option("trajectory", trajectory, "trajectory.csv")->required();
  plot->add_option("out_dir", plot_out, "output directory")->required();
  plot->add_option("--max-points", max_points, "rows kept in loss_curve.csv");
  plot->add_option("--scatter-points", scatter_points, "points per source in scatter files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    check_threads_env();
    if (*flow) return cmd_flow(common, dump_operator);
    if (*gan) return cmd_gan(common, split_batch);
    if (*functional) return cmd_functional(common);
    if (*verify_cmd) return cmd_verify(suite);
    if (*plot) return cmd_plotdata(trajectory, plot_out, max_points, scatter_points);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
