// crossval: cross-study validation analysis from declarative JSON configs.
//
// Subcommands: simulate, zmatrix, bootstrap, fit, report, replicate.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical error,
// 5 refused overwrite.

#include <CLI11.hpp>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "crossval/clusterstats.hpp"
#include "crossval/errors.hpp"
#include "crossval/io.hpp"
#include "crossval/simbench.hpp"

namespace fs = std::filesystem;
using namespace crossval;

namespace {

struct CliOptions {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
  bool force = false;
  bool exact = false;
};

struct RunContext {
  json config;
  uint64_t seed = 0;
  int workers = 1;
  fs::path out_dir;
  std::string config_digest;
};

json provenance(const RunContext& ctx) {
  return json{{"config_digest", ctx.config_digest}, {"master_seed", ctx.seed}};
}

RunContext make_context(const CliOptions& opt) {
  RunContext ctx;
  ctx.config = read_json_file(opt.config_path);
  if (!ctx.config.is_object()) throw ConfigError("config must be a JSON object");

  if (opt.seed) ctx.config["seed"] = *opt.seed;
  if (opt.workers) ctx.config["workers"] = *opt.workers;
  if (opt.out) ctx.config["out"] = *opt.out;
  if (opt.exact) ctx.config["model"]["exact"] = true;

  if (!ctx.config.contains("seed"))
    throw ConfigError("a master seed is required (config key 'seed' or --seed)");
  ctx.seed = ctx.config["seed"].get<uint64_t>();
  ctx.workers = ctx.config.value("workers", 1);
  if (ctx.workers < 1) throw ConfigError("workers must be >= 1");
  if (!ctx.config.contains("out"))
    throw ConfigError("an output directory is required (config key 'out' or --out)");
  ctx.out_dir = ctx.config["out"].get<std::string>();

  // digest covers the semantic configuration only; execution knobs (worker
  // count, output location) must not change what a run produces
  json semantic = ctx.config;
  semantic.erase("workers");
  semantic.erase("out");
  std::ostringstream digest;
  digest << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(semantic.dump());
  ctx.config_digest = digest.str();

  if (fs::exists(ctx.out_dir)) {
    if (!opt.force)
      throw OverwriteError("output directory '" + ctx.out_dir.string() +
                           "' exists; rerun with --force to overwrite");
  } else {
    std::error_code ec;
    fs::create_directories(ctx.out_dir, ec);
    if (ec) throw DataError("cannot create output directory '" + ctx.out_dir.string() + "'");
  }
  return ctx;
}

const json& section(const RunContext& ctx, const std::string& key) {
  if (!ctx.config.contains(key))
    throw ConfigError("config is missing the '" + key + "' section");
  return ctx.config.at(key);
}

LearnerSpec learner_of(const RunContext& ctx) {
  json j = section(ctx, "learner");
  if (!j.contains("name")) throw ConfigError("learner section needs a 'name'");
  return learner_from_json(j);
}

MetricSpec metric_of(const RunContext& ctx) { return metric_from_json(section(ctx, "metric")); }

StudyCollection data_of(const RunContext& ctx) {
  const json& data = section(ctx, "data");
  if (!data.contains("paths")) throw ConfigError("data section needs 'paths'");
  std::vector<fs::path> paths;
  for (const auto& p : data.at("paths")) paths.emplace_back(p.get<std::string>());
  OutcomeKind kind = outcome_kind_from_string(data.value("outcome", "binary"));
  StudyCollection collection = load_studies(paths, kind, ctx.workers);
  return align_features(collection);
}

ScenarioConfig scenario_of(const RunContext& ctx) {
  const json& j = section(ctx, "simulate");
  ScenarioConfig config;
  config.scenario = j.value("scenario", 1);
  config.scale_factor = j.value("scale_factor", 1.0);
  config.seed = ctx.seed;
  config.validate();
  return config;
}

ModelConfig model_of(const RunContext& ctx) {
  ModelConfig config;
  if (!ctx.config.contains("model")) return config;
  const json& j = ctx.config.at("model");
  config.alpha = j.value("alpha", 1.0);
  if (j.contains("mu_prior_mean") && !j["mu_prior_mean"].is_null())
    config.mu_prior_mean = j["mu_prior_mean"].get<double>();
  if (j.contains("mu_prior_var") && !j["mu_prior_var"].is_null())
    config.mu_prior_var = j["mu_prior_var"].get<double>();
  config.mcmc_iterations = j.value("mcmc_iterations", 5000);
  config.burn_in = j.value("burn_in", 1000);
  config.thin = j.value("thin", 2);
  config.chains = j.value("chains", 2);
  config.credible_level = j.value("credible_level", 0.8);
  config.seed = ctx.seed;
  config.validate();
  return config;
}

BootstrapOptions bootstrap_of(const RunContext& ctx) {
  BootstrapOptions options;
  options.workers = ctx.workers;
  if (!ctx.config.contains("bootstrap")) return options;
  const json& j = ctx.config.at("bootstrap");
  options.B_reps = j.value("replicates", 1000);
  options.mode = bootstrap_mode_from_string(j.value("mode", "frequentist"));
  if (j.contains("training_size") && !j["training_size"].is_null())
    options.training_size = j["training_size"].get<int>();
  options.subsample_iterations = j.value("subsample_iterations", 200);
  return options;
}

int cmd_simulate(const RunContext& ctx) {
  ScenarioConfig scenario = scenario_of(ctx);
  StudyCollection collection = generate_scenario(scenario, RngStream(ctx.seed).child("simulate"));
  for (const auto& study : collection.studies)
    save_study_csv(study, ctx.out_dir / (study.id + ".csv"));
  json truth{{"scenario", scenario.scenario},
             {"scale_factor", scenario.scale_factor},
             {"n_per_study", scenario.n_per_study()},
             {"n_covariates", scenario.n_covariates()},
             {"true_partition", partition_to_json(scenario.true_partition())},
             {"provenance", provenance(ctx)}};
  write_json_file(truth, ctx.out_dir / "truth.json");
  std::cout << "wrote " << collection.size() << " study files and truth.json to "
            << ctx.out_dir.string() << "\n";
  return 0;
}

int cmd_zmatrix(const RunContext& ctx) {
  StudyCollection collection = data_of(ctx);
  LearnerSpec learner = learner_of(ctx);
  MetricSpec metric = metric_of(ctx);
  RngStream rng = RngStream(ctx.seed).child("zmatrix");

  std::optional<int> training_size;
  int iterations = 200;
  if (ctx.config.contains("zmatrix")) {
    const json& j = ctx.config.at("zmatrix");
    if (j.contains("training_size") && !j["training_size"].is_null())
      training_size = j["training_size"].get<int>();
    iterations = j.value("iterations", 200);
  }
  ZMatrix z = training_size
                  ? compute_z_adjusted(collection, learner, metric, *training_size, iterations,
                                       rng, ctx.workers)
                  : compute_z(collection, learner, metric, rng, ctx.workers);
  json out = zmatrix_to_json(z);
  out["provenance"] = provenance(ctx);
  write_json_file(out, ctx.out_dir / "zmatrix.json");
  std::cout << "wrote zmatrix.json (S=" << z.size() << ") to " << ctx.out_dir.string() << "\n";
  return 0;
}

int cmd_bootstrap(const RunContext& ctx) {
  StudyCollection collection = data_of(ctx);
  LearnerSpec learner = learner_of(ctx);
  MetricSpec metric = metric_of(ctx);
  BootstrapOptions options = bootstrap_of(ctx);
  RngStream rng = RngStream(ctx.seed).child("bootstrap");

  ZReplicateSet reps = bootstrap_z(collection, learner, metric, options, rng);
  save_replicates(reps, ctx.out_dir / "replicates.jsonl");

  double shrinkage = 0.1, jitter_floor = 1e-8;
  if (ctx.config.contains("bootstrap")) {
    shrinkage = ctx.config["bootstrap"].value("shrinkage_lambda", 0.1);
    jitter_floor = ctx.config["bootstrap"].value("jitter_floor", 1e-8);
  }
  DispersionEstimate disp = estimate_dispersion(reps, shrinkage, jitter_floor);
  disp.validate();
  json out = dispersion_to_json(disp);
  out["positive_definite"] = true;
  out["provenance"] = provenance(ctx);
  write_json_file(out, ctx.out_dir / "dispersion.json");
  std::cout << "wrote replicates.jsonl (" << reps.B() << " replicates) and dispersion.json to "
            << ctx.out_dir.string() << "\n";
  return 0;
}

int cmd_fit(const RunContext& ctx) {
  const json& model_section = section(ctx, "model");
  if (!model_section.contains("zmatrix_file") || !model_section.contains("dispersion_file"))
    throw ConfigError("fit needs model.zmatrix_file and model.dispersion_file");
  ZMatrix z = zmatrix_from_json(read_json_file(model_section["zmatrix_file"].get<std::string>()));
  DispersionEstimate disp =
      dispersion_from_json(read_json_file(model_section["dispersion_file"].get<std::string>()));
  ModelConfig config = model_of(ctx);
  bool exact = model_section.value("exact", false);
  int draws = model_section.value("draws", 2000);

  ArrayModel model(z, disp, config);
  RngStream rng = RngStream(ctx.seed).child("fit");

  std::vector<PosteriorSample> samples;
  json extras;
  if (exact) {
    if (z.size() > 10) throw ConfigError("--exact requires S <= 10");
    std::map<Partition, double> posterior = model.exact_posterior();
    samples = model.sample_from_exact(posterior, draws, rng);
    json atoms = json::array();
    for (const auto& [p, prob] : posterior)
      atoms.push_back(json{{"partition", partition_to_json(p)}, {"probability", prob}});
    extras["exact_partition_probabilities"] = atoms;
  } else {
    GibbsRun run = model.gibbs(rng);
    samples = std::move(run.samples);
    extras["between_chain_discrepancy"] = run.between_chain_discrepancy;
    extras["chains"] = run.chains;
  }
  save_samples(samples, ctx.out_dir / "samples.jsonl");

  PosteriorSummary summary = summarize(samples, config.credible_level);
  json out = summary_to_json(summary);
  if (exact) {
    // in exact mode the partition law is known in closed form; report it
    out["partition_frequencies"] = extras["exact_partition_probabilities"];
  }
  for (auto& [key, value] : extras.items()) out[key] = value;
  out["prior"] = json{{"alpha", config.alpha}, {"m0", model.m0()}, {"tau0sq", model.tau0sq()}};
  out["provenance"] = provenance(ctx);
  write_json_file(out, ctx.out_dir / "summary.json");
  std::cout << "wrote samples.jsonl (" << samples.size() << " draws) and summary.json to "
            << ctx.out_dir.string() << "\n";
  return 0;
}

int cmd_report(const RunContext& ctx) {
  StudyCollection collection = data_of(ctx);
  LearnerSpec learner = learner_of(ctx);
  MetricSpec metric = metric_of(ctx);
  const json& rpt = section(ctx, "report");
  if (!rpt.contains("samples_file"))
    throw ConfigError("report needs report.samples_file (posterior draws from `fit`)");
  std::vector<PosteriorSample> samples =
      load_samples(rpt["samples_file"].get<std::string>());
  RngStream rng = RngStream(ctx.seed).child("report");
  ModelCache cache;

  std::vector<std::string> targets;
  if (rpt.contains("targets")) targets = rpt["targets"].get<std::vector<std::string>>();
  else
    for (const auto& study : collection.studies) targets.push_back(study.id);

  std::ostringstream text;
  text << "cross-study validation report\n";
  text << "=============================\n\n";
  std::vector<Partition> parts;
  for (const auto& sample : samples) parts.push_back(sample.partition);
  Partition pi_hat = point_estimate(parts);
  text << "posterior point-estimate partition: " << pi_hat.to_string() << "\n";
  text << "posterior draws: " << samples.size() << "\n\n";

  // Z_{B(s),s} table
  {
    std::ofstream zbs(ctx.out_dir / "zbs.csv");
    zbs << "study_id,method,value,conditioning_probability,n_effective_samples\n";
    text << "cluster-based statistics Z_{B(s),s}:\n";
    for (const auto& target : targets) {
      for (ClusterStatMethod method :
           {ClusterStatMethod::posterior_averaged, ClusterStatMethod::plug_in}) {
        ClusterStatEstimate est =
            estimate_zBs(samples, collection, learner, metric, target, method,
                         rng.child("zbs", fnv1a64(target)), &cache);
        zbs << target << "," << to_string(method) << ",";
        if (est.defined()) zbs << est.value;
        zbs << "," << est.conditioning_probability << "," << est.n_effective_samples << "\n";
        text << "  " << target << " [" << to_string(method) << "] ";
        if (est.defined())
          text << "value " << est.value << " (P[B(s) != {s}] = "
               << est.conditioning_probability << ")\n";
        else
          text << "undefined (conditioning event has probability 0)\n";
      }
    }
    text << "\n";
  }

  // Z^j curves
  if (rpt.contains("j_grid")) {
    std::vector<int> j_grid = rpt["j_grid"].get<std::vector<int>>();
    int iterations = rpt.value("subsample_iterations", 200);
    std::vector<std::pair<std::string, std::vector<CurvePoint>>> curves;
    for (const auto& target : targets) {
      curves.emplace_back(target, estimate_zjBs_curve(samples, collection, learner, metric,
                                                      target, j_grid, iterations,
                                                      rng.child("curve", fnv1a64(target)),
                                                      &cache, ctx.workers));
    }
    save_curve_csv(curves, ctx.out_dir / "curves.csv");
    text << "sample-size adjusted curves written to curves.csv (one row per study and j)\n\n";
  }

  // two-threshold adjustment
  if (rpt.contains("threshold_low") && rpt.contains("threshold_high")) {
    ThresholdPipelineConfig config;
    config.bootstrap = bootstrap_of(ctx);
    config.model = model_of(ctx);
    config.z_iterations = rpt.value("subsample_iterations", 200);
    config.workers = ctx.workers;
    AdjustedPartitionPosterior adjusted = run_threshold_pipeline(
        collection, learner, metric, rpt["threshold_low"].get<int>(),
        rpt["threshold_high"].get<int>(), config, rng.child("threshold"));
    json out = adjusted_posterior_to_json(adjusted);
    out["provenance"] = provenance(ctx);
    write_json_file(out, ctx.out_dir / "threshold_adjusted.json");
    double deviation = adjusted.pushforward_deviation();
    if (deviation > 1e-9)
      throw NumericError("threshold adjustment failed the pushforward identity (deviation " +
                         std::to_string(deviation) + ")");
    text << "threshold adjustment (" << adjusted.threshold_low << " -> "
         << adjusted.threshold_high << "): pushforward identity verified, max deviation "
         << deviation << "\n";
  }

  std::ofstream report_file(ctx.out_dir / "report.txt");
  report_file << text.str();
  std::cout << "wrote report files to " << ctx.out_dir.string() << "\n";
  return 0;
}

int cmd_replicate(const RunContext& ctx) {
  ScenarioConfig scenario = scenario_of(ctx);
  LearnerSpec learner = learner_of(ctx);
  MetricSpec metric = metric_of(ctx);
  ReplicationConfig config;
  config.bootstrap = bootstrap_of(ctx);
  config.bootstrap.workers = 1;  // parallelism lives at the replicate level
  config.model = model_of(ctx);
  config.workers = ctx.workers;
  if (ctx.config.contains("replicate")) {
    const json& j = ctx.config.at("replicate");
    config.n_replicates = j.value("n_replicates", 100);
    config.zeta_mc_reps = j.value("zeta_mc_reps", 200);
    config.exact_posterior = j.value("exact", true);
    config.posterior_draws = j.value("posterior_draws", 2000);
  }
  ReplicationReport report = run_replication(scenario, config, learner, metric,
                                             RngStream(ctx.seed).child("replicate"));
  json out = replication_report_to_json(report);
  out["provenance"] = provenance(ctx);
  write_json_file(out, ctx.out_dir / "replication.json");
  save_replication_csv(report, ctx.out_dir / "replicates.csv");
  std::cout << "wrote replication.json and replicates.csv to " << ctx.out_dir.string()
            << " (mean distance " << report.mean_distance << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-study validation analysis of leave-one-in arrays"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  CliOptions opt;
  app.add_option("--config", opt.config_path, "JSON run configuration")->required();
  uint64_t seed_value = 0;
  auto* seed_flag = app.add_option("--seed", seed_value, "master seed (overrides config)");
  int workers_value = 0;
  auto* workers_flag = app.add_option("--workers", workers_value, "worker threads");
  std::string out_value;
  auto* out_flag = app.add_option("--out", out_value, "output directory");
  app.add_flag("--force", opt.force, "allow writing into an existing output directory");
  app.add_flag("--exact", opt.exact, "use exact partition enumeration (S <= 10)");

  auto* simulate = app.add_subcommand("simulate", "generate scenario study files");
  auto* zmatrix = app.add_subcommand("zmatrix", "compute the leave-one-in array");
  auto* bootstrap_cmd = app.add_subcommand("bootstrap", "bootstrap Z and estimate dispersion");
  auto* fit = app.add_subcommand("fit", "posterior inference for the latent partition");
  auto* report = app.add_subcommand("report", "cluster-based statistics and adjustments");
  auto* replicate = app.add_subcommand("replicate", "run the simulation replication study");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*seed_flag) opt.seed = seed_value;
    if (*workers_flag) opt.workers = workers_value;
    if (*out_flag) opt.out = out_value;
    RunContext ctx = make_context(opt);
    if (*simulate) return cmd_simulate(ctx);
    if (*zmatrix) return cmd_zmatrix(ctx);
    if (*bootstrap_cmd) return cmd_bootstrap(ctx);
    if (*fit) return cmd_fit(ctx);
    if (*report) return cmd_report(ctx);
    if (*replicate) return cmd_replicate(ctx);
    throw ConfigError("no subcommand selected");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const OverwriteError& e) {
    std::cerr << "refused: " << e.what() << "\n";
    return 5;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
