#include "crossval/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "crossval/errors.hpp"

namespace crossval {

namespace {

json matrix_to_json_rows(const Eigen::MatrixXd& m, bool null_diagonal) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if ((null_diagonal && r == c) || std::isnan(m(r, c))) row.push_back(nullptr);
      else row.push_back(m(r, c));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json_rows(const json& rows) {
  const Eigen::Index R = static_cast<Eigen::Index>(rows.size());
  if (R == 0) return Eigen::MatrixXd();
  const Eigen::Index C = static_cast<Eigen::Index>(rows.at(0).size());
  Eigen::MatrixXd m(R, C);
  for (Eigen::Index r = 0; r < R; ++r) {
    const json& row = rows.at(static_cast<size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != C)
      throw DataError("ragged matrix rows in JSON");
    for (Eigen::Index c = 0; c < C; ++c) {
      const json& cell = row.at(static_cast<size_t>(c));
      m(r, c) = cell.is_null() ? std::numeric_limits<double>::quiet_NaN()
                               : cell.get<double>();
    }
  }
  return m;
}

std::string format_cell(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

}  // namespace

json metric_to_json(const MetricSpec& metric) {
  json j{{"kind", to_string(metric.kind)}};
  if (metric.kind == MetricKind::truncated_concordance) j["tau"] = metric.tau;
  j["higher_is_better"] = metric.higher_is_better();
  return j;
}

MetricSpec metric_from_json(const json& j) {
  MetricSpec metric;
  metric.kind = metric_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("tau") && !j["tau"].is_null()) metric.tau = j["tau"].get<double>();
  metric.validate();
  return metric;
}

json learner_to_json(const LearnerSpec& learner) {
  return json{{"name", learner.name()},
              {"family", to_string(learner.family)},
              {"penalty", to_string(learner.penalty)},
              {"penalty_grid", learner.penalty_grid},
              {"cv_folds", learner.cv_folds},
              {"max_iterations", learner.max_iterations},
              {"convergence_tol", learner.convergence_tol},
              {"standardize", learner.standardize},
              {"fit_intercept", learner.fit_intercept},
              {"freeze_penalty", learner.freeze_penalty}};
}

LearnerSpec learner_from_json(const json& j) {
  LearnerSpec learner = learner_from_name(j.at("name").get<std::string>());
  if (j.contains("penalty_grid")) learner.penalty_grid = j["penalty_grid"].get<std::vector<double>>();
  if (j.contains("cv_folds")) learner.cv_folds = j["cv_folds"].get<int>();
  if (j.contains("max_iterations")) learner.max_iterations = j["max_iterations"].get<int>();
  if (j.contains("convergence_tol")) learner.convergence_tol = j["convergence_tol"].get<double>();
  if (j.contains("standardize")) learner.standardize = j["standardize"].get<bool>();
  if (j.contains("fit_intercept")) learner.fit_intercept = j["fit_intercept"].get<bool>();
  if (j.contains("freeze_penalty")) learner.freeze_penalty = j["freeze_penalty"].get<bool>();
  learner.validate();
  return learner;
}

json zmatrix_to_json(const ZMatrix& z) {
  json j;
  j["study_ids"] = z.study_ids;
  j["metric"] = metric_to_json(z.metric);
  j["learner"] = learner_to_json(z.learner);
  j["training_size"] = z.training_size ? json(*z.training_size) : json(nullptr);
  j["subsample_iterations"] =
      z.subsample_iterations ? json(*z.subsample_iterations) : json(nullptr);
  j["dropped_study_ids"] = z.dropped_study_ids;
  j["values"] = matrix_to_json_rows(z.values, true);
  return j;
}

ZMatrix zmatrix_from_json(const json& j) {
  ZMatrix z;
  z.study_ids = j.at("study_ids").get<std::vector<std::string>>();
  z.metric = metric_from_json(j.at("metric"));
  if (j.contains("learner")) z.learner = learner_from_json(j.at("learner"));
  if (j.contains("training_size") && !j["training_size"].is_null())
    z.training_size = j["training_size"].get<int>();
  if (j.contains("subsample_iterations") && !j["subsample_iterations"].is_null())
    z.subsample_iterations = j["subsample_iterations"].get<int>();
  if (j.contains("dropped_study_ids"))
    z.dropped_study_ids = j["dropped_study_ids"].get<std::vector<std::string>>();
  z.values = matrix_from_json_rows(j.at("values"));
  z.validate();
  return z;
}

void save_replicates(const ZReplicateSet& reps, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  json meta{{"type", "meta"},
            {"mode", to_string(reps.mode)},
            {"master_seed", reps.master_seed},
            {"study_ids", reps.study_ids},
            {"metric", metric_to_json(reps.metric)},
            {"learner", learner_to_json(reps.learner)},
            {"training_size", reps.training_size ? json(*reps.training_size) : json(nullptr)}};
  out << meta.dump() << "\n";
  for (size_t b = 0; b < reps.replicates.size(); ++b) {
    json line{{"replicate", b},
              {"values", matrix_to_json_rows(reps.replicates[b], true)}};
    out << line.dump() << "\n";
  }
}

ZReplicateSet load_replicates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty replicate file");
  json meta = json::parse(line);
  ZReplicateSet reps;
  reps.mode = bootstrap_mode_from_string(meta.at("mode").get<std::string>());
  reps.master_seed = meta.at("master_seed").get<uint64_t>();
  reps.study_ids = meta.at("study_ids").get<std::vector<std::string>>();
  reps.metric = metric_from_json(meta.at("metric"));
  reps.learner = learner_from_json(meta.at("learner"));
  if (!meta.at("training_size").is_null())
    reps.training_size = meta["training_size"].get<int>();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    reps.replicates.push_back(matrix_from_json_rows(rec.at("values")));
  }
  return reps;
}

json dispersion_to_json(const DispersionEstimate& disp) {
  json pairs = json::array();
  for (auto [s, v] : disp.index_map) pairs.push_back(json::array({s, v}));
  return json{{"index_map", pairs},
              {"covariance", matrix_to_json_rows(disp.covariance, false)},
              {"shrinkage_lambda", disp.shrinkage_lambda},
              {"jitter", disp.jitter}};
}

DispersionEstimate dispersion_from_json(const json& j) {
  DispersionEstimate disp;
  for (const auto& pair : j.at("index_map"))
    disp.index_map.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
  disp.covariance = matrix_from_json_rows(j.at("covariance"));
  disp.shrinkage_lambda = j.at("shrinkage_lambda").get<double>();
  disp.jitter = j.at("jitter").get<double>();
  disp.validate();
  return disp;
}

json partition_to_json(const Partition& p) { return json(p.labels()); }

Partition partition_from_json(const json& j) {
  return Partition(j.get<std::vector<int>>());
}

void save_samples(const std::vector<PosteriorSample>& samples,
                  const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (const auto& sample : samples) {
    json line{{"partition", partition_to_json(sample.partition)},
              {"mu_blocks", matrix_to_json_rows(sample.mu_blocks, false)},
              {"log_posterior", sample.log_posterior}};
    out << line.dump() << "\n";
  }
}

std::vector<PosteriorSample> load_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::vector<PosteriorSample> samples;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    PosteriorSample sample;
    sample.partition = partition_from_json(rec.at("partition"));
    sample.mu_blocks = matrix_from_json_rows(rec.at("mu_blocks"));
    sample.log_posterior = rec.at("log_posterior").get<double>();
    samples.push_back(std::move(sample));
  }
  if (samples.empty()) throw DataError("no posterior samples in '" + path.string() + "'");
  return samples;
}

json summary_to_json(const PosteriorSummary& summary) {
  json freqs = json::array();
  for (const auto& [p, prob] : summary.partition_frequencies)
    freqs.push_back(json{{"partition", partition_to_json(p)}, {"probability", prob}});
  return json{{"coclustering", matrix_to_json_rows(summary.coclustering, false)},
              {"mu_posterior_mean", matrix_to_json_rows(summary.mu_posterior_mean, true)},
              {"mu_credible",
               json{{"level", summary.mu_credible.level},
                    {"lo", matrix_to_json_rows(summary.mu_credible.lo, true)},
                    {"hi", matrix_to_json_rows(summary.mu_credible.hi, true)}}},
              {"partition_frequencies", freqs},
              {"point_estimate", partition_to_json(summary.point_estimate)}};
}

json adjusted_posterior_to_json(const AdjustedPartitionPosterior& adjusted) {
  json atoms = json::array();
  for (const auto& [p, prob] : adjusted.probabilities) {
    if (prob == 0.0) continue;
    atoms.push_back(json{{"partition", partition_to_json(p)}, {"probability", prob}});
  }
  return json{{"threshold_low", adjusted.threshold_low},
              {"threshold_high", adjusted.threshold_high},
              {"included_high", adjusted.included_high},
              {"probabilities", atoms}};
}

json ground_truth_to_json(const GroundTruth& truth) {
  return json{{"zeta", matrix_to_json_rows(truth.zeta, true)},
              {"true_partition", partition_to_json(truth.true_partition)},
              {"monte_carlo_se", matrix_to_json_rows(truth.monte_carlo_se, true)}};
}

json replication_report_to_json(const ReplicationReport& report) {
  return json{{"n_completed", report.n_completed},
              {"n_failed", report.n_failed},
              {"mean_distance", report.mean_distance},
              {"median_distance", report.median_distance},
              {"bayes_mse_win_fraction", report.bayes_mse_win_fraction},
              {"bayes_mae_win_fraction", report.bayes_mae_win_fraction},
              {"zeta", matrix_to_json_rows(report.zeta, true)},
              {"bayes_mse", matrix_to_json_rows(report.bayes_mse, true)},
              {"bayes_mae", matrix_to_json_rows(report.bayes_mae, true)},
              {"empirical_mse", matrix_to_json_rows(report.empirical_mse, true)},
              {"empirical_mae", matrix_to_json_rows(report.empirical_mae, true)}};
}

void save_curve_csv(const std::vector<std::pair<std::string, std::vector<CurvePoint>>>& curves,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "study_id,j,estimate,conditioning_probability,reference_estimate\n";
  for (const auto& [study, points] : curves) {
    for (const auto& point : points) {
      out << study << "," << point.estimate.j.value_or(-1) << ",";
      if (point.estimate.defined()) out << format_cell(point.estimate.value);
      out << "," << format_cell(point.estimate.conditioning_probability) << ",";
      if (std::isfinite(point.reference)) out << format_cell(point.reference);
      out << "\n";
    }
  }
}

void save_replication_csv(const ReplicationReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "replicate,distance,failed\n";
  for (const auto& record : report.records)
    out << record.replicate << "," << record.distance << "," << (record.failed ? 1 : 0) << "\n";
}

void save_study_csv(const StudyDataset& study, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  const bool survival = study.outcome.kind() == OutcomeKind::survival;
  out << (survival ? "time,event" : "outcome");
  for (const auto& name : study.feature_names) out << "," << name;
  out << "\n";
  for (Eigen::Index i = 0; i < study.n(); ++i) {
    if (survival)
      out << format_cell(study.outcome.values()[i]) << ","
          << (study.outcome.events()[static_cast<size_t>(i)] ? 1 : 0);
    else
      out << format_cell(study.outcome.values()[i]);
    for (Eigen::Index jcol = 0; jcol < study.p(); ++jcol)
      out << "," << format_cell(study.features(i, jcol));
    out << "\n";
  }
}

void write_json_file(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

}  // namespace crossval
