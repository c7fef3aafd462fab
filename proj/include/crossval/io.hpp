#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "crossval/arraymodel.hpp"
#include "crossval/bootstrap.hpp"
#include "crossval/clusterstats.hpp"
#include "crossval/simbench.hpp"
#include "crossval/zharness.hpp"

namespace crossval {

using json = nlohmann::json;

json metric_to_json(const MetricSpec& metric);
MetricSpec metric_from_json(const json& j);

json learner_to_json(const LearnerSpec& learner);
LearnerSpec learner_from_json(const json& j);

// ZMatrix: {"study_ids", "metric", "training_size", "values"} with values as
// row-major rows carrying null on the diagonal.
json zmatrix_to_json(const ZMatrix& z);
ZMatrix zmatrix_from_json(const json& j);

// ZReplicateSet: JSON lines; a meta header line, then one replicate per line.
void save_replicates(const ZReplicateSet& reps, const std::filesystem::path& path);
ZReplicateSet load_replicates(const std::filesystem::path& path);

json dispersion_to_json(const DispersionEstimate& disp);
DispersionEstimate dispersion_from_json(const json& j);

json partition_to_json(const Partition& p);
Partition partition_from_json(const json& j);

// posterior samples: JSON lines, one sample per line
void save_samples(const std::vector<PosteriorSample>& samples,
                  const std::filesystem::path& path);
std::vector<PosteriorSample> load_samples(const std::filesystem::path& path);

json summary_to_json(const PosteriorSummary& summary);
json adjusted_posterior_to_json(const AdjustedPartitionPosterior& adjusted);
json ground_truth_to_json(const GroundTruth& truth);
json replication_report_to_json(const ReplicationReport& report);

// curve CSV: study_id, j, estimate, conditioning_probability, reference_estimate
void save_curve_csv(const std::vector<std::pair<std::string, std::vector<CurvePoint>>>& curves,
                    const std::filesystem::path& path);

// per-replicate records CSV: replicate, distance, failed
void save_replication_csv(const ReplicationReport& report, const std::filesystem::path& path);

// study CSV in the documented input format
void save_study_csv(const StudyDataset& study, const std::filesystem::path& path);

void write_json_file(const json& j, const std::filesystem::path& path);
json read_json_file(const std::filesystem::path& path);

}  // namespace crossval
