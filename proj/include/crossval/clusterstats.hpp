#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crossval/arraymodel.hpp"
#include "crossval/bootstrap.hpp"
#include "crossval/data.hpp"
#include "crossval/partition.hpp"
#include "crossval/zharness.hpp"

namespace crossval {

enum class ClusterStatMethod { posterior_averaged, plug_in };

std::string to_string(ClusterStatMethod m);

// A cluster-based validation summary together with the posterior probability
// of its conditioning event. Undefined (value NaN) when the event has
// posterior probability zero.
struct ClusterStatEstimate {
  std::string target_study;
  double value = std::numeric_limits<double>::quiet_NaN();
  double conditioning_probability = 0.0;
  ClusterStatMethod method = ClusterStatMethod::posterior_averaged;
  std::optional<int> j;
  int n_effective_samples = 0;

  bool defined() const { return conditioning_probability > 0.0; }
};

struct CurvePoint {
  ClusterStatEstimate estimate;
  // same statistic with B = all studies (the whole-collection comparator);
  // NaN when the total pool is smaller than j
  double reference = std::numeric_limits<double>::quiet_NaN();
};

struct AdjustedPartitionPosterior {
  std::map<Partition, double> probabilities;  // over all-S partitions, sums to 1
  int threshold_low = 0;
  int threshold_high = 0;
  std::vector<int> included_high;  // collection indices of high-threshold studies
  // the high-threshold posterior the adjustment was built from, kept so
  // callers can re-verify the projection pushforward
  std::map<Partition, double> high_posterior;

  // largest |pushforward - high| deviation over high-posterior atoms
  double pushforward_deviation() const;
};

// Z_{B(s),s} estimated from the partition posterior, conditioning on
// B(s) != {s}; or the plug-in value at the point-estimate partition.
ClusterStatEstimate estimate_zBs(const std::vector<PosteriorSample>& samples,
                                 const StudyCollection& collection, const LearnerSpec& learner,
                                 const MetricSpec& metric, const std::string& s,
                                 ClusterStatMethod method, const RngStream& rng,
                                 ModelCache* cache = nullptr);

// The map j -> Z^j_{B(s),s} on j_grid, with per-j conditioning probabilities
// and the all-studies reference curve.
std::vector<CurvePoint> estimate_zjBs_curve(const std::vector<PosteriorSample>& samples,
                                            const StudyCollection& collection,
                                            const LearnerSpec& learner, const MetricSpec& metric,
                                            const std::string& s, const std::vector<int>& j_grid,
                                            int iterations, const RngStream& rng,
                                            ModelCache* cache = nullptr, int workers = 1);

// Threshold-projection adjustment gluing a posterior over all S studies
// (low threshold) with a posterior over the `subset` studies (high threshold):
//   p_hat(pi) = p_low(pi) * p_high(proj(pi)) / sum_{pi': proj(pi')=proj(pi)} p_low(pi')
AdjustedPartitionPosterior threshold_adjusted_posterior(
    const std::map<Partition, double>& posterior_low,
    const std::map<Partition, double>& posterior_high, const std::vector<int>& subset);

struct ThresholdPipelineConfig {
  BootstrapOptions bootstrap;
  ModelConfig model;
  double shrinkage_lambda = 0.1;
  double jitter_floor = 1e-8;
  int z_iterations = 200;  // subsample iterations for the Z^{n0} arrays
  // exact enumeration when S <= 10; otherwise Gibbs partition frequencies
  bool prefer_exact = true;
  int workers = 1;
};

// Full two-threshold run: Z^{low} and Z^{high} arrays, bootstrap dispersion,
// partition posteriors, and the Eq.-(2)-style combination.
AdjustedPartitionPosterior run_threshold_pipeline(const StudyCollection& collection,
                                                  const LearnerSpec& learner,
                                                  const MetricSpec& metric, int threshold_low,
                                                  int threshold_high,
                                                  const ThresholdPipelineConfig& config,
                                                  const RngStream& rng);

}  // namespace crossval
