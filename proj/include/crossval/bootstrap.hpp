#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "crossval/data.hpp"
#include "crossval/learners.hpp"
#include "crossval/metrics.hpp"
#include "crossval/zharness.hpp"

namespace crossval {

enum class BootstrapMode { frequentist, bayesian };

std::string to_string(BootstrapMode mode);
BootstrapMode bootstrap_mode_from_string(const std::string& s);

struct BootstrapOptions {
  int B_reps = 1000;
  BootstrapMode mode = BootstrapMode::frequentist;
  std::optional<int> training_size;  // Z^{n0} resampling when set
  int subsample_iterations = 200;    // used with training_size
  int workers = 1;
  // test hook: forces all Bayesian-bootstrap weights to 1
  bool uniform_weights_hook = false;
};

struct ZReplicateSet {
  std::vector<Eigen::MatrixXd> replicates;  // S x S each, NaN diagonals
  BootstrapMode mode = BootstrapMode::frequentist;
  uint64_t master_seed = 0;
  std::vector<std::string> study_ids;
  MetricSpec metric;
  LearnerSpec learner;
  std::optional<int> training_size;

  int B() const { return static_cast<int>(replicates.size()); }
  int S() const { return static_cast<int>(study_ids.size()); }
  std::vector<std::pair<int, int>> index_map() const;
};

struct DispersionEstimate {
  Eigen::MatrixXd covariance;                  // D x D, D = S(S-1)
  std::vector<std::pair<int, int>> index_map;  // position -> (s, v)
  double shrinkage_lambda = 0.0;
  double jitter = 0.0;

  int D() const { return static_cast<int>(index_map.size()); }
  void validate() const;  // symmetric and positive definite
};

struct EntryDiagnostics {
  int s = 0, v = 0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  double ks_distance = 0.0;
  bool skew_flag = false;
};

// Resamples the Z array B_reps times. Frequentist mode redraws each study's
// rows with replacement; Bayesian mode reweights rows with normalized
// unit-exponential weights and recomputes Z with weighted fits and metrics.
// Penalties are tuned once per study on the original data when
// learner.freeze_penalty is set.
ZReplicateSet bootstrap_z(const StudyCollection& collection, const LearnerSpec& learner,
                          const MetricSpec& metric, const BootstrapOptions& options,
                          const RngStream& rng);

// Centered sample covariance of the vectorized replicates, shrunk as
// (1-lambda) C + lambda diag(C), then jittered until the smallest eigenvalue
// is at least 1e-10.
DispersionEstimate estimate_dispersion(const ZReplicateSet& reps, double shrinkage_lambda,
                                       double jitter_floor);

// Per-entry skewness / excess kurtosis / KS distance to the fitted normal.
std::vector<EntryDiagnostics> normality_diagnostics(const ZReplicateSet& reps);

}  // namespace crossval
