#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "crossval/arraymodel.hpp"
#include "crossval/bootstrap.hpp"
#include "crossval/data.hpp"
#include "crossval/partition.hpp"

namespace crossval {

// Two fixed 9-study designs, three true clusters of three studies each.
// scale_factor shrinks sample sizes and covariate counts proportionally while
// preserving the cluster structure and the signal-to-noise ratio.
struct ScenarioConfig {
  int scenario = 1;  // 1 or 2
  double scale_factor = 1.0;
  uint64_t seed = 0;
  // test hook (scenario 2): per-cluster label flip rates
  std::optional<std::array<double, 3>> flip_rates;

  int n_studies() const { return 9; }
  int n_per_study() const;
  int n_covariates() const;
  Partition true_partition() const;  // {0,0,0,1,1,1,2,2,2}
  void validate() const;
};

// Scenario 1: independent N(0, 17) covariates, logistic outcomes from a sparse
// 0.1-coefficient signal; cluster 2 adds N(0, 14^2) measurement error to the
// first half of the covariates, cluster 3 adds N(0.33, 8^2) to all of them.
StudyCollection generate_scenario1(const ScenarioConfig& config, const RngStream& rng);

// Scenario 2: block-equicorrelated (rho 0.2) zero-mean covariates with a dense
// beta = 0.2 signal on the first three blocks; outcomes flipped with
// per-cluster probabilities 0.05 / 0.25 / 0.5.
StudyCollection generate_scenario2(const ScenarioConfig& config, const RngStream& rng);

StudyCollection generate_scenario(const ScenarioConfig& config, const RngStream& rng);

// Linear-Gaussian single study, used by the asymptotic-normality diagnostics.
StudyDataset make_linear_gaussian_study(const std::string& id, int n, int p,
                                        const Eigen::VectorXd& beta, double noise_sd,
                                        RngStream& rng);

struct GroundTruth {
  Eigen::MatrixXd zeta;            // S x S, NaN diagonal
  Partition true_partition;
  Eigen::MatrixXd monte_carlo_se;  // S x S, NaN diagonal
};

// zeta_{s,v}: mean Z_{s,v} over mc_reps independent regenerations of the data.
GroundTruth true_zeta(const ScenarioConfig& config, const LearnerSpec& learner,
                      const MetricSpec& metric, int mc_reps, const RngStream& rng,
                      int workers = 1, bool identical_reps_hook = false);

struct ReplicationConfig {
  int n_replicates = 100;
  BootstrapOptions bootstrap;
  ModelConfig model;
  double shrinkage_lambda = 0.1;
  double jitter_floor = 1e-8;
  bool exact_posterior = true;  // enumerate when S <= 10
  int posterior_draws = 2000;   // mu draws when exact
  int zeta_mc_reps = 200;
  int workers = 1;
  double max_failure_fraction = 0.1;
  // test hook: multiplies the dispersion estimate (1e6 drowns the likelihood)
  double dispersion_scale = 1.0;
};

struct ReplicateRecord {
  int replicate = 0;
  int distance = 0;  // l(pi_hat, pi_true)
  bool failed = false;
  std::string failure;
};

struct ReplicationReport {
  std::vector<ReplicateRecord> records;
  int n_completed = 0;
  int n_failed = 0;
  double mean_distance = 0.0;
  double median_distance = 0.0;
  Eigen::MatrixXd zeta;                 // ground truth used for scoring
  // per-pair error of each estimator against zeta, averaged over replicates
  Eigen::MatrixXd bayes_mse, bayes_mae;
  Eigen::MatrixXd empirical_mse, empirical_mae;
  double bayes_mse_win_fraction = 0.0;  // pairs where Bayes beats raw Z on MSE
  double bayes_mae_win_fraction = 0.0;
};

// Full desk-scale replication: generate -> Z -> bootstrap -> posterior ->
// point estimate + mu summaries, scored against the zeta oracle.
ReplicationReport run_replication(const ScenarioConfig& scenario,
                                  const ReplicationConfig& config, const LearnerSpec& learner,
                                  const MetricSpec& metric, const RngStream& rng);

}  // namespace crossval
