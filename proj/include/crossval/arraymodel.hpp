#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <vector>

#include "crossval/bootstrap.hpp"
#include "crossval/partition.hpp"
#include "crossval/zharness.hpp"

namespace crossval {

struct ModelConfig {
  double alpha = 1.0;  // CRP concentration
  // Normal prior on block means; empty fields resolve empirically from the
  // observed off-diagonal Z (mean, and variance floored at 1e-6).
  std::optional<double> mu_prior_mean;
  std::optional<double> mu_prior_var;
  int mcmc_iterations = 5000;
  int burn_in = 1000;
  int thin = 2;
  int chains = 2;
  double credible_level = 0.8;
  uint64_t seed = 0;

  void validate() const;
};

struct PosteriorSample {
  Partition partition;
  Eigen::MatrixXd mu_blocks;  // m x m block means for this draw's m clusters
  double log_posterior = 0.0;  // unnormalized: log prior + log marginal
};

struct CredibleBand {
  Eigen::MatrixXd lo, hi;  // S x S, NaN diagonals
  double level = 0.8;
};

struct PosteriorSummary {
  Eigen::MatrixXd coclustering;       // S x S, unit diagonal
  Eigen::MatrixXd mu_posterior_mean;  // S x S, NaN diagonal
  CredibleBand mu_credible;
  std::vector<std::pair<Partition, double>> partition_frequencies;  // sums to 1
  Partition point_estimate;
};

struct PredictiveInterval {
  double mean = 0.0, lo = 0.0, hi = 0.0;
};

struct NewStudyPrediction {
  // per existing study s: mu_{C(S+1),C(s)} (train on the new study's cluster)
  // and mu_{C(s),C(S+1)} (validate on the new study's cluster)
  std::vector<PredictiveInterval> train_new;
  std::vector<PredictiveInterval> validate_new;
  double level = 0.8;
};

struct GibbsRun {
  std::vector<PosteriorSample> samples;
  int chains = 1;
  // largest across-chain difference of any coclustering entry
  double between_chain_discrepancy = 0.0;
};

// Eq.-style array model: Z = X(pi) mu + eps with mu ~iid N(m0, tau0^2),
// pi ~ CRP(alpha), eps ~ N(0, Sigma_hat). Marginal likelihoods are cached per
// canonical partition; instances are safe for concurrent readers.
class ArrayModel {
 public:
  ArrayModel(const ZMatrix& z, const DispersionEstimate& disp, const ModelConfig& config);

  int S() const { return S_; }
  int D() const { return static_cast<int>(z_.size()); }
  double m0() const { return m0_; }
  double tau0sq() const { return tau0sq_; }
  const ModelConfig& config() const { return config_; }

  // log N(z; m0 1, tau0^2 X X' + Sigma_hat) for the partition's block design
  double log_marginal(const Partition& p) const;
  double log_posterior_kernel(const Partition& p) const;  // + CRP log prior

  std::map<Partition, double> exact_posterior() const;

  GibbsRun gibbs(const RngStream& rng) const;

  // iid draws from an explicit partition posterior (used in exact mode)
  std::vector<PosteriorSample> sample_from_exact(const std::map<Partition, double>& posterior,
                                                 int n_draws, const RngStream& rng) const;

  // conditional draw of the m x m block means given the partition
  Eigen::MatrixXd sample_mu_blocks(const Partition& p, RngStream& rng) const;

 private:
  Eigen::VectorXd block_index(const Partition& p) const;  // per-entry block id
  double log_marginal_uncached(const Partition& p) const;

  int S_ = 0;
  Eigen::VectorXd z_;                          // vectorized off-diagonal Z
  std::vector<std::pair<int, int>> index_map_;
  Eigen::MatrixXd sigma_;                      // dispersion covariance
  Eigen::MatrixXd sigma_inv_;
  ModelConfig config_;
  double m0_ = 0.0;
  double tau0sq_ = 1.0;

  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<Partition, double, PartitionHash> cache_;
};

// Free-function faces over ArrayModel.
double log_marginal_likelihood(const ZMatrix& z, const Partition& p,
                               const DispersionEstimate& disp, const ModelConfig& config);
std::map<Partition, double> exact_posterior(const ZMatrix& z, const DispersionEstimate& disp,
                                            const ModelConfig& config);
GibbsRun gibbs_sample(const ZMatrix& z, const DispersionEstimate& disp,
                      const ModelConfig& config, const RngStream& rng);

PosteriorSummary summarize(const std::vector<PosteriorSample>& samples, double level);

// one-step CRP predictive probabilities: existing clusters (by label), then new
std::vector<double> crp_step_probabilities(const Partition& p, double alpha);

NewStudyPrediction predict_new_study(const std::vector<PosteriorSample>& samples,
                                     const ModelConfig& config, const RngStream& rng);

}  // namespace crossval
