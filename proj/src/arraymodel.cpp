#include "crossval/arraymodel.hpp"

#include <algorithm>
#include <cmath>

#include "crossval/errors.hpp"
#include "crossval/parallel.hpp"

namespace crossval {

void ModelConfig::validate() const {
  if (!(alpha > 0)) throw ConfigError("alpha must be positive");
  if (mu_prior_var && !(*mu_prior_var > 0)) throw ConfigError("mu_prior_var must be positive");
  if (burn_in < 0 || burn_in >= mcmc_iterations)
    throw ConfigError("burn_in must lie in [0, mcmc_iterations)");
  if (thin < 1) throw ConfigError("thin must be >= 1");
  if (chains < 1) throw ConfigError("chains must be >= 1");
  if (!(credible_level > 0 && credible_level < 1))
    throw ConfigError("credible_level must lie in (0, 1)");
}

ArrayModel::ArrayModel(const ZMatrix& z, const DispersionEstimate& disp,
                       const ModelConfig& config)
    : config_(config) {
  config_.validate();
  z.validate();
  S_ = z.size();
  index_map_ = z.index_map();
  if (disp.D() != static_cast<int>(index_map_.size()))
    throw DataError("dispersion dimension " + std::to_string(disp.D()) +
                    " does not match Z with S=" + std::to_string(S_));
  if (disp.index_map != index_map_)
    throw DataError("dispersion index_map does not match the Z vectorization order");
  z_ = z.vectorized();
  sigma_ = disp.covariance;
  Eigen::LLT<Eigen::MatrixXd> llt(sigma_);
  if (llt.info() != Eigen::Success)
    throw NumericError("dispersion covariance is not positive definite");
  sigma_inv_ = llt.solve(Eigen::MatrixXd::Identity(D(), D()));

  double empirical_mean = z_.mean();
  double empirical_var = (z_.array() - empirical_mean).square().mean();
  m0_ = config_.mu_prior_mean.value_or(empirical_mean);
  tau0sq_ = config_.mu_prior_var.value_or(std::max(empirical_var, 1e-6));
}

Eigen::VectorXd ArrayModel::block_index(const Partition& p) const {
  const int m = p.num_clusters();
  Eigen::VectorXd idx(D());
  for (int k = 0; k < D(); ++k) {
    auto [s, v] = index_map_[static_cast<size_t>(k)];
    idx[k] = p.label(s) * m + p.label(v);
  }
  return idx;
}

double ArrayModel::log_marginal_uncached(const Partition& p) const {
  const int d = D();
  Eigen::VectorXd blocks = block_index(p);
  // total covariance tau0^2 * X X' + Sigma, where (X X')_{ab} = [block_a == block_b]
  Eigen::MatrixXd total = sigma_;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      if (blocks[a] == blocks[b]) total(a, b) += tau0sq_;

  Eigen::LLT<Eigen::MatrixXd> llt(total);
  if (llt.info() != Eigen::Success)
    throw NumericError("marginal covariance factorization failed for partition " +
                       p.to_string());
  Eigen::VectorXd centered = z_.array() - m0_;
  Eigen::VectorXd solved = llt.solve(centered);
  double logdet = 0.0;
  for (int i = 0; i < d; ++i) logdet += std::log(llt.matrixL()(i, i));
  logdet *= 2.0;
  return -0.5 * (d * std::log(2.0 * M_PI) + logdet + centered.dot(solved));
}

double ArrayModel::log_marginal(const Partition& p) const {
  if (p.size() != S_) throw DataError("partition size does not match Z");
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    auto it = cache_.find(p);
    if (it != cache_.end()) return it->second;
  }
  double value = log_marginal_uncached(p);
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    cache_.emplace(p, value);
  }
  return value;
}

double ArrayModel::log_posterior_kernel(const Partition& p) const {
  return crp_log_prior(p, config_.alpha) + log_marginal(p);
}

std::map<Partition, double> ArrayModel::exact_posterior() const {
  if (S_ > 10)
    throw ConfigError("exact_posterior is limited to S <= 10, got S=" + std::to_string(S_));
  std::vector<Partition> all = enumerate_partitions(S_);
  std::vector<double> log_weights(all.size());
  for (size_t i = 0; i < all.size(); ++i) log_weights[i] = log_posterior_kernel(all[i]);
  double max_lw = *std::max_element(log_weights.begin(), log_weights.end());
  double total = 0.0;
  for (double lw : log_weights) total += std::exp(lw - max_lw);
  std::map<Partition, double> posterior;
  for (size_t i = 0; i < all.size(); ++i)
    posterior[all[i]] = std::exp(log_weights[i] - max_lw) / total;
  return posterior;
}

Eigen::MatrixXd ArrayModel::sample_mu_blocks(const Partition& p, RngStream& rng) const {
  const int m = p.num_clusters();
  const int K = m * m;
  Eigen::VectorXd blocks = block_index(p);

  // posterior precision tau0^-2 I + X' Sigma^-1 X via block-indexed sums
  Eigen::MatrixXd precision = Eigen::MatrixXd::Zero(K, K);
  Eigen::VectorXd lin = Eigen::VectorXd::Zero(K);
  Eigen::VectorXd siz = sigma_inv_ * z_;
  for (int a = 0; a < D(); ++a) {
    int ba = static_cast<int>(blocks[a]);
    lin[ba] += siz[a];
    for (int b = 0; b < D(); ++b) precision(ba, static_cast<int>(blocks[b])) += sigma_inv_(a, b);
  }
  precision.diagonal().array() += 1.0 / tau0sq_;
  lin.array() += m0_ / tau0sq_;

  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success)
    throw NumericError("mu-posterior precision factorization failed for partition " +
                       p.to_string());
  Eigen::VectorXd mean = llt.solve(lin);
  // draw: mean + L^-T xi, since cov = precision^-1 = (L L')^-1
  Eigen::VectorXd xi(K);
  for (int k = 0; k < K; ++k) xi[k] = rng.normal();
  Eigen::VectorXd draw = mean + llt.matrixU().solve(xi);

  Eigen::MatrixXd mu(m, m);
  for (int j = 0; j < m; ++j)
    for (int k = 0; k < m; ++k) mu(j, k) = draw[j * m + k];
  return mu;
}

GibbsRun ArrayModel::gibbs(const RngStream& rng) const {
  GibbsRun run;
  run.chains = config_.chains;
  std::vector<std::vector<PosteriorSample>> per_chain(static_cast<size_t>(config_.chains));

  parallel_for(config_.chains, config_.chains, [&](int chain) {
    RngStream chain_rng = rng.child("chain", static_cast<uint64_t>(chain));
    Partition current = Partition::singletons(S_);
    std::vector<PosteriorSample>& kept = per_chain[static_cast<size_t>(chain)];

    for (int iter = 0; iter < config_.mcmc_iterations; ++iter) {
      std::vector<int> order = chain_rng.permutation(S_);
      for (int s : order) {
        // candidate labels: every cluster present among the other studies + new
        std::vector<int> raw = current.labels();
        std::vector<int> candidates;
        {
          std::vector<char> seen(static_cast<size_t>(S_) + 1, 0);
          for (int i = 0; i < S_; ++i) {
            if (i == s) continue;
            int lab = raw[static_cast<size_t>(i)];
            if (!seen[static_cast<size_t>(lab)]) {
              seen[static_cast<size_t>(lab)] = 1;
              candidates.push_back(lab);
            }
          }
          int fresh = 0;
          while (seen[static_cast<size_t>(fresh)]) ++fresh;
          candidates.push_back(fresh);
        }

        std::vector<Partition> moves;
        std::vector<double> log_w;
        moves.reserve(candidates.size());
        for (int lab : candidates) {
          std::vector<int> trial = raw;
          trial[static_cast<size_t>(s)] = lab;
          Partition q(std::move(trial));
          log_w.push_back(log_posterior_kernel(q));
          moves.push_back(std::move(q));
        }
        double max_lw = *std::max_element(log_w.begin(), log_w.end());
        double total = 0.0;
        for (double& lw : log_w) {
          lw = std::exp(lw - max_lw);
          total += lw;
        }
        double u = chain_rng.uniform() * total;
        size_t pick = 0;
        for (double acc = 0.0; pick < log_w.size(); ++pick) {
          acc += log_w[pick];
          if (u <= acc) break;
        }
        if (pick >= moves.size()) pick = moves.size() - 1;
        current = moves[pick];
      }

      if (iter >= config_.burn_in && (iter - config_.burn_in) % config_.thin == 0) {
        PosteriorSample sample;
        sample.partition = current;
        sample.mu_blocks = sample_mu_blocks(current, chain_rng);
        sample.log_posterior = log_posterior_kernel(current);
        kept.push_back(std::move(sample));
      }
    }
  });

  // between-chain agreement on coclustering entries
  if (config_.chains >= 2) {
    std::vector<Eigen::MatrixXd> cocl;
    for (const auto& chain : per_chain) {
      Eigen::MatrixXd c = Eigen::MatrixXd::Zero(S_, S_);
      for (const auto& sample : chain)
        for (int s = 0; s < S_; ++s)
          for (int v = 0; v < S_; ++v)
            if (sample.partition.label(s) == sample.partition.label(v)) c(s, v) += 1.0;
      c /= static_cast<double>(chain.size());
      cocl.push_back(std::move(c));
    }
    for (size_t a = 0; a < cocl.size(); ++a)
      for (size_t b = a + 1; b < cocl.size(); ++b)
        run.between_chain_discrepancy =
            std::max(run.between_chain_discrepancy, (cocl[a] - cocl[b]).cwiseAbs().maxCoeff());
  }

  for (auto& chain : per_chain)
    run.samples.insert(run.samples.end(), std::make_move_iterator(chain.begin()),
                       std::make_move_iterator(chain.end()));
  return run;
}

std::vector<PosteriorSample> ArrayModel::sample_from_exact(
    const std::map<Partition, double>& posterior, int n_draws, const RngStream& rng) const {
  if (posterior.empty()) throw DataError("cannot sample from an empty posterior");
  if (n_draws < 1) throw ConfigError("n_draws must be positive");
  std::vector<const Partition*> atoms;
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& [p, prob] : posterior) {
    acc += prob;
    atoms.push_back(&p);
    cumulative.push_back(acc);
  }
  std::vector<PosteriorSample> out(static_cast<size_t>(n_draws));
  parallel_for(n_draws, 1, [&](int k) {
    RngStream draw = rng.child("exact-draw", static_cast<uint64_t>(k));
    double u = draw.uniform() * acc;
    size_t lo = static_cast<size_t>(
        std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    if (lo >= atoms.size()) lo = atoms.size() - 1;
    PosteriorSample sample;
    sample.partition = *atoms[lo];
    sample.mu_blocks = sample_mu_blocks(sample.partition, draw);
    sample.log_posterior = log_posterior_kernel(sample.partition);
    out[static_cast<size_t>(k)] = std::move(sample);
  });
  return out;
}

double log_marginal_likelihood(const ZMatrix& z, const Partition& p,
                               const DispersionEstimate& disp, const ModelConfig& config) {
  return ArrayModel(z, disp, config).log_marginal(p);
}

std::map<Partition, double> exact_posterior(const ZMatrix& z, const DispersionEstimate& disp,
                                            const ModelConfig& config) {
  return ArrayModel(z, disp, config).exact_posterior();
}

GibbsRun gibbs_sample(const ZMatrix& z, const DispersionEstimate& disp,
                      const ModelConfig& config, const RngStream& rng) {
  return ArrayModel(z, disp, config).gibbs(rng);
}

namespace {

// type-7 empirical quantile with linear interpolation
double quantile_type7(std::vector<double> sorted, double q) {
  const size_t n = sorted.size();
  if (n == 1) return sorted[0];
  double h = (static_cast<double>(n) - 1.0) * q;
  size_t lo = static_cast<size_t>(std::floor(h));
  size_t hi = std::min(lo + 1, n - 1);
  double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

PredictiveInterval interval_of(std::vector<double> values, double level) {
  std::sort(values.begin(), values.end());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  PredictiveInterval out;
  out.mean = mean;
  out.lo = std::min(quantile_type7(values, (1.0 - level) / 2.0), mean);
  out.hi = std::max(quantile_type7(values, 1.0 - (1.0 - level) / 2.0), mean);
  return out;
}

}  // namespace

PosteriorSummary summarize(const std::vector<PosteriorSample>& samples, double level) {
  if (samples.empty()) throw DataError("summarize: no posterior samples");
  if (!(level > 0 && level < 1)) throw ConfigError("credible level must lie in (0,1)");
  const int S = samples.front().partition.size();
  const double N = static_cast<double>(samples.size());

  PosteriorSummary out;
  out.coclustering = Eigen::MatrixXd::Zero(S, S);
  out.mu_posterior_mean =
      Eigen::MatrixXd::Constant(S, S, std::numeric_limits<double>::quiet_NaN());
  out.mu_credible.level = level;
  out.mu_credible.lo = out.mu_posterior_mean;
  out.mu_credible.hi = out.mu_posterior_mean;

  for (const auto& sample : samples) {
    if (sample.partition.size() != S) throw DataError("summarize: inconsistent sample sizes");
    for (int s = 0; s < S; ++s)
      for (int v = 0; v < S; ++v)
        if (sample.partition.label(s) == sample.partition.label(v)) out.coclustering(s, v) += 1.0;
  }
  out.coclustering /= N;

  std::vector<double> values(samples.size());
  for (int s = 0; s < S; ++s) {
    for (int v = 0; v < S; ++v) {
      if (s == v) continue;
      for (size_t k = 0; k < samples.size(); ++k)
        values[k] = samples[k].mu_blocks(samples[k].partition.label(s),
                                         samples[k].partition.label(v));
      PredictiveInterval iv = interval_of(values, level);
      out.mu_posterior_mean(s, v) = iv.mean;
      out.mu_credible.lo(s, v) = iv.lo;
      out.mu_credible.hi(s, v) = iv.hi;
    }
  }

  std::map<Partition, double> freq;
  std::vector<Partition> partitions;
  partitions.reserve(samples.size());
  for (const auto& sample : samples) {
    freq[sample.partition] += 1.0 / N;
    partitions.push_back(sample.partition);
  }
  out.partition_frequencies.assign(freq.begin(), freq.end());
  out.point_estimate = point_estimate(partitions);
  return out;
}

std::vector<double> crp_step_probabilities(const Partition& p, double alpha) {
  if (!(alpha > 0)) throw ConfigError("alpha must be positive");
  const int S = p.size();
  const int m = p.num_clusters();
  std::vector<double> probs(static_cast<size_t>(m) + 1);
  for (int i = 0; i < S; ++i) probs[static_cast<size_t>(p.label(i))] += 1.0;
  for (int c = 0; c < m; ++c) probs[static_cast<size_t>(c)] /= (S + alpha);
  probs[static_cast<size_t>(m)] = alpha / (S + alpha);
  return probs;
}

NewStudyPrediction predict_new_study(const std::vector<PosteriorSample>& samples,
                                     const ModelConfig& config, const RngStream& rng) {
  if (samples.empty()) throw DataError("predict_new_study: no posterior samples");
  config.validate();
  const int S = samples.front().partition.size();
  // prior parameters for fresh blocks: use the configured values when given,
  // else infer from the spread of sampled block means
  double m0, tau0;
  if (config.mu_prior_mean && config.mu_prior_var) {
    m0 = *config.mu_prior_mean;
    tau0 = std::sqrt(*config.mu_prior_var);
  } else {
    double sum = 0.0, sq = 0.0;
    long count = 0;
    for (const auto& sample : samples)
      for (int j = 0; j < sample.mu_blocks.rows(); ++j)
        for (int k = 0; k < sample.mu_blocks.cols(); ++k) {
          sum += sample.mu_blocks(j, k);
          sq += sample.mu_blocks(j, k) * sample.mu_blocks(j, k);
          ++count;
        }
    m0 = config.mu_prior_mean.value_or(sum / static_cast<double>(count));
    double var = sq / static_cast<double>(count) - m0 * m0;
    tau0 = std::sqrt(config.mu_prior_var.value_or(std::max(var, 1e-6)));
  }

  std::vector<std::vector<double>> train_vals(static_cast<size_t>(S)),
      valid_vals(static_cast<size_t>(S));
  for (size_t k = 0; k < samples.size(); ++k) {
    const auto& sample = samples[k];
    RngStream draw = rng.child("predict", static_cast<uint64_t>(k));
    std::vector<double> probs = crp_step_probabilities(sample.partition, config.alpha);
    double u = draw.uniform();
    int pick = 0;
    double acc = 0.0;
    for (size_t c = 0; c < probs.size(); ++c) {
      acc += probs[c];
      pick = static_cast<int>(c);
      if (u <= acc) break;
    }
    const int m = sample.partition.num_clusters();
    if (pick < m) {
      for (int s = 0; s < S; ++s) {
        int cs = sample.partition.label(s);
        train_vals[static_cast<size_t>(s)].push_back(sample.mu_blocks(pick, cs));
        valid_vals[static_cast<size_t>(s)].push_back(sample.mu_blocks(cs, pick));
      }
    } else {
      // new cluster: fresh block means per (new, cluster) pair, shared within clusters
      std::vector<double> fresh_train(static_cast<size_t>(m)), fresh_valid(static_cast<size_t>(m));
      for (int c = 0; c < m; ++c) {
        fresh_train[static_cast<size_t>(c)] = draw.normal(m0, tau0);
        fresh_valid[static_cast<size_t>(c)] = draw.normal(m0, tau0);
      }
      for (int s = 0; s < S; ++s) {
        int cs = sample.partition.label(s);
        train_vals[static_cast<size_t>(s)].push_back(fresh_train[static_cast<size_t>(cs)]);
        valid_vals[static_cast<size_t>(s)].push_back(fresh_valid[static_cast<size_t>(cs)]);
      }
    }
  }

  NewStudyPrediction out;
  out.level = config.credible_level;
  for (int s = 0; s < S; ++s) {
    out.train_new.push_back(interval_of(train_vals[static_cast<size_t>(s)], out.level));
    out.validate_new.push_back(interval_of(valid_vals[static_cast<size_t>(s)], out.level));
  }
  return out;
}

}  // namespace crossval
