#include "crossval/bootstrap.hpp"

#include <algorithm>
#include <cmath>

#include "crossval/errors.hpp"
#include "crossval/parallel.hpp"

namespace crossval {

std::string to_string(BootstrapMode mode) {
  return mode == BootstrapMode::frequentist ? "frequentist" : "bayesian";
}

BootstrapMode bootstrap_mode_from_string(const std::string& s) {
  if (s == "frequentist") return BootstrapMode::frequentist;
  if (s == "bayesian") return BootstrapMode::bayesian;
  throw ConfigError("unknown bootstrap mode '" + s + "'");
}

std::vector<std::pair<int, int>> ZReplicateSet::index_map() const {
  std::vector<std::pair<int, int>> map;
  for (int s = 0; s < S(); ++s)
    for (int v = 0; v < S(); ++v)
      if (s != v) map.emplace_back(s, v);
  return map;
}

namespace {

ZMatrix one_replicate(const StudyCollection& collection, const LearnerSpec& learner,
                      const MetricSpec& metric, const BootstrapOptions& options,
                      const std::map<std::string, double>& frozen, const RngStream& rng,
                      int rep, bool retry) {
  const char* tag = retry ? "retry" : "rep";
  StudyOverrides overrides;
  overrides.frozen_penalties = learner.penalty != PenaltyKind::none && learner.freeze_penalty
                                   ? &frozen
                                   : nullptr;

  if (options.mode == BootstrapMode::frequentist) {
    StudyCollection resampled;
    resampled.shared_features = collection.shared_features;
    for (const auto& study : collection.studies) {
      RngStream draw = rng.child(tag, static_cast<uint64_t>(rep), fnv1a64(study.id));
      const int n = static_cast<int>(study.n());
      std::vector<int> idx(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i)
        idx[static_cast<size_t>(i)] = static_cast<int>(draw.uniform_int(static_cast<uint64_t>(n)));
      resampled.studies.push_back(study.rows(idx, study.id));
    }
    RngStream zrng = rng.child("z", static_cast<uint64_t>(rep), retry ? 1u : 0u);
    if (options.training_size)
      return compute_z_adjusted(resampled, learner, metric, *options.training_size,
                                options.subsample_iterations, zrng, 1, overrides);
    return compute_z(resampled, learner, metric, zrng, 1, overrides);
  }

  // Bayesian: normalized unit-exponential weights per study row
  std::map<std::string, Eigen::VectorXd> weights;
  for (const auto& study : collection.studies) {
    RngStream draw = rng.child(tag, static_cast<uint64_t>(rep), fnv1a64(study.id));
    const Eigen::Index n = study.n();
    Eigen::VectorXd w(n);
    if (options.uniform_weights_hook) {
      w.setOnes();
    } else {
      for (Eigen::Index i = 0; i < n; ++i) w[i] = draw.exponential();
      w *= static_cast<double>(n) / w.sum();  // mean-1 normalization within study
    }
    weights[study.id] = std::move(w);
  }
  StudyOverrides weighted = overrides;
  weighted.weights = &weights;
  RngStream zrng = rng.child("z", static_cast<uint64_t>(rep), retry ? 1u : 0u);
  if (options.training_size)
    return compute_z_adjusted(collection, learner, metric, *options.training_size,
                              options.subsample_iterations, zrng, 1, weighted);
  return compute_z(collection, learner, metric, zrng, 1, weighted);
}

}  // namespace

ZReplicateSet bootstrap_z(const StudyCollection& collection, const LearnerSpec& learner,
                          const MetricSpec& metric, const BootstrapOptions& options,
                          const RngStream& rng) {
  collection.validate();
  if (options.B_reps < 2) throw ConfigError("bootstrap needs B_reps >= 2");

  // penalties tuned once per study on the original full data
  std::map<std::string, double> frozen;
  if (learner.penalty != PenaltyKind::none && learner.freeze_penalty) {
    for (const auto& study : collection.studies) {
      RngStream tune_stream = rng.child("freeze-tune", fnv1a64(study.id));
      frozen[study.id] = tune_penalty(learner, study, tune_stream);
    }
  }

  ZReplicateSet out;
  out.mode = options.mode;
  out.master_seed = rng.key();
  out.metric = metric;
  out.learner = learner;
  out.training_size = options.training_size;
  out.replicates.resize(static_cast<size_t>(options.B_reps));

  // resampling preserves study sizes, so the thresholded id set is known upfront
  for (const auto& study : collection.studies)
    if (!options.training_size || study.n() >= *options.training_size)
      out.study_ids.push_back(study.id);

  parallel_for(options.B_reps, options.workers, [&](int rep) {
    ZMatrix z;
    try {
      z = one_replicate(collection, learner, metric, options, frozen, rng, rep, false);
    } catch (const Error&) {
      // one retry with a fresh resample, then propagate
      z = one_replicate(collection, learner, metric, options, frozen, rng, rep, true);
    }
    if (z.study_ids != out.study_ids)
      throw DataError("bootstrap replicate " + std::to_string(rep) +
                      " has mismatched study ids");
    out.replicates[static_cast<size_t>(rep)] = z.values;
  });
  return out;
}

void DispersionEstimate::validate() const {
  const int d = D();
  if (covariance.rows() != d || covariance.cols() != d)
    throw NumericError("dispersion covariance shape mismatch");
  double asym = (covariance - covariance.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * std::max(1.0, covariance.cwiseAbs().maxCoeff()))
    throw NumericError("dispersion covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0)
    throw NumericError("dispersion covariance is not positive definite");
}

DispersionEstimate estimate_dispersion(const ZReplicateSet& reps, double shrinkage_lambda,
                                       double jitter_floor) {
  if (reps.B() < 2) throw ConfigError("estimate_dispersion needs at least 2 replicates");
  if (shrinkage_lambda < 0 || shrinkage_lambda > 1)
    throw ConfigError("shrinkage_lambda must lie in [0, 1]");
  if (!(jitter_floor > 0)) throw ConfigError("jitter_floor must be positive");

  DispersionEstimate out;
  out.index_map = reps.index_map();
  out.shrinkage_lambda = shrinkage_lambda;
  const int D = out.D();
  const int B = reps.B();

  Eigen::MatrixXd rows(B, D);
  for (int b = 0; b < B; ++b) {
    const Eigen::MatrixXd& z = reps.replicates[static_cast<size_t>(b)];
    for (int k = 0; k < D; ++k) {
      double value = z(out.index_map[static_cast<size_t>(k)].first,
                       out.index_map[static_cast<size_t>(k)].second);
      if (!std::isfinite(value))
        throw DataError("replicate " + std::to_string(b) + " has a non-finite Z entry");
      rows(b, k) = value;
    }
  }
  Eigen::RowVectorXd mean = rows.colwise().mean();
  Eigen::MatrixXd centered = rows.rowwise() - mean;
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(B - 1);

  Eigen::MatrixXd shrunk = (1.0 - shrinkage_lambda) * cov;
  shrunk.diagonal() = cov.diagonal();  // shrinkage preserves the diagonal
  shrunk = 0.5 * (shrunk + shrunk.transpose());

  // smallest jitter from {0, floor, 10*floor, ...} reaching lambda_min >= 1e-10
  double jitter = 0.0;
  for (int step = 0; step < 40; ++step) {
    Eigen::MatrixXd trial = shrunk;
    trial.diagonal().array() += jitter;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(trial);
    if (es.info() == Eigen::Success && es.eigenvalues().minCoeff() >= 1e-10) {
      out.covariance = trial;
      out.jitter = jitter;
      out.validate();
      return out;
    }
    jitter = jitter == 0.0 ? jitter_floor : 10.0 * jitter;
  }
  throw NumericError("estimate_dispersion could not reach positive definiteness by jittering");
}

std::vector<EntryDiagnostics> normality_diagnostics(const ZReplicateSet& reps) {
  if (reps.B() < 100) throw ConfigError("normality diagnostics need B_reps >= 100");
  auto map = reps.index_map();
  const int B = reps.B();
  std::vector<EntryDiagnostics> out;
  out.reserve(map.size());
  std::vector<double> x(static_cast<size_t>(B));
  for (auto [s, v] : map) {
    for (int b = 0; b < B; ++b) x[static_cast<size_t>(b)] = reps.replicates[static_cast<size_t>(b)](s, v);
    double m = 0;
    for (double xi : x) m += xi;
    m /= B;
    double m2 = 0, m3 = 0, m4 = 0;
    for (double xi : x) {
      double d = xi - m;
      m2 += d * d;
      m3 += d * d * d;
      m4 += d * d * d * d;
    }
    m2 /= B;
    m3 /= B;
    m4 /= B;

    EntryDiagnostics diag;
    diag.s = s;
    diag.v = v;
    if (m2 > 1e-300) {
      diag.skewness = m3 / std::pow(m2, 1.5);
      diag.excess_kurtosis = m4 / (m2 * m2) - 3.0;
      double sd = std::sqrt(m2);
      std::vector<double> sorted = x;
      std::sort(sorted.begin(), sorted.end());
      double ks = 0.0;
      for (int i = 0; i < B; ++i) {
        double fitted = 0.5 * std::erfc(-(sorted[static_cast<size_t>(i)] - m) / (sd * std::sqrt(2.0)));
        ks = std::max(ks, std::abs((i + 1.0) / B - fitted));
        ks = std::max(ks, std::abs(fitted - static_cast<double>(i) / B));
      }
      diag.ks_distance = ks;
    }
    diag.skew_flag = std::abs(diag.skewness) > 0.5;
    out.push_back(diag);
  }
  return out;
}

}  // namespace crossval
