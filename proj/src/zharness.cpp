#include "crossval/zharness.hpp"

#include <algorithm>
#include <cmath>

#include "crossval/errors.hpp"
#include "crossval/parallel.hpp"

namespace crossval {

double ZMatrix::at(int s, int v) const {
  if (s == v) throw DataError("ZMatrix diagonal is absent and must not be read");
  if (s < 0 || v < 0 || s >= size() || v >= size())
    throw DataError("ZMatrix index out of range");
  return values(s, v);
}

void ZMatrix::set(int s, int v, double value) {
  if (s == v) throw DataError("ZMatrix diagonal cannot be written");
  values(s, v) = value;
}

void ZMatrix::validate() const {
  const int S = size();
  if (S < 2) throw DataError("ZMatrix needs at least 2 studies");
  if (values.rows() != S || values.cols() != S) throw DataError("ZMatrix shape mismatch");
  for (int s = 0; s < S; ++s)
    for (int v = 0; v < S; ++v)
      if (s != v && !std::isfinite(values(s, v)))
        throw DataError("ZMatrix has a non-finite entry at (" + std::to_string(s) + "," +
                        std::to_string(v) + ")");
}

std::vector<std::pair<int, int>> ZMatrix::index_map() const {
  std::vector<std::pair<int, int>> map;
  const int S = size();
  map.reserve(static_cast<size_t>(S) * (S - 1));
  for (int s = 0; s < S; ++s)
    for (int v = 0; v < S; ++v)
      if (s != v) map.emplace_back(s, v);
  return map;
}

Eigen::VectorXd ZMatrix::vectorized() const {
  auto map = index_map();
  Eigen::VectorXd z(static_cast<Eigen::Index>(map.size()));
  for (size_t k = 0; k < map.size(); ++k) z[static_cast<Eigen::Index>(k)] = values(map[k].first, map[k].second);
  return z;
}

std::optional<FittedModel> ModelCache::find_model(uint64_t key) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = models_.find(key);
  if (it == models_.end()) return std::nullopt;
  return it->second;
}

void ModelCache::put_model(uint64_t key, const FittedModel& model) {
  std::lock_guard<std::mutex> lock(mutex_);
  models_.emplace(key, model);  // identical content under the same key
}

std::optional<double> ModelCache::find_penalty(uint64_t key) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = penalties_.find(key);
  if (it == penalties_.end()) return std::nullopt;
  return it->second;
}

void ModelCache::put_penalty(uint64_t key, double value) {
  std::lock_guard<std::mutex> lock(mutex_);
  penalties_.emplace(key, value);
}

size_t ModelCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return models_.size();
}

uint64_t training_set_fingerprint(const std::vector<std::string>& member_ids,
                                  const std::optional<std::string>& exclude,
                                  const LearnerSpec& learner) {
  std::vector<std::string> sorted = member_ids;
  std::sort(sorted.begin(), sorted.end());
  uint64_t h = learner.fingerprint();
  for (const auto& id : sorted) {
    if (exclude && id == *exclude) continue;
    h = hash_combine(h, fnv1a64(id));
  }
  return h;
}

namespace {

const Eigen::VectorXd* study_weights(const StudyOverrides& overrides, const std::string& id) {
  if (!overrides.weights) return nullptr;
  auto it = overrides.weights->find(id);
  return it == overrides.weights->end() ? nullptr : &it->second;
}

std::optional<double> frozen_penalty(const StudyOverrides& overrides, const std::string& id) {
  if (!overrides.frozen_penalties) return std::nullopt;
  auto it = overrides.frozen_penalties->find(id);
  if (it == overrides.frozen_penalties->end()) return std::nullopt;
  return it->second;
}

template <typename Fn>
auto annotate_cell(const std::string& train_id, const std::string& valid_id, Fn&& fn) {
  auto tag = [&](const std::string& what) {
    return "Z[" + train_id + " -> " + valid_id + "]: " + what;
  };
  try {
    return fn();
  } catch (const DataError& e) {
    throw DataError(tag(e.what()));
  } catch (const NumericError& e) {
    throw NumericError(tag(e.what()));
  } catch (const ConfigError& e) {
    throw ConfigError(tag(e.what()));
  }
}

}  // namespace

ZMatrix compute_z(const StudyCollection& collection, const LearnerSpec& learner,
                  const MetricSpec& metric, const RngStream& rng, int workers,
                  const StudyOverrides& overrides) {
  collection.validate();
  learner.validate();
  metric.validate();
  const int S = collection.size();
  ZMatrix z;
  z.study_ids.reserve(static_cast<size_t>(S));
  for (const auto& study : collection.studies) z.study_ids.push_back(study.id);
  z.values = Eigen::MatrixXd::Constant(S, S, std::numeric_limits<double>::quiet_NaN());
  z.metric = metric;
  z.learner = learner;

  parallel_for(S, workers, [&](int s) {
    const StudyDataset& train = collection.studies[static_cast<size_t>(s)];
    const Eigen::VectorXd* w_train = study_weights(overrides, train.id);
    RngStream stream = rng.child("train", fnv1a64(train.id));
    FittedModel model = annotate_cell(train.id, "*", [&] {
      if (auto lam = frozen_penalty(overrides, train.id))
        return fit(learner, train, *lam, w_train);
      return fit_tuned(learner, train, stream, w_train);
    });
    for (int v = 0; v < S; ++v) {
      if (v == s) continue;
      const StudyDataset& valid = collection.studies[static_cast<size_t>(v)];
      annotate_cell(train.id, valid.id, [&] {
        Eigen::VectorXd pred = predict(model, valid.features);
        z.set(s, v, evaluate(metric, pred, valid.outcome, study_weights(overrides, valid.id)));
        return 0;
      });
    }
  });
  z.validate();
  return z;
}

ZMatrix compute_z_adjusted(const StudyCollection& collection, const LearnerSpec& learner,
                           const MetricSpec& metric, int n0, int iterations,
                           const RngStream& rng, int workers,
                           const StudyOverrides& overrides) {
  collection.validate();
  learner.validate();
  metric.validate();
  if (n0 < 1) throw ConfigError("training_size must be positive");
  if (iterations < 1) throw ConfigError("subsample iterations must be positive");

  StudyCollection included;
  ZMatrix z;
  for (const auto& study : collection.studies) {
    if (study.n() >= n0) included.studies.push_back(study);
    else z.dropped_study_ids.push_back(study.id);
  }
  const int S = included.size();
  if (S < 2)
    throw DataError("fewer than 2 studies meet the training-size threshold n0=" +
                    std::to_string(n0));

  for (const auto& study : included.studies) z.study_ids.push_back(study.id);
  z.values = Eigen::MatrixXd::Constant(S, S, std::numeric_limits<double>::quiet_NaN());
  z.metric = metric;
  z.learner = learner;
  z.training_size = n0;
  z.subsample_iterations = iterations;

  parallel_for(S, workers, [&](int s) {
    const StudyDataset& train = included.studies[static_cast<size_t>(s)];
    const Eigen::VectorXd* w_train = study_weights(overrides, train.id);

    // penalty tuned once on the full study, reused across subsample draws
    double lambda = 0.0;
    if (learner.penalty != PenaltyKind::none) {
      if (auto lam = frozen_penalty(overrides, train.id)) {
        lambda = *lam;
      } else if (learner.freeze_penalty) {
        RngStream tune_stream = rng.child("tune", fnv1a64(train.id));
        lambda = annotate_cell(train.id, "*",
                               [&] { return tune_penalty(learner, train, tune_stream, w_train); });
      }
    }

    Eigen::VectorXd acc = Eigen::VectorXd::Zero(S);
    for (int iter = 0; iter < iterations; ++iter) {
      // one subsample + fit per iteration, validated on every other study
      RngStream draw = rng.child("sub", fnv1a64(train.id), static_cast<uint64_t>(iter));
      FittedModel model = annotate_cell(train.id, "*", [&] {
        std::vector<int> idx =
            draw.sample_without_replacement(static_cast<int>(train.n()), n0);
        StudyDataset sub = train.rows(idx, train.id + "#n0");
        Eigen::VectorXd wsub;
        const Eigen::VectorXd* wp = nullptr;
        if (w_train) {
          wsub.resize(n0);
          for (int i = 0; i < n0; ++i) wsub[i] = (*w_train)[idx[static_cast<size_t>(i)]];
          wp = &wsub;
        }
        if (learner.penalty != PenaltyKind::none && !learner.freeze_penalty &&
            !frozen_penalty(overrides, train.id)) {
          RngStream tune_stream = draw.child("tune");
          lambda = tune_penalty(learner, sub, tune_stream, wp);
        }
        return fit(learner, sub, lambda, wp);
      });
      for (int v = 0; v < S; ++v) {
        if (v == s) continue;
        const StudyDataset& valid = included.studies[static_cast<size_t>(v)];
        annotate_cell(train.id, valid.id, [&] {
          Eigen::VectorXd pred = predict(model, valid.features);
          acc[v] += evaluate(metric, pred, valid.outcome, study_weights(overrides, valid.id));
          return 0;
        });
      }
    }
    for (int v = 0; v < S; ++v)
      if (v != s) z.set(s, v, acc[v] / iterations);
  });
  z.validate();
  return z;
}

double compute_z_combined(const StudyCollection& collection,
                          const std::vector<std::string>& B, const std::string& v,
                          const LearnerSpec& learner, const MetricSpec& metric,
                          const RngStream& rng, ModelCache* cache) {
  const StudyDataset& valid = collection.by_id(v);
  uint64_t key = training_set_fingerprint(B, v, learner);
  FittedModel model;
  if (cache) {
    if (auto hit = cache->find_model(key)) {
      model = *hit;
    } else {
      StudyDataset train = combine(collection, B, v);
      RngStream stream = rng.child("combined", key);
      model = fit_tuned(learner, train, stream);
      cache->put_model(key, model);
    }
  } else {
    StudyDataset train = combine(collection, B, v);
    RngStream stream = rng.child("combined", key);
    model = fit_tuned(learner, train, stream);
  }
  Eigen::VectorXd pred = predict(model, valid.features);
  return evaluate(metric, pred, valid.outcome);
}

double compute_z_subsampled(const StudyCollection& collection,
                            const std::vector<std::string>& B, const std::string& s, int j,
                            int iterations, const LearnerSpec& learner,
                            const MetricSpec& metric, const RngStream& rng,
                            ModelCache* cache) {
  if (j < 1) throw ConfigError("subsample size j must be positive");
  if (iterations < 1) throw ConfigError("subsample iterations must be positive");
  const StudyDataset& valid = collection.by_id(s);
  StudyDataset pool = combine(collection, B, s);
  const int pool_n = static_cast<int>(pool.n());
  if (pool_n < j)
    throw DataError("Z^j pool of " + std::to_string(pool_n) + " rows is smaller than j=" +
                    std::to_string(j));

  uint64_t pool_key = training_set_fingerprint(B, s, learner);
  double lambda = 0.0;
  if (learner.penalty != PenaltyKind::none && learner.freeze_penalty) {
    // tuned once on the full pool, through the same stream compute_z_combined
    // uses, so the exhaustive draw j = |pool| reproduces Z_{B,s} exactly
    std::optional<double> hit = cache ? cache->find_penalty(pool_key) : std::nullopt;
    if (hit) {
      lambda = *hit;
    } else {
      RngStream tune_stream = rng.child("combined", pool_key).child("tune");
      lambda = tune_penalty(learner, pool, tune_stream);
      if (cache) cache->put_penalty(pool_key, lambda);
    }
  }

  double acc = 0.0;
  for (int iter = 0; iter < iterations; ++iter) {
    RngStream draw = rng.child("zj", hash_combine(pool_key, static_cast<uint64_t>(j)),
                               static_cast<uint64_t>(iter));
    StudyDataset sub = pool;
    if (j < pool_n) {
      std::vector<int> idx = draw.sample_without_replacement(pool_n, j);
      sub = pool.rows(idx, pool.id + "#j" + std::to_string(j));
    }
    FittedModel model;
    if (learner.penalty != PenaltyKind::none && !learner.freeze_penalty) {
      RngStream tune_stream = draw.child("tune");
      model = fit_tuned(learner, sub, tune_stream);
    } else {
      model = fit(learner, sub, lambda);
    }
    Eigen::VectorXd pred = predict(model, valid.features);
    acc += evaluate(metric, pred, valid.outcome);
  }
  return acc / iterations;
}

}  // namespace crossval
