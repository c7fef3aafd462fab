#pragma once

#include <Eigen/Dense>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "crossval/data.hpp"
#include "crossval/learners.hpp"
#include "crossval/metrics.hpp"

namespace crossval {

// Leave-one-in array: entry (s,v) is the statistic of a model trained on
// study s and validated on study v. The diagonal is absent and never read.
struct ZMatrix {
  std::vector<std::string> study_ids;
  Eigen::MatrixXd values;  // NaN on the diagonal
  MetricSpec metric;
  LearnerSpec learner;
  std::optional<int> training_size;          // set for Z^{n0}
  std::optional<int> subsample_iterations;   // set for Z^{n0}
  std::vector<std::string> dropped_study_ids;  // below-threshold studies

  int size() const { return static_cast<int>(study_ids.size()); }
  double at(int s, int v) const;
  void set(int s, int v, double value);
  void validate() const;

  // ordered off-diagonal pairs (s,v), lexicographic; D = S(S-1)
  std::vector<std::pair<int, int>> index_map() const;
  Eigen::VectorXd vectorized() const;  // values in index_map order
};

// Cache of fitted models and tuned penalties keyed by content fingerprints
// (training-set membership + learner). Safe for concurrent use.
class ModelCache {
 public:
  std::optional<FittedModel> find_model(uint64_t key) const;
  void put_model(uint64_t key, const FittedModel& model);
  std::optional<double> find_penalty(uint64_t key) const;
  void put_penalty(uint64_t key, double value);
  size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::unordered_map<uint64_t, FittedModel> models_;
  std::unordered_map<uint64_t, double> penalties_;
};

// fingerprint of a training configuration: sorted member ids + exclusion
uint64_t training_set_fingerprint(const std::vector<std::string>& member_ids,
                                  const std::optional<std::string>& exclude,
                                  const LearnerSpec& learner);

// Optional per-study inputs used by the bootstrap: observation weights and
// penalties tuned once on the full data.
struct StudyOverrides {
  const std::map<std::string, Eigen::VectorXd>* weights = nullptr;
  const std::map<std::string, double>* frozen_penalties = nullptr;
};

// Z_{s,v} for every ordered pair: fit (with tuning) on s, evaluate on v.
ZMatrix compute_z(const StudyCollection& collection, const LearnerSpec& learner,
                  const MetricSpec& metric, const RngStream& rng, int workers = 1,
                  const StudyOverrides& overrides = {});

// Z^{n0}: only studies with n_s >= n0 participate; each entry averages
// `iterations` subsample-retrain passes with n0 training rows.
ZMatrix compute_z_adjusted(const StudyCollection& collection, const LearnerSpec& learner,
                           const MetricSpec& metric, int n0, int iterations,
                           const RngStream& rng, int workers = 1,
                           const StudyOverrides& overrides = {});

// Z_{B,v}: fit on the pooled studies B \ {v}, evaluate on v.
double compute_z_combined(const StudyCollection& collection,
                          const std::vector<std::string>& B, const std::string& v,
                          const LearnerSpec& learner, const MetricSpec& metric,
                          const RngStream& rng, ModelCache* cache = nullptr);

// Z^j_{B,s}: average over iterations of (draw j pooled rows from B \ {s},
// fit, evaluate on s).
double compute_z_subsampled(const StudyCollection& collection,
                            const std::vector<std::string>& B, const std::string& s, int j,
                            int iterations, const LearnerSpec& learner,
                            const MetricSpec& metric, const RngStream& rng,
                            ModelCache* cache = nullptr);

}  // namespace crossval
