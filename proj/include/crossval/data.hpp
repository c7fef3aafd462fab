#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crossval/rng.hpp"

namespace crossval {

enum class OutcomeKind { binary, continuous, survival };

std::string to_string(OutcomeKind kind);
OutcomeKind outcome_kind_from_string(const std::string& s);

// Outcome column(s) of one study: a 0/1 vector, a continuous vector, or
// survival (time, event) pairs.
class OutcomeVector {
 public:
  OutcomeVector() = default;

  static OutcomeVector binary(Eigen::VectorXd y);
  static OutcomeVector continuous(Eigen::VectorXd y);
  static OutcomeVector survival(Eigen::VectorXd time, std::vector<uint8_t> event);

  OutcomeKind kind() const { return kind_; }
  Eigen::Index size() const { return values_.size(); }
  // binary/continuous: the outcome; survival: the time
  const Eigen::VectorXd& values() const { return values_; }
  const std::vector<uint8_t>& events() const;

  OutcomeVector rows(const std::vector<int>& idx) const;
  static OutcomeVector concat(const std::vector<const OutcomeVector*>& parts);

 private:
  OutcomeKind kind_ = OutcomeKind::continuous;
  Eigen::VectorXd values_;
  std::vector<uint8_t> events_;
};

struct StudyDataset {
  std::string id;
  Eigen::MatrixXd features;  // n x p
  OutcomeVector outcome;
  std::vector<std::string> feature_names;

  Eigen::Index n() const { return features.rows(); }
  Eigen::Index p() const { return features.cols(); }

  // Throws DataError on any invariant violation (empty study, non-finite
  // feature, outcome/feature length mismatch, duplicate feature name).
  void validate() const;

  StudyDataset rows(const std::vector<int>& idx, std::string new_id) const;
};

struct StudyCollection {
  std::vector<StudyDataset> studies;
  std::vector<std::string> shared_features;

  int size() const { return static_cast<int>(studies.size()); }
  int index_of(const std::string& id) const;  // -1 if absent
  const StudyDataset& by_id(const std::string& id) const;
  void validate() const;
};

// Reads one CSV per path (see README for the format); study id = file stem.
// Feature names are kept as-is; call align_features before cross-study use.
StudyCollection load_studies(const std::vector<std::filesystem::path>& paths,
                             OutcomeKind kind, int workers = 1);

// Restricts every study to the intersection of feature names, ordered as in
// the first study. Exact, case-sensitive name matching.
StudyCollection align_features(const StudyCollection& collection);

// j rows drawn uniformly without replacement; deterministic given the stream.
StudyDataset subsample(const StudyDataset& study, int j, RngStream& rng);

// Row-concatenation of the studies in B (collection order), minus `exclude`.
StudyDataset combine(const StudyCollection& collection,
                     const std::vector<std::string>& B,
                     const std::optional<std::string>& exclude = std::nullopt);

}  // namespace crossval
