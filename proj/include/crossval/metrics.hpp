#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>

#include "crossval/data.hpp"

namespace crossval {

enum class MetricKind { mse, mae_prob, error_rate, auc, truncated_concordance };

std::string to_string(MetricKind kind);
MetricKind metric_kind_from_string(const std::string& s);

struct MetricSpec {
  MetricKind kind = MetricKind::mse;
  // truncation horizon; meaningful only for truncated_concordance
  double tau = std::numeric_limits<double>::infinity();

  bool higher_is_better() const {
    return kind == MetricKind::auc || kind == MetricKind::truncated_concordance;
  }
  void validate() const;
};

// Scalar validation statistic of predictions against outcomes. Optional
// per-observation weights back the Bayesian bootstrap: means become weighted
// means and pair-based statistics weight each pair by w_i * w_j.
double evaluate(const MetricSpec& metric, const Eigen::VectorXd& predictions,
                const OutcomeVector& outcomes, const Eigen::VectorXd* weights = nullptr);

}  // namespace crossval
