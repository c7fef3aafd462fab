#include "crossval/metrics.hpp"

#include <cmath>

#include "crossval/errors.hpp"

namespace crossval {

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::mse: return "mse";
    case MetricKind::mae_prob: return "mae_prob";
    case MetricKind::error_rate: return "error_rate";
    case MetricKind::auc: return "auc";
    case MetricKind::truncated_concordance: return "truncated_concordance";
  }
  return "?";
}

MetricKind metric_kind_from_string(const std::string& s) {
  if (s == "mse") return MetricKind::mse;
  if (s == "mae_prob") return MetricKind::mae_prob;
  if (s == "error_rate") return MetricKind::error_rate;
  if (s == "auc") return MetricKind::auc;
  if (s == "truncated_concordance") return MetricKind::truncated_concordance;
  throw ConfigError("unknown metric '" + s + "'");
}

void MetricSpec::validate() const {
  if (kind == MetricKind::truncated_concordance) {
    if (!(tau > 0)) throw ConfigError("truncated_concordance requires tau > 0");
  }
}

namespace {

void require_binary(const OutcomeVector& y, MetricKind kind) {
  if (y.kind() != OutcomeKind::binary)
    throw DataError(to_string(kind) + " requires binary outcomes, got " + to_string(y.kind()));
}

double weighted_mean(const Eigen::VectorXd& contributions, const Eigen::VectorXd* w) {
  if (!w) return contributions.mean();
  double total = w->sum();
  if (total <= 0) throw DataError("metric weights must have positive total");
  return contributions.dot(*w) / total;
}

double mann_whitney_auc(const Eigen::VectorXd& scores, const OutcomeVector& y,
                        const Eigen::VectorXd* w) {
  const Eigen::Index n = scores.size();
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y.values()[i] != 1.0) continue;
    double wi = w ? (*w)[i] : 1.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (y.values()[j] != 0.0) continue;
      double wij = wi * (w ? (*w)[j] : 1.0);
      den += wij;
      if (scores[i] > scores[j]) num += wij;
      else if (scores[i] == scores[j]) num += 0.5 * wij;
    }
  }
  if (den == 0.0)
    throw DataError("auc undefined: outcomes contain a single class");
  return num / den;
}

// Comparable pairs (i,j): T_i < T_j, T_i <= tau, event_i = 1. Concordant when
// the earlier failure carries the higher risk score; risk ties count 1/2.
double truncated_concordance(const Eigen::VectorXd& risk, const OutcomeVector& y,
                             double tau, const Eigen::VectorXd* w) {
  if (y.kind() != OutcomeKind::survival)
    throw DataError("truncated_concordance requires survival outcomes");
  const Eigen::Index n = risk.size();
  const auto& time = y.values();
  const auto& event = y.events();
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!event[static_cast<size_t>(i)] || time[i] > tau) continue;
    double wi = w ? (*w)[i] : 1.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (time[i] >= time[j]) continue;
      double wij = wi * (w ? (*w)[j] : 1.0);
      den += wij;
      if (risk[i] > risk[j]) num += wij;
      else if (risk[i] == risk[j]) num += 0.5 * wij;
    }
  }
  if (den == 0.0)
    throw DataError("truncated_concordance undefined: no comparable pairs at tau=" +
                    std::to_string(tau));
  return num / den;
}

}  // namespace

double evaluate(const MetricSpec& metric, const Eigen::VectorXd& predictions,
                const OutcomeVector& outcomes, const Eigen::VectorXd* weights) {
  metric.validate();
  if (predictions.size() != outcomes.size())
    throw DataError("prediction length " + std::to_string(predictions.size()) +
                    " != outcome length " + std::to_string(outcomes.size()));
  if (outcomes.size() == 0) throw DataError("cannot evaluate a metric on zero observations");
  if (weights && weights->size() != predictions.size())
    throw DataError("metric weight length mismatch");

  switch (metric.kind) {
    case MetricKind::mse: {
      if (outcomes.kind() == OutcomeKind::survival)
        throw DataError("mse is undefined for survival outcomes");
      Eigen::VectorXd sq = (outcomes.values() - predictions).array().square();
      return weighted_mean(sq, weights);
    }
    case MetricKind::mae_prob: {
      require_binary(outcomes, metric.kind);
      Eigen::VectorXd abs = (outcomes.values() - predictions).array().abs();
      return weighted_mean(abs, weights);
    }
    case MetricKind::error_rate: {
      require_binary(outcomes, metric.kind);
      // threshold at 0.5, ties predicted as class 1
      Eigen::VectorXd miss(predictions.size());
      for (Eigen::Index i = 0; i < predictions.size(); ++i) {
        double predicted = predictions[i] >= 0.5 ? 1.0 : 0.0;
        miss[i] = predicted != outcomes.values()[i] ? 1.0 : 0.0;
      }
      return weighted_mean(miss, weights);
    }
    case MetricKind::auc:
      require_binary(outcomes, metric.kind);
      return mann_whitney_auc(predictions, outcomes, weights);
    case MetricKind::truncated_concordance:
      return truncated_concordance(predictions, outcomes, metric.tau, weights);
  }
  throw NumericError("unreachable metric kind");
}

}  // namespace crossval
