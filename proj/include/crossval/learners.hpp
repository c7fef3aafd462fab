#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "crossval/data.hpp"
#include "crossval/rng.hpp"

namespace crossval {

enum class Family { linear, logistic };
enum class PenaltyKind { none, ridge, lasso };

std::string to_string(Family f);
std::string to_string(PenaltyKind p);

// 20 log-spaced values on [1e-3, 1e3]
std::vector<double> default_penalty_grid();

struct LearnerSpec {
  Family family = Family::linear;
  PenaltyKind penalty = PenaltyKind::none;
  std::vector<double> penalty_grid;
  int cv_folds = 5;
  int max_iterations = 200;
  double convergence_tol = 1e-8;
  // Internal standardization (mean 0 / sd 1 per column on the training set)
  // and an unpenalized intercept are the defaults; coefficients are reported
  // on the original scale either way.
  bool standardize = true;
  bool fit_intercept = true;
  // Reuse the full-data tuned penalty inside bootstrap/subsample loops.
  bool freeze_penalty = true;

  std::string name() const;
  uint64_t fingerprint() const;
  void validate() const;
};

// Presets: ols, ridge_linear, ridge_logistic, lasso_linear, lasso_logistic
LearnerSpec learner_from_name(const std::string& name);

struct FittedModel {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;  // original feature scale
  Family family = Family::linear;
  double chosen_penalty = 0.0;
};

struct FitDiagnostics {
  std::vector<double> objective;  // penalized objective per iteration
  int iterations = 0;
  bool converged = true;
};

// Fits at a fixed penalty value. Optional per-observation weights multiply the
// loss terms (Bayesian bootstrap). Ridge solves the penalized normal
// equations / penalized IRLS; lasso runs cyclic coordinate descent.
FittedModel fit(const LearnerSpec& spec, const StudyDataset& train, double penalty_value,
                const Eigen::VectorXd* weights = nullptr, FitDiagnostics* diag = nullptr);

// K-fold cross-validation over spec.penalty_grid: minimizes mean held-out
// squared error (linear) or log-loss (logistic); ties go to the larger penalty.
double tune_penalty(const LearnerSpec& spec, const StudyDataset& train, RngStream& rng,
                    const Eigen::VectorXd* weights = nullptr);

// tune_penalty (when the spec carries a penalty) followed by fit
FittedModel fit_tuned(const LearnerSpec& spec, const StudyDataset& train, RngStream& rng,
                      const Eigen::VectorXd* weights = nullptr);

// linear: intercept + X b; logistic: inverse-logit of the linear score
Eigen::VectorXd predict(const FittedModel& model, const Eigen::MatrixXd& features);

// The exact objective fit() minimizes (penalty applied on the internally
// standardized scale); exposed so tests can probe optimality directly.
double penalized_objective(const LearnerSpec& spec, const StudyDataset& train,
                           const FittedModel& model, double penalty_value,
                           const Eigen::VectorXd* weights = nullptr);

}  // namespace crossval
