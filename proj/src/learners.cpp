#include "crossval/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "crossval/errors.hpp"

namespace crossval {

std::string to_string(Family f) { return f == Family::linear ? "linear" : "logistic"; }

std::string to_string(PenaltyKind p) {
  switch (p) {
    case PenaltyKind::none: return "none";
    case PenaltyKind::ridge: return "ridge";
    case PenaltyKind::lasso: return "lasso";
  }
  return "?";
}

std::vector<double> default_penalty_grid() {
  std::vector<double> grid(20);
  for (int i = 0; i < 20; ++i)
    grid[static_cast<size_t>(i)] = std::pow(10.0, -3.0 + 6.0 * i / 19.0);
  return grid;
}

std::string LearnerSpec::name() const {
  if (family == Family::linear && penalty == PenaltyKind::none) return "ols";
  return to_string(penalty) + "_" + to_string(family);
}

uint64_t LearnerSpec::fingerprint() const {
  uint64_t h = fnv1a64(name());
  for (double g : penalty_grid) h = hash_combine(h, std::hash<double>{}(g));
  h = hash_combine(h, static_cast<uint64_t>(cv_folds));
  h = hash_combine(h, static_cast<uint64_t>(max_iterations));
  h = hash_combine(h, std::hash<double>{}(convergence_tol));
  h = hash_combine(h, (standardize ? 1u : 0u) | (fit_intercept ? 2u : 0u) |
                          (freeze_penalty ? 4u : 0u));
  return h;
}

void LearnerSpec::validate() const {
  if (penalty != PenaltyKind::none && penalty_grid.empty())
    throw ConfigError("penalty_grid must be non-empty when a penalty is used");
  for (double g : penalty_grid)
    if (!(g > 0)) throw ConfigError("penalty_grid values must be positive");
  if (cv_folds < 2) throw ConfigError("cv_folds must be >= 2");
  if (!(convergence_tol > 0)) throw ConfigError("convergence_tol must be positive");
  if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
}

LearnerSpec learner_from_name(const std::string& name) {
  LearnerSpec spec;
  if (name == "ols") {
    spec.family = Family::linear;
    spec.penalty = PenaltyKind::none;
    return spec;
  }
  if (name == "ridge_linear") {
    spec.family = Family::linear;
    spec.penalty = PenaltyKind::ridge;
  } else if (name == "ridge_logistic") {
    spec.family = Family::logistic;
    spec.penalty = PenaltyKind::ridge;
  } else if (name == "lasso_linear") {
    spec.family = Family::linear;
    spec.penalty = PenaltyKind::lasso;
  } else if (name == "lasso_logistic") {
    spec.family = Family::logistic;
    spec.penalty = PenaltyKind::lasso;
  } else {
    throw ConfigError("unknown learner '" + name + "'");
  }
  spec.penalty_grid = default_penalty_grid();
  return spec;
}

namespace {

constexpr double kWorkingWeightFloor = 1e-10;
constexpr double kSeparationNorm = 1e4;

struct Scaling {
  Eigen::VectorXd mean;   // 0 when not centering
  Eigen::VectorXd scale;  // 1 when not scaling
};

Scaling make_scaling(const Eigen::MatrixXd& X, const Eigen::VectorXd& w, bool center,
                     bool scale) {
  const Eigen::Index p = X.cols();
  Scaling s;
  s.mean = Eigen::VectorXd::Zero(p);
  s.scale = Eigen::VectorXd::Ones(p);
  double wsum = w.sum();
  if (center) s.mean = X.transpose() * w / wsum;
  if (scale) {
    for (Eigen::Index j = 0; j < p; ++j) {
      double m = center ? s.mean[j] : X.col(j).dot(w) / wsum;
      double var = (X.col(j).array() - m).square().matrix().dot(w) / wsum;
      // variance around the column mean even when not centering, matching the
      // usual sd definition
      s.scale[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
  }
  return s;
}

Eigen::MatrixXd apply_scaling(const Eigen::MatrixXd& X, const Scaling& s) {
  return (X.rowwise() - s.mean.transpose()).array().rowwise() / s.scale.transpose().array();
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double log1pexp(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Solves min_g 1/2 (z - Xs g)' Omega (z - Xs g) + lambda/2 |g|^2 with the
// intercept profiled out by Omega-weighted centering when requested.
// Returns g and the profiled intercept (on the scaled coordinates).
struct QuadSolution {
  Eigen::VectorXd gamma;
  double gamma0 = 0.0;
};

QuadSolution solve_weighted_ridge(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& z,
                                  const Eigen::VectorXd& omega, double lambda,
                                  bool intercept) {
  const Eigen::Index n = Xs.rows(), p = Xs.cols();
  double osum = omega.sum();
  Eigen::VectorXd xbar = intercept ? Eigen::VectorXd(Xs.transpose() * omega / osum)
                                   : Eigen::VectorXd(Eigen::VectorXd::Zero(p));
  double zbar = intercept ? omega.dot(z) / osum : 0.0;

  QuadSolution sol;
  if (lambda > 0 && p > 2 * n) {
    // dual (n x n) solve: g = Xc' W^{1/2} (lambda I + W^{1/2} Kc W^{1/2})^{-1} W^{1/2} zc
    Eigen::MatrixXd K = Xs * Xs.transpose();
    Eigen::VectorXd c = Xs * xbar;
    double xx = xbar.squaredNorm();
    Eigen::MatrixXd Kc = K - c.rowwise().replicate(1) * Eigen::RowVectorXd::Ones(n) -
                         Eigen::VectorXd::Ones(n) * c.transpose() +
                         xx * Eigen::MatrixXd::Ones(n, n);
    Eigen::VectorXd sw = omega.array().sqrt();
    Eigen::MatrixXd M = sw.asDiagonal() * Kc * sw.asDiagonal();
    M.diagonal().array() += lambda;
    Eigen::VectorXd zc = z.array() - zbar;
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success)
      throw NumericError("ridge dual system factorization failed");
    Eigen::VectorXd b = llt.solve(sw.cwiseProduct(zc));
    Eigen::VectorXd u = sw.cwiseProduct(b);
    sol.gamma = Xs.transpose() * u - xbar * u.sum();
  } else {
    Eigen::MatrixXd Xc = Xs.rowwise() - xbar.transpose();
    Eigen::MatrixXd A = Xc.transpose() * omega.asDiagonal() * Xc;
    A.diagonal().array() += lambda;
    Eigen::VectorXd zc = z.array() - zbar;
    Eigen::VectorXd rhs = Xc.transpose() * omega.cwiseProduct(zc);
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) {
      if (lambda == 0)
        throw NumericError("singular system at penalty 0 (needs n > p and full column rank)");
      throw NumericError("ridge system factorization failed");
    }
    sol.gamma = llt.solve(rhs);
  }
  if (intercept) sol.gamma0 = zbar - xbar.dot(sol.gamma);
  return sol;
}

double soft_threshold(double rho, double lambda) {
  if (rho > lambda) return rho - lambda;
  if (rho < -lambda) return rho + lambda;
  return 0.0;
}

// Cyclic coordinate descent for
//   min 1/2 sum_i omega_i (z_i - g0 - x_i'g)^2 + lambda |g|_1
// with the intercept profiled by weighted centering. Warm-started from g.
void lasso_cd(const Eigen::MatrixXd& Xs, const Eigen::VectorXd& z,
              const Eigen::VectorXd& omega, double lambda, bool intercept,
              Eigen::VectorXd& gamma, double& gamma0, double tol, int max_sweeps) {
  const Eigen::Index n = Xs.rows(), p = Xs.cols();
  double osum = omega.sum();
  Eigen::VectorXd xbar = intercept ? Eigen::VectorXd(Xs.transpose() * omega / osum)
                                   : Eigen::VectorXd(Eigen::VectorXd::Zero(p));
  double zbar = intercept ? omega.dot(z) / osum : 0.0;
  Eigen::MatrixXd Xc = Xs.rowwise() - xbar.transpose();
  Eigen::VectorXd zc = z.array() - zbar;

  Eigen::VectorXd d(p);
  for (Eigen::Index j = 0; j < p; ++j)
    d[j] = Xc.col(j).array().square().matrix().dot(omega);

  Eigen::VectorXd r = zc - Xc * gamma;  // residual maintained incrementally
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_delta = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (d[j] <= 0) {
        gamma[j] = 0.0;
        continue;
      }
      double old = gamma[j];
      double rho = Xc.col(j).dot(omega.cwiseProduct(r)) + d[j] * old;
      double updated = soft_threshold(rho, lambda) / d[j];
      if (updated != old) {
        r -= (updated - old) * Xc.col(j);
        gamma[j] = updated;
        max_delta = std::max(max_delta, std::abs(updated - old));
      }
    }
    if (max_delta < tol) break;
  }
  (void)n;
  gamma0 = intercept ? zbar - xbar.dot(gamma) : 0.0;
}

double penalty_term(PenaltyKind kind, const Eigen::VectorXd& gamma, double lambda) {
  switch (kind) {
    case PenaltyKind::none: return 0.0;
    case PenaltyKind::ridge: return 0.5 * lambda * gamma.squaredNorm();
    case PenaltyKind::lasso: return lambda * gamma.lpNorm<1>();
  }
  return 0.0;
}

// penalized objective on the scaled coordinates (sum-loss convention)
double objective_scaled(Family family, PenaltyKind pk, const Eigen::MatrixXd& Xs,
                        const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                        const Eigen::VectorXd& gamma, double gamma0, double lambda) {
  Eigen::VectorXd eta = (Xs * gamma).array() + gamma0;
  double loss = 0.0;
  if (family == Family::linear) {
    loss = 0.5 * (y - eta).array().square().matrix().dot(w);
  } else {
    for (Eigen::Index i = 0; i < y.size(); ++i)
      loss += w[i] * (log1pexp(eta[i]) - y[i] * eta[i]);
  }
  return loss + penalty_term(pk, gamma, lambda);
}

FittedModel assemble_model(const LearnerSpec& spec, const Scaling& scaling,
                           const Eigen::VectorXd& gamma, double gamma0, double lambda) {
  FittedModel model;
  model.family = spec.family;
  model.chosen_penalty = lambda;
  model.coefficients = gamma.cwiseQuotient(scaling.scale);
  model.intercept = gamma0 - model.coefficients.dot(scaling.mean);
  if (!model.coefficients.allFinite() || !std::isfinite(model.intercept))
    throw NumericError("fit produced non-finite coefficients");
  return model;
}

FittedModel fit_linear(const LearnerSpec& spec, const Eigen::MatrixXd& Xs,
                       const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                       const Scaling& scaling, double lambda, FitDiagnostics* diag) {
  const Eigen::Index n = Xs.rows(), p = Xs.cols();
  if (lambda == 0 && n <= p)
    throw NumericError("penalty 0 requires n > p for a linear fit (n=" + std::to_string(n) +
                       ", p=" + std::to_string(p) + ")");
  Eigen::VectorXd gamma;
  double gamma0 = 0.0;
  if (spec.penalty == PenaltyKind::lasso && lambda > 0) {
    gamma = Eigen::VectorXd::Zero(p);
    lasso_cd(Xs, y, w, lambda, spec.fit_intercept, gamma, gamma0, spec.convergence_tol,
             std::max(spec.max_iterations, 1000));
  } else {
    QuadSolution sol = solve_weighted_ridge(Xs, y, w, lambda, spec.fit_intercept);
    gamma = std::move(sol.gamma);
    gamma0 = sol.gamma0;
  }
  if (diag) {
    diag->iterations = 1;
    diag->converged = true;
    diag->objective = {objective_scaled(Family::linear, spec.penalty, Xs, y, w, gamma, gamma0, lambda)};
  }
  return assemble_model(spec, scaling, gamma, gamma0, lambda);
}

FittedModel fit_logistic(const LearnerSpec& spec, const Eigen::MatrixXd& Xs,
                         const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                         const Scaling& scaling, double lambda, FitDiagnostics* diag) {
  const Eigen::Index n = Xs.rows(), p = Xs.cols();
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(p);
  double wsum = w.sum();
  double ybar = std::clamp(y.dot(w) / wsum, 1e-6, 1.0 - 1e-6);
  double gamma0 = spec.fit_intercept ? std::log(ybar / (1.0 - ybar)) : 0.0;

  double obj = objective_scaled(Family::logistic, spec.penalty, Xs, y, w, gamma, gamma0, lambda);
  FitDiagnostics local;
  FitDiagnostics& dg = diag ? *diag : local;
  dg.objective = {obj};
  dg.converged = false;

  for (int it = 0; it < spec.max_iterations; ++it) {
    Eigen::VectorXd eta = (Xs * gamma).array() + gamma0;
    Eigen::VectorXd mu(n), omega(n), z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = sigmoid(eta[i]);
      double v = std::max(mu[i] * (1.0 - mu[i]), kWorkingWeightFloor);
      omega[i] = w[i] * v;
      z[i] = eta[i] + (y[i] - mu[i]) / v;
    }

    Eigen::VectorXd gamma_next;
    double gamma0_next = 0.0;
    if (spec.penalty == PenaltyKind::lasso && lambda > 0) {
      gamma_next = gamma;
      lasso_cd(Xs, z, omega, lambda, spec.fit_intercept, gamma_next, gamma0_next,
               spec.convergence_tol * 0.1, 1000);
    } else {
      QuadSolution sol = solve_weighted_ridge(Xs, z, omega, lambda, spec.fit_intercept);
      gamma_next = std::move(sol.gamma);
      gamma0_next = sol.gamma0;
    }

    // backtracking keeps the penalized objective monotone
    double step = 1.0;
    Eigen::VectorXd trial;
    double trial0 = 0.0, trial_obj = 0.0;
    for (int half = 0; half < 40; ++half) {
      trial = gamma + step * (gamma_next - gamma);
      trial0 = gamma0 + step * (gamma0_next - gamma0);
      trial_obj = objective_scaled(Family::logistic, spec.penalty, Xs, y, w, trial, trial0, lambda);
      if (trial_obj <= obj + 1e-12) break;
      step *= 0.5;
    }
    double max_delta = std::max((trial - gamma).cwiseAbs().maxCoeff(), std::abs(trial0 - gamma0));
    double obj_before = obj;
    gamma = std::move(trial);
    gamma0 = trial0;
    obj = std::min(obj, trial_obj);
    dg.objective.push_back(obj);
    dg.iterations = it + 1;

    if (lambda == 0 && gamma.norm() > kSeparationNorm)
      throw NumericError(
          "logistic fit at penalty 0 diverged (data are separable; the MLE does not exist)");
    // stop on parameter stability, or (penalized fits only) on objective
    // stagnation at machine precision: degenerate training sets drift the
    // unpenalized intercept forever. At penalty 0 stagnation must keep
    // iterating so the separation check above can fire.
    if (max_delta < spec.convergence_tol ||
        (lambda > 0 && obj_before - obj < 1e-13 * (1.0 + std::abs(obj)))) {
      dg.converged = true;
      break;
    }
  }
  if (!dg.converged) {
    std::ostringstream trace;
    trace << "logistic fit did not converge in " << spec.max_iterations
          << " iterations; objective trace tail:";
    size_t from = dg.objective.size() > 6 ? dg.objective.size() - 6 : 0;
    for (size_t i = from; i < dg.objective.size(); ++i) trace << " " << dg.objective[i];
    throw NumericError(trace.str());
  }
  return assemble_model(spec, scaling, gamma, gamma0, lambda);
}

}  // namespace

FittedModel fit(const LearnerSpec& spec, const StudyDataset& train, double penalty_value,
                const Eigen::VectorXd* weights, FitDiagnostics* diag) {
  spec.validate();
  train.validate();
  if (!(penalty_value >= 0)) throw ConfigError("penalty value must be >= 0");
  if (spec.penalty == PenaltyKind::none && penalty_value != 0)
    throw ConfigError("penalty 'none' requires penalty value 0");
  if (spec.family == Family::linear && train.outcome.kind() != OutcomeKind::continuous)
    throw DataError("linear family requires continuous outcomes, got " +
                    to_string(train.outcome.kind()));
  if (spec.family == Family::logistic && train.outcome.kind() != OutcomeKind::binary)
    throw DataError("logistic family requires binary outcomes, got " +
                    to_string(train.outcome.kind()));

  const Eigen::Index n = train.n();
  Eigen::VectorXd w = weights ? *weights : Eigen::VectorXd::Ones(n);
  if (w.size() != n) throw DataError("weight length mismatch");
  if ((w.array() < 0).any() || !(w.sum() > 0))
    throw DataError("observation weights must be non-negative with positive total");

  Scaling scaling = make_scaling(train.features, w, spec.standardize && spec.fit_intercept,
                                 spec.standardize);
  Eigen::MatrixXd Xs = apply_scaling(train.features, scaling);

  if (spec.family == Family::linear)
    return fit_linear(spec, Xs, train.outcome.values(), w, scaling, penalty_value, diag);
  return fit_logistic(spec, Xs, train.outcome.values(), w, scaling, penalty_value, diag);
}

namespace {

double holdout_loss(Family family, const FittedModel& model, const StudyDataset& data,
                    const std::vector<int>& rows) {
  double loss = 0.0;
  for (int r : rows) {
    double eta = model.intercept + model.coefficients.dot(data.features.row(r));
    double y = data.outcome.values()[r];
    if (family == Family::linear) {
      double d = y - eta;
      loss += d * d;
    } else {
      loss += log1pexp(eta) - y * eta;
    }
  }
  return loss / static_cast<double>(rows.size());
}

std::vector<std::vector<int>> make_folds(int n, int k, RngStream& rng) {
  std::vector<int> order = rng.permutation(n);
  std::vector<std::vector<int>> folds(static_cast<size_t>(k));
  for (int i = 0; i < n; ++i) folds[static_cast<size_t>(i % k)].push_back(order[static_cast<size_t>(i)]);
  return folds;
}

bool folds_trainable(Family family, const StudyDataset& data,
                     const std::vector<std::vector<int>>& folds) {
  if (family != Family::logistic) return true;
  const int n = static_cast<int>(data.n());
  for (const auto& held : folds) {
    std::vector<char> is_held(static_cast<size_t>(n), 0);
    for (int r : held) is_held[static_cast<size_t>(r)] = 1;
    bool has0 = false, has1 = false;
    for (int r = 0; r < n; ++r) {
      if (is_held[static_cast<size_t>(r)]) continue;
      (data.outcome.values()[r] == 1.0 ? has1 : has0) = true;
    }
    if (!has0 || !has1) return false;
  }
  return true;
}

}  // namespace

double tune_penalty(const LearnerSpec& spec, const StudyDataset& train, RngStream& rng,
                    const Eigen::VectorXd* weights) {
  spec.validate();
  if (spec.penalty == PenaltyKind::none) return 0.0;
  if (spec.penalty_grid.empty()) throw ConfigError("tune_penalty: empty penalty grid");
  if (spec.penalty_grid.size() == 1) return spec.penalty_grid.front();
  const int n = static_cast<int>(train.n());
  if (n < spec.cv_folds)
    throw DataError("tune_penalty: n=" + std::to_string(n) + " smaller than cv_folds=" +
                    std::to_string(spec.cv_folds));

  RngStream fold_rng = rng.child("cv-folds");
  auto folds = make_folds(n, spec.cv_folds, fold_rng);
  if (!folds_trainable(spec.family, train, folds)) {
    // refold once, then give up
    folds = make_folds(n, spec.cv_folds, fold_rng);
    if (!folds_trainable(spec.family, train, folds))
      throw DataError("tune_penalty: a CV fold leaves a single outcome class even after refolding");
  }

  std::vector<double> grid = spec.penalty_grid;
  std::sort(grid.begin(), grid.end());

  double best_penalty = grid.front();
  double best_loss = std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    double loss = 0.0;
    for (const auto& held : folds) {
      std::vector<char> is_held(static_cast<size_t>(n), 0);
      for (int r : held) is_held[static_cast<size_t>(r)] = 1;
      std::vector<int> train_rows;
      train_rows.reserve(static_cast<size_t>(n - static_cast<int>(held.size())));
      for (int r = 0; r < n; ++r)
        if (!is_held[static_cast<size_t>(r)]) train_rows.push_back(r);
      StudyDataset part = train.rows(train_rows, train.id + "#cv");
      Eigen::VectorXd wpart;
      const Eigen::VectorXd* wptr = nullptr;
      if (weights) {
        wpart.resize(static_cast<Eigen::Index>(train_rows.size()));
        for (size_t i = 0; i < train_rows.size(); ++i) wpart[static_cast<Eigen::Index>(i)] = (*weights)[train_rows[i]];
        wptr = &wpart;
      }
      FittedModel model = fit(spec, part, lambda, wptr);
      loss += holdout_loss(spec.family, model, train, held);
    }
    loss /= static_cast<double>(folds.size());
    if (loss <= best_loss) {  // ties prefer the larger penalty (grid ascends)
      best_loss = loss;
      best_penalty = lambda;
    }
  }
  return best_penalty;
}

FittedModel fit_tuned(const LearnerSpec& spec, const StudyDataset& train, RngStream& rng,
                      const Eigen::VectorXd* weights) {
  double lambda = 0.0;
  if (spec.penalty != PenaltyKind::none) {
    RngStream tune_rng = rng.child("tune");
    lambda = tune_penalty(spec, train, tune_rng, weights);
  }
  return fit(spec, train, lambda, weights);
}

Eigen::VectorXd predict(const FittedModel& model, const Eigen::MatrixXd& features) {
  if (features.cols() != model.coefficients.size())
    throw DataError("predict: feature count " + std::to_string(features.cols()) +
                    " != coefficient count " + std::to_string(model.coefficients.size()));
  Eigen::VectorXd eta = (features * model.coefficients).array() + model.intercept;
  if (model.family == Family::linear) return eta;
  Eigen::VectorXd prob(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) prob[i] = sigmoid(eta[i]);
  return prob;
}

double penalized_objective(const LearnerSpec& spec, const StudyDataset& train,
                           const FittedModel& model, double penalty_value,
                           const Eigen::VectorXd* weights) {
  const Eigen::Index n = train.n();
  Eigen::VectorXd w = weights ? *weights : Eigen::VectorXd::Ones(n);
  Scaling scaling = make_scaling(train.features, w, spec.standardize && spec.fit_intercept,
                                 spec.standardize);
  Eigen::MatrixXd Xs = apply_scaling(train.features, scaling);
  // invert the back-transform to recover the scaled-coordinate parameters
  Eigen::VectorXd gamma = model.coefficients.cwiseProduct(scaling.scale);
  double gamma0 = model.intercept + model.coefficients.dot(scaling.mean);
  return objective_scaled(spec.family, spec.penalty, Xs, train.outcome.values(), w, gamma,
                          gamma0, penalty_value);
}

}  // namespace crossval
