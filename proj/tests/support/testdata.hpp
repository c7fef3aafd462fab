#pragma once

#include <Eigen/Dense>
#include <string>

#include "crossval/data.hpp"
#include "crossval/rng.hpp"

namespace testdata {

inline crossval::StudyDataset linear_study(const std::string& id, int n, int p,
                                           const Eigen::VectorXd& beta, double noise_sd,
                                           crossval::RngStream& rng) {
  crossval::StudyDataset s;
  s.id = id;
  s.features.resize(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) s.features(i, j) = rng.normal();
  Eigen::VectorXd y = s.features * beta;
  for (int i = 0; i < n; ++i) y[i] += noise_sd * rng.normal();
  s.outcome = crossval::OutcomeVector::continuous(y);
  for (int j = 0; j < p; ++j) s.feature_names.push_back("x" + std::to_string(j + 1));
  return s;
}

inline crossval::StudyCollection linear_collection(int n_studies, int n, int p,
                                                   double noise_sd, uint64_t seed) {
  crossval::RngStream rng(seed);
  Eigen::VectorXd beta(p);
  for (int j = 0; j < p; ++j) beta[j] = (j % 2 ? -1.0 : 1.0) * (1.0 + 0.2 * j);
  crossval::StudyCollection c;
  for (int s = 0; s < n_studies; ++s) {
    crossval::RngStream study = rng.child("study", static_cast<uint64_t>(s));
    c.studies.push_back(linear_study("study" + std::to_string(s + 1), n, p, beta, noise_sd, study));
  }
  return c;
}

inline crossval::StudyDataset logistic_study(const std::string& id, int n, int p,
                                             const Eigen::VectorXd& beta,
                                             crossval::RngStream& rng) {
  crossval::StudyDataset s;
  s.id = id;
  s.features.resize(n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) s.features(i, j) = rng.normal();
    double eta = s.features.row(i) * beta;
    y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-eta))) ? 1.0 : 0.0;
  }
  s.outcome = crossval::OutcomeVector::binary(y);
  for (int j = 0; j < p; ++j) s.feature_names.push_back("x" + std::to_string(j + 1));
  return s;
}

}  // namespace testdata
