#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "crossval/bootstrap.hpp"
#include "crossval/errors.hpp"
#include "support/oracles.hpp"
#include "support/testdata.hpp"

using namespace crossval;

namespace {

LearnerSpec ols() { return learner_from_name("ols"); }
MetricSpec mse() { return {MetricKind::mse}; }

StudyCollection constant_row_collection() {
  StudyCollection c;
  for (int s = 0; s < 2; ++s) {
    StudyDataset study;
    study.id = "study" + std::to_string(s + 1);
    study.features = Eigen::MatrixXd::Zero(8, 2);
    Eigen::VectorXd y(8);
    for (int i = 0; i < 8; ++i) {
      study.features(i, 0) = 1.0 + s;
      study.features(i, 1) = 2.0 - s;
      y[i] = 0.5 + 0.25 * s;
    }
    study.outcome = OutcomeVector::continuous(y);
    study.feature_names = {"x1", "x2"};
    c.studies.push_back(std::move(study));
  }
  return c;
}

}  // namespace

TEST_CASE("frequentist bootstrap of an all-identical-rows study reproduces the base Z") {
  // all rows identical: resampling cannot change anything
  StudyCollection c = constant_row_collection();
  LearnerSpec ridge = learner_from_name("ridge_linear");
  ridge.penalty_grid = {1.0};
  ZMatrix base = compute_z(c, ridge, mse(), RngStream(50));
  BootstrapOptions opt;
  opt.B_reps = 10;
  ZReplicateSet reps = bootstrap_z(c, ridge, mse(), opt, RngStream(50));
  for (const auto& rep : reps.replicates) {
    CHECK(rep(0, 1) == doctest::Approx(base.at(0, 1)).epsilon(1e-12));
    CHECK(rep(1, 0) == doctest::Approx(base.at(1, 0)).epsilon(1e-12));
  }
}

TEST_CASE("bayesian bootstrap with uniform weights equals the base Z") {
  StudyCollection c = testdata::linear_collection(2, 15, 2, 0.5, 51);
  ZMatrix base = compute_z(c, ols(), mse(), RngStream(52));
  BootstrapOptions opt;
  opt.B_reps = 3;
  opt.mode = BootstrapMode::bayesian;
  opt.uniform_weights_hook = true;
  ZReplicateSet reps = bootstrap_z(c, ols(), mse(), opt, RngStream(52));
  for (const auto& rep : reps.replicates) {
    CHECK(rep(0, 1) == doctest::Approx(base.at(0, 1)).epsilon(1e-12));
    CHECK(rep(1, 0) == doctest::Approx(base.at(1, 0)).epsilon(1e-12));
  }
}

TEST_CASE("frequentist bootstrap mean agrees with an independent bootstrap oracle") {
  StudyCollection c = testdata::linear_collection(2, 25, 2, 0.8, 53);
  BootstrapOptions opt;
  opt.B_reps = 500;
  ZReplicateSet reps = bootstrap_z(c, ols(), mse(), opt, RngStream(54));
  std::vector<double> ours;
  for (const auto& rep : reps.replicates) ours.push_back(rep(0, 1));

  // oracle: a separately scripted bootstrap with its own rng and QR fits
  RngStream orng(55);
  std::vector<double> oracle_vals;
  for (int b = 0; b < 500; ++b) {
    RngStream draw = orng.child("rep", static_cast<uint64_t>(b));
    auto resample = [&](const StudyDataset& s) {
      std::vector<int> idx;
      for (int i = 0; i < s.n(); ++i)
        idx.push_back(static_cast<int>(draw.uniform_int(static_cast<uint64_t>(s.n()))));
      return s.rows(idx, s.id);
    };
    StudyDataset train = resample(c.studies[0]);
    StudyDataset valid = resample(c.studies[1]);
    Eigen::VectorXd sol = oracle::ols_qr(train.features, train.outcome.values());
    Eigen::VectorXd pred = (valid.features * sol.tail(2)).array() + sol[0];
    oracle_vals.push_back((valid.outcome.values() - pred).squaredNorm() / valid.n());
  }
  double se_ours = std::sqrt(oracle::variance_of(ours) / ours.size());
  double se_oracle = std::sqrt(oracle::variance_of(oracle_vals) / oracle_vals.size());
  double gap = std::abs(oracle::mean_of(ours) - oracle::mean_of(oracle_vals));
  CHECK(gap < 3.0 * std::sqrt(se_ours * se_ours + se_oracle * se_oracle));
}

TEST_CASE("bootstrap replicates are identical across worker counts") {
  StudyCollection c = testdata::linear_collection(2, 12, 2, 0.5, 56);
  BootstrapOptions opt1;
  opt1.B_reps = 8;
  BootstrapOptions opt2 = opt1;
  opt2.workers = 2;
  ZReplicateSet a = bootstrap_z(c, ols(), mse(), opt1, RngStream(57));
  ZReplicateSet b = bootstrap_z(c, ols(), mse(), opt2, RngStream(57));
  for (int r = 0; r < 8; ++r) {
    CHECK(a.replicates[static_cast<size_t>(r)](0, 1) == b.replicates[static_cast<size_t>(r)](0, 1));
    CHECK(a.replicates[static_cast<size_t>(r)](1, 0) == b.replicates[static_cast<size_t>(r)](1, 0));
  }
}

TEST_CASE("estimate_dispersion: identical replicates jitter up to the floor") {
  StudyCollection c = constant_row_collection();
  LearnerSpec ridge = learner_from_name("ridge_linear");
  ridge.penalty_grid = {1.0};
  BootstrapOptions opt;
  opt.B_reps = 5;
  ZReplicateSet reps = bootstrap_z(c, ridge, mse(), opt, RngStream(58));
  DispersionEstimate disp = estimate_dispersion(reps, 0.1, 1e-8);
  CHECK(disp.jitter == doctest::Approx(1e-8));
  CHECK(disp.covariance(0, 0) == doctest::Approx(1e-8));
  CHECK(disp.covariance(0, 1) == doctest::Approx(0.0));
  disp.validate();
}

TEST_CASE("estimate_dispersion: full shrinkage is exactly diagonal") {
  StudyCollection c = testdata::linear_collection(2, 14, 2, 0.7, 59);
  BootstrapOptions opt;
  opt.B_reps = 30;
  ZReplicateSet reps = bootstrap_z(c, ols(), mse(), opt, RngStream(60));
  DispersionEstimate disp = estimate_dispersion(reps, 1.0, 1e-8);
  for (int a = 0; a < disp.D(); ++a)
    for (int b = 0; b < disp.D(); ++b)
      if (a != b) CHECK(disp.covariance(a, b) == 0.0);
}

TEST_CASE("estimate_dispersion matches the hand-computed 2x2 sample covariance") {
  // three hand-written replicates of a 2-study array: D = 2
  ZReplicateSet reps;
  reps.study_ids = {"a", "b"};
  reps.metric = mse();
  reps.learner = ols();
  double nan = std::numeric_limits<double>::quiet_NaN();
  auto rep = [&](double z01, double z10) {
    Eigen::MatrixXd m(2, 2);
    m << nan, z01, z10, nan;
    return m;
  };
  reps.replicates = {rep(1.0, 4.0), rep(2.0, 6.0), rep(3.0, 8.0)};
  DispersionEstimate disp = estimate_dispersion(reps, 0.0, 1e-12);
  // sample covariance (divisor B-1=2): var1 = 1, var2 = 4, cov = 2
  CHECK(disp.covariance(0, 0) == doctest::Approx(1.0));
  CHECK(disp.covariance(1, 1) == doctest::Approx(4.0));
  CHECK(disp.covariance(0, 1) == doctest::Approx(2.0).epsilon(1e-9));
  // perfectly correlated -> singular before jitter, so jitter engaged
  CHECK(disp.jitter > 0.0);
}

TEST_CASE("estimate_dispersion is invariant to replicate order and keeps the diagonal") {
  StudyCollection c = testdata::linear_collection(2, 16, 2, 0.6, 61);
  BootstrapOptions opt;
  opt.B_reps = 40;
  ZReplicateSet reps = bootstrap_z(c, ols(), mse(), opt, RngStream(62));
  DispersionEstimate a = estimate_dispersion(reps, 0.3, 1e-8);
  ZReplicateSet shuffled = reps;
  std::reverse(shuffled.replicates.begin(), shuffled.replicates.end());
  DispersionEstimate b = estimate_dispersion(shuffled, 0.3, 1e-8);
  CHECK((a.covariance - b.covariance).cwiseAbs().maxCoeff() < 1e-12);

  DispersionEstimate raw = estimate_dispersion(reps, 0.0, 1e-8);
  // shrinkage preserves the diagonal (up to the shared jitter)
  for (int k = 0; k < a.D(); ++k)
    CHECK(a.covariance(k, k) - a.jitter ==
          doctest::Approx(raw.covariance(k, k) - raw.jitter).epsilon(1e-12));
}

TEST_CASE("normality diagnostics: synthetic normal and exponential replicates") {
  ZReplicateSet reps;
  reps.study_ids = {"a", "b"};
  reps.metric = mse();
  reps.learner = ols();
  RngStream rng(63);
  const int B = 1000;
  double nan = std::numeric_limits<double>::quiet_NaN();
  for (int b = 0; b < B; ++b) {
    Eigen::MatrixXd m(2, 2);
    m << nan, 5.0 + 0.3 * rng.normal(), rng.exponential(), nan;
    reps.replicates.push_back(m);
  }
  auto diags = normality_diagnostics(reps);
  REQUIRE(diags.size() == 2);
  // entry (0,1): normal draws -> no skew flag; entry (1,0): exponential -> flagged
  CHECK_FALSE(diags[0].skew_flag);
  CHECK(std::abs(diags[0].skewness) < 0.3);
  CHECK(diags[0].ks_distance < 0.05);
  CHECK(diags[1].skew_flag);
  CHECK(diags[1].skewness > 1.0);

  ZReplicateSet tiny = reps;
  tiny.replicates.resize(50);
  CHECK_THROWS_AS(normality_diagnostics(tiny), ConfigError);
}

TEST_CASE("frequentist and bayesian bootstrap agree on degenerate data") {
  StudyCollection c = constant_row_collection();
  LearnerSpec ridge = learner_from_name("ridge_linear");
  ridge.penalty_grid = {1.0};
  BootstrapOptions freq;
  freq.B_reps = 4;
  BootstrapOptions bayes;
  bayes.B_reps = 4;
  bayes.mode = BootstrapMode::bayesian;
  ZReplicateSet a = bootstrap_z(c, ridge, mse(), freq, RngStream(64));
  ZReplicateSet b = bootstrap_z(c, ridge, mse(), bayes, RngStream(65));
  for (int r = 0; r < 4; ++r)
    CHECK(a.replicates[static_cast<size_t>(r)](0, 1) ==
          doctest::Approx(b.replicates[static_cast<size_t>(r)](0, 1)).epsilon(1e-9));
}
