#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "crossval/errors.hpp"
#include "crossval/zharness.hpp"
#include "support/oracles.hpp"
#include "support/testdata.hpp"

using namespace crossval;

namespace {

LearnerSpec ols() { return learner_from_name("ols"); }
MetricSpec mse() { return {MetricKind::mse}; }

}  // namespace

TEST_CASE("compute_z: S=2 has exactly the two off-diagonal entries") {
  StudyCollection c = testdata::linear_collection(2, 20, 3, 0.5, 1);
  ZMatrix z = compute_z(c, ols(), mse(), RngStream(10));
  CHECK(z.size() == 2);
  CHECK(std::isfinite(z.at(0, 1)));
  CHECK(std::isfinite(z.at(1, 0)));
  CHECK_THROWS_AS(z.at(0, 0), DataError);
  CHECK(std::isnan(z.values(0, 0)));
}

TEST_CASE("compute_z: identical studies give constant rows") {
  StudyCollection c = testdata::linear_collection(1, 25, 3, 0.5, 2);
  StudyDataset copy1 = c.studies[0], copy2 = c.studies[0], copy3 = c.studies[0];
  copy2.id = "copy2";
  copy3.id = "copy3";
  c.studies = {copy1, copy2, copy3};
  ZMatrix z = compute_z(c, ols(), mse(), RngStream(11));
  // every validation set is the same data, so each row is constant
  for (int s = 0; s < 3; ++s) {
    std::vector<double> row;
    for (int v = 0; v < 3; ++v)
      if (v != s) row.push_back(z.at(s, v));
    CHECK(std::abs(row[0] - row[1]) < 1e-12);
  }
  // and the models are fit on identical data, so columns match too
  CHECK(std::abs(z.at(0, 2) - z.at(1, 2)) < 1e-12);
}

TEST_CASE("compute_z matches an independently scripted fit-then-score oracle") {
  StudyCollection c = testdata::linear_collection(3, 15, 2, 0.7, 3);
  ZMatrix z = compute_z(c, ols(), mse(), RngStream(12));
  for (int s = 0; s < 3; ++s) {
    Eigen::VectorXd sol = oracle::ols_qr(c.studies[static_cast<size_t>(s)].features,
                                         c.studies[static_cast<size_t>(s)].outcome.values());
    for (int v = 0; v < 3; ++v) {
      if (v == s) continue;
      const auto& valid = c.studies[static_cast<size_t>(v)];
      Eigen::VectorXd pred = (valid.features * sol.tail(2)).array() + sol[0];
      double want = (valid.outcome.values() - pred).squaredNorm() / valid.n();
      CHECK(z.at(s, v) == doctest::Approx(want).epsilon(1e-10));
    }
  }
}

TEST_CASE("compute_z is invariant to study order up to permutation") {
  StudyCollection c = testdata::linear_collection(3, 18, 2, 0.4, 4);
  ZMatrix z = compute_z(c, ols(), mse(), RngStream(13));
  StudyCollection swapped = c;
  std::swap(swapped.studies[0], swapped.studies[2]);
  ZMatrix zs = compute_z(swapped, ols(), mse(), RngStream(13));
  // study ids moved with their rows/columns
  int map[3] = {2, 1, 0};
  for (int s = 0; s < 3; ++s)
    for (int v = 0; v < 3; ++v)
      if (s != v) CHECK(z.at(s, v) == doctest::Approx(zs.at(map[s], map[v])).epsilon(1e-12));
}

TEST_CASE("compute_z is deterministic across worker counts") {
  StudyCollection c = testdata::linear_collection(4, 16, 2, 0.5, 5);
  LearnerSpec ridge = learner_from_name("ridge_linear");
  ridge.penalty_grid = {0.1, 1.0, 10.0};
  ZMatrix z1 = compute_z(c, ridge, mse(), RngStream(14), 1);
  ZMatrix z2 = compute_z(c, ridge, mse(), RngStream(14), 2);
  for (int s = 0; s < 4; ++s)
    for (int v = 0; v < 4; ++v)
      if (s != v) CHECK(z1.at(s, v) == z2.at(s, v));
}

TEST_CASE("compute_z_adjusted: full-size subsample with one iteration equals compute_z") {
  StudyCollection c = testdata::linear_collection(3, 12, 2, 0.5, 6);
  ZMatrix plain = compute_z(c, ols(), mse(), RngStream(15));
  ZMatrix adjusted = compute_z_adjusted(c, ols(), mse(), 12, 1, RngStream(15));
  CHECK(adjusted.training_size.value() == 12);
  for (int s = 0; s < 3; ++s)
    for (int v = 0; v < 3; ++v)
      if (s != v) CHECK(adjusted.at(s, v) == doctest::Approx(plain.at(s, v)).epsilon(1e-9));
}

TEST_CASE("compute_z_adjusted drops studies below the threshold") {
  StudyCollection c;
  RngStream rng(7);
  Eigen::VectorXd beta(2);
  beta << 1.0, -1.0;
  for (int s = 0; s < 9; ++s) {
    RngStream study = rng.child("study", static_cast<uint64_t>(s));
    int n = s < 6 ? 120 : 50;
    c.studies.push_back(testdata::linear_study("study" + std::to_string(s + 1), n, 2, beta,
                                               0.5, study));
  }
  ZMatrix z = compute_z_adjusted(c, ols(), mse(), 110, 2, RngStream(16));
  CHECK(z.size() == 6);
  CHECK(z.dropped_study_ids == std::vector<std::string>{"study7", "study8", "study9"});
  CHECK_THROWS_AS(compute_z_adjusted(c, ols(), mse(), 500, 2, RngStream(16)), DataError);
}

TEST_CASE("compute_z_adjusted: averaging shrinks the Monte Carlo variance") {
  std::vector<double> one_iter, many_iter;
  for (int seed = 0; seed < 50; ++seed) {
    StudyCollection c = testdata::linear_collection(2, 30, 2, 1.0, 100 + static_cast<uint64_t>(seed));
    ZMatrix a = compute_z_adjusted(c, ols(), mse(), 15, 1, RngStream(3000 + static_cast<uint64_t>(seed)));
    ZMatrix b = compute_z_adjusted(c, ols(), mse(), 15, 200, RngStream(4000 + static_cast<uint64_t>(seed)));
    one_iter.push_back(a.at(0, 1));
    many_iter.push_back(b.at(0, 1));
  }
  // both average the same quantity across seeds, but the 200-iteration version
  // has far less subsample noise; compare dispersion around the common center
  double var1 = oracle::variance_of(one_iter);
  double var200 = oracle::variance_of(many_iter);
  CHECK(var200 < var1);  // strictly smaller
  CHECK(var200 / var1 < 0.9);
}

TEST_CASE("compute_z_combined: singleton B equals the plain cell") {
  StudyCollection c = testdata::linear_collection(3, 14, 2, 0.5, 8);
  ZMatrix z = compute_z(c, ols(), mse(), RngStream(17));
  double combined = compute_z_combined(c, {"study1"}, "study2", ols(), mse(), RngStream(17));
  CHECK(combined == doctest::Approx(z.at(0, 1)).epsilon(1e-12));

  // B containing v falls back to B \ {v}
  double excl = compute_z_combined(c, {"study1", "study2"}, "study2", ols(), mse(), RngStream(17));
  CHECK(excl == doctest::Approx(z.at(0, 1)).epsilon(1e-12));
}

TEST_CASE("compute_z_combined matches a pooled-fit oracle") {
  StudyCollection c = testdata::linear_collection(3, 12, 2, 0.6, 9);
  double got = compute_z_combined(c, {"study1", "study2", "study3"}, "study2", ols(), mse(),
                                  RngStream(18));
  // oracle: stack studies 1 and 3, least squares by QR, score on study 2
  Eigen::MatrixXd X(24, 2);
  Eigen::VectorXd y(24);
  X << c.studies[0].features, c.studies[2].features;
  y << c.studies[0].outcome.values(), c.studies[2].outcome.values();
  Eigen::VectorXd sol = oracle::ols_qr(X, y);
  Eigen::VectorXd pred = (c.studies[1].features * sol.tail(2)).array() + sol[0];
  double want = (c.studies[1].outcome.values() - pred).squaredNorm() / c.studies[1].n();
  CHECK(got == doctest::Approx(want).epsilon(1e-10));

  CHECK_THROWS_AS(
      compute_z_combined(c, {"study2"}, "study2", ols(), mse(), RngStream(18)), DataError);
}

TEST_CASE("compute_z_combined is invariant to the order of B") {
  StudyCollection c = testdata::linear_collection(3, 10, 2, 0.5, 10);
  RngStream rng(19);
  double a = compute_z_combined(c, {"study1", "study3"}, "study2", ols(), mse(), rng);
  double b = compute_z_combined(c, {"study3", "study1"}, "study2", ols(), mse(), rng);
  CHECK(a == b);
}

TEST_CASE("compute_z_subsampled: exhaustive draw equals the combined statistic") {
  StudyCollection c = testdata::linear_collection(3, 10, 2, 0.5, 11);
  LearnerSpec ridge = learner_from_name("ridge_linear");
  ridge.penalty_grid = {0.5, 2.0};
  RngStream rng(20);
  double combined = compute_z_combined(c, {"study1", "study3"}, "study2", ridge, mse(), rng);
  double subsampled =
      compute_z_subsampled(c, {"study1", "study3"}, "study2", 20, 3, ridge, mse(), rng);
  CHECK(subsampled == doctest::Approx(combined).epsilon(1e-12));
}

TEST_CASE("compute_z_subsampled: pool excludes the target study") {
  StudyCollection c = testdata::linear_collection(2, 10, 2, 0.5, 12);
  // B = {s, v}: the pool is v only, so j can reach n_v but not beyond
  RngStream rng(21);
  double ok = compute_z_subsampled(c, {"study1", "study2"}, "study1", 10, 2, ols(), mse(), rng);
  CHECK(std::isfinite(ok));
  CHECK_THROWS_AS(
      compute_z_subsampled(c, {"study1", "study2"}, "study1", 11, 2, ols(), mse(), rng),
      DataError);
}

TEST_CASE("model cache deduplicates repeated combined fits") {
  StudyCollection c = testdata::linear_collection(3, 12, 2, 0.5, 13);
  ModelCache cache;
  RngStream rng(22);
  double a = compute_z_combined(c, {"study1", "study3"}, "study2", ols(), mse(), rng, &cache);
  CHECK(cache.size() == 1);
  double b = compute_z_combined(c, {"study3", "study1"}, "study2", ols(), mse(), rng, &cache);
  CHECK(cache.size() == 1);
  CHECK(a == b);
}

TEST_CASE("fit errors are annotated with the cell") {
  StudyCollection c = testdata::linear_collection(2, 4, 6, 0.5, 14);  // n <= p: OLS singular
  try {
    compute_z(c, ols(), mse(), RngStream(23));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("study") != std::string::npos);
  }
}
