#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "crossval/errors.hpp"
#include "crossval/metrics.hpp"
#include "crossval/rng.hpp"
#include "support/oracles.hpp"

using namespace crossval;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

}  // namespace

TEST_CASE("perfect classifier: auc 1, error 0") {
  OutcomeVector y = OutcomeVector::binary(vec({0, 0, 1, 1}));
  Eigen::VectorXd scores = vec({0.1, 0.2, 0.8, 0.9});
  CHECK(evaluate({MetricKind::auc}, scores, y) == doctest::Approx(1.0));
  CHECK(evaluate({MetricKind::error_rate}, scores, y) == doctest::Approx(0.0));
}

TEST_CASE("auc antisymmetry under score negation") {
  RngStream rng(11);
  Eigen::VectorXd scores(10), yv(10);
  for (int i = 0; i < 10; ++i) {
    scores[i] = rng.normal();
    yv[i] = i < 4 ? 1.0 : 0.0;
  }
  OutcomeVector y = OutcomeVector::binary(yv);
  double a = evaluate({MetricKind::auc}, scores, y);
  double b = evaluate({MetricKind::auc}, Eigen::VectorXd(-scores), y);
  CHECK(a + b == doctest::Approx(1.0));
}

TEST_CASE("auc single class is undefined") {
  OutcomeVector y = OutcomeVector::binary(vec({1, 1, 1}));
  CHECK_THROWS_AS(evaluate({MetricKind::auc}, vec({0.1, 0.2, 0.3}), y), DataError);
}

TEST_CASE("constant 0.5 predictor on balanced data") {
  OutcomeVector y = OutcomeVector::binary(vec({0, 1, 0, 1}));
  Eigen::VectorXd half = vec({0.5, 0.5, 0.5, 0.5});
  CHECK(evaluate({MetricKind::mae_prob}, half, y) == doctest::Approx(0.5));
  // ties at exactly 0.5 predict class 1, so all class-0 rows are misses
  CHECK(evaluate({MetricKind::error_rate}, half, y) == doctest::Approx(0.5));
}

TEST_CASE("mse is the mean squared residual") {
  OutcomeVector y = OutcomeVector::continuous(vec({1, 2, 3}));
  CHECK(evaluate({MetricKind::mse}, vec({2, 2, 1}), y) == doctest::Approx((1.0 + 0.0 + 4.0) / 3));
}

TEST_CASE("truncated concordance against the pair-enumeration oracle") {
  // 4 survival observations; comparable pairs enumerated by hand:
  // times 1(ev) < 2, 3, 5; 2(cens); 3(ev) < 5; 5(ev)
  Eigen::VectorXd time = vec({1, 2, 3, 5});
  std::vector<uint8_t> event = {1, 0, 1, 1};
  Eigen::VectorXd risk = vec({3.0, 2.0, 2.0, 1.0});
  OutcomeVector y = OutcomeVector::survival(time, event);

  MetricSpec spec{MetricKind::truncated_concordance, 10.0};
  double got = evaluate(spec, risk, y);
  double want = oracle::concordance_brute(risk, time, event, 10.0);
  CHECK(got == doctest::Approx(want));
  // hand count: pairs (1,*): risk 3 vs 2,2,1 -> 3 concordant; pair (3,4): 2 vs 1 -> 1
  CHECK(got == doctest::Approx(4.0 / 4.0));

  // truncation at tau=2 removes the pairs from the t=3 event
  MetricSpec spec2{MetricKind::truncated_concordance, 2.0};
  CHECK(evaluate(spec2, risk, y) == doctest::Approx(oracle::concordance_brute(risk, time, event, 2.0)));
}

TEST_CASE("concordance with tau=inf and no censoring equals all-pairs concordance") {
  RngStream rng(5);
  const int n = 12;
  Eigen::VectorXd time(n), risk(n);
  std::vector<uint8_t> event(n, 1);
  for (int i = 0; i < n; ++i) {
    time[i] = rng.exponential() + 0.01;
    risk[i] = rng.normal();
  }
  OutcomeVector y = OutcomeVector::survival(time, event);
  MetricSpec spec{MetricKind::truncated_concordance, std::numeric_limits<double>::infinity()};
  CHECK(evaluate(spec, risk, y) ==
        doctest::Approx(oracle::concordance_brute(risk, time, event, 1e300)));
}

TEST_CASE("concordance with zero comparable pairs is undefined") {
  Eigen::VectorXd time = vec({1, 2});
  std::vector<uint8_t> event = {0, 0};
  OutcomeVector y = OutcomeVector::survival(time, event);
  CHECK_THROWS_AS(evaluate({MetricKind::truncated_concordance, 5.0}, vec({1, 2}), y), DataError);
}

TEST_CASE("auc invariant under strictly increasing transforms") {
  RngStream rng(21);
  for (int rep = 0; rep < 20; ++rep) {
    RngStream r = rng.child("rep", static_cast<uint64_t>(rep));
    const int n = 15;
    Eigen::VectorXd scores(n), yv(n);
    for (int i = 0; i < n; ++i) {
      scores[i] = r.normal();
      yv[i] = r.bernoulli(0.5) ? 1.0 : 0.0;
    }
    if (yv.sum() == 0 || yv.sum() == n) continue;
    OutcomeVector y = OutcomeVector::binary(yv);
    double base = evaluate({MetricKind::auc}, scores, y);
    Eigen::VectorXd warped = (scores.array() * 3.0).exp();
    CHECK(evaluate({MetricKind::auc}, warped, y) == doctest::Approx(base));
  }
}

TEST_CASE("metrics are invariant under joint permutation") {
  RngStream rng(31);
  const int n = 10;
  Eigen::VectorXd scores(n), yv(n);
  for (int i = 0; i < n; ++i) {
    scores[i] = rng.uniform();
    yv[i] = i % 2;
  }
  OutcomeVector y = OutcomeVector::binary(yv);
  std::vector<int> perm = rng.permutation(n);
  Eigen::VectorXd ps(n), pyv(n);
  for (int i = 0; i < n; ++i) {
    ps[i] = scores[perm[static_cast<size_t>(i)]];
    pyv[i] = yv[perm[static_cast<size_t>(i)]];
  }
  OutcomeVector py = OutcomeVector::binary(pyv);
  for (MetricKind kind : {MetricKind::mae_prob, MetricKind::error_rate, MetricKind::auc}) {
    CHECK(evaluate({kind}, scores, y) == doctest::Approx(evaluate({kind}, ps, py)));
  }
}

TEST_CASE("metric ranges") {
  RngStream rng(41);
  for (int rep = 0; rep < 30; ++rep) {
    RngStream r = rng.child("rep", static_cast<uint64_t>(rep));
    const int n = 8;
    Eigen::VectorXd probs(n), yv(n);
    for (int i = 0; i < n; ++i) {
      probs[i] = r.uniform();
      yv[i] = r.bernoulli(0.4) ? 1.0 : 0.0;
    }
    if (yv.sum() == 0 || yv.sum() == n) continue;
    OutcomeVector y = OutcomeVector::binary(yv);
    double mae = evaluate({MetricKind::mae_prob}, probs, y);
    double err = evaluate({MetricKind::error_rate}, probs, y);
    double auc = evaluate({MetricKind::auc}, probs, y);
    CHECK(mae >= 0);
    CHECK(mae <= 1);
    CHECK(err >= 0);
    CHECK(err <= 1);
    CHECK(auc >= 0);
    CHECK(auc <= 1);
  }
}

TEST_CASE("weighted evaluation with uniform weights equals unweighted") {
  OutcomeVector y = OutcomeVector::binary(vec({0, 1, 1, 0, 1}));
  Eigen::VectorXd probs = vec({0.2, 0.7, 0.4, 0.6, 0.9});
  Eigen::VectorXd w = Eigen::VectorXd::Constant(5, 1.0);
  for (MetricKind kind : {MetricKind::mae_prob, MetricKind::error_rate, MetricKind::auc}) {
    CHECK(evaluate({kind}, probs, y, &w) == doctest::Approx(evaluate({kind}, probs, y)));
  }
}

TEST_CASE("length mismatch is rejected") {
  OutcomeVector y = OutcomeVector::binary(vec({0, 1}));
  CHECK_THROWS_AS(evaluate({MetricKind::mae_prob}, vec({0.5}), y), DataError);
}
