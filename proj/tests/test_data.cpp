#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "crossval/data.hpp"
#include "crossval/errors.hpp"

using namespace crossval;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
  fs::path dir = fs::temp_directory_path() / "crossval_data_tests";
  fs::create_directories(dir);
  fs::path p = dir / name;
  std::ofstream out(p);
  out << content;
  return p;
}

StudyDataset tiny_study(const std::string& id, int n, int p, double fill,
                        OutcomeKind kind = OutcomeKind::continuous) {
  StudyDataset s;
  s.id = id;
  s.features = Eigen::MatrixXd::Constant(n, p, fill);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) s.features(i, j) = fill + i + 0.1 * j;
  for (int j = 0; j < p; ++j) s.feature_names.push_back("x" + std::to_string(j + 1));
  Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(n, 0.0, n - 1.0);
  s.outcome = kind == OutcomeKind::binary
                  ? OutcomeVector::binary((y.array() < n / 2.0).cast<double>())
                  : OutcomeVector::continuous(y);
  return s;
}

}  // namespace

TEST_CASE("load_studies reads valid files back") {
  auto p1 = write_temp("alpha.csv", "outcome,g1,g2\n1,0.5,2\n0,1.5,3\n1,2.5,4\n");
  auto p2 = write_temp("beta.csv", "outcome,g1,g2\n0,5,6\n1,7,8\n0,9,10\n");
  StudyCollection c = load_studies({p1, p2}, OutcomeKind::binary);
  CHECK(c.size() == 2);
  CHECK(c.studies[0].id == "alpha");
  CHECK(c.studies[0].n() == 3);
  CHECK(c.studies[1].n() == 3);
  CHECK(c.studies[0].features(0, 0) == doctest::Approx(0.5));
  CHECK(c.studies[1].outcome.values()[1] == 1.0);
  CHECK(c.studies[0].feature_names == std::vector<std::string>{"g1", "g2"});
}

TEST_CASE("load_studies errors name the offending file") {
  auto bad = write_temp("noout.csv", "g1,g2\n1,2\n");
  CHECK_THROWS_WITH_AS(load_studies({bad}, OutcomeKind::binary),
                       doctest::Contains("noout.csv"), DataError);

  auto nan_file = write_temp("hasnan.csv", "outcome,g1\n1,NaN\n");
  try {
    load_studies({nan_file}, OutcomeKind::binary);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    std::string msg = e.what();
    CHECK(msg.find("hasnan.csv:2") != std::string::npos);
    CHECK(msg.find("g1") != std::string::npos);
  }
}

TEST_CASE("load_studies rejects duplicate ids") {
  auto a = write_temp("dup.csv", "outcome,g1\n1,2\n");
  CHECK_THROWS_AS(load_studies({a, a}, OutcomeKind::binary), DataError);
}

TEST_CASE("survival loading") {
  auto p = write_temp("surv.csv", "time,event,g1\n2.5,1,0.1\n4.0,0,0.2\n");
  StudyCollection c;
  c.studies.push_back(load_studies({p}, OutcomeKind::survival).studies[0]);
  CHECK(c.studies[0].outcome.kind() == OutcomeKind::survival);
  CHECK(c.studies[0].outcome.events()[0] == 1);
  CHECK(c.studies[0].outcome.values()[1] == doctest::Approx(4.0));

  auto bad = write_temp("badsurv.csv", "time,event,g1\n-1,1,0.1\n");
  CHECK_THROWS_AS(load_studies({bad}, OutcomeKind::survival), DataError);
}

TEST_CASE("align_features: identical lists are a no-op") {
  StudyCollection c;
  c.studies = {tiny_study("a", 3, 2, 0.0), tiny_study("b", 4, 2, 1.0)};
  StudyCollection aligned = align_features(c);
  CHECK(aligned.shared_features == c.studies[0].feature_names);
  CHECK(aligned.studies[0].features == c.studies[0].features);
  CHECK(aligned.studies[1].features == c.studies[1].features);
}

TEST_CASE("align_features: intersection ordered by study 1") {
  StudyCollection c;
  StudyDataset a = tiny_study("a", 3, 3, 0.0);
  a.feature_names = {"a", "b", "c"};
  StudyDataset b = tiny_study("b", 3, 3, 1.0);
  b.feature_names = {"b", "c", "d"};
  c.studies = {a, b};
  StudyCollection aligned = align_features(c);
  CHECK(aligned.shared_features == std::vector<std::string>{"b", "c"});
  // study a keeps columns 1,2; study b keeps columns 0,1
  CHECK(aligned.studies[0].features.col(0) == a.features.col(1));
  CHECK(aligned.studies[1].features.col(1) == b.features.col(1));
}

TEST_CASE("align_features: empty triple intersection errors") {
  // pairwise overlaps exist but the triple intersection is empty
  std::vector<std::vector<std::string>> names = {{"a", "b"}, {"b", "c"}, {"c", "a"}};
  std::set<std::string> inter(names[0].begin(), names[0].end());
  for (size_t k = 1; k < names.size(); ++k) {
    std::set<std::string> next(names[k].begin(), names[k].end());
    std::set<std::string> keep;
    std::set_intersection(inter.begin(), inter.end(), next.begin(), next.end(),
                          std::inserter(keep, keep.begin()));
    inter = keep;
  }
  REQUIRE(inter.empty());  // oracle confirms the construction

  StudyCollection c;
  for (size_t k = 0; k < 3; ++k) {
    StudyDataset s = tiny_study("s" + std::to_string(k), 3, 2, 0.0);
    s.feature_names = names[k];
    c.studies.push_back(s);
  }
  CHECK_THROWS_AS(align_features(c), DataError);
}

TEST_CASE("align_features is idempotent") {
  StudyCollection c;
  StudyDataset a = tiny_study("a", 3, 3, 0.0);
  a.feature_names = {"p", "q", "r"};
  StudyDataset b = tiny_study("b", 2, 3, 1.0);
  b.feature_names = {"r", "q", "z"};
  c.studies = {a, b};
  StudyCollection once = align_features(c);
  StudyCollection twice = align_features(once);
  CHECK(once.shared_features == twice.shared_features);
  for (int s = 0; s < once.size(); ++s)
    CHECK(once.studies[static_cast<size_t>(s)].features ==
          twice.studies[static_cast<size_t>(s)].features);
}

TEST_CASE("subsample: j = n is a permutation of the study") {
  StudyDataset s = tiny_study("a", 5, 2, 0.0);
  RngStream rng(7);
  StudyDataset sub = subsample(s, 5, rng);
  CHECK(sub.n() == 5);
  std::multiset<double> orig, got;
  for (int i = 0; i < 5; ++i) {
    orig.insert(s.features(i, 0));
    got.insert(sub.features(i, 0));
  }
  CHECK(orig == got);
}

TEST_CASE("subsample: deterministic per seed") {
  StudyDataset s = tiny_study("a", 6, 2, 0.0);
  RngStream r1(42), r2(42);
  StudyDataset a = subsample(s, 1, r1);
  StudyDataset b = subsample(s, 1, r2);
  CHECK(a.features == b.features);
  CHECK_THROWS_AS({ RngStream r(1); subsample(s, 7, r); }, DataError);
}

TEST_CASE("subsample: uniform over rows") {
  StudyDataset s = tiny_study("a", 4, 1, 0.0);
  RngStream rng(123);
  std::vector<int> counts(4, 0);
  const int reps = 10000;
  for (int r = 0; r < reps; ++r) {
    RngStream draw = rng.child("draw", static_cast<uint64_t>(r));
    StudyDataset sub = subsample(s, 1, draw);
    for (int i = 0; i < 4; ++i)
      if (sub.features(0, 0) == s.features(i, 0)) counts[static_cast<size_t>(i)]++;
  }
  // binomial(10000, 1/4): 0.25 +- 4.3e-3 sd; [0.22, 0.28] is a ~7 sd corridor
  for (int i = 0; i < 4; ++i) {
    double freq = counts[static_cast<size_t>(i)] / static_cast<double>(reps);
    CHECK(freq > 0.22);
    CHECK(freq < 0.28);
  }
}

TEST_CASE("combine: singleton and exclusion rules") {
  StudyCollection c;
  c.studies = {tiny_study("s", 3, 2, 0.0), tiny_study("v", 4, 2, 10.0)};
  StudyDataset only_s = combine(c, {"s"});
  CHECK(only_s.n() == 3);
  CHECK(only_s.features == c.studies[0].features);

  StudyDataset excl = combine(c, {"s", "v"}, std::string("v"));
  CHECK(excl.features == c.studies[0].features);

  CHECK_THROWS_AS(combine(c, {"v"}, std::string("v")), DataError);
}

TEST_CASE("combine: concatenation in collection order") {
  StudyCollection c;
  c.studies = {tiny_study("a", 3, 2, 0.0), tiny_study("b", 4, 2, 100.0),
               tiny_study("c", 5, 2, 200.0)};
  StudyDataset all = combine(c, {"c", "a", "b"});
  CHECK(all.n() == 12);
  // oracle: stack rows manually
  Eigen::MatrixXd expected(12, 2);
  expected << c.studies[0].features, c.studies[1].features, c.studies[2].features;
  CHECK(all.features == expected);
}

TEST_CASE("combine never includes rows of the excluded study") {
  StudyCollection c;
  c.studies = {tiny_study("a", 3, 1, 0.0), tiny_study("b", 3, 1, 1000.0),
               tiny_study("v", 3, 1, -999.0)};
  StudyDataset out = combine(c, {"a", "b", "v"}, std::string("v"));
  for (int i = 0; i < out.n(); ++i) CHECK(out.features(i, 0) >= 0.0);
}

TEST_CASE("combine rejects mismatched outcome kinds") {
  StudyCollection c;
  c.studies = {tiny_study("a", 3, 2, 0.0, OutcomeKind::continuous),
               tiny_study("b", 3, 2, 1.0, OutcomeKind::binary)};
  CHECK_THROWS_AS(combine(c, {"a", "b"}), DataError);
}
