#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "caps/dataset.hpp"
#include "caps/metrics.hpp"
#include "caps/rng.hpp"

using namespace caps;
using namespace caps::data;

namespace {

struct TempCsv {
  std::filesystem::path path;
  explicit TempCsv(const std::string& contents) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("caps_ds_test_" + std::to_string(++counter) + ".csv");
    std::ofstream out(path);
    out << contents;
  }
  ~TempCsv() { std::error_code ec; std::filesystem::remove(path, ec); }
};

std::string repeated_labels_csv() {
  // 12 rows; the first three labels are a, b, a.
  std::string s = "f0,f1,label\n";
  const char* labels[12] = {"a", "b", "a", "b", "a", "b", "a", "b", "a", "b", "a", "b"};
  for (int i = 0; i < 12; ++i) {
    s += std::to_string(i) + "," + std::to_string(i * 0.5) + "," + labels[i] + "\n";
  }
  return s;
}

}  // namespace

TEST_CASE("load_csv infers binary task and maps labels in appearance order") {
  TempCsv f(repeated_labels_csv());
  Dataset ds = load_csv(f.path.string(), "label");
  CHECK(ds.task == Task::kBinary);
  CHECK(ds.n() == 12);
  CHECK(ds.feature_count() == 2);
  CHECK(ds.y[0] == 0.0);
  CHECK(ds.y[1] == 1.0);
  CHECK(ds.y[2] == 0.0);
  CHECK(ds.class_names == std::vector<std::string>{"a", "b"});
  CHECK(ds.feature_names == std::vector<std::string>{"f0", "f1"});
}

TEST_CASE("load_csv infers regression from fractional labels") {
  std::string s = "f0,f1,target\n";
  for (int i = 0; i < 10; ++i) {
    s += std::to_string(i) + ",1," + (i % 2 == 0 ? "0.1" : "2.7") + "\n";
  }
  TempCsv f(s);
  Dataset ds = load_csv(f.path.string(), "target");
  CHECK(ds.task == Task::kRegression);
  CHECK(ds.y[1] == 2.7);
}

TEST_CASE("load_csv errors name the missing label column") {
  TempCsv f(repeated_labels_csv());
  CHECK_THROWS_WITH_AS(load_csv(f.path.string(), "klass"), doctest::Contains("klass"), IoError);
  CHECK_THROWS_AS(load_csv("/nonexistent/nowhere.csv", "label"), IoError);
}

TEST_CASE("load_csv drops rows with unparseable cells and counts them") {
  std::string s = "f0,f1,label\n";
  for (int i = 0; i < 11; ++i) s += std::to_string(i) + ",2,x\n";
  s += "oops,2,y\n";   // unparseable feature
  s += "3,2,y\n";
  TempCsv f(s);
  Dataset ds = load_csv(f.path.string(), "label");
  CHECK(ds.dropped_rows == 1);
  CHECK(ds.n() == 12);
}

TEST_CASE("load_csv rejects files with fewer than 10 usable rows") {
  std::string s = "f0,f1,label\n1,2,a\n3,4,b\n5,6,a\n";
  TempCsv f(s);
  CHECK_THROWS_AS(load_csv(f.path.string(), "label"), ContractError);
}

TEST_CASE("load_csv honors a task override") {
  TempCsv f(repeated_labels_csv());
  Dataset ds = load_csv(f.path.string(), "label", Task::kMulticlass);
  CHECK(ds.task == Task::kMulticlass);
  CHECK(ds.class_count() == 2);
}

TEST_CASE("kfold round-robin sizes and determinism") {
  FoldPlan p = kfold(10, 5, 7);
  for (int fold = 0; fold < 5; ++fold) CHECK(p.fold_indices(fold).size() == 2);

  FoldPlan p2 = kfold(10, 5, 7);
  CHECK(p.assignment == p2.assignment);
  FoldPlan p3 = kfold(10, 5, 8);
  CHECK(p.assignment != p3.assignment);

  FoldPlan q = kfold(11, 5, 3);
  std::vector<std::size_t> sizes;
  for (int fold = 0; fold < 5; ++fold) sizes.push_back(q.fold_indices(fold).size());
  CHECK(sizes == std::vector<std::size_t>{3, 2, 2, 2, 2});

  CHECK_THROWS_AS(kfold(4, 5, 0), ContractError);
  CHECK_THROWS_AS(kfold(10, 1, 0), ContractError);
}

TEST_CASE("one_hot_rep basics and round trip") {
  RowVector r = one_hot_rep(FeatureSubset({0, 2}), 4);
  CHECK(r(0) == 1.0);
  CHECK(r(1) == 0.0);
  CHECK(r(2) == 1.0);
  CHECK(r(3) == 0.0);

  CHECK(one_hot_rep(FeatureSubset(), 3).isZero(0));
  CHECK(one_hot_rep(FeatureSubset::full(3), 3).sum() == 3.0);
  CHECK_THROWS_AS(one_hot_rep(FeatureSubset({4}), 4), IndexError);

  // Bijection over random subsets.
  SeededRng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> ids;
    for (int j = 0; j < 9; ++j) {
      if (rng.uniform() < 0.4) ids.push_back(j);
    }
    FeatureSubset f(ids);
    CHECK(subset_from_one_hot(one_hot_rep(f, 9)) == f);
  }
}

TEST_CASE("f1_binary hand-counted cases") {
  std::vector<double> yt{1, 0, 1, 0};
  std::vector<double> perfect{1, 0, 1, 0};
  BinaryScore s = f1_binary(yt, perfect);
  CHECK(s.precision == 1.0);
  CHECK(s.recall == 1.0);
  CHECK(s.f1 == 1.0);

  // TP=2, FP=1, FN=1.
  std::vector<double> yt2{1, 1, 1, 0, 0, 0};
  std::vector<double> yp2{1, 1, 0, 1, 0, 0};
  BinaryScore s2 = f1_binary(yt2, yp2);
  CHECK(s2.precision == doctest::Approx(2.0 / 3.0));
  CHECK(s2.recall == doctest::Approx(2.0 / 3.0));
  CHECK(s2.f1 == doctest::Approx(2.0 / 3.0));

  std::vector<double> all_neg{0, 0, 0, 0};
  CHECK(f1_binary(yt, all_neg).f1 == 0.0);

  std::vector<double> shorter{1, 0};
  CHECK_THROWS_AS(f1_binary(yt, shorter), DimensionError);
}

TEST_CASE("micro_f1 hand-counted cases") {
  std::vector<double> yt{0, 1, 2, 3};
  CHECK(micro_f1(yt, yt, 4) == 1.0);

  std::vector<double> yp{0, 1, 2, 0};
  CHECK(micro_f1(yt, yp, 4) == doctest::Approx(0.75));

  // Constant predictor on balanced 4-class data of size 8.
  std::vector<double> yt8{0, 0, 1, 1, 2, 2, 3, 3};
  std::vector<double> yc(8, 0.0);
  CHECK(micro_f1(yt8, yc, 4) == doctest::Approx(0.25));
}

TEST_CASE("micro_f1 equals accuracy on random single-label cases") {
  SeededRng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const int classes = rng.uniform_int(2, 7);
    const int n = rng.uniform_int(5, 40);
    std::vector<double> yt, yp;
    for (int i = 0; i < n; ++i) {
      yt.push_back(static_cast<double>(rng.uniform_int(0, classes)));
      yp.push_back(static_cast<double>(rng.uniform_int(0, classes)));
    }
    CHECK(micro_f1(yt, yp, classes) == doctest::Approx(accuracy(yt, yp)).epsilon(1e-12));
  }
}

TEST_CASE("one_minus_rae closed forms") {
  std::vector<double> y{0.0, 2.0, 4.0};
  CHECK(one_minus_rae(y, y) == doctest::Approx(1.0));

  std::vector<double> mean_pred(3, 2.0);
  CHECK(one_minus_rae(y, mean_pred) == doctest::Approx(0.0));

  std::vector<double> y2{0.0, 2.0};
  std::vector<double> yp2{2.0, 0.0};
  CHECK(one_minus_rae(y2, yp2) == doctest::Approx(-1.0));

  std::vector<double> constant(4, 1.0);
  std::vector<double> anything{1, 2, 3, 4};
  CHECK_THROWS_AS(one_minus_rae(constant, anything), ContractError);
}

TEST_CASE("metrics are invariant under simultaneous permutation") {
  SeededRng rng(29);
  std::vector<double> yt, yp;
  for (int i = 0; i < 30; ++i) {
    yt.push_back(static_cast<double>(rng.uniform_int(0, 3)));
    yp.push_back(static_cast<double>(rng.uniform_int(0, 3)));
  }
  std::vector<std::size_t> perm(yt.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<double> yt_p, yp_p;
  for (std::size_t i : perm) {
    yt_p.push_back(yt[i]);
    yp_p.push_back(yp[i]);
  }
  CHECK(micro_f1(yt, yp, 3) == doctest::Approx(micro_f1(yt_p, yp_p, 3)).epsilon(1e-12));

  std::vector<double> bt, bp;
  for (double v : yt) bt.push_back(v > 1 ? 1.0 : 0.0);
  for (double v : yp) bp.push_back(v > 1 ? 1.0 : 0.0);
  std::vector<double> bt_p, bp_p;
  for (std::size_t i : perm) {
    bt_p.push_back(bt[i]);
    bp_p.push_back(bp[i]);
  }
  CHECK(f1_binary(bt, bp).f1 == doctest::Approx(f1_binary(bt_p, bp_p).f1).epsilon(1e-12));

  std::vector<double> rt, rp;
  for (int i = 0; i < 30; ++i) {
    rt.push_back(rng.uniform(-2, 2));
    rp.push_back(rng.uniform(-2, 2));
  }
  std::vector<double> rt_p, rp_p;
  for (std::size_t i : perm) {
    rt_p.push_back(rt[i]);
    rp_p.push_back(rp[i]);
  }
  CHECK(one_minus_rae(rt, rp) == doctest::Approx(one_minus_rae(rt_p, rp_p)).epsilon(1e-12));
}

TEST_CASE("roc_auc sanity: perfect separation and chance") {
  std::vector<double> yt{0, 0, 1, 1};
  std::vector<double> perfect{0.1, 0.2, 0.8, 0.9};
  CHECK(roc_auc(yt, perfect) == doctest::Approx(1.0));
  std::vector<double> constant(4, 0.5);
  CHECK(roc_auc(yt, constant) == doctest::Approx(0.5));
}
