#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "streetrank/eval.hpp"
#include "support/tempdir.hpp"
#include "support/world.hpp"

using namespace streetrank;

namespace {

const SmallWorld& world() {
  static const auto w = make_small_world(60, 30, 11);
  return *w;
}

const net::TrainResult& trained() {
  static const auto r = [] {
    net::TrainConfig c;
    c.lambda = 1.0;
    c.max_iters = 300;
    c.eval_every = 25;
    c.batch_size = 16;
    c.lr0 = 0.005;
    return net::train(world().bank, world().train_pairs, world().val_pairs, small_arch(), c);
  }();
  return r;
}

}  // namespace

TEST(Eval, MethodNames) {
  EXPECT_EQ(eval::parse_method("rss"), eval::Method::rss_ranking);
  EXPECT_EQ(eval::parse_method("ranksvm"), eval::Method::ranksvm);
  EXPECT_EQ(eval::to_string(eval::Method::trueskill), "trueskill");
  EXPECT_THROW(eval::parse_method("svm"), Error);
}

TEST(Eval, UntrainedNetworkIsNearChance) {
  const auto& w = world();
  // Coin-flip labels: no fixed predictor can beat chance on them.
  std::mt19937_64 rng(8);
  auto coin = w.all;
  for (auto& t : coin) t.outcome = rng() % 2 ? Outcome::left : Outcome::right;
  const auto params = net::init_params<net::Real>(small_arch(), 5);
  const auto r = eval::accuracy_softmax(params, w.bank, coin);
  EXPECT_EQ(r.n_test, coin.size());
  EXPECT_NEAR(r.accuracy, 0.5, 0.05);
}

TEST(Eval, TrainedNetworkBeatsChanceUnderEveryProtocol) {
  const auto& w = world();
  const auto& m = trained().params;
  EXPECT_GT(eval::accuracy_softmax(m, w.bank, w.test).accuracy, 0.8);
  EXPECT_GT(eval::accuracy_rss(m, w.bank, w.test).accuracy, 0.7);
  EXPECT_GT(eval::accuracy_trueskill(m, w.bank, w.test).accuracy, 0.8);
  const auto svm = eval::accuracy_ranksvm_detailed(eval::bank_features(m, w.bank), w.bank, w.train, w.validation, w.test);
  EXPECT_GT(svm.report.accuracy, 0.8);
  EXPECT_EQ(svm.c_trials.size(), 5u);
  EXPECT_EQ(svm.report.method, eval::Method::ranksvm);
}

TEST(Eval, IdenticalFeaturesGiveLeftBias) {
  const auto& w = world();
  ranksvm::Matrix x = ranksvm::Matrix::Ones(Eigen::Index(w.bank.size()), 3);
  const auto r = eval::accuracy_ranksvm_detailed(x, w.bank, w.train, {}, w.test);
  std::size_t left = 0;
  for (const auto& p : w.test_pairs) left += p.y == 1;
  EXPECT_EQ(r.report.correct, left);
  EXPECT_NEAR(r.report.accuracy, 0.5, 0.1);
  EXPECT_EQ(r.model.c_reg, 1.0);
}

TEST(Eval, PredictedComparisonCount) {
  const auto& w = world();
  const auto ts = eval::generate_predicted_comparisons(trained().params, w.bank, Attribute::safe, 7, 2);
  EXPECT_EQ(ts.size(), (7u * 60u + 1u) / 2u);
  for (const auto& t : ts) {
    EXPECT_NE(t.left_id, t.right_id);
    EXPECT_NE(t.outcome, Outcome::equal);
  }
  const auto ts_eval = eval::accuracy_trueskill_detailed(trained().params, w.bank, w.test, 30, 1);
  EXPECT_EQ(ts_eval.report.config.at("generated"), 900);
  EXPECT_EQ(ts_eval.scores.entries.size(), 60u);
}

TEST(Eval, EmptyTestSet) {
  const auto& w = world();
  std::vector<ComparisonTriplet> eq{make_triplet(w.bank.ids()[0], w.bank.ids()[1], Attribute::safe, Outcome::equal,
                                                 Source::human)};
  try {
    eval::accuracy_softmax(trained().params, w.bank, eq);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyTestSet);
  }
}

TEST(Eval, CrossAttributeNeedsEveryModel) {
  const auto& w = world();
  std::map<Attribute, std::vector<ComparisonTriplet>> tests{{Attribute::safe, w.test}, {Attribute::lively, w.test}};
  std::map<Attribute, const net::Model*> models{{Attribute::safe, &trained().params}};
  try {
    eval::cross_attribute_matrix(models, w.bank, tests);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingAttributeModel);
  }
  models[Attribute::lively] = &trained().params;
  const auto m = eval::cross_attribute_matrix(models, w.bank, tests);
  EXPECT_TRUE(m.has(Attribute::safe, Attribute::lively));
  EXPECT_FALSE(m.has(Attribute::safe, Attribute::boring));
  EXPECT_EQ(m(Attribute::safe, Attribute::safe), m(Attribute::lively, Attribute::safe));
}

TEST(Eval, AttributeR2) {
  ScoreTable a, b, c;
  for (int i = 0; i < 5; ++i) {
    const std::string id = "i" + std::to_string(i);
    a.entries[id] = {double(i), 1, {}};
    b.entries[id] = {double(-2 * i), 1, {}};
  }
  auto m = eval::attribute_r2({{Attribute::safe, a}, {Attribute::boring, b}});
  EXPECT_EQ(m(Attribute::safe, Attribute::safe), 1.0);
  EXPECT_NEAR(m(Attribute::safe, Attribute::boring), -1.0, 1e-12);
  c.entries["other"] = {1, 1, {}};
  try {
    eval::attribute_r2({{Attribute::safe, a}, {Attribute::lively, c}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MismatchedImageSets);
  }
}

TEST(Eval, MatrixCsvRoundTrip) {
  TempDir dir;
  eval::AttributeMatrix m;
  m(Attribute::safe, Attribute::safe) = 0.75;
  m(Attribute::safe, Attribute::lively) = 0.625;
  eval::write_matrix(dir / "m.csv", m);
  std::ifstream in(dir / "m.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "attribute,safe,lively,beautiful,wealthy,boring,depressing");
  const auto back = eval::read_matrix(dir / "m.csv");
  for (Attribute a : kAllAttributes) {
    for (Attribute b : kAllAttributes) {
      EXPECT_EQ(back.has(a, b), m.has(a, b));
      if (m.has(a, b)) EXPECT_EQ(back(a, b), m(a, b));
    }
  }
}

TEST(Eval, ReportsCsv) {
  TempDir dir;
  eval::write_reports(dir / "r.csv", {eval::make_report(eval::Method::trueskill, Attribute::safe, Attribute::lively, 3, 4)});
  std::ifstream in(dir / "r.csv");
  std::string h, row;
  std::getline(in, h);
  std::getline(in, row);
  EXPECT_EQ(h, "method,train_attr,test_attr,accuracy,correct,n_test");
  EXPECT_EQ(row, "trueskill,safe,lively,0.750000,3,4");
}

TEST(Eval, NestedSubsets) {
  const auto s = eval::nested_subsets(100, {0.1, 0.5, 1.0}, 4);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].size(), 10u);
  EXPECT_EQ(s[1].size(), 50u);
  EXPECT_EQ(s[2].size(), 100u);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(s[2][i], i);
  std::set<std::size_t> big(s[1].begin(), s[1].end());
  for (std::size_t i : s[0]) EXPECT_TRUE(big.count(i));
  EXPECT_TRUE(std::is_sorted(s[0].begin(), s[0].end()));
  EXPECT_THROW(eval::nested_subsets(10, {0.5, 0.2}, 1), Error);
  EXPECT_THROW(eval::nested_subsets(10, {1.5}, 1), Error);
}

TEST(Eval, LearningCurve) {
  const auto& w = world();
  eval::LearningCurveSetup s;
  s.bank = &w.bank;
  s.train = w.train_pairs;
  s.validation = w.val_pairs;
  s.test = w.test_pairs;
  s.arch = small_arch();
  s.train_cfg.max_iters = 20;
  s.train_cfg.eval_every = 10;
  const auto c = eval::learning_curve({0.5, 1.0}, s);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[1].n_train, w.train_pairs.size());
  EXPECT_EQ(c[0].n_train, (w.train_pairs.size() + 1) / 2);
}

TEST(Eval, KFoldPartitions) {
  const auto folds = eval::kfold_indices(23, 5, 3);
  std::vector<int> seen(23, 0);
  for (const auto& f : folds) {
    EXPECT_TRUE(f.size() == 4 || f.size() == 5);
    for (std::size_t i : f) ++seen[i];
  }
  for (int s : seen) EXPECT_EQ(s, 1);
  EXPECT_THROW(eval::kfold_indices(3, 5, 1), Error);

  const auto& w = world();
  std::size_t total_test = 0;
  const auto acc = eval::kfold(w.all, 4, 2, [&](const auto& train, const auto& test, int) {
    EXPECT_EQ(train.size() + test.size(), w.all.size());
    total_test += test.size();
    return double(test.size());
  });
  EXPECT_EQ(acc.size(), 4u);
  EXPECT_EQ(total_test, w.all.size());
}
