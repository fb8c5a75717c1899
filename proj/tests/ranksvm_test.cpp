#include <gtest/gtest.h>

#include <random>

#include "streetrank/ranksvm.hpp"
#include "support/ranksvm_oracle.hpp"
#include "support/tempdir.hpp"

using namespace streetrank;
using namespace streetrank::ranksvm;

TEST(RankSvm, ThreeCycleMatchesGrid) {
  // 1-D features 1, 0, -1 with a cyclic preference a > b > c > a.
  std::vector<PairSample> pairs{{{1}, {0}, 1}, {{0}, {-1}, 1}, {{-1}, {1}, 1}};
  const auto fit = train(pairs, 1.0, 1e-10, 1000);
  const Matrix D = difference_matrix(pairs);
  const auto grid = oracle::grid_minimum_1d(D, 1.0, -10.0, 10.0, 1e-4);
  EXPECT_NEAR(objective(D, fit.model.w, 1.0), grid.value, 1e-5);
  EXPECT_NEAR(fit.model.w[0], grid.argmin, 1e-3);
}

TEST(RankSvm, RandomInstancesMatchOracle) {
  std::mt19937_64 rng(3);
  for (int inst = 0; inst < 10; ++inst) {
    const auto problem = oracle::random_instance(rng);
    const Matrix D = difference_matrix(problem.pairs);
    const auto fit = train(problem.pairs, problem.c_reg, 1e-10, 5000);
    const double best = oracle::grid_minimum(D, problem.c_reg);
    EXPECT_LE(objective(D, fit.model.w, problem.c_reg), best + 1e-5) << "instance " << inst;
    EXPECT_GE(objective(D, fit.model.w, problem.c_reg), best - 1e-3) << "grid is too coarse";
  }
}

TEST(RankSvm, ObjectiveNeverIncreases) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  std::vector<PairSample> pairs;
  for (int k = 0; k < 60; ++k) {
    PairSample p;
    for (int c = 0; c < 5; ++c) {
      p.left.push_back(g(rng));
      p.right.push_back(g(rng));
    }
    p.y = g(rng) > 0 ? 1 : -1;
    pairs.push_back(p);
  }
  const auto fit = train(pairs, 3.0, 1e-9, 500);
  ASSERT_GE(fit.objective_history.size(), 2u);
  for (std::size_t i = 1; i < fit.objective_history.size(); ++i) {
    EXPECT_LE(fit.objective_history[i], fit.objective_history[i - 1]);
  }
  EXPECT_TRUE(fit.converged);
}

TEST(RankSvm, TranslationInvariant) {
  // Dyadic values keep the shifted differences exact.
  std::vector<PairSample> a{{{0.5, 1.25}, {0.25, -0.5}, 1}, {{-1.0, 0.75}, {0.5, 0.5}, -1}, {{2.0, 0.0}, {1.5, 1.0}, 1}};
  auto b = a;
  for (auto& p : b) {
    for (auto& v : p.left) v += 8.0;
    for (auto& v : p.right) v += 8.0;
  }
  const auto fa = train(a, 1.0, 1e-10, 1000), fb = train(b, 1.0, 1e-10, 1000);
  EXPECT_EQ(fa.model.w, fb.model.w);
}

TEST(RankSvm, ZeroDifferencesGiveZeroWeights) {
  std::vector<PairSample> pairs{{{1, 2}, {1, 2}, 1}, {{3, 4}, {3, 4}, -1}};
  const auto fit = train(pairs, 1.0, 1e-10, 100);
  EXPECT_EQ(fit.model.w.norm(), 0.0);
}

TEST(RankSvm, SeparableDataOrdersCorrectly) {
  std::vector<PairSample> pairs{{{3}, {1}, 1}, {{0}, {2}, -1}, {{1}, {4}, -1}};
  const auto fit = train(pairs, 10.0, 1e-10, 1000);
  const std::vector<double> hi{5}, lo{-5};
  EXPECT_GT(score(fit.model, hi), score(fit.model, lo));
}

TEST(RankSvm, Errors) {
  EXPECT_THROW(difference_matrix(std::vector<PairSample>{}), Error);
  std::vector<PairSample> bad{{{1, 2}, {1}, 1}};
  try {
    difference_matrix(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
  std::vector<PairSample> nan{{{std::nan("")}, {1}, 1}};
  try {
    difference_matrix(nan);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteFeature);
  }
  std::vector<PairSample> ok{{{1}, {0}, 1}};
  EXPECT_THROW(train(ok, 0.0, 1e-6, 10), Error);
  const auto fit = train(ok, 1.0, 1e-6, 100);
  const std::vector<double> wrong{1, 2};
  EXPECT_THROW(score(fit.model, wrong), Error);
}

TEST(RankSvm, SaveLoad) {
  TempDir dir;
  RankSvmModel m;
  m.w = Vector::LinSpaced(4, -1.5, 2.25);
  m.c_reg = 0.1;
  save(dir / "m.txt", m);
  const auto back = load(dir / "m.txt");
  EXPECT_EQ(back.w, m.w);
  EXPECT_EQ(back.c_reg, m.c_reg);
}
