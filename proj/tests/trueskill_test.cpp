#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "streetrank/stats.hpp"
#include "streetrank/synth.hpp"
#include "streetrank/trueskill.hpp"

using namespace streetrank;
using namespace streetrank::trueskill;

namespace {

TrueSkillConfig literal() {
  TrueSkillConfig c;
  c.epsilon = 0.0;
  c.epsilon_mode = EpsilonMode::paper_literal;
  return c;
}

/// Straight-line scalar transcription of the two-player update.
std::pair<SkillRating, SkillRating> oracle_update(SkillRating x, SkillRating y, double beta) {
  const double c2 = 2 * beta * beta + x.sigma2 + y.sigma2;
  const double c = std::sqrt(c2);
  const double t = (x.mu - y.mu) / c;
  const double pdf = std::exp(-t * t / 2) / std::sqrt(2 * M_PI);
  const double cdf = 0.5 * std::erfc(-t / std::sqrt(2.0));
  const double v = pdf / cdf;
  const double w = v * (v + t);
  SkillRating nx{x.mu + x.sigma2 / c * v, x.sigma2 * (1 - x.sigma2 / c2 * w)};
  SkillRating ny{y.mu - y.sigma2 / c * v, y.sigma2 * (1 - y.sigma2 / c2 * w)};
  return {nx, ny};
}

}  // namespace

TEST(VW, ValuesAtZero) {
  const auto vw = v_w_functions(0.0, 0.0, EpsilonMode::standard);
  EXPECT_NEAR(vw.f, 0.797885, 1e-6);
  EXPECT_NEAR(vw.g, 0.636620, 1e-6);
}

TEST(VW, DeepTailUsesAsymptotics) {
  const auto vw = v_w_functions(-35.0, 0.0, EpsilonMode::standard);
  EXPECT_NEAR(vw.f, 35.0286, 1e-4);
  EXPECT_TRUE(std::isfinite(vw.g));
  EXPECT_GT(vw.g, 0.0);
  EXPECT_LT(vw.g, 1.0);
  // Continuity across the switch point.
  const double below = v_w_functions(-30.0 - 1e-9, 0.0, EpsilonMode::standard).f;
  const double above = v_w_functions(-30.0 + 1e-9, 0.0, EpsilonMode::standard).f;
  EXPECT_NEAR(below, above, 1e-6);
}

TEST(VW, EpsilonModes) {
  const auto std_mode = v_w_functions(0.2, 0.05, EpsilonMode::standard);
  const auto shifted = v_w_functions(0.15, 0.0, EpsilonMode::standard);
  EXPECT_DOUBLE_EQ(std_mode.f, shifted.f);
  const auto lit = v_w_functions(0.2, 0.05, EpsilonMode::paper_literal);
  EXPECT_DOUBLE_EQ(lit.f, v_w_functions(0.2, 0.0, EpsilonMode::standard).f);
}

TEST(Update, DefaultPriorsFirstGame) {
  const auto cfg = literal();
  const auto [w, l] = update_pair(cfg.prior(), cfg.prior(), cfg);
  EXPECT_NEAR(w.mu, 28.3245, 1e-4);
  EXPECT_NEAR(l.mu, 21.6755, 1e-4);
  EXPECT_LT(w.sigma2, cfg.prior().sigma2);
  EXPECT_DOUBLE_EQ(w.sigma2, l.sigma2);
}

TEST(Update, MatchesIndependentOracle) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> mu(0, 50), s2(1, 100);
  const auto cfg = literal();
  for (int k = 0; k < 1000; ++k) {
    SkillRating x{mu(rng), s2(rng)}, y{mu(rng), s2(rng)};
    const auto [a, b] = update_pair(x, y, cfg);
    const auto [oa, ob] = oracle_update(x, y, cfg.beta);
    ASSERT_NEAR(a.mu, oa.mu, 1e-12);
    ASSERT_NEAR(b.mu, ob.mu, 1e-12);
    ASSERT_NEAR(a.sigma2, oa.sigma2, 1e-12);
    ASSERT_NEAR(b.sigma2, ob.sigma2, 1e-12);
  }
}

TEST(Update, InvariantsOverRandomUpdates) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> mu(0, 50), s2(0.5, 80);
  TrueSkillConfig cfg;
  for (int k = 0; k < 2000; ++k) {
    SkillRating x{mu(rng), s2(rng)}, y{mu(rng), s2(rng)};
    const auto [a, b] = update_pair(x, y, cfg);
    EXPECT_GT(a.mu, x.mu);
    EXPECT_LT(b.mu, y.mu);
    EXPECT_GT(a.sigma2, 0);
    EXPECT_LT(a.sigma2, x.sigma2);
    EXPECT_LT(b.sigma2, y.sigma2);
    // The winner's gain and loser's loss scale with their variances.
    EXPECT_NEAR((a.mu - x.mu) / x.sigma2, (y.mu - b.mu) / y.sigma2, 1e-9);
  }
}

TEST(Update, UpsetMovesMoreThanExpectedWin) {
  const auto cfg = literal();
  const auto expected = update_pair({35, 10}, {15, 10}, cfg);
  const auto upset = update_pair({15, 10}, {35, 10}, cfg);
  EXPECT_GT(upset.first.mu - 15, expected.first.mu - 35);
}

TEST(Update, PaperDisplayedVarianceCanFail) {
  auto cfg = literal();
  cfg.variance_form = VarianceForm::paper_displayed;
  // sigma2 / c * g exceeds 1 for wide priors and an upset.
  EXPECT_THROW(update_pair({0, 400}, {50, 400}, cfg), Error);
}

TEST(RatingState, EqualOutcomesAndUnknownIds) {
  RatingState s(Attribute::safe, {"a", "b"}, literal());
  s.apply(make_triplet("a", "b", Attribute::safe, Outcome::equal, Source::human));
  EXPECT_EQ(s.ratings().at("a").mu, 25.0);
  s.apply(make_triplet("a", "b", Attribute::safe, Outcome::right, Source::human));
  EXPECT_GT(s.ratings().at("b").mu, s.ratings().at("a").mu);
  try {
    s.apply(make_triplet("a", "z", Attribute::safe, Outcome::left, Source::human));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownImageId);
  }
}

TEST(RateAll, OrderMattersAndOtherAttributesIgnored) {
  const auto cfg = literal();
  std::vector<ComparisonTriplet> ts{make_triplet("a", "b", Attribute::safe, Outcome::left, Source::human),
                                    make_triplet("b", "c", Attribute::safe, Outcome::left, Source::human),
                                    make_triplet("c", "a", Attribute::lively, Outcome::left, Source::human)};
  const auto t = rate_all(ts, cfg, Attribute::safe, {"a", "b", "c"});
  EXPECT_GT(t.entries.at("a").mu, t.entries.at("c").mu);
  EXPECT_DOUBLE_EQ(*t.entries.at("a").scaled, 10.0);
  EXPECT_DOUBLE_EQ(*t.entries.at("c").scaled, 0.0);
  std::swap(ts[0], ts[1]);
  EXPECT_NE(rate_all(ts, cfg, Attribute::safe, {"a", "b", "c"}), t);
}

TEST(RateAll, RecoversPlantedOrder) {
  synth::WorldConfig wc;
  wc.n_images = 100;
  wc.seed = 21;
  wc.render.height = wc.render.width = 8;
  const auto world = synth::make_world(wc);
  const auto ts = synth::sample_comparisons(world, Attribute::safe, 100 * 36 / 2, 3);
  std::vector<std::string> ids;
  for (const auto& r : world.images) ids.push_back(r.id);
  const auto table = rate_all(ts, literal(), Attribute::safe, ids);
  std::vector<double> mu;
  for (const auto& id : ids) mu.push_back(table.entries.at(id).mu);
  EXPECT_GE(stats::kendall_tau(mu, world.scores.at(Attribute::safe)), 0.85);
}

TEST(Anchored, MixesReferenceAndInternalComparisons) {
  ScoreTable ref;
  for (int i = 0; i < 10; ++i) ref.entries["r" + std::to_string(i)] = {double(15 + 2 * i), 2.0, {}};
  const std::vector<std::string> fresh{"n0", "n1", "n2"};
  // Planted order: n2 > n1 > n0; reference images rank by index.
  auto value = [](const std::string& id) {
    return id[0] == 'n' ? 3.0 + 2.0 * (id[1] - '0') : double(id[1] - '0');
  };
  PairPredictor p = [&](const std::string& a, const std::string& b) { return value(a) >= value(b); };
  const auto r = anchored_rate(fresh, ref, p, 30, 4);
  EXPECT_EQ(r.comparisons.size(), 3u * 30u);
  int anchored = 0;
  for (const auto& t : r.comparisons) anchored += t.left_id[0] == 'r' ? 1 : 0;
  EXPECT_EQ(anchored, 45);
  ASSERT_EQ(r.scores.entries.size(), 3u);
  EXPECT_LT(r.scores.entries.at("n0").mu, r.scores.entries.at("n1").mu);
  EXPECT_LT(r.scores.entries.at("n1").mu, r.scores.entries.at("n2").mu);
}

TEST(Anchored, EdgeCases) {
  ScoreTable ref;
  ref.entries["r"] = {25, 8, {}};
  PairPredictor p = [](const std::string&, const std::string&) { return true; };
  EXPECT_TRUE(anchored_rate({}, ref, p, 30, 1).scores.entries.empty());
  EXPECT_EQ(anchored_rate({"n"}, ref, p, 30, 1).comparisons.size(), 15u);
  EXPECT_THROW(anchored_rate({"n"}, ScoreTable{}, p, 30, 1), Error);
  EXPECT_THROW(anchored_rate({"r"}, ref, p, 30, 1), Error);
  EXPECT_THROW(anchored_rate({"n"}, ref, p, 3, 1), Error);
}
