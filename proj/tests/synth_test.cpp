#include <gtest/gtest.h>

#include <cmath>

#include "streetrank/stats.hpp"
#include "streetrank/synth.hpp"

using namespace streetrank;

namespace {

double region_mean(const Image& img, int channel, bool top) {
  double s = 0;
  int n = 0;
  const int half = img.height / 2;
  for (int y = top ? 0 : half; y < (top ? half : img.height); ++y) {
    for (int x = 0; x < img.width; ++x, ++n) s += img.at(y, x, channel);
  }
  return s / n;
}

synth::WorldConfig small_world(int n, std::uint64_t seed) {
  synth::WorldConfig wc;
  wc.n_images = n;
  wc.seed = seed;
  wc.render.height = wc.render.width = 16;
  return wc;
}

}  // namespace

TEST(Synth, BrightnessTracksPlantedScore) {
  const auto imgs = synth::generate_images(200, 4, 32, 32, Attribute::lively);
  std::vector<double> b, s;
  for (const auto& r : imgs) {
    b.push_back(region_mean(*r.pixels, 1, true));  // lively: channel 1, top half
    s.push_back(*r.planted_score);
  }
  EXPECT_GE(stats::regression_r2(s, b), 0.9);
}

TEST(Synth, UnsetAttributesRenderNeutral) {
  std::array<std::optional<double>, 6> scores{};
  scores[0] = 10.0;
  synth::RenderOptions opt;
  opt.pixel_noise = opt.grating_amplitude = opt.illumination_jitter = 0;
  const Image img = synth::render_image(scores, 1, opt);
  EXPECT_NEAR(region_mean(img, 0, true), 0.8, 1e-6);
  EXPECT_NEAR(region_mean(img, 1, true), 0.5, 1e-6);
  EXPECT_NEAR(region_mean(img, 0, false), 0.5, 1e-6);
}

TEST(Synth, DeterministicWorld) {
  const auto a = synth::make_world(small_world(20, 9));
  const auto b = synth::make_world(small_world(20, 9));
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.scores, b.scores);
  EXPECT_NE(a.images, synth::make_world(small_world(20, 10)).images);
}

TEST(Synth, NoiselessComparisonsFollowScores) {
  const auto w = synth::make_world(small_world(50, 2));
  const auto ts = synth::sample_comparisons(w, Attribute::safe, 500, 1);
  ASSERT_EQ(ts.size(), 500u);
  std::map<std::string, double> s;
  for (std::size_t i = 0; i < w.images.size(); ++i) s[w.images[i].id] = w.scores.at(Attribute::safe)[i];
  for (const auto& t : ts) {
    EXPECT_NE(t.left_id, t.right_id);
    EXPECT_GE(s[t.winner()], s[t.loser()]);
  }
}

TEST(Synth, BradleyTerryEqualScoresIsCoinFlip) {
  auto wc = small_world(2, 1);
  wc.noise = {synth::NoiseKind::bradley_terry, 2.0};
  auto w = synth::make_world(wc);
  w.scores[Attribute::safe] = {5.0, 5.0};
  const auto ts = synth::sample_comparisons(w, Attribute::safe, 20000, 3);
  int left = 0;
  for (const auto& t : ts) left += t.outcome == Outcome::left;
  EXPECT_NEAR(left / 20000.0, 0.5, 0.02);
}

TEST(Synth, BradleyTerryMatchesLogistic) {
  auto wc = small_world(2, 1);
  wc.noise = {synth::NoiseKind::bradley_terry, 2.0};
  auto w = synth::make_world(wc);
  w.scores[Attribute::safe] = {7.0, 5.0};
  const auto ts = synth::sample_comparisons(w, Attribute::safe, 40000, 8);
  int first_wins = 0;
  for (const auto& t : ts) first_wins += t.winner() == w.images[0].id;
  EXPECT_NEAR(first_wins / 40000.0, 1.0 / (1.0 + std::exp(-1.0)), 0.01);
}

TEST(Synth, EqualRate) {
  const auto w = synth::make_world(small_world(30, 5));
  synth::SampleOptions opt;
  opt.equal_rate = synth::kObservedEqualRate;
  const auto ts = synth::sample_comparisons(w, Attribute::safe, 100000, 6, opt);
  std::size_t eq = 0;
  for (const auto& t : ts) eq += t.outcome == Outcome::equal;
  EXPECT_NEAR(double(eq) / 100000.0, 0.132, 0.005);
}

TEST(Synth, CorrelatedAttributesHitTargetExactly) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 10);
  std::vector<double> base(300);
  for (double& x : base) x = u(rng);
  for (double target : {0.0, 0.3, 0.8, 1.0}) {
    const auto c = synth::correlated_attributes(base, target, 17);
    EXPECT_NEAR(stats::signed_r2(base, c), target, 1e-9) << target;
    EXPECT_NEAR(*std::min_element(c.begin(), c.end()), 0.0, 1e-12);
    EXPECT_NEAR(*std::max_element(c.begin(), c.end()), 10.0, 1e-12);
  }
  EXPECT_THROW(synth::correlated_attributes(base, 1.5, 1), Error);
}

TEST(Synth, WorldRecordsTargetCorrelations) {
  auto wc = small_world(100, 3);
  wc.attributes = {Attribute::safe, Attribute::lively, Attribute::wealthy};
  wc.r2_with_base = {{Attribute::lively, 0.8}, {Attribute::wealthy, 0.5}};
  const auto w = synth::make_world(wc);
  const auto si = std::size_t(index_of(Attribute::safe)), li = std::size_t(index_of(Attribute::lively)),
             wi = std::size_t(index_of(Attribute::wealthy));
  EXPECT_EQ(w.attribute_correlation[si][li], 0.8);
  EXPECT_DOUBLE_EQ(w.attribute_correlation[li][wi], 0.4);
  EXPECT_NEAR(stats::signed_r2(w.scores.at(Attribute::safe), w.scores.at(Attribute::lively)), 0.8, 1e-9);
  EXPECT_EQ(w.truth().at(Attribute::wealthy).size(), 100u);
}

TEST(Synth, Errors) {
  EXPECT_THROW(synth::make_world(small_world(1, 1)), Error);
  const auto w = synth::make_world(small_world(5, 1));
  EXPECT_THROW(synth::sample_comparisons(w, Attribute::safe, 0, 1), Error);
}
