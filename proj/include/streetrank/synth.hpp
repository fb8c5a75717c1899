#pragma once

// Planted worlds: synthetic images whose pixels encode known per-attribute
// scores, and comparison streams sampled from those scores. These stand in for
// street-level imagery and human votes when checking the ranking machinery.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "streetrank/core.hpp"
#include "streetrank/io.hpp"
#include "streetrank/stats.hpp"

namespace streetrank::synth {

/// Fraction of equal votes observed in the crowdsourced data.
inline constexpr double kObservedEqualRate = 0.132;

enum class NoiseKind { noiseless, bradley_terry };

struct NoiseModel {
  NoiseKind kind = NoiseKind::noiseless;
  double scale = 1.0;  // Bradley-Terry temperature, in score units
};

struct RenderOptions {
  int height = 64;
  int width = 64;
  double score_gain = 0.06;     // brightness per score unit inside the attribute's region
  double pixel_noise = 0.06;
  double grating_amplitude = 0.04;
  double illumination_jitter = 0.003;
};

/// Neutral score for attributes the image does not encode.
inline constexpr double kNeutralScore = 5.0;

/// Attribute a modulates channel a % 3 inside the top half (a < 3) or the
/// bottom half (a >= 3). Unset attributes render at the neutral score.
inline Image render_image(const std::array<std::optional<double>, 6>& scores, std::uint64_t seed,
                          const RenderOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const double illum = opt.illumination_jitter * gauss(rng);
  const double fx = 0.05 + 0.25 * unif(rng), fy = 0.05 + 0.25 * unif(rng);
  const double phase = 2.0 * std::numbers::pi * unif(rng);
  const std::array<double, 3> tint{gauss(rng), gauss(rng), gauss(rng)};

  Image img(opt.height, opt.width, 3);
  const int half = opt.height / 2;
  for (int y = 0; y < opt.height; ++y) {
    for (int x = 0; x < opt.width; ++x) {
      const double grating = opt.grating_amplitude * std::sin(2.0 * std::numbers::pi * (fx * x + fy * y) + phase);
      for (int c = 0; c < 3; ++c) {
        double v = 0.5 + illum + grating * (1.0 + 0.25 * tint[std::size_t(c)]) + opt.pixel_noise * gauss(rng);
        const int a = c + (y < half ? 0 : 3);
        const double s = scores[std::size_t(a)].value_or(kNeutralScore);
        v += opt.score_gain * (s - kNeutralScore);
        img.at(y, x, c) = float(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

inline std::string image_id(std::size_t i, const std::string& prefix = "img") {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", i);
  return prefix + buf;
}

/// Metadata for image i: one of 56 synthetic cities with valid coordinates.
inline ImageRecord synthetic_record(std::size_t i, std::mt19937_64& rng, const std::string& prefix = "img") {
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  const std::size_t city = i % 56;
  ImageRecord r;
  r.id = image_id(i, prefix);
  r.city = "city" + std::to_string(city);
  r.country = "country" + std::to_string(city % 28);
  r.lat = -60.0 + 2.1 * double(city) + jitter(rng);
  r.lng = -170.0 + 6.0 * double(city) + jitter(rng);
  return r;
}

/// n images with planted scores drawn uniformly from [0,10] for one attribute.
inline std::vector<ImageRecord> generate_images(int n, std::uint64_t seed, int height = 64, int width = 64,
                                                Attribute attribute = Attribute::safe) {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "generate_images needs n >= 2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 10.0);
  RenderOptions opt;
  opt.height = height;
  opt.width = width;
  std::vector<ImageRecord> out;
  for (int i = 0; i < n; ++i) {
    ImageRecord r = synthetic_record(std::size_t(i), rng);
    const double s = unif(rng);
    std::array<std::optional<double>, 6> scores{};
    scores[std::size_t(index_of(attribute))] = s;
    r.pixels = render_image(scores, rng(), opt);
    r.planted_score = s;
    out.push_back(std::move(r));
  }
  return out;
}

/// Scores whose in-sample squared correlation with `base` equals `target_r2`
/// (positive correlation), rescaled to [0,10]. The Gaussian innovation is
/// residualized against `base` before mixing, so the target is hit exactly.
inline std::vector<double> correlated_attributes(const std::vector<double>& base, double target_r2,
                                                 std::uint64_t seed) {
  if (!(target_r2 >= 0.0 && target_r2 <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "target_r2 must lie in [0,1]");
  }
  const std::size_t n = base.size();
  if (n < 3) throw Error(ErrorKind::InvalidArgument, "need at least three base scores");

  auto standardize = [](std::vector<double>& v) {
    const double m = stats::mean(v);
    double ss = 0;
    for (double& x : v) {
      x -= m;
      ss += x * x;
    }
    const double sd = std::sqrt(ss / double(v.size()));
    if (sd > 0) {
      for (double& x : v) x /= sd;
    }
  };
  std::vector<double> z = base;
  standardize(z);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> e(n);
  for (double& x : e) x = gauss(rng);
  standardize(e);
  double proj = 0;
  for (std::size_t i = 0; i < n; ++i) proj += e[i] * z[i];
  proj /= double(n);
  for (std::size_t i = 0; i < n; ++i) e[i] -= proj * z[i];
  standardize(e);

  const double r = std::sqrt(target_r2);
  const double q = std::sqrt(std::max(0.0, 1.0 - target_r2));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = r * z[i] + q * e[i];

  const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
  const double a = *lo, b = *hi;
  for (double& x : out) x = b > a ? 10.0 * (x - a) / (b - a) : kNeutralScore;
  return out;
}

struct WorldConfig {
  int n_images = 500;
  std::uint64_t seed = 1;
  RenderOptions render;
  std::vector<Attribute> attributes = {Attribute::safe};  // first is the base attribute
  std::map<Attribute, double> r2_with_base;              // targets for the others
  NoiseModel noise;
  std::string id_prefix = "img";
};

struct PlantedWorld {
  std::vector<ImageRecord> images;
  std::map<Attribute, std::vector<double>> scores;  // aligned with `images`
  std::array<std::array<double, 6>, 6> attribute_correlation{};  // target R^2 matrix
  NoiseModel noise;

  double score(Attribute a, std::size_t i) const { return scores.at(a)[i]; }

  io::PlantedScores truth() const {
    io::PlantedScores t;
    for (const auto& [a, s] : scores) {
      for (std::size_t i = 0; i < images.size(); ++i) t[a][images[i].id] = s[i];
    }
    return t;
  }
};

inline PlantedWorld make_world(const WorldConfig& cfg) {
  if (cfg.n_images < 2) throw Error(ErrorKind::InvalidArgument, "world needs at least two images");
  if (cfg.attributes.empty()) throw Error(ErrorKind::InvalidArgument, "world needs an attribute");
  PlantedWorld w;
  w.noise = cfg.noise;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 10.0);

  const Attribute base = cfg.attributes.front();
  std::vector<double> base_scores(std::size_t(cfg.n_images));
  for (double& s : base_scores) s = unif(rng);
  w.scores[base] = base_scores;

  for (auto& row : w.attribute_correlation) row.fill(0.0);
  for (int a = 0; a < 6; ++a) w.attribute_correlation[std::size_t(a)][std::size_t(a)] = 1.0;
  std::map<Attribute, double> r2;
  for (std::size_t k = 1; k < cfg.attributes.size(); ++k) {
    const Attribute a = cfg.attributes[k];
    auto it = cfg.r2_with_base.find(a);
    const double target = it == cfg.r2_with_base.end() ? 0.0 : it->second;
    r2[a] = target;
    w.scores[a] = correlated_attributes(base_scores, target, rng());
    const auto bi = std::size_t(index_of(base)), ai = std::size_t(index_of(a));
    w.attribute_correlation[bi][ai] = w.attribute_correlation[ai][bi] = target;
  }
  // Correlations between two derived attributes follow through the base.
  for (const auto& [a, ra] : r2) {
    for (const auto& [b, rb] : r2) {
      if (a != b) w.attribute_correlation[std::size_t(index_of(a))][std::size_t(index_of(b))] = ra * rb;
    }
  }

  for (int i = 0; i < cfg.n_images; ++i) {
    ImageRecord r = synthetic_record(std::size_t(i), rng, cfg.id_prefix);
    std::array<std::optional<double>, 6> s{};
    for (const auto& [a, v] : w.scores) s[std::size_t(index_of(a))] = v[std::size_t(i)];
    r.pixels = render_image(s, rng(), cfg.render);
    r.planted_score = base_scores[std::size_t(i)];
    w.images.push_back(std::move(r));
  }
  return w;
}

struct SampleOptions {
  std::optional<double> equal_rate;  // e.g. kObservedEqualRate
  Source source = Source::synthetic;
};

/// Uniform random ordered pairs without self-pairs; outcomes follow the
/// world's noise model on the attribute's planted scores.
inline std::vector<ComparisonTriplet> sample_comparisons(const PlantedWorld& world, Attribute attribute,
                                                         std::size_t count, std::uint64_t seed,
                                                         const SampleOptions& opt = {}) {
  if (count < 1) throw Error(ErrorKind::InvalidArgument, "count must be at least 1");
  const auto& s = world.scores.at(attribute);
  const std::size_t n = world.images.size();
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "need at least two images");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<ComparisonTriplet> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = pick(rng);
    std::size_t j = pick(rng);
    while (j == i) j = pick(rng);
    Outcome o;
    const double u_equal = unif(rng), u_win = unif(rng);
    if (opt.equal_rate && u_equal < *opt.equal_rate) {
      o = Outcome::equal;
    } else if (world.noise.kind == NoiseKind::noiseless) {
      o = s[i] >= s[j] ? Outcome::left : Outcome::right;
    } else {
      const double p_left = 1.0 / (1.0 + std::exp(-(s[i] - s[j]) / world.noise.scale));
      o = u_win < p_left ? Outcome::left : Outcome::right;
    }
    ComparisonTriplet t = make_triplet(world.images[i].id, world.images[j].id, attribute, o, opt.source);
    t.timestamp = std::int64_t(k);
    out.push_back(std::move(t));
  }
  return out;
}

/// Writes images/*.png, manifest.csv, triplets.jsonl and planted.csv under `dir`.
inline void write_world(const std::filesystem::path& dir, const PlantedWorld& world,
                        const std::vector<ComparisonTriplet>& triplets) {
  std::filesystem::create_directories(dir / "images");
  std::vector<ImageRecord> records = world.images;
  for (auto& r : records) {
    r.path = "images/" + r.id + ".png";
    io::write_png(dir / r.path, *r.pixels);
  }
  io::write_manifest(dir / "manifest.csv", records);
  io::write_triplets(dir / "triplets.jsonl", triplets);
  io::write_planted(dir / "planted.csv", world.truth());
}

}  // namespace streetrank::synth
