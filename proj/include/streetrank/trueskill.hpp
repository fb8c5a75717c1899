#pragma once

// Two-player Gaussian skill rating. Each image carries a belief N(mu, sigma^2)
// that is updated in closed form after every decisive comparison.

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "streetrank/core.hpp"

namespace streetrank::trueskill {

struct SkillRating {
  double mu = 25.0;
  double sigma2 = (25.0 / 3.0) * (25.0 / 3.0);

  double sigma() const { return std::sqrt(sigma2); }
  bool operator==(const SkillRating&) const = default;
};

/// How the draw margin enters the truncation functions.
///   standard:     f(t, e) = N(t - e) / Phi(t - e)
///   paper_literal: the margin is ignored, f(t) = N(t) / Phi(t)
enum class EpsilonMode { standard, paper_literal };

/// Prefactor of g in the variance update.
///   standard:        sigma2 *= 1 - (sigma2 / c^2) g
///   paper_displayed: sigma2 *= 1 - (sigma2 / c) g   (not dimensionless; can go negative)
enum class VarianceForm { standard, paper_displayed };

struct TrueSkillConfig {
  double mu0 = 25.0;
  double sigma0 = 25.0 / 3.0;
  double beta = 25.0 / 3.0;
  double epsilon = 0.1333;
  EpsilonMode epsilon_mode = EpsilonMode::standard;
  VarianceForm variance_form = VarianceForm::standard;

  SkillRating prior() const { return {mu0, sigma0 * sigma0}; }

  void validate() const {
    if (!(sigma0 > 0) || !(beta > 0) || !(epsilon >= 0)) {
      throw Error(ErrorKind::InvalidArgument, "trueskill needs sigma0 > 0, beta > 0, epsilon >= 0");
    }
  }
};

/// Config used when scoring model-generated comparisons, which contain no ties.
inline TrueSkillConfig synthetic_config() {
  TrueSkillConfig cfg;
  cfg.epsilon = 0.0;
  return cfg;
}

struct VW {
  double f;
  double g;
};

inline double normal_pdf(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }

/// f = N(t)/Phi(t) and g = f (f + t) evaluated at t = theta - eps_over_c
/// (or t = theta in paper_literal mode). Below t = -30 the ratio switches to
/// its asymptotic series, since both numerator and denominator underflow.
inline VW v_w_functions(double theta, double eps_over_c, EpsilonMode mode) {
  const double t = mode == EpsilonMode::standard ? theta - eps_over_c : theta;
  double f;
  if (t < -30.0) {
    const double u = 1.0 / (t * t);
    // Phi(t) ~ N(t)/(-t) * (1 - u + 3u^2 - 15u^3 + 105u^4)
    const double series = 1.0 - u + 3.0 * u * u - 15.0 * u * u * u + 105.0 * u * u * u * u;
    f = -t / series;
  } else {
    f = normal_pdf(t) / normal_cdf(t);
  }
  return {f, f * (f + t)};
}

/// Winner x beats loser y. Returns the updated (winner, loser).
inline std::pair<SkillRating, SkillRating> update_pair(const SkillRating& winner,
                                                       const SkillRating& loser,
                                                       const TrueSkillConfig& cfg) {
  const double c2 = 2.0 * cfg.beta * cfg.beta + winner.sigma2 + loser.sigma2;
  const double c = std::sqrt(c2);
  const auto [f, g] = v_w_functions((winner.mu - loser.mu) / c, cfg.epsilon / c, cfg.epsilon_mode);

  const double var_scale = cfg.variance_form == VarianceForm::standard ? c2 : c;
  SkillRating w{winner.mu + winner.sigma2 / c * f,
                winner.sigma2 * (1.0 - winner.sigma2 / var_scale * g)};
  SkillRating l{loser.mu - loser.sigma2 / c * f,
                loser.sigma2 * (1.0 - loser.sigma2 / var_scale * g)};

  const bool ok = std::isfinite(w.mu) && std::isfinite(l.mu) && std::isfinite(w.sigma2) &&
                  std::isfinite(l.sigma2) && w.sigma2 > 0 && l.sigma2 > 0;
  if (!ok) throw Error(ErrorKind::NonFiniteUpdate, "rating update produced an invalid belief");
  return {w, l};
}

/// Per-image beliefs for one attribute. Updates must be applied in vote order
/// by a single writer.
class RatingState {
 public:
  RatingState(Attribute attribute, const std::vector<std::string>& ids, TrueSkillConfig cfg)
      : attribute_(attribute), cfg_(cfg) {
    cfg_.validate();
    for (const auto& id : ids) ratings_.emplace(id, cfg_.prior());
  }

  Attribute attribute() const { return attribute_; }
  const TrueSkillConfig& config() const { return cfg_; }
  const std::map<std::string, SkillRating>& ratings() const { return ratings_; }

  /// Applies a decisive comparison; equal outcomes are ignored.
  void apply(const ComparisonTriplet& t) {
    if (t.outcome == Outcome::equal) return;
    auto w = ratings_.find(t.winner());
    auto l = ratings_.find(t.loser());
    if (w == ratings_.end() || l == ratings_.end()) {
      throw Error(ErrorKind::UnknownImageId,
                  "comparison references unknown image '" +
                      (w == ratings_.end() ? t.winner() : t.loser()) + "'");
    }
    auto [nw, nl] = update_pair(w->second, l->second, cfg_);
    w->second = nw;
    l->second = nl;
  }

  void set(const std::string& id, const SkillRating& r) { ratings_[id] = r; }

  ScoreTable table() const {
    ScoreTable out;
    out.attribute = attribute_;
    for (const auto& [id, r] : ratings_) out.entries[id] = ScoreEntry{r.mu, r.sigma(), std::nullopt};
    out.rescale();
    return out;
  }

 private:
  Attribute attribute_;
  TrueSkillConfig cfg_;
  std::map<std::string, SkillRating> ratings_;
};

/// Folds update_pair over `triplets` in order. Triplets of other attributes
/// and equal outcomes are skipped.
inline ScoreTable rate_all(const std::vector<ComparisonTriplet>& triplets, const TrueSkillConfig& cfg,
                           Attribute attribute, const std::vector<std::string>& ids) {
  RatingState state(attribute, ids, cfg);
  for (const auto& t : triplets) {
    if (t.attribute != attribute) continue;
    state.apply(t);
  }
  return state.table();
}

/// Returns true when the first image is preferred over the second.
using PairPredictor = std::function<bool(const std::string&, const std::string&)>;

struct AnchoredResult {
  ScoreTable scores;                           // new images only
  std::vector<ComparisonTriplet> comparisons;  // in the order they were rated
};

/// Scores images from an unseen set against an already rated reference set.
/// Each new image initiates `comparisons_per_image` comparisons: half against a
/// uniformly drawn reference image (reference on the left) and half against
/// another uniformly drawn new image. With a single new image the internal half
/// has no partner and is skipped.
inline AnchoredResult anchored_rate(const std::vector<std::string>& new_ids,
                                    const ScoreTable& reference, const PairPredictor& predictor,
                                    int comparisons_per_image, std::uint64_t seed,
                                    TrueSkillConfig cfg = synthetic_config()) {
  if (comparisons_per_image < 0 || comparisons_per_image % 2 != 0) {
    throw Error(ErrorKind::InvalidArgument, "comparisons_per_image must be even and non-negative");
  }
  AnchoredResult out;
  out.scores.attribute = reference.attribute;
  if (new_ids.empty()) return out;
  if (reference.entries.empty()) {
    throw Error(ErrorKind::EmptyReferenceSet, "anchored rating needs reference scores");
  }

  std::vector<std::string> ref_ids;
  for (const auto& [id, e] : reference.entries) ref_ids.push_back(id);

  RatingState state(reference.attribute, new_ids, cfg);
  for (const auto& [id, e] : reference.entries) {
    if (state.ratings().count(id)) {
      throw Error(ErrorKind::DuplicateId, "image '" + id + "' is both new and reference");
    }
    state.set(id, SkillRating{e.mu, e.sigma * e.sigma});
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_ref(0, ref_ids.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_new(0, new_ids.size() - 1);
  const int half = comparisons_per_image / 2;

  auto decide = [&](const std::string& a, const std::string& b) {
    ComparisonTriplet t = make_triplet(a, b, reference.attribute,
                                       predictor(a, b) ? Outcome::left : Outcome::right,
                                       Source::synthetic);
    state.apply(t);
    out.comparisons.push_back(std::move(t));
  };

  for (std::size_t i = 0; i < new_ids.size(); ++i) {
    for (int k = 0; k < half; ++k) {
      decide(ref_ids[pick_ref(rng)], new_ids[i]);
      if (new_ids.size() > 1) {
        std::size_t j = pick_new(rng);
        while (j == i) j = pick_new(rng);
        decide(new_ids[i], new_ids[j]);
      }
    }
  }

  for (const auto& id : new_ids) {
    const auto& r = state.ratings().at(id);
    out.scores.entries[id] = ScoreEntry{r.mu, r.sigma(), std::nullopt};
  }
  out.scores.rescale();
  return out;
}

}  // namespace streetrank::trueskill
