#pragma once

// Central finite-difference oracle for the Siamese network gradient.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "streetrank/net/siamese.hpp"

namespace streetrank::oracle {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kink = 0;
};

inline net::ArchConfig tiny_arch(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 1);
  net::ArchConfig a;
  a.tower.height = 8;
  a.tower.width = 8;
  a.tower.channels = 2;
  a.tower.conv = {{3, 3, 2}};
  if (pick(rng)) a.tower.conv.push_back({3, 3, 1});
  a.tower.fc = {pick(rng) ? 5 : 4};
  a.fusion.conv = {{2, 3, 2}};
  a.rank.fc = {3, 1};
  return a;
}

inline Image random_image(int h, int w, int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.f, 1.f);
  Image img(h, w, c);
  for (float& v : img.data) v = u(rng);
  return img;
}

/// Compares the analytic gradient of w_c L_c + w_r L_r against central
/// differences with step h. Coordinates whose pair sits within `kink` of the
/// squared-hinge kink are skipped; the relative error uses a floor of
/// `abs_floor` in the denominator so that exact zeros compare cleanly.
inline GradCheckResult check_gradient(const net::NetworkParams<double>& p,
                                      const std::vector<net::LabeledPair>& batch, double w_c,
                                      double w_r, double h = 1e-4, double kink = 1e-6, double abs_floor = 1e-6) {
  GradCheckResult res;
  std::vector<double> analytic;
  net::weighted_loss_and_gradient<double>(p, batch, w_c, w_r, &analytic);
  auto loss = [&](const net::NetworkParams<double>& q) {
    return net::weighted_loss_and_gradient<double>(q, batch, w_c, w_r, nullptr).total;
  };

  bool near_kink = false;
  for (const auto& lp : batch) {
    auto out = net::forward_pair(p, *lp.left, *lp.right);
    if (std::abs(lp.y * (out.f_j - out.f_i)) < kink) near_kink = true;
  }

  auto q = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = q.values[i];
    q.values[i] = orig + h;
    const double up = loss(q);
    q.values[i] = orig - h;
    const double down = loss(q);
    q.values[i] = orig;
    if (near_kink && w_r > 0) {
      ++res.skipped_kink;
      continue;
    }
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), abs_floor});
    res.max_rel_error = std::max(res.max_rel_error, std::abs(numeric - analytic[i]) / denom);
    ++res.checked;
  }
  return res;
}

}  // namespace streetrank::oracle
