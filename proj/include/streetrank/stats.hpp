#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "streetrank/error.hpp"

namespace streetrank::stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorKind::DimensionMismatch, "pearson needs two equal-length samples");
  }
  const double mx = mean(x), my = mean(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

/// Squared correlation carrying the sign of the correlation.
inline double signed_r2(std::span<const double> x, std::span<const double> y) {
  const double r = pearson(x, y);
  return r < 0 ? -r * r : r * r;
}

/// Average ranks (1-based), ties share the mean of their positions.
inline std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  auto rx = ranks(x), ry = ranks(y);
  return pearson(rx, ry);
}

/// Kendall tau-b, O(n^2).
inline double kendall_tau(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorKind::DimensionMismatch, "kendall needs two equal-length samples");
  }
  double concordant = 0, discordant = 0, tie_x = 0, tie_y = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0 && dy == 0) continue;
      if (dx == 0) { tie_x += 1; continue; }
      if (dy == 0) { tie_y += 1; continue; }
      if ((dx > 0) == (dy > 0)) concordant += 1;
      else discordant += 1;
    }
  }
  const double denom = std::sqrt((concordant + discordant + tie_x) * (concordant + discordant + tie_y));
  return denom == 0 ? 0.0 : (concordant - discordant) / denom;
}

/// Ordinary least squares R^2 of y on x (single regressor plus intercept).
inline double regression_r2(std::span<const double> x, std::span<const double> y) {
  const double r = pearson(x, y);
  return r * r;
}

}  // namespace streetrank::stats
