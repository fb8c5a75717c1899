#pragma once

// Brute-force grid minimizer for small RankSVM problems (d <= 2). Each round
// scans a uniform grid over a box, then shrinks the box around the best point.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "streetrank/ranksvm.hpp"

namespace streetrank::oracle {

using streetrank::ranksvm::Matrix;
using streetrank::ranksvm::PairSample;
using streetrank::ranksvm::Vector;

struct Instance {
  std::vector<PairSample> pairs;
  double c_reg = 1.0;
};

inline Instance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dims(1, 2), count(1, 6);
  std::uniform_real_distribution<double> coord(-2.0, 2.0), logc(-1.0, 1.0);
  Instance out;
  const int d = dims(rng), n = count(rng);
  for (int k = 0; k < n; ++k) {
    PairSample p;
    for (int c = 0; c < d; ++c) {
      p.left.push_back(coord(rng));
      p.right.push_back(coord(rng));
    }
    p.y = coord(rng) > 0 ? 1 : -1;
    out.pairs.push_back(std::move(p));
  }
  out.c_reg = std::pow(10.0, logc(rng));
  return out;
}

struct GridResult {
  double value = 0;
  double argmin = 0;  // first coordinate
};

/// Minimum over a box of half-width sqrt(2 c n), which contains every
/// minimizer since 0.5 |w|^2 <= objective(0) = c n.
inline double grid_minimum(const Matrix& D, double c_reg, int points = 81, int rounds = 14) {
  const auto d = D.cols();
  Vector center = Vector::Zero(d);
  double half = std::sqrt(2.0 * c_reg * double(D.rows())) + 1e-9;
  double best = streetrank::ranksvm::objective(D, center, c_reg);
  for (int r = 0; r < rounds; ++r) {
    const double step = 2.0 * half / (points - 1);
    Vector best_w = center, w(d);
    const int ny = d > 1 ? points : 1;
    for (int i = 0; i < points; ++i) {
      for (int j = 0; j < ny; ++j) {
        w[0] = center[0] - half + i * step;
        if (d > 1) w[1] = center[1] - half + j * step;
        const double v = streetrank::ranksvm::objective(D, w, c_reg);
        if (v < best) {
          best = v;
          best_w = w;
        }
      }
    }
    center = best_w;
    half = std::max(4.0 * step, 1e-12);
  }
  return best;
}

/// Plain 1-D scan with a fixed step.
inline GridResult grid_minimum_1d(const Matrix& D, double c_reg, double lo, double hi, double step) {
  GridResult out{INFINITY, lo};
  Vector w(1);
  for (double x = lo; x <= hi; x += step) {
    w[0] = x;
    const double v = streetrank::ranksvm::objective(D, w, c_reg);
    if (v < out.value) out = {v, x};
  }
  return out;
}

}  // namespace streetrank::oracle
