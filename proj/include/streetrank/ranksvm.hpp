#pragma once

// Linear RankSVM with squared hinge loss, solved in the primal:
//
//   minimize  0.5 |w|^2 + C * sum_k max(0, 1 - w . d_k)^2,   d_k = y_k (x_i - x_j)
//
// by full-batch gradient descent with an Armijo backtracking line search.

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "streetrank/error.hpp"

namespace streetrank::ranksvm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class LossKind { squared_hinge };

struct RankSvmModel {
  Vector w;
  double c_reg = 1.0;
  LossKind loss_kind = LossKind::squared_hinge;

  Eigen::Index dimension() const { return w.size(); }
};

struct PairSample {
  std::vector<double> left;
  std::vector<double> right;
  int y = 1;  // +1: left ranks above right
};

struct SolverOptions {
  double tol = 1e-6;
  int max_iter = 1000;
  double armijo = 1e-4;   // sufficient-decrease constant
  double shrink = 0.5;    // backtracking factor
};

struct TrainResult {
  RankSvmModel model;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  std::vector<double> objective_history;  // objective before the first step, then after each step
};

/// Stacks y * (x_i - x_j) into rows; validates shapes and finiteness.
inline Matrix difference_matrix(std::span<const PairSample> pairs) {
  if (pairs.empty()) throw Error(ErrorKind::InvalidArgument, "ranksvm needs at least one pair");
  const std::size_t d = pairs.front().left.size();
  Matrix D(Eigen::Index(pairs.size()), Eigen::Index(d));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& p = pairs[k];
    if (p.left.size() != d || p.right.size() != d) {
      throw Error(ErrorKind::DimensionMismatch, "pair " + std::to_string(k) + " has the wrong dimension");
    }
    if (p.y != 1 && p.y != -1) throw Error(ErrorKind::InvalidArgument, "labels must be +1 or -1");
    for (std::size_t c = 0; c < d; ++c) {
      if (!std::isfinite(p.left[c]) || !std::isfinite(p.right[c])) {
        throw Error(ErrorKind::NonFiniteFeature, "pair " + std::to_string(k) + " has a non-finite feature");
      }
      D(Eigen::Index(k), Eigen::Index(c)) = double(p.y) * (p.left[c] - p.right[c]);
    }
  }
  return D;
}

inline double objective(const Matrix& D, const Vector& w, double c_reg) {
  const Vector margin = (Vector::Ones(D.rows()) - D * w).cwiseMax(0.0);
  return 0.5 * w.squaredNorm() + c_reg * margin.squaredNorm();
}

inline Vector gradient(const Matrix& D, const Vector& w, double c_reg) {
  const Vector margin = (Vector::Ones(D.rows()) - D * w).cwiseMax(0.0);
  return w - 2.0 * c_reg * (D.transpose() * margin);
}

/// Solves on a prebuilt difference matrix. The trial step of each iteration is
/// the Barzilai-Borwein estimate; backtracking enforces sufficient decrease, so
/// the objective never increases.
inline TrainResult train_differences(const Matrix& D, double c_reg, const SolverOptions& opt = {}) {
  if (!(c_reg > 0)) throw Error(ErrorKind::InvalidArgument, "c_reg must be positive");
  if (D.rows() == 0) throw Error(ErrorKind::InvalidArgument, "ranksvm needs at least one pair");
  if (!D.allFinite()) throw Error(ErrorKind::NonFiniteFeature, "difference matrix has non-finite entries");

  TrainResult res;
  Vector w = Vector::Zero(D.cols());
  double obj = objective(D, w, c_reg);
  Vector grad = gradient(D, w, c_reg);
  res.objective_history.push_back(obj);

  // Lipschitz bound of the gradient gives a safe first trial step.
  const double lip = 1.0 + 2.0 * c_reg * D.squaredNorm();
  double step = 1.0 / lip;

  Vector w_prev, g_prev;
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    const double gnorm = grad.norm();
    if (gnorm <= opt.tol) break;
    if (it > 0) {
      const Vector s = w - w_prev, yv = grad - g_prev;
      const double sy = s.dot(yv);
      step = sy > 0 ? s.squaredNorm() / sy : 1.0 / lip;
    }
    double trial = step;
    Vector cand;
    double cand_obj;
    for (;;) {
      cand = w - trial * grad;
      cand_obj = objective(D, cand, c_reg);
      if (cand_obj <= obj - opt.armijo * trial * gnorm * gnorm) break;
      trial *= opt.shrink;
      if (trial < 1e-20) break;
    }
    if (!(cand_obj <= obj)) break;  // no representable descent left
    w_prev = w;
    g_prev = grad;
    w = cand;
    obj = cand_obj;
    grad = gradient(D, w, c_reg);
    res.objective_history.push_back(obj);
  }
  res.iterations = it;
  res.gradient_norm = grad.norm();
  res.converged = res.gradient_norm <= opt.tol;
  res.model.w = std::move(w);
  res.model.c_reg = c_reg;
  return res;
}

inline TrainResult train(std::span<const PairSample> pairs, double c_reg, double tol, int max_iter) {
  SolverOptions opt;
  opt.tol = tol;
  opt.max_iter = max_iter;
  return train_differences(difference_matrix(pairs), c_reg, opt);
}

inline double score(const RankSvmModel& model, std::span<const double> x) {
  if (Eigen::Index(x.size()) != model.w.size()) {
    throw Error(ErrorKind::DimensionMismatch, "feature dimension does not match model");
  }
  return model.w.dot(Eigen::Map<const Vector>(x.data(), Eigen::Index(x.size())));
}

// Model file: "d c_reg" then the d coefficients, 12 significant digits.

inline void save(const std::filesystem::path& path, const RankSvmModel& model) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::StorageFailure, "cannot write '" + path.string() + "'");
  out << std::setprecision(17) << model.w.size() << ' ' << model.c_reg << '\n';
  for (Eigen::Index i = 0; i < model.w.size(); ++i) out << (i ? " " : "") << model.w[i];
  out << '\n';
}

inline RankSvmModel load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open '" + path.string() + "'");
  long d = -1;
  RankSvmModel m;
  if (!(in >> d >> m.c_reg) || d < 0) throw Error(ErrorKind::ParseError, "bad ranksvm header");
  m.w.resize(d);
  for (long i = 0; i < d; ++i) {
    if (!(in >> m.w[i])) throw Error(ErrorKind::ParseError, "short ranksvm coefficient list");
  }
  return m;
}

}  // namespace streetrank::ranksvm
