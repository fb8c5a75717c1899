#pragma once

// SGD-with-momentum trainer for the Siamese network, validation-driven step
// decay, lambda grid search and checkpoints.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "streetrank/core.hpp"
#include "streetrank/net/siamese.hpp"

namespace streetrank::net {

/// Scalar type used by the training pipelines. Gradient checks use double.
using Real = float;
using Model = NetworkParams<Real>;

// ---------------------------------------------------------------------------
// Image lookup
// ---------------------------------------------------------------------------

/// Id -> pixel view over a manifest whose images are loaded.
class ImageBank {
 public:
  ImageBank() = default;
  explicit ImageBank(const Manifest& m) {
    for (const auto& r : m.records()) {
      if (!r.pixels) throw Error(ErrorKind::ShapeMismatch, "image '" + r.id + "' has no pixels loaded");
      index_.emplace(r.id, images_.size());
      ids_.push_back(r.id);
      images_.push_back(&*r.pixels);
    }
  }

  std::size_t size() const { return images_.size(); }
  std::size_t index(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error(ErrorKind::UnknownImageId, "unknown image '" + id + "'");
    return it->second;
  }
  const Image* get(std::size_t i) const { return images_[i]; }
  const Image* get(const std::string& id) const { return images_[index(id)]; }
  const std::vector<const Image*>& images() const { return images_; }
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<const Image*> images_;
  std::vector<std::string> ids_;
  std::map<std::string, std::size_t> index_;
};

struct IndexedPair {
  std::size_t left = 0;
  std::size_t right = 0;
  int y = 1;
};

/// Decisive triplets as bank indices with y = +1 for left wins.
inline std::vector<IndexedPair> index_pairs(const std::vector<ComparisonTriplet>& triplets, const ImageBank& bank) {
  std::vector<IndexedPair> out;
  out.reserve(triplets.size());
  for (const auto& t : triplets) {
    if (t.outcome == Outcome::equal) continue;
    out.push_back({bank.index(t.left_id), bank.index(t.right_id), t.label()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batched prediction
// ---------------------------------------------------------------------------

/// Embeds just the images the pairs touch.
template <typename S>
struct PairEmbedding {
  Embedding<S> embedding;
  std::vector<std::pair<std::size_t, std::size_t>> local;  // pair -> embedding rows
};

template <typename S>
PairEmbedding<S> embed_pairs(const NetworkParams<S>& p, const ImageBank& bank, const std::vector<IndexedPair>& pairs) {
  std::map<std::size_t, std::size_t> row;
  std::vector<const Image*> imgs;
  auto slot = [&](std::size_t bank_index) {
    auto [it, fresh] = row.emplace(bank_index, imgs.size());
    if (fresh) imgs.push_back(bank.get(bank_index));
    return it->second;
  };
  PairEmbedding<S> out;
  out.local.reserve(pairs.size());
  for (const auto& pr : pairs) {
    const std::size_t l = slot(pr.left);
    const std::size_t r = slot(pr.right);
    out.local.emplace_back(l, r);
  }
  out.embedding = embed(p, std::span<const Image* const>(imgs));
  return out;
}

/// +1 / -1 prediction per pair; ties go to the left image.
template <typename S>
std::vector<int> predict_pairs(const NetworkParams<S>& p, const ImageBank& bank,
                               const std::vector<IndexedPair>& pairs, PredictMethod method) {
  auto pe = embed_pairs(p, bank, pairs);
  std::vector<int> out(pairs.size());
  if (method == PredictMethod::ranking) {
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      out[k] = decide(pe.embedding.f[pe.local[k].first], pe.embedding.f[pe.local[k].second]);
    }
  } else {
    Mat<S> logits = pair_logits(p, pe.embedding, std::span<const std::pair<std::size_t, std::size_t>>(pe.local));
    for (std::size_t k = 0; k < pairs.size(); ++k) out[k] = decide(double(logits(Eigen::Index(k), 0)), double(logits(Eigen::Index(k), 1)));
  }
  return out;
}

template <typename S>
double pair_accuracy(const NetworkParams<S>& p, const ImageBank& bank, const std::vector<IndexedPair>& pairs,
                     PredictMethod method) {
  if (pairs.empty()) return 0.0;
  auto pred = predict_pairs(p, bank, pairs, method);
  std::size_t correct = 0;
  for (std::size_t k = 0; k < pairs.size(); ++k) correct += pred[k] == pairs[k].y ? 1 : 0;
  return double(correct) / double(pairs.size());
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  double lr0 = 0.001;
  double momentum = 0.9;
  double lr_drop_factor = 10.0;
  int max_lr_drops = 4;
  int batch_size = 32;
  double lambda = 0.0;     // 0 trains the classification-only network
  int max_iters = 2000;
  std::uint64_t seed = 1;
  int eval_every = 50;     // iterations between validation checks
  int patience = 5;        // checks without improvement before a drop
  double min_improvement = 0.001;
  PredictMethod val_method = PredictMethod::softmax;
  InitOptions init;

  void validate() const {
    if (!(lr0 > 0) || !(momentum >= 0 && momentum < 1) || !(lambda >= 0) || batch_size < 1 ||
        max_iters < 0 || eval_every < 1 || patience < 1 || !(lr_drop_factor > 1) || max_lr_drops < 0) {
      throw Error(ErrorKind::InvalidArgument, "invalid training configuration");
    }
  }
};

/// Learning rate after `drops` reductions.
inline double scheduled_lr(const TrainConfig& cfg, int drops) {
  return cfg.lr0 / std::pow(cfg.lr_drop_factor, drops);
}

struct TrainLogRow {
  int iteration = 0;
  double train_loss = 0.0;  // mean per-pair loss since the previous check
  double val_accuracy = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  Model params;             // parameters at the best validation check
  std::vector<TrainLogRow> log;
  int iterations = 0;
  int lr_drops = 0;
  double best_val_accuracy = 0.0;
  std::string stop_reason;
};

inline TrainResult train(const ImageBank& bank, const std::vector<IndexedPair>& train_pairs,
                         const std::vector<IndexedPair>& val_pairs, const ArchConfig& arch,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (train_pairs.empty()) throw Error(ErrorKind::InvalidArgument, "no training pairs");

  TrainResult res;
  Model params = init_params<Real>(arch, cfg.seed, cfg.init);
  std::vector<Real> velocity(params.size(), Real(0)), grad;
  std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 1);

  std::vector<std::size_t> order(train_pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  double lr = cfg.lr0;
  double loss_sum = 0.0;
  std::size_t loss_pairs = 0;
  double best = -1.0;
  int stale = 0;
  res.params = params;
  res.stop_reason = "max_iters";

  PairBatchPass<Real> scratch;
  std::vector<LabeledPair> batch;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    batch.clear();
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const auto& pr = train_pairs[order[cursor++]];
      batch.push_back({bank.get(pr.left), bank.get(pr.right), pr.y});
    }
    const LossParts loss = loss_and_gradient<Real>(params, batch, cfg.lambda, &grad, &scratch);
    if (!std::isfinite(loss.total)) {
      throw Error(ErrorKind::DivergedLoss, "training loss is not finite at iteration " + std::to_string(it));
    }
    loss_sum += loss.total;
    loss_pairs += batch.size();

    const Real m = Real(cfg.momentum), step = Real(lr);
    for (std::size_t i = 0; i < params.values.size(); ++i) {
      velocity[i] = m * velocity[i] + step * grad[i];
      params.values[i] -= velocity[i];
    }
    res.iterations = it;

    const bool check = it % cfg.eval_every == 0 || it == cfg.max_iters;
    if (!check) continue;
    const double val = val_pairs.empty() ? 0.0 : pair_accuracy(params, bank, val_pairs, cfg.val_method);
    res.log.push_back({it, loss_sum / double(std::max<std::size_t>(loss_pairs, 1)), val, lr});
    loss_sum = 0.0;
    loss_pairs = 0;
    if (val_pairs.empty()) {
      res.params = params;
      continue;
    }
    if (val >= best + cfg.min_improvement) {
      best = val;
      stale = 0;
      res.params = params;
      res.best_val_accuracy = val;
    } else if (++stale >= cfg.patience) {
      if (res.lr_drops >= cfg.max_lr_drops) {
        res.stop_reason = "plateau";
        break;
      }
      ++res.lr_drops;
      lr = scheduled_lr(cfg, res.lr_drops);
      stale = 0;
    }
  }
  if (!res.params.all_finite()) throw Error(ErrorKind::DivergedLoss, "parameters are not finite");
  return res;
}

struct LambdaTrial {
  double lambda = 0.0;
  double val_accuracy = 0.0;
  bool diverged = false;
};

struct TuneResult {
  double best_lambda = 0.0;
  std::vector<LambdaTrial> trials;
  TrainResult best;
};

inline const std::vector<double>& default_lambda_grid() {
  static const std::vector<double> grid{1.0, 2.0, 5.0, 10.0};
  return grid;
}

/// One model per candidate; the highest validation accuracy wins, ties go to
/// the smaller lambda. A candidate whose training diverges is recorded and
/// skipped; if every candidate diverges the last error is rethrown.
inline TuneResult tune_lambda(const std::vector<double>& candidates, const ImageBank& bank,
                              const std::vector<IndexedPair>& train_pairs,
                              const std::vector<IndexedPair>& val_pairs, const ArchConfig& arch,
                              TrainConfig cfg) {
  if (candidates.empty()) throw Error(ErrorKind::InvalidArgument, "lambda grid is empty");
  std::vector<double> sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  TuneResult out;
  double best_acc = -1.0;
  std::optional<Error> last_failure;
  for (double lambda : sorted) {
    cfg.lambda = lambda;
    TrainResult r;
    try {
      r = train(bank, train_pairs, val_pairs, arch, cfg);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DivergedLoss && e.kind() != ErrorKind::NonFiniteGradient) throw;
      out.trials.push_back({lambda, std::numeric_limits<double>::quiet_NaN(), true});
      last_failure = e;
      continue;
    }
    const double acc = val_pairs.empty() ? 0.0 : pair_accuracy(r.params, bank, val_pairs, cfg.val_method);
    out.trials.push_back({lambda, acc});
    if (acc > best_acc) {
      best_acc = acc;
      out.best_lambda = lambda;
      out.best = std::move(r);
    }
  }
  if (best_acc < 0.0) throw *last_failure;
  return out;
}

}  // namespace streetrank::net
