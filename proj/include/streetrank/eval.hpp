#pragma once

// Measurement protocols: pairwise accuracy through the softmax output, through
// TrueSkill over network-labelled comparisons, through a RankSVM on tower
// features, and through the ranking head; cross-attribute matrices, attribute
// correlations, learning curves and k-fold runs.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "streetrank/core.hpp"
#include "streetrank/io.hpp"
#include "streetrank/net/train.hpp"
#include "streetrank/ranksvm.hpp"
#include "streetrank/stats.hpp"
#include "streetrank/trueskill.hpp"

namespace streetrank::eval {

using nlohmann::json;

enum class Method { softmax, trueskill, ranksvm, rss_ranking };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::softmax: return "softmax";
    case Method::trueskill: return "trueskill";
    case Method::ranksvm: return "ranksvm";
    case Method::rss_ranking: return "rss_ranking";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "softmax") return Method::softmax;
  if (s == "trueskill") return Method::trueskill;
  if (s == "ranksvm") return Method::ranksvm;
  if (s == "rss" || s == "rss_ranking" || s == "ranking") return Method::rss_ranking;
  throw Error(ErrorKind::InvalidArgument, "unknown method '" + std::string(s) + "'");
}

struct EvalReport {
  Method method = Method::softmax;
  Attribute train_attr = Attribute::safe;
  Attribute test_attr = Attribute::safe;
  std::size_t correct = 0;
  std::size_t n_test = 0;
  double accuracy = 0.0;
  json config = json::object();
};

inline EvalReport make_report(Method method, Attribute train_attr, Attribute test_attr,
                              std::size_t correct, std::size_t n_test, json config = json::object()) {
  if (n_test == 0) throw Error(ErrorKind::EmptyTestSet, "no decisive test comparisons");
  return {method, train_attr, test_attr, correct, n_test, double(correct) / double(n_test), std::move(config)};
}

/// Decisive test pairs, all of one attribute.
inline std::vector<net::IndexedPair> test_pairs(const std::vector<ComparisonTriplet>& test, const net::ImageBank& bank,
                                                Attribute* attribute = nullptr) {
  auto pairs = net::index_pairs(test, bank);
  if (pairs.empty()) throw Error(ErrorKind::EmptyTestSet, "no decisive test comparisons");
  if (attribute) {
    for (const auto& t : test) {
      if (t.outcome != Outcome::equal) {
        *attribute = t.attribute;
        break;
      }
    }
  }
  return pairs;
}

inline std::size_t count_correct(const std::vector<int>& predicted, const std::vector<net::IndexedPair>& pairs) {
  std::size_t c = 0;
  for (std::size_t k = 0; k < pairs.size(); ++k) c += predicted[k] == pairs[k].y ? 1 : 0;
  return c;
}

// ---------------------------------------------------------------------------
// Direct network predictions
// ---------------------------------------------------------------------------

inline EvalReport accuracy_network(const net::Model& model, const net::ImageBank& bank,
                                   const std::vector<ComparisonTriplet>& test, net::PredictMethod how,
                                   std::optional<Attribute> train_attr = std::nullopt) {
  Attribute attr = Attribute::safe;
  const auto pairs = test_pairs(test, bank, &attr);
  const auto pred = net::predict_pairs(model, bank, pairs, how);
  const Method m = how == net::PredictMethod::softmax ? Method::softmax : Method::rss_ranking;
  return make_report(m, train_attr.value_or(attr), attr, count_correct(pred, pairs), pairs.size());
}

inline EvalReport accuracy_softmax(const net::Model& model, const net::ImageBank& bank,
                                   const std::vector<ComparisonTriplet>& test,
                                   std::optional<Attribute> train_attr = std::nullopt) {
  return accuracy_network(model, bank, test, net::PredictMethod::softmax, train_attr);
}

/// Compares ranking-head outputs of the two images.
inline EvalReport accuracy_rss(const net::Model& model, const net::ImageBank& bank,
                               const std::vector<ComparisonTriplet>& test,
                               std::optional<Attribute> train_attr = std::nullopt) {
  return accuracy_network(model, bank, test, net::PredictMethod::ranking, train_attr);
}

// ---------------------------------------------------------------------------
// TrueSkill over network-labelled comparisons
// ---------------------------------------------------------------------------

/// ceil(k*m/2) comparisons between uniformly drawn distinct images, labelled by
/// the softmax output.
inline std::vector<ComparisonTriplet> generate_predicted_comparisons(const net::Model& model,
                                                                     const net::ImageBank& bank, Attribute attribute,
                                                                     int k, std::uint64_t seed) {
  const std::size_t m = bank.size();
  if (m < 2) throw Error(ErrorKind::InvalidArgument, "need at least two images");
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be positive");
  const std::size_t count = (std::size_t(k) * m + 1) / 2;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, m - 1);
  std::vector<net::IndexedPair> pairs(count);
  for (auto& p : pairs) {
    p.left = pick(rng);
    do p.right = pick(rng);
    while (p.right == p.left);
  }
  const auto pred = net::predict_pairs(model, bank, pairs, net::PredictMethod::softmax);
  std::vector<ComparisonTriplet> out;
  out.reserve(count);
  for (std::size_t c = 0; c < count; ++c) {
    const auto& ids = bank.ids();
    out.push_back(make_triplet(ids[pairs[c].left], ids[pairs[c].right], attribute,
                               pred[c] > 0 ? Outcome::left : Outcome::right, Source::synthetic));
    out.back().timestamp = std::int64_t(c);
  }
  return out;
}

struct TrueSkillEval {
  EvalReport report;
  ScoreTable scores;
};

inline TrueSkillEval accuracy_trueskill_detailed(const net::Model& model, const net::ImageBank& bank,
                                                 const std::vector<ComparisonTriplet>& test, int k = 30,
                                                 std::uint64_t seed = 1,
                                                 const trueskill::TrueSkillConfig& cfg = trueskill::synthetic_config(),
                                                 std::optional<Attribute> train_attr = std::nullopt) {
  Attribute attr = Attribute::safe;
  const auto pairs = test_pairs(test, bank, &attr);
  const auto generated = generate_predicted_comparisons(model, bank, attr, k, seed);
  TrueSkillEval out;
  out.scores = trueskill::rate_all(generated, cfg, attr, bank.ids());
  std::vector<double> mu(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) mu[i] = out.scores.entries.at(bank.ids()[i]).mu;
  std::vector<int> pred(pairs.size());
  for (std::size_t c = 0; c < pairs.size(); ++c) pred[c] = net::decide(mu[pairs[c].left], mu[pairs[c].right]);
  out.report = make_report(Method::trueskill, train_attr.value_or(attr), attr, count_correct(pred, pairs),
                           pairs.size(),
                           {{"k", k}, {"seed", seed}, {"generated", generated.size()}, {"epsilon", cfg.epsilon}});
  return out;
}

inline EvalReport accuracy_trueskill(const net::Model& model, const net::ImageBank& bank,
                                     const std::vector<ComparisonTriplet>& test, int k = 30, std::uint64_t seed = 1) {
  return accuracy_trueskill_detailed(model, bank, test, k, seed).report;
}

// ---------------------------------------------------------------------------
// RankSVM on final-convolution features
// ---------------------------------------------------------------------------

struct RankSvmEvalOptions {
  std::vector<double> c_grid{0.01, 0.1, 1.0, 10.0, 100.0};
  ranksvm::SolverOptions solver{};
};

inline const std::vector<double>& default_c_grid() {
  static const std::vector<double> g{0.01, 0.1, 1.0, 10.0, 100.0};
  return g;
}

/// Image features as doubles, one row per bank image.
inline ranksvm::Matrix bank_features(const net::Model& model, const net::ImageBank& bank) {
  const auto e = net::embed(model, std::span<const Image* const>(bank.images()));
  return e.maps.cast<double>();
}

inline ranksvm::Matrix pair_differences(const ranksvm::Matrix& x, const std::vector<net::IndexedPair>& pairs) {
  ranksvm::Matrix d(Eigen::Index(pairs.size()), x.cols());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    d.row(Eigen::Index(k)) = double(pairs[k].y) * (x.row(Eigen::Index(pairs[k].left)) - x.row(Eigen::Index(pairs[k].right)));
  }
  if (!d.allFinite()) throw Error(ErrorKind::NonFiniteFeature, "features are not finite");
  return d;
}

inline std::vector<int> predict_scores(const Eigen::VectorXd& s, const std::vector<net::IndexedPair>& pairs) {
  std::vector<int> out(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) out[k] = net::decide(s(Eigen::Index(pairs[k].left)), s(Eigen::Index(pairs[k].right)));
  return out;
}

struct RankSvmEval {
  EvalReport report;
  ranksvm::RankSvmModel model;
  std::vector<std::pair<double, double>> c_trials;  // (c_reg, validation accuracy)
};

/// Trains on train-split difference vectors; c_reg is picked from the grid by
/// validation accuracy (ties to the smaller value). Without validation pairs
/// the first grid entry above or equal to 1 is used.
inline RankSvmEval accuracy_ranksvm_detailed(const ranksvm::Matrix& features, const net::ImageBank& bank,
                                             const std::vector<ComparisonTriplet>& train,
                                             const std::vector<ComparisonTriplet>& validation,
                                             const std::vector<ComparisonTriplet>& test,
                                             const RankSvmEvalOptions& opt = {},
                                             std::optional<Attribute> train_attr = std::nullopt) {
  Attribute attr = Attribute::safe;
  const auto te = test_pairs(test, bank, &attr);
  const auto tr = net::index_pairs(train, bank);
  if (tr.empty()) throw Error(ErrorKind::InvalidArgument, "RankSVM needs decisive training comparisons");
  const auto va = net::index_pairs(validation, bank);
  if (opt.c_grid.empty()) throw Error(ErrorKind::InvalidArgument, "c_reg grid is empty");

  const ranksvm::Matrix d = pair_differences(features, tr);
  std::vector<double> grid = opt.c_grid;
  std::sort(grid.begin(), grid.end());

  RankSvmEval out;
  double best_acc = -1.0;
  if (va.empty()) {
    auto it = std::find_if(grid.begin(), grid.end(), [](double c) { return c >= 1.0; });
    grid = {it == grid.end() ? grid.back() : *it};
  }
  for (double c : grid) {
    auto fit = ranksvm::train_differences(d, c, opt.solver);
    double acc = 0.0;
    if (!va.empty()) {
      const Eigen::VectorXd s = features * fit.model.w;
      acc = double(count_correct(predict_scores(s, va), va)) / double(va.size());
      out.c_trials.emplace_back(c, acc);
    }
    if (acc > best_acc) {
      best_acc = acc;
      out.model = std::move(fit.model);
    }
  }
  const Eigen::VectorXd s = features * out.model.w;
  out.report = make_report(Method::ranksvm, train_attr.value_or(attr), attr, count_correct(predict_scores(s, te), te),
                           te.size(), {{"c_reg", out.model.c_reg}, {"feature_dim", features.cols()}});
  return out;
}

inline EvalReport accuracy_ranksvm(const net::Model& model, const net::ImageBank& bank,
                                   const std::vector<ComparisonTriplet>& train,
                                   const std::vector<ComparisonTriplet>& validation,
                                   const std::vector<ComparisonTriplet>& test, const RankSvmEvalOptions& opt = {}) {
  return accuracy_ranksvm_detailed(bank_features(model, bank), bank, train, validation, test, opt).report;
}

// ---------------------------------------------------------------------------
// Attribute matrices
// ---------------------------------------------------------------------------

/// 6x6 matrix indexed by attribute; NaN marks pairs that were not measured.
struct AttributeMatrix {
  std::array<std::array<double, 6>, 6> v;

  AttributeMatrix() {
    for (auto& row : v) row.fill(std::numeric_limits<double>::quiet_NaN());
  }
  double& operator()(Attribute a, Attribute b) { return v[std::size_t(index_of(a))][std::size_t(index_of(b))]; }
  double operator()(Attribute a, Attribute b) const { return v[std::size_t(index_of(a))][std::size_t(index_of(b))]; }
  bool has(Attribute a, Attribute b) const { return !std::isnan((*this)(a, b)); }
};

/// Entry (a, b): ranking-head accuracy of the model trained on a, measured on
/// b's test comparisons. Every attribute with a test set needs a model.
inline AttributeMatrix cross_attribute_matrix(const std::map<Attribute, const net::Model*>& models,
                                              const net::ImageBank& bank,
                                              const std::map<Attribute, std::vector<ComparisonTriplet>>& tests) {
  for (const auto& [a, t] : tests) {
    auto it = models.find(a);
    if (it == models.end() || it->second == nullptr) {
      throw Error(ErrorKind::MissingAttributeModel, "no model for attribute '" + std::string(to_string(a)) + "'");
    }
  }
  AttributeMatrix m;
  for (const auto& [a, ta] : tests) {
    for (const auto& [b, tb] : tests) {
      m(a, b) = accuracy_rss(*models.at(a), bank, tb, a).accuracy;
    }
  }
  return m;
}

/// Signed squared Pearson correlation between mu vectors for each attribute pair.
inline AttributeMatrix attribute_r2(const std::map<Attribute, ScoreTable>& tables) {
  AttributeMatrix m;
  if (tables.empty()) return m;
  const auto& first = tables.begin()->second.entries;
  for (const auto& [a, t] : tables) {
    bool same = t.entries.size() == first.size();
    for (auto i = t.entries.begin(), j = first.begin(); same && i != t.entries.end(); ++i, ++j) same = i->first == j->first;
    if (!same) throw Error(ErrorKind::MismatchedImageSets, "score tables cover different images");
  }
  std::map<Attribute, std::vector<double>> mu;
  for (const auto& [a, t] : tables) {
    for (const auto& [id, e] : t.entries) mu[a].push_back(e.mu);
  }
  for (const auto& [a, x] : mu) {
    for (const auto& [b, y] : mu) m(a, b) = a == b ? 1.0 : stats::signed_r2(x, y);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Learning curves and k-fold runs
// ---------------------------------------------------------------------------

/// Nested subsets of `n` items: the subset for fraction f holds the first
/// ceil(f*n) items of one seeded permutation, returned in original order, so
/// fraction 1 reproduces the full set exactly.
inline std::vector<std::vector<std::size_t>> nested_subsets(std::size_t n, const std::vector<double>& fractions,
                                                            std::uint64_t seed) {
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] > 0.0 && fractions[i] <= 1.0)) throw Error(ErrorKind::InvalidArgument, "fractions must lie in (0,1]");
    if (i > 0 && !(fractions[i] > fractions[i - 1])) throw Error(ErrorKind::InvalidArgument, "fractions must ascend");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (double f : fractions) {
    const auto take = std::max<std::size_t>(1, std::min(n, std::size_t(std::ceil(f * double(n) - 1e-9))));
    std::vector<std::size_t> idx(perm.begin(), perm.begin() + std::ptrdiff_t(take));
    std::sort(idx.begin(), idx.end());
    out.push_back(std::move(idx));
  }
  return out;
}

struct CurvePoint {
  double fraction = 0.0;
  std::size_t n_train = 0;
  double accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct LearningCurveSetup {
  const net::ImageBank* bank = nullptr;
  std::vector<net::IndexedPair> train;
  std::vector<net::IndexedPair> validation;
  std::vector<net::IndexedPair> test;
  net::ArchConfig arch;
  net::TrainConfig train_cfg;
  net::PredictMethod method = net::PredictMethod::softmax;
  std::uint64_t subset_seed = 1;
};

inline std::vector<CurvePoint> learning_curve(const std::vector<double>& fractions, const LearningCurveSetup& s) {
  if (!s.bank) throw Error(ErrorKind::InvalidArgument, "learning curve needs images");
  if (s.test.empty()) throw Error(ErrorKind::EmptyTestSet, "no decisive test comparisons");
  std::vector<CurvePoint> out;
  const auto subsets = nested_subsets(s.train.size(), fractions, s.subset_seed);
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    std::vector<net::IndexedPair> sub;
    sub.reserve(subsets[i].size());
    for (std::size_t k : subsets[i]) sub.push_back(s.train[k]);
    const auto r = net::train(*s.bank, sub, s.validation, s.arch, s.train_cfg);
    out.push_back({fractions[i], sub.size(), net::pair_accuracy(r.params, *s.bank, s.test, s.method),
                   r.best_val_accuracy});
  }
  return out;
}

/// Index sets of k near-equal folds over a seeded permutation.
inline std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2 || std::size_t(k) > n) throw Error(ErrorKind::InvalidArgument, "need 2 <= k <= number of items");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) folds[i % std::size_t(k)].push_back(perm[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

/// Runs `evaluate(train, test, fold)` once per fold and returns its accuracies.
inline std::vector<double> kfold(
    const std::vector<ComparisonTriplet>& triplets, int k, std::uint64_t seed,
    const std::function<double(const std::vector<ComparisonTriplet>&, const std::vector<ComparisonTriplet>&, int)>&
        evaluate) {
  const auto folds = kfold_indices(triplets.size(), k, seed);
  std::vector<double> out;
  for (int f = 0; f < k; ++f) {
    std::vector<char> in_test(triplets.size(), 0);
    for (std::size_t i : folds[std::size_t(f)]) in_test[i] = 1;
    std::vector<ComparisonTriplet> train, test;
    for (std::size_t i = 0; i < triplets.size(); ++i) (in_test[i] ? test : train).push_back(triplets[i]);
    out.push_back(evaluate(train, test, f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline void write_reports(const std::filesystem::path& path, const std::vector<EvalReport>& reports) {
  std::ofstream out = io::open_out(path);
  out << "method,train_attr,test_attr,accuracy,correct,n_test\n";
  for (const auto& r : reports) {
    out << to_string(r.method) << ',' << to_string(r.train_attr) << ',' << to_string(r.test_attr) << ','
        << io::fixed6(r.accuracy) << ',' << r.correct << ',' << r.n_test << '\n';
  }
}

inline std::string summary(const EvalReport& r) {
  std::ostringstream s;
  s << to_string(r.method) << ' ' << to_string(r.train_attr) << "->" << to_string(r.test_attr) << " accuracy "
    << std::fixed << std::setprecision(4) << r.accuracy << " (" << r.correct << '/' << r.n_test << ')';
  return s.str();
}

/// Attribute-name header row and column; unmeasured cells are left empty.
inline void write_matrix(const std::filesystem::path& path, const AttributeMatrix& m) {
  std::ofstream out = io::open_out(path);
  out << "attribute";
  for (Attribute a : kAllAttributes) out << ',' << to_string(a);
  out << '\n';
  for (Attribute a : kAllAttributes) {
    out << to_string(a);
    for (Attribute b : kAllAttributes) {
      out << ',';
      if (m.has(a, b)) out << io::fixed6(m(a, b));
    }
    out << '\n';
  }
}

inline AttributeMatrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in = io::open_in(path);
  std::string line;
  std::getline(in, line);
  const auto header = io::split_csv_line(line);
  if (header.size() != 7) throw Error(ErrorKind::ParseError, "matrix header needs 7 columns");
  AttributeMatrix m;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = io::split_csv_line(line);
    if (cells.size() != 7) throw Error(ErrorKind::ParseError, "matrix row needs 7 columns");
    const Attribute a = parse_attribute(cells[0]);
    for (std::size_t c = 1; c < 7; ++c) {
      if (!cells[c].empty()) m(a, parse_attribute(header[c])) = io::parse_double(cells[c], "matrix cell");
    }
  }
  return m;
}

inline void write_curve(const std::filesystem::path& path, const std::vector<CurvePoint>& curve) {
  std::ofstream out = io::open_out(path);
  out << "fraction,n_train,accuracy,val_accuracy\n";
  for (const auto& p : curve) {
    out << io::fixed6(p.fraction) << ',' << p.n_train << ',' << io::fixed6(p.accuracy) << ','
        << io::fixed6(p.val_accuracy) << '\n';
  }
}

}  // namespace streetrank::eval
