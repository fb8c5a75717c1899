// streetrank command-line entry point.
//
// Every subcommand takes --seed, echoes its resolved configuration as one JSON
// line to stderr (and to --run-log when given), and reports failures as one
// line: `error category=<c> kind=<k> message=<json string>`.
// Exit codes: 0 success, 2 configuration, 3 data or storage, 4 numeric.

#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "streetrank/core.hpp"
#include "streetrank/eval.hpp"
#include "streetrank/io.hpp"
#include "streetrank/net/checkpoint.hpp"
#include "streetrank/net/train.hpp"
#include "streetrank/service.hpp"
#include "streetrank/synth.hpp"
#include "streetrank/trueskill.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace streetrank;
using trueskill::EpsilonMode;
using trueskill::TrueSkillConfig;
using trueskill::VarianceForm;

namespace {

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::numeric: return 4;
    default: return 3;
  }
}

void report_error(std::string_view category, std::string_view kind, const std::string& message) {
  std::cerr << "error category=" << category << " kind=" << kind << " message=" << json(message).dump() << std::endl;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(io::parse_double(item, what));
  if (out.empty()) throw Error(ErrorKind::InvalidArgument, what + " is empty");
  return out;
}

/// "attr=path" pairs.
std::map<Attribute, fs::path> parse_assignments(const std::vector<std::string>& items, const std::string& what) {
  std::map<Attribute, fs::path> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::InvalidArgument, what + " expects attribute=path, got '" + item + "'");
    out[parse_attribute(item.substr(0, eq))] = item.substr(eq + 1);
  }
  return out;
}

/// "65,5,30" (percent) or "0.65,0.05,0.3" (fractions).
SplitRatios parse_ratios(const std::string& text) {
  const auto v = parse_doubles(text, "ratios");
  if (v.size() != 3) throw Error(ErrorKind::BadRatios, "ratios need three values");
  const double total = v[0] + v[1] + v[2];
  const double scale = std::abs(total - 100.0) < 1e-6 ? 100.0 : 1.0;
  return {v[0] / scale, v[1] / scale, v[2] / scale};
}

struct Common {
  std::uint64_t seed = 1;
  std::string run_log;
};

void echo_config(const Common& common, const std::string& command, json cfg) {
  cfg["command"] = command;
  cfg["seed"] = common.seed;
  const std::string line = json{{"config", cfg}}.dump();
  std::cerr << line << std::endl;
  if (!common.run_log.empty()) {
    std::ofstream out(common.run_log, std::ios::app);
    if (!out) throw Error(ErrorKind::StorageFailure, "cannot append to run log '" + common.run_log + "'");
    out << line << '\n';
  }
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "random seed")->capture_default_str();
  cmd->add_option("--run-log", c.run_log, "append the resolved config to this file");
}

/// Attribute of the first decisive triplet unless one is given.
Attribute resolve_attribute(const std::string& given, const std::vector<ComparisonTriplet>& triplets) {
  if (!given.empty()) return parse_attribute(given);
  for (const auto& t : triplets) return t.attribute;
  throw Error(ErrorKind::InvalidArgument, "cannot infer attribute from an empty triplet file");
}

std::vector<ComparisonTriplet> only(const std::vector<ComparisonTriplet>& ts, Attribute a) {
  std::vector<ComparisonTriplet> out;
  for (const auto& t : ts) {
    if (t.attribute == a) out.push_back(t);
  }
  return out;
}

net::ArchConfig arch_for(const Manifest& m) {
  net::ArchConfig arch;
  const Image& first = *m.records().front().pixels;
  arch.tower.height = first.height;
  arch.tower.width = first.width;
  arch.tower.channels = first.channels;
  return arch;
}

// ---------------------------------------------------------------------------
// Training options shared by train, tune-lambda and learning-curve
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string manifest, train, val, attribute, val_method = "softmax";
  net::TrainConfig cfg;

  void add(CLI::App* cmd, bool with_lambda) {
    cmd->add_option("--manifest", manifest, "image manifest CSV")->required();
    cmd->add_option("--train", train, "training triplets (JSON lines)")->required();
    cmd->add_option("--val", val, "validation triplets (JSON lines)")->required();
    cmd->add_option("--attribute", attribute, "attribute to train on (default: from triplets)");
    if (with_lambda) cmd->add_option("--lambda", cfg.lambda, "ranking-loss weight; 0 trains SS-CNN")->capture_default_str();
    cmd->add_option("--lr", cfg.lr0, "initial learning rate")->capture_default_str();
    cmd->add_option("--momentum", cfg.momentum)->capture_default_str();
    cmd->add_option("--batch", cfg.batch_size)->capture_default_str();
    cmd->add_option("--max-iters", cfg.max_iters)->capture_default_str();
    cmd->add_option("--eval-every", cfg.eval_every, "iterations between validation checks")->capture_default_str();
    cmd->add_option("--patience", cfg.patience, "checks without improvement before a drop")->capture_default_str();
    cmd->add_option("--max-drops", cfg.max_lr_drops)->capture_default_str();
    cmd->add_option("--val-method", val_method, "softmax or ranking")->capture_default_str();
  }

  void resolve(std::uint64_t seed) {
    cfg.seed = seed;
    if (val_method == "softmax") {
      cfg.val_method = net::PredictMethod::softmax;
    } else if (val_method == "ranking") {
      cfg.val_method = net::PredictMethod::ranking;
    } else {
      throw Error(ErrorKind::InvalidArgument, "--val-method must be softmax or ranking");
    }
    cfg.validate();
  }

  json echo() const {
    json j = net::to_json(cfg);
    j["manifest"] = manifest;
    j["train"] = train;
    j["val"] = val;
    j["attribute"] = attribute;
    return j;
  }
};

struct Loaded {
  Manifest manifest;
  net::ImageBank bank;
  Attribute attribute = Attribute::safe;
  std::vector<ComparisonTriplet> train, val;
};

std::unique_ptr<Loaded> load_training(const TrainArgs& a) {
  auto out = std::make_unique<Loaded>();
  out->manifest = io::read_manifest(a.manifest);
  out->bank = net::ImageBank(out->manifest);
  const auto train = io::read_triplets(a.train);
  out->attribute = resolve_attribute(a.attribute, train);
  out->train = only(train, out->attribute);
  out->val = only(io::read_triplets(a.val), out->attribute);
  return out;
}

void write_trials(const fs::path& path, const net::TuneResult& r) {
  std::ofstream out = io::open_out(path);
  out << "lambda,val_accuracy,selected\n";
  for (const auto& t : r.trials) {
    out << io::fixed6(t.lambda) << ',' << (t.diverged ? std::string("diverged") : io::fixed6(t.val_accuracy)) << ','
        << (t.lambda == r.best_lambda ? 1 : 0) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out, attributes = "safe", noise = "none", id_prefix = "img";
  int images = 500, size = 64, per_image = 36;
  double r2 = 0.8, bt_scale = 1.0, equal_rate = 0.0;
  bool quantize = true;
};

void run_synth(const Common& c, const SynthArgs& a) {
  synth::WorldConfig wc;
  wc.n_images = a.images;
  wc.seed = c.seed;
  wc.render.height = wc.render.width = a.size;
  wc.id_prefix = a.id_prefix;
  wc.attributes.clear();
  for (const auto& name : split_list(a.attributes)) wc.attributes.push_back(parse_attribute(name));
  for (std::size_t k = 1; k < wc.attributes.size(); ++k) wc.r2_with_base[wc.attributes[k]] = a.r2;
  if (a.noise == "bt") {
    wc.noise = {synth::NoiseKind::bradley_terry, a.bt_scale};
  } else if (a.noise != "none") {
    throw Error(ErrorKind::InvalidArgument, "--noise must be none or bt");
  }
  if (a.per_image < 1) throw Error(ErrorKind::InvalidArgument, "--per-image must be positive");
  echo_config(c, "synth",
              {{"out", a.out}, {"images", a.images}, {"size", a.size}, {"attributes", a.attributes},
               {"r2", a.r2}, {"noise", a.noise}, {"bt_scale", a.bt_scale}, {"per_image", a.per_image},
               {"equal_rate", a.equal_rate}, {"quantize", a.quantize}, {"id_prefix", a.id_prefix}});

  auto world = synth::make_world(wc);
  if (a.quantize) {
    for (auto& r : world.images) r.pixels = io::quantize8(*r.pixels);
  }
  synth::SampleOptions so;
  if (a.equal_rate > 0) so.equal_rate = a.equal_rate;
  std::vector<ComparisonTriplet> all;
  const std::size_t count = (std::size_t(a.per_image) * std::size_t(a.images) + 1) / 2;
  for (std::size_t k = 0; k < wc.attributes.size(); ++k) {
    auto ts = synth::sample_comparisons(world, wc.attributes[k], count, c.seed * 1000 + k + 1, so);
    all.insert(all.end(), ts.begin(), ts.end());
  }
  synth::write_world(a.out, world, all);
  std::cout << "wrote " << world.images.size() << " images and " << all.size() << " triplets to " << a.out << '\n';
}

void run_split(const Common& c, const std::string& triplets, const std::string& ratios_text, const std::string& out) {
  const SplitRatios ratios = parse_ratios(ratios_text);
  echo_config(c, "split",
              {{"triplets", triplets}, {"ratios", {ratios.train, ratios.validation, ratios.test}}, {"out", out}});
  auto all = io::read_triplets(triplets);
  // Equal outcomes carry no training signal and are set aside before splitting.
  std::vector<ComparisonTriplet> decisive;
  for (const auto& t : all) {
    if (t.outcome != Outcome::equal) decisive.push_back(t);
  }
  const auto split = split_triplets(decisive, ratios, c.seed);
  fs::create_directories(out);
  io::write_triplets(fs::path(out) / "train.jsonl", split.select(decisive, Bucket::train));
  io::write_triplets(fs::path(out) / "val.jsonl", split.select(decisive, Bucket::validation));
  io::write_triplets(fs::path(out) / "test.jsonl", split.select(decisive, Bucket::test));
  const auto s = split.sizes();
  std::cout << "train " << s[0] << " val " << s[1] << " test " << s[2] << " (dropped " << all.size() - decisive.size()
            << " equal)\n";
}

void run_train(const Common& c, TrainArgs& a, const std::string& out, const std::string& log) {
  a.resolve(c.seed);
  json echo = a.echo();
  echo["out"] = out;
  echo["log"] = log;
  echo_config(c, "train", echo);
  auto d = load_training(a);
  const auto tr = net::index_pairs(d->train, d->bank);
  const auto va = net::index_pairs(d->val, d->bank);
  const auto r = net::train(d->bank, tr, va, arch_for(d->manifest), a.cfg);
  net::save_checkpoint(out, {r.params, r.iterations, a.cfg.lambda, net::to_json(a.cfg)});
  if (!log.empty()) net::write_train_log(log, r.log);
  std::cout << "iterations " << r.iterations << " lr_drops " << r.lr_drops << " best_val " << r.best_val_accuracy
            << " stop " << r.stop_reason << '\n';
}

void run_tune(const Common& c, TrainArgs& a, const std::string& grid_text, const std::string& out,
              const std::string& trials) {
  a.resolve(c.seed);
  const auto grid = parse_doubles(grid_text, "lambda grid");
  json echo = a.echo();
  echo["grid"] = grid;
  echo["out"] = out;
  echo_config(c, "tune-lambda", echo);
  auto d = load_training(a);
  const auto tr = net::index_pairs(d->train, d->bank);
  const auto va = net::index_pairs(d->val, d->bank);
  const auto r = net::tune_lambda(grid, d->bank, tr, va, arch_for(d->manifest), a.cfg);
  net::TrainConfig best_cfg = a.cfg;
  best_cfg.lambda = r.best_lambda;
  net::save_checkpoint(out, {r.best.params, r.best.iterations, r.best_lambda, net::to_json(best_cfg)});
  if (!trials.empty()) write_trials(trials, r);
  for (const auto& t : r.trials) {
    std::cout << "lambda " << t.lambda << " val " << (t.diverged ? std::string("diverged") : std::to_string(t.val_accuracy))
              << '\n';
  }
  std::cout << "best_lambda " << r.best_lambda << '\n';
}

struct EvalArgs {
  std::string manifest, checkpoint, test, train, val, method = "softmax", attribute, out;
  int per_image = 30;
  std::string c_grid = "0.01,0.1,1,10,100";
};

void run_eval(const Common& c, const EvalArgs& a) {
  const eval::Method method = eval::parse_method(a.method);
  echo_config(c, "eval",
              {{"manifest", a.manifest}, {"checkpoint", a.checkpoint}, {"test", a.test}, {"train", a.train},
               {"val", a.val}, {"method", eval::to_string(method)}, {"per_image", a.per_image},
               {"c_grid", a.c_grid}, {"attribute", a.attribute}, {"out", a.out}});
  const Manifest m = io::read_manifest(a.manifest);
  const net::ImageBank bank(m);
  const auto ck = net::load_checkpoint(a.checkpoint);
  const auto test_all = io::read_triplets(a.test);
  const Attribute attr = resolve_attribute(a.attribute, test_all);
  const auto test = only(test_all, attr);

  eval::EvalReport report;
  switch (method) {
    case eval::Method::softmax: report = eval::accuracy_softmax(ck.params, bank, test); break;
    case eval::Method::rss_ranking: report = eval::accuracy_rss(ck.params, bank, test); break;
    case eval::Method::trueskill: report = eval::accuracy_trueskill(ck.params, bank, test, a.per_image, c.seed); break;
    case eval::Method::ranksvm: {
      if (a.train.empty()) throw Error(ErrorKind::InvalidArgument, "--method ranksvm needs --train");
      eval::RankSvmEvalOptions opt;
      opt.c_grid = parse_doubles(a.c_grid, "c grid");
      const auto val = a.val.empty() ? std::vector<ComparisonTriplet>{} : only(io::read_triplets(a.val), attr);
      report = eval::accuracy_ranksvm(ck.params, bank, only(io::read_triplets(a.train), attr), val, test, opt);
      break;
    }
  }
  if (!a.out.empty()) eval::write_reports(a.out, {report});
  std::cout << eval::summary(report) << '\n';
}

struct RateArgs {
  std::string triplets, manifest, attribute, out, epsilon_mode = "standard", variance_form = "standard";
  TrueSkillConfig ts;
};

TrueSkillConfig resolve_trueskill(const RateArgs& a) {
  TrueSkillConfig cfg = a.ts;
  if (a.epsilon_mode == "standard") {
    cfg.epsilon_mode = EpsilonMode::standard;
  } else if (a.epsilon_mode == "paper_literal") {
    cfg.epsilon_mode = EpsilonMode::paper_literal;
  } else {
    throw Error(ErrorKind::InvalidArgument, "--epsilon-mode must be standard or paper_literal");
  }
  if (a.variance_form == "standard") {
    cfg.variance_form = VarianceForm::standard;
  } else if (a.variance_form == "paper_displayed") {
    cfg.variance_form = VarianceForm::paper_displayed;
  } else {
    throw Error(ErrorKind::InvalidArgument, "--variance-form must be standard or paper_displayed");
  }
  cfg.validate();
  return cfg;
}

json to_json(const TrueSkillConfig& t) {
  return {{"mu0", t.mu0},
          {"sigma0", t.sigma0},
          {"beta", t.beta},
          {"epsilon", t.epsilon},
          {"epsilon_mode", t.epsilon_mode == EpsilonMode::standard ? "standard" : "paper_literal"},
          {"variance_form", t.variance_form == VarianceForm::standard ? "standard" : "paper_displayed"}};
}

void add_trueskill(CLI::App* cmd, RateArgs& a) {
  cmd->add_option("--mu0", a.ts.mu0)->capture_default_str();
  cmd->add_option("--sigma0", a.ts.sigma0)->capture_default_str();
  cmd->add_option("--beta", a.ts.beta)->capture_default_str();
  cmd->add_option("--epsilon", a.ts.epsilon, "draw margin")->capture_default_str();
  cmd->add_option("--epsilon-mode", a.epsilon_mode, "standard or paper_literal")->capture_default_str();
  cmd->add_option("--variance-form", a.variance_form, "standard or paper_displayed")->capture_default_str();
}

void run_rate(const Common& c, const RateArgs& a) {
  const TrueSkillConfig cfg = resolve_trueskill(a);
  echo_config(c, "rate",
              {{"triplets", a.triplets}, {"manifest", a.manifest}, {"attribute", a.attribute}, {"out", a.out},
               {"trueskill", to_json(cfg)}});
  const auto ts = io::read_triplets(a.triplets);
  const Attribute attr = resolve_attribute(a.attribute, ts);
  std::vector<std::string> ids;
  if (!a.manifest.empty()) {
    ids = io::read_manifest(a.manifest, false).ids();
  } else {
    std::set<std::string> seen;
    for (const auto& t : ts) {
      if (t.attribute != attr) continue;
      seen.insert(t.left_id);
      seen.insert(t.right_id);
    }
    ids.assign(seen.begin(), seen.end());
  }
  const ScoreTable table = trueskill::rate_all(ts, cfg, attr, ids);
  io::write_scores(a.out, table);
  std::cout << "rated " << table.entries.size() << " images for " << to_string(attr) << '\n';
}

struct AnchoredArgs {
  std::string manifest, new_manifest, reference, checkpoint, out, method = "softmax";
  int per_image = 30;
};

void run_anchored(const Common& c, const AnchoredArgs& a) {
  echo_config(c, "anchored-rate",
              {{"manifest", a.manifest}, {"new_manifest", a.new_manifest}, {"reference", a.reference},
               {"checkpoint", a.checkpoint}, {"per_image", a.per_image}, {"method", a.method}, {"out", a.out}});
  const net::PredictMethod how = a.method == "ranking" ? net::PredictMethod::ranking : net::PredictMethod::softmax;
  if (a.method != "softmax" && a.method != "ranking") {
    throw Error(ErrorKind::InvalidArgument, "--method must be softmax or ranking");
  }
  const Manifest ref_m = io::read_manifest(a.manifest);
  const Manifest new_m = io::read_manifest(a.new_manifest);
  std::vector<ImageRecord> all = ref_m.records();
  all.insert(all.end(), new_m.records().begin(), new_m.records().end());
  const Manifest combined = validate_manifest(std::move(all));
  const net::ImageBank bank(combined);
  const auto ck = net::load_checkpoint(a.checkpoint);
  const ScoreTable reference = io::read_scores(a.reference);
  const trueskill::PairPredictor predictor = [&](const std::string& l, const std::string& r) {
    return net::predict_comparison(ck.params, *bank.get(l), *bank.get(r), how) > 0;
  };
  const auto result = trueskill::anchored_rate(new_m.ids(), reference, predictor, a.per_image, c.seed);
  io::write_scores(a.out, result.scores);
  std::cout << "scored " << result.scores.entries.size() << " new images with " << result.comparisons.size()
            << " comparisons\n";
}

void run_cross(const Common& c, const std::string& manifest, const std::vector<std::string>& models,
               const std::vector<std::string>& tests, const std::string& out) {
  echo_config(c, "cross-attr", {{"manifest", manifest}, {"models", models}, {"tests", tests}, {"out", out}});
  const Manifest m = io::read_manifest(manifest);
  const net::ImageBank bank(m);
  std::map<Attribute, net::Checkpoint> cks;
  for (const auto& [attr, path] : parse_assignments(models, "--model")) cks.emplace(attr, net::load_checkpoint(path));
  std::map<Attribute, const net::Model*> ptrs;
  for (const auto& [attr, ck] : cks) ptrs[attr] = &ck.params;
  std::map<Attribute, std::vector<ComparisonTriplet>> test_sets;
  for (const auto& [attr, path] : parse_assignments(tests, "--test")) test_sets[attr] = only(io::read_triplets(path), attr);
  const auto matrix = eval::cross_attribute_matrix(ptrs, bank, test_sets);
  eval::write_matrix(out, matrix);
  std::cout << "wrote " << out << '\n';
}

void run_r2(const Common& c, const std::vector<std::string>& scores, const std::string& out) {
  echo_config(c, "r2", {{"scores", scores}, {"out", out}});
  std::map<Attribute, ScoreTable> tables;
  for (const auto& path : scores) {
    ScoreTable t = io::read_scores(path);
    tables[t.attribute] = std::move(t);
  }
  const auto matrix = eval::attribute_r2(tables);
  eval::write_matrix(out, matrix);
  std::cout << "wrote " << out << '\n';
}

void run_curve(const Common& c, TrainArgs& a, const std::string& test, const std::string& fractions_text,
               const std::string& method, const std::string& out) {
  a.resolve(c.seed);
  const auto fractions = parse_doubles(fractions_text, "fractions");
  if (method != "softmax" && method != "ranking") throw Error(ErrorKind::InvalidArgument, "--method must be softmax or ranking");
  json echo = a.echo();
  echo["test"] = test;
  echo["fractions"] = fractions;
  echo["method"] = method;
  echo["out"] = out;
  echo_config(c, "learning-curve", echo);
  auto d = load_training(a);
  eval::LearningCurveSetup s;
  s.bank = &d->bank;
  s.train = net::index_pairs(d->train, d->bank);
  s.validation = net::index_pairs(d->val, d->bank);
  s.test = net::index_pairs(only(io::read_triplets(test), d->attribute), d->bank);
  s.arch = arch_for(d->manifest);
  s.train_cfg = a.cfg;
  s.method = method == "ranking" ? net::PredictMethod::ranking : net::PredictMethod::softmax;
  s.subset_seed = c.seed;
  const auto curve = eval::learning_curve(fractions, s);
  eval::write_curve(out, curve);
  for (const auto& p : curve) std::cout << "fraction " << p.fraction << " n " << p.n_train << " accuracy " << p.accuracy << '\n';
}

struct KfoldArgs {
  TrainArgs train;
  std::string triplets, method = "softmax", out;
  int k = 5;
};

void run_kfold(const Common& c, KfoldArgs& a) {
  a.train.resolve(c.seed);
  if (a.method != "softmax" && a.method != "ranking") throw Error(ErrorKind::InvalidArgument, "--method must be softmax or ranking");
  json echo = a.train.echo();
  echo.erase("train");
  echo.erase("val");
  echo["triplets"] = a.triplets;
  echo["k"] = a.k;
  echo["method"] = a.method;
  echo["out"] = a.out;
  echo_config(c, "kfold", echo);
  const Manifest m = io::read_manifest(a.train.manifest);
  const net::ImageBank bank(m);
  const auto all = io::read_triplets(a.triplets);
  const Attribute attr = resolve_attribute(a.train.attribute, all);
  std::vector<ComparisonTriplet> decisive;
  for (const auto& t : only(all, attr)) {
    if (t.outcome != Outcome::equal) decisive.push_back(t);
  }
  const auto how = a.method == "ranking" ? net::PredictMethod::ranking : net::PredictMethod::softmax;
  // Each fold holds out 1/k for testing and a small validation slice of the rest.
  const auto accs = eval::kfold(decisive, a.k, c.seed, [&](const auto& train, const auto& test, int fold) {
    std::vector<std::size_t> perm(train.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(c.seed + std::uint64_t(fold));
    std::shuffle(perm.begin(), perm.end(), rng);
    const std::size_t n_val = std::max<std::size_t>(1, train.size() / 20);
    std::vector<ComparisonTriplet> tr_t, va_t;
    for (std::size_t i = 0; i < perm.size(); ++i) (i < n_val ? va_t : tr_t).push_back(train[perm[i]]);
    const auto tr = net::index_pairs(tr_t, bank);
    const auto va = net::index_pairs(va_t, bank);
    const auto r = net::train(bank, tr, va, arch_for(m), a.train.cfg);
    return net::pair_accuracy(r.params, bank, net::index_pairs(test, bank), how);
  });
  std::ofstream out = io::open_out(a.out);
  out << "fold,accuracy\n";
  double sum = 0;
  for (std::size_t f = 0; f < accs.size(); ++f) {
    out << f << ',' << io::fixed6(accs[f]) << '\n';
    sum += accs[f];
  }
  std::cout << "mean accuracy " << sum / double(accs.size()) << '\n';
}

struct ServeArgs {
  std::string manifest, log = "votes.log", host = "0.0.0.0", static_dir, image_root;
  int port = 8080;
  int ttl = 600;
};

httplib::Server* g_server = nullptr;

void run_serve(const Common& c, const ServeArgs& a) {
  echo_config(c, "serve",
              {{"manifest", a.manifest}, {"log", a.log}, {"host", a.host}, {"port", a.port}, {"ttl", a.ttl},
               {"static", a.static_dir}, {"image_root", a.image_root}});
  std::optional<Manifest> m;
  service::ServiceOptions opt;
  opt.token_ttl = std::chrono::seconds(a.ttl);
  if (!a.manifest.empty()) {
    m = io::read_manifest(a.manifest, false);
    opt.image_root = a.image_root.empty() ? fs::path(a.manifest).parent_path() : fs::path(a.image_root);
  }
  if (!a.static_dir.empty()) opt.static_dir = a.static_dir;
  service::VoteService svc(std::move(m), a.log, opt);
  httplib::Server server;
  service::mount(server, svc);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::cerr << "listening on " << a.host << ':' << a.port << " with " << svc.vote_count() << " logged votes"
            << std::endl;
  if (!server.listen(a.host, a.port)) throw Error(ErrorKind::StorageFailure, "cannot listen on port " + std::to_string(a.port));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streetrank: learn image rankings from pairwise comparisons"};
  app.require_subcommand(1);
  Common common;

  SynthArgs synth_a;
  auto* synth_cmd = app.add_subcommand("synth", "generate a planted world");
  add_common(synth_cmd, common);
  synth_cmd->add_option("--out", synth_a.out, "output directory")->required();
  synth_cmd->add_option("--images", synth_a.images)->capture_default_str();
  synth_cmd->add_option("--size", synth_a.size, "image side in pixels")->capture_default_str();
  synth_cmd->add_option("--attributes", synth_a.attributes, "comma list; the first is the base")->capture_default_str();
  synth_cmd->add_option("--r2", synth_a.r2, "R^2 of further attributes with the base")->capture_default_str();
  synth_cmd->add_option("--per-image", synth_a.per_image, "comparisons per image per attribute")->capture_default_str();
  synth_cmd->add_option("--noise", synth_a.noise, "none or bt")->capture_default_str();
  synth_cmd->add_option("--bt-scale", synth_a.bt_scale)->capture_default_str();
  synth_cmd->add_option("--equal-rate", synth_a.equal_rate, "fraction of equal outcomes")->capture_default_str();
  synth_cmd->add_option("--id-prefix", synth_a.id_prefix, "image id prefix")->capture_default_str();

  std::string split_triplets_path, split_ratios = "65,5,30", split_out;
  auto* split_cmd = app.add_subcommand("split", "split triplets into train/val/test");
  add_common(split_cmd, common);
  split_cmd->add_option("--triplets", split_triplets_path)->required();
  split_cmd->add_option("--ratios", split_ratios)->capture_default_str();
  split_cmd->add_option("--out", split_out, "output directory")->required();

  TrainArgs train_a;
  std::string train_out, train_log;
  auto* train_cmd = app.add_subcommand("train", "train SS-CNN (--lambda 0) or RSS-CNN");
  add_common(train_cmd, common);
  train_a.add(train_cmd, true);
  train_cmd->add_option("--out", train_out, "checkpoint path")->required();
  train_cmd->add_option("--log", train_log, "training log CSV");

  TrainArgs tune_a;
  tune_a.val_method = "ranking";
  std::string tune_grid = "1,2,5,10", tune_out, tune_trials;
  auto* tune_cmd = app.add_subcommand("tune-lambda", "grid-search the ranking-loss weight");
  add_common(tune_cmd, common);
  tune_a.add(tune_cmd, false);
  tune_cmd->add_option("--grid", tune_grid)->capture_default_str();
  tune_cmd->add_option("--out", tune_out, "checkpoint of the selected model")->required();
  tune_cmd->add_option("--trials", tune_trials, "per-candidate CSV");

  EvalArgs eval_a;
  auto* eval_cmd = app.add_subcommand("eval", "pairwise accuracy on a test set");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--manifest", eval_a.manifest)->required();
  eval_cmd->add_option("--checkpoint", eval_a.checkpoint)->required();
  eval_cmd->add_option("--test", eval_a.test)->required();
  eval_cmd->add_option("--method", eval_a.method, "softmax, trueskill, ranksvm or rss")->capture_default_str();
  eval_cmd->add_option("--per-image", eval_a.per_image, "trueskill: generated comparisons per image")->capture_default_str();
  eval_cmd->add_option("--train", eval_a.train, "ranksvm: training triplets");
  eval_cmd->add_option("--val", eval_a.val, "ranksvm: validation triplets for c_reg");
  eval_cmd->add_option("--c-grid", eval_a.c_grid)->capture_default_str();
  eval_cmd->add_option("--attribute", eval_a.attribute);
  eval_cmd->add_option("--out", eval_a.out, "report CSV");

  RateArgs rate_a;
  auto* rate_cmd = app.add_subcommand("rate", "TrueSkill scores from a triplet file");
  add_common(rate_cmd, common);
  rate_cmd->add_option("--triplets", rate_a.triplets)->required();
  rate_cmd->add_option("--manifest", rate_a.manifest, "ids to rate (default: ids in the triplets)");
  rate_cmd->add_option("--attribute", rate_a.attribute);
  rate_cmd->add_option("--out", rate_a.out, "scores CSV")->required();
  add_trueskill(rate_cmd, rate_a);

  AnchoredArgs anch_a;
  auto* anch_cmd = app.add_subcommand("anchored-rate", "score unseen images against rated ones");
  add_common(anch_cmd, common);
  anch_cmd->add_option("--manifest", anch_a.manifest, "reference images")->required();
  anch_cmd->add_option("--new-manifest", anch_a.new_manifest, "images to score")->required();
  anch_cmd->add_option("--reference", anch_a.reference, "reference scores CSV")->required();
  anch_cmd->add_option("--checkpoint", anch_a.checkpoint)->required();
  anch_cmd->add_option("--per-image", anch_a.per_image, "half anchored, half among new images")->capture_default_str();
  anch_cmd->add_option("--method", anch_a.method, "softmax or ranking")->capture_default_str();
  anch_cmd->add_option("--out", anch_a.out, "scores CSV")->required();

  std::string cross_manifest, cross_out;
  std::vector<std::string> cross_models, cross_tests;
  auto* cross_cmd = app.add_subcommand("cross-attr", "accuracy of each attribute model on each test set");
  add_common(cross_cmd, common);
  cross_cmd->add_option("--manifest", cross_manifest)->required();
  cross_cmd->add_option("--model", cross_models, "attribute=checkpoint")->required();
  cross_cmd->add_option("--test", cross_tests, "attribute=triplets")->required();
  cross_cmd->add_option("--out", cross_out, "6x6 matrix CSV")->required();

  std::vector<std::string> r2_scores;
  std::string r2_out;
  auto* r2_cmd = app.add_subcommand("r2", "signed R^2 between attribute score tables");
  add_common(r2_cmd, common);
  r2_cmd->add_option("--scores", r2_scores, "scores CSV, one per attribute")->required();
  r2_cmd->add_option("--out", r2_out, "6x6 matrix CSV")->required();

  TrainArgs curve_a;
  std::string curve_test, curve_fractions = "0.1,0.2,0.4,0.6,0.8,1.0", curve_method = "softmax", curve_out;
  auto* curve_cmd = app.add_subcommand("learning-curve", "accuracy against training-set fraction");
  add_common(curve_cmd, common);
  curve_a.add(curve_cmd, true);
  curve_cmd->add_option("--test", curve_test)->required();
  curve_cmd->add_option("--fractions", curve_fractions)->capture_default_str();
  curve_cmd->add_option("--method", curve_method, "softmax or ranking")->capture_default_str();
  curve_cmd->add_option("--out", curve_out, "curve CSV")->required();

  KfoldArgs kfold_a;
  auto* kfold_cmd = app.add_subcommand("kfold", "k-fold cross-validated accuracy");
  add_common(kfold_cmd, common);
  kfold_cmd->add_option("--manifest", kfold_a.train.manifest)->required();
  kfold_cmd->add_option("--triplets", kfold_a.triplets)->required();
  kfold_cmd->add_option("--attribute", kfold_a.train.attribute);
  kfold_cmd->add_option("--k", kfold_a.k)->capture_default_str();
  kfold_cmd->add_option("--lambda", kfold_a.train.cfg.lambda)->capture_default_str();
  kfold_cmd->add_option("--max-iters", kfold_a.train.cfg.max_iters)->capture_default_str();
  kfold_cmd->add_option("--method", kfold_a.method, "softmax or ranking")->capture_default_str();
  kfold_cmd->add_option("--out", kfold_a.out, "per-fold CSV")->required();

  ServeArgs serve_a;
  auto* serve_cmd = app.add_subcommand("serve", "run the vote-collection service");
  add_common(serve_cmd, common);
  serve_cmd->add_option("--manifest", serve_a.manifest)->envname("STREETRANK_MANIFEST");
  serve_cmd->add_option("--log", serve_a.log, "vote log path")->envname("STREETRANK_LOG")->capture_default_str();
  serve_cmd->add_option("--host", serve_a.host)->envname("STREETRANK_HOST")->capture_default_str();
  serve_cmd->add_option("--port", serve_a.port)->envname("STREETRANK_PORT")->capture_default_str();
  serve_cmd->add_option("--ttl", serve_a.ttl, "pair token lifetime in seconds")->envname("STREETRANK_TOKEN_TTL")->capture_default_str();
  serve_cmd->add_option("--static", serve_a.static_dir, "directory served at /")->envname("STREETRANK_STATIC");
  serve_cmd->add_option("--image-root", serve_a.image_root, "base for manifest image paths");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("config", "ParseError", e.what());
    return 2;
  }

  try {
    if (*synth_cmd) run_synth(common, synth_a);
    else if (*split_cmd) run_split(common, split_triplets_path, split_ratios, split_out);
    else if (*train_cmd) run_train(common, train_a, train_out, train_log);
    else if (*tune_cmd) run_tune(common, tune_a, tune_grid, tune_out, tune_trials);
    else if (*eval_cmd) run_eval(common, eval_a);
    else if (*rate_cmd) run_rate(common, rate_a);
    else if (*anch_cmd) run_anchored(common, anch_a);
    else if (*cross_cmd) run_cross(common, cross_manifest, cross_models, cross_tests, cross_out);
    else if (*r2_cmd) run_r2(common, r2_scores, r2_out);
    else if (*curve_cmd) run_curve(common, curve_a, curve_test, curve_fractions, curve_method, curve_out);
    else if (*kfold_cmd) run_kfold(common, kfold_a);
    else if (*serve_cmd) run_serve(common, serve_a);
  } catch (const ManifestError& e) {
    report_error(to_string(e.category()), to_string(e.kind()), e.what());
    return exit_code(e.category());
  } catch (const Error& e) {
    report_error(to_string(e.category()), to_string(e.kind()), e.what());
    return exit_code(e.category());
  } catch (const std::exception& e) {
    report_error("data", "Unexpected", e.what());
    return 3;
  }
  return 0;
}
