#pragma once

// JSON checkpoint: architecture echo, seed, iteration count, lambda and the
// flat parameter array. Values are written with round-trip precision, so a
// reloaded model predicts bit-for-bit like the one that was saved.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <string>

#include <json.hpp>

#include "streetrank/net/train.hpp"

namespace streetrank::net {

using nlohmann::json;

inline std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "linear"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "linear") return Activation::linear;
  throw Error(ErrorKind::ParseError, "unknown activation '" + s + "'");
}

inline json conv_specs_to_json(const std::vector<ConvLayerSpec>& v) {
  json a = json::array();
  for (const auto& c : v) {
    a.push_back({{"filters", c.filters}, {"kernel", c.kernel}, {"stride", c.stride}, {"act", to_string(c.act)}});
  }
  return a;
}

inline std::vector<ConvLayerSpec> conv_specs_from_json(const json& a) {
  std::vector<ConvLayerSpec> v;
  for (const auto& c : a) {
    v.push_back({c.at("filters").get<int>(), c.at("kernel").get<int>(), c.at("stride").get<int>(),
                 parse_activation(c.value("act", std::string("relu")))});
  }
  return v;
}

inline json to_json(const ArchConfig& a) {
  return {{"tower",
           {{"height", a.tower.height},
            {"width", a.tower.width},
            {"channels", a.tower.channels},
            {"conv", conv_specs_to_json(a.tower.conv)},
            {"fc", a.tower.fc}}},
          {"fusion", {{"conv", conv_specs_to_json(a.fusion.conv)}, {"fc", {2}}}},
          {"rank", {{"fc", a.rank.fc}}},
          {"input_offset", a.input_offset}};
}

inline ArchConfig arch_from_json(const json& j) {
  ArchConfig a;
  const auto& t = j.at("tower");
  a.tower.height = t.at("height").get<int>();
  a.tower.width = t.at("width").get<int>();
  a.tower.channels = t.at("channels").get<int>();
  a.tower.conv = conv_specs_from_json(t.at("conv"));
  a.tower.fc = t.at("fc").get<std::vector<int>>();
  a.fusion.conv = conv_specs_from_json(j.at("fusion").at("conv"));
  a.rank.fc = j.at("rank").at("fc").get<std::vector<int>>();
  a.input_offset = j.value("input_offset", 0.5);
  return a;
}

inline json to_json(const TrainConfig& c) {
  return {{"lr0", c.lr0},
          {"momentum", c.momentum},
          {"lr_drop_factor", c.lr_drop_factor},
          {"max_lr_drops", c.max_lr_drops},
          {"batch_size", c.batch_size},
          {"lambda", c.lambda},
          {"max_iters", c.max_iters},
          {"seed", c.seed},
          {"eval_every", c.eval_every},
          {"patience", c.patience},
          {"min_improvement", c.min_improvement},
          {"val_method", c.val_method == PredictMethod::softmax ? "softmax" : "ranking"},
          {"init_head_std", c.init.head_std}};
}

struct Checkpoint {
  Model params;
  int iteration = 0;
  double lambda = 0.0;
  json train_config;  // echo only
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  json j;
  j["format"] = "streetrank-checkpoint";
  j["version"] = 1;
  j["scalar"] = "float32";
  j["arch"] = to_json(ck.params.arch);
  j["seed"] = ck.params.seed;
  j["iteration"] = ck.iteration;
  j["lambda"] = ck.lambda;
  j["train_config"] = ck.train_config;
  j["param_count"] = ck.params.values.size();
  json values = json::array();
  for (Real v : ck.params.values) values.push_back(double(v));
  j["params"] = std::move(values);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::StorageFailure, "cannot write checkpoint '" + path.string() + "'");
  out << j.dump() << '\n';
  if (!out) throw Error(ErrorKind::StorageFailure, "short write to '" + path.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open checkpoint '" + path.string() + "'");
  json j;
  try {
    in >> j;
    if (j.at("format") != "streetrank-checkpoint") throw Error(ErrorKind::ParseError, "not a checkpoint");
    Checkpoint ck;
    ck.params.arch = arch_from_json(j.at("arch"));
    ck.params.layout = build_layout(ck.params.arch);
    ck.params.seed = j.at("seed").get<std::uint64_t>();
    ck.iteration = j.at("iteration").get<int>();
    ck.lambda = j.at("lambda").get<double>();
    ck.train_config = j.value("train_config", json::object());
    const auto& values = j.at("params");
    if (values.size() != ck.params.layout.total) {
      throw Error(ErrorKind::ShapeMismatch, "checkpoint has " + std::to_string(values.size()) +
                                                " parameters, architecture needs " +
                                                std::to_string(ck.params.layout.total));
    }
    ck.params.values.reserve(values.size());
    for (const auto& v : values) ck.params.values.push_back(Real(v.get<double>()));
    return ck;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("bad checkpoint: ") + e.what());
  }
}

/// Training log CSV: iteration,train_loss,val_accuracy,lr
inline void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& log) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::StorageFailure, "cannot write '" + path.string() + "'");
  out << "iteration,train_loss,val_accuracy,lr\n" << std::setprecision(8);
  for (const auto& r : log) out << r.iteration << ',' << r.train_loss << ',' << r.val_accuracy << ',' << r.lr << '\n';
}

}  // namespace streetrank::net
