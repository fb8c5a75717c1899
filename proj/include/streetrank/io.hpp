#pragma once

// File formats: image manifest (CSV), triplet files (JSON lines), score
// tables (CSV), planted truth (CSV) and 8-bit PNG images.

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "streetrank/core.hpp"

namespace streetrank::io {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// CSV helpers
// ---------------------------------------------------------------------------

/// Splits one CSV line, honouring double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += "\"\"";
    else q.push_back(c);
  }
  return q + "\"";
}

inline std::string fixed6(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

inline std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open '" + p.string() + "'");
  return in;
}

inline std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error(ErrorKind::StorageFailure, "cannot write '" + p.string() + "'");
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::ParseError, "bad number for " + what + ": '" + s + "'");
  }
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

inline Image read_png(const fs::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw Error(ErrorKind::ParseError, "cannot read png '" + path.string() + "': " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error(ErrorKind::ParseError, "cannot decode png '" + path.string() + "': " + img.message);
  }
  Image out(int(img.height), int(img.width), 3);
  for (std::size_t i = 0; i < buf.size(); ++i) out.data[i] = float(buf[i]) / 255.f;
  return out;
}

/// Quantizes to 8 bits per channel; 1- and 3-channel images are supported.
inline void write_png(const fs::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw Error(ErrorKind::ShapeMismatch, "png output needs 1 or 3 channels");
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::vector<png_byte> buf(image.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    float v = std::clamp(image.data[i], 0.f, 1.f);
    buf[i] = static_cast<png_byte>(std::lround(v * 255.f));
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = png_uint_32(image.width);
  img.height = png_uint_32(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw Error(ErrorKind::StorageFailure, "cannot write png '" + path.string() + "': " + img.message);
  }
}

/// Rounds pixel values the same way a PNG round trip does.
inline Image quantize8(Image image) {
  for (float& v : image.data) v = float(std::lround(std::clamp(v, 0.f, 1.f) * 255.f)) / 255.f;
  return image;
}

// ---------------------------------------------------------------------------
// Manifest: id,city,country,lat,lng,path
// ---------------------------------------------------------------------------

inline void write_manifest(const fs::path& path, const std::vector<ImageRecord>& records) {
  auto out = open_out(path);
  out << "id,city,country,lat,lng,path\n";
  out << std::setprecision(10);
  for (const auto& r : records) {
    out << csv_field(r.id) << ',' << csv_field(r.city) << ',' << csv_field(r.country) << ','
        << r.lat << ',' << r.lng << ',' << csv_field(r.path) << '\n';
  }
}

/// Reads and validates a manifest. With `load_pixels`, each non-empty path is
/// decoded relative to the manifest's directory.
inline Manifest read_manifest(const fs::path& path, bool load_pixels = true) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::EmptyManifest, "empty manifest file");
  auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* need : {"id", "city", "country", "lat", "lng", "path"}) {
    if (!col.count(need)) {
      throw Error(ErrorKind::ParseError, std::string("manifest header lacks '") + need + "'");
    }
  }
  std::vector<ImageRecord> records;
  std::size_t lineno = 1;
  const fs::path base = path.parent_path();
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() < header.size()) {
      throw Error(ErrorKind::ParseError, "manifest line " + std::to_string(lineno) + " is short");
    }
    ImageRecord r;
    r.id = f[col["id"]];
    r.city = f[col["city"]];
    r.country = f[col["country"]];
    r.lat = parse_double(f[col["lat"]], "lat");
    r.lng = parse_double(f[col["lng"]], "lng");
    r.path = f[col["path"]];
    if (load_pixels && !r.path.empty()) r.pixels = read_png(base / r.path);
    records.push_back(std::move(r));
  }
  return validate_manifest(std::move(records));
}

// ---------------------------------------------------------------------------
// Triplets: JSON lines with left_id,right_id,attribute,outcome,source,timestamp
// ---------------------------------------------------------------------------

inline json to_json(const ComparisonTriplet& t) {
  json j;
  j["left_id"] = t.left_id;
  j["right_id"] = t.right_id;
  j["attribute"] = std::string(to_string(t.attribute));
  j["outcome"] = std::string(to_string(t.outcome));
  j["source"] = std::string(to_string(t.source));
  j["timestamp"] = t.timestamp ? json(*t.timestamp) : json(nullptr);
  return j;
}

/// Unknown keys are ignored.
inline ComparisonTriplet triplet_from_json(const json& j) {
  try {
    ComparisonTriplet t;
    t.left_id = j.at("left_id").get<std::string>();
    t.right_id = j.at("right_id").get<std::string>();
    t.attribute = parse_attribute(j.at("attribute").get<std::string>());
    t.outcome = parse_outcome(j.at("outcome").get<std::string>());
    t.source = j.contains("source") ? parse_source(j["source"].get<std::string>()) : Source::human;
    if (j.contains("timestamp") && !j["timestamp"].is_null()) {
      t.timestamp = j["timestamp"].get<std::int64_t>();
    }
    if (t.left_id == t.right_id) {
      throw Error(ErrorKind::ParseError, "self-comparison of '" + t.left_id + "'");
    }
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
}

inline std::string to_line(const ComparisonTriplet& t) { return to_json(t).dump(); }

inline ComparisonTriplet parse_triplet_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, e.what());
  }
  return triplet_from_json(j);
}

inline void write_triplets(const fs::path& path, const std::vector<ComparisonTriplet>& ts) {
  auto out = open_out(path);
  for (const auto& t : ts) out << to_line(t) << '\n';
}

inline std::vector<ComparisonTriplet> read_triplets(const fs::path& path) {
  auto in = open_in(path);
  std::vector<ComparisonTriplet> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    try {
      out.push_back(parse_triplet_line(line));
    } catch (const Error& e) {
      throw Error(ErrorKind::ParseError,
                  path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scores: id,attribute,mu,sigma,scaled  (6 decimal places)
// ---------------------------------------------------------------------------

inline void write_scores(std::ostream& out, const ScoreTable& table) {
  out << "id,attribute,mu,sigma,scaled\n";
  for (const auto& [id, e] : table.entries) {
    out << csv_field(id) << ',' << to_string(table.attribute) << ',' << fixed6(e.mu) << ','
        << fixed6(e.sigma) << ',' << (e.scaled ? fixed6(*e.scaled) : std::string()) << '\n';
  }
}

inline void write_scores(const fs::path& path, const ScoreTable& table) {
  auto out = open_out(path);
  write_scores(out, table);
}

inline ScoreTable read_scores(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  ScoreTable table;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() < 5) throw Error(ErrorKind::ParseError, "short score line: " + line);
    Attribute a = parse_attribute(f[1]);
    if (first) table.attribute = a;
    else if (a != table.attribute) {
      throw Error(ErrorKind::ParseError, "score file mixes attributes");
    }
    first = false;
    ScoreEntry e;
    e.mu = parse_double(f[2], "mu");
    e.sigma = parse_double(f[3], "sigma");
    if (!f[4].empty()) e.scaled = parse_double(f[4], "scaled");
    table.entries[f[0]] = e;
  }
  return table;
}

// ---------------------------------------------------------------------------
// Planted truth: id,attribute,planted_score
// ---------------------------------------------------------------------------

using PlantedScores = std::map<Attribute, std::map<std::string, double>>;

inline void write_planted(const fs::path& path, const PlantedScores& truth) {
  auto out = open_out(path);
  out << "id,attribute,planted_score\n";
  for (const auto& [attr, scores] : truth) {
    for (const auto& [id, s] : scores) {
      out << csv_field(id) << ',' << to_string(attr) << ',' << fixed6(s) << '\n';
    }
  }
}

inline PlantedScores read_planted(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  PlantedScores truth;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() < 3) throw Error(ErrorKind::ParseError, "short planted line: " + line);
    truth[parse_attribute(f[1])][f[0]] = parse_double(f[2], "planted_score");
  }
  return truth;
}

}  // namespace streetrank::io
