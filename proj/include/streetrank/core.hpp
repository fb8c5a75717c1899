#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "streetrank/error.hpp"

namespace streetrank {

// ---------------------------------------------------------------------------
// Attributes
// ---------------------------------------------------------------------------

enum class Attribute { safe, lively, beautiful, wealthy, boring, depressing };

inline constexpr std::array<Attribute, 6> kAllAttributes = {
    Attribute::safe,   Attribute::lively, Attribute::beautiful,
    Attribute::wealthy, Attribute::boring, Attribute::depressing};

inline std::string_view to_string(Attribute a) {
  switch (a) {
    case Attribute::safe: return "safe";
    case Attribute::lively: return "lively";
    case Attribute::beautiful: return "beautiful";
    case Attribute::wealthy: return "wealthy";
    case Attribute::boring: return "boring";
    case Attribute::depressing: return "depressing";
  }
  return "?";
}

inline int index_of(Attribute a) { return static_cast<int>(a); }

/// Case-insensitive parse; throws UnknownAttribute.
inline Attribute parse_attribute(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (Attribute a : kAllAttributes) {
    if (lower == to_string(a)) return a;
  }
  throw Error(ErrorKind::UnknownAttribute, "unknown attribute '" + std::string(text) + "'");
}

/// The question shown to annotators for each attribute.
inline std::string_view question_for(Attribute a) {
  switch (a) {
    case Attribute::safe: return "Which place looks safer?";
    case Attribute::lively: return "Which place looks livelier?";
    case Attribute::beautiful: return "Which place looks more beautiful?";
    case Attribute::wealthy: return "Which place looks wealthier?";
    case Attribute::boring: return "Which place looks more boring?";
    case Attribute::depressing: return "Which place looks more depressing?";
  }
  return "";
}

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

/// Dense H x W x C image, row-major with interleaved channels, values in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c) : height(h), width(w), channels(c), data(std::size_t(h) * w * c, 0.f) {}

  std::size_t size() const { return data.size(); }
  float& at(int y, int x, int c) { return data[(std::size_t(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const { return data[(std::size_t(y) * width + x) * channels + c]; }

  double mean() const {
    double s = 0.0;
    for (float v : data) s += v;
    return data.empty() ? 0.0 : s / double(data.size());
  }

  bool operator==(const Image&) const = default;
};

struct ImageRecord {
  std::string id;
  std::string city;
  std::string country;
  double lat = 0.0;
  double lng = 0.0;
  std::string path;                  // relative to the manifest location
  std::optional<Image> pixels;
  std::optional<double> planted_score;

  bool operator==(const ImageRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Comparisons
// ---------------------------------------------------------------------------

enum class Outcome { left, right, equal };
enum class Source { human, synthetic };

inline std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::left: return "left";
    case Outcome::right: return "right";
    case Outcome::equal: return "equal";
  }
  return "?";
}

inline std::string_view to_string(Source s) { return s == Source::human ? "human" : "synthetic"; }

inline Outcome parse_outcome(std::string_view s) {
  if (s == "left") return Outcome::left;
  if (s == "right") return Outcome::right;
  if (s == "equal") return Outcome::equal;
  throw Error(ErrorKind::ParseError, "bad outcome '" + std::string(s) + "'");
}

inline Source parse_source(std::string_view s) {
  if (s == "human") return Source::human;
  if (s == "synthetic") return Source::synthetic;
  throw Error(ErrorKind::ParseError, "bad source '" + std::string(s) + "'");
}

struct ComparisonTriplet {
  std::string left_id;
  std::string right_id;
  Attribute attribute = Attribute::safe;
  Outcome outcome = Outcome::left;
  Source source = Source::human;
  std::optional<std::int64_t> timestamp;  // unix milliseconds

  /// +1 when the left image won, -1 when the right image won.
  int label() const {
    if (outcome == Outcome::equal) {
      throw Error(ErrorKind::InvalidArgument, "equal outcome has no binary label");
    }
    return outcome == Outcome::left ? 1 : -1;
  }

  const std::string& winner() const { return outcome == Outcome::right ? right_id : left_id; }
  const std::string& loser() const { return outcome == Outcome::right ? left_id : right_id; }

  bool operator==(const ComparisonTriplet&) const = default;
};

inline ComparisonTriplet make_triplet(std::string left, std::string right, Attribute attr,
                                      Outcome outcome, Source source = Source::human) {
  if (left == right) {
    throw Error(ErrorKind::InvalidArgument, "self-comparison of '" + left + "'");
  }
  ComparisonTriplet t;
  t.left_id = std::move(left);
  t.right_id = std::move(right);
  t.attribute = attr;
  t.outcome = outcome;
  t.source = source;
  return t;
}

/// Keep the non-equal triplets of one attribute, preserving order.
inline std::vector<ComparisonTriplet> decisive_for(const std::vector<ComparisonTriplet>& all,
                                                   std::optional<Attribute> attr) {
  std::vector<ComparisonTriplet> out;
  for (const auto& t : all) {
    if (t.outcome == Outcome::equal) continue;
    if (attr && t.attribute != *attr) continue;
    out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest validation
// ---------------------------------------------------------------------------

struct Violation {
  ErrorKind kind;
  std::size_t index;  // record position in the input list
  std::string detail;
};

class ManifestError : public Error {
 public:
  explicit ManifestError(std::vector<Violation> violations)
      : Error(violations.empty() ? ErrorKind::EmptyManifest : violations.front().kind,
              summarize(violations)),
        violations_(std::move(violations)) {}

  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  static std::string summarize(const std::vector<Violation>& v) {
    std::string s = std::to_string(v.size()) + " manifest violation(s)";
    if (!v.empty()) s += "; first: " + v.front().detail;
    return s;
  }
  std::vector<Violation> violations_;
};

/// Image list with unique ids and an id -> position index.
class Manifest {
 public:
  Manifest() = default;

  const std::vector<ImageRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  std::size_t position(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw Error(ErrorKind::UnknownImageId, "unknown image '" + id + "'");
    return it->second;
  }
  const ImageRecord& at(const std::string& id) const { return records_[position(id)]; }
  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.id);
    return out;
  }

 private:
  friend Manifest validate_manifest(std::vector<ImageRecord> records);
  std::vector<ImageRecord> records_;
  std::map<std::string, std::size_t> index_;
};

/// Collects every violation before failing, so the caller sees the full list.
inline Manifest validate_manifest(std::vector<ImageRecord> records) {
  if (records.empty()) {
    throw ManifestError({{ErrorKind::EmptyManifest, 0, "manifest has no records"}});
  }
  std::vector<Violation> bad;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!index.emplace(r.id, i).second) {
      bad.push_back({ErrorKind::DuplicateId, i, "duplicate id '" + r.id + "'"});
    }
    if (!(r.lat >= -90.0 && r.lat <= 90.0) || !(r.lng >= -180.0 && r.lng <= 180.0)) {
      bad.push_back({ErrorKind::CoordinateOutOfRange, i,
                     "coordinates out of range for '" + r.id + "'"});
    }
    if (r.pixels && (r.pixels->height < 8 || r.pixels->width < 8)) {
      bad.push_back({ErrorKind::ShapeMismatch, i, "image '" + r.id + "' smaller than 8x8"});
    }
  }
  if (!bad.empty()) throw ManifestError(std::move(bad));
  Manifest m;
  m.records_ = std::move(records);
  m.index_ = std::move(index);
  return m;
}

// ---------------------------------------------------------------------------
// Train / validation / test split
// ---------------------------------------------------------------------------

enum class Bucket { train, validation, test };

inline std::string_view to_string(Bucket b) {
  switch (b) {
    case Bucket::train: return "train";
    case Bucket::validation: return "validation";
    case Bucket::test: return "test";
  }
  return "?";
}

struct SplitRatios {
  double train = 0.65;
  double validation = 0.05;
  double test = 0.30;
};

/// Bucket of each triplet, indexed like the input list.
struct SplitAssignment {
  std::vector<Bucket> bucket;

  std::array<std::size_t, 3> sizes() const {
    std::array<std::size_t, 3> s{0, 0, 0};
    for (Bucket b : bucket) ++s[static_cast<int>(b)];
    return s;
  }

  template <typename T>
  std::vector<T> select(const std::vector<T>& items, Bucket which) const {
    std::vector<T> out;
    for (std::size_t i = 0; i < bucket.size(); ++i) {
      if (bucket[i] == which) out.push_back(items[i]);
    }
    return out;
  }

  bool operator==(const SplitAssignment&) const = default;
};

/// Largest-remainder apportionment of n items over the given ratios.
inline std::array<std::size_t, 3> apportion(std::size_t n, const SplitRatios& r) {
  const std::array<double, 3> ratio{r.train, r.validation, r.test};
  std::array<std::size_t, 3> count{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int b = 0; b < 3; ++b) {
    const double exact = ratio[b] * double(n);
    count[b] = static_cast<std::size_t>(std::floor(exact));
    rem[b] = exact - double(count[b]);
    assigned += count[b];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
  for (int k = 0; assigned < n; k = (k + 1) % 3, ++assigned) ++count[order[k]];
  return count;
}

inline SplitAssignment split_triplets(const std::vector<ComparisonTriplet>& triplets,
                                      const SplitRatios& ratios, std::uint64_t seed) {
  const double sum = ratios.train + ratios.validation + ratios.test;
  if (!(ratios.train > 0 && ratios.validation > 0 && ratios.test > 0) ||
      std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorKind::BadRatios, "ratios must be positive and sum to 1");
  }
  for (const auto& t : triplets) {
    if (t.outcome == Outcome::equal) {
      throw Error(ErrorKind::InvalidArgument, "equal-outcome triplets must be filtered before splitting");
    }
  }
  const std::size_t n = triplets.size();
  const auto count = apportion(n, ratios);

  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  SplitAssignment out;
  out.bucket.assign(n, Bucket::train);
  std::size_t k = 0;
  for (int b = 0; b < 3; ++b) {
    for (std::size_t c = 0; c < count[b]; ++c) out.bucket[perm[k++]] = static_cast<Bucket>(b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scores
// ---------------------------------------------------------------------------

struct ScoreEntry {
  double mu = 0.0;
  double sigma = 1.0;
  std::optional<double> scaled;  // empty when min-max scaling is undefined

  bool operator==(const ScoreEntry&) const = default;
};

struct ScoreTable {
  Attribute attribute = Attribute::safe;
  std::map<std::string, ScoreEntry> entries;

  bool operator==(const ScoreTable&) const = default;

  /// Min-max scale mu into [0,10]; leaves `scaled` empty for fewer than two distinct values.
  void rescale() {
    if (entries.empty()) return;
    double lo = entries.begin()->second.mu, hi = lo;
    for (const auto& [id, e] : entries) {
      lo = std::min(lo, e.mu);
      hi = std::max(hi, e.mu);
    }
    for (auto& [id, e] : entries) {
      if (hi > lo) {
        e.scaled = 10.0 * (e.mu - lo) / (hi - lo);
      } else {
        e.scaled.reset();
      }
    }
  }
};

}  // namespace streetrank
