#pragma once

// Append-only vote log. One record per line:
//
//   <seq>,<crc32 hex>,<triplet json>
//
// The checksum covers the JSON text. Each append is flushed with fsync before
// it returns, so an acknowledged vote survives a crash. A final line without
// its newline is a torn write and is dropped.

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "streetrank/core.hpp"
#include "streetrank/io.hpp"
#include "streetrank/trueskill.hpp"

namespace streetrank::store {

namespace fs = std::filesystem;
using nlohmann::json;

struct VoteRecord {
  std::uint64_t seq = 0;
  ComparisonTriplet triplet;
  std::optional<std::string> user;
};

inline std::uint32_t checksum(std::string_view text) {
  return std::uint32_t(crc32(0L, reinterpret_cast<const Bytef*>(text.data()), uInt(text.size())));
}

inline std::string format_record(const VoteRecord& r) {
  json j = io::to_json(r.triplet);
  if (r.user) j["user"] = *r.user;
  const std::string body = j.dump();
  char crc[16];
  std::snprintf(crc, sizeof crc, "%08x", checksum(body));
  return std::to_string(r.seq) + "," + crc + "," + body + "\n";
}

/// Parses one line (without its newline); nullopt when malformed or the
/// checksum does not match.
inline std::optional<VoteRecord> parse_record(const std::string& line) {
  const auto c1 = line.find(',');
  if (c1 == std::string::npos || c1 == 0) return std::nullopt;
  const auto c2 = line.find(',', c1 + 1);
  if (c2 == std::string::npos || c2 - c1 - 1 != 8) return std::nullopt;
  const std::string seq_text = line.substr(0, c1);
  if (seq_text.find_first_not_of("0123456789") != std::string::npos) return std::nullopt;
  const std::string body = line.substr(c2 + 1);
  std::uint32_t stored = 0;
  if (std::sscanf(line.c_str() + c1 + 1, "%8x", &stored) != 1 || stored != checksum(body)) return std::nullopt;
  try {
    const json j = json::parse(body);
    VoteRecord r;
    r.seq = std::stoull(seq_text);
    r.triplet = io::triplet_from_json(j);
    if (j.contains("user") && j["user"].is_string()) r.user = j["user"].get<std::string>();
    return r;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

struct LogContents {
  std::vector<VoteRecord> records;
  std::uint64_t valid_bytes = 0;  // length of the intact prefix
  bool torn_tail = false;
};

/// Reads at most `limit` records. A bad complete line, or a sequence gap,
/// throws CorruptLog naming the 1-based line number.
inline LogContents read_log(const fs::path& path, std::optional<std::size_t> limit = std::nullopt) {
  LogContents out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::string line;
  std::size_t line_no = 0;
  while (!limit || out.records.size() < *limit) {
    if (!std::getline(in, line)) break;
    ++line_no;
    if (in.eof()) {  // no trailing newline
      out.torn_tail = !line.empty();
      break;
    }
    auto rec = parse_record(line);
    if (!rec) throw Error(ErrorKind::CorruptLog, "corrupt vote log line " + std::to_string(line_no));
    if (rec->seq != out.records.size() + 1) {
      throw Error(ErrorKind::CorruptLog, "vote log line " + std::to_string(line_no) + " has seq " +
                                             std::to_string(rec->seq) + ", expected " +
                                             std::to_string(out.records.size() + 1));
    }
    out.valid_bytes += line.size() + 1;
    out.records.push_back(std::move(*rec));
  }
  return out;
}

/// Folds the first `limit` records (all by default) of one attribute through
/// TrueSkill, starting from the prior for every id.
inline ScoreTable replay(const fs::path& path, Attribute attribute, const trueskill::TrueSkillConfig& cfg,
                         const std::vector<std::string>& ids, std::optional<std::size_t> limit = std::nullopt) {
  trueskill::RatingState state(attribute, ids, cfg);
  for (const auto& r : read_log(path, limit).records) {
    if (r.triplet.attribute == attribute) state.apply(r.triplet);
  }
  return state.table();
}

class VoteLog {
 public:
  /// Opens or creates the log, validates it and drops a torn final line.
  explicit VoteLog(const fs::path& path) : path_(path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    LogContents existing = read_log(path);
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) fail("cannot open vote log");
    if (existing.torn_tail && ::ftruncate(fd_, off_t(existing.valid_bytes)) != 0) fail("cannot truncate torn line");
    records_ = std::move(existing.records);
  }
  VoteLog(const VoteLog&) = delete;
  VoteLog& operator=(const VoteLog&) = delete;
  ~VoteLog() {
    if (fd_ >= 0) ::close(fd_);
  }

  /// Durably appends one vote and returns its sequence number.
  std::uint64_t append(const ComparisonTriplet& t, std::optional<std::string> user = std::nullopt) {
    VoteRecord r{records_.size() + 1, t, std::move(user)};
    const std::string line = format_record(r);
    std::size_t done = 0;
    while (done < line.size()) {
      const ssize_t n = ::write(fd_, line.data() + done, line.size() - done);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) fail("vote log write failed");
      done += std::size_t(n);
    }
    if (::fsync(fd_) != 0) fail("vote log fsync failed");
    records_.push_back(std::move(r));
    return records_.back().seq;
  }

  std::uint64_t size() const { return records_.size(); }
  std::uint64_t next_seq() const { return records_.size() + 1; }
  const std::vector<VoteRecord>& records() const { return records_; }
  const fs::path& path() const { return path_; }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::StorageFailure, what + " '" + path_.string() + "': " + std::strerror(errno));
  }

  fs::path path_;
  int fd_ = -1;
  std::vector<VoteRecord> records_;
};

}  // namespace streetrank::store
