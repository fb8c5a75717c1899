#include <gtest/gtest.h>

#include <fstream>

#include "streetrank/store.hpp"
#include "support/tempdir.hpp"

using namespace streetrank;
using namespace streetrank::store;

namespace {

ComparisonTriplet vote(int i, Outcome o = Outcome::left) {
  return make_triplet("img" + std::to_string(i % 4), "img" + std::to_string((i + 1) % 4), Attribute::safe, o,
                      Source::human);
}

const std::vector<std::string> kIds{"img0", "img1", "img2", "img3"};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(VoteLog, SequentialSeqsAndChecksums) {
  TempDir dir;
  VoteLog log(dir / "votes.log");
  EXPECT_EQ(log.append(vote(0), "u1"), 1u);
  EXPECT_EQ(log.append(vote(1)), 2u);
  std::ifstream in(dir / "votes.log");
  std::string line;
  std::getline(in, line);
  ASSERT_EQ(line.substr(0, 2), "1,");
  const std::string crc = line.substr(2, 8);
  const std::string body = line.substr(11);
  char expect[9];
  std::snprintf(expect, sizeof expect, "%08x", checksum(body));
  EXPECT_EQ(crc, expect);
  EXPECT_EQ(json::parse(body).at("user"), "u1");
}

TEST(VoteLog, ReopenResumes) {
  TempDir dir;
  {
    VoteLog log(dir / "v.log");
    for (int i = 0; i < 5; ++i) log.append(vote(i));
  }
  VoteLog again(dir / "v.log");
  EXPECT_EQ(again.size(), 5u);
  EXPECT_EQ(again.append(vote(9)), 6u);
  EXPECT_EQ(read_log(dir / "v.log").records.size(), 6u);
}

TEST(VoteLog, CorruptLineNamesLineNumber) {
  TempDir dir;
  {
    VoteLog log(dir / "v.log");
    for (int i = 0; i < 3; ++i) log.append(vote(i));
  }
  std::string text = slurp(dir / "v.log");
  const auto second = text.find('\n') + 1;
  text[second + 3] = text[second + 3] == '0' ? '1' : '0';  // inside the checksum
  std::ofstream(dir / "v.log", std::ios::binary) << text;
  try {
    read_log(dir / "v.log");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CorruptLog);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(VoteLog(dir / "v.log"), Error);
}

TEST(VoteLog, SequenceGapIsCorrupt) {
  TempDir dir;
  std::ofstream(dir / "v.log") << format_record({1, vote(0), {}}) << format_record({3, vote(1), {}});
  try {
    read_log(dir / "v.log");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CorruptLog);
  }
}

TEST(VoteLog, TornTailIsDroppedAndTruncated) {
  TempDir dir;
  {
    VoteLog log(dir / "v.log");
    log.append(vote(0));
    log.append(vote(1));
  }
  const std::string full = slurp(dir / "v.log");
  const std::string partial = format_record({3, vote(2), {}});
  std::ofstream(dir / "v.log", std::ios::app | std::ios::binary) << partial.substr(0, partial.size() / 2);
  const auto c = read_log(dir / "v.log");
  EXPECT_TRUE(c.torn_tail);
  EXPECT_EQ(c.records.size(), 2u);
  EXPECT_EQ(c.valid_bytes, full.size());
  {
    VoteLog log(dir / "v.log");
    EXPECT_EQ(log.append(vote(3)), 3u);
  }
  const auto after = read_log(dir / "v.log");
  EXPECT_FALSE(after.torn_tail);
  ASSERT_EQ(after.records.size(), 3u);
  EXPECT_EQ(after.records[2].triplet, vote(3));
}

TEST(VoteLog, RecordRoundTrip) {
  VoteRecord r{7, vote(2, Outcome::equal), "abc"};
  r.triplet.timestamp = 1700000000;
  std::string line = format_record(r);
  ASSERT_EQ(line.back(), '\n');
  line.pop_back();
  const auto back = parse_record(line);
  ASSERT_TRUE(back);
  EXPECT_EQ(back->seq, 7u);
  EXPECT_EQ(back->triplet, r.triplet);
  EXPECT_EQ(back->user, r.user);
  EXPECT_FALSE(parse_record("garbage"));
  EXPECT_FALSE(parse_record("1,zzzzzzzz,{}"));
}

TEST(Replay, MatchesDirectRatingAndHonoursPrefix) {
  TempDir dir;
  std::vector<ComparisonTriplet> ts;
  {
    VoteLog log(dir / "v.log");
    for (int i = 0; i < 20; ++i) {
      auto t = vote(i * 7, i % 3 ? Outcome::left : Outcome::right);
      if (i == 5) t.attribute = Attribute::lively;
      if (i == 6) t.outcome = Outcome::equal;
      log.append(t);
      ts.push_back(t);
    }
  }
  trueskill::TrueSkillConfig cfg;
  EXPECT_EQ(replay(dir / "v.log", Attribute::safe, cfg, kIds), trueskill::rate_all(ts, cfg, Attribute::safe, kIds));
  const std::vector<ComparisonTriplet> prefix(ts.begin(), ts.begin() + 8);
  EXPECT_EQ(replay(dir / "v.log", Attribute::safe, cfg, kIds, 8),
            trueskill::rate_all(prefix, cfg, Attribute::safe, kIds));
  EXPECT_EQ(read_log(dir / "v.log", 8).records.size(), 8u);
}

TEST(Replay, MissingLogIsEmpty) {
  TempDir dir;
  const auto c = read_log(dir / "none.log");
  EXPECT_TRUE(c.records.empty());
  EXPECT_FALSE(c.torn_tail);
}
