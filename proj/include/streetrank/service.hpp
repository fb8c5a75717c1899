#pragma once

// Vote-collection service. VoteService holds the state and answers requests
// as (status, JSON body) pairs, so it can be driven directly or mounted on an
// HTTP server. One mutex orders every mutation: log append, then rating
// update, then the response.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "streetrank/core.hpp"
#include "streetrank/io.hpp"
#include "streetrank/store.hpp"
#include "streetrank/trueskill.hpp"

namespace streetrank::service {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct ServiceOptions {
  std::chrono::seconds token_ttl{600};
  trueskill::TrueSkillConfig trueskill{};
  fs::path image_root;                   // manifest image paths are relative to this
  std::optional<fs::path> static_dir;    // optional browser client
};

struct Response {
  int status = 200;
  json body = json::object();
};

inline Response error_response(int status, const std::string& message) {
  return {status, {{"error", message}}};
}

/// 128 random bits as 32 hex characters, read from the OS entropy source.
inline std::string new_token(std::random_device& rd) {
  std::string out;
  char buf[9];
  for (int i = 0; i < 4; ++i) {
    std::snprintf(buf, sizeof buf, "%08x", unsigned(rd()));
    out += buf;
  }
  return out;
}

class VoteService {
 public:
  /// Replays any existing log before accepting votes. Without a manifest the
  /// service answers pair requests with 503.
  VoteService(std::optional<Manifest> manifest, const fs::path& log_path, ServiceOptions opt = {})
      : manifest_(std::move(manifest)), opt_(std::move(opt)), log_(log_path), clock_([] { return Clock::now(); }) {
    opt_.trueskill.validate();
    const std::vector<std::string> ids = manifest_ ? manifest_->ids() : std::vector<std::string>{};
    for (Attribute a : kAllAttributes) states_.emplace(a, trueskill::RatingState(a, ids, opt_.trueskill));
    for (const auto& r : log_.records()) account(r);
  }

  /// Replaces the clock used for token expiry.
  void set_clock(std::function<Clock::time_point()> clock) {
    std::lock_guard lock(mu_);
    clock_ = std::move(clock);
  }

  Response get_pair(const std::string& attribute_text) {
    auto attr = try_attribute(attribute_text);
    if (!attr) return error_response(400, "unknown attribute '" + attribute_text + "'");
    if (!manifest_ || manifest_->size() < 2) return error_response(503, "no manifest loaded");

    std::lock_guard lock(mu_);
    std::uniform_int_distribution<std::size_t> pick(0, manifest_->size() - 1);
    const std::size_t i = pick(rng_);
    std::size_t j = pick(rng_);
    while (j == i) j = pick(rng_);
    const auto& ids = manifest_->ids();
    std::string token = new_token(entropy_);
    while (pending_.count(token) || used_.count(token)) token = new_token(entropy_);
    if (++issued_ % 1024 == 0) prune_expired();
    pending_[token] = {ids[i], ids[j], *attr, clock_()};
    return {200,
            {{"pair_token", token},
             {"attribute", to_string(*attr)},
             {"question", question_for(*attr)},
             {"left", {{"id", ids[i]}, {"url", "/img/" + ids[i]}}},
             {"right", {{"id", ids[j]}, {"url", "/img/" + ids[j]}}}}};
  }

  /// A repeated token with the same choice is answered idempotently with the
  /// original seq; a different choice is a conflict.
  Response post_vote(const std::string& token, const std::string& choice_text,
                     std::optional<std::string> user = std::nullopt) {
    Outcome choice;
    try {
      choice = parse_outcome(choice_text);
    } catch (const Error&) {
      return error_response(400, "choice must be left, right or equal");
    }

    std::lock_guard lock(mu_);
    if (auto u = used_.find(token); u != used_.end()) {
      if (u->second.choice != choice) return error_response(409, "token already used");
      return {200, {{"seq", u->second.seq}, {"accepted", false}}};
    }
    auto p = pending_.find(token);
    if (p == pending_.end()) return error_response(404, "unknown token");
    if (clock_() - p->second.issued > opt_.token_ttl) {
      pending_.erase(p);
      return error_response(410, "token expired");
    }

    ComparisonTriplet t = make_triplet(p->second.left, p->second.right, p->second.attribute, choice, Source::human);
    t.timestamp = std::chrono::duration_cast<std::chrono::seconds>(
                      std::chrono::system_clock::now().time_since_epoch())
                      .count();
    const std::uint64_t seq = log_.append(t, user);
    account(log_.records().back());
    used_[token] = {seq, choice};
    pending_.erase(p);
    return {200, {{"seq", seq}, {"accepted", true}}};
  }

  Response rankings(const std::string& attribute_text, std::optional<std::size_t> limit = std::nullopt) {
    auto attr = try_attribute(attribute_text);
    if (!attr) return error_response(400, "unknown attribute '" + attribute_text + "'");
    const ScoreTable table = scores(*attr);
    std::vector<std::pair<std::string, ScoreEntry>> rows(table.entries.begin(), table.entries.end());
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second.mu > b.second.mu; });
    if (limit && rows.size() > *limit) rows.resize(*limit);
    json list = json::array();
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto& [id, e] = rows[k];
      list.push_back({{"id", id},
                      {"mu", e.mu},
                      {"sigma", e.sigma},
                      {"scaled", e.scaled ? json(*e.scaled) : json(nullptr)},
                      {"rank", k + 1}});
    }
    return {200, {{"attribute", to_string(*attr)}, {"rankings", std::move(list)}}};
  }

  Response stats() {
    std::lock_guard lock(mu_);
    json per_attr = json::object();
    for (Attribute a : kAllAttributes) per_attr[std::string(to_string(a))] = per_attribute_[a];
    json per_user = json::object();
    std::map<std::uint64_t, std::uint64_t> histogram;  // votes contributed -> users
    for (const auto& [u, n] : per_user_) {
      per_user[u] = n;
      ++histogram[n];
    }
    json hist = json::array();
    for (const auto& [votes, users] : histogram) hist.push_back({{"votes", votes}, {"users", users}});
    return {200,
            {{"votes_total", log_.size()},
             {"votes_per_attribute", per_attr},
             {"votes_per_user", per_user},
             {"user_histogram", hist},
             {"images", manifest_ ? manifest_->size() : 0}}};
  }

  /// PNG bytes for a manifest image.
  std::optional<std::string> image_bytes(const std::string& id) const {
    if (!manifest_ || !manifest_->contains(id)) return std::nullopt;
    const fs::path p = opt_.image_root / manifest_->at(id).path;
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  ScoreTable scores(Attribute a) {
    std::lock_guard lock(mu_);
    return states_.at(a).table();
  }

  std::uint64_t vote_count() {
    std::lock_guard lock(mu_);
    return log_.size();
  }

  std::vector<std::string> image_ids() const { return manifest_ ? manifest_->ids() : std::vector<std::string>{}; }
  const fs::path& log_path() const { return log_.path(); }
  const ServiceOptions& options() const { return opt_; }

 private:
  struct Pending {
    std::string left, right;
    Attribute attribute;
    Clock::time_point issued;
  };
  struct Used {
    std::uint64_t seq;
    Outcome choice;
  };

  static std::optional<Attribute> try_attribute(const std::string& text) {
    try {
      return parse_attribute(text);
    } catch (const Error&) {
      return std::nullopt;
    }
  }

  void account(const store::VoteRecord& r) {
    states_.at(r.triplet.attribute).apply(r.triplet);
    ++per_attribute_[r.triplet.attribute];
    if (r.user) ++per_user_[*r.user];
  }

  void prune_expired() {
    const auto now = clock_();
    std::erase_if(pending_, [&](const auto& kv) { return now - kv.second.issued > opt_.token_ttl; });
  }

  std::optional<Manifest> manifest_;
  ServiceOptions opt_;
  store::VoteLog log_;
  std::map<Attribute, trueskill::RatingState> states_;
  std::map<Attribute, std::uint64_t> per_attribute_;
  std::map<std::string, std::uint64_t> per_user_;
  std::map<std::string, Pending> pending_;
  std::map<std::string, Used> used_;
  std::random_device entropy_;
  std::mt19937_64 rng_{std::random_device{}()};
  std::uint64_t issued_ = 0;
  std::function<Clock::time_point()> clock_;
  std::mutex mu_;
};

// ---------------------------------------------------------------------------
// HTTP binding
// ---------------------------------------------------------------------------

inline void reply(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

/// Anonymous user id from the `uid` cookie, if present.
inline std::optional<std::string> user_cookie(const httplib::Request& req) {
  const std::string cookies = req.get_header_value("Cookie");
  std::size_t pos = 0;
  while (pos < cookies.size()) {
    std::size_t end = cookies.find(';', pos);
    if (end == std::string::npos) end = cookies.size();
    std::string kv = cookies.substr(pos, end - pos);
    kv.erase(0, kv.find_first_not_of(' '));
    if (kv.rfind("uid=", 0) == 0 && kv.size() > 4) return kv.substr(4);
    pos = end + 1;
  }
  return std::nullopt;
}

inline void mount(httplib::Server& server, VoteService& svc) {
  server.Get("/api/pair", [&svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.get_pair(req.get_param_value("attribute")));
    if (!user_cookie(req)) {
      std::random_device rd;
      res.set_header("Set-Cookie", "uid=" + new_token(rd) + "; Path=/; SameSite=Lax");
    }
  });
  server.Post("/api/vote", [&svc](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      return reply(res, error_response(400, "body is not JSON"));
    }
    if (!body.contains("pair_token") || !body["pair_token"].is_string() || !body.contains("choice") ||
        !body["choice"].is_string()) {
      return reply(res, error_response(400, "expected {pair_token, choice}"));
    }
    reply(res, svc.post_vote(body["pair_token"].get<std::string>(), body["choice"].get<std::string>(),
                             user_cookie(req)));
  });
  server.Get("/api/rankings", [&svc](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::size_t> limit;
    if (req.has_param("limit")) {
      try {
        limit = std::stoul(req.get_param_value("limit"));
      } catch (const std::exception&) {
        return reply(res, error_response(400, "limit must be a non-negative integer"));
      }
    }
    reply(res, svc.rankings(req.get_param_value("attribute"), limit));
  });
  server.Get("/api/stats", [&svc](const httplib::Request&, httplib::Response& res) { reply(res, svc.stats()); });
  server.Get(R"(/img/([A-Za-z0-9_.\-]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    auto bytes = svc.image_bytes(req.matches[1]);
    if (!bytes) return reply(res, error_response(404, "unknown image"));
    res.set_content(*bytes, "image/png");
  });
  if (svc.options().static_dir) server.set_mount_point("/", svc.options().static_dir->string());
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    }
    reply(res, error_response(500, what));
  });
}

}  // namespace streetrank::service
