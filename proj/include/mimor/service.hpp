#pragma once

/// \file service.hpp
/// \brief JSON/HTTP facade over a Mimor instance.
///
/// Endpoints:
///   GET  /health
///   GET  /search?q=&user=&mode=&k=&qid=
///   POST /feedback   {user, qid, doc, judgment, rsvs_token}
///   GET  /model/{user}
///   GET  /weights
///   GET  /clusters/{doc}
///
/// Searches share a reader lock; feedback takes the writer lock, so a search
/// racing a feedback write sees the state before the update.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "mimor/error.hpp"
#include "mimor/ranker.hpp"
#include "mimor/usermodel.hpp"

namespace mimor {

enum class ApiCode { bad_request, not_found, conflict, internal };

inline std::string_view to_string(ApiCode c) {
  switch (c) {
    case ApiCode::bad_request: return "bad_request";
    case ApiCode::not_found: return "not_found";
    case ApiCode::conflict: return "conflict";
    case ApiCode::internal: return "internal";
  }
  return "internal";
}

inline int http_status(ApiCode c) {
  switch (c) {
    case ApiCode::bad_request: return 400;
    case ApiCode::not_found: return 404;
    case ApiCode::conflict: return 409;
    case ApiCode::internal: return 500;
  }
  return 500;
}

inline ApiCode api_code(Errc e) {
  switch (e) {
    case Errc::invalid_argument:
    case Errc::parse:
    case Errc::dimension: return ApiCode::bad_request;
    case Errc::not_found: return ApiCode::not_found;
    case Errc::duplicate: return ApiCode::conflict;
    case Errc::io: return ApiCode::internal;
  }
  return ApiCode::internal;
}

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

inline ApiResponse api_error(ApiCode code, const std::string& message) {
  return {http_status(code), {{"error", {{"code", std::string(to_string(code))}, {"message", message}}}}};
}

/// GET /weights payload; `export-weights` writes the same document.
inline nlohmann::json weights_payload(const ModelStore& store) {
  std::vector<std::string> engines;
  for (auto e : store.registry().engines) engines.emplace_back(to_string(e));
  const auto& clusters = store.cluster_model();
  return {{"engines", engines},
          {"clusters", clusters ? clusters->names : std::vector<std::string>{"all"}},
          {"k", store.registry().clusters},
          {"public_weights", to_json(store.public_model().public_weights)},
          {"total_feedback", store.public_model().total_feedback},
          {"learning_rate", store.registry().learning_rate},
          {"saturation", store.registry().saturation}};
}

inline nlohmann::json model_payload(const UserModel& u, const Registry& r) {
  return {{"user", u.user_id},
          {"private_weights", to_json(u.private_weights)},
          {"n", u.feedback_count},
          {"p", u.p},
          {"saturation", r.saturation}};
}

struct ServiceOptions {
  std::chrono::seconds snapshot_ttl{3600};
  std::size_t default_k = 10;
  std::string default_user = "anonymous";
};

/// Per-query RSV snapshots handed out as opaque tokens, so that feedback
/// learns from the numbers the client was shown.
class SnapshotCache {
 public:
  struct Snapshot {
    std::chrono::steady_clock::time_point created;
    std::string query_id;
    std::map<std::string, std::vector<double>> rsvs;
  };

  explicit SnapshotCache(std::chrono::seconds ttl) : ttl_(ttl), rng_(std::random_device{}()) {}

  std::string put(Snapshot snapshot) {
    std::lock_guard lock(mutex_);
    purge(snapshot.created);
    std::string token;
    do {
      token = hex(rng_()) + hex(rng_());
    } while (entries_.count(token));
    entries_.emplace(token, std::move(snapshot));
    return token;
  }

  std::optional<Snapshot> get(const std::string& token) {
    std::lock_guard lock(mutex_);
    purge(std::chrono::steady_clock::now());
    auto it = entries_.find(token);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

 private:
  static std::string hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 15];
    return s;
  }

  void purge(std::chrono::steady_clock::time_point now) {
    for (auto it = entries_.begin(); it != entries_.end();)
      it = now - it->second.created >= ttl_ ? entries_.erase(it) : std::next(it);
  }

  std::chrono::seconds ttl_;
  mutable std::mutex mutex_;
  std::mt19937_64 rng_;
  std::map<std::string, Snapshot> entries_;
};

class Service {
 public:
  explicit Service(Mimor mimor, ServiceOptions options = {})
      : mimor_(std::move(mimor)), options_(std::move(options)), snapshots_(options_.snapshot_ttl) {}

  ApiResponse health() const {
    std::shared_lock lock(mutex_);
    return {200,
            {{"status", "ok"},
             {"documents", mimor_.corpus().size()},
             {"users", mimor_.store().users().size()}}};
  }

  ApiResponse search(const std::string& q, const std::string& user_param,
                     const std::string& mode_param, const std::string& k_param,
                     const std::string& qid_param = {}) {
    return guarded([&]() -> ApiResponse {
      const std::string user = user_param.empty() ? options_.default_user : user_param;
      const FusionMode mode = mode_param.empty() ? mimor_.registry().mode : parse_mode(mode_param);
      std::size_t k = options_.default_k;
      if (!k_param.empty()) {
        std::size_t used = 0;
        long long parsed = 0;
        try {
          parsed = std::stoll(k_param, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != k_param.size() || parsed < 1)
          fail(Errc::invalid_argument, "k must be a positive integer");
        k = static_cast<std::size_t>(parsed);
      }
      if (tokenize(q).empty()) fail(Errc::invalid_argument, "empty query");
      {
        // First contact creates the user's private model.
        std::unique_lock lock(mutex_);
        mimor_.store().ensure_user(user);
      }
      std::shared_lock lock(mutex_);
      const std::string qid = qid_param.empty() ? "q-" + std::to_string(++query_counter_) : qid_param;
      const auto run = mimor_.retrieve(q, qid);
      const auto& u = *mimor_.store().find_user(user);
      const auto ranked = rank_candidates(run.candidates, mode, mimor_.weights_for(u), k);

      SnapshotCache::Snapshot snap{std::chrono::steady_clock::now(), qid, {}};
      for (const auto& c : run.candidates) snap.rsvs.emplace(c.doc_id, c.rsvs);
      const auto token = snapshots_.put(std::move(snap));

      std::vector<std::string> engines;
      for (auto e : mimor_.registry().engines) engines.emplace_back(to_string(e));
      nlohmann::json results = nlohmann::json::array();
      for (std::size_t i = 0; i < ranked.size(); ++i)
        results.push_back({{"rank", i + 1},
                           {"doc", ranked[i].doc_id},
                           {"score", ranked[i].score},
                           {"rsvs", ranked[i].rsvs},
                           {"membership", ranked[i].membership.values}});
      const auto& clusters = mimor_.store().cluster_model();
      return {200,
              {{"query", q},
               {"qid", qid},
               {"user", user},
               {"mode", std::string(to_string(mode))},
               {"k", k},
               {"rsvs_token", token},
               {"engines", engines},
               {"clusters", clusters ? clusters->names : std::vector<std::string>{"all"}},
               {"p", u.p},
               {"n", u.feedback_count},
               {"weights",
                {{"public", to_json(mimor_.store().public_model().public_weights)},
                 {"private", to_json(u.private_weights)}}},
               {"candidates", run.candidates.size()},
               {"results", results}}};
    });
  }

  ApiResponse feedback(const std::string& body_text) {
    return guarded([&]() -> ApiResponse {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(body_text);
      } catch (const nlohmann::json::parse_error& e) {
        fail(Errc::parse, std::string("malformed JSON body: ") + e.what());
      }
      const auto field = [&](const char* name, bool required) -> std::string {
        if (!body.is_object() || !body.contains(name) || body[name].is_null()) {
          if (required) fail(Errc::invalid_argument, std::string("missing field '") + name + "'");
          return {};
        }
        if (!body[name].is_string())
          fail(Errc::invalid_argument, std::string("field '") + name + "' must be a string");
        return body[name].get<std::string>();
      };
      const auto user = field("user", true);
      const auto doc = field("doc", true);
      const auto judgment = parse_judgment(field("judgment", true));
      const auto token = field("rsvs_token", true);
      auto qid = field("qid", false);

      const auto snap = snapshots_.get(token);
      if (!snap) fail(Errc::not_found, "rsvs_token unknown or expired; re-run the query");
      if (qid.empty()) qid = snap->query_id;
      std::vector<double> rsvs(mimor_.registry().engines.size(), 0.0);
      if (auto it = snap->rsvs.find(doc); it != snap->rsvs.end()) rsvs = it->second;

      const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count();
      std::unique_lock lock(mutex_);
      const auto event = mimor_.feedback(user, qid, doc, judgment, rsvs, now);
      const auto& u = *mimor_.store().find_user(user);
      return {200,
              {{"ok", true},
               {"event", to_json(event)},
               {"n", u.feedback_count},
               {"p", u.p},
               {"total_feedback", mimor_.store().public_model().total_feedback}}};
    });
  }

  ApiResponse model(const std::string& user) const {
    return guarded([&]() -> ApiResponse {
      std::shared_lock lock(mutex_);
      const auto* u = mimor_.store().find_user(user);
      if (!u) fail(Errc::not_found, "unknown user '" + user + "'");
      return {200, model_payload(*u, mimor_.registry())};
    });
  }

  ApiResponse weights() const {
    return guarded([&]() -> ApiResponse {
      std::shared_lock lock(mutex_);
      return {200, weights_payload(mimor_.store())};
    });
  }

  ApiResponse clusters(const std::string& doc) const {
    return guarded([&]() -> ApiResponse {
      std::shared_lock lock(mutex_);
      const auto pos = mimor_.corpus().position(doc);
      const auto& model = mimor_.store().cluster_model();
      nlohmann::json membership = mimor_.corpus().features(pos) || !model
                                      ? nlohmann::json(mimor_.membership_of(pos).values)
                                      : nlohmann::json(nullptr);
      return {200,
              {{"doc", doc},
               {"clusters", model ? model->names : std::vector<std::string>{"all"}},
               {"membership", membership}}};
    });
  }

  /// Registers every endpoint on `server`.
  void bind(httplib::Server& server) {
    const auto send = [](httplib::Response& res, const ApiResponse& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    const auto param = [](const httplib::Request& req, const char* name) {
      return req.has_param(name) ? req.get_param_value(name) : std::string{};
    };
    server.Get("/health", [=, this](const httplib::Request&, httplib::Response& res) {
      send(res, health());
    });
    server.Get("/search", [=, this](const httplib::Request& req, httplib::Response& res) {
      send(res, search(param(req, "q"), param(req, "user"), param(req, "mode"), param(req, "k"),
                       param(req, "qid")));
    });
    server.Post("/feedback", [=, this](const httplib::Request& req, httplib::Response& res) {
      send(res, feedback(req.body));
    });
    server.Get(R"(/model/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
      send(res, model(req.matches[1]));
    });
    server.Get("/weights", [=, this](const httplib::Request&, httplib::Response& res) {
      send(res, weights());
    });
    server.Get(R"(/clusters/([^/]+))",
               [=, this](const httplib::Request& req, httplib::Response& res) {
                 send(res, clusters(req.matches[1]));
               });
    server.set_error_handler([=](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return;
      const auto code = res.status == 404 ? ApiCode::not_found
                        : res.status >= 500 ? ApiCode::internal
                                            : ApiCode::bad_request;
      const auto r = api_error(code, "no route for " + req.method + " " + req.path);
      res.set_content(r.body.dump(), "application/json");
    });
  }

  const Mimor& mimor() const { return mimor_; }
  std::size_t snapshot_count() const { return snapshots_.size(); }

 private:
  template <class F>
  static ApiResponse guarded(F&& f) {
    try {
      return f();
    } catch (const Error& e) {
      return api_error(api_code(e.code()), e.what());
    } catch (const std::exception& e) {
      return api_error(ApiCode::internal, e.what());
    }
  }

  Mimor mimor_;
  ServiceOptions options_;
  mutable std::shared_mutex mutex_;
  SnapshotCache snapshots_;
  std::atomic<std::uint64_t> query_counter_{0};
};

}  // namespace mimor
