#pragma once

/// \file usermodel.hpp
/// \brief Private per-user models, the shared public model, the feedback log
/// and their JSON model store.
///
/// Store layout:
///   registry.json       engine order, K, T, learning rate, default mode
///   clusters.json       fitted cluster model (absent when K = 1)
///   public.json         public matrix and total feedback count
///   users/<id>.json     private matrix, n and p for one user
///   feedback.log        append-only JSONL of every applied event

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mimor/clustering.hpp"
#include "mimor/corpus.hpp"
#include "mimor/engines.hpp"
#include "mimor/error.hpp"
#include "mimor/fusion.hpp"

namespace mimor {

inline constexpr std::uint64_t kDefaultSaturation = 50;

/// p = min(1, n / T)
inline double blend_parameter(std::uint64_t n, std::uint64_t saturation = kDefaultSaturation) {
  if (saturation < 1) fail(Errc::invalid_argument, "saturation T must be at least 1");
  if (n >= saturation) return 1.0;
  return static_cast<double>(n) / static_cast<double>(saturation);
}

struct Registry {
  EngineRegistry engines = default_registry();
  std::size_t clusters = 1;
  std::uint64_t saturation = kDefaultSaturation;
  double learning_rate = 0.05;
  double weight_init = 0.5;
  FusionMode mode = FusionMode::flat;

  void validate() const {
    if (engines.empty()) fail(Errc::invalid_argument, "engine registry is empty");
    for (std::size_t i = 0; i < engines.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (engines[i] == engines[j])
          fail(Errc::invalid_argument, "engine listed twice in registry");
    if (clusters < 1) fail(Errc::invalid_argument, "cluster count must be at least 1");
    if (saturation < 1) fail(Errc::invalid_argument, "saturation T must be at least 1");
    FusionConfig{learning_rate, weight_init, mode}.validate();
  }

  WeightMatrix fresh_matrix() const { return WeightMatrix(engines.size(), clusters, weight_init); }

  bool operator==(const Registry&) const = default;
};

struct FeedbackEvent {
  std::string user_id;
  std::string query_id;
  std::string doc_id;
  Judgment judgment = Judgment::relevant;
  std::int64_t timestamp = 0;
  // Snapshot the update is computed from: normalized RSV per registry engine
  // and the judged document's membership vector.
  std::vector<double> rsvs;
  MembershipVector membership;

  bool operator==(const FeedbackEvent&) const = default;
};

struct UserModel {
  std::string user_id;
  WeightMatrix private_weights;
  std::uint64_t feedback_count = 0;
  double p = 0.0;

  bool operator==(const UserModel&) const = default;
};

struct PublicModel {
  WeightMatrix public_weights;
  std::uint64_t total_feedback = 0;

  bool operator==(const PublicModel&) const = default;
};

// ---------------------------------------------------------------------------
// JSON forms

inline nlohmann::json to_json(const Registry& r) {
  std::vector<std::string> engines;
  for (auto e : r.engines) engines.emplace_back(to_string(e));
  return {{"engines", engines},
          {"clusters", r.clusters},
          {"saturation", r.saturation},
          {"learning_rate", r.learning_rate},
          {"weight_init", r.weight_init},
          {"mode", std::string(to_string(r.mode))}};
}

inline Registry registry_from_json(const nlohmann::json& j) {
  Registry r;
  try {
    r.engines.clear();
    for (const auto& e : j.at("engines")) r.engines.push_back(parse_engine(e.get<std::string>()));
    r.clusters = j.at("clusters").get<std::size_t>();
    r.saturation = j.at("saturation").get<std::uint64_t>();
    r.learning_rate = j.at("learning_rate").get<double>();
    r.weight_init = j.value("weight_init", 0.5);
    r.mode = parse_mode(j.value("mode", std::string("flat")));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse, std::string("malformed registry: ") + e.what());
  }
  r.validate();
  return r;
}

inline nlohmann::json to_json(const FeedbackEvent& e) {
  return {{"user", e.user_id},
          {"qid", e.query_id},
          {"doc", e.doc_id},
          {"judgment", std::string(to_string(e.judgment))},
          {"timestamp", e.timestamp},
          {"rsvs", e.rsvs},
          {"membership", e.membership.values}};
}

inline FeedbackEvent feedback_event_from_json(const nlohmann::json& j) {
  try {
    FeedbackEvent e;
    e.user_id = j.at("user").get<std::string>();
    e.query_id = j.at("qid").get<std::string>();
    e.doc_id = j.at("doc").get<std::string>();
    e.judgment = parse_judgment(j.at("judgment").get<std::string>());
    e.timestamp = j.at("timestamp").get<std::int64_t>();
    e.rsvs = j.at("rsvs").get<std::vector<double>>();
    e.membership.values = j.at("membership").get<std::vector<double>>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    fail(Errc::parse, std::string("malformed feedback event: ") + ex.what());
  }
}

inline nlohmann::json to_json(const UserModel& u) {
  return {{"user_id", u.user_id},
          {"private_weights", to_json(u.private_weights)},
          {"feedback_count", u.feedback_count},
          {"p", u.p}};
}

inline nlohmann::json to_json(const PublicModel& m) {
  return {{"public_weights", to_json(m.public_weights)}, {"total_feedback", m.total_feedback}};
}

namespace detail {

/// File-name safe encoding of a user id: [A-Za-z0-9_-] pass, rest as %XX.
inline std::string encode_user_file(const std::string& id) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : id) {
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
        c == '-') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 15]);
    }
  }
  return out;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, path.string() + ": cannot open");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(Errc::parse, path.string() + ": " + e.what());
  }
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io, tmp.string() + ": cannot write");
    out << content;
    if (!out) fail(Errc::io, tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(Errc::io, path.string() + ": " + ec.message());
}

/// Rethrows any failure while reading `path` with the file name attached.
template <class F>
auto with_file(const std::filesystem::path& path, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    const std::string what = e.what();
    if (what.rfind(path.string(), 0) == 0) throw;
    throw Error(e.code(), path.string() + ": " + what);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, path.string() + ": " + e.what());
  }
}

}  // namespace detail

/// Owns the public model, all private models and the ordered feedback log.
/// Not internally synchronized: callers serialize writers.
class ModelStore {
 public:
  explicit ModelStore(Registry registry = {}, std::optional<ClusterModel> clusters = std::nullopt)
      : registry_(std::move(registry)), clusters_(std::move(clusters)) {
    registry_.validate();
    if (clusters_ && clusters_->k != registry_.clusters)
      fail(Errc::dimension, "cluster model has K=" + std::to_string(clusters_->k) +
                                " but the registry expects " + std::to_string(registry_.clusters));
    if (!clusters_ && registry_.clusters != 1)
      fail(Errc::invalid_argument, "a registry with K > 1 needs a cluster model");
    public_.public_weights = registry_.fresh_matrix();
  }

  const Registry& registry() const { return registry_; }
  const std::optional<ClusterModel>& cluster_model() const { return clusters_; }
  const PublicModel& public_model() const { return public_; }
  const std::map<std::string, UserModel>& users() const { return users_; }
  const std::vector<FeedbackEvent>& log() const { return log_; }

  const UserModel* find_user(const std::string& id) const {
    auto it = users_.find(id);
    return it == users_.end() ? nullptr : &it->second;
  }

  /// Default state for an unseen user (not stored).
  UserModel fresh_user(const std::string& id) const {
    return {id, registry_.fresh_matrix(), 0, blend_parameter(0, registry_.saturation)};
  }

  const UserModel& ensure_user(const std::string& id) {
    if (id.empty()) fail(Errc::invalid_argument, "user id is empty");
    auto it = users_.find(id);
    if (it == users_.end()) {
      it = users_.emplace(id, fresh_user(id)).first;
      if (dir_) persist_user(it->second);
    }
    return it->second;
  }

  /// Applies one judgment to both the user's private matrix and the public
  /// matrix, then appends it to the log.
  void record_feedback(const FeedbackEvent& event) {
    check_event(event);
    apply(event);
    log_.push_back(event);
    if (dir_) {
      persist_user(users_.at(event.user_id));
      persist_public();
      append_log(event);
    }
  }

  void record_feedback(const Corpus& corpus, const FeedbackEvent& event) {
    if (!corpus.contains(event.doc_id))
      fail(Errc::not_found, "unknown document '" + event.doc_id + "'");
    record_feedback(event);
  }

  /// Writes the full state to `dir`; subsequent changes are written through.
  void attach(const std::filesystem::path& dir) {
    save(dir);
    dir_ = dir;
  }

  void save(const std::filesystem::path& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "users");
    detail::write_file_atomic(dir / "registry.json", to_json(registry_).dump(2) + "\n");
    if (clusters_)
      detail::write_file_atomic(dir / "clusters.json", to_json(*clusters_).dump(2) + "\n");
    else if (fs::exists(dir / "clusters.json"))
      fs::remove(dir / "clusters.json");
    detail::write_file_atomic(dir / "public.json", to_json(public_).dump(2) + "\n");
    for (const auto& [id, user] : users_) write_user(dir, user);
    std::ostringstream log;
    for (const auto& e : log_) log << to_json(e).dump() << '\n';
    detail::write_file_atomic(dir / "feedback.log", log.str());
  }

  /// Restores a saved store. A missing or empty directory yields a fresh
  /// store built from `defaults`; anything unreadable or inconsistent is an
  /// error naming the offending file.
  static ModelStore load(const std::filesystem::path& dir, const Registry& defaults = {},
                         std::optional<ClusterModel> default_clusters = std::nullopt) {
    namespace fs = std::filesystem;
    const auto registry_path = dir / "registry.json";
    const auto clusters_path = dir / "clusters.json";
    const auto public_path = dir / "public.json";
    const auto log_path = dir / "feedback.log";

    Registry registry = defaults;
    if (fs::exists(registry_path))
      registry = detail::with_file(registry_path, [&] {
        return registry_from_json(detail::read_json_file(registry_path));
      });

    std::optional<ClusterModel> clusters = default_clusters;
    if (fs::exists(clusters_path))
      clusters = detail::with_file(clusters_path, [&] {
        return cluster_model_from_json(detail::read_json_file(clusters_path));
      });

    ModelStore store = detail::with_file(fs::exists(clusters_path) ? clusters_path : registry_path,
                                         [&] { return ModelStore(registry, clusters); });

    if (fs::exists(public_path)) {
      store.public_ = detail::with_file(public_path, [&] {
        const auto j = detail::read_json_file(public_path);
        PublicModel m{weight_matrix_from_json(j.at("public_weights")),
                      j.at("total_feedback").get<std::uint64_t>()};
        store.check_dims(m.public_weights);
        return m;
      });
    }

    if (fs::exists(dir / "users")) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(dir / "users"))
        if (entry.path().extension() == ".json") files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      for (const auto& path : files) {
        auto user = detail::with_file(path, [&] {
          const auto j = detail::read_json_file(path);
          UserModel u{j.at("user_id").get<std::string>(),
                      weight_matrix_from_json(j.at("private_weights")),
                      j.at("feedback_count").get<std::uint64_t>(), j.at("p").get<double>()};
          store.check_dims(u.private_weights);
          if (detail::encode_user_file(u.user_id) + ".json" != path.filename().string())
            fail(Errc::parse, "user_id '" + u.user_id + "' does not match the file name");
          if (u.p != blend_parameter(u.feedback_count, store.registry_.saturation))
            fail(Errc::parse, "p disagrees with feedback_count");
          return u;
        });
        store.users_.emplace(user.user_id, std::move(user));
      }
    }

    if (fs::exists(log_path)) {
      store.log_ = detail::with_file(log_path, [&] {
        std::ifstream in(log_path, std::ios::binary);
        if (!in) fail(Errc::io, "cannot open");
        std::vector<FeedbackEvent> log;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
          ++lineno;
          if (line.empty()) continue;
          try {
            auto e = feedback_event_from_json(nlohmann::json::parse(line));
            store.check_event(e);
            log.push_back(std::move(e));
          } catch (const std::exception& ex) {
            fail(Errc::parse, "line " + std::to_string(lineno) + ": " + ex.what());
          }
        }
        return log;
      });
    }
    if (store.log_.size() != store.public_.total_feedback)
      fail(Errc::parse, public_path.string() + ": total_feedback " +
                            std::to_string(store.public_.total_feedback) +
                            " disagrees with " + std::to_string(store.log_.size()) +
                            " events in feedback.log");
    return store;
  }

  /// Fresh store with the same registry and cluster model, fed `log` in order.
  static ModelStore replay(const Registry& registry, const std::optional<ClusterModel>& clusters,
                           const std::vector<FeedbackEvent>& log) {
    ModelStore store(registry, clusters);
    for (const auto& e : log) store.record_feedback(e);
    return store;
  }

  bool same_state(const ModelStore& other) const {
    return registry_ == other.registry_ && clusters_ == other.clusters_ &&
           public_ == other.public_ && users_ == other.users_ && log_ == other.log_;
  }

 private:
  void check_dims(const WeightMatrix& w) const {
    if (w.engines() != registry_.engines.size() || w.clusters() != registry_.clusters)
      fail(Errc::dimension, "weight matrix is " + std::to_string(w.engines()) + "x" +
                                std::to_string(w.clusters()) + " but the registry expects " +
                                std::to_string(registry_.engines.size()) + "x" +
                                std::to_string(registry_.clusters));
  }

  void check_event(const FeedbackEvent& e) const {
    if (e.user_id.empty()) fail(Errc::invalid_argument, "feedback without user id");
    if (e.doc_id.empty()) fail(Errc::invalid_argument, "feedback without document id");
    if (e.rsvs.size() != registry_.engines.size())
      fail(Errc::dimension, "feedback carries " + std::to_string(e.rsvs.size()) +
                                " RSVs for " + std::to_string(registry_.engines.size()) +
                                " engines");
    if (e.membership.size() != registry_.clusters)
      fail(Errc::dimension, "feedback membership has " + std::to_string(e.membership.size()) +
                                " entries for K=" + std::to_string(registry_.clusters));
    for (double v : e.rsvs)
      if (!(v >= 0.0 && v <= 1.0)) fail(Errc::invalid_argument, "feedback RSV outside [0,1]");
    for (double v : e.membership.values)
      if (!(v >= 0.0 && v <= 1.0)) fail(Errc::invalid_argument, "membership outside [0,1]");
  }

  void apply(const FeedbackEvent& e) {
    auto it = users_.find(e.user_id);
    if (it == users_.end()) it = users_.emplace(e.user_id, fresh_user(e.user_id)).first;
    UserModel& user = it->second;
    const double rate = registry_.learning_rate;
    if (registry_.clusters == 1) {
      const auto update = [&](WeightMatrix& w) {
        const auto learned = learn_flat(w.column(0), e.judgment, e.rsvs, rate);
        for (std::size_t s = 0; s < learned.size(); ++s) w.set(s, 0, learned[s]);
      };
      update(user.private_weights);
      update(public_.public_weights);
    } else {
      user.private_weights =
          learn_clustered(std::move(user.private_weights), e.membership, e.judgment, e.rsvs, rate);
      public_.public_weights = learn_clustered(std::move(public_.public_weights), e.membership,
                                               e.judgment, e.rsvs, rate);
    }
    ++user.feedback_count;
    user.p = blend_parameter(user.feedback_count, registry_.saturation);
    ++public_.total_feedback;
  }

  static void write_user(const std::filesystem::path& dir, const UserModel& u) {
    detail::write_file_atomic(dir / "users" / (detail::encode_user_file(u.user_id) + ".json"),
                              to_json(u).dump(2) + "\n");
  }

  void persist_user(const UserModel& u) const { write_user(*dir_, u); }

  void persist_public() const {
    detail::write_file_atomic(*dir_ / "public.json", to_json(public_).dump(2) + "\n");
  }

  void append_log(const FeedbackEvent& e) const {
    std::ofstream out(*dir_ / "feedback.log", std::ios::binary | std::ios::app);
    if (!out) fail(Errc::io, (*dir_ / "feedback.log").string() + ": cannot append");
    out << to_json(e).dump() << '\n';
    out.flush();
  }

  Registry registry_;
  std::optional<ClusterModel> clusters_;
  PublicModel public_;
  std::map<std::string, UserModel> users_;
  std::vector<FeedbackEvent> log_;
  std::optional<std::filesystem::path> dir_;
};

}  // namespace mimor
