#pragma once

/// \file evaluation.hpp
/// \brief Relevance judgments, ranking metrics, static fusion baselines and
/// the feedback-replay session that measures adaptive fusion.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mimor/detail/random.hpp"
#include "mimor/engines.hpp"
#include "mimor/error.hpp"
#include "mimor/ranker.hpp"
#include "mimor/usermodel.hpp"

namespace mimor {

/// Binary judgments: qid -> doc -> relevant?
class QrelSet {
 public:
  void add(const std::string& qid, const std::string& doc, bool relevant) {
    auto& judged = judgments_[qid];
    auto [it, inserted] = judged.emplace(doc, relevant);
    if (!inserted && it->second != relevant)
      fail(Errc::invalid_argument, "conflicting judgments for " + qid + "/" + doc);
  }

  bool empty() const { return judgments_.empty(); }
  std::size_t query_count() const { return judgments_.size(); }
  bool has_query(const std::string& qid) const { return judgments_.count(qid) > 0; }

  std::optional<bool> judgment(const std::string& qid, const std::string& doc) const {
    auto q = judgments_.find(qid);
    if (q == judgments_.end()) return std::nullopt;
    auto d = q->second.find(doc);
    if (d == q->second.end()) return std::nullopt;
    return d->second;
  }

  std::set<std::string> relevant(const std::string& qid) const {
    std::set<std::string> out;
    auto q = judgments_.find(qid);
    if (q == judgments_.end()) return out;
    for (const auto& [doc, rel] : q->second)
      if (rel) out.insert(doc);
    return out;
  }

  const std::map<std::string, std::map<std::string, bool>>& all() const { return judgments_; }

 private:
  std::map<std::string, std::map<std::string, bool>> judgments_;
};

/// TREC qrels: `qid iter docid rel` with rel in {0,1}.
inline QrelSet load_qrels(std::istream& in) {
  QrelSet qrels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::vector<std::string> cols;
    for (std::string f; fields >> f;) cols.push_back(f);
    if (cols.empty()) continue;
    const auto where = "qrels line " + std::to_string(lineno) + ": ";
    if (cols.size() != 4) fail(Errc::parse, where + "expected 4 columns");
    if (cols[3] != "0" && cols[3] != "1")
      fail(Errc::parse, where + "relevance must be 0 or 1, got '" + cols[3] + "'");
    try {
      qrels.add(cols[0], cols[2], cols[3] == "1");
    } catch (const Error& e) {
      fail(Errc::parse, where + e.what());
    }
  }
  return qrels;
}

inline QrelSet load_qrels_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open '" + path + "'");
  return load_qrels(in);
}

/// Mean over relevant documents of the precision at each one's rank;
/// unretrieved relevant documents contribute 0.
inline double average_precision(const std::vector<std::string>& ranked,
                                const std::set<std::string>& relevant) {
  if (relevant.empty())
    fail(Errc::invalid_argument, "average precision is undefined without relevant documents");
  std::set<std::string> found;
  double sum = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (relevant.count(ranked[i]) && found.insert(ranked[i]).second)
      sum += static_cast<double>(found.size()) / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(relevant.size());
}

/// |relevant within the top k| / k, even when fewer than k are ranked.
inline double precision_at_k(const std::vector<std::string>& ranked,
                             const std::set<std::string>& relevant, std::size_t k) {
  if (k < 1) fail(Errc::invalid_argument, "k must be at least 1");
  std::set<std::string> hits;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i)
    if (relevant.count(ranked[i])) hits.insert(ranked[i]);
  return static_cast<double>(hits.size()) / static_cast<double>(k);
}

inline std::map<std::string, double> combsum(const std::vector<RsvList>& lists) {
  std::map<std::string, double> out;
  for (const auto& l : lists)
    for (const auto& [doc, s] : l.scores) out[doc] += s;
  return out;
}

/// CombSUM times the number of lists giving the document a nonzero score.
inline std::map<std::string, double> combmnz(const std::vector<RsvList>& lists) {
  std::map<std::string, std::size_t> hits;
  for (const auto& l : lists)
    for (const auto& [doc, s] : l.scores)
      if (s != 0.0) ++hits[doc];
  auto out = combsum(lists);
  for (auto& [doc, s] : out) s *= static_cast<double>(hits[doc]);
  return out;
}

/// Doc ids by descending score, ties by id ascending.
inline std::vector<std::string> ranking_of(const std::map<std::string, double>& scores) {
  std::vector<std::pair<std::string, double>> items(scores.begin(), scores.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  out.reserve(items.size());
  for (auto& [doc, s] : items) out.push_back(std::move(doc));
  return out;
}

struct Query {
  std::string qid;
  std::string text;
};

inline std::vector<Query> load_queries(std::istream& in) {
  std::vector<Query> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("qid").get<std::string>(), j.at("text").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse, "queries line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<Query> load_queries_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open '" + path + "'");
  return load_queries(in);
}

struct SessionConfig {
  double learning_rate = 0.05;
  std::uint64_t saturation = kDefaultSaturation;
  FusionMode mode = FusionMode::flat;
  std::size_t judge_depth = 10;
  std::size_t iterations = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (judge_depth < 1) fail(Errc::invalid_argument, "judge depth must be at least 1");
    if (iterations < 1) fail(Errc::invalid_argument, "iterations must be at least 1");
    if (saturation < 1) fail(Errc::invalid_argument, "saturation T must be at least 1");
    FusionConfig{learning_rate, 0.5, mode}.validate();
  }
};

struct Metrics {
  double map = 0.0;
  double p5 = 0.0;
  double p10 = 0.0;

  bool operator==(const Metrics&) const = default;
};

struct IterationSnapshot {
  std::size_t iteration = 0;
  std::size_t feedback_events = 0;  // applied during this iteration
  Metrics fused;
  WeightMatrix public_weights;
  WeightMatrix private_weights;
  double p = 0.0;

  bool operator==(const IterationSnapshot&) const = default;
};

struct MetricsReport {
  SessionConfig config;
  std::vector<std::string> engines;
  std::vector<std::string> cluster_names;
  std::size_t evaluated_queries = 0;
  std::map<std::string, Metrics> baselines;  // each engine, combsum, combmnz
  Metrics initial;  // fused, before any feedback
  std::vector<IterationSnapshot> iterations;
  std::vector<std::string> warnings;

  const Metrics& final_fused() const {
    return iterations.empty() ? initial : iterations.back().fused;
  }

  bool operator==(const MetricsReport& o) const {
    return engines == o.engines && cluster_names == o.cluster_names &&
           evaluated_queries == o.evaluated_queries && baselines == o.baselines &&
           initial == o.initial && iterations == o.iterations && warnings == o.warnings;
  }
};

namespace detail {

/// Metrics averaged over queries with at least one relevant document.
template <class RankFn>
Metrics evaluate(const std::vector<std::string>& qids, const QrelSet& qrels, RankFn&& rank) {
  Metrics m;
  std::size_t n = 0;
  for (const auto& qid : qids) {
    const auto relevant = qrels.relevant(qid);
    if (relevant.empty()) continue;
    const std::vector<std::string> ranked = rank(qid);
    m.map += average_precision(ranked, relevant);
    m.p5 += precision_at_k(ranked, relevant, 5);
    m.p10 += precision_at_k(ranked, relevant, 10);
    ++n;
  }
  if (n > 0) {
    m.map /= static_cast<double>(n);
    m.p5 /= static_cast<double>(n);
    m.p10 /= static_cast<double>(n);
  }
  return m;
}

inline std::vector<std::string> ids_of(const std::vector<RankedDoc>& docs) {
  std::vector<std::string> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(d.doc_id);
  return out;
}

}  // namespace detail

inline constexpr const char* kSessionUser = "qrels";

/// Replays qrels as a single simulated user. Each iteration visits the
/// queries in a seeded order, ranks with the current model, judges the top
/// `judge_depth` documents (unjudged ones are skipped) and feeds every
/// judgment back; metrics are then taken with the weights frozen.
inline MetricsReport simulate_session(std::shared_ptr<const Corpus> corpus,
                                      const EngineRegistry& engines,
                                      const std::optional<ClusterModel>& clusters,
                                      const std::vector<Query>& queries, const QrelSet& qrels,
                                      const SessionConfig& config) {
  config.validate();
  const bool clustered = uses_clusters(config.mode);
  if (clustered && !clusters)
    fail(Errc::invalid_argument, std::string("mode '") + std::string(to_string(config.mode)) +
                                     "' needs a cluster model");

  Registry registry;
  registry.engines = engines;
  registry.clusters = clustered ? clusters->k : 1;
  registry.saturation = config.saturation;
  registry.learning_rate = config.learning_rate;
  registry.mode = config.mode;
  Mimor mimor(std::move(corpus),
              ModelStore(registry, clustered ? clusters : std::optional<ClusterModel>{}));

  MetricsReport report;
  report.config = config;
  for (auto e : engines) report.engines.emplace_back(to_string(e));
  report.cluster_names = clustered ? clusters->names : std::vector<std::string>{"all"};

  std::map<std::string, QueryRun> runs;
  std::vector<std::string> qids;
  for (const auto& q : queries) {
    if (!qrels.has_query(q.qid)) {
      report.warnings.push_back("query '" + q.qid + "' has no judgments; skipped");
      continue;
    }
    if (runs.count(q.qid)) {
      report.warnings.push_back("query '" + q.qid + "' repeated; first text kept");
      continue;
    }
    try {
      runs.emplace(q.qid, mimor.retrieve(q.text, q.qid));
    } catch (const Error& e) {
      report.warnings.push_back("query '" + q.qid + "' skipped: " + e.what());
      continue;
    }
    qids.push_back(q.qid);
  }
  for (const auto& qid : qids)
    if (!qrels.relevant(qid).empty()) ++report.evaluated_queries;

  for (std::size_t s = 0; s < engines.size(); ++s)
    report.baselines[report.engines[s]] = detail::evaluate(qids, qrels, [&](const std::string& q) {
      return ranking_of(runs.at(q).lists[s].scores);
    });
  report.baselines["combsum"] = detail::evaluate(
      qids, qrels, [&](const std::string& q) { return ranking_of(combsum(runs.at(q).lists)); });
  report.baselines["combmnz"] = detail::evaluate(
      qids, qrels, [&](const std::string& q) { return ranking_of(combmnz(runs.at(q).lists)); });

  const auto fused_metrics = [&] {
    return detail::evaluate(qids, qrels, [&](const std::string& q) {
      const auto& run = runs.at(q);
      if (run.candidates.empty()) return std::vector<std::string>{};
      return detail::ids_of(mimor.rank(run, kSessionUser, config.mode, run.candidates.size()));
    });
  };
  report.initial = fused_metrics();

  std::mt19937_64 rng(config.seed);
  std::int64_t clock = 0;
  for (std::size_t iter = 1; iter <= config.iterations; ++iter) {
    auto order = qids;
    detail::shuffle(order, rng);
    std::size_t events = 0;
    for (const auto& qid : order) {
      const auto& run = runs.at(qid);
      if (run.candidates.empty()) continue;
      const auto top = mimor.rank(run, kSessionUser, config.mode, config.judge_depth);
      for (const auto& doc : top) {
        const auto judged = qrels.judgment(qid, doc.doc_id);
        if (!judged) continue;
        mimor.feedback(kSessionUser, qid, doc.doc_id,
                       *judged ? Judgment::relevant : Judgment::nonrelevant, doc.rsvs, clock++);
        ++events;
      }
    }
    const auto user = mimor.user_or_fresh(kSessionUser);
    report.iterations.push_back({iter, events, fused_metrics(),
                                 mimor.store().public_model().public_weights,
                                 user.private_weights, user.p});
  }
  return report;
}

inline nlohmann::json to_json(const Metrics& m) {
  return {{"map", m.map}, {"p5", m.p5}, {"p10", m.p10}};
}

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["config"] = {{"learning_rate", r.config.learning_rate},
                 {"saturation", r.config.saturation},
                 {"mode", std::string(to_string(r.config.mode))},
                 {"depth", r.config.judge_depth},
                 {"iterations", r.config.iterations},
                 {"seed", r.config.seed}};
  j["engines"] = r.engines;
  j["clusters"] = r.cluster_names;
  j["evaluated_queries"] = r.evaluated_queries;
  j["baselines"] = nlohmann::json::object();
  for (const auto& [name, m] : r.baselines) j["baselines"][name] = to_json(m);
  j["initial"] = to_json(r.initial);
  j["iterations"] = nlohmann::json::array();
  for (const auto& it : r.iterations)
    j["iterations"].push_back({{"iteration", it.iteration},
                               {"feedback_events", it.feedback_events},
                               {"fused", to_json(it.fused)},
                               {"public_weights", to_json(it.public_weights)},
                               {"private_weights", to_json(it.private_weights)},
                               {"p", it.p}});
  j["final"] = to_json(r.final_fused());
  j["warnings"] = r.warnings;
  return j;
}

inline std::string summary_table(const MetricsReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  const auto row = [&](const std::string& name, const Metrics& m) {
    out << std::left << std::setw(24) << name << std::right << std::setw(8) << m.map
        << std::setw(8) << m.p5 << std::setw(8) << m.p10 << '\n';
  };
  out << std::left << std::setw(24) << "system" << std::right << std::setw(8) << "MAP"
      << std::setw(8) << "P@5" << std::setw(8) << "P@10" << '\n';
  for (const auto& [name, m] : r.baselines) row(name, m);
  row(std::string("mimor/") + std::string(to_string(r.config.mode)) + " (start)", r.initial);
  for (const auto& it : r.iterations)
    row("mimor iteration " + std::to_string(it.iteration), it.fused);
  out << "queries evaluated: " << r.evaluated_queries << '\n';
  for (const auto& w : r.warnings) out << "warning: " << w << '\n';
  return out.str();
}

}  // namespace mimor
