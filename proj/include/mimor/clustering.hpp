#pragma once

/// \file clustering.hpp
/// \brief Document membership vectors over K clusters: fuzzy c-means over
/// standardized feature vectors, or hard (possibly overlapping) rule sets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mimor/corpus.hpp"
#include "mimor/detail/random.hpp"
#include "mimor/error.hpp"

namespace mimor {

struct MembershipVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t k) const { return values[k]; }

  std::size_t argmax() const {
    return static_cast<std::size_t>(
        std::max_element(values.begin(), values.end()) - values.begin());
  }

  static MembershipVector single() { return {{1.0}}; }

  bool operator==(const MembershipVector&) const = default;
};

enum class ClusterMode { fuzzy, hard_rule };

inline std::string_view to_string(ClusterMode mode) {
  return mode == ClusterMode::fuzzy ? "fuzzy" : "hard-rule";
}

struct HardRule {
  enum class Op { less, greater_equal };

  std::string cluster;
  Feature feature = Feature::doc_length;
  Op op = Op::less;
  double threshold = 0.0;
  bool catch_all = false;  // holds exactly when no earlier rule matched

  bool matches(const FeatureVector& f) const {
    const double v = f.get(feature);
    return op == Op::less ? v < threshold : v >= threshold;
  }

  bool operator==(const HardRule&) const = default;
};

struct FuzzyOptions {
  std::size_t clusters = 2;
  double fuzzifier = 2.0;
  double tolerance = 1e-6;
  std::size_t max_iterations = 300;
  std::uint64_t seed = 0;
  std::size_t restarts = 10;
};

struct ClusterModel {
  ClusterMode mode = ClusterMode::fuzzy;
  std::size_t k = 0;
  double fuzzifier = 2.0;
  std::vector<std::string> names;

  // Fuzzy mode: only non-constant features are kept.
  std::vector<Feature> features;
  std::vector<double> feature_means;
  std::vector<double> feature_stds;
  std::vector<std::vector<double>> centroids;

  std::vector<HardRule> rules;

  // Fit diagnostics: objective after each iteration.
  std::vector<double> objective_history;
  std::size_t iterations = 0;

  bool fitted() const {
    return k >= 1 && (mode == ClusterMode::fuzzy ? centroids.size() == k
                                                 : rules.size() == k);
  }

  /// z-scored coordinates of the retained features.
  std::vector<double> standardize(const FeatureVector& f) const {
    std::vector<double> z(features.size());
    for (std::size_t j = 0; j < features.size(); ++j)
      z[j] = (f.get(features[j]) - feature_means[j]) / feature_stds[j];
    return z;
  }

  bool operator==(const ClusterModel&) const = default;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

/// u_k = 1 / sum_j (d_k / d_j)^(2/(m-1)), written with squared distances.
/// Points sitting on centroids split their membership evenly among them.
inline std::vector<double> fuzzy_memberships(std::span<const double> sq_dist,
                                             double m) {
  const std::size_t k = sq_dist.size();
  std::vector<double> u(k, 0.0);
  const auto zeros = static_cast<std::size_t>(
      std::count(sq_dist.begin(), sq_dist.end(), 0.0));
  if (zeros > 0) {
    for (std::size_t c = 0; c < k; ++c)
      if (sq_dist[c] == 0.0) u[c] = 1.0 / static_cast<double>(zeros);
    return u;
  }
  const double exponent = 1.0 / (m - 1.0);
  for (std::size_t c = 0; c < k; ++c) {
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      denom += std::pow(sq_dist[c] / sq_dist[j], exponent);
    u[c] = 1.0 / denom;
  }
  return u;
}

}  // namespace detail

/// Membership for rule-based clusters: 1 wherever a rule holds.
inline MembershipVector hard_membership(std::span<const HardRule> rules,
                                        const FeatureVector& f) {
  MembershipVector out{std::vector<double>(rules.size(), 0.0)};
  bool any = false;
  for (std::size_t c = 0; c < rules.size(); ++c) {
    const bool hit = rules[c].catch_all ? !any : rules[c].matches(f);
    if (hit) {
      out.values[c] = 1.0;
      any = true;
    }
  }
  if (!any)
    fail(Errc::invalid_argument,
         "no cluster rule matches the document; the rule set needs a catch-all");
  return out;
}

inline void validate_rules(std::span<const HardRule> rules) {
  if (rules.empty()) fail(Errc::invalid_argument, "rule set is empty");
  for (std::size_t i = 0; i < rules.size(); ++i) {
    if (rules[i].cluster.empty())
      fail(Errc::invalid_argument, "rule " + std::to_string(i) + " has no cluster name");
    if (rules[i].catch_all && i + 1 != rules.size())
      fail(Errc::invalid_argument, "catch-all rule must be last");
    for (std::size_t j = 0; j < i; ++j)
      if (rules[j].cluster == rules[i].cluster)
        fail(Errc::invalid_argument, "duplicate cluster name '" + rules[i].cluster + "'");
  }
}

inline ClusterModel rule_model(std::vector<HardRule> rules) {
  validate_rules(rules);
  ClusterModel model;
  model.mode = ClusterMode::hard_rule;
  model.k = rules.size();
  for (const auto& r : rules) model.names.push_back(r.cluster);
  model.rules = std::move(rules);
  return model;
}

namespace detail {

/// D^2-weighted seeding over standardized points; a point equal to a chosen
/// centroid is never picked while distinct points remain.
inline std::vector<std::vector<double>> seed_centroids(const std::vector<std::vector<double>>& points,
                                                       std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = points.size();
  std::vector<std::size_t> chosen{uniform_index(rng, n)};
  std::vector<double> d2(n);
  while (chosen.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::numeric_limits<double>::infinity();
      for (std::size_t c : chosen) d2[i] = std::min(d2[i], squared_distance(points[i], points[c]));
      total += d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = static_cast<double>(rng() >> 11) * 0x1.0p-53 * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n && pick == n; ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && acc > target) pick = i;
      }
      if (pick == n)
        for (std::size_t i = n; i-- > 0 && pick == n;)
          if (d2[i] > 0.0) pick = i;
    } else {
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < n; ++i)
        if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) rest.push_back(i);
      pick = rest[uniform_index(rng, rest.size())];
    }
    chosen.push_back(pick);
  }
  std::vector<std::vector<double>> out;
  for (std::size_t i : chosen) out.push_back(points[i]);
  return out;
}

}  // namespace detail

/// Fuzzy c-means on z-scored features. Each of `restarts` runs seeds its
/// centroids from the data and iterates until no centroid moves more than
/// `tolerance` or `max_iterations` is reached; the run with the lowest final
/// objective is kept (earlier runs win ties).
inline ClusterModel fit_fuzzy(std::span<const FeatureVector> data,
                              const FuzzyOptions& opt) {
  if (opt.clusters < 1) fail(Errc::invalid_argument, "K must be at least 1");
  if (opt.clusters > data.size())
    fail(Errc::invalid_argument,
         "K=" + std::to_string(opt.clusters) + " exceeds the number of documents (" +
             std::to_string(data.size()) + ")");
  if (!(opt.fuzzifier > 1.0)) fail(Errc::invalid_argument, "fuzzifier m must exceed 1");
  if (!(opt.tolerance > 0.0)) fail(Errc::invalid_argument, "tolerance must be positive");
  if (opt.restarts < 1) fail(Errc::invalid_argument, "restarts must be at least 1");

  const std::size_t n = data.size();
  const std::size_t k = opt.clusters;
  const double m = opt.fuzzifier;

  ClusterModel model;
  model.mode = ClusterMode::fuzzy;
  model.k = k;
  model.fuzzifier = m;
  for (std::size_t c = 0; c < k; ++c) model.names.push_back("c" + std::to_string(c));

  for (Feature f : kAllFeatures) {
    double mean = 0.0;
    for (const auto& x : data) mean += x.get(f);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& x : data) {
      const double d = x.get(f) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(n));
    if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) continue;
    model.features.push_back(f);
    model.feature_means.push_back(mean);
    model.feature_stds.push_back(sd);
  }

  std::vector<std::vector<double>> points;
  points.reserve(n);
  for (const auto& x : data) points.push_back(model.standardize(x));

  const std::size_t dim = model.features.size();
  std::mt19937_64 rng(opt.seed);
  bool have_best = false;
  ClusterModel best;
  for (std::size_t r = 0; r < opt.restarts; ++r) {
    ClusterModel trial = model;
    trial.centroids = detail::seed_centroids(points, k, rng);
    std::vector<std::vector<double>> u(n, std::vector<double>(k));
    std::vector<double> sq(k);
    for (std::size_t iter = 0; iter < opt.max_iterations; ++iter) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c)
          sq[c] = detail::squared_distance(points[i], trial.centroids[c]);
        u[i] = detail::fuzzy_memberships(sq, m);
      }

      std::vector<std::vector<double>> next(k, std::vector<double>(dim, 0.0));
      double shift = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        double mass = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double w = std::pow(u[i][c], m);
          mass += w;
          for (std::size_t j = 0; j < dim; ++j) next[c][j] += w * points[i][j];
        }
        if (mass > 0.0) {
          for (double& v : next[c]) v /= mass;
        } else {
          next[c] = trial.centroids[c];  // an empty cluster keeps its centroid
        }
        shift = std::max(shift, std::sqrt(detail::squared_distance(next[c], trial.centroids[c])));
      }
      trial.centroids = std::move(next);

      double objective = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c)
          objective += std::pow(u[i][c], m) *
                       detail::squared_distance(points[i], trial.centroids[c]);
      trial.objective_history.push_back(objective);
      trial.iterations = iter + 1;
      if (shift < opt.tolerance) break;
    }
    // Runs that reach the same optimum differ only by rounding; keep the first.
    if (!have_best ||
        trial.objective_history.back() < best.objective_history.back() * (1.0 - 1e-9)) {
      best = std::move(trial);
      have_best = true;
    }
  }
  return best;
}

inline MembershipVector membership(const ClusterModel& model, const FeatureVector& f) {
  if (!model.fitted()) fail(Errc::invalid_argument, "cluster model is not fitted");
  if (model.mode == ClusterMode::hard_rule) return hard_membership(model.rules, f);
  for (double v : f.values())
    if (!std::isfinite(v)) fail(Errc::invalid_argument, "feature vector is not finite");
  if (model.k == 1) return MembershipVector::single();
  const auto z = model.standardize(f);
  std::vector<double> sq(model.k);
  for (std::size_t c = 0; c < model.k; ++c)
    sq[c] = detail::squared_distance(z, model.centroids[c]);
  return {detail::fuzzy_memberships(sq, model.fuzzifier)};
}

/// Membership of every corpus document; featureless (empty) documents get
/// none and are treated as all-zero membership by the learner.
inline std::vector<std::optional<MembershipVector>> assign_all(const ClusterModel& model,
                                                               const Corpus& corpus) {
  std::vector<std::optional<MembershipVector>> out;
  out.reserve(corpus.size());
  for (std::uint32_t d = 0; d < corpus.size(); ++d) {
    const auto& f = corpus.features(d);
    out.push_back(f ? std::optional(membership(model, *f)) : std::nullopt);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json rule_to_json(const HardRule& r) {
  if (r.catch_all) return {{"cluster", r.cluster}, {"catch_all", true}};
  return {{"cluster", r.cluster},
          {"feature", std::string(to_string(r.feature))},
          {"op", r.op == HardRule::Op::less ? "<" : ">="},
          {"threshold", r.threshold}};
}

inline HardRule rule_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(Errc::parse, "cluster rule is not an object");
  HardRule r;
  const char* name_key = j.contains("cluster") ? "cluster" : "cluster_name";
  if (!j.contains(name_key) || !j[name_key].is_string())
    fail(Errc::parse, "cluster rule lacks a 'cluster' name");
  r.cluster = j[name_key].get<std::string>();
  if (j.value("catch_all", false)) {
    r.catch_all = true;
    return r;
  }
  if (!j.contains("feature") || !j.contains("op") || !j.contains("threshold"))
    fail(Errc::parse, "rule '" + r.cluster + "' needs feature, op and threshold");
  r.feature = parse_feature(j["feature"].get<std::string>());
  const auto op = j["op"].get<std::string>();
  if (op == "<")
    r.op = HardRule::Op::less;
  else if (op == ">=" || op == "≥")
    r.op = HardRule::Op::greater_equal;
  else
    fail(Errc::parse, "rule '" + r.cluster + "' has unsupported op '" + op + "'");
  if (!j["threshold"].is_number())
    fail(Errc::parse, "rule '" + r.cluster + "' threshold is not a number");
  r.threshold = j["threshold"].get<double>();
  return r;
}

/// Accepts either `[rule, ...]` or `{"rules": [rule, ...]}`.
inline std::vector<HardRule> parse_rules(const nlohmann::json& j) {
  const auto& list = j.is_object() && j.contains("rules") ? j["rules"] : j;
  if (!list.is_array()) fail(Errc::parse, "cluster rules must be a list");
  std::vector<HardRule> rules;
  for (const auto& r : list) rules.push_back(rule_from_json(r));
  validate_rules(rules);
  return rules;
}

inline nlohmann::json to_json(const ClusterModel& m) {
  nlohmann::json j{{"mode", std::string(to_string(m.mode))},
                   {"k", m.k},
                   {"names", m.names}};
  if (m.mode == ClusterMode::fuzzy) {
    std::vector<std::string> feats;
    for (Feature f : m.features) feats.emplace_back(to_string(f));
    j["fuzzifier"] = m.fuzzifier;
    j["features"] = feats;
    j["feature_means"] = m.feature_means;
    j["feature_stds"] = m.feature_stds;
    j["centroids"] = m.centroids;
    j["iterations"] = m.iterations;
    j["objective_history"] = m.objective_history;
  } else {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& r : m.rules) rules.push_back(rule_to_json(r));
    j["rules"] = rules;
  }
  return j;
}

inline ClusterModel cluster_model_from_json(const nlohmann::json& j) {
  try {
    const auto mode = j.at("mode").get<std::string>();
    if (mode == "hard-rule") return rule_model(parse_rules(j.at("rules")));
    if (mode != "fuzzy") fail(Errc::parse, "unknown cluster mode '" + mode + "'");
    ClusterModel m;
    m.mode = ClusterMode::fuzzy;
    m.k = j.at("k").get<std::size_t>();
    m.fuzzifier = j.at("fuzzifier").get<double>();
    m.names = j.at("names").get<std::vector<std::string>>();
    for (const auto& f : j.at("features")) m.features.push_back(parse_feature(f.get<std::string>()));
    m.feature_means = j.at("feature_means").get<std::vector<double>>();
    m.feature_stds = j.at("feature_stds").get<std::vector<double>>();
    m.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
    m.iterations = j.value("iterations", std::size_t{0});
    m.objective_history = j.value("objective_history", std::vector<double>{});
    const auto dim = m.features.size();
    if (m.k < 1 || m.centroids.size() != m.k || m.names.size() != m.k ||
        m.feature_means.size() != dim || m.feature_stds.size() != dim ||
        std::any_of(m.centroids.begin(), m.centroids.end(),
                    [&](const auto& c) { return c.size() != dim; }))
      fail(Errc::dimension, "cluster model dimensions are inconsistent");
    if (!(m.fuzzifier > 1.0)) fail(Errc::parse, "fuzzifier must exceed 1");
    for (double s : m.feature_stds)
      if (!(s > 0.0)) fail(Errc::parse, "feature_stds must be positive");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse, std::string("malformed cluster model: ") + e.what());
  }
}

/// One `{"id", "membership"}` line per document with features.
inline void write_assignments(std::ostream& out, const ClusterModel& model,
                              const Corpus& corpus) {
  const auto all = assign_all(model, corpus);
  for (std::uint32_t d = 0; d < corpus.size(); ++d) {
    nlohmann::json rec{{"id", corpus.document(d).id}};
    rec["membership"] = all[d] ? nlohmann::json(all[d]->values) : nlohmann::json(nullptr);
    out << rec.dump() << '\n';
  }
}

}  // namespace mimor
