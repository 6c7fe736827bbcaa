#pragma once

/// \file ranker.hpp
/// \brief Query execution over all registry engines and fused ranking
/// against a model store.

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mimor/clustering.hpp"
#include "mimor/corpus.hpp"
#include "mimor/engines.hpp"
#include "mimor/error.hpp"
#include "mimor/fusion.hpp"
#include "mimor/usermodel.hpp"

namespace mimor {

/// A document retrieved by at least one engine, with one normalized RSV per
/// registry engine (0 where that engine did not retrieve it).
struct Candidate {
  std::string doc_id;
  std::vector<double> rsvs;
  MembershipVector membership;
};

struct RankedDoc {
  std::string doc_id;
  double score = 0.0;
  std::vector<double> rsvs;
  MembershipVector membership;
};

struct QueryRun {
  std::string query_id;
  std::vector<std::string> tokens;
  std::vector<RsvList> lists;  // normalized, registry order
  std::vector<Candidate> candidates;  // doc-id order
};

/// The weights a ranking is evaluated under. `private_weights` may be null
/// for modes that do not blend.
struct WeightView {
  const WeightMatrix& public_weights;
  const WeightMatrix* private_weights = nullptr;
  double p = 0.0;
};

inline double fused_score(FusionMode mode, const WeightView& w, const MembershipVector& memb,
                          std::span<const double> rsvs) {
  const auto need_private = [&]() -> const WeightMatrix& {
    if (!w.private_weights) fail(Errc::invalid_argument, "blended mode needs private weights");
    return *w.private_weights;
  };
  const auto need_flat = [&](const WeightMatrix& m) {
    if (m.clusters() != 1)
      fail(Errc::invalid_argument, std::string("mode '") + std::string(to_string(mode)) +
                                       "' needs a single-cluster model (K=1)");
  };
  switch (mode) {
    case FusionMode::flat:
      need_flat(w.public_weights);
      return fuse_flat(w.public_weights.column(0), rsvs);
    case FusionMode::clustered:
      return fuse_clustered(w.public_weights, memb, rsvs);
    case FusionMode::blended: {
      const auto& priv = need_private();
      need_flat(priv);
      return fuse_blended(priv.column(0), w.public_weights.column(0), w.p, rsvs);
    }
    case FusionMode::blended_clustered:
      return fuse_blended_clustered(need_private(), w.public_weights, w.p, memb, rsvs);
  }
  return 0.0;
}

/// Descending score, ties by doc id ascending, truncated to top_k.
inline std::vector<RankedDoc> rank_candidates(const std::vector<Candidate>& candidates,
                                              FusionMode mode, const WeightView& weights,
                                              std::size_t top_k) {
  if (top_k < 1) fail(Errc::invalid_argument, "top_k must be at least 1");
  std::vector<RankedDoc> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates)
    out.push_back({c.doc_id, fused_score(mode, weights, c.membership, c.rsvs), c.rsvs,
                   c.membership});
  std::sort(out.begin(), out.end(), [](const RankedDoc& a, const RankedDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  if (out.size() > top_k) out.resize(top_k);
  return out;
}

/// Corpus, per-document memberships and the model store bound together.
/// Read operations are const; feedback goes through `feedback()`.
class Mimor {
 public:
  Mimor(std::shared_ptr<const Corpus> corpus, ModelStore store)
      : corpus_(std::move(corpus)), store_(std::move(store)) {
    if (!corpus_) fail(Errc::invalid_argument, "no corpus");
    const std::size_t k = store_.registry().clusters;
    zero_membership_.values.assign(k, 0.0);
    if (const auto& model = store_.cluster_model()) {
      memberships_ = assign_all(*model, *corpus_);
    } else {
      memberships_.assign(corpus_->size(), MembershipVector::single());
    }
  }

  const Corpus& corpus() const { return *corpus_; }
  const std::shared_ptr<const Corpus>& corpus_ptr() const { return corpus_; }
  const ModelStore& store() const { return store_; }
  ModelStore& store() { return store_; }
  const Registry& registry() const { return store_.registry(); }

  /// Membership used for learning and fusion; featureless documents count
  /// as belonging nowhere.
  const MembershipVector& membership_of(std::uint32_t pos) const {
    const auto& m = memberships_.at(pos);
    return m ? *m : zero_membership_;
  }

  const MembershipVector& membership_of(const std::string& doc_id) const {
    return membership_of(corpus_->position(doc_id));
  }

  QueryRun retrieve(const std::string& query_text, std::string query_id = {}) const {
    QueryRun run;
    run.query_id = std::move(query_id);
    run.tokens = tokenize(query_text);
    if (run.tokens.empty()) fail(Errc::invalid_argument, "empty query");
    const auto& engines = registry().engines;
    std::map<std::string, std::vector<double>> by_doc;
    for (std::size_t s = 0; s < engines.size(); ++s) {
      run.lists.push_back(normalize(score(engines[s], run.tokens, *corpus_, run.query_id)));
      for (const auto& [doc, v] : run.lists.back().scores) {
        auto& rsvs = by_doc[doc];
        rsvs.resize(engines.size(), 0.0);
        rsvs[s] = v;
      }
    }
    run.candidates.reserve(by_doc.size());
    for (auto& [doc, rsvs] : by_doc)
      run.candidates.push_back({doc, std::move(rsvs), membership_of(doc)});
    return run;
  }

  WeightView weights_for(const UserModel& user) const {
    return {store_.public_model().public_weights, &user.private_weights, user.p};
  }

  UserModel user_or_fresh(const std::string& user_id) const {
    const auto* u = store_.find_user(user_id);
    return u ? *u : store_.fresh_user(user_id);
  }

  std::vector<RankedDoc> rank(const QueryRun& run, const std::string& user_id, FusionMode mode,
                              std::size_t top_k) const {
    const auto user = user_or_fresh(user_id);
    return rank_candidates(run.candidates, mode, weights_for(user), top_k);
  }

  std::vector<RankedDoc> rank(const std::string& query, const std::string& user_id,
                              FusionMode mode, std::size_t top_k) const {
    if (top_k < 1) fail(Errc::invalid_argument, "top_k must be at least 1");
    return rank(retrieve(query), user_id, mode, top_k);
  }

  /// Records a judgment using the RSVs shown for `doc_id` in `run`; a
  /// document absent from the run learns nothing but is still counted.
  FeedbackEvent feedback(const QueryRun& run, const std::string& user_id,
                         const std::string& doc_id, Judgment judgment,
                         std::int64_t timestamp = 0) {
    std::vector<double> rsvs(registry().engines.size(), 0.0);
    for (const auto& c : run.candidates)
      if (c.doc_id == doc_id) rsvs = c.rsvs;
    return feedback(user_id, run.query_id, doc_id, judgment, std::move(rsvs), timestamp);
  }

  FeedbackEvent feedback(const std::string& user_id, const std::string& query_id,
                         const std::string& doc_id, Judgment judgment, std::vector<double> rsvs,
                         std::int64_t timestamp = 0) {
    FeedbackEvent event{user_id, query_id, doc_id, judgment, timestamp, std::move(rsvs),
                        membership_of(doc_id)};
    store_.record_feedback(*corpus_, event);
    return event;
  }

 private:
  std::shared_ptr<const Corpus> corpus_;
  ModelStore store_;
  std::vector<std::optional<MembershipVector>> memberships_;
  MembershipVector zero_membership_;
};

}  // namespace mimor
