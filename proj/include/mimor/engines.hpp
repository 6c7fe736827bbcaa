#pragma once

/// \file engines.hpp
/// \brief The built-in retrieval scorers and per-query min-max normalization.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mimor/corpus.hpp"
#include "mimor/error.hpp"

namespace mimor {

enum class EngineId { tfidf, bm25, overlap };

inline std::string_view to_string(EngineId id) {
  switch (id) {
    case EngineId::tfidf: return "tfidf";
    case EngineId::bm25: return "bm25";
    case EngineId::overlap: return "overlap";
  }
  return "unknown";
}

inline EngineId parse_engine(std::string_view name) {
  if (name == "tfidf") return EngineId::tfidf;
  if (name == "bm25") return EngineId::bm25;
  if (name == "overlap") return EngineId::overlap;
  fail(Errc::invalid_argument, "unknown engine '" + std::string(name) + "'");
}

/// Ordered engine set; the position of an engine is its weight-matrix row.
using EngineRegistry = std::vector<EngineId>;

inline EngineRegistry default_registry() {
  return {EngineId::tfidf, EngineId::bm25, EngineId::overlap};
}

struct RsvList {
  std::string query_id;
  std::string engine_id;
  std::map<std::string, double> scores;  // absent doc => RSV 0
  bool normalized = false;

  double at(const std::string& doc) const {
    auto it = scores.find(doc);
    return it == scores.end() ? 0.0 : it->second;
  }

  bool operator==(const RsvList&) const = default;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

namespace detail {

/// Distinct query terms with their query frequency, in first-seen order.
inline std::vector<std::pair<std::string, std::size_t>> query_terms(
    const std::vector<std::string>& query) {
  std::vector<std::pair<std::string, std::size_t>> terms;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& t : query) {
    auto [it, inserted] = slot.try_emplace(t, terms.size());
    if (inserted)
      terms.emplace_back(t, 1);
    else
      ++terms[it->second].second;
  }
  return terms;
}

// ln(1 + N/df): stays positive when a term occurs in every document.
inline double smoothed_idf(std::size_t n_docs, std::size_t df) {
  return std::log(1.0 + static_cast<double>(n_docs) / static_cast<double>(df));
}

inline std::map<std::uint32_t, double> score_bm25(
    const std::vector<std::pair<std::string, std::size_t>>& terms,
    const InvertedIndex& index, const Bm25Params& params) {
  std::map<std::uint32_t, double> acc;
  const double n = static_cast<double>(index.doc_count());
  const double avgdl = index.average_doc_length();
  for (const auto& [term, qtf] : terms) {
    const auto id = index.term_id(term);
    if (!id) continue;
    const double df = static_cast<double>(index.document_frequency(*id));
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    for (const auto& p : index.postings(*id)) {
      const double tf = p.tf;
      const double len = static_cast<double>(index.doc_length(p.doc));
      const double norm = params.k1 * (1.0 - params.b + params.b * len / avgdl);
      acc[p.doc] += static_cast<double>(qtf) * idf * tf * (params.k1 + 1.0) /
                    (tf + norm);
    }
  }
  return acc;
}

/// ltc.ltc cosine: (1 + ln tf) * idf on both sides, cosine-normalized.
inline std::map<std::uint32_t, double> score_tfidf(
    const std::vector<std::pair<std::string, std::size_t>>& terms,
    const InvertedIndex& index) {
  std::map<std::uint32_t, double> dot;
  double query_norm_sq = 0.0;
  const std::size_t n = index.doc_count();
  for (const auto& [term, qtf] : terms) {
    const auto id = index.term_id(term);
    if (!id) continue;
    const double idf = smoothed_idf(n, index.document_frequency(*id));
    const double wq = (1.0 + std::log(static_cast<double>(qtf))) * idf;
    query_norm_sq += wq * wq;
    for (const auto& p : index.postings(*id))
      dot[p.doc] += wq * (1.0 + std::log(static_cast<double>(p.tf))) * idf;
  }
  std::map<std::uint32_t, double> out;
  if (dot.empty()) return out;
  const double qnorm = std::sqrt(query_norm_sq);
  for (const auto& [doc, d] : dot) {
    double doc_norm_sq = 0.0;
    for (const auto& [term, tf] : index.terms_of(doc)) {
      const double w = (1.0 + std::log(static_cast<double>(tf))) *
                       smoothed_idf(n, index.document_frequency(term));
      doc_norm_sq += w * w;
    }
    out[doc] = d / (qnorm * std::sqrt(doc_norm_sq));
  }
  return out;
}

/// Dice coefficient between query and document term sets.
inline std::map<std::uint32_t, double> score_overlap(
    const std::vector<std::pair<std::string, std::size_t>>& terms,
    const InvertedIndex& index) {
  std::map<std::uint32_t, double> shared;
  for (const auto& [term, qtf] : terms) {
    const auto id = index.term_id(term);
    if (!id) continue;
    for (const auto& p : index.postings(*id)) shared[p.doc] += 1.0;
  }
  const double qsize = static_cast<double>(terms.size());
  for (auto& [doc, s] : shared)
    s = 2.0 * s / (qsize + static_cast<double>(index.distinct_terms(doc)));
  return shared;
}

}  // namespace detail

/// Raw scores for every document containing at least one query term.
inline RsvList score(EngineId engine, const std::vector<std::string>& query,
                     const Corpus& corpus, std::string query_id = {},
                     const Bm25Params& bm25 = {}) {
  if (query.empty()) fail(Errc::invalid_argument, "empty query");
  const auto terms = detail::query_terms(query);
  const auto& index = corpus.index();
  std::map<std::uint32_t, double> raw;
  switch (engine) {
    case EngineId::tfidf: raw = detail::score_tfidf(terms, index); break;
    case EngineId::bm25: raw = detail::score_bm25(terms, index, bm25); break;
    case EngineId::overlap: raw = detail::score_overlap(terms, index); break;
  }
  RsvList list{std::move(query_id), std::string(to_string(engine)), {}, false};
  for (const auto& [doc, s] : raw) list.scores.emplace(corpus.document(doc).id, s);
  return list;
}

inline RsvList score(std::string_view engine, const std::vector<std::string>& query,
                     const Corpus& corpus, std::string query_id = {}) {
  return score(parse_engine(engine), query, corpus, std::move(query_id));
}

/// Min-max onto [0,1]; lists whose scores are all equal map to 0.5.
inline RsvList normalize(RsvList rsv) {
  if (rsv.normalized || rsv.scores.empty()) {
    rsv.normalized = true;
    return rsv;
  }
  auto [lo_it, hi_it] = std::minmax_element(
      rsv.scores.begin(), rsv.scores.end(),
      [](const auto& a, const auto& b) { return a.second < b.second; });
  const double lo = lo_it->second;
  const double hi = hi_it->second;
  for (auto& [doc, s] : rsv.scores)
    s = hi == lo ? 0.5 : (s - lo) / (hi - lo);
  rsv.normalized = true;
  return rsv;
}

}  // namespace mimor
