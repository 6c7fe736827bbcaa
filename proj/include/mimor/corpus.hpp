#pragma once

/// \file corpus.hpp
/// \brief Document ingestion, tokenization, the inverted index and the
/// formal per-document features used for clustering.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "mimor/error.hpp"

namespace mimor {

namespace detail {

inline bool is_token_byte(unsigned char c) {
  // Bytes >= 0x80 belong to multi-byte UTF-8 sequences and are kept inside
  // tokens so non-ASCII words are not shredded.
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
         (c >= 'A' && c <= 'Z') || c >= 0x80;
}

inline char ascii_lower(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a')
                                : static_cast<char>(c);
}

inline std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

}  // namespace detail

/// Maximal alphanumeric runs, ASCII-lowercased, in input order.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (detail::is_token_byte(c)) {
      current.push_back(detail::ascii_lower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

struct Document {
  std::string id;
  std::string text;
  std::size_t token_count = 0;
  std::map<std::string, std::string> meta;

  static Document make(std::string id, std::string text,
                       std::map<std::string, std::string> meta = {}) {
    Document doc{std::move(id), std::move(text), 0, std::move(meta)};
    doc.token_count = tokenize(doc.text).size();
    return doc;
  }
};

enum class Feature : std::uint8_t {
  doc_length = 0,
  avg_sentence_length = 1,
  type_token_ratio = 2,
  avg_word_length = 3,
};

inline constexpr std::size_t kFeatureCount = 4;

inline constexpr std::array<Feature, kFeatureCount> kAllFeatures = {
    Feature::doc_length, Feature::avg_sentence_length,
    Feature::type_token_ratio, Feature::avg_word_length};

inline std::string_view to_string(Feature f) {
  switch (f) {
    case Feature::doc_length: return "doc_length";
    case Feature::avg_sentence_length: return "avg_sentence_length";
    case Feature::type_token_ratio: return "type_token_ratio";
    case Feature::avg_word_length: return "avg_word_length";
  }
  return "unknown";
}

inline Feature parse_feature(std::string_view name) {
  for (Feature f : kAllFeatures)
    if (to_string(f) == name) return f;
  fail(Errc::invalid_argument, "unknown feature '" + std::string(name) + "'");
}

struct FeatureVector {
  double doc_length = 0.0;
  double avg_sentence_length = 0.0;
  double type_token_ratio = 0.0;
  double avg_word_length = 0.0;

  double get(Feature f) const {
    switch (f) {
      case Feature::doc_length: return doc_length;
      case Feature::avg_sentence_length: return avg_sentence_length;
      case Feature::type_token_ratio: return type_token_ratio;
      case Feature::avg_word_length: return avg_word_length;
    }
    return 0.0;
  }

  void set(Feature f, double value) {
    switch (f) {
      case Feature::doc_length: doc_length = value; break;
      case Feature::avg_sentence_length: avg_sentence_length = value; break;
      case Feature::type_token_ratio: type_token_ratio = value; break;
      case Feature::avg_word_length: avg_word_length = value; break;
    }
  }

  std::array<double, kFeatureCount> values() const {
    return {doc_length, avg_sentence_length, type_token_ratio,
            avg_word_length};
  }

  bool operator==(const FeatureVector&) const = default;
};

/// Sentences are split on '.', '!' and '?'; pieces without tokens are not
/// sentences, and text without terminal punctuation is one sentence.
inline FeatureVector extract_features(const Document& doc) {
  const auto tokens = tokenize(doc.text);
  if (tokens.empty())
    fail(Errc::invalid_argument,
         "document '" + doc.id + "' has no tokens; features undefined");

  std::size_t sentences = 0;
  std::size_t start = 0;
  const std::string_view text = doc.text;
  while (start <= text.size()) {
    const auto end = text.find_first_of(".!?", start);
    const auto piece = text.substr(
        start, end == std::string_view::npos ? std::string_view::npos
                                             : end - start);
    if (std::any_of(piece.begin(), piece.end(), [](char c) {
          return detail::is_token_byte(static_cast<unsigned char>(c));
        }))
      ++sentences;
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  sentences = std::max<std::size_t>(sentences, 1);

  std::unordered_set<std::string_view> distinct;
  std::size_t chars = 0;
  for (const auto& t : tokens) {
    distinct.insert(t);
    chars += detail::utf8_length(t);
  }

  const double n = static_cast<double>(tokens.size());
  FeatureVector f;
  f.doc_length = n;
  f.avg_sentence_length = n / static_cast<double>(sentences);
  f.type_token_ratio = static_cast<double>(distinct.size()) / n;
  f.avg_word_length = static_cast<double>(chars) / n;
  return f;
}

struct Posting {
  std::uint32_t doc = 0;  // position in the corpus document list
  std::uint32_t tf = 0;

  bool operator==(const Posting&) const = default;
};

/// Term -> postings over a fixed document list. Built once, read-only after.
class InvertedIndex {
 public:
  InvertedIndex() = default;

  explicit InvertedIndex(const std::vector<Document>& docs) {
    doc_lengths_.reserve(docs.size());
    forward_.resize(docs.size());
    for (std::uint32_t d = 0; d < docs.size(); ++d) {
      std::map<std::uint32_t, std::uint32_t> counts;
      const auto tokens = tokenize(docs[d].text);
      for (const auto& tok : tokens) {
        auto [it, inserted] = term_ids_.try_emplace(
            tok, static_cast<std::uint32_t>(vocabulary_.size()));
        if (inserted) {
          vocabulary_.push_back(tok);
          postings_.emplace_back();
        }
        ++counts[it->second];
      }
      doc_lengths_.push_back(tokens.size());
      total_length_ += tokens.size();
      for (auto [term, tf] : counts) {
        postings_[term].push_back({d, tf});
        forward_[d].push_back({term, tf});
      }
    }
  }

  std::size_t doc_count() const { return doc_lengths_.size(); }
  std::size_t term_count() const { return vocabulary_.size(); }
  std::size_t doc_length(std::uint32_t doc) const { return doc_lengths_.at(doc); }
  std::size_t distinct_terms(std::uint32_t doc) const {
    return forward_.at(doc).size();
  }

  double average_doc_length() const {
    return doc_lengths_.empty() ? 0.0
                                : static_cast<double>(total_length_) /
                                      static_cast<double>(doc_lengths_.size());
  }

  std::optional<std::uint32_t> term_id(std::string_view term) const {
    auto it = term_ids_.find(std::string(term));
    if (it == term_ids_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& term(std::uint32_t id) const { return vocabulary_.at(id); }

  const std::vector<Posting>& postings(std::uint32_t term) const {
    return postings_.at(term);
  }

  std::size_t document_frequency(std::uint32_t term) const {
    return postings_.at(term).size();
  }

  /// (term id, tf) pairs of one document, ordered by term id.
  const std::vector<std::pair<std::uint32_t, std::uint32_t>>& terms_of(
      std::uint32_t doc) const {
    return forward_.at(doc);
  }

  std::size_t collection_frequency(std::uint32_t term) const {
    std::size_t total = 0;
    for (const auto& p : postings_.at(term)) total += p.tf;
    return total;
  }

 private:
  std::unordered_map<std::string, std::uint32_t> term_ids_;
  std::vector<std::string> vocabulary_;
  std::vector<std::vector<Posting>> postings_;
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> forward_;
  std::vector<std::size_t> doc_lengths_;
  std::size_t total_length_ = 0;
};

enum class CorpusFormat { jsonl, trec_text };

inline CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "jsonl") return CorpusFormat::jsonl;
  if (name == "trec-text" || name == "trec") return CorpusFormat::trec_text;
  fail(Errc::invalid_argument,
       "unknown corpus format '" + std::string(name) + "'");
}

struct IngestStats {
  std::size_t doc_count = 0;
  std::size_t term_count = 0;
};

/// Immutable document collection with its index and cached features.
/// Documents without tokens are kept and searchable by id but carry no
/// feature vector.
class Corpus {
 public:
  Corpus() = default;

  explicit Corpus(std::vector<Document> docs) : docs_(std::move(docs)) {
    for (std::uint32_t i = 0; i < docs_.size(); ++i) {
      auto& doc = docs_[i];
      if (doc.id.empty()) fail(Errc::invalid_argument, "document id is empty");
      if (!positions_.try_emplace(doc.id, i).second)
        fail(Errc::duplicate, "duplicate document id '" + doc.id + "'");
      doc.token_count = tokenize(doc.text).size();
    }
    index_ = InvertedIndex(docs_);
    features_.reserve(docs_.size());
    for (const auto& doc : docs_)
      features_.push_back(doc.token_count > 0
                              ? std::optional(extract_features(doc))
                              : std::nullopt);
  }

  std::size_t size() const { return docs_.size(); }
  bool empty() const { return docs_.empty(); }
  const std::vector<Document>& documents() const { return docs_; }
  const Document& document(std::uint32_t pos) const { return docs_.at(pos); }
  const InvertedIndex& index() const { return index_; }

  bool contains(std::string_view id) const {
    return positions_.count(std::string(id)) > 0;
  }

  std::uint32_t position(std::string_view id) const {
    auto it = positions_.find(std::string(id));
    if (it == positions_.end())
      fail(Errc::not_found, "unknown document '" + std::string(id) + "'");
    return it->second;
  }

  const std::optional<FeatureVector>& features(std::uint32_t pos) const {
    return features_.at(pos);
  }

  IngestStats stats() const { return {index_.doc_count(), index_.term_count()}; }

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::uint32_t> positions_;
  InvertedIndex index_;
  std::vector<std::optional<FeatureVector>> features_;
};

namespace detail {

inline std::string line_error(std::size_t line, const std::string& what) {
  return "line " + std::to_string(line) + ": " + what;
}

inline std::vector<Document> read_jsonl(std::istream& in) {
  std::vector<Document> docs;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(Errc::parse, line_error(lineno, std::string("invalid JSON: ") + e.what()));
    }
    if (!rec.is_object())
      fail(Errc::parse, line_error(lineno, "record is not an object"));
    if (!rec.contains("id") || !rec["id"].is_string())
      fail(Errc::parse, line_error(lineno, "missing string field 'id'"));
    if (!rec.contains("text") || !rec["text"].is_string())
      fail(Errc::parse, line_error(lineno, "missing string field 'text'"));
    auto id = rec["id"].get<std::string>();
    if (id.empty()) fail(Errc::parse, line_error(lineno, "empty 'id'"));
    if (!seen.insert(id).second)
      fail(Errc::duplicate,
           line_error(lineno, "duplicate document id '" + id + "'"));
    std::map<std::string, std::string> meta;
    if (rec.contains("meta") && !rec["meta"].is_null()) {
      if (!rec["meta"].is_object())
        fail(Errc::parse, line_error(lineno, "'meta' is not an object"));
      for (const auto& [key, value] : rec["meta"].items())
        meta[key] = value.is_string() ? value.get<std::string>() : value.dump();
    }
    docs.push_back(Document::make(std::move(id), rec["text"].get<std::string>(),
                                  std::move(meta)));
  }
  return docs;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

/// TREC SGML-ish layout: <DOC> <DOCNO>id</DOCNO> ... </DOC>. Text comes from
/// <TEXT> blocks when present, otherwise from every untagged line.
inline std::vector<Document> read_trec_text(std::istream& in) {
  std::vector<Document> docs;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  std::size_t doc_start = 0;
  bool in_doc = false;
  bool in_text = false;
  bool saw_text_tag = false;
  std::optional<std::string> docno;
  std::string text_block;
  std::string loose_text;

  auto append = [](std::string& dst, std::string_view piece) {
    if (piece.empty()) return;
    if (!dst.empty()) dst.push_back('\n');
    dst.append(piece);
  };

  while (std::getline(in, line)) {
    ++lineno;
    std::string_view rest = line;
    while (true) {
      const std::string trimmed = trim(rest);
      if (trimmed.empty()) break;
      if (!in_doc) {
        if (trimmed.rfind("<DOC>", 0) == 0) {
          in_doc = true;
          doc_start = lineno;
          docno.reset();
          text_block.clear();
          loose_text.clear();
          saw_text_tag = false;
          rest = rest.substr(rest.find("<DOC>") + 5);
          continue;
        }
        fail(Errc::parse, line_error(lineno, "content outside <DOC>"));
      }
      const auto tag_pos = rest.find('<');
      if (tag_pos == std::string_view::npos) {
        append(in_text ? text_block : loose_text, trim(rest));
        break;
      }
      append(in_text ? text_block : loose_text, trim(rest.substr(0, tag_pos)));
      const auto close = rest.find('>', tag_pos);
      if (close == std::string_view::npos)
        fail(Errc::parse, line_error(lineno, "unterminated tag"));
      const std::string tag(rest.substr(tag_pos + 1, close - tag_pos - 1));
      rest = rest.substr(close + 1);
      if (tag == "DOC") {
        fail(Errc::parse, line_error(lineno, "nested <DOC>"));
      } else if (tag == "DOCNO") {
        const auto end = rest.find("</DOCNO>");
        if (end == std::string_view::npos)
          fail(Errc::parse, line_error(lineno, "<DOCNO> not closed on its line"));
        docno = trim(rest.substr(0, end));
        rest = rest.substr(end + 8);
      } else if (tag == "TEXT") {
        in_text = true;
        saw_text_tag = true;
      } else if (tag == "/TEXT") {
        in_text = false;
      } else if (tag == "/DOC") {
        if (in_text) fail(Errc::parse, line_error(lineno, "</DOC> inside <TEXT>"));
        if (!docno || docno->empty())
          fail(Errc::parse, line_error(doc_start, "document without <DOCNO>"));
        if (!seen.insert(*docno).second)
          fail(Errc::duplicate,
               line_error(lineno, "duplicate document id '" + *docno + "'"));
        docs.push_back(Document::make(*docno, saw_text_tag ? text_block : loose_text));
        in_doc = false;
      }
      // Other tags (<HEAD>, <DATE>, ...) are dropped; their content is text.
    }
  }
  if (in_doc)
    fail(Errc::parse, line_error(doc_start, "<DOC> not closed before end of input"));
  return docs;
}

}  // namespace detail

inline std::vector<Document> read_documents(std::istream& in, CorpusFormat format) {
  return format == CorpusFormat::jsonl ? detail::read_jsonl(in)
                                       : detail::read_trec_text(in);
}

inline Corpus ingest(std::istream& in, CorpusFormat format) {
  return Corpus(read_documents(in, format));
}

inline Corpus ingest_file(const std::string& path, CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open '" + path + "'");
  try {
    return ingest(in, format);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

/// Canonical on-disk form of a corpus: one JSONL record per document.
inline void write_jsonl(std::ostream& out, const Corpus& corpus) {
  for (const auto& doc : corpus.documents()) {
    nlohmann::json rec{{"id", doc.id}, {"text", doc.text}};
    if (!doc.meta.empty()) rec["meta"] = doc.meta;
    out << rec.dump() << '\n';
  }
}

}  // namespace mimor
