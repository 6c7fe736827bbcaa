#pragma once

/// \file index_dir.hpp
/// \brief On-disk index directory: `corpus.jsonl` plus `manifest.json`.
/// The inverted index is rebuilt on load; the build is deterministic.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mimor/corpus.hpp"
#include "mimor/error.hpp"

namespace mimor {

inline void save_index(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "corpus.jsonl", std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io, (dir / "corpus.jsonl").string() + ": cannot write");
    write_jsonl(out, corpus);
  }
  const auto stats = corpus.stats();
  std::ofstream manifest(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!manifest) fail(Errc::io, (dir / "manifest.json").string() + ": cannot write");
  manifest << nlohmann::json{{"doc_count", stats.doc_count}, {"term_count", stats.term_count}}.dump(2)
           << '\n';
}

inline Corpus load_index(const std::filesystem::path& dir) {
  const auto path = dir / "corpus.jsonl";
  if (!std::filesystem::exists(path))
    fail(Errc::not_found, path.string() + ": no index here (run `ingest` first)");
  Corpus corpus = ingest_file(path.string(), CorpusFormat::jsonl);
  const auto manifest_path = dir / "manifest.json";
  if (std::filesystem::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    nlohmann::json m;
    try {
      m = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      fail(Errc::parse, manifest_path.string() + ": " + e.what());
    }
    const auto stats = corpus.stats();
    if (m.value("doc_count", stats.doc_count) != stats.doc_count ||
        m.value("term_count", stats.term_count) != stats.term_count)
      fail(Errc::parse, manifest_path.string() + ": statistics disagree with corpus.jsonl");
  }
  return corpus;
}

}  // namespace mimor
