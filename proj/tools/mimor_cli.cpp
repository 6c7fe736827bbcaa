// mimor: command-line front end.
//
//   mimor ingest --input docs.jsonl --format jsonl --out data/index
//   mimor cluster --k 2                    (or --rules rules.json)
//   mimor search --q "fusion" --k 5 --json
//   mimor feedback --q "fusion" --doc d3 --judgment relevant --user alice
//   mimor simulate --queries q.jsonl --qrels q.txt --mode clustered --report r.json
//   mimor serve --port 8080
//   mimor export-weights --out w.json
//
// The model store lives in --data (default $MIMOR_DATA_DIR, else ./mimor-data);
// the index defaults to <data>/index.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "mimor/mimor.hpp"
#include "mimor/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

struct Common {
  std::string data_dir = env_or("MIMOR_DATA_DIR", "mimor-data");
  std::string index_dir;
  std::string config_path;
  bool json_output = false;

  fs::path index() const { return index_dir.empty() ? fs::path(data_dir) / "index" : fs::path(index_dir); }
};

/// Registry defaults for a store that does not exist yet, from --config.
mimor::Registry registry_defaults(const Common& c) {
  mimor::Registry r;
  if (c.config_path.empty()) return r;
  std::ifstream in(c.config_path);
  if (!in) mimor::fail(mimor::Errc::io, "cannot open config '" + c.config_path + "'");
  json j;
  try {
    j = json::parse(in);
    if (j.contains("engines")) {
      r.engines.clear();
      for (const auto& e : j["engines"]) r.engines.push_back(mimor::parse_engine(e.get<std::string>()));
    }
    r.learning_rate = j.value("learning_rate", r.learning_rate);
    r.saturation = j.value("saturation", r.saturation);
    r.weight_init = j.value("weight_init", r.weight_init);
    if (j.contains("mode")) r.mode = mimor::parse_mode(j["mode"].get<std::string>());
  } catch (const json::exception& e) {
    mimor::fail(mimor::Errc::parse, c.config_path + ": " + e.what());
  }
  r.validate();
  return r;
}

mimor::ModelStore open_store(const Common& c) {
  return mimor::ModelStore::load(c.data_dir, registry_defaults(c));
}

std::shared_ptr<const mimor::Corpus> open_corpus(const Common& c) {
  return std::make_shared<const mimor::Corpus>(mimor::load_index(c.index()));
}

json ranked_json(const std::vector<mimor::RankedDoc>& ranked) {
  json out = json::array();
  for (std::size_t i = 0; i < ranked.size(); ++i)
    out.push_back({{"rank", i + 1},
                   {"doc", ranked[i].doc_id},
                   {"score", ranked[i].score},
                   {"rsvs", ranked[i].rsvs},
                   {"membership", ranked[i].membership.values}});
  return out;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) mimor::fail(mimor::Errc::io, "cannot write '" + path + "'");
  out << content;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive linear fusion of retrieval engines learned from relevance feedback"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--data", common.data_dir, "Model store directory")->capture_default_str();
  app.add_option("--index", common.index_dir, "Index directory (default <data>/index)");
  app.add_option("--config", common.config_path, "JSON config for new stores");
  app.add_flag("--json", common.json_output, "Machine-readable output");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Build an index directory from a corpus file");
  std::string ingest_input, ingest_format = "jsonl", ingest_out;
  ingest->add_option("--input", ingest_input)->required();
  ingest->add_option("--format", ingest_format)->check(CLI::IsMember({"jsonl", "trec-text"}));
  ingest->add_option("--out", ingest_out, "Index directory (default <data>/index)");

  // cluster
  auto* cluster = app.add_subcommand("cluster", "Fit and store the document cluster model");
  mimor::FuzzyOptions fuzzy;
  std::string rules_path, export_path;
  cluster->add_option("--k", fuzzy.clusters, "Number of fuzzy clusters")->capture_default_str();
  cluster->add_option("--m", fuzzy.fuzzifier, "Fuzzifier")->capture_default_str();
  cluster->add_option("--tol", fuzzy.tolerance)->capture_default_str();
  cluster->add_option("--max-iter", fuzzy.max_iterations)->capture_default_str();
  cluster->add_option("--seed", fuzzy.seed)->capture_default_str();
  cluster->add_option("--restarts", fuzzy.restarts, "Seeded restarts; the lowest objective wins")->capture_default_str();
  cluster->add_option("--rules", rules_path, "Hard rule file instead of fuzzy c-means");
  cluster->add_option("--export", export_path, "Write per-document memberships as JSONL");

  // search
  auto* search = app.add_subcommand("search", "Rank documents for a query");
  std::string query, user = "anonymous", mode_name, qid;
  std::size_t top_k = 10;
  search->add_option("--q", query)->required();
  search->add_option("--user", user)->capture_default_str();
  search->add_option("--mode", mode_name);
  search->add_option("--k", top_k)->capture_default_str();

  // feedback
  auto* feedback = app.add_subcommand("feedback", "Judge one result and update the models");
  std::string fb_doc, fb_judgment;
  feedback->add_option("--q", query, "Query whose RSVs are learned from")->required();
  feedback->add_option("--doc", fb_doc)->required();
  feedback->add_option("--judgment", fb_judgment)->required();
  feedback->add_option("--user", user)->capture_default_str();
  feedback->add_option("--qid", qid);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Replay qrels as relevance feedback");
  std::string queries_path, qrels_path, report_path, sim_mode = "flat", sim_rules;
  mimor::SessionConfig session;
  mimor::FuzzyOptions sim_fuzzy;
  simulate->add_option("--queries", queries_path)->required();
  simulate->add_option("--qrels", qrels_path)->required();
  simulate->add_option("--mode", sim_mode)
      ->check(CLI::IsMember({"flat", "clustered", "blended", "blended-clustered"}))
      ->capture_default_str();
  simulate->add_option("--epsilon", session.learning_rate)->capture_default_str();
  simulate->add_option("--saturation", session.saturation)->capture_default_str();
  simulate->add_option("--depth", session.judge_depth)->capture_default_str();
  simulate->add_option("--iterations", session.iterations)->capture_default_str();
  simulate->add_option("--seed", session.seed)->capture_default_str();
  simulate->add_option("--report", report_path);
  simulate->add_option("--clusters", sim_fuzzy.clusters, "K for fuzzy clustering")->capture_default_str();
  simulate->add_option("--restarts", sim_fuzzy.restarts, "Seeded restarts for fuzzy clustering")->capture_default_str();
  simulate->add_option("--rules", sim_rules, "Hard rule file instead of fuzzy c-means");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  int port = std::stoi(env_or("MIMOR_PORT", "8080"));
  std::string host = "0.0.0.0";
  long ttl = 3600;
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--ttl", ttl, "Snapshot lifetime in seconds")->capture_default_str();

  // export-weights
  auto* exportw = app.add_subcommand("export-weights", "Write the public weight matrix");
  std::string weights_out;
  exportw->add_option("--out", weights_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0) std::cerr << app.help();
    return code;
  }

  try {
    if (*ingest) {
      auto corpus = mimor::ingest_file(ingest_input, mimor::parse_corpus_format(ingest_format));
      const fs::path out = ingest_out.empty() ? common.index() : fs::path(ingest_out);
      mimor::save_index(out, corpus);
      const auto stats = corpus.stats();
      if (common.json_output)
        std::cout << json{{"doc_count", stats.doc_count}, {"term_count", stats.term_count}}.dump() << '\n';
      else
        std::cout << "indexed " << stats.doc_count << " documents, " << stats.term_count
                  << " terms into " << out.string() << '\n';
    } else if (*cluster) {
      const auto corpus = open_corpus(common);
      auto store = open_store(common);
      if (!store.log().empty())
        mimor::fail(mimor::Errc::invalid_argument,
                    "store already holds feedback; weights are tied to the current clusters. "
                    "Use a fresh --data directory to recluster.");
      mimor::ClusterModel model;
      if (!rules_path.empty()) {
        std::ifstream in(rules_path);
        if (!in) mimor::fail(mimor::Errc::io, "cannot open '" + rules_path + "'");
        model = mimor::rule_model(mimor::parse_rules(json::parse(in)));
      } else {
        std::vector<mimor::FeatureVector> feats;
        for (std::uint32_t d = 0; d < corpus->size(); ++d)
          if (const auto& f = corpus->features(d)) feats.push_back(*f);
        model = mimor::fit_fuzzy(feats, fuzzy);
      }
      auto registry = store.registry();
      registry.clusters = model.k;
      if (model.k > 1 && registry.mode == mimor::FusionMode::flat) registry.mode = mimor::FusionMode::clustered;
      if (model.k > 1 && registry.mode == mimor::FusionMode::blended)
        registry.mode = mimor::FusionMode::blended_clustered;
      if (model.k == 1 && registry.mode == mimor::FusionMode::clustered) registry.mode = mimor::FusionMode::flat;
      if (model.k == 1 && registry.mode == mimor::FusionMode::blended_clustered)
        registry.mode = mimor::FusionMode::blended;
      std::optional<mimor::ClusterModel> stored;
      if (model.k > 1) stored = model;
      mimor::ModelStore fresh(registry, stored);
      fresh.save(common.data_dir);
      if (!export_path.empty()) {
        std::ofstream out(export_path, std::ios::binary | std::ios::trunc);
        if (!out) mimor::fail(mimor::Errc::io, "cannot write '" + export_path + "'");
        mimor::write_assignments(out, model, *corpus);
      }
      if (common.json_output)
        std::cout << mimor::to_json(model).dump() << '\n';
      else
        std::cout << "cluster model: " << mimor::to_string(model.mode) << ", K=" << model.k
                  << (model.mode == mimor::ClusterMode::fuzzy
                          ? ", " + std::to_string(model.iterations) + " iterations"
                          : std::string{})
                  << '\n';
    } else if (*search) {
      mimor::Mimor mimor(open_corpus(common), open_store(common));
      const auto mode = mode_name.empty() ? mimor.registry().mode : mimor::parse_mode(mode_name);
      const auto ranked = mimor.rank(query, user, mode, top_k);
      if (common.json_output) {
        std::cout << ranked_json(ranked).dump() << '\n';
      } else {
        std::cout << std::fixed << std::setprecision(6);
        for (std::size_t i = 0; i < ranked.size(); ++i)
          std::cout << std::setw(4) << i + 1 << "  " << std::setw(10) << ranked[i].score << "  "
                    << ranked[i].doc_id << '\n';
      }
    } else if (*feedback) {
      mimor::Mimor mimor(open_corpus(common), open_store(common));
      const auto run = mimor.retrieve(query, qid.empty() ? query : qid);
      const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count();
      const auto event = mimor.feedback(run, user, fb_doc, mimor::parse_judgment(fb_judgment), now);
      mimor.store().save(common.data_dir);
      const auto& u = *mimor.store().find_user(user);
      if (common.json_output)
        std::cout << json{{"event", mimor::to_json(event)}, {"n", u.feedback_count}, {"p", u.p}}.dump()
                  << '\n';
      else
        std::cout << "recorded " << mimor::to_string(event.judgment) << " for " << fb_doc
                  << "; user " << user << " n=" << u.feedback_count << " p=" << u.p << '\n';
    } else if (*simulate) {
      session.mode = mimor::parse_mode(sim_mode);
      const auto corpus = open_corpus(common);
      const auto queries = mimor::load_queries_file(queries_path);
      const auto qrels = mimor::load_qrels_file(qrels_path);
      std::optional<mimor::ClusterModel> model;
      if (mimor::uses_clusters(session.mode)) {
        if (!sim_rules.empty()) {
          std::ifstream in(sim_rules);
          if (!in) mimor::fail(mimor::Errc::io, "cannot open '" + sim_rules + "'");
          model = mimor::rule_model(mimor::parse_rules(json::parse(in)));
        } else {
          std::vector<mimor::FeatureVector> feats;
          for (std::uint32_t d = 0; d < corpus->size(); ++d)
            if (const auto& f = corpus->features(d)) feats.push_back(*f);
          sim_fuzzy.seed = session.seed;
          model = mimor::fit_fuzzy(feats, sim_fuzzy);
        }
      }
      const auto engines = registry_defaults(common).engines;
      const auto report = mimor::simulate_session(corpus, engines, model, queries, qrels, session);
      if (!report_path.empty()) write_text(report_path, mimor::to_json(report).dump(2) + "\n");
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
      if (common.json_output)
        std::cout << mimor::to_json(report).dump() << '\n';
      else
        std::cout << mimor::summary_table(report);
    } else if (*serve) {
      mimor::Mimor mimor(open_corpus(common), open_store(common));
      mimor.store().attach(common.data_dir);
      mimor::ServiceOptions options;
      options.snapshot_ttl = std::chrono::seconds(ttl);
      mimor::Service service(std::move(mimor), options);
      httplib::Server server;
      service.bind(server);
      std::cerr << "listening on " << host << ":" << port << '\n';
      if (!server.listen(host, port)) mimor::fail(mimor::Errc::io, "cannot listen on port " + std::to_string(port));
    } else if (*exportw) {
      const auto store = open_store(common);
      write_text(weights_out, mimor::weights_payload(store).dump(2) + "\n");
      if (!common.json_output) std::cout << "wrote " << weights_out << '\n';
    }
  } catch (const mimor::Error& e) {
    std::cerr << "error (" << mimor::to_string(e.code()) << "): " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
