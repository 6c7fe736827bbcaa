#include <gtest/gtest.h>

#include <random>

#include "mimor/ranker.hpp"
#include "oracles.hpp"

namespace mimor {
namespace {

const std::vector<std::string> kWords = {"fusion", "retrieval", "engine", "cluster", "weight",
                                         "user",   "model",     "query",  "score",   "learn"};

std::shared_ptr<const Corpus> random_corpus(std::mt19937_64& rng, std::size_t docs) {
  std::vector<Document> out;
  for (std::size_t d = 0; d < docs; ++d) {
    std::string text;
    const auto len = 3 + rng() % 40;
    for (std::size_t i = 0; i < len; ++i) {
      text += kWords[rng() % kWords.size()];
      text += (rng() % 6 == 0) ? ". " : " ";
    }
    out.push_back(Document::make("doc" + std::to_string(100 + d), text));
  }
  return std::make_shared<const Corpus>(std::move(out));
}

ClusterModel length_rules() {
  return rule_model({{"short", Feature::doc_length, HardRule::Op::less, 20, false},
                     {"long", Feature::doc_length, HardRule::Op::greater_equal, 20, false}});
}

WeightMatrix random_matrix(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  WeightMatrix w(n, k);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t c = 0; c < k; ++c) w.set(s, c, u(rng));
  return w;
}

std::vector<std::string> ids(const std::vector<RankedDoc>& ranked) {
  std::vector<std::string> out;
  for (const auto& r : ranked) out.push_back(r.doc_id);
  return out;
}

TEST(Rank, SingleMatchingDocumentFirst) {
  auto corpus = std::make_shared<const Corpus>(std::vector<Document>{
      Document::make("a", "alpha beta"), Document::make("b", "gamma delta"),
      Document::make("c", "epsilon")});
  const Mimor m(corpus, ModelStore());
  const auto ranked = m.rank("gamma", "u", FusionMode::flat, 10);
  ASSERT_EQ(ranked.size(), 1u);
  EXPECT_EQ(ranked[0].doc_id, "b");
}

TEST(Rank, TiesBrokenByDocId) {
  auto corpus = std::make_shared<const Corpus>(std::vector<Document>{
      Document::make("z", "same words here"), Document::make("m", "same words here"),
      Document::make("a", "same words here")});
  const Mimor m(corpus, ModelStore());
  EXPECT_EQ(ids(m.rank("words", "u", FusionMode::flat, 10)), (std::vector<std::string>{"a", "m", "z"}));
  EXPECT_EQ(ids(m.rank("words", "u", FusionMode::flat, 2)), (std::vector<std::string>{"a", "m"}));
}

TEST(Rank, Errors) {
  auto corpus = std::make_shared<const Corpus>(std::vector<Document>{Document::make("a", "x y")});
  const Mimor m(corpus, ModelStore());
  EXPECT_THROW(m.rank("", "u", FusionMode::flat, 10), Error);
  EXPECT_THROW(m.rank("?!", "u", FusionMode::flat, 10), Error);
  EXPECT_THROW(m.rank("x", "u", FusionMode::flat, 0), Error);
}

TEST(Rank, FlatModeNeedsSingleCluster) {
  std::mt19937_64 rng(1);
  Registry reg;
  reg.clusters = 2;
  const Mimor m(random_corpus(rng, 10), ModelStore(reg, length_rules()));
  EXPECT_THROW(m.rank("fusion", "u", FusionMode::flat, 5), Error);
  EXPECT_THROW(m.rank("fusion", "u", FusionMode::blended, 5), Error);
  EXPECT_NO_THROW(m.rank("fusion", "u", FusionMode::clustered, 5));
  EXPECT_NO_THROW(m.rank("fusion", "u", FusionMode::blended_clustered, 5));
}

TEST(Rank, MissingEnginesContributeZero) {
  std::mt19937_64 rng(2);
  const Mimor m(random_corpus(rng, 20), ModelStore());
  const auto run = m.retrieve("fusion zzz");
  for (const auto& c : run.candidates) {
    ASSERT_EQ(c.rsvs.size(), 3u);
    for (std::size_t s = 0; s < 3; ++s) {
      const auto& scores = run.lists[s].scores;
      const auto it = scores.find(c.doc_id);
      EXPECT_EQ(c.rsvs[s], it == scores.end() ? 0.0 : it->second);
    }
  }
}

// Every document is scored directly from the per-engine lists and the
// clustered formula, then sorted independently of the library.
TEST(Rank, MatchesBruteForceClusteredOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto corpus = random_corpus(rng, 20);
    const auto rules = length_rules();
    Registry reg;
    reg.clusters = 2;
    const Mimor m(corpus, ModelStore(reg, rules));
    const auto w = random_matrix(rng, 3, 2);
    const std::string query = kWords[rng() % kWords.size()] + " " + kWords[rng() % kWords.size()];
    const auto run = m.retrieve(query);
    const auto ranked = rank_candidates(run.candidates, FusionMode::clustered, {w}, 1000);

    std::vector<std::pair<double, std::string>> expected;
    for (const auto& doc : corpus->documents()) {
      std::vector<double> rsv(3, 0.0);
      bool hit = false;
      for (std::size_t s = 0; s < 3; ++s) {
        const auto it = run.lists[s].scores.find(doc.id);
        if (it != run.lists[s].scores.end()) {
          rsv[s] = it->second;
          hit = true;
        }
      }
      if (!hit) continue;
      const double len = static_cast<double>(tokenize(doc.text).size());
      const std::vector<double> h = len < 20 ? std::vector<double>{1, 0} : std::vector<double>{0, 1};
      expected.emplace_back(oracle::clustered(w.rows(), h, rsv), doc.id);
    }
    std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
      if (std::abs(a.first - b.first) > 1e-12) return a.first > b.first;
      return a.second < b.second;
    });
    ASSERT_EQ(ranked.size(), expected.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      EXPECT_EQ(ranked[i].doc_id, expected[i].second) << "trial " << trial << " rank " << i;
      EXPECT_NEAR(ranked[i].score, expected[i].first, 1e-12);
    }
  }
}

TEST(Rank, PositiveScalingKeepsOrder) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const auto corpus = random_corpus(rng, 20);
    Registry reg;
    reg.clusters = 2;
    const Mimor m(corpus, ModelStore(reg, length_rules()));
    const auto run = m.retrieve(kWords[rng() % kWords.size()]);
    const auto w = random_matrix(rng, 3, 2);
    const auto base = rank_candidates(run.candidates, FusionMode::clustered, {w}, 1000);
    for (double c : {0.1, 0.5}) {
      const auto scaled = rank_candidates(run.candidates, FusionMode::clustered, {w.scaled(c)}, 1000);
      EXPECT_EQ(ids(scaled), ids(base));
      for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(scaled[i].score, c * base[i].score, 1e-12);
    }
  }
}

TEST(Rank, ReportedScoreIsFusionOfBreakdown) {
  std::mt19937_64 rng(5);
  Registry reg;
  reg.clusters = 2;
  const Mimor m(random_corpus(rng, 20), ModelStore(reg, length_rules()));
  // A fresh user has p = 0, so both modes reduce to the public matrix.
  for (auto mode : {FusionMode::clustered, FusionMode::blended_clustered}) {
    for (const auto& r : m.rank("model score", "u", mode, 20)) {
      const double direct = oracle::clustered(m.store().public_model().public_weights.rows(),
                                              r.membership.values, r.rsvs);
      EXPECT_NEAR(r.score, direct, 1e-9);
    }
  }
}

TEST(Feedback, UsesDisplayedRsvs) {
  std::mt19937_64 rng(6);
  Mimor m(random_corpus(rng, 20), ModelStore());
  const auto run = m.retrieve("fusion", "q7");
  ASSERT_FALSE(run.candidates.empty());
  const auto& judged = run.candidates.front();
  const auto e = m.feedback(run, "erin", judged.doc_id, Judgment::relevant, 5);
  EXPECT_EQ(e.rsvs, judged.rsvs);
  EXPECT_EQ(e.query_id, "q7");
  const auto want = oracle::learn_flat({0.5, 0.5, 0.5}, 1, judged.rsvs, 0.05);
  EXPECT_EQ(m.store().public_model().public_weights.column(0), want);
  EXPECT_EQ(m.store().find_user("erin")->feedback_count, 1u);
  EXPECT_THROW(m.feedback(run, "erin", "no-such-doc", Judgment::relevant), Error);
}

TEST(Feedback, DocumentOutsideRunLearnsNothing) {
  auto corpus = std::make_shared<const Corpus>(std::vector<Document>{
      Document::make("a", "alpha"), Document::make("b", "beta")});
  Mimor m(corpus, ModelStore());
  const auto run = m.retrieve("alpha");
  m.feedback(run, "u", "b", Judgment::nonrelevant);
  EXPECT_EQ(m.store().public_model().public_weights, WeightMatrix(3, 1, 0.5));
  EXPECT_EQ(m.store().public_model().total_feedback, 1u);
}

TEST(Memberships, FeaturelessDocuments) {
  auto corpus = std::make_shared<const Corpus>(std::vector<Document>{
      Document::make("a", "alpha"), Document::make("empty", "")});
  const Mimor flat(corpus, ModelStore());
  EXPECT_EQ(flat.membership_of("empty").values, std::vector<double>{1.0});
  Registry reg;
  reg.clusters = 2;
  const Mimor clustered(corpus, ModelStore(reg, length_rules()));
  EXPECT_EQ(clustered.membership_of("empty").values, (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(clustered.membership_of("a").values, (std::vector<double>{1.0, 0.0}));
}

}  // namespace
}  // namespace mimor
