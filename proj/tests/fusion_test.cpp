#include <gtest/gtest.h>

#include <random>

#include "mimor/fusion.hpp"
#include "oracles.hpp"

namespace mimor {
namespace {

using V = std::vector<double>;

MembershipVector memb(V v) { return MembershipVector{std::move(v)}; }

TEST(FuseFlat, Examples) {
  EXPECT_DOUBLE_EQ(fuse_flat(V{1, 1}, V{0.4, 0.6}), 0.5);
  EXPECT_EQ(fuse_flat(V{0, 0}, V{0.3, 0.9}), 0.0);
  EXPECT_NEAR(fuse_flat(V{0.8, 0.2}, V{0.5, 1.0}), 0.3, 1e-15);
}

TEST(FuseFlat, LengthMismatch) {
  EXPECT_THROW(fuse_flat(V{1, 1}, V{0.4}), Error);
  EXPECT_THROW(fuse_flat(V{}, V{}), Error);
}

TEST(FuseClustered, Examples) {
  const auto w = WeightMatrix::from_rows({{0.6, 0.2}});
  EXPECT_NEAR(fuse_clustered(w, memb({1, 0}), V{0.5}), 0.15, 1e-15);
  EXPECT_EQ(fuse_clustered(w, memb({0, 0}), V{0.5}), 0.0);
  EXPECT_THROW(fuse_clustered(w, memb({1}), V{0.5}), Error);
  EXPECT_THROW(fuse_clustered(w, memb({1, 0}), V{0.5, 0.5}), Error);
}

TEST(FuseClustered, SingleClusterIsFlat) {
  const auto w = WeightMatrix::from_rows({{0.3}, {0.9}, {0.55}});
  const V rsv{0.2, 0.7, 1.0};
  EXPECT_EQ(fuse_clustered(w, memb({1.0}), rsv), fuse_flat(w.column(0), rsv));
}

TEST(FuseBlended, Examples) {
  const V priv{0.9, 0.1}, pub{0.4, 0.6}, rsv{0.3, 0.8};
  EXPECT_EQ(fuse_blended(priv, pub, 1.0, rsv), fuse_flat(priv, rsv));
  EXPECT_EQ(fuse_blended(priv, pub, 0.0, rsv), fuse_flat(pub, rsv));
  EXPECT_NEAR(fuse_blended(V{1, 0}, V{0, 1}, 0.5, V{0.6, 0.8}), 0.35, 1e-15);
  EXPECT_THROW(fuse_blended(priv, pub, 1.5, rsv), Error);
  EXPECT_THROW(fuse_blended(priv, pub, -0.1, rsv), Error);
  EXPECT_THROW(fuse_blended(priv, V{0.4}, 0.5, rsv), Error);
}

TEST(LearnFlat, Examples) {
  EXPECT_EQ(learn_flat(V{0.5, 0.7}, Judgment::relevant, V{0.0, 0.0}, 0.1), (V{0.5, 0.7}));
  EXPECT_NEAR(learn_flat(V{0.5}, Judgment::relevant, V{0.5}, 0.1)[0], 0.55, 1e-15);
  EXPECT_EQ(learn_flat(V{0.99}, Judgment::relevant, V{0.5}, 0.1)[0], 1.0);
  EXPECT_EQ(learn_flat(V{0.01}, Judgment::nonrelevant, V{0.5}, 0.1)[0], 0.0);
  EXPECT_NEAR(learn_flat(V{0.5}, Judgment::nonrelevant, V{0.5}, 0.1)[0], 0.45, 1e-15);
}

TEST(LearnClustered, Examples) {
  const WeightMatrix w(1, 2, 0.5);
  const auto out = learn_clustered(w, memb({0.5, 0.0}), Judgment::relevant, V{0.8}, 0.1);
  EXPECT_NEAR(out(0, 0), 0.54, 1e-15);
  EXPECT_EQ(out(0, 1), 0.5);
  EXPECT_THROW(learn_clustered(w, memb({1.0}), Judgment::relevant, V{0.8}, 0.1), Error);
}

TEST(LearnClustered, SingleClusterIsFlat) {
  const auto w = WeightMatrix::from_rows({{0.2}, {0.5}, {0.97}});
  const V rsv{0.4, 0.0, 0.9};
  for (auto rf : {Judgment::relevant, Judgment::nonrelevant})
    EXPECT_EQ(learn_clustered(w, memb({1.0}), rf, rsv, 0.05).column(0),
              learn_flat(w.column(0), rf, rsv, 0.05));
}

TEST(WeightMatrixType, ClampsAndValidates) {
  WeightMatrix w(2, 3);
  EXPECT_EQ(w(1, 2), 0.5);
  w.set(0, 0, 1.7);
  w.set(0, 1, -3);
  EXPECT_EQ(w(0, 0), 1.0);
  EXPECT_EQ(w(0, 1), 0.0);
  EXPECT_THROW(w.at(2, 0), Error);
  EXPECT_THROW(WeightMatrix(0, 1), Error);
  EXPECT_THROW(WeightMatrix::from_rows({{0.1, 0.2}, {0.3}}), Error);
  EXPECT_THROW(WeightMatrix::from_rows({{1.2}}), Error);
  EXPECT_EQ(weight_matrix_from_json(to_json(w)), w);
}

TEST(FusionConfigType, Validation) {
  EXPECT_NO_THROW((FusionConfig{}.validate()));
  EXPECT_THROW((FusionConfig{.learning_rate = 1.5}.validate()), Error);
  EXPECT_THROW((FusionConfig{.weight_init = -0.1}.validate()), Error);
  EXPECT_EQ(parse_mode("blended-clustered"), FusionMode::blended_clustered);
  EXPECT_THROW(parse_mode("hybrid"), Error);
  EXPECT_EQ(parse_judgment("nonrelevant"), Judgment::nonrelevant);
  EXPECT_THROW(parse_judgment("maybe"), Error);
}

class Random {
 public:
  explicit Random(std::uint64_t seed) : rng_(seed) {}
  double unit() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  std::size_t between(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  V vec(std::size_t n) {
    V v(n);
    for (auto& x : v) x = unit();
    return v;
  }
  WeightMatrix matrix(std::size_t n, std::size_t k) {
    WeightMatrix w(n, k);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t c = 0; c < k; ++c) w.set(s, c, unit());
    return w;
  }

 private:
  std::mt19937_64 rng_;
};

TEST(Properties, Boundedness) {
  Random r(21);
  for (int i = 0; i < 500; ++i) {
    const auto n = r.between(1, 5), k = r.between(1, 4);
    const auto w = r.matrix(n, k), w2 = r.matrix(n, k);
    const auto rsv = r.vec(n);
    const auto h = memb(r.vec(k));
    for (double v : {fuse_flat(w.column(0), rsv), fuse_blended(w.column(0), w2.column(0), r.unit(), rsv),
                     fuse_clustered(w, h, rsv), fuse_blended_clustered(w, w2, r.unit(), h, rsv)}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Properties, MonotoneCreditAssignment) {
  Random r(22);
  for (int i = 0; i < 500; ++i) {
    const auto n = r.between(2, 5);
    const V w(n, 0.3);
    const auto rsv = r.vec(n);
    const auto out = learn_flat(w, Judgment::relevant, rsv, 0.05);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        if (rsv[a] > rsv[b]) {
          EXPECT_GT(out[a] - w[a], out[b] - w[b]);
        }
  }
}

TEST(Properties, UpdateLocality) {
  Random r(23);
  for (int i = 0; i < 500; ++i) {
    const auto n = r.between(1, 5), k = r.between(1, 4);
    const auto w = r.matrix(n, k);
    auto rsv = r.vec(n);
    auto h = r.vec(k);
    rsv[r.between(0, n - 1)] = 0.0;
    h[r.between(0, k - 1)] = 0.0;
    const auto out = learn_clustered(w, memb(h), Judgment::nonrelevant, rsv, 0.05);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t c = 0; c < k; ++c)
        if (h[c] * rsv[s] == 0.0) {
          EXPECT_EQ(out(s, c), w(s, c));
        }
  }
}

TEST(Properties, MatchesOracle) {
  Random r(24);
  for (int i = 0; i < 300; ++i) {
    const auto n = r.between(1, 5), k = r.between(1, 4);
    const auto w = r.matrix(n, k), pub = r.matrix(n, k);
    const auto rsv = r.vec(n);
    const auto h = r.vec(k);
    const double p = r.unit();
    EXPECT_NEAR(fuse_flat(w.column(0), rsv), oracle::flat(w.column(0), rsv), 1e-12);
    EXPECT_NEAR(fuse_blended(w.column(0), pub.column(0), p, rsv),
                oracle::blended(w.column(0), pub.column(0), p, rsv), 1e-12);
    EXPECT_NEAR(fuse_clustered(w, memb(h), rsv), oracle::clustered(w.rows(), h, rsv), 1e-12);
    const auto learned = learn_clustered(w, memb(h), Judgment::relevant, rsv, 0.05).rows();
    const auto expected = oracle::learn_clustered(w.rows(), h, 1, rsv, 0.05);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t c = 0; c < k; ++c) EXPECT_NEAR(learned[s][c], expected[s][c], 1e-12);
  }
}

TEST(Properties, BlendedClusteredReducesToFlat) {
  Random r(25);
  for (int i = 0; i < 200; ++i) {
    const auto n = r.between(1, 5);
    const auto priv = r.matrix(n, 1), pub = r.matrix(n, 1);
    const auto rsv = r.vec(n);
    EXPECT_EQ(fuse_blended_clustered(priv, pub, 1.0, memb({1.0}), rsv), fuse_flat(priv.column(0), rsv));
  }
}

}  // namespace
}  // namespace mimor
