#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "structkit/relations.hpp"
#include "structkit/rng.hpp"

using namespace structkit;

namespace {

UnitQuaternion random_quat(Rng& rng) {
  return UnitQuaternion::normalized(rng.normal(), rng.normal(), rng.normal(), rng.normal());
}

OrientedBox random_box(Rng& rng, double spread) {
  const Vec3 c(rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(-spread, spread));
  const Vec3 s(rng.uniform(0.2, 1.5), rng.uniform(0.2, 1.5), rng.uniform(0.2, 1.5));
  return {c, s, random_quat(rng)};
}

// Same solid, rotation relabeled by G: R' = R G, sizes follow the axes.
OrientedBox relabel(const OrientedBox& b, const Mat3& g) {
  const Mat3 r = b.rotation_matrix().matrix() * g;
  const Vec3 s = g.cwiseAbs().transpose() * b.size;
  return {b.center, s, matrix_to_quat(RotationMatrix::unchecked(r))};
}

// Point to solid box, written out in the box frame.
double point_to_solid(const Vec3& p, const OrientedBox& b) {
  const Vec3 local = b.rotation_matrix().matrix().transpose() * (p - b.center);
  const Vec3 h = b.half_extents();
  Vec3 d;
  for (int k = 0; k < 3; ++k) d[k] = std::max(0.0, std::abs(local[k]) - h[k]);
  return d.norm();
}

double sampled_gap(const OrientedBox& a, const OrientedBox& b, std::size_t n, std::uint64_t seed) {
  double best = INFINITY;
  for (const Vec3& p : sample_box_surface(a, n, seed)) best = std::min(best, point_to_solid(p, b));
  for (const Vec3& p : sample_box_surface(b, n, seed + 1)) best = std::min(best, point_to_solid(p, a));
  return best;
}

std::vector<PartPairScore> full_scores(std::size_t n, double value) {
  std::vector<PartPairScore> s;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) s.push_back({i, j, value, value, ScoreSource::kOracle});
  }
  return s;
}

}  // namespace

TEST(TranslationalSymmetry, PureTranslateIsSymmetric) {
  const OrientedBox a({0, 0, 0}, {1, 2, 3}, UnitQuaternion::normalized(1, 0.2, -0.1, 0.4));
  OrientedBox b = a;
  b.center = Vec3(3, -1, 2);
  EXPECT_TRUE(oracle_translational_symmetry(a, b));
}

TEST(TranslationalSymmetry, ScaledCopyIsNot) {
  const OrientedBox a({0, 0, 0}, {1, 2, 3}, UnitQuaternion());
  const OrientedBox b({2, 0, 0}, {2, 4, 6}, UnitQuaternion());
  EXPECT_FALSE(oracle_translational_symmetry(a, b));
}

TEST(TranslationalSymmetry, QuarterTurnAboutAxisWithTwoEqualEdges) {
  // Edges 2, 2, 1; a quarter turn about the short axis maps the solid to itself.
  const OrientedBox a({0, 0, 0}, {2, 2, 1}, UnitQuaternion());
  const double h = std::sqrt(0.5);
  const OrientedBox b({5, 0, 0}, {2, 2, 1}, UnitQuaternion::normalized(h, 0, 0, h));
  EXPECT_TRUE(oracle_translational_symmetry(a, b));
  EXPECT_LT(rotation_set_distance(b.rotation_matrix(), equivalence_set(a.rotation_matrix())), 1e-12);
}

TEST(TranslationalSymmetry, QuarterTurnAboutLongAxisOfUnequalBoxIsNot) {
  const OrientedBox a({0, 0, 0}, {1, 2, 3}, UnitQuaternion());
  const double h = std::sqrt(0.5);
  const OrientedBox b({5, 0, 0}, {1, 2, 3}, UnitQuaternion::normalized(h, 0, 0, h));
  EXPECT_FALSE(oracle_translational_symmetry(a, b));
}

TEST(TranslationalSymmetry, ReflexiveSymmetricAndRelabelingInvariant) {
  Rng rng(5);
  const auto& perms = signed_permutations();
  for (int t = 0; t < 200; ++t) {
    const OrientedBox a = random_box(rng, 2.0);
    OrientedBox b = t % 2 == 0 ? a : random_box(rng, 2.0);
    b.center = Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    EXPECT_TRUE(oracle_translational_symmetry(a, a));
    const bool ab = oracle_translational_symmetry(a, b);
    EXPECT_EQ(ab, oracle_translational_symmetry(b, a));
    EXPECT_EQ(ab, t % 2 == 0);
    const Mat3& g = perms[rng.below(perms.size())];
    // Keep proper rotations so the relabeled quaternion is well defined.
    if (g.determinant() < 0) continue;
    EXPECT_EQ(ab, oracle_translational_symmetry(relabel(a, g), relabel(b, g)));
  }
}

TEST(Adjacency, FaceSharingCubesTouch) {
  const OrientedBox a({0, 0, 0}, {1, 1, 1}, UnitQuaternion());
  const OrientedBox b({1, 0, 0}, {1, 1, 1}, UnitQuaternion());
  EXPECT_TRUE(oracle_adjacency(a, b, 1e-6));
}

TEST(Adjacency, CubesHalfApartDoNotTouch) {
  const OrientedBox a({0, 0, 0}, {1, 1, 1}, UnitQuaternion());
  const OrientedBox b({1.5, 0, 0}, {1, 1, 1}, UnitQuaternion());
  EXPECT_FALSE(oracle_adjacency(a, b, 0.01));
}

TEST(Adjacency, AgreesWithDenseSamplingBruteForce) {
  Rng rng(77);
  const double band = 0.05;  // spacing of 10k samples on unit-scale boxes
  for (int t = 0; t < 200; ++t) {
    const OrientedBox a = random_box(rng, 1.0);
    const OrientedBox b = random_box(rng, 1.0);
    const double exact = box_distance(a, b);
    const double brute = sampled_gap(a, b, 10000, 1000 + static_cast<std::uint64_t>(t));
    EXPECT_GE(brute, exact - 1e-9) << t;
    EXPECT_LE(brute, exact + band) << t;
    // Decisions agree outside the band.
    if (brute <= 0.1) EXPECT_TRUE(oracle_adjacency(a, b, 0.1 + band));
    if (brute > 0.1 + band) EXPECT_FALSE(oracle_adjacency(a, b, 0.1));
  }
}

TEST(Adjacency, SampledGapOverestimatesExact) {
  Rng rng(3);
  for (int t = 0; t < 30; ++t) {
    const OrientedBox a = random_box(rng, 1.0);
    const OrientedBox b = random_box(rng, 1.0);
    EXPECT_GE(sampled_box_gap(a, b, 2000, 9), box_distance(a, b) - 1e-9);
  }
}

TEST(OracleScores, BinaryAndCoverEveryPair) {
  const OrientedBox a({0, 0, 0}, {1, 1, 1}, UnitQuaternion());
  const OrientedBox b({1, 0, 0}, {1, 1, 1}, UnitQuaternion());
  const OrientedBox c({0, 3, 0}, {1, 1, 2}, UnitQuaternion());
  const std::vector<OrientedBox> parts{a, b, c};
  const auto s = oracle_scores(parts);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].i, 0u);
  EXPECT_EQ(s[0].j, 1u);
  EXPECT_EQ(s[0].symmetry, 1.0);
  EXPECT_EQ(s[0].adjacency, 1.0);
  EXPECT_EQ(s[1].symmetry, 0.0);
  EXPECT_EQ(s[1].adjacency, 0.0);
  for (const auto& p : s) EXPECT_EQ(p.source, ScoreSource::kOracle);
}

TEST(Cluster, AllOnesGiveOneGroup) {
  const std::vector<double> vol{1, 2, 3, 4};
  const auto g = cluster_parts(full_scores(4, 1.0), vol, 0.9);
  ASSERT_EQ(g.groups.size(), 1u);
  EXPECT_EQ(g.groups[0], (std::vector<std::size_t>{3, 2, 1, 0}));
}

TEST(Cluster, AllZerosGiveSingletons) {
  const std::vector<double> vol{1, 1, 1};
  const auto g = cluster_parts(full_scores(3, 0.0), vol, 0.9);
  ASSERT_EQ(g.groups.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(g.groups[k], std::vector<std::size_t>{k});
}

TEST(Cluster, CliqueConditionBlocksTheThirdPart) {
  // A=0, B=1, C=2 with volumes A ≥ B ≥ C.
  const std::vector<PartPairScore> s{{0, 1, 0.95, 0, ScoreSource::kLearned},
                                     {1, 2, 0.95, 0, ScoreSource::kLearned},
                                     {0, 2, 0.30, 0, ScoreSource::kLearned}};
  const std::vector<double> vol{3, 2, 1};
  const auto g = cluster_parts(s, vol, 0.9);
  ASSERT_EQ(g.groups.size(), 2u);
  EXPECT_EQ(g.groups[0], (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(g.groups[1], (std::vector<std::size_t>{2}));
  EXPECT_EQ(g.membership(3), (std::vector<std::size_t>{0, 0, 1}));
}

TEST(Cluster, RandomScoresAlwaysFormCliques) {
  Rng rng(2024);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + rng.below(11);
    std::vector<PartPairScore> s;
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double v = rng.uniform() < 0.5 ? rng.uniform(0.85, 1.0) : rng.uniform();
        m[i][j] = m[j][i] = v;
        // Either orientation of the pair is accepted.
        if (rng.uniform() < 0.5) {
          s.push_back({i, j, v, 0, ScoreSource::kLearned});
        } else {
          s.push_back({j, i, v, 0, ScoreSource::kLearned});
        }
      }
    }
    std::vector<double> vol(n);
    for (auto& v : vol) v = std::floor(rng.uniform(1, 4));  // frequent ties
    const auto g = cluster_parts(s, vol, 0.9);

    std::vector<int> seen(n, 0);
    for (const auto& group : g.groups) {
      for (std::size_t a : group) {
        ++seen[a];
        for (std::size_t b : group) {
          if (a != b) ASSERT_GE(m[a][b], 0.9);
        }
      }
    }
    for (int c : seen) ASSERT_EQ(c, 1);
    ASSERT_TRUE(satisfies_clique_property(g, s, n, 0.9));
  }
}

TEST(Cluster, DeterministicAndTiesGoToLowerIndex) {
  const std::vector<double> vol{1, 1, 1};
  const auto a = cluster_parts(full_scores(3, 1.0), vol, 0.9);
  const auto b = cluster_parts(full_scores(3, 1.0), vol, 0.9);
  EXPECT_EQ(a.groups, b.groups);
  EXPECT_EQ(a.groups[0], (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Cluster, CliqueCheckRejectsBadGroupings) {
  const auto s = full_scores(3, 0.0);
  SymmetryGrouping g;
  g.groups = {{0, 1}, {2}};
  EXPECT_FALSE(satisfies_clique_property(g, s, 3, 0.9));
  g.groups = {{0}, {1}};
  EXPECT_FALSE(satisfies_clique_property(g, s, 3, 0.9));
  g.groups = {{0}, {1}, {2}};
  EXPECT_TRUE(satisfies_clique_property(g, s, 3, 0.9));
}

TEST(AdjacentPairs, ThresholdIsInclusive) {
  const std::vector<PartPairScore> s{{0, 1, 0, 0.7, ScoreSource::kLearned},
                                     {0, 2, 0, 0.69, ScoreSource::kLearned},
                                     {1, 2, 0, 0.9, ScoreSource::kLearned}};
  const auto e = adjacent_pairs(s, 0.7);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0], std::make_pair(std::size_t{0}, std::size_t{1}));
  EXPECT_EQ(e[1], std::make_pair(std::size_t{1}, std::size_t{2}));
}

TEST(LearnedScore, ZeroHeadIsOneHalf) {
  nn::MlpHeadConfig cfg;
  cfg.input_dim = 5;
  cfg.output_dim = 2;
  cfg.zero_last = true;
  const nn::MlpHead head(cfg, 1);
  EXPECT_DOUBLE_EQ(learned_relation_score(head, Eigen::VectorXd::Ones(5)), 0.5);
}

TEST(Thresholds, Defaults) {
  const RelationThresholds t;
  EXPECT_EQ(t.adjacency, 0.7);
  EXPECT_EQ(t.symmetry, 0.9);
}
