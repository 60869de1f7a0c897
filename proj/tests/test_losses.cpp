#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "structkit/losses.hpp"
#include "structkit/rng.hpp"

using namespace structkit;

namespace {

Mat3 random_rotation(Rng& rng) {
  return quat_to_matrix(UnitQuaternion::normalized(rng.normal(), rng.normal(), rng.normal(), rng.normal())).matrix();
}

MoEPrediction random_prediction(Rng& rng, int k) {
  MoEPrediction p;
  double total = 0;
  for (int j = 0; j < k; ++j) {
    p.rotations.push_back(RotationMatrix::unchecked(random_rotation(rng)));
    p.probabilities.push_back(rng.uniform(0.05, 1.0));
    total += p.probabilities.back();
  }
  for (auto& q : p.probabilities) q /= total;
  return p;
}

}  // namespace

TEST(MinOfN, ZeroWhenAnExpertIsInTheSet) {
  Rng rng(1);
  const Mat3 r = random_rotation(rng);
  const auto set = equivalence_set(RotationMatrix::unchecked(r));
  auto pred = random_prediction(rng, 4);
  pred.rotations[2] = RotationMatrix::unchecked(set.elements[17]);
  EXPECT_NEAR(min_of_n_loss(pred, set), 0.0, 1e-15);
}

TEST(MinOfN, SingleExpertIsTheSetDistance) {
  Rng rng(2);
  const auto set = equivalence_set(RotationMatrix::unchecked(random_rotation(rng)));
  const auto pred = random_prediction(rng, 1);
  EXPECT_DOUBLE_EQ(min_of_n_loss(pred, set), rotation_set_distance(pred.rotations[0], set));
}

TEST(MinOfN, NeverAboveAnyExpert) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto set = equivalence_set(RotationMatrix::unchecked(random_rotation(rng)));
    const auto pred = random_prediction(rng, 4);
    const double l = min_of_n_loss(pred, set);
    double brute = 1e300;
    for (const auto& r : pred.rotations) {
      EXPECT_LE(l, rotation_set_distance(r, set));
      brute = std::min(brute, rotation_set_distance(r, set));
    }
    EXPECT_DOUBLE_EQ(l, brute);
  }
}

TEST(Mixture, PerfectSingleExpertHasZeroLogLikelihood) {
  MoEPrediction p{{RotationMatrix()}, {1.0}};
  const auto set = equivalence_set(RotationMatrix());
  EXPECT_NEAR(laplace_mixture_loglik(p, set, LossConfig{}), 0.0, 1e-15);
  EXPECT_NEAR(moe_total_loss(p, set, LossConfig{}), 0.0, 1e-15);
}

TEST(Mixture, IdenticalExpertsCollapse) {
  Rng rng(4);
  const auto set = equivalence_set(RotationMatrix::unchecked(random_rotation(rng)));
  const RotationMatrix r = RotationMatrix::unchecked(random_rotation(rng));
  const MoEPrediction single{{r}, {1.0}};
  const MoEPrediction many{{r, r, r, r}, {0.25, 0.25, 0.25, 0.25}};
  EXPECT_NEAR(laplace_mixture_loglik(single, set, {}), laplace_mixture_loglik(many, set, {}), 1e-12);
}

TEST(Mixture, MatchesDirectFormula) {
  Rng rng(5);
  const LossConfig cfg{1.0, 0.3, EquivalenceMode::kAll48};
  for (int t = 0; t < 50; ++t) {
    const auto set = equivalence_set(RotationMatrix::unchecked(random_rotation(rng)));
    const auto pred = random_prediction(rng, 4);
    double direct = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      direct += pred.probabilities[j] / (2 * cfg.laplace_b) *
                std::exp(-rotation_set_distance(pred.rotations[j], set) / cfg.laplace_b);
    }
    EXPECT_NEAR(laplace_mixture_loglik(pred, set, cfg), std::log(direct), 1e-12);
  }
}

TEST(Mixture, DecreasesAsDistancesGrow) {
  // moving every expert away from the set lowers the likelihood
  const auto set = equivalence_set(RotationMatrix());
  double prev = 1e300;
  for (double angle = 0.0; angle <= 40.0; angle += 5.0) {
    MoEPrediction p;
    for (int axis = 0; axis < 3; ++axis) {
      p.rotations.push_back(RotationMatrix::about_axis(Vec3::Unit(axis), angle * std::numbers::pi / 180));
      p.probabilities.push_back(1.0 / 3);
    }
    const double l = laplace_mixture_loglik(p, set, {});
    EXPECT_LT(l, prev);
    prev = l;
  }
}

TEST(Mixture, FiniteForFarExperts) {
  MoEPrediction p{{RotationMatrix()}, {1.0}};
  const auto set = equivalence_set(RotationMatrix());
  const LossConfig cfg{1.0, 1e-6, EquivalenceMode::kAll48};
  p.rotations[0] = RotationMatrix::about_axis(Vec3(1, 1, 1).normalized(), 0.6);
  EXPECT_TRUE(std::isfinite(laplace_mixture_loglik(p, set, cfg)));
}

TEST(TotalLoss, LambdaZeroIsMinOfN) {
  Rng rng(6);
  const auto set = equivalence_set(RotationMatrix::unchecked(random_rotation(rng)));
  const auto pred = random_prediction(rng, 4);
  EXPECT_DOUBLE_EQ(moe_total_loss(pred, set, {0.0, 0.5, EquivalenceMode::kAll48}), min_of_n_loss(pred, set));
}

TEST(TotalLoss, InvariantToQuotientAndExpertOrder) {
  Rng rng(7);
  const auto& perms = signed_permutations();
  for (int t = 0; t < 200; ++t) {
    const Mat3 r = random_rotation(rng);
    const auto pred = random_prediction(rng, 4);
    const double base = moe_total_loss(pred, equivalence_set(RotationMatrix::unchecked(r)), {});
    const Mat3 g = perms[rng.below(48)];
    EXPECT_NEAR(moe_total_loss(pred, equivalence_set(RotationMatrix::unchecked(r * g)), {}), base, 1e-12);
    MoEPrediction swapped = pred;
    std::swap(swapped.rotations[0], swapped.rotations[3]);
    std::swap(swapped.probabilities[0], swapped.probabilities[3]);
    EXPECT_NEAR(moe_total_loss(swapped, equivalence_set(RotationMatrix::unchecked(r)), {}), base, 1e-12);
  }
}

TEST(TotalLoss, InvalidConfigRejected) {
  EXPECT_THROW((LossConfig{-1.0, 0.5, EquivalenceMode::kAll48}.validate()), std::invalid_argument);
  EXPECT_THROW((LossConfig{1.0, 0.0, EquivalenceMode::kAll48}.validate()), std::invalid_argument);
  MoEPrediction bad{{RotationMatrix()}, {0.5}};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Selection, ArgmaxFirstOnTies) {
  MoEPrediction p{{RotationMatrix(), RotationMatrix(), RotationMatrix()}, {0.4, 0.4, 0.2}};
  EXPECT_EQ(p.selected(), 0u);
}

TEST(SizeLoss, ClosedForms) {
  EXPECT_EQ(size_loss(Vec3(1, 2, 3), Vec3(1, 2, 3)), 0.0);
  EXPECT_DOUBLE_EQ(size_loss(Vec3(1, 1, 1), Vec3(0, 0, 0)), 1.0);
  // the loss depends on axis correspondence
  EXPECT_GT(size_loss(Vec3(1, 2, 3), Vec3(3, 2, 1)), 0.0);
}

TEST(Chamfer, MatchesBruteForce) {
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    const OrientedBox a(Vec3(rng.normal(), rng.normal(), rng.normal()), Vec3(1, 0.5, 2),
                        UnitQuaternion::normalized(rng.normal(), rng.normal(), rng.normal(), rng.normal()));
    const OrientedBox b(Vec3(rng.normal(), rng.normal(), rng.normal()), Vec3(0.7, 0.5, 1),
                        UnitQuaternion::normalized(rng.normal(), rng.normal(), rng.normal(), rng.normal()));
    const auto va = box_vertices(a);
    const auto vb = box_vertices(b);
    double ab = 0, ba = 0;
    for (const auto& p : va) {
      double best = 1e300;
      for (const auto& q : vb) best = std::min(best, (p - q).squaredNorm());
      ab += best / 8;
    }
    for (const auto& q : vb) {
      double best = 1e300;
      for (const auto& p : va) best = std::min(best, (p - q).squaredNorm());
      ba += best / 8;
    }
    EXPECT_NEAR(chamfer_box_distance(a, b), ab + ba, 1e-12);
  }
}

TEST(Chamfer, IdenticalAndShiftedCubes) {
  const OrientedBox a(Vec3::Zero(), Vec3::Ones(), UnitQuaternion::identity());
  EXPECT_EQ(chamfer_box_distance(a, a), 0.0);
  const double t = 0.3;
  const OrientedBox b(Vec3(t, 0, 0), Vec3::Ones(), UnitQuaternion::identity());
  EXPECT_NEAR(chamfer_box_distance(a, b), 2 * t * t, 1e-12);
  // relabeling the box (same vertex set) changes nothing
  const OrientedBox c(Vec3::Zero(), Vec3::Ones(), UnitQuaternion::normalized(std::sqrt(0.5), 0, 0, std::sqrt(0.5)));
  EXPECT_NEAR(chamfer_box_distance(a, c), 0.0, 1e-24);
}

TEST(L1Error, ClosedForms) {
  EXPECT_EQ(l1_vector_error(Vec3(1, 2, 3), Vec3(1, 2, 3)), 0.0);
  EXPECT_DOUBLE_EQ(l1_vector_error(Vec3(1, 2, 3), Vec3::Zero()), 2.0);
  EXPECT_DOUBLE_EQ(l1_vector_error(Vec3(1, -2, 0.5), Vec3(0, 1, 1)), l1_vector_error(Vec3(0, 1, 1), Vec3(1, -2, 0.5)));
}
