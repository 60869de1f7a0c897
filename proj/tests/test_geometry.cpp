#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "structkit/geometry.hpp"
#include "structkit/rng.hpp"

using namespace structkit;

namespace {

UnitQuaternion random_quat(Rng& rng) {
  return UnitQuaternion::normalized(rng.normal(), rng.normal(), rng.normal(), rng.normal());
}

Mat3 random_rotation(Rng& rng) { return quat_to_matrix(random_quat(rng)).matrix(); }

double deg(double d) { return d * std::numbers::pi / 180.0; }

Mat3 rz(double degrees) { return RotationMatrix::about_axis(Vec3::UnitZ(), deg(degrees)).matrix(); }

std::array<Vec3, 8> unit_cube_corners() {
  std::array<Vec3, 8> c;
  for (int v = 0; v < 8; ++v) c[v] = 0.5 * Vec3(vertex_sign(v, 0), vertex_sign(v, 1), vertex_sign(v, 2));
  return c;
}

}  // namespace

TEST(Quaternion, IdentityMapsToIdentity) {
  EXPECT_TRUE(quat_to_matrix(UnitQuaternion::identity()).matrix().isApprox(Mat3::Identity(), 1e-15));
}

TEST(Quaternion, QuarterTurnAboutZ) {
  const double h = std::sqrt(0.5);
  const Mat3 r = quat_to_matrix(UnitQuaternion::normalized(h, 0, 0, h)).matrix();
  EXPECT_NEAR((r.col(0) - Vec3(0, 1, 0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((r.col(1) - Vec3(-1, 0, 0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((r.col(2) - Vec3(0, 0, 1)).norm(), 0.0, 1e-12);
}

TEST(Quaternion, NearZeroNormThrows) {
  EXPECT_THROW(UnitQuaternion::normalized(0, 0, 0, 1e-14), NormalizationError);
  EXPECT_THROW(UnitQuaternion::normalized(std::nan(""), 0, 0, 1), NormalizationError);
}

TEST(Quaternion, UnitNormAfterNormalization) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto q = random_quat(rng);
    EXPECT_NEAR(q.w() * q.w() + q.x() * q.x() + q.y() * q.y() + q.z() * q.z(), 1.0, 1e-9);
    EXPECT_TRUE(quat_to_matrix(q).matrix().isApprox(quat_to_matrix(q.negated()).matrix(), 1e-15));
  }
}

TEST(Quaternion, RoundTripUpToSign) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const auto q = random_quat(rng);
    const auto back = matrix_to_quat(quat_to_matrix(q));
    const Eigen::Vector4d a(q.w(), q.x(), q.y(), q.z());
    const Eigen::Vector4d b(back.w(), back.x(), back.y(), back.z());
    EXPECT_LT(std::min((a - b).norm(), (a + b).norm()), 1e-9);
  }
}

TEST(Quaternion, RoundTripPreservesRotationAction) {
  Rng rng(12);
  for (int i = 0; i < 100; ++i) {
    const Mat3 r = random_rotation(rng);
    const Mat3 back = quat_to_matrix(matrix_to_quat(r)).matrix();
    const Vec3 v(rng.normal(), rng.normal(), rng.normal());
    EXPECT_LT((r * v - back * v).norm(), 1e-9);
  }
}

TEST(Quaternion, HalfTurnsConvertCleanly) {
  for (int axis = 0; axis < 3; ++axis) {
    const Mat3 r = RotationMatrix::about_axis(Vec3::Unit(axis), std::numbers::pi).matrix();
    EXPECT_TRUE(quat_to_matrix(matrix_to_quat(r)).matrix().isApprox(r, 1e-12));
  }
}

TEST(Quaternion, CompositionMatchesProduct) {
  Rng rng(13);
  for (int i = 0; i < 1000; ++i) {
    const auto q1 = random_quat(rng);
    const auto q2 = random_quat(rng);
    const Mat3 r = quat_to_matrix(q1).matrix() * quat_to_matrix(q2).matrix();
    const auto from_matrix = matrix_to_quat(r);
    const auto prod = q1 * q2;
    const Eigen::Vector4d a(from_matrix.w(), from_matrix.x(), from_matrix.y(), from_matrix.z());
    const Eigen::Vector4d b(prod.w(), prod.x(), prod.y(), prod.z());
    EXPECT_LT(std::min((a - b).norm(), (a + b).norm()), 1e-9);
  }
}

TEST(Quaternion, NonOrthonormalInputThrows) {
  Mat3 m = Mat3::Identity();
  m(0, 0) = 1.1;
  EXPECT_THROW(matrix_to_quat(m), GeometryError);
  EXPECT_THROW(RotationMatrix{m}, GeometryError);
  EXPECT_THROW(RotationMatrix{Mat3(Vec3(1, 1, -1).asDiagonal())}, GeometryError);
}

TEST(BoxVertices, UnitCubeCornersInLexicographicOrder) {
  const OrientedBox b(Vec3::Zero(), Vec3::Ones(), UnitQuaternion::identity());
  const auto v = box_vertices(b);
  const auto expected = unit_cube_corners();
  for (int i = 0; i < 8; ++i) EXPECT_EQ(v[i], expected[i]);
  EXPECT_EQ(v[0], Vec3(-0.5, -0.5, -0.5));
  EXPECT_EQ(v[1], Vec3(-0.5, -0.5, 0.5));
  EXPECT_EQ(v[7], Vec3(0.5, 0.5, 0.5));
}

TEST(BoxVertices, TranslationShiftsEveryVertex) {
  const OrientedBox a(Vec3::Zero(), Vec3(1, 2, 3), UnitQuaternion::identity());
  const OrientedBox b(Vec3(1, 0, 0), Vec3(1, 2, 3), UnitQuaternion::identity());
  const auto va = box_vertices(a);
  const auto vb = box_vertices(b);
  for (int i = 0; i < 8; ++i) EXPECT_LT((vb[i] - va[i] - Vec3(1, 0, 0)).norm(), 1e-15);
}

TEST(BoxVertices, RotationActsAboutCenter) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const Vec3 c(rng.normal(), rng.normal(), rng.normal());
    const Vec3 s(rng.uniform(0.1, 2), rng.uniform(0.1, 2), rng.uniform(0.1, 2));
    const auto q = random_quat(rng);
    const auto flat = box_vertices(OrientedBox(c, s, UnitQuaternion::identity()));
    const auto rotated = box_vertices(OrientedBox(c, s, q));
    const Mat3 r = quat_to_matrix(q).matrix();
    Vec3 mean = Vec3::Zero();
    for (int i = 0; i < 8; ++i) {
      EXPECT_LT((rotated[i] - (r * (flat[i] - c) + c)).norm(), 1e-12);
      mean += rotated[i] / 8.0;
    }
    EXPECT_LT((mean - c).norm(), 1e-12);
  }
}

TEST(BoxVertices, SizesClampedToMinimumEdge) {
  const OrientedBox b(Vec3::Zero(), Vec3(0, -1, 2), UnitQuaternion::identity());
  EXPECT_DOUBLE_EQ(b.size.x(), kMinEdge);
  EXPECT_DOUBLE_EQ(b.size.y(), kMinEdge);
  EXPECT_DOUBLE_EQ(b.size.z(), 2.0);
}

TEST(PcaFit, AxisAlignedCubeCorners) {
  const auto corners = unit_cube_corners();
  const OrientedBox b = pca_obb_fit(corners);
  EXPECT_LT((b.size - Vec3::Ones()).norm(), 1e-9);
  EXPECT_LT(b.center.norm(), 1e-12);
  EXPECT_NEAR(rotation_set_distance(b.rotation_matrix(), equivalence_set(RotationMatrix())), 0.0, 1e-12);
}

TEST(PcaFit, RotatedCubeRecoversAxisSet) {
  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    const Mat3 r = random_rotation(rng);
    std::vector<Vec3> pts;
    for (const auto& c : unit_cube_corners()) pts.push_back(r * c);
    const OrientedBox b = pca_obb_fit(pts);
    EXPECT_LT(rotation_set_distance(b.rotation_matrix(), equivalence_set(RotationMatrix(r, 1e-9))), 1e-6);
    EXPECT_LT((b.size - Vec3::Ones()).norm(), 1e-6);
  }
}

TEST(PcaFit, TooFewPointsThrow) {
  const std::vector<Vec3> two{Vec3::Zero(), Vec3::UnitX()};
  EXPECT_THROW(pca_obb_fit(two), GeometryError);
  EXPECT_THROW(pca_obb_fit(std::span<const Vec3>{}), GeometryError);
}

TEST(PcaFit, ContainsAllPointsWithOrthonormalAxes) {
  Rng rng(22);
  for (int t = 0; t < 100; ++t) {
    std::vector<Vec3> pts;
    const int n = 4 + static_cast<int>(rng.below(40));
    for (int i = 0; i < n; ++i) pts.emplace_back(rng.normal(0, 2), rng.normal(0, 1), rng.normal(0, 0.3));
    const OrientedBox b = pca_obb_fit(pts);
    const Mat3 r = b.rotation_matrix().matrix();
    EXPECT_LT((r.transpose() * r - Mat3::Identity()).norm(), 1e-9);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
    for (const auto& p : pts) {
      const Vec3 local = r.transpose() * (p - b.center);
      for (int k = 0; k < 3; ++k) EXPECT_LE(std::abs(local[k]), b.half_extents()[k] + 1e-9);
    }
  }
}

TEST(PcaFit, CoplanarPointsGetMinimumThickness) {
  std::vector<Vec3> pts{{0, 0, 0}, {2, 0, 0}, {0, 1, 0}, {2, 1, 0}};
  const OrientedBox b = pca_obb_fit(pts);
  std::vector<double> s(b.size.data(), b.size.data() + 3);
  std::sort(s.begin(), s.end());
  EXPECT_DOUBLE_EQ(s[0], kMinEdge);
  EXPECT_NEAR(s[1], 1.0, 1e-9);
  EXPECT_NEAR(s[2], 2.0, 1e-9);
}

TEST(SurfaceSampling, FaceCountsFollowArea) {
  const OrientedBox b(Vec3::Zero(), Vec3::Ones(), UnitQuaternion::identity());
  const double p = 1.0 / 6.0;
  const double mean = 1024 * p;
  const double sigma = std::sqrt(1024 * p * (1 - p));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::array<int, 6> counts{};
    for (const auto& pt : sample_box_surface(b, 1024, seed)) {
      int axis = 0;
      for (int k = 1; k < 3; ++k) {
        if (std::abs(pt[k]) > std::abs(pt[axis])) axis = k;
      }
      ++counts[2 * axis + (pt[axis] > 0 ? 1 : 0)];
    }
    for (int c : counts) EXPECT_LT(std::abs(c - mean), 4 * sigma);
  }
}

TEST(SurfaceSampling, PointsLieOnTheSurface) {
  Rng rng(31);
  const OrientedBox b(Vec3(1, 2, 3), Vec3(0.5, 1, 2), random_quat(rng));
  const Mat3 r = b.rotation_matrix().matrix();
  const auto pts = sample_box_surface(b, 500, 9);
  ASSERT_EQ(pts.size(), 500u);
  for (const auto& p : pts) {
    const Vec3 local = (r.transpose() * (p - b.center)).cwiseQuotient(b.half_extents());
    EXPECT_NEAR(local.cwiseAbs().maxCoeff(), 1.0, 1e-9);
  }
}

TEST(SurfaceSampling, FlatBoxStaysNearMidPlane) {
  const OrientedBox b(Vec3::Zero(), Vec3(1, 1, kMinEdge), UnitQuaternion::identity());
  for (const auto& p : sample_box_surface(b, 200, 4)) EXPECT_LE(std::abs(p.z()), kMinEdge);
}

TEST(SurfaceSampling, DeterministicPerSeed) {
  const OrientedBox b(Vec3::Zero(), Vec3(1, 2, 3), UnitQuaternion::identity());
  EXPECT_EQ(sample_box_surface(b, 64, 1), sample_box_surface(b, 64, 1));
  EXPECT_NE(sample_box_surface(b, 64, 1), sample_box_surface(b, 64, 2));
}

TEST(EquivalenceSet, IdentityGivesSignedPermutations) {
  const auto set = equivalence_set(RotationMatrix());
  ASSERT_EQ(set.elements.size(), 48u);
  std::set<std::vector<int>> seen;
  for (const auto& g : set.elements) {
    std::vector<int> key;
    for (int i = 0; i < 9; ++i) {
      const double x = g(i / 3, i % 3);
      EXPECT_TRUE(x == 0.0 || x == 1.0 || x == -1.0);
      key.push_back(static_cast<int>(x));
    }
    EXPECT_NEAR(g.cwiseAbs().colwise().sum().sum(), 3.0, 0);
    seen.insert(key);
  }
  EXPECT_EQ(seen.size(), 48u);
}

TEST(EquivalenceSet, ProperModeIsTheCubeRotationGroup) {
  const auto set = equivalence_set(RotationMatrix(), EquivalenceMode::kProper24);
  ASSERT_EQ(set.elements.size(), 24u);
  for (const auto& g : set.elements) {
    EXPECT_NEAR(g.determinant(), 1.0, 1e-12);
    for (const auto& h : set.elements) {
      // closed under composition
      const Mat3 gh = g * h;
      EXPECT_TRUE(std::any_of(set.elements.begin(), set.elements.end(),
                              [&](const Mat3& k) { return (k - gh).norm() < 1e-12; }));
    }
  }
}

TEST(EquivalenceSet, SameSetForEveryRelabeling) {
  Rng rng(41);
  const Mat3 r = random_rotation(rng);
  const auto base = equivalence_set(RotationMatrix(r, 1e-9));
  for (const auto& g : signed_permutations()) {
    if (g.determinant() < 0) continue;
    const auto other = equivalence_set(RotationMatrix(r * g, 1e-9));
    ASSERT_EQ(other.elements.size(), 48u);
    for (const auto& e : other.elements) {
      EXPECT_TRUE(std::any_of(base.elements.begin(), base.elements.end(),
                              [&](const Mat3& k) { return (k - e).norm() < 1e-12; }));
    }
  }
}

TEST(SetDistance, ZeroForMembers) {
  Rng rng(42);
  const Mat3 r = random_rotation(rng);
  const auto set = equivalence_set(RotationMatrix(r, 1e-9));
  for (const auto& e : set.elements) EXPECT_NEAR(rotation_set_distance(e, set), 0.0, 1e-15);
}

TEST(SetDistance, SmallRotationMatchesBruteForce) {
  const Mat3 pred = rz(10);
  const auto set = equivalence_set(RotationMatrix());
  double brute = 1e300;
  for (const auto& g : signed_permutations()) brute = std::min(brute, (pred - g).squaredNorm() / 9.0);
  EXPECT_DOUBLE_EQ(rotation_set_distance(pred, set), brute);
  EXPECT_NEAR(rotation_set_distance(pred, set), rotation_mse(pred, Mat3::Identity()), 1e-15);
}

TEST(SetDistance, InvariantToBaseRelabeling) {
  Rng rng(43);
  const auto& perms = signed_permutations();
  for (int t = 0; t < 1000; ++t) {
    const Mat3 r = random_rotation(rng);
    const Mat3 pred = random_rotation(rng);
    const Mat3 g = perms[rng.below(perms.size())];
    const auto a = equivalence_set(RotationMatrix::unchecked(r));
    const auto b = equivalence_set(RotationMatrix::unchecked(r * g));
    EXPECT_NEAR(rotation_set_distance(pred, a), rotation_set_distance(pred, b), 1e-12);
    EXPECT_NEAR(geodesic_error(pred, a), geodesic_error(pred, b), 1e-12);
  }
}

TEST(Geodesic, TenDegreesAboutZ) {
  EXPECT_NEAR(geodesic_error(rz(10), equivalence_set(RotationMatrix())), 10.0, 1e-6);
  EXPECT_NEAR(geodesic_error(rz(80), equivalence_set(RotationMatrix())), 10.0, 1e-6);
  EXPECT_NEAR(geodesic_degrees(rz(10), Mat3::Identity()), 10.0, 1e-9);
}

TEST(Geodesic, BoundedByUnquotientedAngleAndInRange) {
  Rng rng(44);
  for (int t = 0; t < 200; ++t) {
    const Mat3 a = random_rotation(rng);
    const Mat3 b = random_rotation(rng);
    const double q = geodesic_error(a, equivalence_set(RotationMatrix::unchecked(b)));
    EXPECT_LE(q, geodesic_degrees(a, b) + 1e-9);
    EXPECT_GE(q, 0.0);
    EXPECT_LE(geodesic_degrees(a, b), 180.0);
  }
  EXPECT_NEAR(geodesic_error(Mat3::Identity(), equivalence_set(RotationMatrix())), 0.0, 1e-12);
}

TEST(Geodesic, TinyAnglesStayAccurate) {
  EXPECT_NEAR(geodesic_degrees(rz(1e-5), Mat3::Identity()), 1e-5, 1e-12);
}

TEST(BoxDistance, FaceSharingCubesTouch) {
  const OrientedBox a(Vec3::Zero(), Vec3::Ones(), UnitQuaternion::identity());
  const OrientedBox b(Vec3(1, 0, 0), Vec3::Ones(), UnitQuaternion::identity());
  EXPECT_LE(box_distance(a, b), 1e-6);
}

TEST(BoxDistance, SeparatedCubes) {
  const OrientedBox a(Vec3::Zero(), Vec3::Ones(), UnitQuaternion::identity());
  const OrientedBox b(Vec3(1.5, 0, 0), Vec3::Ones(), UnitQuaternion::identity());
  EXPECT_NEAR(box_distance(a, b), 0.5, 1e-12);
  const OrientedBox c(Vec3(2, 2, 0), Vec3::Ones(), UnitQuaternion::identity());
  EXPECT_NEAR(box_distance(a, c), std::sqrt(2.0), 1e-12);
}

TEST(BoxDistance, AgreesWithSurfaceSampling) {
  Rng rng(51);
  for (int t = 0; t < 200; ++t) {
    const OrientedBox a(Vec3::Zero(), Vec3(rng.uniform(0.2, 1), rng.uniform(0.2, 1), rng.uniform(0.2, 1)),
                        random_quat(rng));
    const OrientedBox b(Vec3(rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1)),
                        Vec3(rng.uniform(0.2, 1), rng.uniform(0.2, 1), rng.uniform(0.2, 1)), random_quat(rng));
    const double exact = box_distance(a, b);
    EXPECT_GE(exact, separating_axis_gap(a, b) - 1e-12);
    if (exact == 0.0) continue;
    // sampled nearest surface distance bounds the exact value from above
    const auto pa = sample_box_surface(a, 600, 2 * t);
    double sampled = 1e300;
    for (const auto& p : pa) sampled = std::min(sampled, point_box_distance(p, b));
    EXPECT_LE(exact, sampled + 1e-12);
    EXPECT_LE(sampled - exact, 0.1);
  }
}

TEST(BoxDistance, SymmetricAndZeroWhenOverlapping) {
  Rng rng(52);
  for (int t = 0; t < 100; ++t) {
    const OrientedBox a(Vec3(rng.normal(), rng.normal(), rng.normal()), Vec3(1, 0.5, 0.7), random_quat(rng));
    const OrientedBox b(Vec3(rng.normal(), rng.normal(), rng.normal()), Vec3(0.3, 0.9, 1.2), random_quat(rng));
    EXPECT_NEAR(box_distance(a, b), box_distance(b, a), 1e-12);
    if (point_box_distance(b.center, a) == 0.0) EXPECT_EQ(box_distance(a, b), 0.0);
  }
}

TEST(BoxIntersection, ProjectionLandsInBothBoxes) {
  const OrientedBox a(Vec3::Zero(), Vec3::Ones(), UnitQuaternion::identity());
  const OrientedBox b(Vec3(1, 0.3, 0), Vec3::Ones(), UnitQuaternion::identity());
  const Vec3 p = project_onto_box_intersection(Vec3(0.5, 0.15, 0), a, b);
  EXPECT_LT(point_box_distance(p, a), 1e-9);
  EXPECT_LT(point_box_distance(p, b), 1e-9);
  EXPECT_NEAR(p.x(), 0.5, 1e-9);
}
