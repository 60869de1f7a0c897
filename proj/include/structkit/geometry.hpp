#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "structkit/errors.hpp"

namespace structkit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Smallest admissible box edge length; degenerate extents are clamped to it.
inline constexpr double kMinEdge = 1e-6;

class UnitQuaternion {
 public:
  UnitQuaternion() = default;

  /// Normalizes (w, x, y, z). Throws NormalizationError when the norm is
  /// below 1e-12 or a component is not finite.
  static UnitQuaternion normalized(double w, double x, double y, double z);

  static UnitQuaternion identity() { return {}; }

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }

  UnitQuaternion operator*(const UnitQuaternion& rhs) const;
  UnitQuaternion negated() const;

 private:
  UnitQuaternion(double w, double x, double y, double z) : w_(w), x_(x), y_(y), z_(z) {}

  double w_ = 1.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
};

/// A proper orthonormal 3x3 matrix. Columns are the principal axes.
class RotationMatrix {
 public:
  RotationMatrix() : m_(Mat3::Identity()) {}

  /// Validates RᵀR = I and det R = +1 within `tol`; throws GeometryError.
  explicit RotationMatrix(const Mat3& m, double tol = 1e-9);

  /// Skips validation. The caller guarantees the invariant.
  static RotationMatrix unchecked(const Mat3& m);

  static RotationMatrix about_axis(const Vec3& axis, double radians);

  const Mat3& matrix() const { return m_; }
  Vec3 axis(int i) const { return m_.col(i); }
  RotationMatrix operator*(const RotationMatrix& rhs) const { return unchecked(m_ * rhs.m_); }
  RotationMatrix transpose() const { return unchecked(m_.transpose()); }

 private:
  struct NoCheck {};
  RotationMatrix(const Mat3& m, NoCheck) : m_(m) {}
  Mat3 m_;
};

RotationMatrix quat_to_matrix(const UnitQuaternion& q);

/// Shepperd-style conversion; picks the numerically largest of w, x, y, z
/// as the pivot. Throws GeometryError on non-orthonormal input.
UnitQuaternion matrix_to_quat(const Mat3& r);
inline UnitQuaternion matrix_to_quat(const RotationMatrix& r) { return matrix_to_quat(r.matrix()); }

struct OrientedBox {
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();  // full edge lengths along each rotation column
  UnitQuaternion rotation;

  OrientedBox() = default;
  OrientedBox(const Vec3& c, const Vec3& s, const UnitQuaternion& q);

  RotationMatrix rotation_matrix() const { return quat_to_matrix(rotation); }
  Vec3 half_extents() const { return 0.5 * size; }
  double volume() const { return size.prod(); }
  double circumradius() const { return 0.5 * size.norm(); }
};

/// Corner j has sign pattern given by bits (x: bit 2, y: bit 1, z: bit 0),
/// 0 meaning '-', so corners come in lexicographic (±,±,±) order.
std::array<Vec3, 8> box_vertices(const OrientedBox& b);

/// Same ordering as box_vertices, relative to the center.
std::array<Vec3, 8> box_vertex_offsets(const OrientedBox& b);

inline constexpr double vertex_sign(int vertex, int axis) {
  return ((vertex >> (2 - axis)) & 1) ? 1.0 : -1.0;
}

/// Index pairs of the 12 box edges.
const std::array<std::array<int, 2>, 12>& box_edges();

/// Box from principal component analysis of a point cloud. Needs at least
/// three points; missing extents are clamped to kMinEdge.
OrientedBox pca_obb_fit(std::span<const Vec3> points);

/// n points uniformly distributed over the six faces (area-weighted).
std::vector<Vec3> sample_box_surface(const OrientedBox& b, std::size_t n, std::uint64_t seed);

enum class EquivalenceMode { kAll48, kProper24 };

/// The 48 signed permutation matrices, in a fixed order (permutations in
/// lexicographic order, then sign patterns).
const std::vector<Mat3>& signed_permutations();
const std::vector<Mat3>& proper_signed_permutations();

struct RotationEquivalenceSet {
  EquivalenceMode mode = EquivalenceMode::kAll48;
  std::vector<Mat3> elements;
};

RotationEquivalenceSet equivalence_set(const RotationMatrix& r,
                                       EquivalenceMode mode = EquivalenceMode::kAll48);

double rotation_mse(const Mat3& a, const Mat3& b);

/// min over set elements of the mean squared elementwise difference.
double rotation_set_distance(const Mat3& pred, const RotationEquivalenceSet& set);
inline double rotation_set_distance(const RotationMatrix& pred, const RotationEquivalenceSet& set) {
  return rotation_set_distance(pred.matrix(), set);
}

/// Index of the nearest set element (first on ties).
std::size_t nearest_equivalent(const Mat3& pred, const RotationEquivalenceSet& set);

/// Angle of a⁻¹b in degrees, in [0, 180].
double geodesic_degrees(const Mat3& a, const Mat3& b);

/// min over set elements of the geodesic angle, in degrees.
double geodesic_error(const Mat3& pred, const RotationEquivalenceSet& set);
inline double geodesic_error(const RotationMatrix& pred, const RotationEquivalenceSet& set) {
  return geodesic_error(pred.matrix(), set);
}

/// Euclidean distance from a point to a (solid) box; 0 inside.
double point_box_distance(const Vec3& p, const OrientedBox& b);

/// Closest point of the solid box to p.
Vec3 closest_point_on_box(const Vec3& p, const OrientedBox& b);

/// Exact minimum distance between two solid boxes: zero when the separating
/// axis test finds no separating axis, otherwise the minimum over
/// vertex-box and edge-edge distances.
double box_distance(const OrientedBox& a, const OrientedBox& b);

/// Largest separation over the 15 separating-axis candidates (a lower bound
/// on box_distance; <= 0 when the boxes intersect).
double separating_axis_gap(const OrientedBox& a, const OrientedBox& b);

/// Projection of p onto the intersection of two solid boxes (Dykstra).
/// Meaningful only when the boxes touch or overlap.
Vec3 project_onto_box_intersection(const Vec3& p, const OrientedBox& a, const OrientedBox& b,
                                   int max_iterations = 100000);

}  // namespace structkit
