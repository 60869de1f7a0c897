#include "structkit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "structkit/rng.hpp"

namespace structkit {

UnitQuaternion UnitQuaternion::normalized(double w, double x, double y, double z) {
  if (!std::isfinite(w) || !std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) {
    throw NormalizationError("quaternion has non-finite components");
  }
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (n < 1e-12) throw NormalizationError("quaternion norm is near zero");
  return {w / n, x / n, y / n, z / n};
}

UnitQuaternion UnitQuaternion::operator*(const UnitQuaternion& r) const {
  return normalized(w_ * r.w_ - x_ * r.x_ - y_ * r.y_ - z_ * r.z_,
                    w_ * r.x_ + x_ * r.w_ + y_ * r.z_ - z_ * r.y_,
                    w_ * r.y_ - x_ * r.z_ + y_ * r.w_ + z_ * r.x_,
                    w_ * r.z_ + x_ * r.y_ - y_ * r.x_ + z_ * r.w_);
}

UnitQuaternion UnitQuaternion::negated() const { return {-w_, -x_, -y_, -z_}; }

RotationMatrix::RotationMatrix(const Mat3& m, double tol) : m_(m) {
  if (!m.allFinite()) throw GeometryError("rotation matrix has non-finite entries");
  if ((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) {
    throw GeometryError("matrix is not orthonormal");
  }
  if (std::abs(m.determinant() - 1.0) > tol) {
    throw GeometryError("matrix determinant is not +1");
  }
}

RotationMatrix RotationMatrix::unchecked(const Mat3& m) { return RotationMatrix(m, NoCheck{}); }

RotationMatrix RotationMatrix::about_axis(const Vec3& axis, double radians) {
  return unchecked(Eigen::AngleAxisd(radians, axis.normalized()).toRotationMatrix());
}

RotationMatrix quat_to_matrix(const UnitQuaternion& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return RotationMatrix::unchecked(r);
}

UnitQuaternion matrix_to_quat(const Mat3& r) {
  // validates with a looser tolerance than the type invariant so that
  // products of many rotations still convert
  RotationMatrix checked(r, 1e-6);
  const double tr = r.trace();
  const double d0 = r(0, 0), d1 = r(1, 1), d2 = r(2, 2);
  if (tr >= d0 && tr >= d1 && tr >= d2) {
    const double s = 2.0 * std::sqrt(1.0 + tr);
    return UnitQuaternion::normalized(0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s,
                                      (r(1, 0) - r(0, 1)) / s);
  }
  if (d0 >= d1 && d0 >= d2) {
    const double s = 2.0 * std::sqrt(1.0 + d0 - d1 - d2);
    return UnitQuaternion::normalized((r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s,
                                      (r(0, 2) + r(2, 0)) / s);
  }
  if (d1 >= d2) {
    const double s = 2.0 * std::sqrt(1.0 + d1 - d0 - d2);
    return UnitQuaternion::normalized((r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s,
                                      (r(1, 2) + r(2, 1)) / s);
  }
  const double s = 2.0 * std::sqrt(1.0 + d2 - d0 - d1);
  return UnitQuaternion::normalized((r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s,
                                    (r(1, 2) + r(2, 1)) / s, 0.25 * s);
}

OrientedBox::OrientedBox(const Vec3& c, const Vec3& s, const UnitQuaternion& q)
    : center(c), size(s.cwiseMax(kMinEdge)), rotation(q) {}

std::array<Vec3, 8> box_vertex_offsets(const OrientedBox& b) {
  const Mat3 r = b.rotation_matrix().matrix();
  const Vec3 h = b.half_extents();
  std::array<Vec3, 8> out;
  for (int j = 0; j < 8; ++j) {
    const Vec3 local(vertex_sign(j, 0) * h.x(), vertex_sign(j, 1) * h.y(), vertex_sign(j, 2) * h.z());
    out[j] = r * local;
  }
  return out;
}

std::array<Vec3, 8> box_vertices(const OrientedBox& b) {
  auto out = box_vertex_offsets(b);
  for (auto& v : out) v += b.center;
  return out;
}

const std::array<std::array<int, 2>, 12>& box_edges() {
  // corners differing in exactly one sign bit
  static const std::array<std::array<int, 2>, 12> edges = [] {
    std::array<std::array<int, 2>, 12> e{};
    int k = 0;
    for (int j = 0; j < 8; ++j) {
      for (int bit = 0; bit < 3; ++bit) {
        const int other = j ^ (1 << bit);
        if (other > j) e[k++] = {j, other};
      }
    }
    return e;
  }();
  return edges;
}

namespace {

struct Extent {
  double lo;
  double hi;
  double length() const { return hi - lo; }
};

Extent extent_along(std::span<const Vec3> pts, const Vec3& mean, const Vec3& axis) {
  Extent e{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : pts) {
    const double t = (p - mean).dot(axis);
    e.lo = std::min(e.lo, t);
    e.hi = std::max(e.hi, t);
  }
  return e;
}

double fourth_moment(std::span<const Vec3> pts, const Vec3& mean, const Vec3& u) {
  double acc = 0.0;
  for (const auto& p : pts) {
    const double t = (p - mean).dot(u);
    acc += t * t * t * t;
  }
  return acc;
}

// Rotates (a, b) within their plane to minimize the extent area of the
// points. Used only when the covariance is degenerate in that plane.
void refine_plane(std::span<const Vec3> pts, const Vec3& mean, Vec3& a, Vec3& b) {
  const Vec3 a0 = a, b0 = b;
  auto area = [&](double theta) {
    const Vec3 u = std::cos(theta) * a0 + std::sin(theta) * b0;
    const Vec3 v = -std::sin(theta) * a0 + std::cos(theta) * b0;
    return extent_along(pts, mean, u).length() * extent_along(pts, mean, v).length();
  };
  constexpr int kGrid = 180;
  const double step = 0.5 * std::numbers::pi / kGrid;
  double best_theta = 0.0;
  double best = area(0.0);
  for (int i = 1; i < kGrid; ++i) {
    const double f = area(i * step);
    if (f < best) {
      best = f;
      best_theta = i * step;
    }
  }
  // golden-section refinement around the grid minimum
  double lo = best_theta - step, hi = best_theta + step;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = area(x1), f2 = area(x2);
  for (int it = 0; it < 100 && hi - lo > 1e-13; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = area(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = area(x2);
    }
  }
  const double theta = 0.5 * (lo + hi);
  if (area(theta) < best) best_theta = theta;
  if (best_theta == 0.0) return;
  a = std::cos(best_theta) * a0 + std::sin(best_theta) * b0;
  b = -std::sin(best_theta) * a0 + std::cos(best_theta) * b0;
}

// For an isotropic covariance: the direction minimizing the fourth moment,
// which for box-shaped clouds is a box axis.
Vec3 isotropic_first_axis(std::span<const Vec3> pts, const Vec3& mean, const Mat3& eigvecs) {
  Vec3 best = eigvecs.col(0);
  double best_f = fourth_moment(pts, mean, best);
  for (int i = 1; i < 3; ++i) {
    const double f = fourth_moment(pts, mean, eigvecs.col(i));
    if (f < best_f) {
      best_f = f;
      best = eigvecs.col(i);
    }
  }
  constexpr int kFib = 1000;  // hemisphere suffices, the moment is even
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < kFib; ++i) {
    const double z = 1.0 - (i + 0.5) / kFib;
    const double r = std::sqrt(1.0 - z * z);
    const Vec3 u(r * std::cos(golden * i), r * std::sin(golden * i), z);
    const double f = fourth_moment(pts, mean, u);
    if (f < best_f) {
      best_f = f;
      best = u;
    }
  }
  // pattern search on the sphere
  double delta = 0.05;
  while (delta > 1e-12) {
    Vec3 t1 = best.unitOrthogonal();
    Vec3 t2 = best.cross(t1);
    bool improved = false;
    for (const Vec3& dir : {t1, Vec3(-t1), t2, Vec3(-t2)}) {
      const Vec3 cand = (best + delta * dir).normalized();
      const double f = fourth_moment(pts, mean, cand);
      if (f < best_f) {
        best_f = f;
        best = cand;
        improved = true;
        break;
      }
    }
    if (!improved) delta *= 0.5;
  }
  return best;
}

Vec3 sign_normalized(Vec3 v) {
  int k = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::abs(v[i]) > std::abs(v[k])) k = i;
  }
  return v[k] < 0 ? Vec3(-v) : v;
}

bool lex_greater(const Vec3& a, const Vec3& b) {
  for (int i = 0; i < 3; ++i) {
    if (a[i] != b[i]) return a[i] > b[i];
  }
  return false;
}

}  // namespace

OrientedBox pca_obb_fit(std::span<const Vec3> points) {
  if (points.size() < 3) throw GeometryError("pca_obb_fit needs at least 3 points");
  Vec3 mean = Vec3::Zero();
  for (const auto& p : points) {
    if (!p.allFinite()) throw GeometryError("pca_obb_fit: non-finite point");
    mean += p;
  }
  mean /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) {
    const Vec3 d = p - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());

  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  // descending eigenvalue order
  std::array<double, 3> lambda{es.eigenvalues()[2], es.eigenvalues()[1], es.eigenvalues()[0]};
  std::array<Vec3, 3> axes{es.eigenvectors().col(2), es.eigenvectors().col(1),
                           es.eigenvectors().col(0)};
  const double scale = std::max(lambda[0], 1e-300);
  auto tied = [&](int i, int j) { return std::abs(lambda[i] - lambda[j]) <= 1e-6 * scale; };

  if (tied(0, 1) && tied(1, 2)) {
    Mat3 basis;
    basis << axes[0], axes[1], axes[2];
    axes[0] = isotropic_first_axis(points, mean, basis);
    axes[1] = axes[0].unitOrthogonal();
    axes[2] = axes[0].cross(axes[1]);
    // keep the solver's vectors when they are already an optimal frame
    for (int i = 0; i < 3; ++i) {
      if (std::abs(std::abs(basis.col(i).dot(axes[0])) - 1.0) < 1e-15) {
        axes[0] = basis.col(i);
        axes[1] = basis.col((i + 1) % 3);
        axes[2] = basis.col((i + 2) % 3);
        break;
      }
    }
    refine_plane(points, mean, axes[1], axes[2]);
  } else if (tied(0, 1)) {
    refine_plane(points, mean, axes[0], axes[1]);
  } else if (tied(1, 2)) {
    refine_plane(points, mean, axes[1], axes[2]);
  }

  for (auto& a : axes) a = sign_normalized(a.normalized());
  // stable ordering: eigenvalue descending, ties lexicographic descending
  std::array<int, 3> order{0, 1, 2};
  std::array<double, 3> var;
  for (int i = 0; i < 3; ++i) {
    double v = 0.0;
    for (const auto& p : points) {
      const double t = (p - mean).dot(axes[i]);
      v += t * t;
    }
    var[i] = v / static_cast<double>(points.size());
  }
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    if (std::abs(var[i] - var[j]) > 1e-6 * scale) return var[i] > var[j];
    return lex_greater(axes[i], axes[j]);
  });
  Mat3 r;
  for (int c = 0; c < 3; ++c) r.col(c) = axes[order[c]];
  // re-orthonormalize to clean up accumulated rounding, then fix handedness
  Eigen::HouseholderQR<Mat3> qr(r);
  Mat3 q = qr.householderQ();
  for (int c = 0; c < 3; ++c) {
    if (q.col(c).dot(r.col(c)) < 0) q.col(c) = -q.col(c);
  }
  if (q.determinant() < 0) q.col(2) = -q.col(2);

  Vec3 size, center = mean;
  for (int c = 0; c < 3; ++c) {
    const Extent e = extent_along(points, mean, q.col(c));
    size[c] = e.length();
    center += q.col(c) * (0.5 * (e.lo + e.hi));
  }
  return OrientedBox(center, size, matrix_to_quat(q));
}

std::vector<Vec3> sample_box_surface(const OrientedBox& b, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const Mat3 r = b.rotation_matrix().matrix();
  const Vec3 h = b.half_extents();
  const std::array<double, 3> face_area{b.size.y() * b.size.z(), b.size.x() * b.size.z(),
                                        b.size.x() * b.size.y()};
  const double total = 2.0 * (face_area[0] + face_area[1] + face_area[2]);
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    double pick = rng.uniform() * total;
    int face = 0;
    for (; face < 5; ++face) {
      const double a = face_area[face / 2];
      if (pick < a) break;
      pick -= a;
    }
    const int axis = face / 2;
    const double sign = (face % 2 == 0) ? -1.0 : 1.0;
    Vec3 local;
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    local[axis] = sign * h[axis];
    local[u] = rng.uniform(-h[u], h[u]);
    local[v] = rng.uniform(-h[v], h[v]);
    out.push_back(b.center + r * local);
  }
  return out;
}

const std::vector<Mat3>& signed_permutations() {
  static const std::vector<Mat3> all = [] {
    std::vector<Mat3> out;
    std::array<int, 3> perm{0, 1, 2};
    do {
      for (int signs = 0; signs < 8; ++signs) {
        Mat3 g = Mat3::Zero();
        for (int c = 0; c < 3; ++c) {
          g(perm[c], c) = ((signs >> (2 - c)) & 1) ? -1.0 : 1.0;
        }
        out.push_back(g);
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return out;
  }();
  return all;
}

const std::vector<Mat3>& proper_signed_permutations() {
  static const std::vector<Mat3> proper = [] {
    std::vector<Mat3> out;
    for (const auto& g : signed_permutations()) {
      if (g.determinant() > 0) out.push_back(g);
    }
    return out;
  }();
  return proper;
}

RotationEquivalenceSet equivalence_set(const RotationMatrix& r, EquivalenceMode mode) {
  const auto& group =
      mode == EquivalenceMode::kAll48 ? signed_permutations() : proper_signed_permutations();
  RotationEquivalenceSet set;
  set.mode = mode;
  set.elements.reserve(group.size());
  // R is invertible, so R·G is distinct for distinct G
  for (const auto& g : group) set.elements.push_back(r.matrix() * g);
  return set;
}

double rotation_mse(const Mat3& a, const Mat3& b) { return (a - b).squaredNorm() / 9.0; }

double rotation_set_distance(const Mat3& pred, const RotationEquivalenceSet& set) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : set.elements) best = std::min(best, rotation_mse(pred, e));
  return best;
}

std::size_t nearest_equivalent(const Mat3& pred, const RotationEquivalenceSet& set) {
  std::size_t best_k = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < set.elements.size(); ++k) {
    const double d = rotation_mse(pred, set.elements[k]);
    if (d < best) {
      best = d;
      best_k = k;
    }
  }
  return best_k;
}

double geodesic_degrees(const Mat3& a, const Mat3& b) {
  // ‖A − B‖²_F = 8 sin²(θ/2): accurate near 0, where the trace form is not
  const double half = std::sqrt((a - b).squaredNorm() / 8.0);
  double theta;
  if (half < 0.7) {
    theta = 2.0 * std::asin(half);
  } else {
    const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
    theta = std::acos(c);
  }
  return theta * 180.0 / std::numbers::pi;
}

double geodesic_error(const Mat3& pred, const RotationEquivalenceSet& set) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : set.elements) best = std::min(best, geodesic_degrees(pred, e));
  return best;
}

Vec3 closest_point_on_box(const Vec3& p, const OrientedBox& b) {
  const Mat3 r = b.rotation_matrix().matrix();
  const Vec3 h = b.half_extents();
  Vec3 local = r.transpose() * (p - b.center);
  for (int i = 0; i < 3; ++i) local[i] = std::clamp(local[i], -h[i], h[i]);
  return b.center + r * local;
}

double point_box_distance(const Vec3& p, const OrientedBox& b) {
  const Mat3 r = b.rotation_matrix().matrix();
  const Vec3 h = b.half_extents();
  const Vec3 local = r.transpose() * (p - b.center);
  Vec3 excess;
  for (int i = 0; i < 3; ++i) excess[i] = std::max(0.0, std::abs(local[i]) - h[i]);
  return excess.norm();
}

namespace {

// Closest distance between segments p1q1 and p2q2.
double segment_distance(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2) {
  const Vec3 d1 = q1 - p1, d2 = q2 - p2, r = p1 - p2;
  const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  double s = 0.0, t = 0.0;
  constexpr double kEps = 1e-300;
  if (a <= kEps && e <= kEps) return r.norm();
  if (a <= kEps) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= kEps) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > 0 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return ((p1 + d1 * s) - (p2 + d2 * t)).norm();
}

}  // namespace

double separating_axis_gap(const OrientedBox& a, const OrientedBox& b) {
  const Mat3 ra = a.rotation_matrix().matrix(), rb = b.rotation_matrix().matrix();
  const Vec3 ha = a.half_extents(), hb = b.half_extents();
  std::vector<Vec3> axes;
  axes.reserve(15);
  for (int i = 0; i < 3; ++i) axes.push_back(ra.col(i));
  for (int i = 0; i < 3; ++i) axes.push_back(rb.col(i));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const Vec3 c = ra.col(i).cross(rb.col(j));
      if (c.norm() > 1e-9) axes.push_back(c.normalized());
    }
  }
  double gap = -std::numeric_limits<double>::infinity();
  for (const auto& u : axes) {
    const double ca = a.center.dot(u), cb = b.center.dot(u);
    double ra_u = 0.0, rb_u = 0.0;
    for (int i = 0; i < 3; ++i) {
      ra_u += ha[i] * std::abs(ra.col(i).dot(u));
      rb_u += hb[i] * std::abs(rb.col(i).dot(u));
    }
    gap = std::max(gap, std::abs(cb - ca) - ra_u - rb_u);
  }
  return gap;
}

double box_distance(const OrientedBox& a, const OrientedBox& b) {
  if (separating_axis_gap(a, b) <= 0.0) return 0.0;
  const auto va = box_vertices(a), vb = box_vertices(b);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& v : va) best = std::min(best, point_box_distance(v, b));
  for (const auto& v : vb) best = std::min(best, point_box_distance(v, a));
  for (const auto& ea : box_edges()) {
    for (const auto& eb : box_edges()) {
      best = std::min(best, segment_distance(va[ea[0]], va[ea[1]], vb[eb[0]], vb[eb[1]]));
    }
  }
  return best;
}

Vec3 project_onto_box_intersection(const Vec3& p, const OrientedBox& a, const OrientedBox& b,
                                   int max_iterations) {
  // Dykstra's alternating projections: converges to the Euclidean projection
  // of p onto a ∩ b when the intersection is nonempty.
  Vec3 x = p, pa = Vec3::Zero(), qb = Vec3::Zero();
  for (int it = 0; it < max_iterations; ++it) {
    const Vec3 y = closest_point_on_box(x + pa, a);
    pa = x + pa - y;
    const Vec3 next = closest_point_on_box(y + qb, b);
    qb = y + qb - next;
    const double change = (next - x).norm();
    x = next;
    if (change < 1e-15 && point_box_distance(x, a) < 1e-15) break;
  }
  return x;
}

}  // namespace structkit
