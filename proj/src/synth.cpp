#include "structkit/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "structkit/assembly.hpp"
#include "structkit/io.hpp"
#include "structkit/relations.hpp"
#include "structkit/rng.hpp"

namespace structkit {

const std::vector<std::string>& known_archetypes() {
  static const std::vector<std::string> names{"chair", "table", "cabinet", "bed"};
  return names;
}

namespace {

// Accumulates axis-aligned parts given by their min/max corners.
struct Builder {
  PartShape shape;

  void add(const Vec3& lo, const Vec3& hi, const std::string& tag) {
    shape.parts.emplace_back(0.5 * (lo + hi), hi - lo, UnitQuaternion::identity());
    shape.tags.push_back(tag);
  }
};

// Seat with four legs on cube feet, a back, optional arms and stretchers.
void build_chair(Builder& b, Rng& rng) {
  const double w = rng.uniform(0.40, 0.60);
  const double d = rng.uniform(0.40, 0.55);
  const double t = rng.uniform(0.04, 0.08);
  const double seat_top = rng.uniform(0.40, 0.50);
  const double foot = rng.uniform(0.05, 0.08);
  const double leg = rng.uniform(0.03, std::min(0.06, foot));
  const double inset = rng.uniform(0.0, 0.03);
  const double lx = w / 2 - inset - foot / 2;
  const double ly = d / 2 - inset - foot / 2;
  const double seat_bottom = seat_top - t;

  b.add({-w / 2, -d / 2, seat_bottom}, {w / 2, d / 2, seat_top}, "seat");
  for (double sx : {-1.0, 1.0}) {
    for (double sy : {-1.0, 1.0}) {
      const double x = sx * lx;
      const double y = sy * ly;
      b.add({x - leg / 2, y - leg / 2, foot}, {x + leg / 2, y + leg / 2, seat_bottom}, "leg");
    }
  }
  for (double sx : {-1.0, 1.0}) {
    for (double sy : {-1.0, 1.0}) {
      const double x = sx * lx;
      const double y = sy * ly;
      b.add({x - foot / 2, y - foot / 2, 0.0}, {x + foot / 2, y + foot / 2, foot}, "foot");
    }
  }
  const double bt = rng.uniform(0.03, 0.06);
  const double bh = rng.uniform(0.35, 0.55);
  b.add({-w / 2, d / 2 - bt, seat_top}, {w / 2, d / 2, seat_top + bh}, "back");

  const bool arms = rng.uniform() < 0.5;
  const double aw = rng.uniform(0.04, 0.07);
  const double ah = rng.uniform(0.18, 0.25);
  const double at = rng.uniform(0.03, 0.05);
  if (arms) {
    b.add({w / 2 - aw, -d / 2, seat_top + ah}, {w / 2, d / 2 - bt, seat_top + ah + at}, "arm");
    b.add({-w / 2, -d / 2, seat_top + ah}, {-w / 2 + aw, d / 2 - bt, seat_top + ah + at}, "arm");
  }
  const bool stretchers = rng.uniform() < 0.5;
  const double s = leg * rng.uniform(0.5, 0.8);
  const double sz = rng.uniform(foot + 0.05, seat_bottom - 0.1);
  if (stretchers) {
    for (double sx : {-1.0, 1.0}) {
      const double x = sx * lx;
      b.add({x - s / 2, -ly + leg / 2, sz}, {x + s / 2, ly - leg / 2, sz + s}, "stretcher");
    }
  }
}

// Top on four legs with optional aprons or a shelf.
void build_table(Builder& b, Rng& rng) {
  const double w = rng.uniform(0.8, 1.4);
  const double d = rng.uniform(0.5, 0.9);
  const double t = rng.uniform(0.03, 0.06);
  const double h = rng.uniform(0.65, 0.80);
  const double leg = rng.uniform(0.04, 0.08);
  const double inset = rng.uniform(0.02, 0.08);
  const double lx = w / 2 - inset - leg / 2;
  const double ly = d / 2 - inset - leg / 2;
  const double under = h - t;

  b.add({-w / 2, -d / 2, under}, {w / 2, d / 2, h}, "top");
  for (double sx : {-1.0, 1.0}) {
    for (double sy : {-1.0, 1.0}) {
      const double x = sx * lx;
      const double y = sy * ly;
      b.add({x - leg / 2, y - leg / 2, 0.0}, {x + leg / 2, y + leg / 2, under}, "leg");
    }
  }
  const auto variant = rng.below(3);
  const double ah = rng.uniform(0.06, 0.12);
  const double at = rng.uniform(0.015, 0.5 * leg);
  const double shelf_z = rng.uniform(0.10, 0.25) * h;
  const double st = rng.uniform(0.02, 0.04);
  if (variant == 1) {
    for (double sy : {-1.0, 1.0}) {
      const double y = sy * ly;
      b.add({-lx + leg / 2, y - at / 2, under - ah}, {lx - leg / 2, y + at / 2, under}, "apron");
    }
    for (double sx : {-1.0, 1.0}) {
      const double x = sx * lx;
      b.add({x - at / 2, -ly + leg / 2, under - ah}, {x + at / 2, ly - leg / 2, under}, "apron");
    }
  } else if (variant == 2) {
    b.add({-lx + leg / 2, -ly, shelf_z}, {lx - leg / 2, ly, shelf_z + st}, "shelf");
  }
}

// Body on cube feet with a top slab, two doors and two handles.
void build_cabinet(Builder& b, Rng& rng) {
  const double w = rng.uniform(0.6, 1.0);
  const double d = rng.uniform(0.35, 0.55);
  const double h = rng.uniform(0.6, 1.2);
  const double foot = rng.uniform(0.04, 0.08);
  const double inset = rng.uniform(0.0, 0.04);
  const double fx = w / 2 - inset - foot / 2;
  const double fy = d / 2 - inset - foot / 2;
  const double top = foot + h;

  b.add({-w / 2, -d / 2, foot}, {w / 2, d / 2, top}, "body");
  for (double sx : {-1.0, 1.0}) {
    for (double sy : {-1.0, 1.0}) {
      const double x = sx * fx;
      const double y = sy * fy;
      b.add({x - foot / 2, y - foot / 2, 0.0}, {x + foot / 2, y + foot / 2, foot}, "foot");
    }
  }
  const double o = rng.uniform(0.0, 0.03);
  const double tt = rng.uniform(0.02, 0.04);
  b.add({-w / 2 - o, -d / 2 - o, top}, {w / 2 + o, d / 2 + o, top + tt}, "top");

  const double dt = rng.uniform(0.015, 0.03);
  const double m = rng.uniform(0.01, 0.03);
  const double door_w = w / 2 - m - m / 2;
  b.add({-m / 2 - door_w, -d / 2 - dt, foot + m}, {-m / 2, -d / 2, top - m}, "door");
  b.add({m / 2, -d / 2 - dt, foot + m}, {m / 2 + door_w, -d / 2, top - m}, "door");

  const double hw = rng.uniform(0.015, 0.03);
  const double hd = rng.uniform(0.02, 0.04);
  const double hh = rng.uniform(0.08, 0.2);
  const double hx = rng.uniform(0.03, 0.06);
  const double hz = foot + h / 2;
  for (double sx : {-1.0, 1.0}) {
    const double x = sx * (m / 2 + hx);
    b.add({x - hw / 2, -d / 2 - dt - hd, hz - hh / 2}, {x + hw / 2, -d / 2 - dt, hz + hh / 2}, "handle");
  }
}

// Base on four legs with a mattress, headboard and two pillows.
void build_bed(Builder& b, Rng& rng) {
  const double w = rng.uniform(0.9, 1.8);
  const double l = rng.uniform(1.8, 2.2);
  const double lh = rng.uniform(0.08, 0.2);
  const double leg = rng.uniform(0.05, 0.1);
  const double inset = rng.uniform(0.02, 0.06);
  const double bh = rng.uniform(0.15, 0.3);
  const double lx = w / 2 - leg / 2 - inset;
  const double ly = l / 2 - leg / 2 - inset;
  const double base_top = lh + bh;

  b.add({-w / 2, -l / 2, lh}, {w / 2, l / 2, base_top}, "base");
  for (double sx : {-1.0, 1.0}) {
    for (double sy : {-1.0, 1.0}) {
      const double x = sx * lx;
      const double y = sy * ly;
      b.add({x - leg / 2, y - leg / 2, 0.0}, {x + leg / 2, y + leg / 2, lh}, "leg");
    }
  }
  const double mm = rng.uniform(0.0, 0.05);
  const double mh = rng.uniform(0.12, 0.25);
  const double mattress_top = base_top + mh;
  b.add({-w / 2 + mm, -l / 2 + mm, base_top}, {w / 2 - mm, l / 2 - mm, mattress_top}, "mattress");
  const double ht = rng.uniform(0.04, 0.08);
  const double hb = rng.uniform(0.8, 1.2);
  b.add({-w / 2, l / 2, 0.0}, {w / 2, l / 2 + ht, hb}, "headboard");

  const double gap = rng.uniform(0.01, 0.05);
  const double pw = rng.uniform(0.6, 0.9) * (w / 2 - mm - gap);
  const double pd = rng.uniform(0.3, 0.45);
  const double ph = rng.uniform(0.08, 0.15);
  const double py = rng.uniform(0.02, 0.08);
  const double y1 = l / 2 - mm - py;
  for (double sx : {-1.0, 1.0}) {
    const double xc = sx * (gap / 2 + pw / 2);
    b.add({xc - pw / 2, y1 - pd, mattress_top}, {xc + pw / 2, y1, mattress_top + ph}, "pillow");
  }
}

bool connected(std::size_t n, const std::vector<Edge>& edges) {
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  const auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [a, b] : edges) parent[find(a)] = find(b);
  for (std::size_t i = 1; i < n; ++i) {
    if (find(i) != find(0)) return false;
  }
  return true;
}

}  // namespace

void annotate_structure(PartShape& shape) {
  const std::size_t n = shape.parts.size();
  shape.symmetry_groups.clear();
  std::vector<bool> grouped(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (grouped[i]) continue;
    std::vector<std::size_t> group{i};
    grouped[i] = true;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!grouped[j] && oracle_translational_symmetry(shape.parts[i], shape.parts[j], 1e-6)) {
        group.push_back(j);
        grouped[j] = true;
      }
    }
    shape.symmetry_groups.push_back(std::move(group));
  }
  shape.edges.clear();
  shape.contacts.clear();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (oracle_adjacency(shape.parts[i], shape.parts[j], 1e-6)) {
        shape.edges.emplace_back(i, j);
        shape.contacts.push_back(ground_truth_contact(shape.parts[i], shape.parts[j], i, j));
      }
    }
  }
}

PartShape generate_shape(const std::string& archetype, std::uint64_t seed) {
  Rng rng(seed);
  Builder b;
  if (archetype == "chair") {
    build_chair(b, rng);
  } else if (archetype == "table") {
    build_table(b, rng);
  } else if (archetype == "cabinet") {
    build_cabinet(b, rng);
  } else if (archetype == "bed") {
    build_bed(b, rng);
  } else {
    throw std::invalid_argument("unknown archetype: " + archetype);
  }
  PartShape shape = std::move(b.shape);
  shape.archetype = archetype;
  annotate_structure(shape);
  if (!connected(shape.parts.size(), shape.edges)) {
    throw std::logic_error("generated " + archetype + " is not connected");
  }
  return shape;
}

PartShape randomize_gt_rotation_labels(const PartShape& shape, std::uint64_t seed) {
  Rng rng(seed);
  const auto& group = proper_signed_permutations();
  PartShape out = shape;
  for (auto& part : out.parts) {
    const Mat3& g = group[rng.below(group.size())];
    const Mat3 r = part.rotation_matrix().matrix() * g;
    const Vec3 size = g.cwiseAbs().transpose() * part.size;
    part = OrientedBox(part.center, size, matrix_to_quat(r));
  }
  for (auto& c : out.contacts) {
    c.weights_a = contact_weights(out.parts[c.a], c.point);
    c.weights_b = contact_weights(out.parts[c.b], c.point);
  }
  return out;
}

Mat3 CameraPose::world_to_camera() const {
  const Vec3 f = look_at - position;
  if (f.norm() < 1e-12) throw GeometryError("camera position coincides with its target");
  const Vec3 z = f.normalized();
  const Vec3 xr = z.cross(up);
  if (xr.norm() < 1e-9 * std::max(1.0, up.norm())) throw GeometryError("camera view direction is parallel to up");
  const Vec3 x = xr.normalized();
  const Vec3 y = z.cross(x);
  Mat3 w;
  w.row(0) = x.transpose();
  w.row(1) = y.transpose();
  w.row(2) = z.transpose();
  return w;
}

double CameraPose::focal() const { return 1.0 / std::tan(0.5 * vfov_deg * std::numbers::pi / 180.0); }

namespace {

void bounding_sphere(const std::vector<OrientedBox>& parts, Vec3& center, double& radius) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& p : parts) {
    for (const auto& v : box_vertices(p)) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
  }
  center = 0.5 * (lo + hi);
  radius = 0.5 * (hi - lo).norm();
}

}  // namespace

CameraPose sample_camera(const PartShape& shape, const CameraConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  Vec3 center;
  double radius;
  bounding_sphere(shape.parts, center, radius);
  const double az = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double el = rng.uniform(cfg.min_elevation_deg, cfg.max_elevation_deg) * std::numbers::pi / 180.0;
  const double fit = radius / std::sin(0.5 * cfg.vfov_deg * std::numbers::pi / 180.0);
  const double dist = rng.uniform(cfg.min_distance, cfg.max_distance) * fit;
  CameraPose cam;
  cam.vfov_deg = cfg.vfov_deg;
  cam.position = center + dist * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
  const double jitter = 0.03 * radius;
  cam.look_at = center + Vec3(rng.normal(0, jitter), rng.normal(0, jitter), rng.normal(0, jitter));
  const double roll = rng.normal(0.0, cfg.roll_sd_deg) * std::numbers::pi / 180.0;
  const Vec3 axis = (cam.look_at - cam.position).normalized();
  cam.up = RotationMatrix::about_axis(axis, roll).matrix() * Vec3::UnitZ();
  return cam;
}

std::vector<OrientedBox> to_camera_frame(const std::vector<OrientedBox>& world, const CameraPose& cam) {
  const Mat3 w = cam.world_to_camera();
  std::vector<OrientedBox> out;
  out.reserve(world.size());
  for (const auto& b : world) {
    const Mat3 r = w * b.rotation_matrix().matrix();
    out.emplace_back(w * (b.center - cam.position), b.size, matrix_to_quat(r));
  }
  return out;
}

namespace {

struct Visibility {
  double fraction = 0.0;
  Vec3 visible_centroid = Vec3::Zero();
  bool any_visible = false;
};

// Segment from the camera origin to p against a solid box, shrunk slightly
// so grazing contact along shared faces does not count.
bool segment_hits(const Vec3& p, const OrientedBox& box) {
  const Mat3 r = box.rotation_matrix().matrix();
  const Vec3 o = r.transpose() * (-box.center);
  const Vec3 d = r.transpose() * p;
  const Vec3 h = box.half_extents() * (1.0 - 1e-9);
  double t0 = 0.0;
  double t1 = 1.0;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-300) {
      if (std::abs(o[k]) >= h[k]) return false;
      continue;
    }
    double a = (-h[k] - o[k]) / d[k];
    double b = (h[k] - o[k]) / d[k];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 >= t1) return false;
  }
  return t0 < 1.0 - 1e-9;
}

Visibility compute_visibility(const std::vector<OrientedBox>& boxes, std::size_t part, std::size_t samples,
                              std::uint64_t seed) {
  const OrientedBox& b = boxes[part];
  const Mat3 r = b.rotation_matrix().matrix();
  const Vec3 h = b.half_extents();
  std::size_t facing = 0;
  std::size_t visible = 0;
  Visibility out;
  for (const auto& p : sample_box_surface(b, samples, seed)) {
    const Vec3 local = (r.transpose() * (p - b.center)).cwiseQuotient(h);
    int axis = 0;
    for (int k = 1; k < 3; ++k) {
      if (std::abs(local[k]) > std::abs(local[axis])) axis = k;
    }
    const Vec3 normal = r.col(axis) * (local[axis] > 0 ? 1.0 : -1.0);
    if (p.z() <= 0.0 || normal.dot(-p) <= 0.0) continue;
    ++facing;
    bool hidden = false;
    for (std::size_t j = 0; j < boxes.size() && !hidden; ++j) {
      if (j != part) hidden = segment_hits(p, boxes[j]);
    }
    if (!hidden) {
      ++visible;
      out.visible_centroid += p;
    }
  }
  out.fraction = facing == 0 ? 0.0 : static_cast<double>(visible) / static_cast<double>(facing);
  out.any_visible = visible > 0;
  if (visible > 0) out.visible_centroid /= static_cast<double>(visible);
  return out;
}

Eigen::Matrix<double, 6, 1> sym6(const Mat3& m) {
  Eigen::Matrix<double, 6, 1> v;
  v << m(0, 0), m(1, 1), m(2, 2), m(0, 1), m(0, 2), m(1, 2);
  return v;
}

struct CornerStats {
  Vec3 mean = Vec3::Zero();
  Mat3 cov = Mat3::Zero();
  Vec3 half = Vec3::Zero();  // sqrt of eigenvalues, descending
  Mat3 axes = Mat3::Identity();
};

CornerStats corner_stats(const std::array<Vec3, 8>& c) {
  CornerStats s;
  for (const auto& p : c) s.mean += p / 8.0;
  for (const auto& p : c) s.cov += (p - s.mean) * (p - s.mean).transpose() / 8.0;
  const Eigen::SelfAdjointEigenSolver<Mat3> es(s.cov);
  for (int k = 0; k < 3; ++k) {
    s.half[k] = std::sqrt(std::max(es.eigenvalues()[2 - k], 0.0));
    s.axes.col(k) = es.eigenvectors().col(2 - k);
  }
  return s;
}

double hull_area(std::vector<Eigen::Vector2d> pts) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  const auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k > 0 ? k - 1 : 0);
  double area = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    area += a.x() * b.y() - b.x() * a.y();
  }
  return 0.5 * std::abs(area);
}

double centred_hausdorff(const std::array<Vec3, 8>& a, const std::array<Vec3, 8>& b) {
  Vec3 ma = Vec3::Zero(), mb = Vec3::Zero();
  for (int i = 0; i < 8; ++i) {
    ma += a[i] / 8.0;
    mb += b[i] / 8.0;
  }
  const auto directed = [](const std::array<Vec3, 8>& x, const Vec3& mx, const std::array<Vec3, 8>& y,
                           const Vec3& my) {
    double worst = 0.0;
    for (const auto& p : x) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : y) best = std::min(best, ((p - mx) - (q - my)).norm());
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(a, ma, b, mb), directed(b, mb, a, ma));
}

OrientedBox observed_box(const PartObservation& o) { return pca_obb_fit(o.corners); }

}  // namespace

double visible_fraction(const std::vector<OrientedBox>& camera_boxes, std::size_t part, std::size_t samples,
                        std::uint64_t seed) {
  return compute_visibility(camera_boxes, part, samples, seed).fraction;
}

Eigen::VectorXd part_feature(const PartObservation& obs, double focal) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(kPartFeatureDim);
  f[0] = obs.occluded ? 1.0 : 0.0;
  std::vector<Eigen::Vector2d> uv;
  Eigen::Vector2d mu2 = Eigen::Vector2d::Zero();
  double dmin = std::numeric_limits<double>::infinity(), dmax = -dmin, dmean = 0.0;
  for (const auto& p : obs.corners) {
    const double z = std::max(p.z(), 1e-6);
    uv.emplace_back(focal * p.x() / z, focal * p.y() / z);
    mu2 += uv.back() / 8.0;
    dmin = std::min(dmin, p.z());
    dmax = std::max(dmax, p.z());
    dmean += p.z() / 8.0;
  }
  Eigen::Matrix2d m2 = Eigen::Matrix2d::Zero();
  for (const auto& q : uv) m2 += (q - mu2) * (q - mu2).transpose() / 8.0;
  f[1] = mu2.x();
  f[2] = mu2.y();
  f[3] = m2(0, 0);
  f[4] = m2(0, 1);
  f[5] = m2(1, 1);
  f[6] = hull_area(uv);
  f[7] = dmean;
  f[8] = dmin;
  f[9] = dmax;

  const CornerStats s = corner_stats(obs.corners);
  const double tr = std::max(s.cov.trace(), 1e-18);
  f.segment<6>(10) = sym6(s.cov / tr);
  // whitening maps the corners of any box onto a rotated cube
  Vec3 inv;
  for (int k = 0; k < 3; ++k) inv[k] = 1.0 / std::max(s.half[k], 1e-6 * std::max(s.half[0], 1e-12));
  const Mat3 whiten = s.axes * inv.asDiagonal() * s.axes.transpose();
  std::array<Vec3, 8> w;
  for (int k = 0; k < 8; ++k) w[k] = whiten * (obs.corners[k] - s.mean);
  int idx = 16;
  for (int a = 0; a < 3; ++a) {
    for (int b = a; b < 3; ++b) {
      for (int c = b; c < 3; ++c) {
        for (int d = c; d < 3; ++d) {
          double m = 0.0;
          for (const auto& x : w) m += x[a] * x[b] * x[c] * x[d] / 8.0;
          f[idx++] = m;
        }
      }
    }
  }
  for (int k = 0; k < 3; ++k) f[31 + k] = std::log(std::max(s.half[k], 1e-9));
  f.segment<3>(34) = s.mean.normalized();
  f.segment<3>(37) = s.mean;
  f.segment<6>(40) = sym6(s.cov);
  return f;
}

Eigen::VectorXd pair_feature(const PartObservation& a, const PartObservation& b) {
  const CornerStats sa = corner_stats(a.corners);
  const CornerStats sb = corner_stats(b.corners);
  Eigen::VectorXd f(kPairFeatureDim);
  const Vec3 delta = sb.mean - sa.mean;
  f.segment<3>(0) = delta;
  f[3] = delta.norm();
  f.segment<6>(4) = sym6(sa.cov);
  f.segment<6>(10) = sym6(sb.cov);
  f.segment<3>(16) = sa.half;
  f.segment<3>(19) = sb.half;
  f[22] = box_distance(observed_box(a), observed_box(b));
  f[23] = a.occluded ? 1.0 : 0.0;
  f[24] = b.occluded ? 1.0 : 0.0;
  return f;
}

Eigen::VectorXd symmetric_pair_feature(const PartObservation& a, const PartObservation& b) {
  const CornerStats sa = corner_stats(a.corners);
  const CornerStats sb = corner_stats(b.corners);
  Eigen::VectorXd f(kSymmetricPairFeatureDim);
  const Vec3 delta = sb.mean - sa.mean;
  f[0] = delta.norm();
  f.segment<3>(1) = delta.cwiseAbs();
  f[4] = box_distance(observed_box(a), observed_box(b));
  f.segment<3>(5) = (sa.half - sb.half).cwiseAbs();
  f[8] = centred_hausdorff(a.corners, b.corners);
  f.segment<6>(9) = sym6(sa.cov + sb.cov);
  f.segment<6>(15) = sym6(sa.cov - sb.cov).cwiseAbs();
  const double oa = a.occluded ? 1.0 : 0.0;
  const double ob = b.occluded ? 1.0 : 0.0;
  f[21] = oa + ob;
  f[22] = oa * ob;
  f.segment<3>(23) = sa.half + sb.half;
  return f;
}

ViewObservation extract_view_features(const PartShape& shape, const CameraPose& camera, const NoiseConfig& noise,
                                      std::uint64_t seed) {
  const std::vector<OrientedBox> boxes = to_camera_frame(shape.parts, camera);
  const double focal = camera.focal();
  Rng rng(seed);
  const double view_scale = std::exp(rng.normal(0.0, noise.depth_scale_sd));
  ViewObservation out;
  out.camera = camera;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    PartObservation obs;
    Visibility vis;
    if (noise.occlusion) {
      vis = compute_visibility(boxes, i, noise.visibility_samples, derive_seed(seed, 1000 + i));
    } else {
      vis.fraction = 1.0;
    }
    obs.visibility = vis.fraction;
    obs.occluded = noise.occlusion && vis.fraction < noise.occlusion_threshold;
    const double mult = obs.occluded ? noise.occluded_noise_mult : 1.0;
    const double scale = view_scale * std::exp(rng.normal(0.0, noise.part_scale_sd));
    const OrientedBox& b = boxes[i];
    auto corners = box_vertices(b);
    if (obs.occluded) {
      // only part of the box is seen: shrink it toward what is visible
      const double rho = 0.5 + 0.5 * vis.fraction;
      const Vec3 anchor = vis.any_visible ? b.center + (1.0 - rho) * (vis.visible_centroid - b.center) : b.center;
      for (auto& c : corners) c = anchor + rho * (c - b.center);
    }
    for (int k = 0; k < 8; ++k) {
      const Vec3& c = corners[k];
      const double z = std::max(c.z(), 1e-3);
      const double u = focal * c.x() / z + rng.normal(0.0, noise.pixel_sd * mult);
      const double v = focal * c.y() / z + rng.normal(0.0, noise.pixel_sd * mult);
      const double depth = z * scale * (1.0 + rng.normal(0.0, noise.depth_sd * mult));
      obs.corners[k] = Vec3(u * depth / focal, v * depth / focal, depth);
    }
    out.features.push_back(part_feature(obs, focal));
    out.parts.push_back(obs);
  }
  return out;
}

ViewSample make_view_sample(const PartShape& shape, std::size_t shape_index, std::size_t view,
                            const CameraConfig& camera, const NoiseConfig& noise, std::uint64_t shape_seed) {
  const std::uint64_t view_seed = derive_seed(shape_seed, 1 + view);
  ViewSample s;
  s.shape_index = shape_index;
  s.view = view;
  const CameraPose cam = sample_camera(shape, camera, derive_seed(view_seed, 1));
  s.observation = extract_view_features(shape, cam, noise, derive_seed(view_seed, 2));
  PartShape cam_shape = shape;
  cam_shape.parts = to_camera_frame(shape.parts, cam);
  const Mat3 w = cam.world_to_camera();
  for (auto& c : cam_shape.contacts) c.point = w * (c.point - cam.position);
  s.label = randomize_gt_rotation_labels(cam_shape, derive_seed(view_seed, 3));
  return s;
}

Dataset make_dataset(const DatasetConfig& cfg, int jobs) {
  if (cfg.shapes == 0) throw std::invalid_argument("make_dataset: need at least one shape");
  if (cfg.views == 0) throw std::invalid_argument("make_dataset: need at least one view");
  if (cfg.archetypes.empty()) throw std::invalid_argument("make_dataset: no archetypes");
  for (const auto& a : cfg.archetypes) {
    if (std::find(known_archetypes().begin(), known_archetypes().end(), a) == known_archetypes().end()) {
      throw std::invalid_argument("unknown archetype: " + a);
    }
  }
  Dataset ds;
  ds.config = cfg;
  ds.config_hash = dataset_config_hash(cfg);
  const std::size_t n = cfg.shapes;
  ds.shapes.resize(n);
  ds.samples.resize(n * cfg.views);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        const std::string& arch = cfg.archetypes[i % cfg.archetypes.size()];
        const std::uint64_t seed = derive_seed(cfg.seed, i);
        PartShape shape = generate_shape(arch, seed);
        char id[64];
        std::snprintf(id, sizeof id, "%s_%05zu", arch.c_str(), i);
        shape.id = id;
        for (std::size_t v = 0; v < cfg.views; ++v) {
          ds.samples[i * cfg.views + v] = make_view_sample(shape, i, v, cfg.camera, cfg.noise, seed);
          ds.samples[i * cfg.views + v].label.id = shape.id;
        }
        ds.shapes[i] = std::move(shape);
      } catch (...) {
        const std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::max(1, jobs); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(cfg.seed, 0x5917));
  rng.shuffle(order.begin(), order.end());
  const auto n_train = static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<double>(n) + 0.5));
  const auto n_val = std::min(n - std::min(n, n_train),
                              static_cast<std::size_t>(std::floor(cfg.val_fraction * static_cast<double>(n) + 0.5)));
  ds.split.assign(n, "test");
  for (std::size_t k = 0; k < n; ++k) {
    if (k < n_train) {
      ds.split[order[k]] = "train";
    } else if (k < n_train + n_val) {
      ds.split[order[k]] = "val";
    }
  }
  return ds;
}

}  // namespace structkit
