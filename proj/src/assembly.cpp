#include "structkit/assembly.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace structkit {

std::vector<Edge> PartTree::edges() const {
  std::vector<Edge> out;
  for (std::size_t p : order) {
    if (parent[p] != kNoParent) out.emplace_back(parent[p], p);
  }
  return out;
}

namespace {

// true when x should be preferred over y: larger volume, then lower index
bool bigger(std::span<const double> volumes, std::size_t x, std::size_t y) {
  if (volumes[x] != volumes[y]) return volumes[x] > volumes[y];
  return x < y;
}

}  // namespace

PartTree build_part_tree(std::span<const Edge> adjacency, std::span<const double> volumes) {
  const std::size_t n = volumes.size();
  for (double v : volumes) {
    if (!(v > 0.0)) throw std::invalid_argument("build_part_tree: volumes must be positive");
  }
  std::vector<std::vector<std::size_t>> nbrs(n);
  for (const auto& [a, b] : adjacency) {
    if (a >= n || b >= n) throw std::invalid_argument("build_part_tree: edge index out of range");
    if (a == b) continue;
    nbrs[a].push_back(b);
    nbrs[b].push_back(a);
  }
  PartTree t;
  t.parent.assign(n, kNoParent);
  t.component.assign(n, 0);
  std::vector<bool> placed(n, false);
  std::size_t remaining = n;
  while (remaining > 0) {
    std::size_t root = kNoParent;
    for (std::size_t p = 0; p < n; ++p) {
      if (!placed[p] && (root == kNoParent || bigger(volumes, p, root))) root = p;
    }
    const std::size_t comp = t.roots.size();
    t.roots.push_back(root);
    std::vector<std::size_t> members{root};
    placed[root] = true;
    t.component[root] = comp;
    t.order.push_back(root);
    --remaining;
    while (true) {
      std::size_t best = kNoParent;
      for (std::size_t m : members) {
        for (std::size_t c : nbrs[m]) {
          if (!placed[c] && (best == kNoParent || bigger(volumes, c, best))) best = c;
        }
      }
      if (best == kNoParent) break;
      std::size_t par = kNoParent;
      for (std::size_t c : nbrs[best]) {
        if (placed[c] && t.component[c] == comp && (par == kNoParent || bigger(volumes, c, par))) par = c;
      }
      t.parent[best] = par;
      t.component[best] = comp;
      placed[best] = true;
      members.push_back(best);
      t.order.push_back(best);
      --remaining;
    }
  }
  return t;
}

Vec3 contact_from_weights(const VertexWeights& w, const OrientedBox& box) {
  const auto v = box_vertex_offsets(box);
  Vec3 c = Vec3::Zero();
  for (int j = 0; j < 8; ++j) c += w[j] * v[j];
  return c;
}

Vec3 relative_from_contacts(const VertexWeights& w1, const VertexWeights& w2, const OrientedBox& box1,
                            const OrientedBox& box2) {
  return contact_from_weights(w1, box1) - contact_from_weights(w2, box2);
}

VertexWeights contact_weights(const OrientedBox& box, const Vec3& point) {
  const Mat3 r = box.rotation_matrix().matrix();
  const Vec3 local = (r.transpose() * (point - box.center)).cwiseQuotient(box.half_extents());
  Vec3 t;
  for (int k = 0; k < 3; ++k) t[k] = 0.5 * (std::clamp(local[k], -1.0, 1.0) + 1.0);
  VertexWeights w{};
  for (int j = 0; j < 8; ++j) {
    double x = 1.0;
    for (int k = 0; k < 3; ++k) x *= vertex_sign(j, k) > 0 ? t[k] : 1.0 - t[k];
    w[j] = x;
  }
  return w;
}

ContactPoint ground_truth_contact(const OrientedBox& a, const OrientedBox& b, std::size_t ia, std::size_t ib) {
  ContactPoint c;
  c.a = ia;
  c.b = ib;
  c.point = project_onto_box_intersection(0.5 * (a.center + b.center), a, b);
  c.weights_a = contact_weights(a, c.point);
  c.weights_b = contact_weights(b, c.point);
  return c;
}

PlacedShape assemble(const PartTree& tree, std::span<const OrientedBox> boxes, const ContactAssignment& contacts) {
  const std::size_t n = boxes.size();
  if (tree.parent.size() != n) throw std::invalid_argument("assemble: tree and box counts differ");
  std::vector<const EdgeContact*> by_child(n, nullptr);
  for (const auto& e : contacts) {
    if (e.child < n && tree.parent[e.child] == e.parent) by_child[e.child] = &e;
  }
  PlacedShape out;
  out.boxes.assign(boxes.begin(), boxes.end());
  out.component = tree.component;
  out.roots = tree.roots;
  for (std::size_t p : tree.order) {
    if (tree.parent[p] == kNoParent) {
      out.boxes[p].center = Vec3::Zero();
      continue;
    }
    const EdgeContact* e = by_child[p];
    if (e == nullptr) {
      throw std::invalid_argument("assemble: no contact for edge " + std::to_string(tree.parent[p]) + "-" +
                                  std::to_string(p));
    }
    const std::size_t par = tree.parent[p];
    out.boxes[p].center = out.boxes[par].center +
                          relative_from_contacts(e->parent_weights, e->child_weights, boxes[par], boxes[p]);
  }
  return out;
}

ContactAssignment ground_truth_assignment(const PartTree& tree, const PartShape& shape) {
  ContactAssignment out;
  for (const auto& [par, child] : tree.edges()) {
    const auto it = std::find_if(shape.contacts.begin(), shape.contacts.end(), [&](const ContactPoint& c) {
      return (c.a == par && c.b == child) || (c.a == child && c.b == par);
    });
    if (it == shape.contacts.end()) {
      throw std::invalid_argument("ground_truth_assignment: missing contact for edge " + std::to_string(par) + "-" +
                                  std::to_string(child));
    }
    const bool forward = it->a == par;
    out.push_back({par, child, forward ? it->weights_a : it->weights_b, forward ? it->weights_b : it->weights_a});
  }
  return out;
}

std::vector<Vec3> absolute_position_baseline(const nn::MlpHead& head, const nn::Matrix& features) {
  const nn::Matrix out = head.predict(features);
  if (out.cols() != 3) throw std::invalid_argument("absolute baseline head must emit 3 values");
  std::vector<Vec3> centers;
  for (Eigen::Index i = 0; i < out.rows(); ++i) centers.emplace_back(out.row(i).transpose());
  return centers;
}

std::vector<Vec3> center_offset_baseline(const nn::MlpHead& head, const nn::Matrix& pair_features) {
  return absolute_position_baseline(head, pair_features);
}

void write_obj(std::ostream& os, std::span<const OrientedBox> boxes, std::span<const std::string> names) {
  // outward-facing quads over the box_vertices ordering
  static constexpr std::array<std::array<int, 4>, 6> kFaces{{
      {0, 1, 3, 2}, {4, 6, 7, 5}, {0, 4, 5, 1}, {2, 3, 7, 6}, {0, 2, 6, 4}, {1, 5, 7, 3},
  }};
  os << std::setprecision(17);
  std::size_t base = 1;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    os << "g " << (i < names.size() ? names[i] : "part_" + std::to_string(i)) << '\n';
    for (const auto& v : box_vertices(boxes[i])) os << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& f : kFaces) {
      os << "f " << base + f[0] << ' ' << base + f[1] << ' ' << base + f[2] << '\n';
      os << "f " << base + f[0] << ' ' << base + f[2] << ' ' << base + f[3] << '\n';
    }
    base += 8;
  }
}

}  // namespace structkit
