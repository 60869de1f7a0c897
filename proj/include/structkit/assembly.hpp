#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "structkit/nets.hpp"
#include "structkit/shape.hpp"

namespace structkit {

inline constexpr std::size_t kNoParent = static_cast<std::size_t>(-1);

/// Spanning forest of the adjacency graph grown greedily from the largest
/// part of each component.
struct PartTree {
  std::vector<std::size_t> parent;     // kNoParent for roots
  std::vector<std::size_t> component;  // component index per part
  std::vector<std::size_t> roots;      // one per component, in creation order
  std::vector<std::size_t> order;      // insertion order over all parts

  /// (parent, child) pairs in insertion order.
  std::vector<Edge> edges() const;
};

/// Grows one tree per component. The root is the largest remaining part;
/// each step adds the largest part in the tree's 1-hop neighbourhood,
/// attached to its largest neighbour already in the tree. Volume ties go to
/// the lower index.
PartTree build_part_tree(std::span<const Edge> adjacency, std::span<const double> volumes);

using VertexWeights = std::array<double, 8>;

struct EdgeContact {
  std::size_t parent = 0;
  std::size_t child = 0;
  VertexWeights parent_weights{};
  VertexWeights child_weights{};
};

using ContactAssignment = std::vector<EdgeContact>;

/// Σ_j ω_j v_j with vertices taken relative to the box centre.
Vec3 contact_from_weights(const VertexWeights& w, const OrientedBox& box);

/// l_{1→2} = c¹ − c², the offset from box 1's centre to box 2's centre.
Vec3 relative_from_contacts(const VertexWeights& w1, const VertexWeights& w2, const OrientedBox& box1,
                            const OrientedBox& box2);

/// Trilinear weights reproducing a point of the box exactly; points outside
/// are first clamped onto the box.
VertexWeights contact_weights(const OrientedBox& box, const Vec3& point);

/// Ground-truth contact between two touching boxes: the projection of the
/// midpoint of their centres onto the intersection.
ContactPoint ground_truth_contact(const OrientedBox& a, const OrientedBox& b, std::size_t ia, std::size_t ib);

struct PlacedShape {
  std::vector<OrientedBox> boxes;
  std::vector<std::size_t> component;
  std::vector<std::size_t> roots;
};

/// Places each root at the origin and every child at parent + l_{p→c}.
/// Throws std::invalid_argument when a tree edge has no contact.
PlacedShape assemble(const PartTree& tree, std::span<const OrientedBox> boxes, const ContactAssignment& contacts);

/// Contacts for every tree edge taken from a shape's ground truth.
ContactAssignment ground_truth_assignment(const PartTree& tree, const PartShape& shape);

/// Per-part centres regressed directly by a baseline head (B×3 output).
std::vector<Vec3> absolute_position_baseline(const nn::MlpHead& head, const nn::Matrix& features);

/// Per-edge centre offsets regressed directly by a baseline head.
std::vector<Vec3> center_offset_baseline(const nn::MlpHead& head, const nn::Matrix& pair_features);

/// Wavefront OBJ with one named group per part (8 vertices, 12 triangles).
void write_obj(std::ostream& os, std::span<const OrientedBox> boxes, std::span<const std::string> names = {});

}  // namespace structkit
