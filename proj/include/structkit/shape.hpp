#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "structkit/geometry.hpp"

namespace structkit {

using Edge = std::pair<std::size_t, std::size_t>;

/// A point shared by two touching parts, with its trilinear vertex weights
/// in each part (vertex order of box_vertices).
struct ContactPoint {
  std::size_t a = 0;
  std::size_t b = 0;
  Vec3 point = Vec3::Zero();
  std::array<double, 8> weights_a{};
  std::array<double, 8> weights_b{};
};

/// One object: labeled boxes plus ground-truth structure.
struct PartShape {
  std::string id;
  std::string archetype;
  std::vector<OrientedBox> parts;
  std::vector<std::string> tags;
  std::vector<std::vector<std::size_t>> symmetry_groups;
  std::vector<Edge> edges;            // i < j, sorted
  std::vector<ContactPoint> contacts; // aligned with edges
};

}  // namespace structkit
