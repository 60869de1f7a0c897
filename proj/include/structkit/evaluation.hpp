#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "structkit/geometry.hpp"

namespace structkit {

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<std::size_t> part_counts;  // points contributed by each box
};

/// Greedy max-min selection of k indices starting at `start`.
std::vector<std::size_t> farthest_point_sampling(std::span<const Vec3> points, std::size_t k,
                                                 std::size_t start = 0);

/// per_box surface samples from every box, pooled, sorted lexicographically,
/// then reduced to `final_count` points by farthest point sampling from the
/// first sorted point.
PointCloud shape_to_pointcloud(std::span<const OrientedBox> boxes, std::size_t per_box = 1024,
                               std::size_t final_count = 1024, std::uint64_t seed = 0);

inline constexpr std::size_t kMaxExactEmdPoints = 512;

/// Mean Euclidean distance under the optimal perfect matching
/// (shortest augmenting path assignment).
double emd_exact(std::span<const Vec3> a, std::span<const Vec3> b);

/// Auction algorithm with ε-scaling: phase k uses ε_k = ε₀ / 4^k with ε₀
/// half the largest pairwise distance, for `iterations` phases. Returns the
/// best matching cost found, so it never increases with more phases and
/// exceeds the optimum by at most ε of the final phase.
double emd_approx(std::span<const Vec3> a, std::span<const Vec3> b, int iterations = 8);

/// Copy of `points` translated so its centroid coincides with `target`'s.
std::vector<Vec3> align_centroid(std::span<const Vec3> points, std::span<const Vec3> target);

struct EvalSample {
  std::string id;
  std::string category;
  std::vector<OrientedBox> pred;
  std::vector<OrientedBox> gt;
};

struct EvalConfig {
  std::size_t per_box = 1024;
  std::size_t points = 256;
  std::uint64_t seed = 0;
  int approx_iterations = 8;  // used when points exceeds the exact limit
  EquivalenceMode mode = EquivalenceMode::kAll48;
  int jobs = 1;
  std::string config_hash;
};

struct ShapeMetrics {
  double emd_aligned = 0.0;
  double emd_raw = 0.0;
  double chamfer = 0.0;      // mean box chamfer over parts
  double geodesic = 0.0;     // mean degrees over parts
  double size_l1 = 0.0;      // mean over parts, axes matched via the nearest equivalent
  double position_l1 = 0.0;  // mean over parts after aligning centre means
};

struct MetricRow {
  std::size_t count = 0;
  ShapeMetrics mean;
};

struct MetricReport {
  std::map<std::string, MetricRow> categories;
  MetricRow overall;
  EvalConfig config;
};

ShapeMetrics evaluate_shape(std::span<const OrientedBox> pred, std::span<const OrientedBox> gt,
                            const EvalConfig& cfg);

/// Per-shape metrics aggregated in id order, so the report does not depend
/// on the order of `samples`.
MetricReport evaluate_dataset(std::span<const EvalSample> samples, const EvalConfig& cfg);

/// Aligned text table, one row per category plus the overall row.
std::string format_report_table(const MetricReport& report);

}  // namespace structkit
