#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

#include "structkit/geometry.hpp"
#include "structkit/nets.hpp"

namespace structkit {

enum class ScoreSource { kOracle, kLearned };

std::string to_string(ScoreSource s);

struct PartPairScore {
  std::size_t i = 0;
  std::size_t j = 0;
  double symmetry = 0.0;
  double adjacency = 0.0;
  ScoreSource source = ScoreSource::kOracle;
};

struct RelationThresholds {
  double adjacency = 0.7;
  double symmetry = 0.9;
};

/// Disjoint groups covering every part, each listed in insertion order.
struct SymmetryGrouping {
  std::vector<std::vector<std::size_t>> groups;

  /// Group index of every part.
  std::vector<std::size_t> membership(std::size_t part_count) const;
};

/// True when b is a translate of a: sorted sizes agree within tol, the axis
/// sets agree (rotation_set_distance ≤ tol), and the centred vertex sets
/// agree within tol (Hausdorff distance).
bool oracle_translational_symmetry(const OrientedBox& a, const OrientedBox& b, double tol = 1e-6);

/// True when the exact box distance is at most gap_tol.
bool oracle_adjacency(const OrientedBox& a, const OrientedBox& b, double gap_tol = 1e-6);

/// Dense-sampling variant of the gap: nearest sampled surface point of a to
/// the solid b, symmetrised. Overestimates the exact distance.
double sampled_box_gap(const OrientedBox& a, const OrientedBox& b, std::size_t samples, std::uint64_t seed);

/// Oracle scores (0 or 1) for every pair i < j.
std::vector<PartPairScore> oracle_scores(std::span<const OrientedBox> parts, double symmetry_tol = 1e-6,
                                         double gap_tol = 1e-6);

/// sigmoid of the classifier logit.
double learned_relation_score(const nn::MlpHead& classifier, const Eigen::VectorXd& pair_feature);

/// Greedy clique growth in descending-volume order (ties to the lower index):
/// a part joins the current group only if its score to every member reaches
/// the threshold. Pairs absent from `scores` count as 0.
SymmetryGrouping cluster_parts(std::span<const PartPairScore> scores, std::span<const double> volumes,
                               double threshold);

/// Checks the all-pairs-above-threshold property and that the groups
/// partition [0, part_count).
bool satisfies_clique_property(const SymmetryGrouping& g, std::span<const PartPairScore> scores,
                               std::size_t part_count, double threshold);

/// Pairs whose adjacency score reaches the threshold.
std::vector<std::pair<std::size_t, std::size_t>> adjacent_pairs(std::span<const PartPairScore> scores,
                                                                 double threshold);

}  // namespace structkit
