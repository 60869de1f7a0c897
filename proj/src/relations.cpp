#include "structkit/relations.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace structkit {

std::string to_string(ScoreSource s) { return s == ScoreSource::kOracle ? "oracle" : "learned"; }

std::vector<std::size_t> SymmetryGrouping::membership(std::size_t part_count) const {
  std::vector<std::size_t> out(part_count, std::numeric_limits<std::size_t>::max());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t p : groups[g]) {
      if (p >= part_count) throw std::out_of_range("group member out of range");
      out[p] = g;
    }
  }
  return out;
}

namespace {

double directed_hausdorff(const std::array<Vec3, 8>& a, const std::array<Vec3, 8>& b) {
  double worst = 0.0;
  for (const auto& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) best = std::min(best, (p - q).norm());
    worst = std::max(worst, best);
  }
  return worst;
}

Eigen::MatrixXd score_matrix(std::span<const PartPairScore> scores, std::size_t n, bool symmetry) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& s : scores) {
    if (s.i >= n || s.j >= n) throw std::invalid_argument("pair score index out of range");
    const double v = symmetry ? s.symmetry : s.adjacency;
    m(static_cast<Eigen::Index>(s.i), static_cast<Eigen::Index>(s.j)) = v;
    m(static_cast<Eigen::Index>(s.j), static_cast<Eigen::Index>(s.i)) = v;
  }
  return m;
}

}  // namespace

bool oracle_translational_symmetry(const OrientedBox& a, const OrientedBox& b, double tol) {
  std::array<double, 3> sa{a.size.x(), a.size.y(), a.size.z()};
  std::array<double, 3> sb{b.size.x(), b.size.y(), b.size.z()};
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  for (int k = 0; k < 3; ++k) {
    if (std::abs(sa[k] - sb[k]) > tol) return false;
  }
  if (rotation_set_distance(b.rotation_matrix(), equivalence_set(a.rotation_matrix())) > tol) return false;
  // axis sets alone do not pin which edge length lies along which axis
  const auto va = box_vertex_offsets(a);
  const auto vb = box_vertex_offsets(b);
  return std::max(directed_hausdorff(va, vb), directed_hausdorff(vb, va)) <= tol;
}

bool oracle_adjacency(const OrientedBox& a, const OrientedBox& b, double gap_tol) {
  return box_distance(a, b) <= gap_tol;
}

double sampled_box_gap(const OrientedBox& a, const OrientedBox& b, std::size_t samples, std::uint64_t seed) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : sample_box_surface(a, samples, seed)) best = std::min(best, point_box_distance(p, b));
  for (const auto& p : sample_box_surface(b, samples, seed + 1)) best = std::min(best, point_box_distance(p, a));
  return best;
}

std::vector<PartPairScore> oracle_scores(std::span<const OrientedBox> parts, double symmetry_tol, double gap_tol) {
  std::vector<PartPairScore> out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (std::size_t j = i + 1; j < parts.size(); ++j) {
      PartPairScore s;
      s.i = i;
      s.j = j;
      s.symmetry = oracle_translational_symmetry(parts[i], parts[j], symmetry_tol) ? 1.0 : 0.0;
      s.adjacency = oracle_adjacency(parts[i], parts[j], gap_tol) ? 1.0 : 0.0;
      s.source = ScoreSource::kOracle;
      out.push_back(s);
    }
  }
  return out;
}

double learned_relation_score(const nn::MlpHead& classifier, const Eigen::VectorXd& pair_feature) {
  const double logit = classifier.predict(nn::Matrix(pair_feature.transpose()))(0, 0);
  return logit >= 0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
}

SymmetryGrouping cluster_parts(std::span<const PartPairScore> scores, std::span<const double> volumes,
                               double threshold) {
  const std::size_t n = volumes.size();
  const Eigen::MatrixXd m = score_matrix(scores, n, true);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return volumes[x] > volumes[y]; });
  std::vector<bool> grouped(n, false);
  SymmetryGrouping out;
  for (std::size_t seed : order) {
    if (grouped[seed]) continue;
    std::vector<std::size_t> group{seed};
    grouped[seed] = true;
    for (std::size_t cand : order) {
      if (grouped[cand]) continue;
      const bool fits = std::all_of(group.begin(), group.end(), [&](std::size_t member) {
        return m(static_cast<Eigen::Index>(cand), static_cast<Eigen::Index>(member)) >= threshold;
      });
      if (fits) {
        group.push_back(cand);
        grouped[cand] = true;
      }
    }
    out.groups.push_back(std::move(group));
  }
  return out;
}

bool satisfies_clique_property(const SymmetryGrouping& g, std::span<const PartPairScore> scores,
                               std::size_t part_count, double threshold) {
  std::vector<int> seen(part_count, 0);
  for (const auto& group : g.groups) {
    for (std::size_t p : group) {
      if (p >= part_count) return false;
      ++seen[p];
    }
  }
  if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; })) return false;
  const Eigen::MatrixXd m = score_matrix(scores, part_count, true);
  for (const auto& group : g.groups) {
    for (std::size_t x = 0; x < group.size(); ++x) {
      for (std::size_t y = x + 1; y < group.size(); ++y) {
        if (m(static_cast<Eigen::Index>(group[x]), static_cast<Eigen::Index>(group[y])) < threshold) return false;
      }
    }
  }
  return true;
}

std::vector<std::pair<std::size_t, std::size_t>> adjacent_pairs(std::span<const PartPairScore> scores,
                                                                 double threshold) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& s : scores) {
    if (s.adjacency >= threshold) out.emplace_back(std::min(s.i, s.j), std::max(s.i, s.j));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace structkit
