#include "structkit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace structkit {

void MoEPrediction::validate() const {
  if (rotations.empty()) throw std::invalid_argument("MoEPrediction: no experts");
  if (rotations.size() != probabilities.size()) {
    throw std::invalid_argument("MoEPrediction: rotation/probability count mismatch");
  }
  double sum = 0.0;
  for (double p : probabilities) {
    if (!(p >= 0.0)) throw std::invalid_argument("MoEPrediction: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("MoEPrediction: probabilities do not sum to 1");
}

std::size_t MoEPrediction::selected() const {
  return static_cast<std::size_t>(
      std::max_element(probabilities.begin(), probabilities.end()) - probabilities.begin());
}

void LossConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("LossConfig: lambda must be >= 0");
  if (!(laplace_b > 0.0)) throw std::invalid_argument("LossConfig: laplace_b must be > 0");
}

double min_of_n_loss(const MoEPrediction& pred, const RotationEquivalenceSet& gt_set) {
  pred.validate();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : pred.rotations) best = std::min(best, rotation_set_distance(r, gt_set));
  return best;
}

double laplace_mixture_loglik(const MoEPrediction& pred, const RotationEquivalenceSet& gt_set,
                              const LossConfig& cfg) {
  pred.validate();
  cfg.validate();
  const double b = cfg.laplace_b;
  std::vector<double> terms;
  terms.reserve(pred.rotations.size());
  for (std::size_t j = 0; j < pred.rotations.size(); ++j) {
    if (pred.probabilities[j] <= 0.0) continue;
    const double d = rotation_set_distance(pred.rotations[j], gt_set);
    terms.push_back(std::log(pred.probabilities[j]) - d / b);
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s) - std::log(2.0 * b);
}

double moe_total_loss(const MoEPrediction& pred, const RotationEquivalenceSet& gt_set,
                      const LossConfig& cfg) {
  return min_of_n_loss(pred, gt_set) - cfg.lambda * laplace_mixture_loglik(pred, gt_set, cfg);
}

double size_loss(const Vec3& pred_lengths, const Vec3& gt_lengths) {
  return (pred_lengths - gt_lengths).squaredNorm() / 3.0;
}

double chamfer_box_distance(const OrientedBox& a, const OrientedBox& b) {
  const auto va = box_vertices(a), vb = box_vertices(b);
  auto directed = [](const std::array<Vec3, 8>& from, const std::array<Vec3, 8>& to) {
    double acc = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
      acc += best;
    }
    return acc / 8.0;
  };
  return directed(va, vb) + directed(vb, va);
}

double l1_vector_error(const Vec3& pred, const Vec3& gt) { return (pred - gt).cwiseAbs().sum() / 3.0; }

}  // namespace structkit
