#pragma once

#include <vector>

#include "structkit/geometry.hpp"

namespace structkit {

/// K rotation hypotheses with selection probabilities.
struct MoEPrediction {
  std::vector<RotationMatrix> rotations;
  std::vector<double> probabilities;

  /// Throws std::invalid_argument if sizes differ, K = 0, or the
  /// probabilities are not a simplex within 1e-9.
  void validate() const;

  /// Index of the most probable expert (first on ties).
  std::size_t selected() const;
  const RotationMatrix& selected_rotation() const { return rotations[selected()]; }
};

struct LossConfig {
  double lambda = 1.0;     // weight of the mixture negative log-likelihood
  double laplace_b = 0.5;  // Laplace scale
  EquivalenceMode mode = EquivalenceMode::kAll48;

  void validate() const;
};

/// min_j D(R̂_j, {R}).
double min_of_n_loss(const MoEPrediction& pred, const RotationEquivalenceSet& gt_set);

/// log Σ_j q_j (1/2b) exp(−D_j / b), evaluated with log-sum-exp.
double laplace_mixture_loglik(const MoEPrediction& pred, const RotationEquivalenceSet& gt_set,
                              const LossConfig& cfg);

/// min_of_n_loss − λ · laplace_mixture_loglik.
double moe_total_loss(const MoEPrediction& pred, const RotationEquivalenceSet& gt_set,
                      const LossConfig& cfg);

double size_loss(const Vec3& pred_lengths, const Vec3& gt_lengths);

/// Sum of both directed mean nearest-neighbour squared distances between the
/// two 8-vertex sets.
double chamfer_box_distance(const OrientedBox& a, const OrientedBox& b);

double l1_vector_error(const Vec3& pred, const Vec3& gt);

}  // namespace structkit
