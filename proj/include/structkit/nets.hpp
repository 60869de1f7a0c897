#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "structkit/autodiff.hpp"
#include "structkit/losses.hpp"
#include "structkit/rng.hpp"

namespace structkit::nn {

enum class Activation { kRelu, kTanh };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

/// Fully connected stack; the activation follows every layer but the last.
class Mlp {
 public:
  Mlp() = default;
  /// dims = {input, hidden..., output}. Weights are drawn from N(0, gain/fan_in)
  /// with a deterministic stream; biases start at zero. zero_last zeroes the
  /// final layer's weights.
  Mlp(std::vector<int> dims, Activation act, Rng& rng, bool zero_last = false);

  Tensor forward(const Tensor& x) const;
  std::vector<Tensor> parameters() const;
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }

 private:
  std::vector<int> dims_{0};
  Activation act_ = Activation::kRelu;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

/// Per-column affine input normalization fitted on training features.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer identity(int dim);
  static Standardizer fit(const Matrix& x);
  Matrix apply(const Matrix& x) const;
};

enum class RotationLossKind { kMse, kMinN, kMoE };

RotationLossKind rotation_loss_from_string(const std::string& name);
std::string to_string(RotationLossKind k);

struct OrientationHeadConfig {
  int input_dim = 0;
  std::vector<int> trunk = {128, 128};
  int branch_hidden = 64;
  int experts = 4;
  Activation activation = Activation::kRelu;
  bool zero_last = false;
};

class OrientationHead {
 public:
  struct Output {
    std::vector<Tensor> rotations;  // K tensors of shape B×9 (row-major)
    Tensor logits;                  // B×K
  };

  OrientationHead() = default;
  OrientationHead(const OrientationHeadConfig& cfg, std::uint64_t seed);

  Output forward(const Tensor& features) const;
  std::vector<Tensor> parameters() const;
  const OrientationHeadConfig& config() const { return cfg_; }

  Standardizer input;

 private:
  OrientationHeadConfig cfg_;
  Mlp trunk_;
  std::vector<Mlp> branches_;
};

/// Evaluates the head on one descriptor.
MoEPrediction forward_orientation(const OrientationHead& head, const Eigen::VectorXd& feature);
std::vector<MoEPrediction> forward_orientation(const OrientationHead& head, const Matrix& features);

/// Batch loss of the orientation head. kMse compares expert 0 with the raw
/// labels; kMinN is min_j D_j (the mixture term is dropped); kMoE is the
/// full L1 + λ·NLL.
Tensor orientation_loss(const OrientationHead::Output& out, std::span<const Mat3> labels,
                        std::span<const RotationEquivalenceSet* const> sets, RotationLossKind kind,
                        const LossConfig& cfg);

/// Six distinct entries of a aᵀ; invariant to the sign of a.
Eigen::Matrix<double, 1, 6> axis_descriptor(const Vec3& axis);

struct SizeHeadConfig {
  int input_dim = 0;
  std::vector<int> encoder = {64, 64};
  std::vector<int> axis_local = {64};
  std::vector<int> axis_out = {64};
  Activation activation = Activation::kRelu;
  bool zero_last = false;
};

/// Group-pooled, per-axis shared length regressor.
class SizeHead {
 public:
  SizeHead() = default;
  SizeHead(const SizeHeadConfig& cfg, std::uint64_t seed);

  /// members: M×F features of all groups stacked; offsets: G+1 row
  /// boundaries; axes: 3G×6 axis descriptors. Returns 3G×1 lengths.
  Tensor forward(const Tensor& members, std::span<const Eigen::Index> offsets, const Tensor& axes) const;
  std::vector<Tensor> parameters() const;
  const SizeHeadConfig& config() const { return cfg_; }

  Standardizer input;

 private:
  SizeHeadConfig cfg_;
  Mlp encoder_;
  Mlp local_;
  Mlp out_;
};

Vec3 forward_size(const SizeHead& head, const Matrix& group_features, const std::array<Vec3, 3>& axes);

struct ContactHeadConfig {
  int input_dim = 0;
  std::vector<int> encoder = {64, 64};
  std::vector<int> vertex_local = {64};
  std::vector<int> vertex_out = {64};
  Activation activation = Activation::kRelu;
  bool zero_last = false;
};

/// Per-vertex softmax contact point predictor.
class ContactHead {
 public:
  struct Output {
    Tensor weights;   // 8B×1, a simplex per pair
    Tensor contacts;  // B×3
  };

  ContactHead() = default;
  ContactHead(const ContactHeadConfig& cfg, std::uint64_t seed);

  /// pair_features: B×P; vertices: 8B×3 part-centred vertices of the first
  /// part of each pair.
  Output forward(const Tensor& pair_features, const Tensor& vertices) const;
  std::vector<Tensor> parameters() const;
  const ContactHeadConfig& config() const { return cfg_; }

  Standardizer input;
  /// Vertex coordinates are divided by this before entering the network.
  double vertex_scale = 1.0;

 private:
  ContactHeadConfig cfg_;
  Mlp encoder_;
  Mlp local_;
  Mlp out_;
};

struct ContactResult {
  std::array<double, 8> weights{};
  Vec3 contact = Vec3::Zero();
};

ContactResult forward_contact(const ContactHead& head, const Eigen::VectorXd& pair_feature,
                              const std::array<Vec3, 8>& vertices);

/// Plain MLP regressor / classifier used for relation scores and the
/// position baselines.
struct MlpHeadConfig {
  int input_dim = 0;
  std::vector<int> hidden = {64, 64};
  int output_dim = 1;
  Activation activation = Activation::kRelu;
  bool zero_last = false;
};

class MlpHead {
 public:
  MlpHead() = default;
  MlpHead(const MlpHeadConfig& cfg, std::uint64_t seed);

  Tensor forward(const Tensor& features) const;
  Matrix predict(const Matrix& features) const;
  std::vector<Tensor> parameters() const;
  const MlpHeadConfig& config() const { return cfg_; }

  Standardizer input;

 private:
  MlpHeadConfig cfg_;
  Mlp mlp_;
};

/// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets.
Tensor bce_with_logits(const Tensor& logits, const Matrix& targets);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay = 0.9;    // multiplicative lr decay ...
  int decay_every = 2;   // ... applied every this many epochs
};

struct AdamState {
  long long step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);

  double learning_rate(int epoch) const;
  /// One update using the gradients currently held by the parameters.
  void step(int epoch);
  void zero_grad();

  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  AdamState state_;
};

struct TrainConfig {
  AdamConfig adam;
  int epochs = 20;
  std::size_t batch = 64;
  std::uint64_t seed = 0;
};

/// Builds the loss of a minibatch given sample indices.
using BatchLoss = std::function<Tensor(std::span<const std::size_t>)>;

struct TrainResult {
  std::vector<double> epoch_loss;  // size-weighted mean minibatch loss per epoch
};

/// Minibatch Adam over `dataset_size` samples. Epoch e shuffles with a
/// stream derived from (seed, e), so a run resumed at `start_epoch` with the
/// optimizer state restored continues exactly. Throws TrainingDiverged on a
/// non-finite loss.
TrainResult train(Adam& optimizer, std::size_t dataset_size, const BatchLoss& loss,
                  const TrainConfig& cfg, int start_epoch = 0,
                  const std::function<void(int, double)>& on_epoch = {});

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  std::size_t worst_param = 0;
  Eigen::Index worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool passed = true;
  /// max over parameter tensors of ‖a − n‖ / max(‖a‖, ‖n‖, floor); less
  /// sensitive than the per-entry error to truncation on tiny entries.
  double max_tensor_rel_error = 0.0;
};

/// Compares backward() against central differences. Relative error per
/// entry is |a − n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, const std::vector<Tensor>& params,
                           double h = 1e-5, double tol = 1e-4, double floor = 1e-6,
                           const std::function<std::vector<Matrix>()>& analytic_override = {});

/// Flat copy of parameter values, used by checkpoints and tests.
std::vector<Matrix> snapshot(const std::vector<Tensor>& params);
void restore(const std::vector<Tensor>& params, const std::vector<Matrix>& values);

}  // namespace structkit::nn
