#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "structkit/assembly.hpp"
#include "structkit/evaluation.hpp"
#include "structkit/io.hpp"
#include "structkit/nets.hpp"
#include "structkit/relations.hpp"
#include "structkit/synth.hpp"

namespace structkit {

// ---------------------------------------------------------------------------
// Configuration

struct HeadSettings {
  nn::AdamConfig adam;
  int epochs = 20;
  std::size_t batch = 64;
  std::vector<int> hidden = {64, 64};
  nn::Activation activation = nn::Activation::kRelu;
};

struct ExperimentConfig {
  DatasetConfig data;
  std::vector<std::string> train_archetypes = {"chair"};
  std::vector<std::string> test_archetypes = {"table", "cabinet", "bed"};
  LossConfig loss;
  nn::RotationLossKind rotation_loss = nn::RotationLossKind::kMoE;
  int experts = 4;
  HeadSettings orientation = default_orientation();
  HeadSettings size = default_size();
  HeadSettings contact;
  HeadSettings relation;
  HeadSettings position;
  RelationThresholds thresholds;
  std::size_t eval_points = 256;
  std::size_t eval_per_box = 1024;
  std::uint64_t seed = 0;
  std::string output_dir = "runs";

  static HeadSettings default_orientation() {
    HeadSettings h;
    h.adam.decay = 0.7;
    h.hidden = {128, 128};
    return h;
  }
  // ReLU units behind the group max-pool die easily and collapse the head.
  static HeadSettings default_size() {
    HeadSettings h;
    h.activation = nn::Activation::kTanh;
    return h;
  }
};

Json experiment_config_to_json(const ExperimentConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig experiment_config_from_json(const Json& j, const std::string& where = "config");
std::string experiment_config_hash(const ExperimentConfig& c);

// ---------------------------------------------------------------------------
// Sample selection and per-head training data

/// Indices of samples whose shape is in one of `splits` and `archetypes`
/// (an empty list accepts everything).
std::vector<std::size_t> select_samples(const Dataset& ds, std::span<const std::string> splits,
                                        std::span<const std::string> archetypes);

struct OrientationData {
  nn::Matrix features;  // one row per part
  std::vector<Mat3> labels;
  std::vector<RotationEquivalenceSet> sets;
};
OrientationData orientation_data(const Dataset& ds, std::span<const std::size_t> samples, EquivalenceMode mode);

struct SizeGroup {
  nn::Matrix members;  // member features, rows in ascending part index
  std::array<Vec3, 3> axes;
  Vec3 target = Vec3::Zero();
  std::size_t weight = 1;  // parts the prediction is scored on
  std::size_t occluded = 0;
};
/// GT symmetry groups (min_members or more). With `unary` every member
/// becomes its own single-member group with its own axes.
std::vector<SizeGroup> size_data(const Dataset& ds, std::span<const std::size_t> samples, bool unary,
                                 std::size_t min_members = 1);

struct EdgeSample {
  Eigen::VectorXd pair_forward;   // pair_feature(parent, child)
  Eigen::VectorXd pair_backward;  // pair_feature(child, parent)
  OrientedBox parent;
  OrientedBox child;
  Vec3 offset = Vec3::Zero();  // child centre minus parent centre
};
/// Tree edges of the GT part tree of every sample, GT boxes.
std::vector<EdgeSample> edge_data(const Dataset& ds, std::span<const std::size_t> samples);

/// Input of the centre-offset baseline: the ordered pair feature followed
/// by the 6 entries of R diag(s²) Rᵀ of each box.
Eigen::VectorXd offset_input(const EdgeSample& e);
inline constexpr int kOffsetInputDim = kPairFeatureDim + 12;

struct RelationData {
  nn::Matrix features;  // symmetric pair features
  nn::Matrix targets;   // columns: symmetry, adjacency
};
RelationData relation_data(const Dataset& ds, std::span<const std::size_t> samples);

struct PositionData {
  nn::Matrix features;  // part features
  std::vector<Vec3> centers;
};
PositionData position_data(const Dataset& ds, std::span<const std::size_t> samples);

/// The sample re-observed after translating its object by `shift` (camera
/// frame) with the same camera and noise stream.
ViewSample translated_view(const Dataset& ds, std::size_t sample, const Vec3& shift);

// ---------------------------------------------------------------------------
// Heads and training

enum class HeadKind { kOrientation, kSize, kContact, kRelation, kAbsPosition, kOffset };
std::string to_string(HeadKind k);
HeadKind head_kind_from_string(const std::string& s);  // UsageError on unknown names
const std::vector<HeadKind>& all_head_kinds();

/// Any of the trainable heads, addressed through one interface.
struct AnyHead {
  HeadKind kind = HeadKind::kOrientation;
  nn::OrientationHead orientation;
  nn::SizeHead size;
  nn::ContactHead contact;
  nn::MlpHead mlp;  // relation, absolute position and offset heads

  std::vector<nn::Tensor> parameters() const;
  nn::Standardizer& standardizer();
  Json config_json() const;
};

AnyHead make_head(HeadKind kind, const ExperimentConfig& cfg, std::uint64_t seed);
AnyHead head_from_checkpoint(const Checkpoint& c);

/// Trains a head on the training split of the configured train archetypes,
/// continuing from `resume` when given. Epoch counts are totals.
Checkpoint train_head(const Dataset& ds, const ExperimentConfig& cfg, HeadKind kind,
                      const std::optional<Checkpoint>& resume = std::nullopt,
                      const std::function<void(int, double)>& on_epoch = {});

nn::TrainConfig train_config(const HeadSettings& h, std::uint64_t seed);

nn::TrainResult train_orientation(nn::OrientationHead& head, const OrientationData& data, nn::RotationLossKind kind,
                                  const LossConfig& loss, const nn::TrainConfig& tc, nn::Adam& opt,
                                  int start_epoch = 0, const std::function<void(int, double)>& on_epoch = {});
nn::TrainResult train_size(nn::SizeHead& head, std::span<const SizeGroup> data, const nn::TrainConfig& tc,
                           nn::Adam& opt, int start_epoch = 0, const std::function<void(int, double)>& on_epoch = {});
nn::TrainResult train_contact(nn::ContactHead& head, std::span<const EdgeSample> data, const nn::TrainConfig& tc,
                              nn::Adam& opt, int start_epoch = 0,
                              const std::function<void(int, double)>& on_epoch = {});
/// Squared error for regression heads, BCE for the relation head.
nn::TrainResult train_mlp(nn::MlpHead& head, const nn::Matrix& x, const nn::Matrix& y, bool classification,
                          const nn::TrainConfig& tc, nn::Adam& opt, int start_epoch = 0,
                          const std::function<void(int, double)>& on_epoch = {});

/// Batch losses, exposed for gradient checking.
nn::Tensor size_batch_loss(const nn::SizeHead& head, std::span<const SizeGroup> data,
                           std::span<const std::size_t> idx);
nn::Tensor contact_batch_loss(const nn::ContactHead& head, std::span<const EdgeSample> data,
                              std::span<const std::size_t> idx);

/// Input standardizers fitted on training data.
void fit_size_standardizer(nn::SizeHead& head, std::span<const SizeGroup> data);
void fit_contact_standardizer(nn::ContactHead& head, std::span<const EdgeSample> data);

// ---------------------------------------------------------------------------
// Inference helpers

/// Rotation of the most probable expert.
Mat3 predict_rotation(const nn::OrientationHead& head, const Eigen::VectorXd& feature);
double mean_geodesic_error(const nn::OrientationHead& head, const OrientationData& data);
/// Mean L1 size error per scored part.
double mean_size_error(const nn::SizeHead& head, std::span<const SizeGroup> data);
/// Relative position child - parent from the contact head.
Vec3 predict_offset(const nn::ContactHead& head, const EdgeSample& e);

// ---------------------------------------------------------------------------
// Full pipeline

struct PipelineHeads {
  nn::OrientationHead orientation;
  nn::SizeHead size;
  nn::ContactHead contact;
  nn::MlpHead relation;
};

struct PipelineTrace {
  std::vector<PartPairScore> scores;
  SymmetryGrouping groups;
  PartTree tree;
};

/// relations -> grouping -> orientation -> size -> tree -> contacts -> assembly.
std::vector<OrientedBox> run_pipeline(const PipelineHeads& heads, const ViewObservation& obs,
                                      const RelationThresholds& thr, PipelineTrace* trace = nullptr);

/// Every learned stage replaced by ground truth: GT boxes, GT edges and GT
/// contact weights, assembled through the same tree and contact equations.
std::vector<OrientedBox> run_oracle_pipeline(const PartShape& label);

enum class EvalMode { kTrained, kOracle };

MetricReport evaluate_pipeline(const Dataset& ds, std::span<const std::size_t> samples, EvalMode mode,
                               const PipelineHeads* heads, const ExperimentConfig& cfg, int jobs = 1);

// ---------------------------------------------------------------------------
// Ablations

struct AblationTable {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::pair<std::string, std::vector<double>>> rows;

  double value(const std::string& row, std::size_t column = 0) const;
  std::string format() const;
  Json to_json() const;
};

const std::vector<std::string>& ablation_names();

/// Trains every arm of `name` on `train` samples with identical seeds and
/// scores it on `test` samples.
AblationTable run_ablation(const std::string& name, const Dataset& ds, std::span<const std::size_t> train,
                           std::span<const std::size_t> test, const ExperimentConfig& cfg, std::uint64_t seed);

AblationTable rotation_loss_ablation(const Dataset& ds, std::span<const std::size_t> train,
                                     std::span<const std::size_t> test, const ExperimentConfig& cfg,
                                     std::uint64_t seed);
AblationTable group_size_ablation(const Dataset& ds, std::span<const std::size_t> train,
                                  std::span<const std::size_t> test, const ExperimentConfig& cfg, std::uint64_t seed);
/// Test views are re-observed under random global translations.
AblationTable relative_position_ablation(const Dataset& ds, std::span<const std::size_t> train,
                                         std::span<const std::size_t> test, const ExperimentConfig& cfg,
                                         std::uint64_t seed);
AblationTable contact_vs_offset_ablation(const Dataset& ds, std::span<const std::size_t> train,
                                         std::span<const std::size_t> test, const ExperimentConfig& cfg,
                                         std::uint64_t seed);
AblationTable joint_vs_sequential_ablation(const Dataset& ds, std::span<const std::size_t> train,
                                           std::span<const std::size_t> test, const ExperimentConfig& cfg,
                                           std::uint64_t seed);

/// Vertices of boxes given row-wise quaternions (n×4), edge lengths (n×3)
/// and centres (n×3), as n×24 rows in box_vertices order.
nn::Tensor box_vertices_rows(const nn::Tensor& quats, const nn::Tensor& sizes, const nn::Tensor& centers);

}  // namespace structkit
