#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "structkit/shape.hpp"

namespace structkit {

const std::vector<std::string>& known_archetypes();

/// Procedural object in a z-up world frame with all parts axis aligned.
/// Deterministic per seed; throws std::invalid_argument for an unknown
/// archetype. The result is connected and its groups, edges and contacts
/// come from the geometric oracles.
PartShape generate_shape(const std::string& archetype, std::uint64_t seed);

/// Ground-truth structure recomputed from the boxes: symmetry groups as
/// oracle equivalence classes (tol 1e-6), edges for box distance ≤ 1e-6,
/// and a contact per edge.
void annotate_structure(PartShape& shape);

/// Right-multiplies every part rotation by an independent random proper
/// signed permutation and permutes its size to match, leaving every vertex
/// set unchanged. Contact weights are recomputed for the new vertex order.
PartShape randomize_gt_rotation_labels(const PartShape& shape, std::uint64_t seed);

/// OpenCV-style camera: x right, y down, z forward.
struct CameraPose {
  Vec3 position = Vec3(0, -3, 1);
  Vec3 look_at = Vec3::Zero();
  Vec3 up = Vec3::UnitZ();
  double vfov_deg = 50.0;

  /// Rows are the camera axes in world coordinates. Throws GeometryError
  /// when the view direction is parallel to `up`.
  Mat3 world_to_camera() const;
  double focal() const;  // 1 / tan(vfov / 2), normalized image units
};

struct CameraConfig {
  double min_elevation_deg = 10.0;
  double max_elevation_deg = 45.0;
  double min_distance = 1.3;  // multiples of the distance that fits the object in view
  double max_distance = 1.8;
  double roll_sd_deg = 0.0;
  double vfov_deg = 50.0;
};

/// Random view on the upper hemisphere around the object's bounding sphere.
CameraPose sample_camera(const PartShape& shape, const CameraConfig& cfg, std::uint64_t seed);

struct NoiseConfig {
  double pixel_sd = 0.003;          // normalized image units
  double depth_sd = 0.003;          // relative, per corner
  double depth_scale_sd = 0.05;     // log-normal per-view depth scale
  double part_scale_sd = 0.01;      // log-normal per-part jitter of that scale
  double occluded_noise_mult = 3.0;
  double occlusion_threshold = 0.5; // visible fraction below which a part is occluded
  std::size_t visibility_samples = 96;
  bool occlusion = true;
};

/// What a camera sees of one part.
struct PartObservation {
  std::array<Vec3, 8> corners{};  // lifted (back-projected) noisy corners, camera frame
  double visibility = 1.0;
  bool occluded = false;
};

inline constexpr int kPartFeatureDim = 46;
inline constexpr int kPairFeatureDim = 25;
inline constexpr int kSymmetricPairFeatureDim = 26;

/// Fixed-length descriptor of one observed part:
///   [0] occluded flag, [1,2] projected centroid, [3,5] 2D second moments,
///   [6] projected hull area, [7,9] depth mean/min/max,
///   [10,15] corner covariance M / trace(M), [16,30] fourth moments of the
///   whitened corners, [31,33] log half-extents (sorted), [34,36] view
///   direction, [37,39] lifted centroid, [40,45] M.
Eigen::VectorXd part_feature(const PartObservation& obs, double focal);

/// Descriptor of part i as seen from part j's side (order matters):
///   [0,2] centroid offset, [3] its length, [4,9] M_i, [10,15] M_j,
///   [16,18] half-extents of i, [19,21] of j, [22] observed gap,
///   [23,24] occluded flags.
Eigen::VectorXd pair_feature(const PartObservation& a, const PartObservation& b);

/// Order-invariant pair descriptor used by the relation classifiers.
Eigen::VectorXd symmetric_pair_feature(const PartObservation& a, const PartObservation& b);

/// Fraction of a part's camera-facing surface samples that are not hidden
/// by another part.
double visible_fraction(const std::vector<OrientedBox>& camera_boxes, std::size_t part, std::size_t samples,
                        std::uint64_t seed);

/// Boxes of a world-frame shape expressed in the camera frame.
std::vector<OrientedBox> to_camera_frame(const std::vector<OrientedBox>& world, const CameraPose& cam);

struct ViewObservation {
  CameraPose camera;
  std::vector<PartObservation> parts;
  std::vector<Eigen::VectorXd> features;  // part_feature of every part
};

ViewObservation extract_view_features(const PartShape& shape, const CameraPose& camera, const NoiseConfig& noise,
                                      std::uint64_t seed);

/// One training sample: a view plus ground truth in the camera frame with
/// randomized rotation labels.
struct ViewSample {
  std::size_t shape_index = 0;
  std::size_t view = 0;
  ViewObservation observation;
  PartShape label;  // camera-frame boxes, relabeled; structure shared with the shape
};

struct DatasetConfig {
  std::size_t shapes = 100;
  std::vector<std::string> archetypes = known_archetypes();
  std::size_t views = 6;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  CameraConfig camera;
  NoiseConfig noise;
};

struct Dataset {
  DatasetConfig config;
  std::string config_hash;
  std::vector<PartShape> shapes;     // world frame
  std::vector<std::string> split;    // "train" / "val" / "test" per shape
  std::vector<ViewSample> samples;   // shape-major, view-minor
};

/// Shapes cycle through the archetype list; shape i uses derive_seed(seed, i).
/// The split is by shape, never by view.
Dataset make_dataset(const DatasetConfig& cfg, int jobs = 1);

/// View sample of an existing shape.
ViewSample make_view_sample(const PartShape& shape, std::size_t shape_index, std::size_t view,
                            const CameraConfig& camera, const NoiseConfig& noise, std::uint64_t shape_seed);

}  // namespace structkit
