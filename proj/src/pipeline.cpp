#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "structkit/experiment.hpp"

namespace structkit {

using nn::Matrix;

std::vector<OrientedBox> run_pipeline(const PipelineHeads& heads, const ViewObservation& obs,
                                      const RelationThresholds& thr, PipelineTrace* trace) {
  const std::size_t n = obs.parts.size();
  if (n == 0) throw std::invalid_argument("run_pipeline: no parts");

  // pairwise relations
  std::vector<PartPairScore> scores;
  Matrix pair_feats(static_cast<Eigen::Index>(n * (n - 1) / 2), kSymmetricPairFeatureDim);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      pair_feats.row(row++) = symmetric_pair_feature(obs.parts[i], obs.parts[j]).transpose();
      scores.push_back({i, j, 0.0, 0.0, ScoreSource::kLearned});
    }
  }
  if (!scores.empty()) {
    const Matrix logits = heads.relation.predict(pair_feats);
    for (std::size_t k = 0; k < scores.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      scores[k].symmetry = 1.0 / (1.0 + std::exp(-logits(r, 0)));
      scores[k].adjacency = 1.0 / (1.0 + std::exp(-logits(r, 1)));
    }
  }

  // symmetry groups, ordered by observed volume
  std::vector<double> observed_volume(n);
  for (std::size_t i = 0; i < n; ++i) observed_volume[i] = pca_obb_fit(obs.parts[i].corners).volume();
  const SymmetryGrouping groups = cluster_parts(scores, observed_volume, thr.symmetry);

  // orientation per part
  Matrix feats(static_cast<Eigen::Index>(n), kPartFeatureDim);
  for (std::size_t i = 0; i < n; ++i) feats.row(static_cast<Eigen::Index>(i)) = obs.features[i].transpose();
  std::vector<Mat3> rot(n);
  const auto preds = nn::forward_orientation(heads.orientation, feats);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = preds[i];
    const auto best = std::max_element(p.probabilities.begin(), p.probabilities.end()) - p.probabilities.begin();
    rot[i] = p.rotations[static_cast<std::size_t>(best)].matrix();
  }

  // one size per group along the reference member's axes
  std::vector<Vec3> sizes(n, Vec3::Ones());
  for (const auto& group : groups.groups) {
    const std::size_t ref = group.front();
    std::vector<std::size_t> members = group;
    std::sort(members.begin(), members.end());
    Matrix mf(static_cast<Eigen::Index>(members.size()), kPartFeatureDim);
    for (std::size_t k = 0; k < members.size(); ++k) mf.row(static_cast<Eigen::Index>(k)) = feats.row(static_cast<Eigen::Index>(members[k]));
    const std::array<Vec3, 3> axes{Vec3(rot[ref].col(0)), Vec3(rot[ref].col(1)), Vec3(rot[ref].col(2))};
    const Vec3 lengths = nn::forward_size(heads.size, mf, axes);
    for (std::size_t m : members) {
      for (int k = 0; k < 3; ++k) {
        int best = 0;
        double best_dot = -1.0;
        for (int a = 0; a < 3; ++a) {
          const double d = std::abs(rot[m].col(k).dot(axes[a]));
          if (d > best_dot) {
            best_dot = d;
            best = a;
          }
        }
        sizes[m][k] = std::max(lengths[best], kMinEdge);
      }
    }
  }

  std::vector<OrientedBox> boxes;
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 centroid = Vec3::Zero();
    for (const auto& c : obs.parts[i].corners) centroid += c / 8.0;
    boxes.emplace_back(centroid, sizes[i], matrix_to_quat(RotationMatrix::unchecked(rot[i])));
  }

  // tree over thresholded adjacency, contacts along tree edges
  std::vector<double> volume(n);
  for (std::size_t i = 0; i < n; ++i) volume[i] = boxes[i].volume();
  const auto adjacency = adjacent_pairs(scores, thr.adjacency);
  const PartTree tree = build_part_tree(adjacency, volume);
  ContactAssignment contacts;
  for (const auto& [p, c] : tree.edges()) {
    const auto wp = nn::forward_contact(heads.contact, pair_feature(obs.parts[p], obs.parts[c]),
                                        box_vertex_offsets(boxes[p]));
    const auto wc = nn::forward_contact(heads.contact, pair_feature(obs.parts[c], obs.parts[p]),
                                        box_vertex_offsets(boxes[c]));
    contacts.push_back({p, c, wp.weights, wc.weights});
  }
  PlacedShape placed = assemble(tree, boxes, contacts);
  if (trace) {
    trace->scores = std::move(scores);
    trace->groups = groups;
    trace->tree = tree;
  }
  return placed.boxes;
}

std::vector<OrientedBox> run_oracle_pipeline(const PartShape& label) {
  std::vector<double> volume;
  for (const auto& p : label.parts) volume.push_back(p.volume());
  const PartTree tree = build_part_tree(label.edges, volume);
  return assemble(tree, label.parts, ground_truth_assignment(tree, label)).boxes;
}

MetricReport evaluate_pipeline(const Dataset& ds, std::span<const std::size_t> samples, EvalMode mode,
                               const PipelineHeads* heads, const ExperimentConfig& cfg, int jobs) {
  if (mode == EvalMode::kTrained && heads == nullptr) throw std::invalid_argument("evaluate_pipeline: heads missing");
  std::vector<EvalSample> eval;
  for (std::size_t s : samples) {
    const ViewSample& v = ds.samples[s];
    EvalSample e;
    char id[32];
    std::snprintf(id, sizeof id, "_v%03zu", v.view);
    e.id = ds.shapes[v.shape_index].id + id;
    e.category = ds.shapes[v.shape_index].archetype;
    e.gt = v.label.parts;
    e.pred = mode == EvalMode::kOracle ? run_oracle_pipeline(v.label)
                                       : run_pipeline(*heads, v.observation, cfg.thresholds);
    eval.push_back(std::move(e));
  }
  EvalConfig ec;
  ec.per_box = cfg.eval_per_box;
  ec.points = cfg.eval_points;
  ec.seed = cfg.seed;
  ec.mode = cfg.loss.mode;
  ec.jobs = jobs;
  ec.config_hash = experiment_config_hash(cfg);
  return evaluate_dataset(eval, ec);
}

}  // namespace structkit
