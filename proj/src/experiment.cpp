#include "structkit/experiment.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "structkit/errors.hpp"
#include "structkit/rng.hpp"

namespace structkit {

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) { throw ParseError(where + ": " + what); }

std::string activation_name(nn::Activation a) { return a == nn::Activation::kTanh ? "tanh" : "relu"; }

nn::Activation activation_from(const std::string& s, const std::string& where) {
  if (s == "relu") return nn::Activation::kRelu;
  if (s == "tanh") return nn::Activation::kTanh;
  bad(where, "unknown activation '" + s + "'");
}

void reject_unknown(const Json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) bad(where, "expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* x) { return k == x; })) {
      bad(where, "unknown field '" + k + "'");
    }
  }
}

template <typename T>
void read_into(const Json& j, const char* key, const std::string& where, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    bad(where + "." + key, "wrong type");
  }
}

Json head_settings_json(const HeadSettings& h) {
  return Json{{"lr", h.adam.lr},       {"beta1", h.adam.beta1},   {"beta2", h.adam.beta2},
              {"eps", h.adam.eps},     {"decay", h.adam.decay},   {"decay_every", h.adam.decay_every},
              {"epochs", h.epochs},    {"batch", h.batch},        {"hidden", h.hidden},
              {"activation", activation_name(h.activation)}};
}

HeadSettings head_settings_from(const Json& j, HeadSettings h, const std::string& where) {
  reject_unknown(j, {"lr", "beta1", "beta2", "eps", "decay", "decay_every", "epochs", "batch", "hidden", "activation"},
                 where);
  read_into(j, "lr", where, h.adam.lr);
  read_into(j, "beta1", where, h.adam.beta1);
  read_into(j, "beta2", where, h.adam.beta2);
  read_into(j, "eps", where, h.adam.eps);
  read_into(j, "decay", where, h.adam.decay);
  read_into(j, "decay_every", where, h.adam.decay_every);
  read_into(j, "epochs", where, h.epochs);
  read_into(j, "batch", where, h.batch);
  read_into(j, "hidden", where, h.hidden);
  if (j.contains("activation")) {
    std::string a;
    read_into(j, "activation", where, a);
    h.activation = activation_from(a, where + ".activation");
  }
  if (h.epochs < 0) bad(where + ".epochs", "must be nonnegative");
  if (h.batch == 0) bad(where + ".batch", "must be positive");
  if (!(h.adam.lr >= 0.0)) bad(where + ".lr", "must be nonnegative");
  if (h.adam.decay_every <= 0) bad(where + ".decay_every", "must be positive");
  for (int w : h.hidden) {
    if (w <= 0) bad(where + ".hidden", "widths must be positive");
  }
  if (h.hidden.empty()) bad(where + ".hidden", "needs at least one layer");
  return h;
}

Json config_body(const ExperimentConfig& c) {
  return Json{{"data", dataset_config_to_json(c.data)},
              {"train_archetypes", c.train_archetypes},
              {"test_archetypes", c.test_archetypes},
              {"loss", {{"lambda", c.loss.lambda}, {"laplace_b", c.loss.laplace_b}, {"equivalence", to_string(c.loss.mode)}}},
              {"rotation_loss", nn::to_string(c.rotation_loss)},
              {"experts", c.experts},
              {"heads",
               {{"orientation", head_settings_json(c.orientation)},
                {"size", head_settings_json(c.size)},
                {"contact", head_settings_json(c.contact)},
                {"relation", head_settings_json(c.relation)},
                {"position", head_settings_json(c.position)}}},
              {"thresholds", {{"adjacency", c.thresholds.adjacency}, {"symmetry", c.thresholds.symmetry}}},
              {"eval", {{"points", c.eval_points}, {"per_box", c.eval_per_box}}},
              {"seed", c.seed}};
}

}  // namespace

Json experiment_config_to_json(const ExperimentConfig& c) {
  Json j = config_body(c);
  j["output_dir"] = c.output_dir;
  return j;
}

ExperimentConfig experiment_config_from_json(const Json& j, const std::string& where) {
  ExperimentConfig c;
  reject_unknown(j,
                 {"data", "train_archetypes", "test_archetypes", "loss", "rotation_loss", "experts", "heads",
                  "thresholds", "eval", "seed", "output_dir"},
                 where);
  if (j.contains("data")) c.data = dataset_config_from_json(j["data"], where + ".data");
  read_into(j, "train_archetypes", where, c.train_archetypes);
  read_into(j, "test_archetypes", where, c.test_archetypes);
  if (j.contains("loss")) {
    const Json& l = j["loss"];
    const std::string w = where + ".loss";
    reject_unknown(l, {"lambda", "laplace_b", "equivalence"}, w);
    read_into(l, "lambda", w, c.loss.lambda);
    read_into(l, "laplace_b", w, c.loss.laplace_b);
    if (l.contains("equivalence")) {
      std::string m;
      read_into(l, "equivalence", w, m);
      c.loss.mode = equivalence_mode_from_string(m);
    }
    try {
      c.loss.validate();
    } catch (const std::invalid_argument& e) {
      bad(w, e.what());
    }
  }
  if (j.contains("rotation_loss")) {
    std::string k;
    read_into(j, "rotation_loss", where, k);
    try {
      c.rotation_loss = nn::rotation_loss_from_string(k);
    } catch (const std::invalid_argument& e) {
      bad(where + ".rotation_loss", e.what());
    }
  }
  read_into(j, "experts", where, c.experts);
  if (c.experts < 1) bad(where + ".experts", "must be at least 1");
  if (j.contains("heads")) {
    const Json& h = j["heads"];
    const std::string w = where + ".heads";
    reject_unknown(h, {"orientation", "size", "contact", "relation", "position"}, w);
    if (h.contains("orientation")) c.orientation = head_settings_from(h["orientation"], c.orientation, w + ".orientation");
    if (h.contains("size")) c.size = head_settings_from(h["size"], c.size, w + ".size");
    if (h.contains("contact")) c.contact = head_settings_from(h["contact"], c.contact, w + ".contact");
    if (h.contains("relation")) c.relation = head_settings_from(h["relation"], c.relation, w + ".relation");
    if (h.contains("position")) c.position = head_settings_from(h["position"], c.position, w + ".position");
  }
  if (j.contains("thresholds")) {
    const Json& t = j["thresholds"];
    const std::string w = where + ".thresholds";
    reject_unknown(t, {"adjacency", "symmetry"}, w);
    read_into(t, "adjacency", w, c.thresholds.adjacency);
    read_into(t, "symmetry", w, c.thresholds.symmetry);
  }
  if (j.contains("eval")) {
    const Json& e = j["eval"];
    const std::string w = where + ".eval";
    reject_unknown(e, {"points", "per_box"}, w);
    read_into(e, "points", w, c.eval_points);
    read_into(e, "per_box", w, c.eval_per_box);
  }
  read_into(j, "seed", where, c.seed);
  read_into(j, "output_dir", where, c.output_dir);
  return c;
}

std::string experiment_config_hash(const ExperimentConfig& c) { return config_hash(config_body(c)); }

// ---------------------------------------------------------------------------

std::vector<std::size_t> select_samples(const Dataset& ds, std::span<const std::string> splits,
                                        std::span<const std::string> archetypes) {
  const auto accepts = [](std::span<const std::string> list, const std::string& v) {
    return list.empty() || std::find(list.begin(), list.end(), v) != list.end();
  };
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < ds.samples.size(); ++s) {
    const std::size_t shape = ds.samples[s].shape_index;
    if (accepts(splits, ds.split[shape]) && accepts(archetypes, ds.shapes[shape].archetype)) out.push_back(s);
  }
  return out;
}

OrientationData orientation_data(const Dataset& ds, std::span<const std::size_t> samples, EquivalenceMode mode) {
  OrientationData d;
  std::size_t rows = 0;
  for (std::size_t s : samples) rows += ds.samples[s].observation.features.size();
  d.features.resize(static_cast<Eigen::Index>(rows), kPartFeatureDim);
  Eigen::Index r = 0;
  for (std::size_t s : samples) {
    const ViewSample& v = ds.samples[s];
    for (std::size_t i = 0; i < v.label.parts.size(); ++i) {
      d.features.row(r++) = v.observation.features[i].transpose();
      const RotationMatrix rot = v.label.parts[i].rotation_matrix();
      d.labels.push_back(rot.matrix());
      d.sets.push_back(equivalence_set(rot, mode));
    }
  }
  return d;
}

namespace {

std::array<Vec3, 3> axes_of(const OrientedBox& b) {
  const Mat3 r = b.rotation_matrix().matrix();
  return {Vec3(r.col(0)), Vec3(r.col(1)), Vec3(r.col(2))};
}

}  // namespace

std::vector<SizeGroup> size_data(const Dataset& ds, std::span<const std::size_t> samples, bool unary,
                                 std::size_t min_members) {
  std::vector<SizeGroup> out;
  for (std::size_t s : samples) {
    const ViewSample& v = ds.samples[s];
    for (auto members : v.label.symmetry_groups) {
      if (members.size() < min_members) continue;
      std::sort(members.begin(), members.end());
      if (unary) {
        for (std::size_t m : members) {
          SizeGroup g;
          g.members = v.observation.features[m].transpose();
          g.axes = axes_of(v.label.parts[m]);
          g.target = v.label.parts[m].size;
          g.occluded = v.observation.parts[m].occluded ? 1 : 0;
          out.push_back(std::move(g));
        }
      } else {
        SizeGroup g;
        g.members.resize(static_cast<Eigen::Index>(members.size()), kPartFeatureDim);
        for (std::size_t k = 0; k < members.size(); ++k) {
          g.members.row(static_cast<Eigen::Index>(k)) = v.observation.features[members[k]].transpose();
          g.occluded += v.observation.parts[members[k]].occluded ? 1 : 0;
        }
        g.axes = axes_of(v.label.parts[members.front()]);
        g.target = v.label.parts[members.front()].size;
        g.weight = members.size();
        out.push_back(std::move(g));
      }
    }
  }
  return out;
}

std::vector<EdgeSample> edge_data(const Dataset& ds, std::span<const std::size_t> samples) {
  std::vector<EdgeSample> out;
  for (std::size_t s : samples) {
    const ViewSample& v = ds.samples[s];
    std::vector<double> volumes;
    for (const auto& p : v.label.parts) volumes.push_back(p.volume());
    const PartTree tree = build_part_tree(v.label.edges, volumes);
    for (const auto& [p, c] : tree.edges()) {
      EdgeSample e;
      e.pair_forward = pair_feature(v.observation.parts[p], v.observation.parts[c]);
      e.pair_backward = pair_feature(v.observation.parts[c], v.observation.parts[p]);
      e.parent = v.label.parts[p];
      e.child = v.label.parts[c];
      e.offset = e.child.center - e.parent.center;
      out.push_back(std::move(e));
    }
  }
  return out;
}

Eigen::VectorXd offset_input(const EdgeSample& e) {
  const auto shape6 = [](const OrientedBox& b) {
    const Mat3 r = b.rotation_matrix().matrix();
    const Mat3 m = r * b.size.cwiseAbs2().asDiagonal() * r.transpose();
    Eigen::Matrix<double, 6, 1> v;
    v << m(0, 0), m(1, 1), m(2, 2), m(0, 1), m(0, 2), m(1, 2);
    return v;
  };
  Eigen::VectorXd x(kOffsetInputDim);
  x << e.pair_forward, shape6(e.parent), shape6(e.child);
  return x;
}

RelationData relation_data(const Dataset& ds, std::span<const std::size_t> samples) {
  std::vector<Eigen::VectorXd> feats;
  std::vector<std::array<double, 2>> targets;
  for (std::size_t s : samples) {
    const ViewSample& v = ds.samples[s];
    const std::size_t n = v.label.parts.size();
    std::vector<std::size_t> group(n, 0);
    for (std::size_t g = 0; g < v.label.symmetry_groups.size(); ++g) {
      for (std::size_t m : v.label.symmetry_groups[g]) group[m] = g;
    }
    const std::set<Edge> edges(v.label.edges.begin(), v.label.edges.end());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        feats.push_back(symmetric_pair_feature(v.observation.parts[i], v.observation.parts[j]));
        targets.push_back({group[i] == group[j] ? 1.0 : 0.0, edges.count({i, j}) ? 1.0 : 0.0});
      }
    }
  }
  RelationData d;
  d.features.resize(static_cast<Eigen::Index>(feats.size()), kSymmetricPairFeatureDim);
  d.targets.resize(static_cast<Eigen::Index>(feats.size()), 2);
  for (std::size_t k = 0; k < feats.size(); ++k) {
    d.features.row(static_cast<Eigen::Index>(k)) = feats[k].transpose();
    d.targets(static_cast<Eigen::Index>(k), 0) = targets[k][0];
    d.targets(static_cast<Eigen::Index>(k), 1) = targets[k][1];
  }
  return d;
}

PositionData position_data(const Dataset& ds, std::span<const std::size_t> samples) {
  PositionData d;
  std::size_t rows = 0;
  for (std::size_t s : samples) rows += ds.samples[s].label.parts.size();
  d.features.resize(static_cast<Eigen::Index>(rows), kPartFeatureDim);
  Eigen::Index r = 0;
  for (std::size_t s : samples) {
    const ViewSample& v = ds.samples[s];
    for (std::size_t i = 0; i < v.label.parts.size(); ++i) {
      d.features.row(r++) = v.observation.features[i].transpose();
      d.centers.push_back(v.label.parts[i].center);
    }
  }
  return d;
}

ViewSample translated_view(const Dataset& ds, std::size_t sample, const Vec3& shift) {
  const ViewSample& v = ds.samples.at(sample);
  const CameraPose& cam = v.observation.camera;
  const Vec3 world_shift = cam.world_to_camera().transpose() * shift;
  PartShape moved = ds.shapes.at(v.shape_index);
  for (auto& p : moved.parts) p.center += world_shift;
  for (auto& c : moved.contacts) c.point += world_shift;
  const std::uint64_t shape_seed = derive_seed(ds.config.seed, v.shape_index);
  const std::uint64_t view_seed = derive_seed(shape_seed, 1 + v.view);
  ViewSample out = v;
  out.observation = extract_view_features(moved, cam, ds.config.noise, derive_seed(view_seed, 2));
  for (auto& p : out.label.parts) p.center += shift;
  for (auto& c : out.label.contacts) c.point += shift;
  return out;
}

}  // namespace structkit
