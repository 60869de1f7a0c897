#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "structkit/errors.hpp"
#include "structkit/experiment.hpp"
#include "structkit/rng.hpp"

namespace structkit {

using nn::Matrix;
using nn::Tensor;

std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::kOrientation: return "orientation";
    case HeadKind::kSize: return "size";
    case HeadKind::kContact: return "contact";
    case HeadKind::kRelation: return "relation";
    case HeadKind::kAbsPosition: return "abs-position";
    case HeadKind::kOffset: return "offset";
  }
  return "?";
}

const std::vector<HeadKind>& all_head_kinds() {
  static const std::vector<HeadKind> kinds{HeadKind::kOrientation, HeadKind::kSize,        HeadKind::kContact,
                                           HeadKind::kRelation,    HeadKind::kAbsPosition, HeadKind::kOffset};
  return kinds;
}

HeadKind head_kind_from_string(const std::string& s) {
  for (HeadKind k : all_head_kinds()) {
    if (to_string(k) == s) return k;
  }
  throw UsageError("unknown head '" + s + "' (orientation, size, contact, relation, abs-position, offset)");
}

// ---------------------------------------------------------------------------

std::vector<Tensor> AnyHead::parameters() const {
  switch (kind) {
    case HeadKind::kOrientation: return orientation.parameters();
    case HeadKind::kSize: return size.parameters();
    case HeadKind::kContact: return contact.parameters();
    default: return mlp.parameters();
  }
}

nn::Standardizer& AnyHead::standardizer() {
  switch (kind) {
    case HeadKind::kOrientation: return orientation.input;
    case HeadKind::kSize: return size.input;
    case HeadKind::kContact: return contact.input;
    default: return mlp.input;
  }
}

namespace {

std::string act(nn::Activation a) { return a == nn::Activation::kTanh ? "tanh" : "relu"; }
nn::Activation act_from(const std::string& s) { return s == "tanh" ? nn::Activation::kTanh : nn::Activation::kRelu; }

const HeadSettings& settings_for(HeadKind k, const ExperimentConfig& cfg) {
  switch (k) {
    case HeadKind::kOrientation: return cfg.orientation;
    case HeadKind::kSize: return cfg.size;
    case HeadKind::kContact:
    case HeadKind::kOffset: return cfg.contact;
    case HeadKind::kRelation: return cfg.relation;
    case HeadKind::kAbsPosition: return cfg.position;
  }
  return cfg.position;
}

Json settings_json(const HeadSettings& h) {
  return Json{{"lr", h.adam.lr},         {"beta1", h.adam.beta1}, {"beta2", h.adam.beta2},
              {"eps", h.adam.eps},       {"decay", h.adam.decay}, {"decay_every", h.adam.decay_every},
              {"epochs", h.epochs},      {"batch", h.batch}};
}

Json mlp_config_json(const nn::MlpHeadConfig& c) {
  return Json{{"input_dim", c.input_dim}, {"hidden", c.hidden}, {"output_dim", c.output_dim},
              {"activation", act(c.activation)}};
}

}  // namespace

Json AnyHead::config_json() const {
  switch (kind) {
    case HeadKind::kOrientation: {
      const auto& c = orientation.config();
      return Json{{"input_dim", c.input_dim}, {"trunk", c.trunk}, {"branch_hidden", c.branch_hidden},
                  {"experts", c.experts},     {"activation", act(c.activation)}};
    }
    case HeadKind::kSize: {
      const auto& c = size.config();
      return Json{{"input_dim", c.input_dim}, {"encoder", c.encoder}, {"axis_local", c.axis_local},
                  {"axis_out", c.axis_out},   {"activation", act(c.activation)}};
    }
    case HeadKind::kContact: {
      const auto& c = contact.config();
      return Json{{"input_dim", c.input_dim}, {"encoder", c.encoder}, {"vertex_local", c.vertex_local},
                  {"vertex_out", c.vertex_out}, {"activation", act(c.activation)}};
    }
    default: return mlp_config_json(mlp.config());
  }
}

AnyHead make_head(HeadKind kind, const ExperimentConfig& cfg, std::uint64_t seed) {
  const HeadSettings& s = settings_for(kind, cfg);
  const int last = s.hidden.back();
  AnyHead h;
  h.kind = kind;
  switch (kind) {
    case HeadKind::kOrientation: {
      nn::OrientationHeadConfig c;
      c.input_dim = kPartFeatureDim;
      c.trunk = s.hidden;
      c.branch_hidden = last / 2 > 0 ? last / 2 : 1;
      c.experts = cfg.rotation_loss == nn::RotationLossKind::kMoE ? cfg.experts : 1;
      c.activation = s.activation;
      h.orientation = nn::OrientationHead(c, seed);
      break;
    }
    case HeadKind::kSize: {
      nn::SizeHeadConfig c;
      c.input_dim = kPartFeatureDim;
      c.encoder = s.hidden;
      c.axis_local = {last};
      c.axis_out = {last};
      c.activation = s.activation;
      h.size = nn::SizeHead(c, seed);
      break;
    }
    case HeadKind::kContact: {
      nn::ContactHeadConfig c;
      c.input_dim = kPairFeatureDim;
      c.encoder = s.hidden;
      c.vertex_local = {last};
      c.vertex_out = {last};
      c.activation = s.activation;
      h.contact = nn::ContactHead(c, seed);
      break;
    }
    case HeadKind::kRelation:
    case HeadKind::kAbsPosition:
    case HeadKind::kOffset: {
      nn::MlpHeadConfig c;
      c.input_dim = kind == HeadKind::kRelation      ? kSymmetricPairFeatureDim
                    : kind == HeadKind::kAbsPosition ? kPartFeatureDim
                                                     : kOffsetInputDim;
      c.hidden = s.hidden;
      c.output_dim = kind == HeadKind::kRelation ? 2 : 3;
      c.activation = s.activation;
      h.mlp = nn::MlpHead(c, seed);
      break;
    }
  }
  return h;
}

AnyHead head_from_checkpoint(const Checkpoint& ck) {
  const std::string where = "checkpoint(" + ck.head + ").head_config";
  AnyHead h;
  h.kind = head_kind_from_string(ck.head);
  const Json& j = ck.head_config;
  try {
    switch (h.kind) {
      case HeadKind::kOrientation: {
        nn::OrientationHeadConfig c;
        c.input_dim = j.at("input_dim").get<int>();
        c.trunk = j.at("trunk").get<std::vector<int>>();
        c.branch_hidden = j.at("branch_hidden").get<int>();
        c.experts = j.at("experts").get<int>();
        c.activation = act_from(j.at("activation").get<std::string>());
        h.orientation = nn::OrientationHead(c, 0);
        break;
      }
      case HeadKind::kSize: {
        nn::SizeHeadConfig c;
        c.input_dim = j.at("input_dim").get<int>();
        c.encoder = j.at("encoder").get<std::vector<int>>();
        c.axis_local = j.at("axis_local").get<std::vector<int>>();
        c.axis_out = j.at("axis_out").get<std::vector<int>>();
        c.activation = act_from(j.at("activation").get<std::string>());
        h.size = nn::SizeHead(c, 0);
        break;
      }
      case HeadKind::kContact: {
        nn::ContactHeadConfig c;
        c.input_dim = j.at("input_dim").get<int>();
        c.encoder = j.at("encoder").get<std::vector<int>>();
        c.vertex_local = j.at("vertex_local").get<std::vector<int>>();
        c.vertex_out = j.at("vertex_out").get<std::vector<int>>();
        c.activation = act_from(j.at("activation").get<std::string>());
        h.contact = nn::ContactHead(c, 0);
        h.contact.vertex_scale = ck.vertex_scale;
        break;
      }
      default: {
        nn::MlpHeadConfig c;
        c.input_dim = j.at("input_dim").get<int>();
        c.hidden = j.at("hidden").get<std::vector<int>>();
        c.output_dim = j.at("output_dim").get<int>();
        c.activation = act_from(j.at("activation").get<std::string>());
        h.mlp = nn::MlpHead(c, 0);
        break;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  const auto params = h.parameters();
  if (params.size() != ck.params.size()) throw ParseError(where + ": parameter count does not match the head");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].rows() != ck.params[i].rows() || params[i].cols() != ck.params[i].cols()) {
      throw ParseError("checkpoint(" + ck.head + ").params[" + std::to_string(i) + "]: shape mismatch");
    }
  }
  nn::restore(params, ck.params);
  h.standardizer() = ck.standardizer;
  return h;
}

nn::TrainConfig train_config(const HeadSettings& h, std::uint64_t seed) {
  nn::TrainConfig tc;
  tc.adam = h.adam;
  tc.epochs = h.epochs;
  tc.batch = h.batch;
  tc.seed = seed;
  return tc;
}

// ---------------------------------------------------------------------------

namespace {

Matrix gather(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(idx[k]));
  return out;
}

Matrix vertex_block(const OrientedBox& b) {
  Matrix v(8, 3);
  const auto off = box_vertex_offsets(b);
  for (int j = 0; j < 8; ++j) v.row(j) = off[j].transpose();
  return v;
}

}  // namespace

nn::TrainResult train_orientation(nn::OrientationHead& head, const OrientationData& data, nn::RotationLossKind kind,
                                  const LossConfig& loss, const nn::TrainConfig& tc, nn::Adam& opt, int start_epoch,
                                  const std::function<void(int, double)>& on_epoch) {
  const auto batch = [&](std::span<const std::size_t> idx) {
    std::vector<Mat3> labels;
    std::vector<const RotationEquivalenceSet*> sets;
    for (std::size_t i : idx) {
      labels.push_back(data.labels[i]);
      sets.push_back(&data.sets[i]);
    }
    const auto out = head.forward(Tensor::constant(gather(data.features, idx)));
    return nn::orientation_loss(out, labels, sets, kind, loss);
  };
  return nn::train(opt, data.labels.size(), batch, tc, start_epoch, on_epoch);
}

Tensor size_batch_loss(const nn::SizeHead& head, std::span<const SizeGroup> data, std::span<const std::size_t> idx) {
  Eigen::Index rows = 0;
  for (std::size_t i : idx) rows += data[i].members.rows();
  Matrix members(rows, kPartFeatureDim);
  Matrix axes(static_cast<Eigen::Index>(3 * idx.size()), 6);
  Matrix target(static_cast<Eigen::Index>(3 * idx.size()), 1);
  std::vector<Eigen::Index> offsets{0};
  Eigen::Index r = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const SizeGroup& g = data[idx[k]];
    members.middleRows(r, g.members.rows()) = g.members;
    r += g.members.rows();
    offsets.push_back(r);
    for (int a = 0; a < 3; ++a) {
      axes.row(static_cast<Eigen::Index>(3 * k) + a) = nn::axis_descriptor(g.axes[a]);
      target(static_cast<Eigen::Index>(3 * k) + a, 0) = g.target[a];
    }
  }
  const Tensor pred = head.forward(Tensor::constant(members), offsets, Tensor::constant(axes));
  return nn::mean(nn::square(pred - Tensor::constant(target)));
}

nn::TrainResult train_size(nn::SizeHead& head, std::span<const SizeGroup> data, const nn::TrainConfig& tc,
                           nn::Adam& opt, int start_epoch, const std::function<void(int, double)>& on_epoch) {
  const auto batch = [&](std::span<const std::size_t> idx) { return size_batch_loss(head, data, idx); };
  return nn::train(opt, data.size(), batch, tc, start_epoch, on_epoch);
}

Tensor contact_batch_loss(const nn::ContactHead& head, std::span<const EdgeSample> data,
                          std::span<const std::size_t> idx) {
  const auto b = static_cast<Eigen::Index>(idx.size());
  Matrix pairs(2 * b, kPairFeatureDim);
  Matrix verts(16 * b, 3);
  Matrix target(b, 3);
  for (Eigen::Index k = 0; k < b; ++k) {
    const EdgeSample& e = data[idx[static_cast<std::size_t>(k)]];
    pairs.row(k) = e.pair_forward.transpose();
    pairs.row(b + k) = e.pair_backward.transpose();
    verts.middleRows(8 * k, 8) = vertex_block(e.parent);
    verts.middleRows(8 * (b + k), 8) = vertex_block(e.child);
    target.row(k) = e.offset.transpose();
  }
  const auto out = head.forward(Tensor::constant(pairs), Tensor::constant(verts));
  std::vector<Eigen::Index> first(static_cast<std::size_t>(b)), second(static_cast<std::size_t>(b));
  std::iota(first.begin(), first.end(), Eigen::Index{0});
  std::iota(second.begin(), second.end(), b);
  const Tensor rel = nn::gather_rows(out.contacts, first) - nn::gather_rows(out.contacts, second);
  return nn::mean(nn::square(rel - Tensor::constant(target)));
}

nn::TrainResult train_contact(nn::ContactHead& head, std::span<const EdgeSample> data, const nn::TrainConfig& tc,
                              nn::Adam& opt, int start_epoch, const std::function<void(int, double)>& on_epoch) {
  const auto batch = [&](std::span<const std::size_t> idx) { return contact_batch_loss(head, data, idx); };
  return nn::train(opt, data.size(), batch, tc, start_epoch, on_epoch);
}

nn::TrainResult train_mlp(nn::MlpHead& head, const Matrix& x, const Matrix& y, bool classification,
                          const nn::TrainConfig& tc, nn::Adam& opt, int start_epoch,
                          const std::function<void(int, double)>& on_epoch) {
  const auto batch = [&](std::span<const std::size_t> idx) {
    const Tensor out = head.forward(Tensor::constant(gather(x, idx)));
    const Matrix t = gather(y, idx);
    if (classification) return nn::bce_with_logits(out, t);
    return nn::mean(nn::square(out - Tensor::constant(t)));
  };
  return nn::train(opt, static_cast<std::size_t>(x.rows()), batch, tc, start_epoch, on_epoch);
}

void fit_size_standardizer(nn::SizeHead& head, std::span<const SizeGroup> data) {
  Eigen::Index rows = 0;
  for (const auto& g : data) rows += g.members.rows();
  Matrix all(rows, kPartFeatureDim);
  Eigen::Index r = 0;
  for (const auto& g : data) {
    all.middleRows(r, g.members.rows()) = g.members;
    r += g.members.rows();
  }
  head.input = nn::Standardizer::fit(all);
}

void fit_contact_standardizer(nn::ContactHead& head, std::span<const EdgeSample> data) {
  Matrix all(static_cast<Eigen::Index>(2 * data.size()), kPairFeatureDim);
  double radius = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    all.row(static_cast<Eigen::Index>(2 * k)) = data[k].pair_forward.transpose();
    all.row(static_cast<Eigen::Index>(2 * k + 1)) = data[k].pair_backward.transpose();
    radius += data[k].parent.circumradius() + data[k].child.circumradius();
  }
  head.input = nn::Standardizer::fit(all);
  head.vertex_scale = data.empty() ? 1.0 : radius / static_cast<double>(2 * data.size());
}

// ---------------------------------------------------------------------------

Mat3 predict_rotation(const nn::OrientationHead& head, const Eigen::VectorXd& feature) {
  const MoEPrediction p = nn::forward_orientation(head, feature);
  const auto best = std::max_element(p.probabilities.begin(), p.probabilities.end()) - p.probabilities.begin();
  return p.rotations[static_cast<std::size_t>(best)].matrix();
}

double mean_geodesic_error(const nn::OrientationHead& head, const OrientationData& data) {
  if (data.labels.empty()) return 0.0;
  const auto preds = nn::forward_orientation(head, data.features);
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    const auto best = std::max_element(p.probabilities.begin(), p.probabilities.end()) - p.probabilities.begin();
    total += geodesic_error(p.rotations[static_cast<std::size_t>(best)], data.sets[i]);
  }
  return total / static_cast<double>(preds.size());
}

double mean_size_error(const nn::SizeHead& head, std::span<const SizeGroup> data) {
  double total = 0.0;
  std::size_t weight = 0;
  for (const auto& g : data) {
    const Vec3 pred = nn::forward_size(head, g.members, g.axes);
    total += static_cast<double>(g.weight) * (pred - g.target).cwiseAbs().mean();
    weight += g.weight;
  }
  return weight == 0 ? 0.0 : total / static_cast<double>(weight);
}

Vec3 predict_offset(const nn::ContactHead& head, const EdgeSample& e) {
  const auto cp = nn::forward_contact(head, e.pair_forward, box_vertex_offsets(e.parent));
  const auto cc = nn::forward_contact(head, e.pair_backward, box_vertex_offsets(e.child));
  return cp.contact - cc.contact;
}

// ---------------------------------------------------------------------------

Checkpoint train_head(const Dataset& ds, const ExperimentConfig& cfg, HeadKind kind,
                      const std::optional<Checkpoint>& resume, const std::function<void(int, double)>& on_epoch) {
  const auto train = select_samples(ds, std::vector<std::string>{"train"}, cfg.train_archetypes);
  if (train.empty()) throw std::runtime_error("no training samples for archetypes in the train split");
  const HeadSettings& settings = settings_for(kind, cfg);
  const std::uint64_t head_seed = derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(kind));
  AnyHead head = resume ? head_from_checkpoint(*resume) : make_head(kind, cfg, head_seed);
  if (resume && resume->head != to_string(kind)) {
    throw UsageError("checkpoint holds a " + resume->head + " head, not " + to_string(kind));
  }
  nn::Adam opt(head.parameters(), settings.adam);
  const int start = resume ? resume->epoch : 0;
  if (resume) opt.state() = resume->adam;
  const nn::TrainConfig tc = train_config(settings, derive_seed(cfg.seed, 200 + static_cast<std::uint64_t>(kind)));

  nn::TrainResult result;
  switch (kind) {
    case HeadKind::kOrientation: {
      const auto data = orientation_data(ds, train, cfg.loss.mode);
      if (!resume) head.orientation.input = nn::Standardizer::fit(data.features);
      result = train_orientation(head.orientation, data, cfg.rotation_loss, cfg.loss, tc, opt, start, on_epoch);
      break;
    }
    case HeadKind::kSize: {
      const auto data = size_data(ds, train, false);
      if (!resume) fit_size_standardizer(head.size, data);
      result = train_size(head.size, data, tc, opt, start, on_epoch);
      break;
    }
    case HeadKind::kContact: {
      const auto data = edge_data(ds, train);
      if (data.empty()) throw std::runtime_error("no tree edges in the training samples");
      if (!resume) fit_contact_standardizer(head.contact, data);
      result = train_contact(head.contact, data, tc, opt, start, on_epoch);
      break;
    }
    case HeadKind::kRelation: {
      const auto data = relation_data(ds, train);
      if (!resume) head.mlp.input = nn::Standardizer::fit(data.features);
      result = train_mlp(head.mlp, data.features, data.targets, true, tc, opt, start, on_epoch);
      break;
    }
    case HeadKind::kAbsPosition: {
      const auto data = position_data(ds, train);
      Matrix y(static_cast<Eigen::Index>(data.centers.size()), 3);
      for (std::size_t i = 0; i < data.centers.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = data.centers[i].transpose();
      if (!resume) head.mlp.input = nn::Standardizer::fit(data.features);
      result = train_mlp(head.mlp, data.features, y, false, tc, opt, start, on_epoch);
      break;
    }
    case HeadKind::kOffset: {
      const auto data = edge_data(ds, train);
      if (data.empty()) throw std::runtime_error("no tree edges in the training samples");
      Matrix x(static_cast<Eigen::Index>(data.size()), kOffsetInputDim);
      Matrix y(static_cast<Eigen::Index>(data.size()), 3);
      for (std::size_t i = 0; i < data.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = offset_input(data[i]).transpose();
        y.row(static_cast<Eigen::Index>(i)) = data[i].offset.transpose();
      }
      if (!resume) head.mlp.input = nn::Standardizer::fit(x);
      result = train_mlp(head.mlp, x, y, false, tc, opt, start, on_epoch);
      break;
    }
  }

  Checkpoint ck;
  ck.head = to_string(kind);
  ck.head_config = head.config_json();
  ck.train_config = settings_json(settings);
  ck.config_hash = experiment_config_hash(cfg);
  ck.standardizer = head.standardizer();
  ck.vertex_scale = kind == HeadKind::kContact ? head.contact.vertex_scale : 1.0;
  ck.params = nn::snapshot(head.parameters());
  ck.adam = opt.state();
  ck.epoch = std::max(start, settings.epochs);
  if (resume) ck.loss_curve = resume->loss_curve;
  ck.loss_curve.insert(ck.loss_curve.end(), result.epoch_loss.begin(), result.epoch_loss.end());
  return ck;
}

}  // namespace structkit
