#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "structkit/errors.hpp"
#include "structkit/experiment.hpp"
#include "structkit/rng.hpp"

namespace structkit {

using nn::Matrix;
using nn::Tensor;

double AblationTable::value(const std::string& row, std::size_t column) const {
  for (const auto& [label, values] : rows) {
    if (label == row) return values.at(column);
  }
  throw std::out_of_range("no ablation row " + row);
}

std::string AblationTable::format() const {
  std::size_t w0 = 3;
  for (const auto& r : rows) w0 = std::max(w0, r.first.size());
  std::vector<std::size_t> w;
  for (const auto& c : columns) w.push_back(std::max<std::size_t>(c.size(), 10));
  std::ostringstream os;
  os << name << '\n';
  os << std::string(w0, ' ');
  for (std::size_t c = 0; c < columns.size(); ++c) os << "  " << std::string(w[c] - columns[c].size(), ' ') << columns[c];
  os << '\n';
  for (const auto& [label, values] : rows) {
    os << label << std::string(w0 - label.size(), ' ');
    for (std::size_t c = 0; c < values.size(); ++c) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.4f", values[c]);
      const std::string s = buf;
      os << "  " << std::string(w[c] > s.size() ? w[c] - s.size() : 0, ' ') << s;
    }
    os << '\n';
  }
  return os.str();
}

Json AblationTable::to_json() const {
  Json r = Json::array();
  for (const auto& [label, values] : rows) r.push_back(Json{{"arm", label}, {"values", values}});
  return Json{{"ablation", name}, {"columns", columns}, {"rows", std::move(r)}};
}

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names{"rotation-loss", "group-size", "relative-position",
                                              "joint-vs-sequential", "contact-vs-offset"};
  return names;
}

AblationTable run_ablation(const std::string& name, const Dataset& ds, std::span<const std::size_t> train,
                           std::span<const std::size_t> test, const ExperimentConfig& cfg, std::uint64_t seed) {
  if (name == "rotation-loss") return rotation_loss_ablation(ds, train, test, cfg, seed);
  if (name == "group-size") return group_size_ablation(ds, train, test, cfg, seed);
  if (name == "relative-position") return relative_position_ablation(ds, train, test, cfg, seed);
  if (name == "joint-vs-sequential") return joint_vs_sequential_ablation(ds, train, test, cfg, seed);
  if (name == "contact-vs-offset") return contact_vs_offset_ablation(ds, train, test, cfg, seed);
  throw UsageError("unknown ablation '" + name + "'");
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error(what);
}

}  // namespace

AblationTable rotation_loss_ablation(const Dataset& ds, std::span<const std::size_t> train,
                                     std::span<const std::size_t> test, const ExperimentConfig& cfg,
                                     std::uint64_t seed) {
  const auto train_data = orientation_data(ds, train, cfg.loss.mode);
  const auto test_data = orientation_data(ds, test, cfg.loss.mode);
  require(!train_data.labels.empty() && !test_data.labels.empty(), "rotation-loss ablation needs train and test parts");
  AblationTable t{"rotation-loss", {"geodesic_deg", "train_geodesic_deg"}, {}};
  const std::pair<const char*, nn::RotationLossKind> arms[] = {{"MSE", nn::RotationLossKind::kMse},
                                                              {"MinN-MSE", nn::RotationLossKind::kMinN},
                                                              {"MoE-MinN-MSE", nn::RotationLossKind::kMoE}};
  for (const auto& [label, kind] : arms) {
    ExperimentConfig c = cfg;
    c.rotation_loss = kind;
    AnyHead h = make_head(HeadKind::kOrientation, c, derive_seed(seed, 1));
    h.orientation.input = nn::Standardizer::fit(train_data.features);
    nn::Adam opt(h.parameters(), c.orientation.adam);
    train_orientation(h.orientation, train_data, kind, c.loss, train_config(c.orientation, derive_seed(seed, 2)), opt);
    t.rows.push_back({label,
                      {mean_geodesic_error(h.orientation, test_data), mean_geodesic_error(h.orientation, train_data)}});
  }
  return t;
}

AblationTable group_size_ablation(const Dataset& ds, std::span<const std::size_t> train,
                                  std::span<const std::size_t> test, const ExperimentConfig& cfg,
                                  std::uint64_t seed) {
  AblationTable t{"group-size", {"size_l1", "occluded_fraction"}, {}};
  const std::pair<const char*, bool> arms[] = {{"unary", true}, {"group", false}};
  for (const auto& [label, unary] : arms) {
    const auto train_data = size_data(ds, train, unary, 2);
    const auto test_data = size_data(ds, test, unary, 2);
    require(!train_data.empty() && !test_data.empty(), "group-size ablation needs multi-member groups");
    AnyHead h = make_head(HeadKind::kSize, cfg, derive_seed(seed, 1));
    fit_size_standardizer(h.size, train_data);
    nn::Adam opt(h.parameters(), cfg.size.adam);
    train_size(h.size, train_data, train_config(cfg.size, derive_seed(seed, 2)), opt);
    std::size_t occluded = 0;
    std::size_t members = 0;
    for (const auto& g : test_data) {
      occluded += g.occluded;
      members += static_cast<std::size_t>(g.members.rows());
    }
    t.rows.push_back({label, {mean_size_error(h.size, test_data),
                              static_cast<double>(occluded) / static_cast<double>(std::max<std::size_t>(members, 1))}});
  }
  return t;
}

namespace {

Matrix centers_matrix(const std::vector<Vec3>& c) {
  Matrix y(static_cast<Eigen::Index>(c.size()), 3);
  for (std::size_t i = 0; i < c.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = c[i].transpose();
  return y;
}

nn::ContactHead train_contact_arm(const std::vector<EdgeSample>& data, const ExperimentConfig& cfg,
                                  std::uint64_t seed) {
  AnyHead h = make_head(HeadKind::kContact, cfg, derive_seed(seed, 1));
  fit_contact_standardizer(h.contact, data);
  nn::Adam opt(h.parameters(), cfg.contact.adam);
  train_contact(h.contact, data, train_config(cfg.contact, derive_seed(seed, 2)), opt);
  return h.contact;
}

}  // namespace

AblationTable relative_position_ablation(const Dataset& ds, std::span<const std::size_t> train,
                                         std::span<const std::size_t> test, const ExperimentConfig& cfg,
                                         std::uint64_t seed) {
  const auto pos = position_data(ds, train);
  const auto edges = edge_data(ds, train);
  require(!edges.empty(), "relative-position ablation needs tree edges");
  AnyHead abs_head = make_head(HeadKind::kAbsPosition, cfg, derive_seed(seed, 1));
  abs_head.mlp.input = nn::Standardizer::fit(pos.features);
  nn::Adam opt(abs_head.parameters(), cfg.position.adam);
  train_mlp(abs_head.mlp, pos.features, centers_matrix(pos.centers), false,
            train_config(cfg.position, derive_seed(seed, 2)), opt);
  const nn::ContactHead contact = train_contact_arm(edges, cfg, seed);

  // every test view is re-observed with its object shifted by a random amount
  Rng rng(derive_seed(seed, 3));
  Dataset shifted;
  shifted.config = ds.config;
  shifted.shapes = ds.shapes;
  shifted.split = ds.split;
  std::vector<std::size_t> idx;
  for (std::size_t s : test) {
    const Vec3 shift(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    idx.push_back(shifted.samples.size());
    shifted.samples.push_back(translated_view(ds, s, shift));
  }
  double abs_err = 0.0;
  double rel_err = 0.0;
  std::size_t count = 0;
  for (std::size_t s : idx) {
    const std::size_t one[] = {s};
    const auto test_edges = edge_data(shifted, one);
    const ViewSample& v = shifted.samples[s];
    Matrix f(static_cast<Eigen::Index>(v.observation.features.size()), kPartFeatureDim);
    for (std::size_t i = 0; i < v.observation.features.size(); ++i) f.row(static_cast<Eigen::Index>(i)) = v.observation.features[i].transpose();
    const Matrix centers = abs_head.mlp.predict(f);
    std::vector<double> volumes;
    for (const auto& p : v.label.parts) volumes.push_back(p.volume());
    const PartTree tree = build_part_tree(v.label.edges, volumes);
    const auto tree_edges = tree.edges();
    for (std::size_t k = 0; k < tree_edges.size(); ++k) {
      const auto [p, c] = tree_edges[k];
      const Vec3 abs_offset = (centers.row(static_cast<Eigen::Index>(c)) - centers.row(static_cast<Eigen::Index>(p))).transpose();
      abs_err += l1_vector_error(abs_offset, test_edges[k].offset);
      rel_err += l1_vector_error(predict_offset(contact, test_edges[k]), test_edges[k].offset);
      ++count;
    }
  }
  require(count > 0, "relative-position ablation has no test edges");
  AblationTable t{"relative-position", {"position_l1"}, {}};
  t.rows.push_back({"absolute", {abs_err / static_cast<double>(count)}});
  t.rows.push_back({"relative", {rel_err / static_cast<double>(count)}});
  return t;
}

AblationTable contact_vs_offset_ablation(const Dataset& ds, std::span<const std::size_t> train,
                                         std::span<const std::size_t> test, const ExperimentConfig& cfg,
                                         std::uint64_t seed) {
  const auto edges = edge_data(ds, train);
  const auto test_edges = edge_data(ds, test);
  require(!edges.empty() && !test_edges.empty(), "contact-vs-offset ablation needs tree edges");
  Matrix x(static_cast<Eigen::Index>(edges.size()), kOffsetInputDim);
  Matrix y(static_cast<Eigen::Index>(edges.size()), 3);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = offset_input(edges[i]).transpose();
    y.row(static_cast<Eigen::Index>(i)) = edges[i].offset.transpose();
  }
  AnyHead offset = make_head(HeadKind::kOffset, cfg, derive_seed(seed, 1));
  offset.mlp.input = nn::Standardizer::fit(x);
  nn::Adam opt(offset.parameters(), cfg.contact.adam);
  train_mlp(offset.mlp, x, y, false, train_config(cfg.contact, derive_seed(seed, 2)), opt);
  const nn::ContactHead contact = train_contact_arm(edges, cfg, seed);

  double off_err = 0.0, con_err = 0.0;
  std::size_t off_out = 0, con_out = 0;
  for (const auto& e : test_edges) {
    const double bound = e.parent.circumradius() + e.child.circumradius();
    const Vec3 o = offset.mlp.predict(Matrix(offset_input(e).transpose())).row(0).transpose();
    const Vec3 c = predict_offset(contact, e);
    off_err += l1_vector_error(o, e.offset);
    con_err += l1_vector_error(c, e.offset);
    off_out += o.norm() > bound ? 1 : 0;
    con_out += c.norm() > bound ? 1 : 0;
  }
  const double n = static_cast<double>(test_edges.size());
  AblationTable t{"contact-vs-offset", {"position_l1", "bound_violations"}, {}};
  t.rows.push_back({"center-offset", {off_err / n, static_cast<double>(off_out)}});
  t.rows.push_back({"contact-point", {con_err / n, static_cast<double>(con_out)}});
  return t;
}

Tensor box_vertices_rows(const Tensor& quats, const Tensor& sizes, const Tensor& centers) {
  const Tensor r = nn::quat_to_rotation_rows(quats);
  // half-extent-scaled axis components: term[row][axis] = 0.5 * s_axis * R(row, axis)
  std::array<std::array<Tensor, 3>, 3> term;
  for (int row = 0; row < 3; ++row) {
    for (int axis = 0; axis < 3; ++axis) {
      term[row][axis] = nn::slice_cols(r, 3 * row + axis, 1) * nn::slice_cols(sizes, axis, 1) * 0.5;
    }
  }
  std::vector<Tensor> cols;
  for (int v = 0; v < 8; ++v) {
    for (int row = 0; row < 3; ++row) {
      Tensor acc = nn::slice_cols(centers, row, 1);
      for (int axis = 0; axis < 3; ++axis) {
        acc = vertex_sign(v, axis) > 0 ? acc + term[row][axis] : acc - term[row][axis];
      }
      cols.push_back(acc);
    }
  }
  return nn::concat_cols(cols);
}

AblationTable joint_vs_sequential_ablation(const Dataset& ds, std::span<const std::size_t> train,
                                           std::span<const std::size_t> test, const ExperimentConfig& cfg,
                                           std::uint64_t seed) {
  const auto pos = position_data(ds, train);
  require(pos.features.rows() > 0, "joint-vs-sequential ablation needs training parts");
  std::vector<std::array<Vec3, 8>> targets;
  for (std::size_t s : train) {
    for (const auto& p : ds.samples[s].label.parts) targets.push_back(box_vertices(p));
  }

  // joint: one regressor for [quaternion, edge lengths, centre] under box chamfer
  nn::MlpHeadConfig mc;
  mc.input_dim = kPartFeatureDim;
  mc.hidden = cfg.position.hidden;
  mc.output_dim = 10;
  mc.activation = cfg.position.activation;
  nn::MlpHead joint(mc, derive_seed(seed, 1));
  joint.input = nn::Standardizer::fit(pos.features);
  {
    nn::Adam opt(joint.parameters(), cfg.position.adam);
    const auto batch = [&](std::span<const std::size_t> idx) {
      Matrix x(static_cast<Eigen::Index>(idx.size()), kPartFeatureDim);
      std::vector<std::array<Vec3, 8>> t;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        x.row(static_cast<Eigen::Index>(k)) = pos.features.row(static_cast<Eigen::Index>(idx[k]));
        t.push_back(targets[idx[k]]);
      }
      const Tensor out = joint.forward(Tensor::constant(x));
      const Tensor verts = box_vertices_rows(nn::slice_cols(out, 0, 4), nn::softplus(nn::slice_cols(out, 4, 3)),
                                             nn::slice_cols(out, 7, 3));
      return nn::mean(nn::chamfer_rows(verts, t));
    };
    nn::train(opt, targets.size(), batch, train_config(cfg.position, derive_seed(seed, 2)));
  }

  // sequential: orientation, then size along the predicted axes, then centre
  ExperimentConfig sc = cfg;
  sc.rotation_loss = nn::RotationLossKind::kMoE;
  const auto odata = orientation_data(ds, train, cfg.loss.mode);
  AnyHead orient = make_head(HeadKind::kOrientation, sc, derive_seed(seed, 3));
  orient.orientation.input = nn::Standardizer::fit(odata.features);
  {
    nn::Adam opt(orient.parameters(), sc.orientation.adam);
    train_orientation(orient.orientation, odata, sc.rotation_loss, sc.loss,
                      train_config(sc.orientation, derive_seed(seed, 4)), opt);
  }
  const auto sdata = size_data(ds, train, true, 1);
  AnyHead size = make_head(HeadKind::kSize, sc, derive_seed(seed, 5));
  fit_size_standardizer(size.size, sdata);
  {
    nn::Adam opt(size.parameters(), sc.size.adam);
    train_size(size.size, sdata, train_config(sc.size, derive_seed(seed, 6)), opt);
  }
  AnyHead center = make_head(HeadKind::kAbsPosition, sc, derive_seed(seed, 7));
  center.mlp.input = nn::Standardizer::fit(pos.features);
  {
    nn::Adam opt(center.parameters(), sc.position.adam);
    train_mlp(center.mlp, pos.features, centers_matrix(pos.centers), false,
              train_config(sc.position, derive_seed(seed, 8)), opt);
  }

  const auto tpos = position_data(ds, test);
  require(tpos.features.rows() > 0, "joint-vs-sequential ablation needs test parts");
  std::vector<OrientedBox> gt;
  for (std::size_t s : test) {
    for (const auto& p : ds.samples[s].label.parts) gt.push_back(p);
  }
  const Matrix jout = joint.predict(tpos.features);
  const Matrix cout = center.mlp.predict(tpos.features);
  double joint_err = 0.0, seq_err = 0.0;
  for (Eigen::Index i = 0; i < jout.rows(); ++i) {
    const auto& o = jout.row(i);
    Vec3 s;
    for (int k = 0; k < 3; ++k) s[k] = std::max(std::log1p(std::exp(-std::abs(o(4 + k)))) + std::max(o(4 + k), 0.0), kMinEdge);
    const double qn = std::sqrt(o(0) * o(0) + o(1) * o(1) + o(2) * o(2) + o(3) * o(3));
    const UnitQuaternion q = qn < 1e-8 ? UnitQuaternion::identity() : UnitQuaternion::normalized(o(0), o(1), o(2), o(3));
    const OrientedBox jb(Vec3(o(7), o(8), o(9)), s, q);
    joint_err += chamfer_box_distance(jb, gt[static_cast<std::size_t>(i)]);

    const Eigen::VectorXd f = tpos.features.row(i).transpose();
    const Mat3 r = predict_rotation(orient.orientation, f);
    const Vec3 len = nn::forward_size(size.size, Matrix(f.transpose()), {Vec3(r.col(0)), Vec3(r.col(1)), Vec3(r.col(2))});
    const OrientedBox sb(cout.row(i).transpose(), len.cwiseMax(kMinEdge), matrix_to_quat(RotationMatrix::unchecked(r)));
    seq_err += chamfer_box_distance(sb, gt[static_cast<std::size_t>(i)]);
  }
  const double n = static_cast<double>(jout.rows());
  AblationTable t{"joint-vs-sequential", {"box_chamfer"}, {}};
  t.rows.push_back({"joint", {joint_err / n}});
  t.rows.push_back({"sequential", {seq_err / n}});
  return t;
}

}  // namespace structkit
