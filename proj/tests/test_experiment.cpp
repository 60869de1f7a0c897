#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "structkit/errors.hpp"
#include "structkit/experiment.hpp"
#include "structkit/rng.hpp"

using namespace structkit;

namespace {

const Dataset& mixed_dataset() {
  static const Dataset ds = [] {
    DatasetConfig c;
    c.shapes = 24;
    c.views = 2;
    c.seed = 5;
    c.train_fraction = 0.5;
    c.val_fraction = 0.0;
    c.noise.visibility_samples = 32;
    return make_dataset(c);
  }();
  return ds;
}

const Dataset& chair_dataset() {
  static const Dataset ds = [] {
    DatasetConfig c;
    c.shapes = 80;
    c.views = 2;
    c.seed = 9;
    c.archetypes = {"chair"};
    c.val_fraction = 0.0;
    return make_dataset(c);
  }();
  return ds;
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  for (HeadSettings* h : {&c.orientation, &c.size, &c.contact, &c.relation, &c.position}) {
    h->hidden = {16, 16};
    h->epochs = 2;
    h->batch = 32;
  }
  c.eval_points = 64;
  c.eval_per_box = 64;
  return c;
}

PipelineHeads train_pipeline_heads(const Dataset& ds, const ExperimentConfig& cfg) {
  PipelineHeads h;
  h.orientation = head_from_checkpoint(train_head(ds, cfg, HeadKind::kOrientation)).orientation;
  h.size = head_from_checkpoint(train_head(ds, cfg, HeadKind::kSize)).size;
  h.contact = head_from_checkpoint(train_head(ds, cfg, HeadKind::kContact)).contact;
  h.relation = head_from_checkpoint(train_head(ds, cfg, HeadKind::kRelation)).mlp;
  return h;
}

}  // namespace

TEST(Config, JsonRoundTripKeepsTheHash) {
  ExperimentConfig c;
  c.seed = 17;
  c.rotation_loss = nn::RotationLossKind::kMinN;
  c.size.adam.lr = 2e-3;
  c.thresholds.adjacency = 0.6;
  c.data.archetypes = {"chair", "bed"};
  const ExperimentConfig r = experiment_config_from_json(Json::parse(experiment_config_to_json(c).dump()));
  EXPECT_EQ(experiment_config_hash(r), experiment_config_hash(c));
  EXPECT_EQ(r.rotation_loss, nn::RotationLossKind::kMinN);
  EXPECT_EQ(r.size.adam.lr, 2e-3);
  EXPECT_EQ(r.size.activation, nn::Activation::kTanh);
}

TEST(Config, HashTracksSettingsButNotTheOutputDirectory) {
  ExperimentConfig a, b;
  b.output_dir = "elsewhere";
  EXPECT_EQ(experiment_config_hash(a), experiment_config_hash(b));
  b.seed = 1;
  EXPECT_NE(experiment_config_hash(a), experiment_config_hash(b));
}

TEST(Config, PartialFilesKeepDefaultsAndUnknownKeysFail) {
  const ExperimentConfig c = experiment_config_from_json(Json::parse(R"({"seed": 4, "heads": {"size": {"epochs": 7}}})"));
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.size.epochs, 7);
  EXPECT_EQ(c.orientation.epochs, ExperimentConfig{}.orientation.epochs);
  EXPECT_EQ(c.thresholds.symmetry, 0.9);
  try {
    experiment_config_from_json(Json::parse(R"({"heads": {"size": {"epohcs": 7}}})"));
    ADD_FAILURE();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("heads.size"), std::string::npos) << e.what();
  }
}

TEST(Config, TrainingProtocolDefaults) {
  const ExperimentConfig c;
  EXPECT_EQ(c.train_archetypes, std::vector<std::string>{"chair"});
  EXPECT_EQ(c.test_archetypes, (std::vector<std::string>{"table", "cabinet", "bed"}));
  EXPECT_EQ(c.orientation.adam.lr, 1e-3);
  EXPECT_EQ(c.orientation.adam.decay, 0.7);
  EXPECT_EQ(c.orientation.adam.decay_every, 2);
  EXPECT_EQ(c.orientation.epochs, 20);
  EXPECT_EQ(c.experts, 4);
}

TEST(HeadKinds, NamesRoundTrip) {
  for (HeadKind k : all_head_kinds()) EXPECT_EQ(head_kind_from_string(to_string(k)), k);
  EXPECT_THROW(head_kind_from_string("legs"), UsageError);
}

TEST(Samples, SelectionBySplitAndArchetype) {
  const Dataset& ds = mixed_dataset();
  const std::vector<std::string> train{"train"}, chair{"chair"};
  const auto idx = select_samples(ds, train, chair);
  ASSERT_FALSE(idx.empty());
  for (std::size_t s : idx) {
    const std::size_t shape = ds.samples[s].shape_index;
    EXPECT_EQ(ds.split[shape], "train");
    EXPECT_EQ(ds.shapes[shape].archetype, "chair");
  }
  EXPECT_EQ(select_samples(ds, {}, {}).size(), ds.samples.size());
}

TEST(Samples, UnaryAndGroupSizeData) {
  const Dataset& ds = mixed_dataset();
  const auto all = select_samples(ds, {}, {});
  const auto unary = size_data(ds, all, true, 2);
  const auto group = size_data(ds, all, false, 2);
  std::size_t members = 0, occluded_u = 0, occluded_g = 0;
  for (const auto& g : group) {
    members += static_cast<std::size_t>(g.members.rows());
    EXPECT_EQ(g.weight, static_cast<std::size_t>(g.members.rows()));
    EXPECT_GE(g.members.rows(), 2);
    occluded_g += g.occluded;
  }
  for (const auto& u : unary) {
    EXPECT_EQ(u.members.rows(), 1);
    occluded_u += u.occluded;
  }
  EXPECT_EQ(unary.size(), members);
  EXPECT_EQ(occluded_u, occluded_g);
}

TEST(Samples, EdgeDataOffsetsMatchLabels) {
  const Dataset& ds = mixed_dataset();
  const auto all = select_samples(ds, {}, {});
  for (const auto& e : edge_data(ds, all)) {
    EXPECT_EQ(e.offset, e.child.center - e.parent.center);
    EXPECT_EQ(e.pair_forward.size(), kPairFeatureDim);
    EXPECT_EQ(offset_input(e).size(), kOffsetInputDim);
  }
}

TEST(Samples, TranslatedViewShiftsOnlyThePlacement) {
  const Dataset& ds = mixed_dataset();
  const Vec3 shift(0.3, -0.2, 0.1);
  const ViewSample moved = translated_view(ds, 3, shift);
  const ViewSample& orig = ds.samples[3];
  ASSERT_EQ(moved.label.parts.size(), orig.label.parts.size());
  for (std::size_t i = 0; i < orig.label.parts.size(); ++i) {
    EXPECT_LT((moved.label.parts[i].center - orig.label.parts[i].center - shift).norm(), 1e-12);
    EXPECT_EQ(moved.label.parts[i].size, orig.label.parts[i].size);
  }
  EXPECT_EQ(moved.label.edges, orig.label.edges);
}

TEST(Training, ResumeContinuesTheUninterruptedRun) {
  const Dataset& ds = mixed_dataset();
  ExperimentConfig cfg = tiny_config();
  for (HeadKind k : {HeadKind::kOrientation, HeadKind::kSize, HeadKind::kContact, HeadKind::kRelation}) {
    ExperimentConfig full = cfg;
    full.orientation.epochs = full.size.epochs = full.contact.epochs = full.relation.epochs = 4;
    const Checkpoint straight = train_head(ds, full, k);
    const Checkpoint half = train_head(ds, cfg, k);
    const Checkpoint resumed = train_head(ds, full, k, half);
    ASSERT_EQ(resumed.loss_curve.size(), 4u);
    EXPECT_EQ(resumed.epoch, 4);
    for (std::size_t e = 0; e < 4; ++e) EXPECT_NEAR(resumed.loss_curve[e], straight.loss_curve[e], 1e-12) << to_string(k);
    for (std::size_t p = 0; p < straight.params.size(); ++p) {
      EXPECT_LT((resumed.params[p] - straight.params[p]).norm(), 1e-10) << to_string(k);
    }
  }
}

TEST(Training, ResumingWithTheWrongHeadIsAUsageError) {
  const Dataset& ds = mixed_dataset();
  const Checkpoint size = train_head(ds, tiny_config(), HeadKind::kSize);
  EXPECT_THROW(train_head(ds, tiny_config(), HeadKind::kContact, size), UsageError);
}

TEST(Training, CheckpointRebuildsTheSameHead) {
  const Dataset& ds = mixed_dataset();
  const ExperimentConfig cfg = tiny_config();
  const Checkpoint ck = train_head(ds, cfg, HeadKind::kOrientation);
  const Checkpoint again = checkpoint_from_json(Json::parse(checkpoint_to_json(ck).dump()), "ck");
  const AnyHead a = head_from_checkpoint(ck), b = head_from_checkpoint(again);
  const auto train = select_samples(ds, std::vector<std::string>{"train"}, cfg.train_archetypes);
  const OrientationData data = orientation_data(ds, train, cfg.loss.mode);
  EXPECT_EQ(mean_geodesic_error(a.orientation, data), mean_geodesic_error(b.orientation, data));
  EXPECT_EQ(ck.config_hash, experiment_config_hash(cfg));
}

TEST(Training, SizeAndContactLossGradientsMatchFiniteDifferences) {
  const Dataset& ds = mixed_dataset();
  ExperimentConfig cfg = tiny_config();
  cfg.size.activation = nn::Activation::kTanh;
  cfg.contact.activation = nn::Activation::kTanh;
  const auto all = select_samples(ds, {}, {});
  const auto groups = size_data(ds, all, false, 1);
  const auto edges = edge_data(ds, all);
  AnyHead size = make_head(HeadKind::kSize, cfg, 1);
  AnyHead contact = make_head(HeadKind::kContact, cfg, 2);
  fit_size_standardizer(size.size, groups);
  fit_contact_standardizer(contact.contact, edges);
  const std::vector<std::size_t> idx{0, 3, 5};
  const auto rs = nn::grad_check([&] { return size_batch_loss(size.size, groups, idx); }, size.parameters());
  EXPECT_TRUE(rs.passed) << rs.max_rel_error;
  const auto rc = nn::grad_check([&] { return contact_batch_loss(contact.contact, edges, idx); }, contact.parameters());
  EXPECT_TRUE(rc.passed) << rc.max_rel_error;
}

TEST(Pipeline, OracleModeReproducesGroundTruth) {
  const Dataset& ds = mixed_dataset();
  const auto all = select_samples(ds, {}, {});
  const MetricReport r = evaluate_pipeline(ds, all, EvalMode::kOracle, nullptr, tiny_config());
  EXPECT_EQ(r.categories.size(), 4u);
  EXPECT_EQ(r.overall.count, all.size());
  EXPECT_LT(r.overall.mean.emd_aligned, 1e-9);
  EXPECT_LT(r.overall.mean.chamfer, 1e-9);
  EXPECT_LT(r.overall.mean.position_l1, 1e-9);
  EXPECT_LT(r.overall.mean.size_l1, 1e-9);
}

TEST(Pipeline, TrainedModeProducesCompleteShapes) {
  const Dataset& ds = mixed_dataset();
  const ExperimentConfig cfg = tiny_config();
  const PipelineHeads heads = train_pipeline_heads(ds, cfg);
  for (std::size_t s = 0; s < 6; ++s) {
    PipelineTrace trace;
    const auto& obs = ds.samples[s].observation;
    const auto boxes = run_pipeline(heads, obs, cfg.thresholds, &trace);
    ASSERT_EQ(boxes.size(), obs.parts.size());
    for (const auto& b : boxes) {
      EXPECT_TRUE(b.center.allFinite());
      EXPECT_TRUE((b.size.array() > 0).all());
    }
    EXPECT_TRUE(satisfies_clique_property(trace.groups, trace.scores, boxes.size(), cfg.thresholds.symmetry));
    for (const auto& [p, c] : trace.tree.edges()) {
      const auto it = std::find_if(trace.scores.begin(), trace.scores.end(), [&](const PartPairScore& x) {
        return std::min(x.i, x.j) == std::min(p, c) && std::max(x.i, x.j) == std::max(p, c);
      });
      ASSERT_NE(it, trace.scores.end());
      EXPECT_GE(it->adjacency, cfg.thresholds.adjacency);
    }
  }
  const auto test = select_samples(ds, std::vector<std::string>{"test"}, cfg.test_archetypes);
  const MetricReport a = evaluate_pipeline(ds, test, EvalMode::kTrained, &heads, cfg, 1);
  const MetricReport b = evaluate_pipeline(ds, test, EvalMode::kTrained, &heads, cfg, 3);
  EXPECT_EQ(a.overall.mean.emd_aligned, b.overall.mean.emd_aligned);
  EXPECT_TRUE(std::isfinite(a.overall.mean.emd_aligned));
  EXPECT_THROW(evaluate_pipeline(ds, test, EvalMode::kTrained, nullptr, cfg), std::invalid_argument);
}

TEST(Relations, ClassifierSeparatesHeldOutPairs) {
  const Dataset& ds = chair_dataset();
  ExperimentConfig cfg;
  cfg.relation.adam.decay_every = 10;
  cfg.relation.epochs = 30;
  const AnyHead head = head_from_checkpoint(train_head(ds, cfg, HeadKind::kRelation));
  const auto test = select_samples(ds, std::vector<std::string>{"test"}, {});
  const RelationData data = relation_data(ds, test);
  const nn::Matrix logits = head.mlp.predict(data.features);
  for (Eigen::Index col = 0; col < 2; ++col) {
    std::size_t correct = 0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      correct += (logits(r, col) >= 0) == (data.targets(r, col) > 0.5) ? 1 : 0;
    }
    EXPECT_GE(static_cast<double>(correct) / static_cast<double>(logits.rows()), 0.95) << "column " << col;
  }
}

TEST(Ablations, TablesHaveTheDocumentedRows) {
  const Dataset& ds = chair_dataset();
  ExperimentConfig cfg = tiny_config();
  cfg.orientation.epochs = cfg.size.epochs = cfg.contact.epochs = cfg.position.epochs = 1;
  const std::vector<std::string> tr{"train"}, te{"test"};
  const auto train = select_samples(ds, tr, {});
  auto test = select_samples(ds, te, {});
  test.resize(std::min<std::size_t>(test.size(), 8));
  const std::map<std::string, std::vector<std::string>> rows{
      {"rotation-loss", {"MSE", "MinN-MSE", "MoE-MinN-MSE"}},
      {"group-size", {"unary", "group"}},
      {"relative-position", {"absolute", "relative"}},
      {"contact-vs-offset", {"center-offset", "contact-point"}},
      {"joint-vs-sequential", {"joint", "sequential"}},
  };
  ASSERT_EQ(ablation_names().size(), rows.size());
  for (const auto& name : ablation_names()) {
    const AblationTable t = run_ablation(name, ds, train, test, cfg, 0);
    std::vector<std::string> got;
    for (const auto& r : t.rows) {
      got.push_back(r.first);
      ASSERT_EQ(r.second.size(), t.columns.size());
      for (double v : r.second) EXPECT_TRUE(std::isfinite(v));
    }
    EXPECT_EQ(got, rows.at(name));
    EXPECT_EQ(t.to_json()["rows"].size(), got.size());
    EXPECT_NE(t.format().find(got.front()), std::string::npos);
  }
  EXPECT_THROW(run_ablation("nope", ds, train, test, cfg, 0), UsageError);
}

TEST(Ablations, ContactArmNeverBreaksTheCircumradiusBound) {
  const Dataset& ds = chair_dataset();
  ExperimentConfig cfg = tiny_config();
  cfg.contact.epochs = 1;
  cfg.position.epochs = 1;
  const std::vector<std::string> tr{"train"}, te{"test"};
  const AblationTable t =
      run_ablation("contact-vs-offset", ds, select_samples(ds, tr, {}), select_samples(ds, te, {}), cfg, 0);
  EXPECT_EQ(t.value("contact-point", 1), 0.0);
}

TEST(BoxVerticesRows, MatchesGeometry) {
  Rng rng(3);
  nn::Matrix q(3, 4), s(3, 3), c(3, 3);
  std::vector<OrientedBox> boxes;
  for (Eigen::Index i = 0; i < 3; ++i) {
    const OrientedBox b(Vec3(rng.normal(), rng.normal(), rng.normal()),
                        Vec3(rng.uniform(0.1, 1), rng.uniform(0.1, 1), rng.uniform(0.1, 1)),
                        UnitQuaternion::normalized(rng.normal(), rng.normal(), rng.normal(), rng.normal()));
    q.row(i) << b.rotation.w(), b.rotation.x(), b.rotation.y(), b.rotation.z();
    s.row(i) = b.size.transpose();
    c.row(i) = b.center.transpose();
    boxes.push_back(b);
  }
  const nn::Matrix v =
      box_vertices_rows(nn::Tensor::constant(q), nn::Tensor::constant(s), nn::Tensor::constant(c)).value();
  ASSERT_EQ(v.cols(), 24);
  for (Eigen::Index i = 0; i < 3; ++i) {
    const auto corners = box_vertices(boxes[static_cast<std::size_t>(i)]);
    for (int j = 0; j < 8; ++j) {
      EXPECT_LT((v.row(i).segment<3>(3 * j).transpose() - corners[static_cast<std::size_t>(j)]).norm(), 1e-12);
    }
  }
}
