#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include "structkit/errors.hpp"
#include "structkit/io.hpp"
#include "structkit/rng.hpp"

using namespace structkit;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           ("structkit_io_" + std::to_string(::getpid()) + "_" + info->name());
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_text_file(e.path());
  }
  return files;
}

void expect_parse_error_mentions(const std::function<void()>& f, const std::string& needle) {
  try {
    f();
    ADD_FAILURE() << "no ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

DatasetConfig small_config() {
  DatasetConfig c;
  c.shapes = 6;
  c.views = 2;
  c.seed = 21;
  c.noise.visibility_samples = 24;
  return c;
}

}  // namespace

TEST(Hash, FnvKnownValues) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(Hash, ConfigHashIgnoresKeyOrder) {
  const Json a = Json::parse(R"({"x": 1, "y": [1, 2]})");
  const Json b = Json::parse(R"({"y": [1, 2], "x": 1})");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(Json::parse(R"({"x": 2, "y": [1, 2]})")));
}

TEST(Shape, RoundTripIsExact) {
  const PartShape s = generate_shape("cabinet", 4);
  const PartShape r = shape_from_json(Json::parse(shape_to_json(s).dump()));
  EXPECT_EQ(r.id, s.id);
  EXPECT_EQ(r.archetype, s.archetype);
  EXPECT_EQ(r.tags, s.tags);
  EXPECT_EQ(r.symmetry_groups, s.symmetry_groups);
  EXPECT_EQ(r.edges, s.edges);
  ASSERT_EQ(r.parts.size(), s.parts.size());
  for (std::size_t i = 0; i < s.parts.size(); ++i) {
    EXPECT_EQ(r.parts[i].center, s.parts[i].center);
    EXPECT_EQ(r.parts[i].size, s.parts[i].size);
    EXPECT_EQ(r.parts[i].rotation.w(), s.parts[i].rotation.w());
  }
  ASSERT_EQ(r.contacts.size(), s.contacts.size());
  for (std::size_t e = 0; e < s.contacts.size(); ++e) {
    EXPECT_EQ(r.contacts[e].point, s.contacts[e].point);
    EXPECT_EQ(r.contacts[e].weights_a, s.contacts[e].weights_a);
  }
}

TEST(Shape, ErrorsNameTheField) {
  Json j = shape_to_json(generate_shape("table", 1));
  j["parts"][2]["size"] = Json::array({1, 2});
  expect_parse_error_mentions([&] { shape_from_json(j); }, "parts[2].size");

  Json k = shape_to_json(generate_shape("table", 1));
  k["edges"][0][1] = 999;
  expect_parse_error_mentions([&] { shape_from_json(k); }, "edges[0]");

  Json m = shape_to_json(generate_shape("table", 1));
  m.erase("parts");
  expect_parse_error_mentions([&] { shape_from_json(m); }, "parts");
}

TEST(Shape, ZeroQuaternionIsAParseError) {
  Json j = shape_to_json(generate_shape("bed", 2));
  j["parts"][0]["quaternion"] = Json::array({0, 0, 0, 0});
  expect_parse_error_mentions([&] { shape_from_json(j); }, "parts[0].quaternion");
}

TEST(Json, SyntaxErrorsReportLineAndColumn) {
  expect_parse_error_mentions([] { parse_json("{\n  \"a\": 1,\n  \"b\": ]\n}", "cfg.json"); }, "cfg.json:3:");
}

TEST_F(TempDir, MissingFilesRaiseIoError) {
  EXPECT_THROW(read_text_file(dir_ / "nope.json"), IoError);
  EXPECT_THROW(read_checkpoint(dir_ / "nope.json"), IoError);
  EXPECT_THROW(read_dataset(dir_ / "nothing"), IoError);
}

TEST_F(TempDir, UnwritableDirectoryRaisesIoError) {
  write_text_file(dir_ / "file", "x");
  // A regular file where a directory is needed.
  EXPECT_THROW(write_text_file(dir_ / "file" / "inner.json", "y"), IoError);
}

TEST_F(TempDir, DatasetRoundTrip) {
  const Dataset ds = make_dataset(small_config());
  write_dataset(ds, dir_);
  const Dataset back = read_dataset(dir_);
  EXPECT_EQ(back.config_hash, ds.config_hash);
  EXPECT_EQ(back.split, ds.split);
  ASSERT_EQ(back.samples.size(), ds.samples.size());
  for (std::size_t k = 0; k < ds.samples.size(); ++k) {
    const auto& a = ds.samples[k];
    const auto& b = back.samples[k];
    EXPECT_EQ(a.shape_index, b.shape_index);
    EXPECT_EQ(a.view, b.view);
    for (std::size_t i = 0; i < a.observation.features.size(); ++i) {
      ASSERT_EQ(a.observation.features[i], b.observation.features[i]);
      ASSERT_EQ(a.observation.parts[i].occluded, b.observation.parts[i].occluded);
      ASSERT_EQ(a.label.parts[i].center, b.label.parts[i].center);
    }
    EXPECT_EQ(a.label.symmetry_groups, b.label.symmetry_groups);
  }

  const Json manifest = read_json_file(dir_ / "manifest.json");
  EXPECT_EQ(manifest["format_version"], kFormatVersion);
  EXPECT_EQ(manifest["config_hash"], ds.config_hash);
  EXPECT_EQ(manifest["counts"]["samples"], ds.samples.size());
  EXPECT_EQ(read_json_file(dir_ / "shapes" / (ds.shapes[0].id + ".json"))["config_hash"], ds.config_hash);
}

TEST_F(TempDir, RegenerationIsByteIdentical) {
  write_dataset(make_dataset(small_config(), 1), dir_ / "a");
  write_dataset(make_dataset(small_config(), 2), dir_ / "b");
  const auto a = read_tree(dir_ / "a"), b = read_tree(dir_ / "b");
  EXPECT_EQ(a.size(), 1 + 6 + 12u);
  EXPECT_EQ(a, b);
}

TEST(Checkpoint, RoundTripKeepsEverything) {
  Checkpoint c;
  c.head = "size";
  c.head_config = Json{{"hidden", {4, 4}}};
  c.train_config = Json{{"epochs", 3}};
  c.config_hash = "0123456789abcdef";
  c.standardizer = nn::Standardizer::identity(3);
  c.standardizer.mean << 0.1, -0.2, 1.0 / 3.0;
  c.vertex_scale = 0.37;
  Rng rng(1);
  c.params.push_back(Eigen::MatrixXd::NullaryExpr(3, 2, [&] { return rng.normal(); }));
  c.adam.step = 42;
  c.adam.m.push_back(Eigen::MatrixXd::Constant(3, 2, 1e-300));
  c.adam.v.push_back(Eigen::MatrixXd::Constant(3, 2, 0.5));
  c.epoch = 3;
  c.loss_curve = {1.0, 0.5, 0.25};
  const Checkpoint r = checkpoint_from_json(Json::parse(checkpoint_to_json(c).dump()), "ck");
  EXPECT_EQ(r.head, c.head);
  EXPECT_EQ(r.head_config, c.head_config);
  EXPECT_EQ(r.config_hash, c.config_hash);
  EXPECT_EQ(r.standardizer.mean, c.standardizer.mean);
  EXPECT_EQ(r.vertex_scale, c.vertex_scale);
  EXPECT_EQ(r.params[0], c.params[0]);
  EXPECT_EQ(r.adam.step, 42);
  EXPECT_EQ(r.adam.m[0], c.adam.m[0]);
  EXPECT_EQ(r.epoch, 3);
  EXPECT_EQ(r.loss_curve, c.loss_curve);
}

TEST(Checkpoint, WrongVersionRejected) {
  Checkpoint c;
  c.standardizer = nn::Standardizer::identity(1);
  Json j = checkpoint_to_json(c);
  j["format_version"] = 99;
  expect_parse_error_mentions([&] { checkpoint_from_json(j, "ck"); }, "format_version");
}

TEST(Matrix, ShapeMismatchRejected) {
  Json j = matrix_to_json(Eigen::MatrixXd::Ones(2, 3));
  j["rows"] = 4;
  expect_parse_error_mentions([&] { matrix_from_json(j, "m"); }, "m");
}

TEST(DatasetConfigJson, RoundTripAndUnknownKeys) {
  DatasetConfig c = small_config();
  c.archetypes = {"bed", "chair"};
  c.noise.depth_sd = 0.004;
  const DatasetConfig r = dataset_config_from_json(dataset_config_to_json(c));
  EXPECT_EQ(dataset_config_hash(r), dataset_config_hash(c));
  Json j = dataset_config_to_json(c);
  j["colour"] = "red";
  expect_parse_error_mentions([&] { dataset_config_from_json(j); }, "colour");
}

TEST(PairScores, JsonCarriesIndicesScoresAndSource) {
  const std::vector<PartPairScore> s{{0, 1, 0.25, 0.75, ScoreSource::kLearned}};
  const Json j = pair_scores_to_json(s, "abc");
  EXPECT_EQ(j["config_hash"], "abc");
  EXPECT_EQ(j["pairs"][0]["i"], 0);
  EXPECT_EQ(j["pairs"][0]["j"], 1);
  EXPECT_EQ(j["pairs"][0]["symmetry"], 0.25);
  EXPECT_EQ(j["pairs"][0]["adjacency"], 0.75);
  EXPECT_EQ(j["pairs"][0]["source"], "learned");
}

TEST(EquivalenceModeNames, RoundTrip) {
  for (auto m : {EquivalenceMode::kAll48, EquivalenceMode::kProper24}) {
    EXPECT_EQ(equivalence_mode_from_string(to_string(m)), m);
  }
  EXPECT_THROW(equivalence_mode_from_string("all"), ParseError);
}
