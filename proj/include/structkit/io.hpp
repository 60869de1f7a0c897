#pragma once

#include <json.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "structkit/evaluation.hpp"
#include "structkit/nets.hpp"
#include "structkit/relations.hpp"
#include "structkit/shape.hpp"
#include "structkit/synth.hpp"

namespace structkit {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

/// 64-bit FNV-1a, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// Hash of the canonical (key-sorted, compact) serialization.
std::string config_hash(const Json& config);
std::string dataset_config_hash(const DatasetConfig& cfg);

std::string to_string(EquivalenceMode m);
EquivalenceMode equivalence_mode_from_string(const std::string& s);

// Plain-data conversions. Readers throw ParseError naming the offending
// field, e.g. "parts[2].size: expected 3 numbers".
Json vec3_to_json(const Vec3& v);
Json box_to_json(const OrientedBox& b);
OrientedBox box_from_json(const Json& j, const std::string& where);
Json shape_to_json(const PartShape& s);
PartShape shape_from_json(const Json& j, const std::string& where = "shape");
Json camera_to_json(const CameraPose& c);
CameraPose camera_from_json(const Json& j, const std::string& where);
Json dataset_config_to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const Json& j, const std::string& where = "config");

/// Parses JSON text; syntax errors report line and column of `source`.
Json parse_json(std::string_view text, const std::string& source);

std::string read_text_file(const std::filesystem::path& path);
/// Creates missing parent directories. Throws IoError when not writable.
void write_text_file(const std::filesystem::path& path, std::string_view text);
Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

PartShape read_shape_file(const std::filesystem::path& path);

/// Layout: manifest.json, shapes/<id>.json, views/<id>_v<k>.json.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

Json report_to_json(const MetricReport& r);
Json pair_scores_to_json(std::span<const PartPairScore> scores, const std::string& config_hash);

Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& where);

/// Everything needed to rebuild a head and resume its training.
struct Checkpoint {
  int version = kFormatVersion;
  std::string head;
  Json head_config;
  Json train_config;
  std::string config_hash;
  nn::Standardizer standardizer;
  double vertex_scale = 1.0;
  std::vector<Eigen::MatrixXd> params;
  nn::AdamState adam;
  int epoch = 0;  // epochs completed
  std::vector<double> loss_curve;
};

Json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const Json& j, const std::string& where);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace structkit
