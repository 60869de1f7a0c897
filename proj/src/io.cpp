#include "structkit/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "structkit/errors.hpp"
#include "structkit/rng.hpp"

namespace structkit {

namespace fs = std::filesystem;

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const Json& config) { return fnv1a_hex(config.dump()); }

std::string dataset_config_hash(const DatasetConfig& cfg) { return config_hash(dataset_config_to_json(cfg)); }

std::string to_string(EquivalenceMode m) { return m == EquivalenceMode::kAll48 ? "all-48" : "proper-24"; }

EquivalenceMode equivalence_mode_from_string(const std::string& s) {
  if (s == "all-48" || s == "all48" || s == "48") return EquivalenceMode::kAll48;
  if (s == "proper-24" || s == "proper24" || s == "24") return EquivalenceMode::kProper24;
  throw ParseError("unknown equivalence mode: " + s);
}

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) { throw ParseError(where + ": " + what); }

const Json& field(const Json& j, const std::string& key, const std::string& where) {
  if (!j.is_object()) fail(where, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) fail(where, "missing field '" + key + "'");
  return *it;
}

double number(const Json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  return j.get<double>();
}

std::uint64_t unsigned_number(const Json& j, const std::string& where) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
    fail(where, "expected a nonnegative integer");
  }
  return j.get<std::uint64_t>();
}

std::string text(const Json& j, const std::string& where) {
  if (!j.is_string()) fail(where, "expected a string");
  return j.get<std::string>();
}

bool boolean(const Json& j, const std::string& where) {
  if (!j.is_boolean()) fail(where, "expected true or false");
  return j.get<bool>();
}

template <std::size_t N>
std::array<double, N> numbers(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != N) fail(where, "expected " + std::to_string(N) + " numbers");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = number(j[i], where + "[" + std::to_string(i) + "]");
  return out;
}

Vec3 vec3(const Json& j, const std::string& where) {
  const auto a = numbers<3>(j, where);
  return {a[0], a[1], a[2]};
}

const Json& array_field(const Json& j, const std::string& key, const std::string& where) {
  const Json& a = field(j, key, where);
  if (!a.is_array()) fail(where + "." + key, "expected an array");
  return a;
}

std::size_t index_in(const Json& j, std::size_t n, const std::string& where) {
  const auto v = unsigned_number(j, where);
  if (v >= n) fail(where, "index " + std::to_string(v) + " out of range");
  return static_cast<std::size_t>(v);
}

Json weights_json(const std::array<double, 8>& w) { return Json(std::vector<double>(w.begin(), w.end())); }

}  // namespace

Json vec3_to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Json box_to_json(const OrientedBox& b) {
  return Json{{"center", vec3_to_json(b.center)},
              {"size", vec3_to_json(b.size)},
              {"quaternion", Json::array({b.rotation.w(), b.rotation.x(), b.rotation.y(), b.rotation.z()})}};
}

OrientedBox box_from_json(const Json& j, const std::string& where) {
  const Vec3 c = vec3(field(j, "center", where), where + ".center");
  const Vec3 s = vec3(field(j, "size", where), where + ".size");
  const auto q = numbers<4>(field(j, "quaternion", where), where + ".quaternion");
  for (int k = 0; k < 3; ++k) {
    if (!(s[k] > 0.0)) fail(where + ".size", "edge lengths must be positive");
  }
  try {
    return OrientedBox(c, s, UnitQuaternion::normalized(q[0], q[1], q[2], q[3]));
  } catch (const GeometryError& e) {
    fail(where + ".quaternion", e.what());
  }
}

Json shape_to_json(const PartShape& s) {
  Json parts = Json::array();
  for (std::size_t i = 0; i < s.parts.size(); ++i) {
    Json p = box_to_json(s.parts[i]);
    p["tag"] = i < s.tags.size() ? s.tags[i] : std::string();
    parts.push_back(std::move(p));
  }
  Json edges = Json::array();
  for (const auto& [a, b] : s.edges) edges.push_back(Json::array({a, b}));
  Json contacts = Json::array();
  for (const auto& c : s.contacts) {
    contacts.push_back(Json{{"a", c.a},
                            {"b", c.b},
                            {"point", vec3_to_json(c.point)},
                            {"weights_a", weights_json(c.weights_a)},
                            {"weights_b", weights_json(c.weights_b)}});
  }
  return Json{{"id", s.id},
              {"archetype", s.archetype},
              {"parts", std::move(parts)},
              {"symmetry_groups", s.symmetry_groups},
              {"edges", std::move(edges)},
              {"contacts", std::move(contacts)}};
}

PartShape shape_from_json(const Json& j, const std::string& where) {
  PartShape s;
  if (!j.is_object()) fail(where, "expected an object");
  if (j.contains("id")) s.id = text(j["id"], where + ".id");
  if (j.contains("archetype")) s.archetype = text(j["archetype"], where + ".archetype");
  const Json& parts = array_field(j, "parts", where);
  if (parts.empty()) fail(where + ".parts", "needs at least one part");
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::string w = where + ".parts[" + std::to_string(i) + "]";
    s.parts.push_back(box_from_json(parts[i], w));
    s.tags.push_back(parts[i].contains("tag") ? text(parts[i]["tag"], w + ".tag") : std::string());
  }
  const std::size_t n = s.parts.size();
  if (j.contains("symmetry_groups")) {
    const Json& groups = array_field(j, "symmetry_groups", where);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const std::string w = where + ".symmetry_groups[" + std::to_string(g) + "]";
      if (!groups[g].is_array()) fail(w, "expected an array");
      std::vector<std::size_t> members;
      for (std::size_t k = 0; k < groups[g].size(); ++k) {
        members.push_back(index_in(groups[g][k], n, w + "[" + std::to_string(k) + "]"));
      }
      s.symmetry_groups.push_back(std::move(members));
    }
  }
  if (j.contains("edges")) {
    const Json& edges = array_field(j, "edges", where);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const std::string w = where + ".edges[" + std::to_string(e) + "]";
      if (!edges[e].is_array() || edges[e].size() != 2) fail(w, "expected a pair of part indices");
      s.edges.emplace_back(index_in(edges[e][0], n, w + "[0]"), index_in(edges[e][1], n, w + "[1]"));
    }
  }
  if (j.contains("contacts")) {
    const Json& contacts = array_field(j, "contacts", where);
    for (std::size_t e = 0; e < contacts.size(); ++e) {
      const std::string w = where + ".contacts[" + std::to_string(e) + "]";
      ContactPoint c;
      c.a = index_in(field(contacts[e], "a", w), n, w + ".a");
      c.b = index_in(field(contacts[e], "b", w), n, w + ".b");
      c.point = vec3(field(contacts[e], "point", w), w + ".point");
      c.weights_a = numbers<8>(field(contacts[e], "weights_a", w), w + ".weights_a");
      c.weights_b = numbers<8>(field(contacts[e], "weights_b", w), w + ".weights_b");
      s.contacts.push_back(c);
    }
  }
  return s;
}

Json camera_to_json(const CameraPose& c) {
  return Json{{"position", vec3_to_json(c.position)},
              {"look_at", vec3_to_json(c.look_at)},
              {"up", vec3_to_json(c.up)},
              {"vfov_deg", c.vfov_deg}};
}

CameraPose camera_from_json(const Json& j, const std::string& where) {
  CameraPose c;
  c.position = vec3(field(j, "position", where), where + ".position");
  c.look_at = vec3(field(j, "look_at", where), where + ".look_at");
  c.up = vec3(field(j, "up", where), where + ".up");
  c.vfov_deg = number(field(j, "vfov_deg", where), where + ".vfov_deg");
  return c;
}

Json dataset_config_to_json(const DatasetConfig& c) {
  return Json{{"shapes", c.shapes},
              {"archetypes", c.archetypes},
              {"views", c.views},
              {"seed", c.seed},
              {"train_fraction", c.train_fraction},
              {"val_fraction", c.val_fraction},
              {"camera",
               {{"min_elevation_deg", c.camera.min_elevation_deg},
                {"max_elevation_deg", c.camera.max_elevation_deg},
                {"min_distance", c.camera.min_distance},
                {"max_distance", c.camera.max_distance},
                {"roll_sd_deg", c.camera.roll_sd_deg},
                {"vfov_deg", c.camera.vfov_deg}}},
              {"noise",
               {{"pixel_sd", c.noise.pixel_sd},
                {"depth_sd", c.noise.depth_sd},
                {"depth_scale_sd", c.noise.depth_scale_sd},
                {"part_scale_sd", c.noise.part_scale_sd},
                {"occluded_noise_mult", c.noise.occluded_noise_mult},
                {"occlusion_threshold", c.noise.occlusion_threshold},
                {"visibility_samples", c.noise.visibility_samples},
                {"occlusion", c.noise.occlusion}}}};
}

namespace {

// Every key of `j` must also appear in `reference`, recursively for objects.
void reject_unknown_keys(const Json& j, const Json& reference, const std::string& where) {
  if (!j.is_object()) fail(where, "expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!reference.contains(k)) fail(where, "unknown field '" + k + "'");
    if (reference[k].is_object()) reject_unknown_keys(v, reference[k], where + "." + k);
  }
}

}  // namespace

DatasetConfig dataset_config_from_json(const Json& j, const std::string& where) {
  DatasetConfig c;
  reject_unknown_keys(j, dataset_config_to_json(c), where);
  const auto num = [&](const Json& obj, const std::string& key, const std::string& w, double& out) {
    if (obj.contains(key)) out = number(obj[key], w + "." + key);
  };
  const auto count = [&](const Json& obj, const std::string& key, const std::string& w, std::size_t& out) {
    if (obj.contains(key)) out = static_cast<std::size_t>(unsigned_number(obj[key], w + "." + key));
  };
  count(j, "shapes", where, c.shapes);
  count(j, "views", where, c.views);
  if (j.contains("seed")) c.seed = unsigned_number(j["seed"], where + ".seed");
  if (j.contains("archetypes")) {
    const Json& a = array_field(j, "archetypes", where);
    c.archetypes.clear();
    for (std::size_t i = 0; i < a.size(); ++i) {
      c.archetypes.push_back(text(a[i], where + ".archetypes[" + std::to_string(i) + "]"));
    }
  }
  num(j, "train_fraction", where, c.train_fraction);
  num(j, "val_fraction", where, c.val_fraction);
  if (j.contains("camera")) {
    const Json& cam = j["camera"];
    const std::string w = where + ".camera";
    num(cam, "min_elevation_deg", w, c.camera.min_elevation_deg);
    num(cam, "max_elevation_deg", w, c.camera.max_elevation_deg);
    num(cam, "min_distance", w, c.camera.min_distance);
    num(cam, "max_distance", w, c.camera.max_distance);
    num(cam, "roll_sd_deg", w, c.camera.roll_sd_deg);
    num(cam, "vfov_deg", w, c.camera.vfov_deg);
  }
  if (j.contains("noise")) {
    const Json& nz = j["noise"];
    const std::string w = where + ".noise";
    num(nz, "pixel_sd", w, c.noise.pixel_sd);
    num(nz, "depth_sd", w, c.noise.depth_sd);
    num(nz, "depth_scale_sd", w, c.noise.depth_scale_sd);
    num(nz, "part_scale_sd", w, c.noise.part_scale_sd);
    num(nz, "occluded_noise_mult", w, c.noise.occluded_noise_mult);
    num(nz, "occlusion_threshold", w, c.noise.occlusion_threshold);
    count(nz, "visibility_samples", w, c.noise.visibility_samples);
    if (nz.contains("occlusion")) c.noise.occlusion = boolean(nz["occlusion"], w + ".occlusion");
  }
  return c;
}

Json parse_json(std::string_view body, const std::string& source) {
  try {
    return Json::parse(body.begin(), body.end());
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, body.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (body[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": malformed JSON");
  }
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view body) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

Json read_json_file(const fs::path& path) { return parse_json(read_text_file(path), path.string()); }

void write_json_file(const fs::path& path, const Json& j) { write_text_file(path, j.dump(1) + "\n"); }

PartShape read_shape_file(const fs::path& path) { return shape_from_json(read_json_file(path), path.filename().string()); }

namespace {

std::string view_file_name(const std::string& id, std::size_t view) { return id + "_v" + std::to_string(view) + ".json"; }

Json observation_to_json(const ViewObservation& o) {
  Json parts = Json::array();
  for (const auto& p : o.parts) {
    Json corners = Json::array();
    for (const auto& c : p.corners) corners.push_back(vec3_to_json(c));
    parts.push_back(Json{{"corners", std::move(corners)}, {"visibility", p.visibility}, {"occluded", p.occluded}});
  }
  Json feats = Json::array();
  for (const auto& f : o.features) feats.push_back(std::vector<double>(f.data(), f.data() + f.size()));
  return Json{{"camera", camera_to_json(o.camera)}, {"parts", std::move(parts)}, {"features", std::move(feats)}};
}

ViewObservation observation_from_json(const Json& j, const std::string& where) {
  ViewObservation o;
  o.camera = camera_from_json(field(j, "camera", where), where + ".camera");
  const Json& parts = array_field(j, "parts", where);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::string w = where + ".parts[" + std::to_string(i) + "]";
    PartObservation p;
    const Json& corners = field(parts[i], "corners", w);
    if (!corners.is_array() || corners.size() != 8) fail(w + ".corners", "expected 8 points");
    for (std::size_t k = 0; k < 8; ++k) p.corners[k] = vec3(corners[k], w + ".corners[" + std::to_string(k) + "]");
    p.visibility = number(field(parts[i], "visibility", w), w + ".visibility");
    p.occluded = boolean(field(parts[i], "occluded", w), w + ".occluded");
    o.parts.push_back(p);
  }
  const Json& feats = array_field(j, "features", where);
  if (feats.size() != o.parts.size()) fail(where + ".features", "one feature row per part expected");
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const std::string w = where + ".features[" + std::to_string(i) + "]";
    if (!feats[i].is_array() || feats[i].size() != static_cast<std::size_t>(kPartFeatureDim)) {
      fail(w, "expected " + std::to_string(kPartFeatureDim) + " numbers");
    }
    Eigen::VectorXd f(kPartFeatureDim);
    for (int k = 0; k < kPartFeatureDim; ++k) f[k] = number(feats[i][k], w);
    o.features.push_back(f);
  }
  return o;
}

}  // namespace

void write_dataset(const Dataset& ds, const fs::path& dir) {
  const std::size_t views = ds.config.views;
  Json shapes = Json::array();
  Json seeds = Json::array();
  std::size_t counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < ds.shapes.size(); ++i) {
    const PartShape& s = ds.shapes[i];
    Json sj = shape_to_json(s);
    sj["config_hash"] = ds.config_hash;
    sj["format_version"] = kFormatVersion;
    sj["split"] = ds.split[i];
    write_json_file(dir / "shapes" / (s.id + ".json"), sj);
    Json view_files = Json::array();
    for (std::size_t v = 0; v < views; ++v) {
      const ViewSample& vs = ds.samples[i * views + v];
      Json vj = observation_to_json(vs.observation);
      vj["config_hash"] = ds.config_hash;
      vj["format_version"] = kFormatVersion;
      vj["shape_id"] = s.id;
      vj["shape_index"] = vs.shape_index;
      vj["view"] = vs.view;
      vj["label"] = shape_to_json(vs.label);
      const std::string name = view_file_name(s.id, v);
      write_json_file(dir / "views" / name, vj);
      view_files.push_back("views/" + name);
    }
    shapes.push_back(Json{{"id", s.id},
                          {"archetype", s.archetype},
                          {"split", ds.split[i]},
                          {"file", "shapes/" + s.id + ".json"},
                          {"views", std::move(view_files)}});
    seeds.push_back(derive_seed(ds.config.seed, i));
    counts[ds.split[i] == "train" ? 0 : ds.split[i] == "val" ? 1 : 2]++;
  }
  const Json manifest{{"format_version", kFormatVersion},
                      {"config", dataset_config_to_json(ds.config)},
                      {"config_hash", ds.config_hash},
                      {"counts",
                       {{"shapes", ds.shapes.size()},
                        {"views_per_shape", views},
                        {"samples", ds.samples.size()},
                        {"train", counts[0]},
                        {"val", counts[1]},
                        {"test", counts[2]}}},
                      {"seeds", {{"master", ds.config.seed}, {"shapes", std::move(seeds)}}},
                      {"shapes", std::move(shapes)}};
  write_json_file(dir / "manifest.json", manifest);
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) throw IoError("no dataset manifest at " + mpath.string());
  const Json m = read_json_file(mpath);
  const std::string where = "manifest.json";
  const auto version = unsigned_number(field(m, "format_version", where), where + ".format_version");
  if (version != static_cast<std::uint64_t>(kFormatVersion)) {
    fail(where + ".format_version", "unsupported version " + std::to_string(version));
  }
  Dataset ds;
  ds.config = dataset_config_from_json(field(m, "config", where), where + ".config");
  ds.config_hash = text(field(m, "config_hash", where), where + ".config_hash");
  const Json& shapes = array_field(m, "shapes", where);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const std::string w = where + ".shapes[" + std::to_string(i) + "]";
    const std::string file = text(field(shapes[i], "file", w), w + ".file");
    const Json sj = read_json_file(dir / file);
    PartShape s = shape_from_json(sj, file);
    ds.split.push_back(text(field(shapes[i], "split", w), w + ".split"));
    const Json& views = array_field(shapes[i], "views", w);
    for (std::size_t v = 0; v < views.size(); ++v) {
      const std::string vfile = text(views[v], w + ".views[" + std::to_string(v) + "]");
      const Json vj = read_json_file(dir / vfile);
      ViewSample vs;
      vs.shape_index = i;
      vs.view = v;
      vs.observation = observation_from_json(vj, vfile);
      vs.label = shape_from_json(field(vj, "label", vfile), vfile + ".label");
      ds.samples.push_back(std::move(vs));
    }
    ds.shapes.push_back(std::move(s));
  }
  return ds;
}

namespace {

Json metrics_json(const MetricRow& r) {
  return Json{{"count", r.count},
              {"emd_aligned", r.mean.emd_aligned},
              {"emd_raw", r.mean.emd_raw},
              {"chamfer", r.mean.chamfer},
              {"geodesic_deg", r.mean.geodesic},
              {"size_l1", r.mean.size_l1},
              {"position_l1", r.mean.position_l1}};
}

}  // namespace

Json report_to_json(const MetricReport& r) {
  Json cats = Json::object();
  for (const auto& [name, row] : r.categories) cats[name] = metrics_json(row);
  return Json{{"format_version", kFormatVersion},
              {"config_hash", r.config.config_hash},
              {"config",
               {{"per_box", r.config.per_box},
                {"points", r.config.points},
                {"seed", r.config.seed},
                {"approx_iterations", r.config.approx_iterations},
                {"equivalence", to_string(r.config.mode)}}},
              {"categories", std::move(cats)},
              {"overall", metrics_json(r.overall)}};
}

Json pair_scores_to_json(std::span<const PartPairScore> scores, const std::string& hash) {
  Json rows = Json::array();
  for (const auto& s : scores) {
    rows.push_back(Json{{"i", s.i},
                        {"j", s.j},
                        {"symmetry", s.symmetry},
                        {"adjacency", s.adjacency},
                        {"source", to_string(s.source)}});
  }
  return Json{{"format_version", kFormatVersion}, {"config_hash", hash}, {"pairs", std::move(rows)}};
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& where) {
  const auto rows = static_cast<Eigen::Index>(unsigned_number(field(j, "rows", where), where + ".rows"));
  const auto cols = static_cast<Eigen::Index>(unsigned_number(field(j, "cols", where), where + ".cols"));
  const Json& data = array_field(j, "data", where);
  if (data.size() != static_cast<std::size_t>(rows * cols)) fail(where + ".data", "length does not match shape");
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number(data[k++], where + ".data");
  }
  return m;
}

Json checkpoint_to_json(const Checkpoint& c) {
  Json params = Json::array();
  for (const auto& p : c.params) params.push_back(matrix_to_json(p));
  Json m = Json::array();
  Json v = Json::array();
  for (const auto& x : c.adam.m) m.push_back(matrix_to_json(x));
  for (const auto& x : c.adam.v) v.push_back(matrix_to_json(x));
  return Json{{"format_version", c.version},
              {"head", c.head},
              {"head_config", c.head_config},
              {"train_config", c.train_config},
              {"config_hash", c.config_hash},
              {"standardizer",
               {{"mean", matrix_to_json(c.standardizer.mean)}, {"scale", matrix_to_json(c.standardizer.scale)}}},
              {"vertex_scale", c.vertex_scale},
              {"params", std::move(params)},
              {"adam", {{"step", c.adam.step}, {"m", std::move(m)}, {"v", std::move(v)}}},
              {"epoch", c.epoch},
              {"loss_curve", c.loss_curve}};
}

Checkpoint checkpoint_from_json(const Json& j, const std::string& where) {
  Checkpoint c;
  c.version = static_cast<int>(unsigned_number(field(j, "format_version", where), where + ".format_version"));
  if (c.version != kFormatVersion) fail(where + ".format_version", "unsupported version " + std::to_string(c.version));
  c.head = text(field(j, "head", where), where + ".head");
  c.head_config = field(j, "head_config", where);
  c.train_config = field(j, "train_config", where);
  c.config_hash = text(field(j, "config_hash", where), where + ".config_hash");
  const Json& st = field(j, "standardizer", where);
  c.standardizer.mean = matrix_from_json(field(st, "mean", where + ".standardizer"), where + ".standardizer.mean");
  c.standardizer.scale = matrix_from_json(field(st, "scale", where + ".standardizer"), where + ".standardizer.scale");
  c.vertex_scale = number(field(j, "vertex_scale", where), where + ".vertex_scale");
  const Json& params = array_field(j, "params", where);
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.params.push_back(matrix_from_json(params[i], where + ".params[" + std::to_string(i) + "]"));
  }
  const Json& adam = field(j, "adam", where);
  c.adam.step = static_cast<long long>(unsigned_number(field(adam, "step", where + ".adam"), where + ".adam.step"));
  for (const auto& x : array_field(adam, "m", where + ".adam")) c.adam.m.push_back(matrix_from_json(x, where + ".adam.m"));
  for (const auto& x : array_field(adam, "v", where + ".adam")) c.adam.v.push_back(matrix_from_json(x, where + ".adam.v"));
  c.epoch = static_cast<int>(unsigned_number(field(j, "epoch", where), where + ".epoch"));
  for (const auto& x : array_field(j, "loss_curve", where)) c.loss_curve.push_back(number(x, where + ".loss_curve"));
  return c;
}

void write_checkpoint(const fs::path& path, const Checkpoint& c) { write_text_file(path, checkpoint_to_json(c).dump() + "\n"); }

Checkpoint read_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("checkpoint not found: " + path.string());
  return checkpoint_from_json(read_json_file(path), path.filename().string());
}

}  // namespace structkit
