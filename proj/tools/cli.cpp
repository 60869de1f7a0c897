#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "structkit/errors.hpp"
#include "structkit/experiment.hpp"
#include "structkit/io.hpp"

namespace structkit::cli {

namespace fs = std::filesystem;

namespace {

// Options every subcommand accepts. Flags win over the config file.
struct Common {
  std::string config;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out;
  std::string data;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "experiment config (JSON)");
  c.seed_opt = app->add_option("--seed", c.seed, "master RNG seed (default 0)");
  app->add_option("--jobs", c.jobs, "worker threads for generation and evaluation")->check(CLI::PositiveNumber);
  c.out_opt = app->add_option("--out", c.out, "output directory");
  app->add_option("--data", c.data, "dataset directory (default <out>/dataset)");
}

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg;
  if (!c.config.empty()) cfg = experiment_config_from_json(read_json_file(c.config), "config");
  if (c.seed_opt->count() > 0) {
    cfg.seed = c.seed;
    cfg.data.seed = c.seed;
  }
  if (c.out_opt->count() > 0) cfg.output_dir = c.out;
  return cfg;
}

fs::path data_dir(const Common& c, const ExperimentConfig& cfg) {
  return c.data.empty() ? fs::path(cfg.output_dir) / "dataset" : fs::path(c.data);
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
  return s;
}

std::vector<std::string> splits_for(const std::string& split) {
  if (split == "all") return {"train", "val", "test"};
  if (split == "train" || split == "val" || split == "test") return {split};
  throw UsageError("unknown split '" + split + "' (train, val, test, all)");
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::vector<std::string> archetypes;
  std::size_t shapes = 0;
  std::size_t views = 0;
  CLI::Option* shapes_opt = nullptr;
  CLI::Option* views_opt = nullptr;
};

int cmd_gen(const Common& c, const GenArgs& a, std::ostream& out) {
  ExperimentConfig cfg = load_config(c);
  if (!a.archetypes.empty()) cfg.data.archetypes = a.archetypes;
  if (a.shapes_opt->count() > 0) cfg.data.shapes = a.shapes;
  if (a.views_opt->count() > 0) cfg.data.views = a.views;
  if (cfg.data.shapes == 0) throw UsageError("--shapes must be at least 1");
  if (cfg.data.views == 0) throw UsageError("--views must be at least 1");
  for (const auto& name : cfg.data.archetypes) {
    const auto& known = known_archetypes();
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw UsageError("unknown archetype '" + name + "'");
    }
  }

  const Dataset ds = make_dataset(cfg.data, c.jobs);
  const fs::path dir = data_dir(c, cfg);
  write_dataset(ds, dir);

  std::map<std::string, std::size_t> per_split;
  for (const auto& s : ds.split) ++per_split[s];
  out << "dataset     " << dir.string() << '\n'
      << "archetypes  " << join(ds.config.archetypes) << '\n'
      << "shapes      " << ds.shapes.size() << " (train " << per_split["train"] << ", val " << per_split["val"]
      << ", test " << per_split["test"] << ")\n"
      << "views       " << ds.config.views << '\n'
      << "samples     " << ds.samples.size() << '\n'
      << "seed        " << ds.config.seed << '\n'
      << "config_hash " << ds.config_hash << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string head;
  std::string loss;
  int epochs = 0;
  bool resume = false;
  bool quiet = false;
  CLI::Option* epochs_opt = nullptr;
};

HeadSettings& settings_of(ExperimentConfig& cfg, HeadKind k) {
  switch (k) {
    case HeadKind::kOrientation: return cfg.orientation;
    case HeadKind::kSize: return cfg.size;
    case HeadKind::kContact: return cfg.contact;
    case HeadKind::kRelation: return cfg.relation;
    case HeadKind::kAbsPosition:
    case HeadKind::kOffset: return cfg.position;
  }
  return cfg.position;
}

fs::path checkpoint_path(const fs::path& dir, HeadKind k) { return dir / (to_string(k) + ".json"); }

int cmd_train(const Common& c, const TrainArgs& a, std::ostream& out) {
  ExperimentConfig cfg = load_config(c);
  const HeadKind kind = head_kind_from_string(a.head);
  if (!a.loss.empty()) {
    try {
      cfg.rotation_loss = nn::rotation_loss_from_string(a.loss);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (a.epochs_opt->count() > 0) settings_of(cfg, kind).epochs = a.epochs;

  const Dataset ds = read_dataset(data_dir(c, cfg));
  const fs::path ck_path = checkpoint_path(fs::path(cfg.output_dir) / "checkpoints", kind);
  std::optional<Checkpoint> resume;
  if (a.resume) resume = read_checkpoint(ck_path);

  const auto progress = [&](int epoch, double loss) {
    if (!a.quiet) out << "epoch " << epoch + 1 << "  loss " << loss << '\n';
  };
  const Checkpoint ck = train_head(ds, cfg, kind, resume, progress);
  write_checkpoint(ck_path, ck);

  std::ostringstream csv;
  csv.precision(17);
  csv << "epoch,loss,config_hash\n";
  for (std::size_t e = 0; e < ck.loss_curve.size(); ++e) {
    csv << e + 1 << ',' << ck.loss_curve[e] << ',' << ck.config_hash << '\n';
  }
  const fs::path curve = fs::path(cfg.output_dir) / "curves" / (to_string(kind) + ".csv");
  write_text_file(curve, csv.str());

  out << "head        " << ck.head << '\n' << "epochs      " << ck.epoch << '\n';
  if (!ck.loss_curve.empty()) out << "final loss  " << ck.loss_curve.back() << '\n';
  if (kind == HeadKind::kOrientation) {
    const auto train = select_samples(ds, std::vector<std::string>{"train"}, cfg.train_archetypes);
    const AnyHead h = head_from_checkpoint(ck);
    out << "train geodesic error " << mean_geodesic_error(h.orientation, orientation_data(ds, train, cfg.loss.mode))
        << " deg\n";
  }
  out << "checkpoint  " << ck_path.string() << '\n'
      << "loss curve  " << curve.string() << '\n'
      << "config_hash " << ck.config_hash << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoints;
  std::string split = "test";
  std::vector<std::string> archetypes;
  bool oracle = false;
};

PipelineHeads load_heads(const fs::path& dir) {
  PipelineHeads heads;
  const HeadKind needed[] = {HeadKind::kOrientation, HeadKind::kSize, HeadKind::kContact, HeadKind::kRelation};
  for (HeadKind k : needed) {
    const fs::path p = checkpoint_path(dir, k);
    if (!fs::exists(p)) throw IoError("missing checkpoint for head '" + to_string(k) + "': " + p.string());
    const AnyHead h = head_from_checkpoint(read_checkpoint(p));
    if (h.kind != k) throw ParseError(p.string() + ": holds a " + to_string(h.kind) + " head");
    switch (k) {
      case HeadKind::kOrientation: heads.orientation = h.orientation; break;
      case HeadKind::kSize: heads.size = h.size; break;
      case HeadKind::kContact: heads.contact = h.contact; break;
      default: heads.relation = h.mlp; break;
    }
  }
  return heads;
}

int cmd_eval(const Common& c, const EvalArgs& a, std::ostream& out) {
  const ExperimentConfig cfg = load_config(c);
  const auto splits = splits_for(a.split);
  const std::vector<std::string> archetypes = a.archetypes.empty() ? cfg.test_archetypes : a.archetypes;

  PipelineHeads heads;
  if (!a.oracle) {
    heads = load_heads(a.checkpoints.empty() ? fs::path(cfg.output_dir) / "checkpoints" : fs::path(a.checkpoints));
  }
  const Dataset ds = read_dataset(data_dir(c, cfg));
  const auto samples = select_samples(ds, splits, archetypes);
  if (samples.empty()) {
    throw std::runtime_error("no samples in split '" + a.split + "' for archetypes " + join(archetypes));
  }

  const MetricReport report = evaluate_pipeline(ds, samples, a.oracle ? EvalMode::kOracle : EvalMode::kTrained,
                                                a.oracle ? nullptr : &heads, cfg, c.jobs);
  Json j = report_to_json(report);
  j["mode"] = a.oracle ? "oracle" : "trained";
  j["split"] = a.split;
  j["dataset_config_hash"] = ds.config_hash;

  const fs::path dir = fs::path(cfg.output_dir) / "eval";
  const std::string stem = a.oracle ? "metrics_oracle" : "metrics";
  write_json_file(dir / (stem + ".json"), j);
  const std::string table = format_report_table(report) + "config_hash " + report.config.config_hash + '\n';
  write_text_file(dir / (stem + ".txt"), table);
  out << table << "report      " << (dir / (stem + ".json")).string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string name;
};

int cmd_ablate(const Common& c, const AblateArgs& a, std::ostream& out) {
  const ExperimentConfig cfg = load_config(c);
  const auto& names = ablation_names();
  if (std::find(names.begin(), names.end(), a.name) == names.end()) {
    throw UsageError("unknown ablation '" + a.name + "'");
  }
  const Dataset ds = read_dataset(data_dir(c, cfg));
  // Arms are compared on held-out shapes of the training archetypes.
  const auto train = select_samples(ds, std::vector<std::string>{"train"}, cfg.train_archetypes);
  const auto test = select_samples(ds, std::vector<std::string>{"test"}, cfg.train_archetypes);
  if (train.empty() || test.empty()) {
    throw std::runtime_error("ablation needs train and test samples of " + join(cfg.train_archetypes));
  }
  const AblationTable t = run_ablation(a.name, ds, train, test, cfg, cfg.seed);
  Json j = t.to_json();
  j["format_version"] = kFormatVersion;
  j["seed"] = cfg.seed;
  j["config_hash"] = experiment_config_hash(cfg);
  const fs::path path = fs::path(cfg.output_dir) / "ablations" / (a.name + ".json");
  write_json_file(path, j);
  out << t.format() << "config_hash " << experiment_config_hash(cfg) << '\n' << "table       " << path.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ExportArgs {
  std::string shape;
  std::string obj;
};

int cmd_export(const ExportArgs& a, std::ostream& out) {
  const std::string text = read_text_file(a.shape);
  const PartShape shape = shape_from_json(parse_json(text, a.shape), "shape");
  std::vector<std::string> names;
  for (std::size_t i = 0; i < shape.parts.size(); ++i) {
    const std::string tag = i < shape.tags.size() && !shape.tags[i].empty() ? shape.tags[i] : "part";
    names.push_back(tag + "_" + std::to_string(i));
  }
  std::ostringstream os;
  os << "# " << (shape.id.empty() ? fs::path(a.shape).stem().string() : shape.id) << '\n'
     << "# source_hash " << fnv1a_hex(text) << '\n';
  write_obj(os, shape.parts, names);
  const fs::path path = a.obj.empty() ? fs::path(a.shape).replace_extension(".obj") : fs::path(a.obj);
  write_text_file(path, os.str());
  out << "wrote " << path.string() << " (" << shape.parts.size() << " parts)\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Part-structure recovery from single views: data generation, training, evaluation"};
  app.name("structkit");
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, ablate_c;
  GenArgs gen_a;
  TrainArgs train_a;
  EvalArgs eval_a;
  AblateArgs ablate_a;
  ExportArgs export_a;

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  add_common(gen, gen_c);
  gen->add_option("--archetypes", gen_a.archetypes, "comma-separated archetypes")->delimiter(',');
  gen_a.shapes_opt = gen->add_option("--shapes", gen_a.shapes, "number of shapes");
  gen_a.views_opt = gen->add_option("--views", gen_a.views, "views per shape");

  CLI::App* train = app.add_subcommand("train", "train one head");
  add_common(train, train_c);
  train->add_option("--head", train_a.head, "orientation, size, contact, relation, abs-position, offset")->required();
  train->add_option("--loss", train_a.loss, "rotation loss: mse, minn, moe-minn");
  train_a.epochs_opt = train->add_option("--epochs", train_a.epochs, "total epochs")->check(CLI::PositiveNumber);
  train->add_flag("--resume", train_a.resume, "continue from the existing checkpoint");
  train->add_flag("--quiet", train_a.quiet, "no per-epoch lines");

  CLI::App* eval = app.add_subcommand("eval", "run the full pipeline and score it");
  add_common(eval, eval_c);
  eval->add_option("--checkpoints", eval_a.checkpoints, "checkpoint directory (default <out>/checkpoints)");
  eval->add_option("--split", eval_a.split, "train, val, test or all");
  eval->add_option("--archetypes", eval_a.archetypes, "comma-separated archetypes (default: test archetypes)")
      ->delimiter(',');
  eval->add_flag("--oracle", eval_a.oracle, "replace every learned stage by ground truth");

  CLI::App* ablate = app.add_subcommand("ablate", "train and compare the arms of an ablation");
  add_common(ablate, ablate_c);
  ablate->add_option("--name", ablate_a.name, "rotation-loss, group-size, relative-position, "
                                              "joint-vs-sequential, contact-vs-offset")
      ->required();

  CLI::App* exp = app.add_subcommand("export", "write a shape file as OBJ");
  exp->add_option("shape", export_a.shape, "shape JSON")->required();
  exp->add_option("--out", export_a.obj, "OBJ path (default: shape path with .obj)");

  std::vector<std::string> argv_store{"structkit"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_c, gen_a, out);
    if (train->parsed()) return cmd_train(train_c, train_a, out);
    if (eval->parsed()) return cmd_eval(eval_c, eval_a, out);
    if (ablate->parsed()) return cmd_ablate(ablate_c, ablate_a, out);
    if (exp->parsed()) return cmd_export(export_a, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const TrainingDiverged& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace structkit::cli
