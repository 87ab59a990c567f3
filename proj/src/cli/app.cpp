#include "n2/cli/app.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "n2/cli/config.hpp"
#include "n2/data/dicom.hpp"
#include "n2/data/manifest.hpp"
#include "n2/data/phantom.hpp"
#include "n2/error.hpp"
#include "n2/eval/compare.hpp"
#include "n2/eval/report.hpp"
#include "n2/random.hpp"
#include "n2/train/inference.hpp"
#include "n2/train/trainer.hpp"

namespace n2::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kSections{"synth", "ingest", "infer", "eval"};

struct Invocation {
  std::string subcommand;
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output;
  // Subcommand flags.
  std::optional<std::int64_t> subjects;
  std::optional<std::uint64_t> seed;
  std::string input, manifest, resume, checkpoint, volume, run_a, run_b;
};

/// Keys a subcommand reads, for its --help.
std::vector<std::string> honored_keys(const std::string& sub) {
  const json defaults = default_config();
  if (sub == "train") {
    json train = defaults;
    for (const auto& s : kSections) train.erase(s);
    return describe_keys(train);
  }
  std::vector<std::string> keys;
  if (defaults.contains(sub))
    for (auto& k : describe_keys(defaults.at(sub))) keys.push_back(sub + "." + k);
  if (sub == "ingest")
    keys.push_back("model.image_size (default " + defaults.at("model").at("image_size").dump() + ")");
  return keys;
}

std::string help_footer(const std::string& sub) {
  const auto keys = honored_keys(sub);
  std::string s = "Config keys (set in --config or with --set key=value):\n";
  if (keys.empty()) s += "  (none)\n";
  for (const auto& k : keys) s += "  " + k + "\n";
  return s;
}

TrainConfig train_config(const json& config) {
  json train = config;
  for (const auto& s : kSections) train.erase(s);
  try {
    auto c = train.get<TrainConfig>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid training config: ") + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  os << std::setw(2) << j << '\n';
  if (!os) throw DataError("cannot write " + path.string());
}

GatingMode gating_from(const json& section, GatingMode fallback) {
  const auto text = section.at("gating_mode").get<std::string>();
  return text.empty() ? fallback : parse_gating_mode(text);
}

double threshold_from(const json& section, double fallback) {
  const auto& t = section.at("gating_threshold");
  return t.is_null() ? fallback : t.get<double>();
}

void run_synth(const Invocation&, const json& config, const fs::path& out_dir, std::ostream& out) {
  const auto& s = config.at("synth");
  const auto n = s.at("subjects").get<std::int64_t>();
  if (n < 1) throw ConfigError("synth.subjects must be >= 1");
  const auto seed = s.at("seed").get<std::uint64_t>();
  Manifest manifest;
  const auto splits = assign_splits(static_cast<std::size_t>(n), s.at("val_fraction").get<double>(),
                                    s.at("test_fraction").get<double>());
  for (std::int64_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "phantom_%03lld", static_cast<long long>(i));
    auto spec = PhantomSpec::pelvis(s.at("depth").get<std::int64_t>(), s.at("height").get<std::int64_t>(),
                                    s.at("width").get<std::int64_t>(),
                                    derive_seed(seed, {hash_string("phantom"), static_cast<std::uint64_t>(i)}));
    spec.noise_sigma = s.at("noise_sigma").get<double>();
    spec.validate();
    const auto volume = generate_phantom(spec, id);
    save_volume(out_dir / "subjects" / id, volume);
    if (s.at("export_dicom").get<bool>())
      export_subject_dicom(out_dir / "dicom" / id, volume, s.at("hu_scale").get<double>());
    if (manifest.class_names.empty()) manifest.class_names = volume.class_names;
    manifest.subjects.push_back({id, "subjects/" + std::string(id), splits[static_cast<std::size_t>(i)]});
  }
  save_manifest(out_dir / "manifest.json", manifest);
  out << "wrote " << n << " phantom subjects and " << (out_dir / "manifest.json").string() << '\n';
}

void run_ingest(const Invocation& inv, const json& config, const fs::path& out_dir, std::ostream& out,
                std::ostream& err) {
  if (inv.input.empty()) throw ConfigError("ingest requires --input");
  const fs::path input(inv.input);
  if (!fs::is_directory(input)) throw DataError("input directory not found: " + input.string());
  const auto& s = config.at("ingest");
  const auto classes = s.at("classes").get<std::vector<std::string>>();
  if (classes.empty()) throw ConfigError("ingest.classes must name at least one structure");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(input))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw DataError("no subject directories in " + input.string());

  const auto size = config.at("model").at("image_size").get<std::array<std::int64_t, 2>>();
  const auto h = size[0], w = size[1];
  Manifest manifest;
  manifest.class_names = classes;
  const auto splits =
      assign_splits(dirs.size(), s.at("val_fraction").get<double>(), s.at("test_fraction").get<double>());
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    const auto id = dirs[i].filename().string();
    std::vector<std::string> warnings;
    auto volume = ingest_subject(dirs[i], id, classes, &warnings);
    for (const auto& msg : warnings) err << "warning: " << id << ": " << msg << '\n';
    if (s.at("resample").get<bool>() && (volume.height != h || volume.width != w))
      volume = resample_slices(volume, h, w);
    save_volume(out_dir / "subjects" / id, volume);
    manifest.subjects.push_back({id, "subjects/" + id, splits[i]});
  }
  save_manifest(out_dir / "manifest.json", manifest);
  out << "ingested " << dirs.size() << " subjects into " << out_dir.string() << '\n';
}

void run_train(const Invocation& inv, const json& config, const fs::path& out_dir, std::ostream& out) {
  if (inv.manifest.empty()) throw ConfigError("train requires --manifest");
  const auto tc = train_config(config);
  const auto manifest = load_manifest(inv.manifest);
  TrainOptions options;
  options.log = &out;
  if (!inv.resume.empty()) options.resume = fs::path(inv.resume);
  const auto result = train(manifest, tc, out_dir, options);
  out << "final checkpoint " << result.final_checkpoint.string() << '\n';
}

void run_infer(const Invocation& inv, const json& config, const fs::path& out_dir, std::ostream& out) {
  if (inv.checkpoint.empty() || inv.volume.empty()) throw ConfigError("infer requires --checkpoint and --volume");
  const auto model = load_trained_model(inv.checkpoint);
  const auto& mc = model.net->config();
  auto volume = load_volume(inv.volume);
  if (config.at("infer").at("resample").get<bool>() && (volume.height != mc.image_h || volume.width != mc.image_w))
    volume = resample_slices(volume, mc.image_h, mc.image_w);
  const auto& s = config.at("infer");
  const auto mode = gating_from(s, mc.gating_mode);
  const auto result = infer_volume(*model.net, volume, model.norm, mode, threshold_from(s, mc.gating_threshold));

  VolumeRecord pred = volume;
  pred.class_names = model.class_names;
  pred.masks = result.masks;
  pred.source = {{"prediction_of", volume.subject_id}, {"checkpoint", fs::path(inv.checkpoint).filename().string()},
                 {"gating_mode", to_string(mode)}};
  save_volume(out_dir / "prediction", pred);

  std::ofstream os(out_dir / "det_probs.csv");
  os << "slice_index";
  for (std::int64_t r = 0; r < result.rois; ++r) os << ",det_" << r;
  for (const auto& name : model.class_names) os << ",gate_" << name;
  os << '\n';
  char buf[32];
  for (std::int64_t z = 0; z < result.depth; ++z) {
    os << z;
    for (std::int64_t r = 0; r < result.rois; ++r) {
      std::snprintf(buf, sizeof buf, "%.17g", result.det_probs[static_cast<std::size_t>(z * result.rois + r)]);
      os << ',' << buf;
    }
    for (std::int64_t c = 0; c < result.classes; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", result.gate_probs[static_cast<std::size_t>(z * result.classes + c)]);
      os << ',' << buf;
    }
    os << '\n';
  }
  if (!os) throw DataError("cannot write " + (out_dir / "det_probs.csv").string());
  out << "wrote prediction for " << volume.subject_id << " to " << out_dir.string() << '\n';
}

void run_eval(const Invocation& inv, const json& config, const fs::path& out_dir, std::ostream& out) {
  if (inv.checkpoint.empty() || inv.manifest.empty()) throw ConfigError("eval requires --checkpoint and --manifest");
  const auto model = load_trained_model(inv.checkpoint);
  const auto& mc = model.net->config();
  const auto manifest = load_manifest(inv.manifest);
  const auto& s = config.at("eval");
  const auto subjects = load_training_split(manifest, s.at("split").get<std::string>(), mc);
  auto run_id = s.at("run_id").get<std::string>();
  if (run_id.empty()) run_id = out_dir.filename().string();
  const auto report = evaluate(model, subjects, gating_from(s, mc.gating_mode),
                               threshold_from(s, mc.gating_threshold), run_id);
  write_report(out_dir, report);
  out << "run " << run_id << ": dice loss " << report.summary.dice_loss.mean << " +/- " << report.summary.dice_loss.stddev
      << " over " << report.records.size() << " slice-class records\n";
}

void run_compare(const Invocation& inv, const json&, const fs::path& out_dir, std::ostream& out) {
  if (inv.run_a.empty() || inv.run_b.empty()) throw ConfigError("compare requires --a and --b");
  const auto c = compare(read_report(inv.run_a), read_report(inv.run_b));
  write_comparison(out_dir, c);
  out << "compared " << c.run_a << " and " << c.run_b << " over " << c.records.size() << " records into "
      << out_dir.string() << '\n';
}

json resolve_config(const Invocation& inv) {
  json config = default_config();
  if (!inv.config_path.empty()) merge_config(config, read_config_file(inv.config_path));
  for (const auto& o : inv.overrides) apply_override(config, o);
  if (inv.subjects) config["synth"]["subjects"] = *inv.subjects;
  if (inv.seed) config["synth"]["seed"] = *inv.seed;
  for (const auto& section : {"eval", "infer"}) {
    const auto mode = config.at(section).at("gating_mode").get<std::string>();
    if (!mode.empty()) parse_gating_mode(mode);
  }
  return config;
}

fs::path output_dir(const Invocation& inv) {
  if (!inv.output.empty()) return inv.output;
  const char* root = std::getenv(kOutputRootEnv);
  return fs::path(root && *root ? root : "runs") / inv.subcommand;
}

int dispatch(const Invocation& inv, std::ostream& out, std::ostream& err) {
  const json config = resolve_config(inv);
  if (inv.subcommand == "train") train_config(config);
  const fs::path dir = output_dir(inv);
  fs::create_directories(dir);
  write_json(dir / "config.json", config);
  json flags = {{"config", inv.config_path}, {"set", inv.overrides}};
  for (const auto& [k, v] : {std::pair{"input", &inv.input}, {"manifest", &inv.manifest}, {"resume", &inv.resume},
                             {"checkpoint", &inv.checkpoint}, {"volume", &inv.volume}, {"a", &inv.run_a},
                             {"b", &inv.run_b}})
    if (!v->empty()) flags[k] = *v;
  write_json(dir / "run_info.json", {{"tool", kToolName},
                                     {"version", kToolVersion},
                                     {"subcommand", inv.subcommand},
                                     {"arguments", flags},
                                     {"config", config}});

  if (inv.subcommand == "synth") run_synth(inv, config, dir, out);
  else if (inv.subcommand == "ingest") run_ingest(inv, config, dir, out, err);
  else if (inv.subcommand == "train") run_train(inv, config, dir, out);
  else if (inv.subcommand == "infer") run_infer(inv, config, dir, out);
  else if (inv.subcommand == "eval") run_eval(inv, config, dir, out);
  else run_compare(inv, config, dir, out);
  return 0;
}

}  // namespace

json default_config() {
  json config = TrainConfig{};
  config["synth"] = {{"subjects", 8},          {"seed", 0},           {"depth", 32},
                     {"height", 128},          {"width", 128},        {"noise_sigma", PhantomSpec{}.noise_sigma},
                     {"val_fraction", 0.125},  {"test_fraction", 0.25}, {"export_dicom", false},
                     {"hu_scale", 1000.0}};
  config["ingest"] = {{"classes", {"prostate", "bladder", "rectum"}},
                      {"resample", true},
                      {"val_fraction", 0.125},
                      {"test_fraction", 0.25}};
  config["infer"] = {{"gating_mode", ""}, {"gating_threshold", nullptr}, {"resample", true}};
  config["eval"] = {{"split", "test"}, {"run_id", ""}, {"gating_mode", ""}, {"gating_threshold", nullptr}};
  return config;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Invocation inv;
  CLI::App app{"Gated multi-head Swin-U-Net segmentation: phantoms, ingestion, training, evaluation", kToolName};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1, 1);

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", inv.config_path, "Config file (.toml, or .json)");
    sub->add_option("--set", inv.overrides, "Override one config key: dotted.key=value (repeatable)");
    sub->add_option("--output", inv.output,
                    std::string("Output directory (default $") + kOutputRootEnv + "/<subcommand>, root 'runs')");
    sub->footer(help_footer(sub->get_name()));
    return sub;
  };
  auto* synth = add_common(app.add_subcommand("synth", "Generate phantom subjects and a manifest"));
  synth->add_option("--subjects", inv.subjects, "Number of subjects (synth.subjects)");
  synth->add_option("--seed", inv.seed, "Base seed (synth.seed)");
  auto* ingest = add_common(app.add_subcommand("ingest", "Ingest CT + RTSTRUCT subject directories"));
  ingest->add_option("--input", inv.input, "Directory with one DICOM directory per subject")->required();
  auto* tr = add_common(app.add_subcommand("train", "Train a model on a manifest"));
  tr->add_option("--manifest", inv.manifest, "Dataset manifest")->required();
  tr->add_option("--resume", inv.resume, "Checkpoint to resume from");
  auto* infer = add_common(app.add_subcommand("infer", "Segment one volume"));
  infer->add_option("--checkpoint", inv.checkpoint, "Trained checkpoint")->required();
  infer->add_option("--volume", inv.volume, "Volume directory")->required();
  auto* ev = add_common(app.add_subcommand("eval", "Per-slice evaluation report on a manifest split"));
  ev->add_option("--checkpoint", inv.checkpoint, "Trained checkpoint")->required();
  ev->add_option("--manifest", inv.manifest, "Dataset manifest")->required();
  auto* cmp = add_common(app.add_subcommand("compare", "Compare two evaluation reports"));
  cmp->add_option("--a", inv.run_a, "First report directory")->required();
  cmp->add_option("--b", inv.run_b, "Second report directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }
  inv.subcommand = app.get_subcommands().front()->get_name();

  try {
    return dispatch(inv, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace n2::cli
