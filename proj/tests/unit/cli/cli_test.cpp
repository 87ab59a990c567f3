#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "test_support.hpp"

#include "n2/cli/app.hpp"
#include "n2/cli/config.hpp"
#include "n2/data/manifest.hpp"
#include "n2/error.hpp"

using namespace n2;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

const std::vector<std::string> kSmall{"--set", "synth.depth=12", "--set", "synth.height=32", "--set", "synth.width=32"};

std::vector<std::string> with(std::vector<std::string> args, const std::vector<std::string>& more) {
  args.insert(args.end(), more.begin(), more.end());
  return args;
}

}  // namespace

TEST_CASE("config overrides type-check and reject unknown keys") {
  auto c = cli::default_config();
  cli::apply_override(c, "model.gating_mode=none");
  CHECK(c["model"]["gating_mode"] == "none");
  cli::apply_override(c, "lambda_det=0");
  CHECK(c["lambda_det"].get<double>() == 0.0);
  cli::apply_override(c, "model.image_size=[64,64]");
  CHECK(c["model"]["image_size"] == nlohmann::json({64, 64}));
  cli::apply_override(c, "grad_clip=1.5");
  CHECK(c["grad_clip"].get<double>() == 1.5);
  CHECK_THROWS_WITH_AS(cli::apply_override(c, "model.nope=1"), doctest::Contains("model.nope"), ConfigError);
  CHECK_THROWS_AS(cli::apply_override(c, "epochs=many"), ConfigError);
  CHECK_THROWS_AS(cli::apply_override(c, "model=3"), ConfigError);
  CHECK_THROWS_AS(cli::apply_override(c, "noequals"), ConfigError);
  CHECK_THROWS_AS(cli::apply_override(c, "a..b=1"), ConfigError);
}

TEST_CASE("TOML config files merge into the defaults") {
  const auto dir = testing::temp_dir("cli_toml");
  {
    std::ofstream(dir / "c.toml") << "epochs = 3\nlambda_det = 0.5\n[model]\ngating_mode = \"soft\"\n"
                                     "image_size = [64, 64]\n[synth]\nsubjects = 5\n";
  }
  auto c = cli::default_config();
  cli::merge_config(c, cli::read_config_file(dir / "c.toml"));
  CHECK(c["epochs"] == 3);
  CHECK(c["lambda_det"].get<double>() == 0.5);
  CHECK(c["model"]["gating_mode"] == "soft");
  CHECK(c["synth"]["subjects"] == 5);
  CHECK(c["model"]["image_size"] == nlohmann::json({64, 64}));

  std::ofstream(dir / "bad.toml") << "epochs = \n";
  CHECK_THROWS_WITH_AS(cli::read_config_file(dir / "bad.toml"), doctest::Contains("line 1"), ConfigError);
  std::ofstream(dir / "unknown.toml") << "[model]\nwidth = 3\n";
  auto d = cli::default_config();
  CHECK_THROWS_WITH_AS(cli::merge_config(d, cli::read_config_file(dir / "unknown.toml")),
                       doctest::Contains("model.width"), ConfigError);
  CHECK_THROWS_AS(cli::read_config_file(dir / "absent.toml"), ConfigError);
}

TEST_CASE("synth twice with the same seed gives bitwise-identical directories") {
  const auto dir = testing::temp_dir("cli_synth");
  const auto args = with({"synth", "--subjects", "4", "--seed", "7"}, kSmall);
  REQUIRE(run(with(args, {"--output", (dir / "a").string()})).code == 0);
  REQUIRE(run(with(args, {"--output", (dir / "b").string()})).code == 0);
  CHECK(testing::tree_differences(dir / "a", dir / "b").empty());
  CHECK(testing::read_tree(dir / "a").size() == 4 * 3 + 3);

  REQUIRE(run(with(with({"synth", "--subjects", "4", "--seed", "8"}, kSmall), {"--output", (dir / "c").string()})).code == 0);
  CHECK_FALSE(testing::tree_differences(dir / "a", dir / "c").empty());

  const auto manifest = load_manifest(dir / "a" / "manifest.json");
  CHECK(manifest.subjects.size() == 4);
  CHECK(manifest.subjects[0].subject_id == "phantom_000");
}

TEST_CASE("every run records the tool version and resolved config") {
  const auto dir = testing::temp_dir("cli_info");
  REQUIRE(run(with({"synth", "--subjects", "2", "--set", "synth.noise_sigma=0.1", "--output", dir.string()}, kSmall)).code == 0);
  const auto info = nlohmann::json::parse(slurp(dir / "run_info.json"));
  CHECK(info["tool"] == cli::kToolName);
  CHECK(info["version"] == cli::kToolVersion);
  CHECK(info["subcommand"] == "synth");
  CHECK(info["config"]["synth"]["subjects"] == 2);
  CHECK(info["config"]["synth"]["noise_sigma"].get<double>() == 0.1);
  CHECK(nlohmann::json::parse(slurp(dir / "config.json")) == info["config"]);
}

TEST_CASE("output defaults to the environment root") {
  const auto dir = testing::temp_dir("cli_env");
  ::setenv(cli::kOutputRootEnv, dir.string().c_str(), 1);
  const auto r = run(with({"synth", "--subjects", "1"}, kSmall));
  ::unsetenv(cli::kOutputRootEnv);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "synth" / "manifest.json"));
}

TEST_CASE("exit codes") {
  const auto dir = testing::temp_dir("cli_codes");
  SUBCASE("unknown override key is a usage error") {
    const auto r = run({"synth", "--set", "synth.colour=red", "--output", dir.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("synth.colour") != std::string::npos);
  }
  SUBCASE("missing subcommand or bad flag") {
    CHECK(run({}).code == 1);
    CHECK(run({"train"}).code == 1);
    CHECK(run({"synth", "--subjects", "x"}).code == 1);
  }
  SUBCASE("invalid training config") {
    CHECK(run({"train", "--manifest", "m.json", "--set", "batch_size=0", "--output", dir.string()}).code == 1);
  }
  SUBCASE("eval on a missing checkpoint names the path") {
    const auto ckpt = (dir / "missing.n2ckpt").string();
    const auto r = run({"eval", "--checkpoint", ckpt, "--manifest", "m.json", "--output", (dir / "e").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find(ckpt) != std::string::npos);
  }
  SUBCASE("ingest of a missing directory") {
    CHECK(run({"ingest", "--input", (dir / "none").string(), "--output", (dir / "i").string()}).code == 2);
  }
  SUBCASE("help succeeds") {
    const auto r = run({"--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("synth") != std::string::npos);
  }
}

TEST_CASE("subcommand help lists every honored config key") {
  const auto train = run({"train", "--help"});
  REQUIRE(train.code == 0);
  auto defaults = cli::default_config();
  for (const auto& s : {"synth", "ingest", "infer", "eval"}) defaults.erase(s);
  for (const auto& k : cli::describe_keys(defaults)) CHECK_MESSAGE(train.out.find(k) != std::string::npos, k);
  CHECK(train.out.find("model.gating_mode") != std::string::npos);

  const auto synth = run({"synth", "--help"});
  for (const auto& k : cli::describe_keys(cli::default_config()["synth"]))
    CHECK_MESSAGE(synth.out.find("synth." + k) != std::string::npos, k);
  const auto ev = run({"eval", "--help"});
  CHECK(ev.out.find("eval.split") != std::string::npos);
  CHECK(ev.out.find("eval.gating_mode") != std::string::npos);
}

TEST_CASE("synth DICOM export ingests back to the same masks") {
  const auto dir = testing::temp_dir("cli_dicom");
  REQUIRE(run(with({"synth", "--subjects", "2", "--set", "synth.export_dicom=true", "--output", (dir / "s").string()}, kSmall)).code == 0);
  const auto r = run({"ingest", "--input", (dir / "s" / "dicom").string(), "--output", (dir / "i").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto original = load_manifest(dir / "s" / "manifest.json");
  const auto ingested = load_manifest(dir / "i" / "manifest.json");
  REQUIRE(ingested.subjects.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto a = load_volume(original.base_dir / original.subjects[i].path);
    const auto b = load_volume(ingested.base_dir / ingested.subjects[i].path);
    CHECK(b.subject_id == a.subject_id);
    CHECK(b.masks == a.masks);
    for (std::size_t k = 0; k < a.image.size(); k += 97) CHECK(b.image[k] == std::round(a.image[k] * 1000.0));
  }
}

TEST_CASE("gated vs non-gated train, eval and compare produce the comparison artifacts") {
  const auto dir = testing::temp_dir("cli_pipeline");
  REQUIRE(run(with({"synth", "--subjects", "4", "--seed", "3", "--output", (dir / "data").string()}, kSmall)).code == 0);
  {
    std::ofstream(dir / "c.toml") << "epochs = 1\nbatch_size = 4\nlearning_rate = 1e-3\n";
  }
  const auto manifest = (dir / "data" / "manifest.json").string();
  const auto cfg = (dir / "c.toml").string();
  auto r = run({"train", "--config", cfg, "--manifest", manifest, "--output", (dir / "gated").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  r = run({"train", "--config", cfg, "--set", "lambda_det=0", "--set", "model.gating_mode=none", "--manifest", manifest,
           "--output", (dir / "nongated").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(dir / "gated" / "metrics.csv"));

  for (const auto* run_id : {"gated", "nongated"}) {
    r = run({"eval", "--checkpoint", (dir / run_id / "final.n2ckpt").string(), "--manifest", manifest, "--set",
             std::string("eval.run_id=") + run_id, "--output", (dir / (std::string("eval_") + run_id)).string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
  }
  const auto info = nlohmann::json::parse(slurp(dir / "eval_nongated" / "summary.json"));
  CHECK(info.dump().find("\"none\"") != std::string::npos);

  r = run({"compare", "--a", (dir / "eval_gated").string(), "--b", (dir / "eval_nongated").string(), "--output",
           (dir / "cmp").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(dir / "cmp" / "gated_vs_nongated_dice_curve.png"));
  CHECK(fs::exists(dir / "cmp" / "gated_vs_nongated_dice_curve.svg"));
  CHECK(slurp(dir / "cmp" / "summary_delta.csv").find("paper-reported, not reproduced") != std::string::npos);

  r = run({"infer", "--checkpoint", (dir / "gated" / "final.n2ckpt").string(), "--volume",
           (dir / "data" / "subjects" / "phantom_003").string(), "--output", (dir / "infer").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto pred = load_volume(dir / "infer" / "prediction");
  CHECK(pred.depth == 12);
  CHECK(pred.height == 32);
  const auto csv = slurp(dir / "infer" / "det_probs.csv");
  CHECK(csv.rfind("slice_index,det_0,det_1,det_2,gate_prostate,gate_bladder,gate_rectum\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
}
