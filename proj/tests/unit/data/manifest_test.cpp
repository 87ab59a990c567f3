#include <fstream>

#include "doctest.h"
#include "test_support.hpp"

#include "n2/data/manifest.hpp"
#include "n2/data/phantom.hpp"
#include "n2/error.hpp"

using namespace n2;

TEST_CASE("splits take test from the end, then val") {
  const auto s = assign_splits(10, 0.2, 0.2);
  CHECK(s == std::vector<std::string>{"train", "train", "train", "train", "train", "train", "val", "val", "test", "test"});
  CHECK(assign_splits(3, 0, 0) == std::vector<std::string>(3, "train"));
  CHECK_THROWS_AS(assign_splits(4, 0.5, 0.5), ConfigError);
  CHECK_THROWS_AS(assign_splits(2, 0.5, 0.4), ConfigError);
}

TEST_CASE("manifest round trip and split loading") {
  const auto dir = testing::temp_dir("manifest");
  Manifest m;
  m.class_names = {"prostate", "bladder", "rectum"};
  for (int i = 0; i < 3; ++i) {
    const std::string id = "s" + std::to_string(i);
    save_volume(dir / id, generate_phantom(PhantomSpec::pelvis(12, 8, 8, static_cast<std::uint64_t>(i)), id));
    m.subjects.push_back({id, id, i == 2 ? "val" : "train"});
  }
  save_manifest(dir / "manifest.json", m);
  const auto back = load_manifest(dir / "manifest.json");
  CHECK(back.class_names == m.class_names);
  CHECK(back.split("train").size() == 2);
  const auto val = back.load_split("val");
  REQUIRE(val.size() == 1);
  CHECK(val[0].subject_id == "s2");
}

TEST_CASE("manifest validation") {
  const auto dir = testing::temp_dir("manifest_bad");
  auto write = [&](const nlohmann::json& j) { std::ofstream(dir / "m.json") << j.dump(); };
  const nlohmann::json base = {{"version", 1}, {"class_names", {"a"}},
                               {"subjects", {{{"id", "x"}, {"path", "x"}, {"split", "train"}}}}};
  SUBCASE("unknown split") {
    auto j = base;
    j["subjects"][0]["split"] = "holdout";
    write(j);
    CHECK_THROWS_AS(load_manifest(dir / "m.json"), DataError);
  }
  SUBCASE("duplicate id") {
    auto j = base;
    j["subjects"].push_back(j["subjects"][0]);
    write(j);
    CHECK_THROWS_AS(load_manifest(dir / "m.json"), DataError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_manifest(dir / "absent.json"), DataError); }
}
