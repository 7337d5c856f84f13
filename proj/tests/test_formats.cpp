#include <doctest.h>

#include <filesystem>

#include <nlohmann/json.hpp>

#include "cuelab/checkpoint.hpp"
#include "cuelab/experiments.hpp"
#include "cuelab/factorspace.hpp"
#include "cuelab/util.hpp"

using namespace cuelab;
using nlohmann::json;

namespace {

std::filesystem::path tmp(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("checkpoint round-trips bit-exactly") {
  nn::ModelConfig cfg;
  cfg.arch = nn::Arch::Convnet;
  cfg.widths = nn::convnet_widths(2);
  cfg.resolution = 16;
  cfg.classes = 3;

  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.meta = {{"scheme", "color"}, {"seed", 7}};
  ckpt.params = nn::Model::create(cfg, 123).flat;

  auto path = tmp("cuelab_test.ckpt");
  save_checkpoint(path, ckpt);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.params == ckpt.params);
  CHECK(back.meta.at("scheme") == "color");
  CHECK(back.config.widths == cfg.widths);
  CHECK(back.config.resolution == 16);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects corrupt files") {
  auto path = tmp("cuelab_bad.ckpt");
  write_file(path, "not a checkpoint at all");
  CHECK_THROWS_AS(load_checkpoint(path), UserError);

  // header whose parameter count disagrees with the model config
  nn::ModelConfig cfg;
  cfg.arch = nn::Arch::FFnet;
  cfg.widths = {4};
  cfg.resolution = 8;
  cfg.classes = 2;
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.params.assign(10, 0.f);  // wrong size on purpose
  save_checkpoint(path, ckpt);
  CHECK_THROWS_AS(load_checkpoint(path), UserError);
  std::filesystem::remove(path);
}

TEST_CASE("manifest json round-trips and regenerates identical datasets") {
  ManifestSpec m;
  m.space = desk_space_2cue(16);
  m.cue_members = {"color", "orientation"};
  m.scheme = "diagonal";
  m.split = Split::Train;
  m.count = 9;
  m.seed = 31;

  json j = manifest_to_json(m);
  ManifestSpec back = manifest_from_json(j);
  CHECK(back.scheme == m.scheme);
  CHECK(back.count == m.count);
  CHECK(back.seed == m.seed);
  CHECK(back.cue_members == m.cue_members);

  LabeledDataset a = dataset_from_manifest(m);
  LabeledDataset b = dataset_from_manifest(back);
  REQUIRE(a.samples.size() == b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].raw_indices == b.samples[i].raw_indices);
    CHECK(a.images[i].data == b.images[i].data);
  }

  json broken = j;
  broken["format"] = "something-else";
  CHECK_THROWS_AS(manifest_from_json(broken), UserError);
}

TEST_CASE("space json rejects unknown factors and bad kinds") {
  json j = space_to_json(desk_space_4cue());
  FactorSpace s = space_from_json(j);
  CHECK(s.factors.size() == 6);
  CHECK(s.factor("orientation").symmetry_order == 12);

  json bad = j;
  bad["factors"][0]["name"] = "texture";
  CHECK_THROWS_AS(space_from_json(bad), UserError);
  bad = j;
  bad["factors"][1]["kind"] = "fuzzy";
  CHECK_THROWS_AS(space_from_json(bad), UserError);
}

TEST_CASE("experiment configs reject unknown keys") {
  json config = {{"space", "desk2"},
                 {"cues", {"color", "orientation"}},
                 {"seed", 5},
                 {"model", {{"arch", "convnet"}, {"width", 2}}}};
  CHECK_NOTHROW(validate_config(config));

  json extra = config;
  extra["colour"] = 1;
  CHECK_THROWS_AS(validate_config(extra), UserError);

  json nested = config;
  nested["model"]["depth"] = 9;
  CHECK_THROWS_AS(validate_config(nested), UserError);

  json missing = config;
  missing.erase("seed");
  CHECK_THROWS_AS(validate_config(missing), UserError);
}

TEST_CASE("experiment hash is stable and seed-sensitive") {
  json config = {{"space", "desk2"},
                 {"cues", {"color", "orientation"}},
                 {"seed", 5}};
  Experiment a = load_experiment(config, std::nullopt, 1);
  Experiment b = load_experiment(config, std::nullopt, 1);
  CHECK(a.config_hash == b.config_hash);
  Experiment c = load_experiment(config, 6, 1);
  CHECK(a.config_hash != c.config_hash);
  CHECK(c.master_seed == 6);
}

TEST_CASE("float formatting is stable") {
  CHECK(fmt_g(0.5) == "0.5");
  CHECK(fmt_g(1.0 / 3.0) == fmt_g(1.0 / 3.0));
  CHECK(fmt_g(0.0) == "0");
}
