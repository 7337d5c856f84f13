#include "cuelab.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include <nlohmann/json.hpp>

#include "cuelab/checkpoint.hpp"
#include "cuelab/experiments.hpp"
#include "cuelab/factorspace.hpp"
#include "cuelab/render.hpp"
#include "cuelab/util.hpp"

using nlohmann::json;

namespace {

thread_local std::string g_last_error;

int fail(int code, const char* what) {
  g_last_error = what;
  return code;
}

template <class Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    return CLB_OK;
  } catch (const cuelab::UserError& e) {
    return fail(CLB_E_ARG, e.what());
  } catch (const json::exception& e) {
    return fail(CLB_E_ARG, e.what());
  } catch (const std::exception& e) {
    return fail(CLB_E_INTERNAL, e.what());
  }
}

char* owned_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p) std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

}  // namespace

struct clb_experiment {
  json config;
  uint64_t seed_override = 0;
  bool has_seed_override = false;
  int jobs = 0;
  std::string summary;
};

extern "C" {

const char* clb_version(void) { return "cuelab 1.0.0"; }

const char* clb_last_error(void) { return g_last_error.c_str(); }

void clb_free(char* p) { std::free(p); }

int clb_experiment_open(const char* config_json, clb_experiment** out) {
  if (!config_json || !out) return fail(CLB_E_ARG, "null argument");
  *out = nullptr;
  return guarded([&] {
    json config = json::parse(config_json);
    cuelab::validate_config(config);
    auto* exp = new clb_experiment;
    exp->config = std::move(config);
    *out = exp;
  });
}

int clb_experiment_set_seed(clb_experiment* exp, uint64_t seed) {
  if (!exp) return fail(CLB_E_ARG, "null handle");
  exp->seed_override = seed;
  exp->has_seed_override = true;
  return CLB_OK;
}

int clb_experiment_set_jobs(clb_experiment* exp, int jobs) {
  if (!exp) return fail(CLB_E_ARG, "null handle");
  if (jobs < 0) return fail(CLB_E_ARG, "jobs must be >= 0");
  exp->jobs = jobs;
  return CLB_OK;
}

int clb_experiment_run(clb_experiment* exp, const char* command, const char* args_json,
                       const char* out_dir) {
  if (!exp || !command) return fail(CLB_E_ARG, "null argument");
  return guarded([&] {
    json args = json::object();
    if (args_json && *args_json) args = json::parse(args_json);
    std::optional<uint64_t> seed;
    if (exp->has_seed_override) seed = exp->seed_override;
    cuelab::Experiment e = cuelab::load_experiment(exp->config, seed, exp->jobs);
    std::string dir = out_dir && *out_dir ? out_dir
                                          : exp->config.value("out_dir", std::string("out"));
    json summary = cuelab::run_command(e, command, args, dir);
    exp->summary = summary.dump(2);
  });
}

const char* clb_experiment_summary(const clb_experiment* exp) {
  return exp ? exp->summary.c_str() : "";
}

void clb_experiment_close(clb_experiment* exp) { delete exp; }

int clb_render_sprite(const char* sprite_json, int resolution, float* rgb_out) {
  if (!sprite_json || !rgb_out) return fail(CLB_E_ARG, "null argument");
  return guarded([&] {
    json j = json::parse(sprite_json);
    cuelab::SpriteParams p;
    if (j.contains("shape")) {
      std::string s = j.at("shape").get<std::string>();
      if (s == "square")
        p.shape = cuelab::Shape::Square;
      else if (s == "ellipse")
        p.shape = cuelab::Shape::Ellipse;
      else if (s == "triangle")
        p.shape = cuelab::Shape::Triangle;
      else
        throw cuelab::UserError("unknown shape: " + s);
    }
    p.scale = j.value("scale", 0.5);
    p.orientation = j.value("orientation", 0.0);
    p.color = j.value("color", 0);
    p.offset_x = j.value("offset_x", 0.0);
    p.offset_y = j.value("offset_y", 0.0);
    cuelab::Image img = cuelab::render(p, resolution);
    std::memcpy(rgb_out, img.data.data(), img.data.size() * sizeof(float));
  });
}

int clb_manifest_build(const char* config_json, const char* scheme, char** json_out) {
  if (!config_json || !scheme || !json_out) return fail(CLB_E_ARG, "null argument");
  *json_out = nullptr;
  return guarded([&] {
    json config = json::parse(config_json);
    cuelab::Experiment e = cuelab::load_experiment(config, std::nullopt, 1);
    cuelab::ManifestSpec m;
    m.space = e.space;
    m.cue_members = e.cues.members;
    m.scheme = scheme;
    m.split = cuelab::Split::Train;
    m.count = e.config.contains("train")
                  ? e.config.at("train").value("n_per_class", 256)
                  : 256;
    m.seed = e.master_seed;
    *json_out = owned_string(cuelab::manifest_to_json(m).dump(2));
    if (!*json_out) throw std::bad_alloc();
  });
}

int clb_checkpoint_info(const char* path, char** json_out) {
  if (!path || !json_out) return fail(CLB_E_ARG, "null argument");
  *json_out = nullptr;
  return guarded([&] {
    cuelab::Checkpoint ckpt = cuelab::load_checkpoint(path);
    json info = {{"model", cuelab::model_config_to_json(ckpt.config)},
                 {"meta", ckpt.meta},
                 {"param_count", ckpt.params.size()}};
    *json_out = owned_string(info.dump(2));
    if (!*json_out) throw std::bad_alloc();
  });
}

}  // extern "C"
