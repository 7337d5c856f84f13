// Command-line front end; all functionality goes through the C API in cuelab.h.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cuelab.h"

namespace {

int report_failure(int code) {
  std::fprintf(stderr, "error: %s\n", clb_last_error());
  return code == CLB_E_ARG ? 1 : 2;
}

std::string read_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::fprintf(stderr, "error: cannot open config: %s\n", path.c_str());
    std::exit(1);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cuelab: diagonal-dataset cue preference experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  int jobs = 0;
  bool quiet = false;

  app.add_option("--config", config_path, "experiment config (JSON)")->required();
  app.add_option("--seed", seed, "master seed override");
  app.add_option("--out", out_dir, "output directory (default: config out_dir)");
  app.add_option("--jobs", jobs, "worker threads (default: all cores)");
  app.add_flag("--quiet", quiet, "suppress the summary on stdout");

  struct Sub {
    const char* name;
    const char* help;
    CLI::App* cmd = nullptr;
  };
  std::vector<Sub> subs = {
      {"gen-manifest", "write dataset manifests for the configured cue set"},
      {"train", "train models per seed and report cue accuracies"},
      {"eval", "evaluate checkpoints against the configured cue set"},
      {"landscape", "loss surface over a random parameter-space plane"},
      {"curvature", "sphere-averaged curvature estimates around a checkpoint"},
      {"basin", "basin-of-attraction sweep around a cue solution"},
      {"connect", "train a low-loss path between two solutions"},
      {"kcc", "capacity sweep: smallest model memorizing each cue"},
  };
  int dump_samples = 0;
  std::vector<std::string> checkpoints;
  std::string endpoint_p, endpoint_a;
  for (auto& s : subs) {
    s.cmd = app.add_subcommand(s.name, s.help);
    std::string name = s.name;
    if (name == "gen-manifest")
      s.cmd->add_option("--dump-samples", dump_samples, "also write N sample images (PPM)");
    if (name == "eval" || name == "landscape" || name == "curvature" || name == "basin")
      s.cmd->add_option("checkpoints", checkpoints, "checkpoint file(s)");
    if (name == "connect") {
      s.cmd->add_option("endpoint_p", endpoint_p, "preferred-cue endpoint checkpoint");
      s.cmd->add_option("endpoint_a", endpoint_a, "averted-cue endpoint checkpoint");
    }
  }

  CLI11_PARSE(app, argc, argv);

  const bool seed_set = app.count("--seed") > 0;
  const std::string command = app.get_subcommands().front()->get_name();

  // Assemble the per-invocation args blob.
  std::string args = "{";
  bool first = true;
  auto add = [&](const std::string& kv) {
    if (!first) args += ",";
    args += kv;
    first = false;
  };
  if (command == "gen-manifest" && dump_samples > 0)
    add("\"dump_samples\":" + std::to_string(dump_samples));
  if (command == "eval" && !checkpoints.empty()) {
    std::string list = "[";
    for (size_t i = 0; i < checkpoints.size(); ++i) {
      if (i) list += ",";
      list += "\"" + json_escape(checkpoints[i]) + "\"";
    }
    list += "]";
    add("\"checkpoints\":" + list);
  }
  if ((command == "landscape" || command == "curvature" || command == "basin") &&
      !checkpoints.empty())
    add("\"checkpoint\":\"" + json_escape(checkpoints.front()) + "\"");
  if (command == "connect") {
    if (!endpoint_p.empty()) add("\"endpoint_p\":\"" + json_escape(endpoint_p) + "\"");
    if (!endpoint_a.empty()) add("\"endpoint_a\":\"" + json_escape(endpoint_a) + "\"");
  }
  args += "}";

  const std::string config = read_config(config_path);
  clb_experiment* exp = nullptr;
  int rc = clb_experiment_open(config.c_str(), &exp);
  if (rc != CLB_OK) return report_failure(rc);
  if (seed_set) clb_experiment_set_seed(exp, seed);
  if (jobs > 0) clb_experiment_set_jobs(exp, jobs);

  rc = clb_experiment_run(exp, command.c_str(), args.c_str(),
                          out_dir.empty() ? nullptr : out_dir.c_str());
  if (rc != CLB_OK) {
    clb_experiment_close(exp);
    return report_failure(rc);
  }
  if (!quiet) std::printf("%s\n", clb_experiment_summary(exp));
  clb_experiment_close(exp);
  return 0;
}
