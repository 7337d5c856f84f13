#include "cuelab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "cuelab/checkpoint.hpp"
#include "cuelab/connect.hpp"
#include "cuelab/kcc.hpp"
#include "cuelab/landscape.hpp"
#include "cuelab/render.hpp"
#include "cuelab/util.hpp"

namespace cuelab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where,
                const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw UserError("config section must be an object: " + where);
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw UserError("unknown config key: " + where + "." + it.key());
}

json section(const json& config, const std::string& name) {
  return config.contains(name) ? config.at(name) : json::object();
}

FactorSpace space_from_config(const json& config) {
  const json& sp = config.at("space");
  if (sp.is_string()) {
    std::string name = sp.get<std::string>();
    int res = config.value("resolution", 32);
    if (name == "desk4") return desk_space_4cue(res);
    if (name == "desk2") return desk_space_2cue(res);
    throw UserError("unknown built-in space: " + name + " (use desk4, desk2, or an object)");
  }
  return space_from_json(sp);
}

nn::ModelConfig model_from_config(const json& config, const FactorSpace& space,
                                  const CueSet& cues) {
  const json m = section(config, "model");
  check_keys(m, "model", {"arch", "width", "widths", "skip_connections"});
  nn::ModelConfig cfg;
  std::string arch = m.value("arch", "convnet");
  if (arch != "ffnet" && arch != "convnet") throw UserError("model.arch must be ffnet or convnet");
  cfg.arch = arch == "ffnet" ? nn::Arch::FFnet : nn::Arch::Convnet;
  if (m.contains("widths"))
    cfg.widths = m.at("widths").get<std::vector<int>>();
  else if (m.contains("width"))
    cfg.widths = cfg.arch == nn::Arch::Convnet ? nn::convnet_widths(m.at("width").get<int>())
                                               : nn::ffnet_widths_scaled(m.at("width").get<int>());
  else
    cfg.widths = cfg.arch == nn::Arch::Convnet ? nn::convnet_widths(6) : nn::ffnet_widths_desk();
  cfg.skip_connections = m.value("skip_connections", false);
  cfg.resolution = space.resolution;
  cfg.in_channels = 3;
  cfg.classes = cues.label_count;
  return cfg;
}

struct FileSink {
  fs::path dir;
  std::string config_hash;
  json index = json::object();

  void csv(const std::string& name, const CsvWriter& w) {
    std::string payload = "# config_hash=" + config_hash + "\n" + w.str();
    write_file(dir / name, payload);
    index[name] = "csv";
  }

  void jsonf(const std::string& name, json payload) {
    payload["config_hash"] = config_hash;
    write_file(dir / name, payload.dump(2) + "\n");
    index[name] = "json";
  }

  void raw(const std::string& name, std::string_view bytes, const char* kind) {
    write_file(dir / name, bytes);
    index[name] = kind;
  }
};

LabeledDataset diag_train_set(const Experiment& exp, int n_per_class, uint64_t seed) {
  return build_diagonal(exp.space, exp.cues, n_per_class, seed, Split::Train);
}

// Fits fresh; with target set, keeps training in rounds until the exhaustive
// error over the full scheme grid reaches the target.
struct TrainOutcome {
  nn::Model model;
  nn::FitResult fit;
  double exhaustive_error = -1.0;
  bool is_solution = false;
};

TrainOutcome train_one(const Experiment& exp, const std::string& scheme, uint64_t seed) {
  const json t = section(exp.config, "train");
  const int epochs = t.value("epochs", 30);
  const int batch = t.value("batch", 64);
  const bool target_solution = t.value("target_solution", false);
  const double solution_target = t.value("solution_target", 0.002);

  LabeledDataset ds;
  if (scheme == "diagonal") {
    ds = build_diagonal(exp.space, exp.cues, t.value("n_per_class", 256), seed, Split::Train);
  } else {
    ds = build_cue_dataset(exp.space, exp.cues, scheme, t.value("n_per_cell", 32), seed,
                           Split::Train, CellFilter::All);
  }
  nn::Tensor x = images_tensor(ds);
  std::vector<int> y = labels_of(ds);

  TrainOutcome out{nn::Model::create(exp.model_cfg, seed), {}, -1.0, false};
  nn::FitConfig fc;
  fc.opt = exp.optimizer();
  fc.epochs = epochs;
  fc.batch = batch;
  fc.seed = seed;
  fc.stop_at_train01 = t.value("stop_at_train01", target_solution ? 0.0 : -1.0);
  fc.check_every = t.value("check_every", 1);

  out.fit = nn::fit(out.model, x, y, fc);
  if (target_solution) {
    const int max_rounds = 4;
    for (int round = 0; round < max_rounds; ++round) {
      out.exhaustive_error = exhaustive_cue_error(model_predictor(out.model), exp.space,
                                                  exp.cues, scheme, exp.jobs);
      if (out.exhaustive_error <= solution_target || out.fit.diverged) break;
      out.fit = nn::fit(out.model, x, y, fc);
    }
    if (out.exhaustive_error < 0)
      out.exhaustive_error = exhaustive_cue_error(model_predictor(out.model), exp.space,
                                                  exp.cues, scheme, exp.jobs);
    out.is_solution = out.exhaustive_error <= exp.epsilon();
  }
  return out;
}

Checkpoint make_checkpoint(const Experiment& exp, const std::string& scheme, uint64_t seed,
                           const TrainOutcome& out) {
  Checkpoint ckpt;
  ckpt.config = exp.model_cfg;
  ckpt.params = out.model.flat;
  ckpt.meta = {{"scheme", scheme},
               {"seed", seed},
               {"train01", out.fit.final_train01},
               {"epochs_run", out.fit.epochs_run},
               {"diverged", out.fit.diverged},
               {"epsilon", exp.epsilon()},
               {"config_hash", exp.config_hash}};
  if (out.exhaustive_error >= 0) {
    ckpt.meta["exhaustive_error"] = out.exhaustive_error;
    ckpt.meta["is_solution"] = out.is_solution;
  }
  return ckpt;
}

void check_checkpoint_matches(const Experiment& exp, const Checkpoint& ckpt,
                              const std::string& path) {
  if (ckpt.config.resolution != exp.space.resolution ||
      ckpt.config.classes != exp.cues.label_count)
    throw UserError("checkpoint does not match the config's space/cue set: " + path);
}

std::string arg_path(const json& args, const json& cfg_section, const std::string& key) {
  if (args.contains(key)) return args.at(key).get<std::string>();
  if (cfg_section.contains(key)) return cfg_section.at(key).get<std::string>();
  throw UserError("missing required input: " + key);
}

// --- commands ------------------------------------------------------------------

json cmd_gen_manifest(const Experiment& exp, const json& args, FileSink& sink) {
  const json t = section(exp.config, "train");
  const json e = section(exp.config, "eval");
  auto write_manifest = [&](const std::string& name, const std::string& scheme, Split split,
                            CellFilter filter, int count) {
    ManifestSpec m;
    m.space = exp.space;
    m.cue_members = exp.cues.members;
    m.scheme = scheme;
    m.split = split;
    m.filter = filter;
    m.count = count;
    m.seed = exp.master_seed;
    sink.jsonf(name, manifest_to_json(m));
  };
  write_manifest("manifest_diagonal_train.json", "diagonal", Split::Train, CellFilter::All,
                 t.value("n_per_class", 256));
  write_manifest("manifest_diagonal_test.json", "diagonal", Split::Test, CellFilter::All,
                 e.value("n_per_cell", 6));
  for (const auto& cue : exp.cues.members) {
    write_manifest("manifest_" + cue + "_train.json", cue, Split::Train, CellFilter::All,
                   t.value("n_per_cell", 32));
    write_manifest("manifest_" + cue + "_test.json", cue, Split::Test,
                   CellFilter::OffDiagonalOnly, e.value("n_per_cell", 6));
  }
  int dump = args.value("dump_samples", 0);
  if (dump > 0) {
    LabeledDataset ds = diag_train_set(exp, std::max(1, dump / exp.cues.label_count + 1),
                                       exp.master_seed);
    for (int i = 0; i < dump && i < static_cast<int>(ds.images.size()); ++i) {
      Image img = ds.images[static_cast<size_t>(i)];
      std::string name = "sample_" + std::to_string(i) + ".ppm";
      write_ppm(img, sink.dir / name);
      sink.index[name] = "ppm";
    }
  }
  return {{"manifests", sink.index}};
}

json cmd_train(const Experiment& exp, const json&, FileSink& sink) {
  const json t = section(exp.config, "train");
  const std::string scheme = t.value("scheme", "diagonal");
  if (scheme != "diagonal" &&
      std::find(exp.cues.members.begin(), exp.cues.members.end(), scheme) ==
          exp.cues.members.end())
    throw UserError("train.scheme must be 'diagonal' or a cue in the cue set");

  CsvWriter summary;
  auto header = bias_report_csv_header(exp.cues);
  std::vector<std::string> cols = {"seed", "train01", "epochs"};
  cols.insert(cols.end(), header.begin(), header.end());
  summary.header(cols);

  json per_seed = json::array();
  std::map<std::string, int> dominance;
  const auto seeds = exp.seeds();

  struct SeedOut {
    Checkpoint ckpt;
    BiasReport report;
    nn::FitResult fit;
  };
  std::vector<SeedOut> outs(seeds.size());
  parallel_for(
      static_cast<int64_t>(seeds.size()),
      [&](int64_t i) {
        const uint64_t seed = seeds[static_cast<size_t>(i)];
        Experiment sub = exp;
        sub.jobs = 1;  // parallelism lives at the seed level here
        TrainOutcome out = train_one(sub, scheme, seed);
        EvalOptions eo = exp.eval_options();
        eo.jobs = 1;
        eo.seed = mix_seed(exp.master_seed, fnv1a64("train-eval"), seed);
        BiasReport rep = bias_report(model_predictor(out.model), exp.space, exp.cues,
                                     exp.epsilon(), eo);
        outs[static_cast<size_t>(i)] = {make_checkpoint(exp, scheme, seed, out), std::move(rep),
                                        out.fit};
      },
      exp.jobs);

  for (size_t i = 0; i < seeds.size(); ++i) {
    const auto& out = outs[i];
    const std::string ckpt_name =
        "ckpt_" + scheme + "_seed" + std::to_string(seeds[i]) + ".ckpt";
    save_checkpoint(sink.dir / ckpt_name, out.ckpt);
    sink.index[ckpt_name] = "checkpoint";
    sink.jsonf("report_" + scheme + "_seed" + std::to_string(seeds[i]) + ".json",
               bias_report_to_json(out.report));
    std::vector<std::string> row = {std::to_string(seeds[i]), fmt_g(out.fit.final_train01),
                                    std::to_string(out.fit.epochs_run)};
    auto rep_row = bias_report_csv_row(out.report, exp.cues);
    row.insert(row.end(), rep_row.begin(), rep_row.end());
    summary.row(row);
    if (out.report.dominant_cue) ++dominance[*out.report.dominant_cue];
    json js = bias_report_to_json(out.report);
    js["seed"] = seeds[i];
    js["train01"] = out.fit.final_train01;
    per_seed.push_back(js);
  }
  sink.csv("train_summary.csv", summary);

  json dom = json::object();
  for (const auto& [cue, n] : dominance) dom[cue] = n;
  return {{"scheme", scheme}, {"seeds", per_seed}, {"dominance_counts", dom}};
}

json cmd_eval(const Experiment& exp, const json& args, FileSink& sink) {
  std::vector<std::string> paths;
  if (args.contains("checkpoints")) paths = args.at("checkpoints").get<std::vector<std::string>>();
  if (paths.empty()) throw UserError("eval needs at least one checkpoint");

  CsvWriter csv;
  auto header = bias_report_csv_header(exp.cues);
  std::vector<std::string> cols = {"checkpoint"};
  cols.insert(cols.end(), header.begin(), header.end());
  csv.header(cols);

  json reports = json::array();
  for (const auto& p : paths) {
    Checkpoint ckpt = load_checkpoint(p);
    check_checkpoint_matches(exp, ckpt, p);
    nn::Model model = model_from_checkpoint(ckpt);
    EvalOptions eo = exp.eval_options();
    eo.seed = mix_seed(exp.master_seed, fnv1a64("eval-cmd"), fnv1a64(p));
    BiasReport rep =
        bias_report(model_predictor(model), exp.space, exp.cues, exp.epsilon(), eo);
    std::vector<std::string> row = {fs::path(p).filename().string()};
    auto rep_row = bias_report_csv_row(rep, exp.cues);
    row.insert(row.end(), rep_row.begin(), rep_row.end());
    csv.row(row);
    json js = bias_report_to_json(rep);
    js["checkpoint"] = fs::path(p).filename().string();
    reports.push_back(js);
  }
  sink.csv("eval.csv", csv);
  return {{"reports", reports}};
}

json cmd_landscape(const Experiment& exp, const json& args, FileSink& sink) {
  const json l = section(exp.config, "landscape");
  Checkpoint ckpt = load_checkpoint(arg_path(args, l, "checkpoint"));
  check_checkpoint_matches(exp, ckpt, "landscape checkpoint");

  LabeledDataset ds = diag_train_set(exp, l.value("n_per_class", 64),
                                     mix_seed(exp.master_seed, fnv1a64("landscape-data")));
  LossFn loss = model_loss_fn(ckpt.config, images_tensor(ds), labels_of(ds));
  std::vector<double> center(ckpt.params.begin(), ckpt.params.end());

  auto layout = nn::param_layout(ckpt.config);
  std::span<const nn::ParamSegment> norm_layout;
  if (l.value("filter_normalize", false)) norm_layout = layout;

  PlaneGrid grid = sample_plane(center, loss, l.value("extent", 1.0), l.value("steps", 21),
                                exp.master_seed, norm_layout, exp.jobs);

  CsvWriter csv;
  csv.header({"x", "y", "loss"});
  for (int a = 0; a < grid.steps; ++a)
    for (int b = 0; b < grid.steps; ++b)
      csv.row({fmt_g(grid.offsets[static_cast<size_t>(a)]),
               fmt_g(grid.offsets[static_cast<size_t>(b)]),
               fmt_g(grid.values[static_cast<size_t>(a) * grid.steps + b])});
  sink.csv("landscape.csv", csv);
  write_pgm(grid.values, grid.steps, grid.steps, sink.dir / "landscape.pgm");
  sink.index["landscape.pgm"] = "pgm";

  return {{"steps", grid.steps},
          {"extent", grid.extent},
          {"nonfinite", grid.nonfinite_count},
          {"laplacian_mean", grid_laplacian_mean(grid)}};
}

json cmd_curvature(const Experiment& exp, const json& args, FileSink& sink) {
  const json c = section(exp.config, "curvature");
  Checkpoint ckpt = load_checkpoint(arg_path(args, c, "checkpoint"));
  check_checkpoint_matches(exp, ckpt, "curvature checkpoint");

  LabeledDataset ds = diag_train_set(exp, c.value("n_per_class", 64),
                                     mix_seed(exp.master_seed, fnv1a64("curvature-data")));
  LossFn loss = model_loss_fn(ckpt.config, images_tensor(ds), labels_of(ds));
  std::vector<double> center(ckpt.params.begin(), ckpt.params.end());

  std::vector<double> epsilons = c.value("epsilons", std::vector<double>{0.5, 1.0, 2.0});
  const int n_samples = c.value("n_samples", 100);

  CsvWriter csv;
  csv.header({"epsilon", "n_samples", "n_dropped", "kappa_hat", "std_err"});
  json rows = json::array();
  for (double eps : epsilons) {
    CurvatureEstimate est = mc_curvature(center, loss, eps, n_samples,
                                         mix_seed(exp.master_seed, fnv1a64("curvature")),
                                         exp.jobs);
    csv.row({fmt_g(est.epsilon), std::to_string(est.n_samples), std::to_string(est.n_dropped),
             fmt_g(est.kappa_hat), fmt_g(est.std_err)});
    rows.push_back({{"epsilon", est.epsilon},
                    {"kappa_hat", est.kappa_hat},
                    {"std_err", est.std_err},
                    {"n_dropped", est.n_dropped}});
  }
  sink.csv("curvature.csv", csv);
  return {{"estimates", rows}};
}

json cmd_basin(const Experiment& exp, const json& args, FileSink& sink) {
  const json b = section(exp.config, "basin");
  const std::string path = arg_path(args, b, "checkpoint");
  Checkpoint ckpt = load_checkpoint(path);
  check_checkpoint_matches(exp, ckpt, path);
  const std::string base_cue = ckpt.meta.value("scheme", "");
  if (base_cue.empty() || base_cue == "diagonal")
    throw UserError("basin needs a checkpoint trained on a single cue");

  nn::Model base = model_from_checkpoint(ckpt);
  if (!is_solution_exhaustive(base, exp.space, exp.cues, base_cue, exp.epsilon(), exp.jobs))
    throw UserError("basin base checkpoint is not an epsilon-solution of its cue");

  LabeledDataset train = diag_train_set(exp, b.value("n_per_class", 160),
                                        mix_seed(exp.master_seed, fnv1a64("basin-data")));
  RetrainSpec retrain;
  retrain.train = &train;
  retrain.fit.opt = exp.optimizer();
  retrain.fit.epochs = b.value("retrain_epochs", 25);
  retrain.fit.batch = b.value("batch", 64);

  std::vector<double> radii = b.value("radii", std::vector<double>{0, 1, 2, 4, 8, 16});
  EvalOptions eo = exp.eval_options();
  BasinSweep sweep = basin_sweep(base, base_cue, exp.space, exp.cues, radii,
                                 b.value("n_seeds", 5), retrain, eo, exp.master_seed, exp.jobs);

  CsvWriter csv;
  std::vector<std::string> cols = {"radius", "n_diverged"};
  auto header = bias_report_csv_header(exp.cues);
  cols.insert(cols.end(), header.begin(), header.end());
  csv.header(cols);
  for (const auto& pt : sweep.points) {
    std::vector<std::string> row = {fmt_g(pt.radius), std::to_string(pt.n_diverged)};
    auto rep_row = bias_report_csv_row(pt.mean_report, exp.cues);
    row.insert(row.end(), rep_row.begin(), rep_row.end());
    csv.row(row);
  }
  sink.csv("basin.csv", csv);

  return {{"base_cue", sweep.base_cue},
          {"radii", radii},
          {"basin_size", sweep.basin_size ? json(*sweep.basin_size) : json()}};
}

json cmd_connect(const Experiment& exp, const json& args, FileSink& sink) {
  const json c = section(exp.config, "connect");
  Checkpoint ck_p = load_checkpoint(arg_path(args, c, "endpoint_p"));
  Checkpoint ck_a = load_checkpoint(arg_path(args, c, "endpoint_a"));
  check_checkpoint_matches(exp, ck_p, "endpoint_p");
  check_checkpoint_matches(exp, ck_a, "endpoint_a");
  const std::string cue_p = c.value("cue_p", ck_p.meta.value("scheme", ""));
  const std::string cue_a = c.value("cue_a", ck_a.meta.value("scheme", ""));
  if (cue_p.empty() || cue_a.empty())
    throw UserError("connect endpoints must name their cues (checkpoint meta or config)");

  for (const auto* ck : {&ck_p, &ck_a}) {
    nn::Model m = model_from_checkpoint(*ck);
    if (!is_solution_exhaustive(m, exp.space, exp.cues, "diagonal", exp.epsilon(), exp.jobs))
      throw UserError("connect endpoint is not a diagonal solution");
  }

  LabeledDataset train = diag_train_set(exp, c.value("n_per_class", 160),
                                        mix_seed(exp.master_seed, fnv1a64("connect-data")));
  PathTrainConfig tc;
  tc.epochs = c.value("epochs", 60);
  tc.batch = c.value("batch", 48);
  tc.lr = c.value("lr", 1e-3);
  tc.seed = exp.master_seed;
  tc.eps_path = c.value("eps_path", 0.02);
  tc.grid_points = c.value("t_resolution", 21);

  PathTrainResult tr = train_path(exp.model_cfg, ck_p.params, ck_a.params, train, exp.space,
                                  exp.cues, tc, exp.jobs);

  Checkpoint control;
  control.config = exp.model_cfg;
  control.params = tr.path.theta_c;
  control.meta = {{"scheme", "path-control"},
                  {"cue_p", cue_p},
                  {"cue_a", cue_a},
                  {"converged", tr.converged},
                  {"max_diag01", tr.max_diag01}};
  save_checkpoint(sink.dir / "path_control.ckpt", control);
  sink.index["path_control.ckpt"] = "checkpoint";

  json out = {{"cue_p", cue_p},
              {"cue_a", cue_a},
              {"converged", tr.converged},
              {"max_diag01", tr.max_diag01}};
  try {
    EvalOptions eo = exp.eval_options();
    PathReport rep = locate_boundary(exp.model_cfg, tr.path, exp.space, exp.cues, cue_p, cue_a,
                                     tc.grid_points, eo, exp.jobs);
    CsvWriter csv;
    csv.header({"t", "diag_loss", "acc_p", "acc_a"});
    for (size_t i = 0; i < rep.t_grid.size(); ++i)
      csv.row({fmt_g(rep.t_grid[i]), fmt_g(rep.diag_loss[i]), fmt_g(rep.acc_p[i]),
               fmt_g(rep.acc_a[i])});
    sink.csv("path.csv", csv);
    out["degenerate"] = false;
    out["crossings"] = rep.crossings;
    out["boundary_t"] = rep.boundary_t;
    out["arc_total"] = rep.arc_total;
    out["preferred_arc_fraction"] = rep.preferred_arc_fraction;
    out["preferred_t_fraction"] = rep.boundary_t;
  } catch (const NoBiasShiftError& e) {
    out["degenerate"] = true;
    out["degenerate_reason"] = e.what();
  }
  return out;
}

json cmd_kcc(const Experiment& exp, const json&, FileSink& sink) {
  const json k = section(exp.config, "kcc");
  const std::string family = k.value("family", "convnet");
  if (family != "convnet" && family != "ffnet")
    throw UserError("kcc.family must be convnet or ffnet");
  std::vector<std::string> cue_list =
      k.value("cues", std::vector<std::string>(exp.cues.members));

  KccSweepConfig sc;
  sc.width_grid = k.value("width_grid", std::vector<int>{1, 2, 3, 4, 6, 8, 12, 16});
  sc.budget_epochs = k.value("budget_epochs", 50);
  sc.n_seeds = k.value("n_seeds", 2);
  sc.delta = k.value("delta", 0.01);
  sc.jobs = exp.jobs;
  const int n_per_cell = k.value("n_per_cell", 4);

  auto family_cfg = [&](int width) {
    nn::ModelConfig cfg = exp.model_cfg;
    cfg.arch = family == "convnet" ? nn::Arch::Convnet : nn::Arch::FFnet;
    cfg.widths = family == "convnet" ? nn::convnet_widths(width) : nn::ffnet_widths_scaled(width);
    return cfg;
  };
  ParamCountFn params_of = [&](int width) { return nn::param_count(family_cfg(width)); };

  CsvWriter trace_csv;
  trace_csv.header({"cue", "width", "params", "best_error", "seeds", "budget_epochs",
                    "budget_doubled"});
  json results = json::array();

  for (const auto& cue : cue_list) {
    LabeledDataset ds =
        build_cue_dataset(exp.space, exp.cues, cue, n_per_cell,
                          mix_seed(exp.master_seed, fnv1a64("kcc-data") ^ fnv1a64(cue)),
                          Split::Train, CellFilter::All);
    nn::Tensor x = images_tensor(ds);
    std::vector<int> y = labels_of(ds);

    TrainProbe probe = [&](int width, int seed_idx, int budget) -> double {
      nn::Model model = nn::Model::create(
          family_cfg(width),
          mix_seed(exp.master_seed, fnv1a64("kcc-init") ^ fnv1a64(cue),
                   static_cast<uint64_t>(width) * 1000 + static_cast<uint64_t>(seed_idx)));
      nn::FitConfig fc;
      fc.opt = exp.optimizer();
      fc.epochs = budget;
      fc.batch = 64;
      fc.seed = mix_seed(exp.master_seed, fnv1a64("kcc-fit") ^ fnv1a64(cue),
                         static_cast<uint64_t>(width) * 1000 + static_cast<uint64_t>(seed_idx));
      fc.stop_at_train01 = sc.delta / 2.0;
      auto res = nn::fit(model, x, y, fc);
      return res.diverged ? 1.0 : res.best_train01;
    };

    KccResult r = kcc_sweep(cue, family, params_of, probe, sc);
    for (const auto& pt : r.trace)
      trace_csv.row({cue, std::to_string(pt.width), std::to_string(pt.params),
                     fmt_g(pt.best_error), std::to_string(pt.seeds),
                     std::to_string(pt.budget_epochs), pt.budget_doubled ? "1" : "0"});
    json rj = kcc_result_to_json(r);
    sink.jsonf("kcc_" + cue + ".json", rj);
    results.push_back(rj);
  }
  sink.csv("kcc_trace.csv", trace_csv);
  return {{"family", family}, {"results", results}};
}

}  // namespace

EvalOptions Experiment::eval_options() const {
  const json e = section(config, "eval");
  EvalOptions o;
  o.n_per_cell = e.value("n_per_cell", 6);
  o.exhaustive = e.value("exhaustive", false);
  o.seed = mix_seed(master_seed, fnv1a64("eval"));
  o.jobs = jobs;
  return o;
}

double Experiment::epsilon() const { return section(config, "eval").value("epsilon", 0.01); }

std::vector<uint64_t> Experiment::seeds() const {
  const json s = section(config, "seeds");
  if (s.is_array()) return s.get<std::vector<uint64_t>>();
  const int count = s.value("count", 1);
  const uint64_t base = s.value("base", master_seed);
  std::vector<uint64_t> out;
  for (int i = 0; i < count; ++i) out.push_back(base + static_cast<uint64_t>(i));
  return out;
}

nn::OptConfig Experiment::optimizer() const {
  const json o = section(config, "optimizer");
  nn::OptConfig opt;
  std::string kind = o.value("kind", "adam");
  if (kind != "adam" && kind != "sgd") throw UserError("optimizer.kind must be adam or sgd");
  opt.kind = kind == "adam" ? nn::OptConfig::Kind::Adam : nn::OptConfig::Kind::Sgd;
  opt.lr = o.value("lr", kind == "adam" ? 1e-3 : 5e-3);
  opt.momentum = o.value("momentum", 0.9);
  opt.beta1 = o.value("beta1", 0.9);
  opt.beta2 = o.value("beta2", 0.999);
  opt.eps = o.value("eps", 1e-8);
  opt.weight_decay = o.value("weight_decay", 0.0);
  return opt;
}

void validate_config(const nlohmann::json& config) {
  check_keys(config, "config",
             {"space", "resolution", "cues", "model", "optimizer", "train", "eval", "seeds",
              "landscape", "curvature", "basin", "connect", "kcc", "seed", "out_dir"});
  if (!config.contains("space")) throw UserError("config.space is required");
  if (!config.contains("cues")) throw UserError("config.cues is required");
  if (!config.contains("seed")) throw UserError("config.seed is required");

  if (config.at("space").is_object())
    check_keys(config.at("space"), "space", {"resolution", "scale_range", "factors"});
  check_keys(section(config, "optimizer"), "optimizer",
             {"kind", "lr", "momentum", "beta1", "beta2", "eps", "weight_decay"});
  check_keys(section(config, "train"), "train",
             {"scheme", "epochs", "batch", "n_per_class", "n_per_cell", "stop_at_train01",
              "check_every", "target_solution", "solution_target"});
  check_keys(section(config, "eval"), "eval", {"n_per_cell", "epsilon", "exhaustive"});
  if (config.contains("seeds") && !config.at("seeds").is_array())
    check_keys(config.at("seeds"), "seeds", {"count", "base"});
  check_keys(section(config, "landscape"), "landscape",
             {"extent", "steps", "filter_normalize", "n_per_class", "checkpoint"});
  check_keys(section(config, "curvature"), "curvature",
             {"epsilons", "n_samples", "n_per_class", "checkpoint"});
  check_keys(section(config, "basin"), "basin",
             {"radii", "n_seeds", "retrain_epochs", "n_per_class", "batch", "checkpoint"});
  check_keys(section(config, "connect"), "connect",
             {"endpoint_p", "endpoint_a", "cue_p", "cue_a", "epochs", "batch", "lr", "eps_path",
              "t_resolution", "n_per_class"});
  check_keys(section(config, "kcc"), "kcc",
             {"family", "width_grid", "budget_epochs", "n_seeds", "delta", "n_per_cell", "cues"});
}

Experiment load_experiment(const nlohmann::json& config, std::optional<uint64_t> seed_override,
                           int jobs) {
  validate_config(config);
  Experiment exp;
  exp.config = config;
  if (seed_override) exp.config["seed"] = *seed_override;
  exp.master_seed = exp.config.at("seed").get<uint64_t>();
  exp.space = space_from_config(exp.config);
  exp.cues = make_cue_set(exp.space, exp.config.at("cues").get<std::vector<std::string>>());
  exp.model_cfg = model_from_config(exp.config, exp.space, exp.cues);
  exp.jobs = jobs > 0 ? jobs : default_jobs();
  exp.config_hash = hex64(fnv1a64(exp.config.dump()));
  return exp;
}

nlohmann::json run_command(const Experiment& exp, const std::string& command,
                           const nlohmann::json& args, const std::filesystem::path& out_dir) {
  fs::create_directories(out_dir);
  FileSink sink{out_dir, exp.config_hash};
  json summary;
  if (command == "gen-manifest")
    summary = cmd_gen_manifest(exp, args, sink);
  else if (command == "train")
    summary = cmd_train(exp, args, sink);
  else if (command == "eval")
    summary = cmd_eval(exp, args, sink);
  else if (command == "landscape")
    summary = cmd_landscape(exp, args, sink);
  else if (command == "curvature")
    summary = cmd_curvature(exp, args, sink);
  else if (command == "basin")
    summary = cmd_basin(exp, args, sink);
  else if (command == "connect")
    summary = cmd_connect(exp, args, sink);
  else if (command == "kcc")
    summary = cmd_kcc(exp, args, sink);
  else
    throw UserError("unknown command: " + command);
  summary["command"] = command;
  summary["config_hash"] = exp.config_hash;
  sink.jsonf(command == "gen-manifest" ? "gen_manifest_summary.json" : command + "_summary.json",
             summary);
  return summary;
}

}  // namespace cuelab
