#include "cuelab/kcc.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "cuelab/util.hpp"

namespace cuelab {

namespace {

struct ProbeOutcome {
  double best_error = 1.0;
  bool all_seeds_pass = false;
};

ProbeOutcome run_width(const TrainProbe& probe, int width, int n_seeds, int budget, int jobs) {
  std::vector<double> errs(static_cast<size_t>(n_seeds), 1.0);
  parallel_for(
      n_seeds, [&](int64_t s) { errs[static_cast<size_t>(s)] = probe(width, static_cast<int>(s), budget); },
      jobs);
  ProbeOutcome out;
  out.best_error = *std::min_element(errs.begin(), errs.end());
  out.all_seeds_pass = true;
  for (double e : errs)
    if (!(e < 1.0)) out.all_seeds_pass = false;
  return out;
}

}  // namespace

KccResult kcc_sweep(const std::string& cue, const std::string& family,
                    const ParamCountFn& params_of, const TrainProbe& probe,
                    const KccSweepConfig& cfg) {
  if (cfg.width_grid.empty()) throw UserError("empty width grid");
  for (size_t i = 1; i < cfg.width_grid.size(); ++i)
    if (cfg.width_grid[i] <= cfg.width_grid[i - 1])
      throw UserError("width grid must be strictly increasing");
  if (!(cfg.delta > 0 && cfg.delta < 1)) throw UserError("delta must be in (0, 1)");
  if (cfg.n_seeds < 1) throw UserError("n_seeds must be >= 1");

  KccResult res;
  res.cue = cue;
  res.family = family;
  res.delta = cfg.delta;

  // Smallest width where every seed memorized; a total failure above it is
  // treated as an optimization failure and retried with a doubled budget.
  int smallest_all_pass = -1;

  auto measure = [&](int width) -> double {
    ProbeOutcome out = run_width(probe, width, cfg.n_seeds, cfg.budget_epochs, cfg.jobs);
    bool doubled = false;
    if (!(out.best_error < cfg.delta) && smallest_all_pass >= 0 && smallest_all_pass < width) {
      doubled = true;
      ProbeOutcome retry = run_width(probe, width, cfg.n_seeds, 2 * cfg.budget_epochs, cfg.jobs);
      if (retry.best_error < out.best_error) out = retry;
    }
    KccTracePoint pt;
    pt.width = width;
    pt.params = params_of(width);
    pt.best_error = out.best_error;
    pt.seeds = cfg.n_seeds;
    pt.budget_epochs = doubled ? 2 * cfg.budget_epochs : cfg.budget_epochs;
    pt.budget_doubled = doubled;
    res.trace.push_back(pt);
    if (out.best_error < cfg.delta && out.all_seeds_pass &&
        (smallest_all_pass < 0 || width < smallest_all_pass))
      smallest_all_pass = width;
    return out.best_error;
  };

  // Full grid first: the trace reports every width, and passing widths above
  // the first one are cheap because training stops early once memorized.
  int first_pass = -1, last_fail_below = -1;
  for (int width : cfg.width_grid) {
    double err = measure(width);
    if (err < cfg.delta) {
      if (first_pass < 0) first_pass = width;
    } else if (first_pass < 0) {
      last_fail_below = width;
    }
  }

  if (first_pass < 0) {
    res.min_params.reset();
    res.largest_width_error = res.trace.back().best_error;
    return res;
  }

  // Integer bisection between the bracketing grid widths.
  int fail_width = last_fail_below, pass_width = first_pass;
  while (fail_width >= 0 && pass_width - fail_width > 1) {
    const int mid = fail_width + (pass_width - fail_width) / 2;
    if (measure(mid) < cfg.delta)
      pass_width = mid;
    else
      fail_width = mid;
  }

  res.min_width = pass_width;
  res.min_params = params_of(pass_width);
  std::sort(res.trace.begin(), res.trace.end(),
            [](const KccTracePoint& a, const KccTracePoint& b) { return a.width < b.width; });
  return res;
}

nlohmann::json kcc_result_to_json(const KccResult& r) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& pt : r.trace)
    trace.push_back({{"width", pt.width},
                     {"params", pt.params},
                     {"best_error", pt.best_error},
                     {"seeds", pt.seeds},
                     {"budget_epochs", pt.budget_epochs},
                     {"budget_doubled", pt.budget_doubled}});
  nlohmann::json j = {{"cue", r.cue},
                      {"family", r.family},
                      {"delta", r.delta},
                      {"trace", trace}};
  if (r.min_params) {
    j["min_params"] = *r.min_params;
    j["min_width"] = r.min_width;
  } else {
    j["min_params"] = "not reached";
    j["largest_width_error"] = r.largest_width_error;
  }
  return j;
}

}  // namespace cuelab
