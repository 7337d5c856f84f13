#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace cuelab {

// Best training error achieved at (width, seed ordinal) within an epoch budget.
using TrainProbe = std::function<double(int width, int seed_idx, int budget_epochs)>;

// Exact parameter count of the family member at a width.
using ParamCountFn = std::function<int64_t(int width)>;

struct KccTracePoint {
  int width = 0;
  int64_t params = 0;
  double best_error = 1.0;  // best over seeds, at the best epoch
  int seeds = 0;
  int budget_epochs = 0;
  bool budget_doubled = false;
};

struct KccResult {
  std::string cue;
  std::string family;
  double delta = 0.01;
  std::optional<int64_t> min_params;  // absent: no width in the grid memorized the cue
  int min_width = 0;                  // valid when min_params is set
  double largest_width_error = 1.0;   // recorded when min_params is absent
  std::vector<KccTracePoint> trace;
};

struct KccSweepConfig {
  std::vector<int> width_grid;  // strictly increasing
  int budget_epochs = 60;
  int n_seeds = 2;
  double delta = 0.01;
  int jobs = 0;
};

// Walks the width grid upward until some seed memorizes the cue (best training
// error < delta), then bisects integer widths between the failing and passing
// brackets. A width that fails every seed although a smaller width passed all
// of them is treated as an optimization failure and retried once with a
// doubled budget.
KccResult kcc_sweep(const std::string& cue, const std::string& family,
                    const ParamCountFn& params_of, const TrainProbe& probe,
                    const KccSweepConfig& cfg);

nlohmann::json kcc_result_to_json(const KccResult& r);

}  // namespace cuelab
