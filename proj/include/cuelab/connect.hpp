#pragma once

#include <span>
#include <string>
#include <vector>

#include "cuelab/diagnostics.hpp"
#include "cuelab/factorspace.hpp"
#include "cuelab/nn.hpp"
#include "cuelab/util.hpp"

namespace cuelab {

// Quadratic Bezier curve in parameter space. Endpoints are fixed; only the
// control point is trainable, so the curve passes through both endpoints
// exactly for any control point.
struct PathSpec {
  std::vector<float> theta_p;  // preferred-cue endpoint
  std::vector<float> theta_a;  // averted-cue endpoint
  std::vector<float> theta_c;  // control point
};

// phi(t) = (1-t)^2 p + 2t(1-t) c + t^2 a
std::vector<float> point_on_path(const PathSpec& path, double t);

// Exact arc length of the quadratic curve via composite Simpson on the
// closed-form speed ||phi'(t)||. intervals must be even.
double path_arc_length(const PathSpec& path, double t0, double t1, int intervals = 200);

struct PathTrainConfig {
  int epochs = 60;
  int batch = 48;
  double lr = 1e-3;
  uint64_t seed = 0;
  double eps_path = 0.02;  // max 0-1 diagonal loss tolerated along the path
  int grid_points = 21;    // convergence check grid
};

struct PathTrainResult {
  PathSpec path;
  bool converged = false;
  double max_diag01 = 1.0;  // worst exhaustive diagonal 0-1 loss over the grid
  int epochs_run = 0;
};

// Minimizes E_{t~U(0,1)} CE(phi(t)) over the control point only, one t drawn
// per optimization step, batch resampled per step. Endpoints must already be
// diagonal solutions; they are never modified.
PathTrainResult train_path(const nn::ModelConfig& cfg, std::span<const float> theta_p,
                           std::span<const float> theta_a, const LabeledDataset& diag_train,
                           const FactorSpace& space, const CueSet& cues,
                           const PathTrainConfig& tc, int jobs = 0);

// Raised when the accuracy difference never changes sign along the path.
struct NoBiasShiftError : UserError {
  using UserError::UserError;
};

struct PathReport {
  std::vector<double> t_grid;
  std::vector<double> diag_loss;  // exhaustive diagonal 0-1 loss
  std::vector<double> acc_p, acc_a;
  int crossings = 0;
  double boundary_t = 0.0;             // first sign change, refined by bisection
  double arc_total = 0.0;
  double preferred_arc_fraction = 0.0;  // arc(0 -> boundary) / arc(0 -> 1)
};

// Accuracy and loss profiles along the trained path plus the bias-shift
// boundary. Throws NoBiasShiftError when acc_p - acc_a never crosses zero.
PathReport locate_boundary(const nn::ModelConfig& cfg, const PathSpec& path,
                           const FactorSpace& space, const CueSet& cues,
                           const std::string& cue_p, const std::string& cue_a,
                           int t_resolution, const EvalOptions& eval, int jobs = 0);

}  // namespace cuelab
