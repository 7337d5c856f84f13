#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cuelab/diagnostics.hpp"
#include "cuelab/factorspace.hpp"
#include "cuelab/nn.hpp"

namespace cuelab {

// Scalar field over parameter space. Evaluations at distinct points must be
// independent; the geometry routines call this from parallel workers.
using LossFn = std::function<double(std::span<const double>)>;

// Mean cross-entropy of the model family on a fixed batch, as a function of
// the flat parameter vector (forward runs in float, the mean in double).
LossFn model_loss_fn(const nn::ModelConfig& cfg, nn::Tensor images, std::vector<int> labels);

struct PlaneGrid {
  double extent = 0.0;
  int steps = 0;
  std::vector<double> offsets;  // signed axis offsets, symmetric about 0
  std::vector<double> values;   // values[a * steps + b] = loss(center + off[a]*dx + off[b]*dy)
  int nonfinite_count = 0;      // flagged sentinels (stored as NaN)
};

// Loss surface over a random 2-plane through `center`. Directions are unit
// Gaussian vectors, the second orthogonalized against the first. With
// `layout` given, directions are filter-normalized per parameter segment.
PlaneGrid sample_plane(std::span<const double> center, const LossFn& loss, double extent,
                       int steps, uint64_t seed,
                       std::span<const nn::ParamSegment> filter_normalize_layout = {},
                       int jobs = 0);

// Mean of the grid's discrete five-point Laplacian magnitudes; a scale proxy
// for comparing surface sharpness between grids.
double grid_laplacian_mean(const PlaneGrid& grid);

struct CurvatureEstimate {
  double epsilon = 0.0;
  int n_samples = 0;
  int n_dropped = 0;
  double kappa_hat = 0.0;
  double std_err = 0.0;
};

// Sphere-averaged loss increment around `center`:
//   kappa = (mean_r f(x + eps*r) - f(x)) / eps^2,  r uniform on the unit sphere.
// Non-finite samples are dropped and counted; more than 10% dropped is an error.
CurvatureEstimate mc_curvature(std::span<const double> center, const LossFn& loss,
                               double epsilon, int n_samples, uint64_t seed, int jobs = 0);

// --- basin of attraction -----------------------------------------------------

struct BasinPoint {
  double radius = 0.0;
  BiasReport mean_report;  // averaged over perturbation seeds
  int n_diverged = 0;
};

struct BasinSweep {
  std::string base_cue;
  std::vector<BasinPoint> points;
  // Largest radius whose averaged base-cue accuracy clears 1/L + margin;
  // absent when even the smallest radius fails.
  std::optional<double> basin_size;
};

struct RetrainSpec {
  const LabeledDataset* train = nullptr;  // diagonal training set
  nn::FitConfig fit;
};

// Perturbs the base solution isotropically at each radius, retrains from the
// perturbed point, and reports averaged per-cue accuracies. Radii must be
// strictly increasing. Retraining divergence is excluded from averages and
// counted per radius.
BasinSweep basin_sweep(const nn::Model& base, const std::string& base_cue,
                       const FactorSpace& space, const CueSet& cues,
                       std::span<const double> radii, int n_seeds, const RetrainSpec& retrain,
                       const EvalOptions& eval, uint64_t seed, int jobs = 0);

// Uniform direction on the unit sphere in dimension dim.
std::vector<double> unit_sphere_sample(int64_t dim, std::mt19937_64& rng);

}  // namespace cuelab
