#include "cuelab/landscape.hpp"

#include <cmath>
#include <memory>

#include "cuelab/util.hpp"

namespace cuelab {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void normalize(std::vector<double>& v) {
  double n = std::sqrt(dot(v, v));
  if (n == 0) throw InternalError("zero-norm direction");
  for (double& x : v) x /= n;
}

std::vector<double> gaussian_vector(int64_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(static_cast<size_t>(dim));
  for (double& x : v) x = d(rng);
  return v;
}

}  // namespace

std::vector<double> unit_sphere_sample(int64_t dim, std::mt19937_64& rng) {
  auto v = gaussian_vector(dim, rng);
  normalize(v);
  return v;
}

LossFn model_loss_fn(const nn::ModelConfig& cfg, nn::Tensor images, std::vector<int> labels) {
  auto shared = std::make_shared<std::pair<nn::Tensor, std::vector<int>>>(std::move(images),
                                                                          std::move(labels));
  const int64_t dim = nn::param_count(cfg);
  return [cfg, shared, dim](std::span<const double> theta) -> double {
    if (static_cast<int64_t>(theta.size()) != dim)
      throw InternalError("parameter dimension mismatch in loss function");
    nn::Model m = nn::Model::create(cfg, 0);
    for (size_t i = 0; i < theta.size(); ++i) m.flat[i] = static_cast<float>(theta[i]);
    nn::TapeT<float> tape;
    int x = tape.input(shared->first);
    int logits = m.forward(tape, x);
    int loss = tape.softmax_xent_mean(logits, shared->second);
    return static_cast<double>(tape.value(loss).data[0]);
  };
}

PlaneGrid sample_plane(std::span<const double> center, const LossFn& loss, double extent,
                       int steps, uint64_t seed,
                       std::span<const nn::ParamSegment> filter_normalize_layout, int jobs) {
  if (steps < 3) throw UserError("plane grid needs at least 3 steps");
  if (extent < 0) throw UserError("extent must be non-negative");
  const int64_t dim = static_cast<int64_t>(center.size());

  auto rx = rng_stream(seed, fnv1a64("plane-dir"), 0);
  auto ry = rng_stream(seed, fnv1a64("plane-dir"), 1);
  std::vector<double> dx = gaussian_vector(dim, rx);
  std::vector<double> dy = gaussian_vector(dim, ry);
  normalize(dx);
  double proj = dot(dy, dx);
  for (size_t i = 0; i < dy.size(); ++i) dy[i] -= proj * dx[i];
  normalize(dy);

  if (!filter_normalize_layout.empty()) {
    for (const auto& seg : filter_normalize_layout) {
      auto scale_segment = [&](std::vector<double>& d) {
        double pn = 0, dn = 0;
        for (int64_t i = 0; i < seg.count; ++i) {
          pn += center[static_cast<size_t>(seg.offset + i)] * center[static_cast<size_t>(seg.offset + i)];
          dn += d[static_cast<size_t>(seg.offset + i)] * d[static_cast<size_t>(seg.offset + i)];
        }
        if (dn == 0) return;
        double s = std::sqrt(pn / dn);
        for (int64_t i = 0; i < seg.count; ++i) d[static_cast<size_t>(seg.offset + i)] *= s;
      };
      scale_segment(dx);
      scale_segment(dy);
    }
  }

  PlaneGrid grid;
  grid.extent = extent;
  grid.steps = steps;
  grid.offsets.resize(static_cast<size_t>(steps));
  for (int a = 0; a < steps; ++a)
    grid.offsets[static_cast<size_t>(a)] =
        extent * static_cast<double>(2 * a - (steps - 1)) / static_cast<double>(steps - 1);
  grid.values.assign(static_cast<size_t>(steps) * steps, 0.0);

  std::vector<int> nonfinite(static_cast<size_t>(steps) * steps, 0);
  parallel_for(
      static_cast<int64_t>(steps) * steps,
      [&](int64_t cell) {
        const int a = static_cast<int>(cell / steps), b = static_cast<int>(cell % steps);
        std::vector<double> theta(center.begin(), center.end());
        const double xa = grid.offsets[static_cast<size_t>(a)];
        const double yb = grid.offsets[static_cast<size_t>(b)];
        for (int64_t i = 0; i < dim; ++i)
          theta[static_cast<size_t>(i)] += xa * dx[static_cast<size_t>(i)] + yb * dy[static_cast<size_t>(i)];
        double v = loss(theta);
        if (!std::isfinite(v)) {
          nonfinite[static_cast<size_t>(cell)] = 1;
          v = std::numeric_limits<double>::quiet_NaN();
        }
        grid.values[static_cast<size_t>(cell)] = v;
      },
      jobs);
  for (int f : nonfinite) grid.nonfinite_count += f;
  return grid;
}

double grid_laplacian_mean(const PlaneGrid& grid) {
  const int s = grid.steps;
  double sum = 0;
  int64_t n = 0;
  for (int a = 1; a + 1 < s; ++a)
    for (int b = 1; b + 1 < s; ++b) {
      auto v = [&](int i, int j) { return grid.values[static_cast<size_t>(i) * s + j]; };
      double lap = v(a + 1, b) + v(a - 1, b) + v(a, b + 1) + v(a, b - 1) - 4 * v(a, b);
      if (std::isfinite(lap)) {
        sum += std::abs(lap);
        ++n;
      }
    }
  return n ? sum / static_cast<double>(n) : 0.0;
}

CurvatureEstimate mc_curvature(std::span<const double> center, const LossFn& loss,
                               double epsilon, int n_samples, uint64_t seed, int jobs) {
  if (!(epsilon > 0)) throw UserError("epsilon must be positive");
  if (n_samples < 2) throw UserError("need at least 2 samples");
  const int64_t dim = static_cast<int64_t>(center.size());
  const double f0 = loss(center);

  std::vector<double> vals(static_cast<size_t>(n_samples),
                           std::numeric_limits<double>::quiet_NaN());
  parallel_for(
      n_samples,
      [&](int64_t i) {
        auto rng = rng_stream(seed, fnv1a64("curvature"), static_cast<uint64_t>(i));
        auto r = unit_sphere_sample(dim, rng);
        std::vector<double> theta(center.begin(), center.end());
        for (int64_t j = 0; j < dim; ++j)
          theta[static_cast<size_t>(j)] += epsilon * r[static_cast<size_t>(j)];
        double f = loss(theta);
        if (std::isfinite(f))
          vals[static_cast<size_t>(i)] = (f - f0) / (epsilon * epsilon);
      },
      jobs);

  CurvatureEstimate est;
  est.epsilon = epsilon;
  est.n_samples = n_samples;
  double sum = 0;
  int kept = 0;
  for (double v : vals) {
    if (std::isfinite(v)) {
      sum += v;
      ++kept;
    } else {
      ++est.n_dropped;
    }
  }
  if (est.n_dropped * 10 > n_samples)
    throw InternalError("more than 10% of curvature samples were non-finite");
  if (kept < 2) throw InternalError("not enough finite curvature samples");
  est.kappa_hat = sum / kept;
  double ss = 0;
  for (double v : vals)
    if (std::isfinite(v)) ss += (v - est.kappa_hat) * (v - est.kappa_hat);
  est.std_err = std::sqrt(ss / (kept - 1)) / std::sqrt(static_cast<double>(kept));
  return est;
}

BasinSweep basin_sweep(const nn::Model& base, const std::string& base_cue,
                       const FactorSpace& space, const CueSet& cues,
                       std::span<const double> radii, int n_seeds, const RetrainSpec& retrain,
                       const EvalOptions& eval, uint64_t seed, int jobs) {
  if (radii.empty()) throw UserError("no radii given");
  for (size_t i = 1; i < radii.size(); ++i)
    if (!(radii[i] > radii[i - 1])) throw UserError("radii must be strictly increasing");
  if (n_seeds < 1) throw UserError("n_seeds must be >= 1");
  if (!retrain.train) throw UserError("no retraining set given");

  const nn::Tensor train_x = images_tensor(*retrain.train);
  const std::vector<int> train_y = labels_of(*retrain.train);
  const int64_t dim = base.param_dim();
  const int64_t n_jobs = static_cast<int64_t>(radii.size()) * n_seeds;

  struct JobOut {
    BiasReport report;
    bool diverged = false;
  };
  std::vector<JobOut> outs(static_cast<size_t>(n_jobs));

  parallel_for(
      n_jobs,
      [&](int64_t job) {
        const size_t ri = static_cast<size_t>(job / n_seeds);
        const double radius = radii[ri];
        nn::Model model = base;
        if (radius > 0) {
          auto rng = rng_stream(seed, fnv1a64("basin-perturb"), static_cast<uint64_t>(job));
          auto v = unit_sphere_sample(dim, rng);
          for (int64_t i = 0; i < dim; ++i)
            model.flat[static_cast<size_t>(i)] += static_cast<float>(radius * v[static_cast<size_t>(i)]);
        }
        nn::FitConfig fc = retrain.fit;
        fc.seed = mix_seed(seed, fnv1a64("basin-fit"), static_cast<uint64_t>(job));
        auto res = nn::fit(model, train_x, train_y, fc);
        JobOut out;
        out.diverged = res.diverged;
        if (!res.diverged) {
          EvalOptions eo = eval;
          eo.seed = mix_seed(eval.seed, fnv1a64("basin-eval"), static_cast<uint64_t>(job));
          eo.jobs = 1;
          out.report = bias_report(model_predictor(model), space, cues, 0.01, eo);
        }
        outs[static_cast<size_t>(job)] = std::move(out);
      },
      jobs);

  BasinSweep sweep;
  sweep.base_cue = base_cue;
  const double chance = 1.0 / cues.label_count;
  for (size_t ri = 0; ri < radii.size(); ++ri) {
    BasinPoint pt;
    pt.radius = radii[ri];
    int kept = 0;
    BiasReport mean;
    mean.epsilon = 0.01;
    mean.diagonal_acc = 0;
    for (const auto& cue : cues.members) mean.per_cue.emplace_back(cue, 0.0);
    for (int si = 0; si < n_seeds; ++si) {
      const auto& out = outs[ri * static_cast<size_t>(n_seeds) + static_cast<size_t>(si)];
      if (out.diverged) {
        ++pt.n_diverged;
        continue;
      }
      ++kept;
      mean.diagonal_acc += out.report.diagonal_acc;
      for (size_t c = 0; c < mean.per_cue.size(); ++c)
        mean.per_cue[c].second += out.report.per_cue[c].second;
    }
    if (kept > 0) {
      mean.diagonal_acc /= kept;
      for (auto& [name, acc] : mean.per_cue) acc /= kept;
    }
    double best = -1;
    std::string best_cue;
    for (const auto& [name, acc] : mean.per_cue)
      if (acc > best) {
        best = acc;
        best_cue = name;
      }
    if (best > chance + kDominanceMargin) mean.dominant_cue = best_cue;
    pt.mean_report = std::move(mean);
    sweep.points.push_back(std::move(pt));
  }
  for (const auto& pt : sweep.points) {
    if (pt.mean_report.cue_acc(base_cue) > chance + kDominanceMargin)
      sweep.basin_size = pt.radius;
  }
  return sweep;
}

}  // namespace cuelab
