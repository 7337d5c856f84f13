#include "cuelab/connect.hpp"

#include <cmath>

namespace cuelab {

namespace {

void check_dims(const PathSpec& path) {
  if (path.theta_p.size() != path.theta_a.size() || path.theta_p.size() != path.theta_c.size())
    throw UserError("path endpoint/control dimension mismatch");
}

// ||phi'(t)|| from the three pairwise dot products of u = c - p, v = a - c.
struct Speed {
  double uu, uv, vv;

  explicit Speed(const PathSpec& path) {
    uu = uv = vv = 0;
    for (size_t i = 0; i < path.theta_p.size(); ++i) {
      const double u = static_cast<double>(path.theta_c[i]) - path.theta_p[i];
      const double v = static_cast<double>(path.theta_a[i]) - path.theta_c[i];
      uu += u * u;
      uv += u * v;
      vv += v * v;
    }
  }

  double operator()(double t) const {
    const double w0 = 1.0 - t;
    return 2.0 * std::sqrt(std::max(0.0, w0 * w0 * uu + 2.0 * w0 * t * uv + t * t * vv));
  }
};

nn::Model model_at(const nn::ModelConfig& cfg, const PathSpec& path, double t) {
  nn::Model m = nn::Model::create(cfg, 0);
  m.flat = point_on_path(path, t);
  return m;
}

}  // namespace

std::vector<float> point_on_path(const PathSpec& path, double t) {
  check_dims(path);
  if (!(t >= 0.0 && t <= 1.0)) throw UserError("t must lie in [0, 1]");
  const double c0 = (1.0 - t) * (1.0 - t);
  const double c1 = 2.0 * t * (1.0 - t);
  const double c2 = t * t;
  std::vector<float> out(path.theta_p.size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(c0 * path.theta_p[i] + c1 * path.theta_c[i] +
                                c2 * path.theta_a[i]);
  return out;
}

double path_arc_length(const PathSpec& path, double t0, double t1, int intervals) {
  check_dims(path);
  if (intervals < 2 || intervals % 2 != 0) throw UserError("intervals must be even and >= 2");
  if (!(t0 <= t1)) throw UserError("t0 must not exceed t1");
  const Speed speed(path);
  const double h = (t1 - t0) / intervals;
  double sum = speed(t0) + speed(t1);
  for (int i = 1; i < intervals; ++i) sum += speed(t0 + i * h) * (i % 2 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

PathTrainResult train_path(const nn::ModelConfig& cfg, std::span<const float> theta_p,
                           std::span<const float> theta_a, const LabeledDataset& diag_train,
                           const FactorSpace& space, const CueSet& cues,
                           const PathTrainConfig& tc, int jobs) {
  if (theta_p.size() != theta_a.size()) throw UserError("endpoint dimension mismatch");
  if (static_cast<int64_t>(theta_p.size()) != nn::param_count(cfg))
    throw UserError("endpoints do not match the model config");

  PathTrainResult res;
  res.path.theta_p.assign(theta_p.begin(), theta_p.end());
  res.path.theta_a.assign(theta_a.begin(), theta_a.end());
  res.path.theta_c.resize(theta_p.size());
  for (size_t i = 0; i < theta_p.size(); ++i)
    res.path.theta_c[i] = 0.5f * (theta_p[i] + theta_a[i]);

  const nn::Tensor train_x = images_tensor(diag_train);
  const std::vector<int> train_y = labels_of(diag_train);
  const int64_t n = train_x.dim(0);

  nn::OptState<float> st;
  nn::OptConfig opt;
  opt.kind = nn::OptConfig::Kind::Adam;
  opt.lr = tc.lr;

  nn::Model probe = nn::Model::create(cfg, 0);
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  auto rng_t = rng_stream(tc.seed, fnv1a64("path-t"));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    auto rng_shuffle = rng_stream(tc.seed, fnv1a64("path-shuffle"), static_cast<uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng_shuffle);
    for (int64_t start = 0; start < n; start += tc.batch) {
      const int64_t end = std::min<int64_t>(start + tc.batch, n);
      std::span<const int64_t> idx(order.data() + start, static_cast<size_t>(end - start));
      nn::Tensor bx = nn::slice_batch(train_x, idx);
      std::vector<int> by(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) by[i] = train_y[static_cast<size_t>(idx[i])];

      const double t = unit(rng_t);
      probe.flat = point_on_path(res.path, t);
      auto [loss, grad] = nn::loss_and_grad(probe, bx, by);
      if (!std::isfinite(loss)) continue;  // skip the step; path stays valid
      const float chain = static_cast<float>(2.0 * t * (1.0 - t));
      for (float& g : grad) g *= chain;
      nn::opt_step<float>(res.path.theta_c, grad, st, opt);
    }
    res.epochs_run = epoch + 1;
  }

  // Convergence: worst exhaustive diagonal 0-1 loss over an even grid of t.
  std::vector<double> losses(static_cast<size_t>(tc.grid_points), 1.0);
  parallel_for(
      tc.grid_points,
      [&](int64_t gi) {
        const double t = static_cast<double>(gi) / (tc.grid_points - 1);
        nn::Model m = model_at(cfg, res.path, t);
        losses[static_cast<size_t>(gi)] =
            exhaustive_cue_error(model_predictor(m), space, cues, "diagonal", 1);
      },
      jobs);
  res.max_diag01 = *std::max_element(losses.begin(), losses.end());
  res.converged = res.max_diag01 <= tc.eps_path;
  return res;
}

PathReport locate_boundary(const nn::ModelConfig& cfg, const PathSpec& path,
                           const FactorSpace& space, const CueSet& cues,
                           const std::string& cue_p, const std::string& cue_a,
                           int t_resolution, const EvalOptions& eval, int jobs) {
  check_dims(path);
  if (t_resolution < 3) throw UserError("t_resolution must be >= 3");

  PathReport rep;
  rep.t_grid.resize(static_cast<size_t>(t_resolution));
  rep.diag_loss.resize(static_cast<size_t>(t_resolution));
  rep.acc_p.resize(static_cast<size_t>(t_resolution));
  rep.acc_a.resize(static_cast<size_t>(t_resolution));

  auto eval_at = [&](double t, double* diag_out) {
    nn::Model m = model_at(cfg, path, t);
    auto pred = model_predictor(m);
    EvalOptions eo = eval;
    eo.jobs = 1;
    double ap = unbiased_accuracy(pred, space, cues, cue_p, eo);
    double aa = unbiased_accuracy(pred, space, cues, cue_a, eo);
    if (diag_out) *diag_out = exhaustive_cue_error(pred, space, cues, "diagonal", 1);
    return std::pair<double, double>(ap, aa);
  };

  parallel_for(
      t_resolution,
      [&](int64_t gi) {
        const double t = static_cast<double>(gi) / (t_resolution - 1);
        rep.t_grid[static_cast<size_t>(gi)] = t;
        double diag = 0;
        auto [ap, aa] = eval_at(t, &diag);
        rep.acc_p[static_cast<size_t>(gi)] = ap;
        rep.acc_a[static_cast<size_t>(gi)] = aa;
        rep.diag_loss[static_cast<size_t>(gi)] = diag;
      },
      jobs);

  // Sign changes of acc_p - acc_a over the grid (zeros inherit the previous sign).
  int first_cross = -1;
  int prev_sign = 0;
  for (int i = 0; i < t_resolution; ++i) {
    const double d = rep.acc_p[static_cast<size_t>(i)] - rep.acc_a[static_cast<size_t>(i)];
    const int sign = d > 0 ? 1 : (d < 0 ? -1 : prev_sign);
    if (prev_sign != 0 && sign != 0 && sign != prev_sign) {
      ++rep.crossings;
      if (first_cross < 0) first_cross = i;
    }
    if (sign != 0) prev_sign = sign;
  }
  if (rep.crossings == 0)
    throw NoBiasShiftError("no bias shift on path: accuracy difference never changes sign");

  // Bisection to 1e-3 in t on the first bracketing interval.
  double lo = rep.t_grid[static_cast<size_t>(first_cross - 1)];
  double hi = rep.t_grid[static_cast<size_t>(first_cross)];
  double d_lo = rep.acc_p[static_cast<size_t>(first_cross - 1)] -
                rep.acc_a[static_cast<size_t>(first_cross - 1)];
  while (hi - lo > 1e-3) {
    const double mid = 0.5 * (lo + hi);
    auto [ap, aa] = eval_at(mid, nullptr);
    const double d_mid = ap - aa;
    if ((d_mid > 0) == (d_lo > 0)) {
      lo = mid;
      d_lo = d_mid;
    } else {
      hi = mid;
    }
  }
  rep.boundary_t = 0.5 * (lo + hi);

  rep.arc_total = path_arc_length(path, 0.0, 1.0, 200);
  const double arc_pre = path_arc_length(path, 0.0, rep.boundary_t, 200);
  rep.preferred_arc_fraction = arc_pre / rep.arc_total;
  return rep;
}

}  // namespace cuelab
