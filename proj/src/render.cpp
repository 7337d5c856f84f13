#include "cuelab/render.hpp"

#include <cmath>
#include <numbers>

#include "cuelab/util.hpp"

namespace cuelab {

namespace {

// Fine orientation grid: divisible by every symmetry fold in use (2, 3, 4),
// so the modular reduction below is exact integer arithmetic. One step is
// ~2e-6 radians, far below a pixel at any supported resolution.
constexpr int64_t kFineSteps = 3LL << 20;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

int64_t snap_orientation(double radians, int symmetry) {
  double turns = radians / kTwoPi;
  double step = turns * static_cast<double>(kFineSteps);
  int64_t k = std::llround(step);
  int64_t period = kFineSteps / symmetry;
  k %= period;
  if (k < 0) k += period;
  return k;
}

struct Frame {
  // world -> sprite-local rotation (by -theta) around the sprite center
  double cx, cy, c, s;
  double lx(double wx, double wy) const { return c * (wx - cx) + s * (wy - cy); }
  double ly(double wx, double wy) const { return -s * (wx - cx) + c * (wy - cy); }
};

}  // namespace

int shape_symmetry(Shape s) {
  switch (s) {
    case Shape::Square: return 4;
    case Shape::Ellipse: return 2;
    case Shape::Triangle: return 3;
  }
  throw InternalError("unknown shape");
}

const char* shape_name(Shape s) {
  switch (s) {
    case Shape::Square: return "square";
    case Shape::Ellipse: return "ellipse";
    case Shape::Triangle: return "triangle";
  }
  throw InternalError("unknown shape");
}

Rgb palette_color(int index) {
  static constexpr std::array<Rgb, kPaletteSize> kPalette = {
      Rgb{1.f, 1.f, 1.f}, Rgb{1.f, 0.f, 0.f}, Rgb{0.f, 1.f, 0.f}, Rgb{0.f, 0.f, 1.f}};
  if (index < 0 || index >= kPaletteSize) throw UserError("palette index out of range");
  return kPalette[static_cast<size_t>(index)];
}

const char* palette_name(int index) {
  static constexpr std::array<const char*, kPaletteSize> kNames = {"white", "red", "green",
                                                                   "blue"};
  if (index < 0 || index >= kPaletteSize) throw UserError("palette index out of range");
  return kNames[static_cast<size_t>(index)];
}

Image render(const SpriteParams& params, int resolution) {
  if (resolution < 4) throw UserError("resolution too small");
  if (!(params.scale >= 0.2 && params.scale <= 0.9))
    throw UserError("scale outside [0.2, 0.9]");

  const double res = resolution;
  const double size = params.scale * res;
  const int sym = shape_symmetry(params.shape);
  const int64_t k = snap_orientation(params.orientation, sym);
  const double theta = kTwoPi * (static_cast<double>(k) / static_cast<double>(kFineSteps));
  const double ct = std::cos(theta), st = std::sin(theta);

  const double cx = res / 2.0 + params.offset_x;
  const double cy = res / 2.0 + params.offset_y;

  // Canvas-fit check on the rotated world-space bounding box.
  double half_x = 0, half_y = 0;
  double half = size / 2.0;
  double a = half, b = half;  // ellipse semi-axes
  // triangle vertices in local frame (centroid at origin, one vertex up)
  std::array<std::array<double, 2>, 3> tri{};
  switch (params.shape) {
    case Shape::Square:
      half_x = half * (std::abs(ct) + std::abs(st));
      half_y = half_x;
      break;
    case Shape::Ellipse:
      b = 0.6 * a;
      half_x = std::sqrt(a * a * ct * ct + b * b * st * st);
      half_y = std::sqrt(a * a * st * st + b * b * ct * ct);
      break;
    case Shape::Triangle: {
      const double circum = size / std::numbers::sqrt3;
      for (int v = 0; v < 3; ++v) {
        double phi = std::numbers::pi / 2.0 + v * (kTwoPi / 3.0);
        double vx = circum * std::cos(phi), vy = circum * std::sin(phi);
        tri[static_cast<size_t>(v)] = {vx, vy};
        double wx = ct * vx - st * vy, wy = st * vx + ct * vy;
        half_x = std::max(half_x, std::abs(wx));
        half_y = std::max(half_y, std::abs(wy));
      }
      break;
    }
  }
  if (cx - half_x < 0.0 || cx + half_x > res || cy - half_y < 0.0 || cy + half_y > res)
    throw UserError("sprite out of canvas");

  const Frame frame{cx, cy, ct, st};

  // Local-frame inside test.
  auto inside = [&](double wx, double wy) -> bool {
    double x = frame.lx(wx, wy), y = frame.ly(wx, wy);
    switch (params.shape) {
      case Shape::Square:
        return std::abs(x) <= half && std::abs(y) <= half;
      case Shape::Ellipse: {
        double u = x / a, v = y / b;
        return u * u + v * v <= 1.0;
      }
      case Shape::Triangle:
        for (int e = 0; e < 3; ++e) {
          const auto& p = tri[static_cast<size_t>(e)];
          const auto& q = tri[static_cast<size_t>((e + 1) % 3)];
          double cross = (q[0] - p[0]) * (y - p[1]) - (q[1] - p[1]) * (x - p[0]);
          if (cross < 0.0) return false;
        }
        return true;
    }
    return false;
  };

  const Rgb color = palette_color(params.color);
  Image img;
  img.resolution = resolution;
  img.data.assign(static_cast<size_t>(3) * resolution * resolution, 0.f);

  const int ss = 4;  // 4x4 subsamples per pixel
  const int y_lo = std::max(0, static_cast<int>(std::floor(cy - half_y)));
  const int y_hi = std::min(resolution - 1, static_cast<int>(std::ceil(cy + half_y)));
  const int x_lo = std::max(0, static_cast<int>(std::floor(cx - half_x)));
  const int x_hi = std::min(resolution - 1, static_cast<int>(std::ceil(cx + half_x)));
  for (int py = y_lo; py <= y_hi; ++py) {
    for (int px = x_lo; px <= x_hi; ++px) {
      int hits = 0;
      for (int sy = 0; sy < ss; ++sy) {
        double wy = py + (sy + 0.5) / ss;
        for (int sx = 0; sx < ss; ++sx) {
          double wx = px + (sx + 0.5) / ss;
          if (inside(wx, wy)) ++hits;
        }
      }
      if (hits == 0) continue;
      float cov = static_cast<float>(hits) / (ss * ss);
      img.at(0, py, px) = cov * color.r;
      img.at(1, py, px) = cov * color.g;
      img.at(2, py, px) = cov * color.b;
    }
  }
  return img;
}

double foreground_mass(const Image& img) {
  double mass = 0.0;
  const int n = img.resolution * img.resolution;
  for (int i = 0; i < n; ++i) {
    float m = std::max(img.data[static_cast<size_t>(i)],
                       std::max(img.data[static_cast<size_t>(n + i)],
                                img.data[static_cast<size_t>(2 * n + i)]));
    mass += m;
  }
  return mass;
}

int64_t foreground_count(const Image& img) {
  int64_t count = 0;
  const int n = img.resolution * img.resolution;
  for (int i = 0; i < n; ++i) {
    if (img.data[static_cast<size_t>(i)] > 0.f || img.data[static_cast<size_t>(n + i)] > 0.f ||
        img.data[static_cast<size_t>(2 * n + i)] > 0.f)
      ++count;
  }
  return count;
}

void write_ppm(const Image& img, const std::filesystem::path& path) {
  const int r = img.resolution;
  std::string out = "P6\n" + std::to_string(r) + " " + std::to_string(r) + "\n255\n";
  out.reserve(out.size() + static_cast<size_t>(3) * r * r);
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < r; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = img.at(c, y, x);
        int byte = static_cast<int>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
        out.push_back(static_cast<char>(byte));
      }
  write_file(path, out);
}

void write_pgm(const std::vector<double>& values, int width, int height,
               const std::filesystem::path& path) {
  if (static_cast<int64_t>(values.size()) != static_cast<int64_t>(width) * height)
    throw InternalError("pgm size mismatch");
  bool seen = false;
  double lo = 0.0, hi = 1.0;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    if (!seen) {
      lo = hi = v;
      seen = true;
    } else {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo)) hi = lo + 1.0;
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (double v : values) {
    double t = std::isfinite(v) ? (v - lo) / (hi - lo) : 1.0;
    out.push_back(static_cast<char>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0)));
  }
  write_file(path, out);
}

}  // namespace cuelab
