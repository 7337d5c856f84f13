#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cuelab {

enum class Shape : int { Square = 0, Ellipse = 1, Triangle = 2 };

// Rotational symmetry fold of each shape (ellipse has a 2-fold axis, the
// triangle is equilateral).
int shape_symmetry(Shape s);
const char* shape_name(Shape s);

struct Rgb {
  float r, g, b;
};

// Palette order: white, red, green, blue.
constexpr int kPaletteSize = 4;
Rgb palette_color(int index);
const char* palette_name(int index);

struct SpriteParams {
  Shape shape = Shape::Square;
  double scale = 0.5;        // square/triangle side (ellipse major axis) as fraction of image side
  double orientation = 0.0;  // radians, counterclockwise
  int color = 0;             // palette index
  double offset_x = 0.0;     // sprite center offset from image center, pixels
  double offset_y = 0.0;
};

// Planar (channel-major) float image, values in [0,1], black background.
struct Image {
  int resolution = 0;
  std::vector<float> data;  // 3 * resolution * resolution, CHW

  float at(int c, int y, int x) const { return data[(c * resolution + y) * resolution + x]; }
  float& at(int c, int y, int x) { return data[(c * resolution + y) * resolution + x]; }
};

// Rasterizes one sprite. Deterministic: identical params always produce
// identical bytes. Orientation is snapped to a fine grid of 3*2^20 steps per
// turn and reduced modulo the shape's symmetry fold in integer arithmetic, so
// renders at angles that differ by a symmetry period are bit-identical.
// Anti-aliasing by 4x4 supersampling. Throws UserError when the rotated
// sprite's bounding box leaves the canvas.
Image render(const SpriteParams& params, int resolution);

// Sum over pixels of the max channel value; equals covered area in pixels up
// to supersampling error.
double foreground_mass(const Image& img);

// Count of non-black pixels.
int64_t foreground_count(const Image& img);

// Debug export, binary PPM (P6).
void write_ppm(const Image& img, const std::filesystem::path& path);

// Grayscale PGM (P5) from arbitrary row-major values; used for loss heatmaps.
void write_pgm(const std::vector<double>& values, int width, int height,
               const std::filesystem::path& path);

}  // namespace cuelab
