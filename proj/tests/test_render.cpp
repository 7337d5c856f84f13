#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cuelab/render.hpp"
#include "cuelab/util.hpp"

using namespace cuelab;

namespace {

bool images_equal(const Image& a, const Image& b) {
  return a.resolution == b.resolution && a.data == b.data;
}

}  // namespace

TEST_CASE("render is deterministic") {
  SpriteParams p;
  p.shape = Shape::Triangle;
  p.scale = 0.45;
  p.orientation = 1.234;
  p.color = 2;
  p.offset_x = 1.5;
  p.offset_y = -2.0;
  CHECK(images_equal(render(p, 32), render(p, 32)));
}

TEST_CASE("square renders identically at quarter-turn rotations") {
  SpriteParams p;
  p.shape = Shape::Square;
  p.scale = 0.5;
  p.color = 0;
  Image base = render(p, 32);
  for (int q = 1; q < 4; ++q) {
    SpriteParams r = p;
    r.orientation = q * std::numbers::pi / 2.0;
    CHECK(images_equal(base, render(r, 32)));
  }
  // and at arbitrary base angles
  p.orientation = 0.7;
  Image rotated = render(p, 32);
  p.orientation = 0.7 + std::numbers::pi / 2.0;
  CHECK(images_equal(rotated, render(p, 32)));
}

TEST_CASE("ellipse 40-step grid: half-turn pairs are pixel-identical") {
  const int raw = 40;
  for (int i = 0; i < raw / 2; ++i) {
    SpriteParams a, b;
    a.shape = b.shape = Shape::Ellipse;
    a.scale = b.scale = 0.5;
    a.color = b.color = 1;
    a.orientation = 2.0 * std::numbers::pi * i / raw;
    b.orientation = 2.0 * std::numbers::pi * (i + raw / 2) / raw;
    CHECK(images_equal(render(a, 32), render(b, 32)));
  }
}

TEST_CASE("triangle 36-step grid: third-turn pairs are pixel-identical") {
  const int raw = 36;
  for (int i = 0; i < raw; i += 5) {
    SpriteParams a, b;
    a.shape = b.shape = Shape::Triangle;
    a.scale = b.scale = 0.5;
    a.orientation = 2.0 * std::numbers::pi * i / raw;
    b.orientation = 2.0 * std::numbers::pi * ((i + raw / 3) % raw) / raw;
    CHECK(images_equal(render(a, 32), render(b, 32)));
  }
}

TEST_CASE("foreground mass matches analytic area") {
  const int res = 64;
  for (double s : {0.3, 0.5, 0.7, 0.9}) {
    SpriteParams p;
    p.color = 0;

    p.shape = Shape::Square;
    p.scale = s;
    double area = s * res * s * res;
    CHECK(foreground_mass(render(p, res)) == doctest::Approx(area).epsilon(0.02));

    p.shape = Shape::Triangle;
    area = std::numbers::sqrt3 / 4.0 * s * res * s * res;
    CHECK(foreground_mass(render(p, res)) == doctest::Approx(area).epsilon(0.02));

    p.shape = Shape::Ellipse;
    double a = s * res / 2.0, b = 0.6 * a;
    area = std::numbers::pi * a * b;
    CHECK(foreground_mass(render(p, res)) == doctest::Approx(area).epsilon(0.02));
  }
}

TEST_CASE("non-black pixels carry only the sprite color") {
  for (int color = 0; color < kPaletteSize; ++color) {
    SpriteParams p;
    p.shape = Shape::Ellipse;
    p.scale = 0.5;
    p.orientation = 0.35;
    p.color = color;
    Image img = render(p, 32);
    Rgb c = palette_color(color);
    const int n = 32 * 32;
    for (int i = 0; i < n; ++i) {
      float r = img.data[static_cast<size_t>(i)];
      float g = img.data[static_cast<size_t>(n + i)];
      float b = img.data[static_cast<size_t>(2 * n + i)];
      float cov = std::max({r, g, b});
      if (cov == 0.f) continue;
      CHECK(r == doctest::Approx(cov * c.r).epsilon(1e-6));
      CHECK(g == doctest::Approx(cov * c.g).epsilon(1e-6));
      CHECK(b == doctest::Approx(cov * c.b).epsilon(1e-6));
    }
  }
}

TEST_CASE("foreground grows strictly with scale") {
  int64_t prev = -1;
  for (double s = 0.2; s <= 0.9; s += 0.05) {
    SpriteParams p;
    p.shape = Shape::Square;
    p.scale = s;
    int64_t count = foreground_count(render(p, 48));
    CHECK(count > prev);
    prev = count;
  }
}

TEST_CASE("out-of-canvas placements are rejected") {
  SpriteParams p;
  p.shape = Shape::Square;
  p.scale = 0.9;
  p.orientation = std::numbers::pi / 4.0;  // diagonal of a 0.9-side square exceeds the canvas
  CHECK_THROWS_AS(render(p, 32), UserError);

  p.orientation = 0.0;
  CHECK_NOTHROW(render(p, 32));
  p.offset_x = 3.0;  // 0.45*32 + 3 > 16
  CHECK_THROWS_AS(render(p, 32), UserError);

  SpriteParams bad;
  bad.scale = 0.1;
  CHECK_THROWS_AS(render(bad, 32), UserError);
  bad.scale = 0.95;
  CHECK_THROWS_AS(render(bad, 32), UserError);
}

TEST_CASE("ppm export has the right header and size") {
  SpriteParams p;
  p.scale = 0.4;
  Image img = render(p, 16);
  auto path = std::filesystem::temp_directory_path() / "cuelab_test_sprite.ppm";
  write_ppm(img, path);
  std::string data = read_file(path);
  CHECK(data.substr(0, 2) == "P6");
  CHECK(data.size() > static_cast<size_t>(3 * 16 * 16));
  std::filesystem::remove(path);
}
