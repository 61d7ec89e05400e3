#include "gnr/toy_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "gnr/image_io.hpp"

namespace gnr::toy {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kSuper = 4;

Color from_unit(double r, double g, double b) {
  return {static_cast<float>(2 * r - 1), static_cast<float>(2 * g - 1), static_cast<float>(2 * b - 1)};
}

Color hsv(double h, double s, double v) {
  h = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(h);
  const double f = h - i, p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i % 6) {
    case 0: return from_unit(v, t, p);
    case 1: return from_unit(q, v, p);
    case 2: return from_unit(p, v, t);
    case 3: return from_unit(p, q, v);
    case 4: return from_unit(t, p, v);
    default: return from_unit(v, p, q);
  }
}

Color lerp(const Color& a, const Color& b, double t) {
  Color c;
  for (int k = 0; k < 3; ++k) c[k] = static_cast<float>(a[k] + (b[k] - a[k]) * t);
  return c;
}

// Signed distance to a regular polygon's edge, negative inside.
double polygon_distance(const Shape2D& s, double x, double y) {
  const double dx = x - s.cx, dy = y - s.cy;
  const double rho = std::hypot(dx, dy);
  const double sector = kTwoPi / s.sides;
  double theta = std::fmod(std::atan2(dy, dx) - s.angle, sector);
  if (theta < 0) theta += sector;
  theta -= sector / 2;
  return rho * std::cos(theta) - s.radius * std::cos(std::numbers::pi / s.sides);
}

bool inside_blob(const Shape2D& s, double x, double y) {
  const double dx = x - s.cx, dy = y - s.cy;
  const double phi = std::atan2(dy, dx) - s.angle;
  constexpr int harmonics[3] = {2, 3, 5};
  double r = 1.0;
  for (int k = 0; k < 3; ++k) r += s.wobble[k] * std::cos(harmonics[k] * phi + s.phase[k]);
  return std::hypot(dx, dy) < s.radius * r;
}

Color pattern_color(const Shape2D& s, double x, double y) {
  const double u = (x - s.cx) * std::cos(s.pattern_angle) + (y - s.cy) * std::sin(s.pattern_angle);
  switch (s.pattern) {
    case Pattern::Solid: return s.fill;
    case Pattern::Stripes: return std::sin(kTwoPi * s.pattern_freq * u) > 0 ? s.fill : s.accent;
    case Pattern::Gradient: return lerp(s.fill, s.accent, std::clamp((u + s.radius) / (2 * s.radius), 0.0, 1.0));
    case Pattern::Dots: {
      const double fx = s.pattern_freq * (x - s.cx), fy = s.pattern_freq * (y - s.cy);
      const double ox = fx - std::floor(fx) - 0.5, oy = fy - std::floor(fy) - 0.5;
      return ox * ox + oy * oy < 0.06 ? s.accent : s.fill;
    }
  }
  return s.fill;
}

Color shade(const Scene& scene, double x, double y) {
  if (scene.domain == data::Domain::X) {
    Color c = scene.background;
    for (const Shape2D& s : scene.shapes) {
      const double d = polygon_distance(s, x, y);
      // Outer outline plus a thinner inner ring.
      if (std::fabs(d) < scene.stroke / 2) c = s.fill;
      else if (std::fabs(d + s.radius * 0.35) < scene.stroke / 4) c = s.accent;
    }
    return c;
  }
  Color c = lerp(scene.background, scene.background2, y);
  for (const Shape2D& s : scene.shapes)
    if (inside_blob(s, x, y)) c = pattern_color(s, x, y);
  return c;
}

}  // namespace

Scene sample_scene(data::Domain domain, Rng& rng) {
  Scene scene;
  scene.domain = domain;
  const int count = 1 + static_cast<int>(rng.index(3));
  if (domain == data::Domain::X) {
    // Pastel paper, dark ink.
    scene.background = from_unit(rng.uniform(0.7, 1.0), rng.uniform(0.7, 1.0), rng.uniform(0.7, 1.0));
    scene.background2 = scene.background;
    scene.stroke = rng.uniform(0.02, 0.04);
    const Color ink = from_unit(rng.uniform(0.0, 0.35), rng.uniform(0.0, 0.35), rng.uniform(0.0, 0.35));
    for (int i = 0; i < count; ++i) {
      Shape2D s;
      s.cx = rng.uniform(0.2, 0.8);
      s.cy = rng.uniform(0.2, 0.8);
      s.radius = rng.uniform(0.12, 0.28);
      s.angle = rng.uniform(0.0, kTwoPi);
      s.sides = 3 + static_cast<int>(rng.index(4));
      s.fill = ink;
      s.accent = lerp(ink, scene.background, 0.4);
      scene.shapes.push_back(s);
    }
    return scene;
  }
  const double base_hue = rng.uniform();
  scene.background = hsv(base_hue, rng.uniform(0.2, 0.6), rng.uniform(0.2, 0.5));
  scene.background2 = hsv(base_hue + rng.uniform(-0.1, 0.1), rng.uniform(0.2, 0.6), rng.uniform(0.2, 0.5));
  for (int i = 0; i < count; ++i) {
    Shape2D s;
    s.cx = rng.uniform(0.2, 0.8);
    s.cy = rng.uniform(0.2, 0.8);
    s.radius = rng.uniform(0.12, 0.28);
    s.angle = rng.uniform(0.0, kTwoPi);
    for (int k = 0; k < 3; ++k) {
      s.wobble[static_cast<std::size_t>(k)] = rng.uniform(0.0, 0.15);
      s.phase[static_cast<std::size_t>(k)] = rng.uniform(0.0, kTwoPi);
    }
    const double hue = base_hue + 0.5 + rng.uniform(-0.25, 0.25);
    s.fill = hsv(hue, rng.uniform(0.6, 1.0), rng.uniform(0.7, 1.0));
    s.accent = hsv(hue + rng.uniform(0.15, 0.5), rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0));
    s.pattern = static_cast<Pattern>(rng.index(4));
    s.pattern_freq = rng.uniform(6.0, 14.0);
    s.pattern_angle = rng.uniform(0.0, kTwoPi);
    scene.shapes.push_back(s);
  }
  return scene;
}

Tensor render(const Scene& scene, int resolution) {
  if (resolution < 1) throw std::invalid_argument("render: resolution must be positive");
  Tensor out({3, resolution, resolution});
  const double step = 1.0 / (resolution * kSuper);
  for (int i = 0; i < resolution; ++i)
    for (int j = 0; j < resolution; ++j) {
      double acc[3] = {0, 0, 0};
      for (int a = 0; a < kSuper; ++a)
        for (int b = 0; b < kSuper; ++b) {
          const Color c = shade(scene, (j * kSuper + b + 0.5) * step, (i * kSuper + a + 0.5) * step);
          for (int k = 0; k < 3; ++k) acc[k] += c[static_cast<std::size_t>(k)];
        }
      for (int k = 0; k < 3; ++k)
        out.at(k, i, j) = std::clamp(static_cast<float>(acc[k] / (kSuper * kSuper)), -1.0f, 1.0f);
    }
  return out;
}

Scene moved(const Scene& scene, double dx, double dy, double dangle) {
  Scene out = scene;
  for (Shape2D& s : out.shapes) {
    s.cx += dx;
    s.cy += dy;
    s.angle += dangle;
  }
  return out;
}

void make_toy_dataset(const std::filesystem::path& root, std::uint64_t seed, ToyCounts counts, int resolution) {
  if (counts.domain_a < 2 || counts.domain_b < 2) throw std::invalid_argument("toy data needs at least 2 images per domain");
  for (const data::Domain domain : {data::Domain::X, data::Domain::Y}) {
    const int total = domain == data::Domain::X ? counts.domain_a : counts.domain_b;
    const int test = std::max(1, total / 10);
    Rng rng(seed, domain == data::Domain::X ? 0 : 1);
    for (const data::Split split : {data::Split::Train, data::Split::Test}) {
      const std::filesystem::path dir = root / data::domain_dir(domain) / data::split_dir(split);
      std::error_code ec;
      std::filesystem::create_directories(dir, ec);
      if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
      const int n = split == data::Split::Train ? total - test : test;
      for (int i = 0; i < n; ++i) {
        char name[16];
        std::snprintf(name, sizeof name, "%05d.png", i);
        io::write_png(dir / name, render(sample_scene(domain, rng), resolution));
      }
    }
  }
}

}  // namespace gnr::toy
