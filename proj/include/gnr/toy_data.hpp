#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "gnr/data.hpp"
#include "gnr/rng.hpp"
#include "gnr/tensor.hpp"

namespace gnr::toy {

using Color = std::array<float, 3>;  // RGB in [-1, 1]

enum class Pattern { Solid, Stripes, Gradient, Dots };

/// One shape in normalized [0, 1]^2 coordinates. Domain X draws it as an
/// outlined polygon, domain Y as a filled blob with harmonic wobble.
struct Shape2D {
  double cx = 0.5, cy = 0.5, radius = 0.2, angle = 0.0;
  int sides = 5;
  std::array<double, 3> wobble{};  // blob harmonic amplitudes (k = 2, 3, 5)
  std::array<double, 3> phase{};
  Color fill{}, accent{};
  Pattern pattern = Pattern::Solid;
  double pattern_freq = 10.0, pattern_angle = 0.0;
};

struct Scene {
  data::Domain domain = data::Domain::X;
  Color background{}, background2{};
  double stroke = 0.02;  // outline width, normalized
  std::vector<Shape2D> shapes;
};

Scene sample_scene(data::Domain domain, Rng& rng);

/// Render with 4x4 supersampling into a (3, R, R) tensor in [-1, 1].
Tensor render(const Scene& scene, int resolution);

/// Copy of the scene with every shape shifted by (dx, dy) and rotated by dangle.
Scene moved(const Scene& scene, double dx, double dy, double dangle);

struct ToyCounts {
  int domain_a = 500;
  int domain_b = 500;
};

/// Writes <root>/domainA|domainB/train|test/%05d.png. A tenth of each domain
/// (at least one image) goes to the test split. Deterministic per seed.
void make_toy_dataset(const std::filesystem::path& root, std::uint64_t seed, ToyCounts counts, int resolution);

}  // namespace gnr::toy
