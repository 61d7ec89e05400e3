#pragma once

#include <filesystem>
#include <vector>

#include "gnr/tensor.hpp"

namespace gnr::io {

/// Decode a PNG or JPEG file into a (3, H, W) tensor with values v / 127.5 - 1.
/// Grayscale and alpha channels are converted to RGB.
Tensor read_image(const std::filesystem::path& path);

/// Encode a (3, H, W) tensor in [-1, 1] as 8-bit RGB PNG.
void write_png(const std::filesystem::path& path, const Tensor& chw);

/// Center-crop to square and bilinearly resize to `resolution`.
Tensor to_square(const Tensor& chw, int resolution);

/// Tile (3, R, R) images into a grid; `cells[r][c]` is row r, column c.
Tensor make_grid(const std::vector<std::vector<Tensor>>& cells, int padding = 2, float background = 1.0f);

}  // namespace gnr::io
