#include "gnr/image_io.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <csetjmp>
#include <memory>
#include <stdexcept>
#include <string>

namespace gnr::io {
namespace {

Tensor from_rgb8(const std::uint8_t* rgb, int width, int height) {
  Tensor t({3, height, width});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        t.at(c, y, x) = static_cast<float>(rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]) / 127.5f - 1.0f;
  return t;
}

Tensor read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return from_rgb8(buffer.data(), static_cast<int>(image.width), static_cast<int>(image.height));
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

[[noreturn]] void jpeg_fail(j_common_ptr info) {
  auto* err = reinterpret_cast<JpegError*>(info->err);
  std::longjmp(err->jump, 1);
}

Tensor read_jpeg(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw std::runtime_error("cannot open " + path.string());
  jpeg_decompress_struct info{};
  JpegError err{};
  info.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  std::vector<std::uint8_t> rgb;
  int width = 0, height = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&info);
    throw std::runtime_error("cannot decode JPEG " + path.string());
  }
  jpeg_create_decompress(&info);
  jpeg_stdio_src(&info, file.get());
  jpeg_read_header(&info, TRUE);
  info.out_color_space = JCS_RGB;
  jpeg_start_decompress(&info);
  width = static_cast<int>(info.output_width);
  height = static_cast<int>(info.output_height);
  rgb.resize(static_cast<std::size_t>(width) * height * 3);
  while (info.output_scanline < info.output_height) {
    JSAMPROW row = rgb.data() + static_cast<std::size_t>(info.output_scanline) * width * 3;
    jpeg_read_scanlines(&info, &row, 1);
  }
  jpeg_finish_decompress(&info);
  jpeg_destroy_decompress(&info);
  return from_rgb8(rgb.data(), width, height);
}

}  // namespace

Tensor read_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return read_png(path);
  if (ext == ".jpg" || ext == ".jpeg") return read_jpeg(path);
  throw std::runtime_error("unsupported image format: " + path.string());
}

void write_png(const std::filesystem::path& path, const Tensor& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3) throw ShapeError("write_png expects (3, H, W), got " + shape_str(chw.shape()));
  const int H = chw.dim(1), W = chw.dim(2);
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(H) * W * 3);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp((chw.at(c, y, x) + 1.0f) * 127.5f, 0.0f, 255.0f);
        rgb[(static_cast<std::size_t>(y) * W + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v));
      }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(W);
  image.height = static_cast<png_uint_32>(H);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr))
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + image.message);
}

Tensor to_square(const Tensor& chw, int resolution) {
  const int H = chw.dim(1), W = chw.dim(2);
  const int side = std::min(H, W);
  const int oy = (H - side) / 2, ox = (W - side) / 2;
  if (side == resolution) {
    Tensor out({3, resolution, resolution});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) out.at(c, y, x) = chw.at(c, y + oy, x + ox);
    return out;
  }
  Tensor out({3, resolution, resolution});
  const double ratio = static_cast<double>(side) / resolution;
  for (int y = 0; y < resolution; ++y) {
    const double sy = std::clamp((y + 0.5) * ratio - 0.5, 0.0, side - 1.0);
    const int y0 = static_cast<int>(sy), y1 = std::min(y0 + 1, side - 1);
    const float fy = static_cast<float>(sy - y0);
    for (int x = 0; x < resolution; ++x) {
      const double sx = std::clamp((x + 0.5) * ratio - 0.5, 0.0, side - 1.0);
      const int x0 = static_cast<int>(sx), x1 = std::min(x0 + 1, side - 1);
      const float fx = static_cast<float>(sx - x0);
      for (int c = 0; c < 3; ++c) {
        const float a = chw.at(c, y0 + oy, x0 + ox), b = chw.at(c, y0 + oy, x1 + ox);
        const float d = chw.at(c, y1 + oy, x0 + ox), e = chw.at(c, y1 + oy, x1 + ox);
        const float top = a + (b - a) * fx, bot = d + (e - d) * fx;
        out.at(c, y, x) = top + (bot - top) * fy;
      }
    }
  }
  return out;
}

Tensor make_grid(const std::vector<std::vector<Tensor>>& cells, int padding, float background) {
  if (cells.empty() || cells.front().empty()) throw std::invalid_argument("make_grid: empty grid");
  const int R = cells.front().front().dim(1);
  const int rows = static_cast<int>(cells.size());
  int cols = 0;
  for (const auto& row : cells) cols = std::max(cols, static_cast<int>(row.size()));
  const int H = rows * R + (rows + 1) * padding, W = cols * R + (cols + 1) * padding;
  Tensor grid({3, H, W}, background);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < static_cast<int>(cells[static_cast<std::size_t>(r)].size()); ++c) {
      const Tensor& img = cells[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      if (img.shape() != Shape{3, R, R}) throw ShapeError("make_grid: cell shape " + shape_str(img.shape()));
      const int y0 = padding + r * (R + padding), x0 = padding + c * (R + padding);
      for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < R; ++y)
          for (int x = 0; x < R; ++x) grid.at(ch, y0 + y, x0 + x) = img.at(ch, y, x);
    }
  return grid;
}

}  // namespace gnr::io
