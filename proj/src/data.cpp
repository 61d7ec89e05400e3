#include "gnr/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "gnr/image_io.hpp"

namespace gnr::data {
namespace {

// Mirror an integer coordinate into [0, n) without repeating the edge pixel.
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

void require_range(bool ok, const char* field) {
  if (!ok) throw std::invalid_argument(std::string("augmentation parameter out of range: ") + field);
}

}  // namespace

ImageTensor::ImageTensor(Tensor chw) : pixels_(std::move(chw)) {
  if (pixels_.rank() != 3 || pixels_.dim(0) != 3)
    throw ShapeError("image must be (3, H, W), got " + shape_str(pixels_.shape()));
  if (pixels_.dim(1) != pixels_.dim(2)) throw ShapeError("image must be square, got " + shape_str(pixels_.shape()));
  for (float v : pixels_.values())
    if (!std::isfinite(v) || v < -1.0f || v > 1.0f) throw std::invalid_argument("image values must lie in [-1, 1]");
}

AugmentParams AugmentParams::identity(int resolution) {
  AugmentParams p;
  p.upscale_size = resolution;
  return p;
}

int upscale_size_for(int resolution, const AugmentRanges& ranges) {
  return static_cast<int>(std::lround(resolution * ranges.upscale_ratio));
}

void validate(const AugmentParams& p, int resolution, const AugmentRanges& r) {
  constexpr double slack = 1e-9;
  require_range(std::fabs(p.rotation_deg) <= r.max_rotation_deg + slack, "rotation_deg");
  require_range(p.scale >= r.min_scale - slack && p.scale <= r.max_scale + slack, "scale");
  require_range(std::fabs(p.translate_frac.first) <= r.max_translate_frac + slack &&
                    std::fabs(p.translate_frac.second) <= r.max_translate_frac + slack,
                "translate_frac");
  require_range(std::fabs(p.shear) <= r.max_shear + slack, "shear");
  require_range(p.upscale_size >= resolution && p.upscale_size <= upscale_size_for(resolution, r), "upscale_size");
  const int slack_px = p.upscale_size - resolution;
  require_range(p.crop_offset.first >= 0 && p.crop_offset.first <= slack_px && p.crop_offset.second >= 0 &&
                    p.crop_offset.second <= slack_px,
                "crop_offset");
}

AugmentParams sample_augmentation(Rng& rng, int resolution, const AugmentRanges& r) {
  AugmentParams p;
  p.hflip = rng.bernoulli(r.flip_probability);
  p.rotation_deg = rng.uniform(-r.max_rotation_deg, r.max_rotation_deg);
  p.scale = rng.uniform(r.min_scale, r.max_scale);
  p.translate_frac.first = rng.uniform(-r.max_translate_frac, r.max_translate_frac);
  p.translate_frac.second = rng.uniform(-r.max_translate_frac, r.max_translate_frac);
  p.shear = rng.uniform(-r.max_shear, r.max_shear);
  p.upscale_size = upscale_size_for(resolution, r);
  const int slack_px = p.upscale_size - resolution;
  p.crop_offset.first = static_cast<int>(rng.index(static_cast<std::size_t>(slack_px) + 1));
  p.crop_offset.second = static_cast<int>(rng.index(static_cast<std::size_t>(slack_px) + 1));
  return p;
}

ImageTensor apply_augmentation(const ImageTensor& img, const AugmentParams& p, const AugmentRanges& ranges) {
  const int R = img.resolution();
  validate(p, R, ranges);
  const Tensor& src = img.pixels();

  // Forward warp: q = M (p - c) + c + t, with M = rotation * shear * scale.
  const double theta = p.rotation_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double m00 = cs * p.scale, m01 = (cs * p.shear - sn) * p.scale;
  const double m10 = sn * p.scale, m11 = (sn * p.shear + cs) * p.scale;
  const double det = m00 * m11 - m01 * m10;
  const double i00 = m11 / det, i01 = -m01 / det, i10 = -m10 / det, i11 = m00 / det;
  const double center = (R - 1) / 2.0;
  const double tx = p.translate_frac.first * R, ty = p.translate_frac.second * R;
  const double up = static_cast<double>(R) / p.upscale_size;

  Tensor out({3, R, R});
#pragma omp parallel for if (R >= 128)
  for (int i = 0; i < R; ++i) {
    for (int j = 0; j < R; ++j) {
      // Output pixel -> upscaled frame -> warped image coordinates.
      const double wy = (i + p.crop_offset.second + 0.5) * up - 0.5;
      const double wx = (j + p.crop_offset.first + 0.5) * up - 0.5;
      // Undo the affine warp.
      const double dy = wy - center - ty, dx = wx - center - tx;
      double sx = i00 * dx + i01 * dy + center;
      const double sy = i10 * dx + i11 * dy + center;
      if (p.hflip) sx = (R - 1) - sx;

      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      const float fx = static_cast<float>(sx - fx0), fy = static_cast<float>(sy - fy0);
      const int x0 = reflect_index(static_cast<int>(fx0), R), x1 = reflect_index(static_cast<int>(fx0) + 1, R);
      const int y0 = reflect_index(static_cast<int>(fy0), R), y1 = reflect_index(static_cast<int>(fy0) + 1, R);
      for (int c = 0; c < 3; ++c) {
        const float a = src.at(c, y0, x0), b = src.at(c, y0, x1);
        const float d = src.at(c, y1, x0), e = src.at(c, y1, x1);
        const float top = a + (b - a) * fx, bot = d + (e - d) * fx;
        out.at(c, i, j) = std::clamp(top + (bot - top) * fy, -1.0f, 1.0f);
      }
    }
  }
  return ImageTensor(std::move(out));
}

std::string domain_dir(Domain d) { return d == Domain::X ? "domainA" : "domainB"; }
std::string split_dir(Split s) { return s == Split::Train ? "train" : "test"; }

DomainDataset::DomainDataset(Domain domain, Split split, std::vector<ImageTensor> images,
                             std::vector<std::string> items)
    : domain_(domain), split_(split), images_(std::move(images)), items_(std::move(items)) {
  if (items_.empty())
    for (std::size_t i = 0; i < images_.size(); ++i) items_.push_back("#" + std::to_string(i));
  if (items_.size() != images_.size()) throw std::invalid_argument("dataset items and images differ in length");
  for (const ImageTensor& img : images_)
    if (img.resolution() != images_.front().resolution())
      throw std::invalid_argument("dataset images must share one resolution");
}

DomainDataset DomainDataset::load(const std::filesystem::path& root, Domain domain, Split split, int resolution) {
  const std::filesystem::path dir = root / domain_dir(domain) / split_dir(split);
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ImageTensor> images;
  std::vector<std::string> items;
  images.reserve(files.size());
  for (const auto& f : files) {
    images.emplace_back(io::to_square(io::read_image(f), resolution));
    items.push_back(f.string());
  }
  return DomainDataset(domain, split, std::move(images), std::move(items));
}

std::vector<std::size_t> DomainDataset::shuffled_order(Rng& rng) const {
  std::vector<std::size_t> order(images_.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

Tensor AugmentedBatch::to_tensor() const { return stack_images(views); }

AugmentedBatch make_batch(const DomainDataset& dataset, std::size_t index, int n, Rng& rng,
                          const AugmentRanges& ranges) {
  if (index >= dataset.size())
    throw std::out_of_range("batch source index " + std::to_string(index) + " out of range for dataset of size " +
                            std::to_string(dataset.size()));
  if (n < 2) throw std::invalid_argument("augmented batch needs n >= 2");
  AugmentedBatch batch;
  batch.source_id = index;
  const ImageTensor& source = dataset[index];
  for (int i = 0; i < n; ++i) {
    batch.params.push_back(sample_augmentation(rng, source.resolution(), ranges));
    batch.views.push_back(apply_augmentation(source, batch.params.back(), ranges));
  }
  return batch;
}

Tensor sample_real_batch(const DomainDataset& dataset, int n, Rng& rng, const AugmentRanges& ranges) {
  if (dataset.size() == 0) throw std::invalid_argument("cannot sample from an empty dataset");
  std::vector<std::size_t> picks;
  if (dataset.size() >= static_cast<std::size_t>(n)) {
    // Partial Fisher-Yates: n distinct indices.
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    for (int i = 0; i < n; ++i) std::swap(order[static_cast<std::size_t>(i)], order[i + rng.index(order.size() - i)]);
    picks.assign(order.begin(), order.begin() + n);
  } else {
    for (int i = 0; i < n; ++i) picks.push_back(rng.index(dataset.size()));
  }
  std::vector<ImageTensor> views;
  for (std::size_t idx : picks)
    views.push_back(apply_augmentation(dataset[idx], sample_augmentation(rng, dataset.resolution(), ranges), ranges));
  return stack_images(views);
}

Tensor stack_images(const std::vector<ImageTensor>& images) {
  std::vector<Tensor> t;
  t.reserve(images.size());
  for (const auto& img : images) t.push_back(img.pixels());
  return stack(t);
}

std::vector<ImageTensor> unstack_images(const Tensor& batch) {
  std::vector<ImageTensor> out;
  for (int i = 0; i < batch.dim(0); ++i) out.emplace_back(batch.slice_rows(i, i + 1).reshaped({3, batch.dim(2), batch.dim(3)}));
  return out;
}

}  // namespace gnr::data
