#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gnr/rng.hpp"
#include "gnr/tensor.hpp"

namespace gnr::data {

/// A validated square RGB image with values in [-1, 1], stored as (3, R, R).
class ImageTensor {
 public:
  ImageTensor() = default;
  explicit ImageTensor(Tensor chw);

  const Tensor& pixels() const { return pixels_; }
  int resolution() const { return pixels_.dim(1); }

  friend bool operator==(const ImageTensor& a, const ImageTensor& b) { return a.pixels_ == b.pixels_; }

 private:
  Tensor pixels_;
};

/// Sampling ranges of the augmentation family. Defaults follow the training
/// recipe: flip, rotation, scale, translation, shear, then upscale by
/// 286/256 and crop back.
struct AugmentRanges {
  double flip_probability = 0.5;
  double max_rotation_deg = 20.0;
  double min_scale = 0.9;
  double max_scale = 1.1;
  double max_translate_frac = 0.1;
  double max_shear = 0.15;
  double upscale_ratio = 286.0 / 256.0;
};

struct AugmentParams {
  bool hflip = false;
  double rotation_deg = 0.0;
  double scale = 1.0;
  std::pair<double, double> translate_frac{0.0, 0.0};  // (x, y) as fractions of the side
  double shear = 0.0;
  std::pair<int, int> crop_offset{0, 0};  // (x, y) inside the upscaled frame
  int upscale_size = 0;

  /// Parameters that leave an image of side `resolution` unchanged.
  static AugmentParams identity(int resolution);
};

int upscale_size_for(int resolution, const AugmentRanges& ranges = {});

/// Throws std::invalid_argument if any field is outside its range.
void validate(const AugmentParams& p, int resolution, const AugmentRanges& ranges = {});

AugmentParams sample_augmentation(Rng& rng, int resolution, const AugmentRanges& ranges = {});

/// Flip, then one affine warp about the image center (rotate, scale, shear,
/// translate), then upscale and crop. All stages are folded into a single
/// bilinear resample with reflect padding at the borders.
ImageTensor apply_augmentation(const ImageTensor& img, const AugmentParams& p, const AugmentRanges& ranges = {});

enum class Domain { X, Y };
enum class Split { Train, Test };

std::string domain_dir(Domain d);  // "domainA" / "domainB"
std::string split_dir(Split s);    // "train" / "test"

/// Images of one domain and split, decoded once and immutable afterwards.
class DomainDataset {
 public:
  DomainDataset(Domain domain, Split split, std::vector<ImageTensor> images, std::vector<std::string> items = {});

  /// Reads `<root>/<domainA|domainB>/<train|test>/*.png|jpg` in filename order.
  static DomainDataset load(const std::filesystem::path& root, Domain domain, Split split, int resolution);

  Domain domain() const { return domain_; }
  Split split() const { return split_; }
  std::size_t size() const { return images_.size(); }
  const ImageTensor& operator[](std::size_t i) const { return images_.at(i); }
  const std::vector<std::string>& items() const { return items_; }
  int resolution() const { return images_.empty() ? 0 : images_.front().resolution(); }

  /// Seeded permutation of the item indices.
  std::vector<std::size_t> shuffled_order(Rng& rng) const;

 private:
  Domain domain_;
  Split split_;
  std::vector<ImageTensor> images_;
  std::vector<std::string> items_;
};

struct AugmentedBatch {
  std::size_t source_id = 0;
  std::vector<ImageTensor> views;
  std::vector<AugmentParams> params;

  /// Views stacked as (n, 3, R, R).
  Tensor to_tensor() const;
};

/// n independently augmented views of the single image dataset[index].
AugmentedBatch make_batch(const DomainDataset& dataset, std::size_t index, int n, Rng& rng,
                          const AugmentRanges& ranges = {});

/// n distinct images, each augmented once, stacked as (n, 3, R, R). This is
/// the fair sample of the domain that the discriminator sees as real.
Tensor sample_real_batch(const DomainDataset& dataset, int n, Rng& rng, const AugmentRanges& ranges = {});

Tensor stack_images(const std::vector<ImageTensor>& images);
std::vector<ImageTensor> unstack_images(const Tensor& batch);

}  // namespace gnr::data
