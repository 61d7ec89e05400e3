#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "gnr/data.hpp"
#include "gnr/image_io.hpp"
#include "gnr/toy_data.hpp"
#include "test_util.hpp"

using namespace gnr;
using namespace gnr::data;
using gnr::testing::max_abs_diff;
using gnr::testing::random_image;

namespace {

// Plain bilinear resize with edge clamping, then a crop.
Tensor upscale_then_crop(const Tensor& img, int up, int ox, int oy) {
  const int R = img.dim(1);
  Tensor out({3, R, R});
  const double ratio = static_cast<double>(R) / up;
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < R; ++j) {
      const double sy = std::clamp((i + oy + 0.5) * ratio - 0.5, 0.0, R - 1.0);
      const double sx = std::clamp((j + ox + 0.5) * ratio - 0.5, 0.0, R - 1.0);
      const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
      const int y1 = std::min(y0 + 1, R - 1), x1 = std::min(x0 + 1, R - 1);
      const double fy = sy - y0, fx = sx - x0;
      for (int c = 0; c < 3; ++c)
        out.at(c, i, j) = static_cast<float>((1 - fy) * ((1 - fx) * img.at(c, y0, x0) + fx * img.at(c, y0, x1)) +
                                             fy * ((1 - fx) * img.at(c, y1, x0) + fx * img.at(c, y1, x1)));
    }
  return out;
}

DomainDataset random_dataset(int count, int resolution, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ImageTensor> images;
  for (int i = 0; i < count; ++i) images.emplace_back(random_image(rng, {3, resolution, resolution}));
  return DomainDataset(Domain::X, Split::Train, std::move(images));
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("gnr_test_data_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("upscale size follows the 286/256 ratio") {
  CHECK(upscale_size_for(256) == 286);
  CHECK(upscale_size_for(64) == 72);
  Rng rng(1);
  CHECK(sample_augmentation(rng, 256).upscale_size == 286);
}

TEST_CASE("augmentation sampling is deterministic per seed") {
  Rng a(42), b(42);
  for (int i = 0; i < 20; ++i) {
    const AugmentParams pa = sample_augmentation(a, 64), pb = sample_augmentation(b, 64);
    CHECK(pa.hflip == pb.hflip);
    CHECK(pa.rotation_deg == pb.rotation_deg);
    CHECK(pa.scale == pb.scale);
    CHECK(pa.translate_frac == pb.translate_frac);
    CHECK(pa.shear == pb.shear);
    CHECK(pa.crop_offset == pb.crop_offset);
  }
}

TEST_CASE("sampled parameters cover their ranges uniformly") {
  Rng rng(7);
  const int n = 10000;
  int flips = 0;
  double rmin = 1e9, rmax = -1e9;
  for (int i = 0; i < n; ++i) {
    const AugmentParams p = sample_augmentation(rng, 64);
    CHECK_NOTHROW(validate(p, 64));
    flips += p.hflip;
    rmin = std::min(rmin, p.rotation_deg);
    rmax = std::max(rmax, p.rotation_deg);
  }
  const double rate = static_cast<double>(flips) / n;
  CHECK(rate >= 0.45);
  CHECK(rate <= 0.55);
  CHECK(rmin > -20.0);
  CHECK(rmax < 20.0);
  CHECK(rmin < -19.0);
  CHECK(rmax > 19.0);
}

TEST_CASE("out-of-range parameters are rejected") {
  const ImageTensor img(Tensor({3, 16, 16}));
  AugmentParams p = AugmentParams::identity(16);
  p.rotation_deg = 25;
  CHECK_THROWS_AS(apply_augmentation(img, p), std::invalid_argument);
  p = AugmentParams::identity(16);
  p.scale = 1.2;
  CHECK_THROWS_AS(apply_augmentation(img, p), std::invalid_argument);
  p = AugmentParams::identity(16);
  p.upscale_size = 18;
  p.crop_offset = {3, 0};
  CHECK_THROWS_AS(apply_augmentation(img, p), std::invalid_argument);
  p.crop_offset = {2, 0};
  CHECK_NOTHROW(apply_augmentation(img, p));
}

TEST_CASE("identity parameters reduce to upscale and crop") {
  Rng rng(3);
  for (const int R : {32, 64}) {
    const Tensor src = random_image(rng, {3, R, R});
    const ImageTensor img(src);
    CHECK(max_abs_diff(apply_augmentation(img, AugmentParams::identity(R)).pixels(), src) <= 1e-5);

    AugmentParams p = AugmentParams::identity(R);
    p.upscale_size = upscale_size_for(R);
    const int off = (p.upscale_size - R) / 2;
    p.crop_offset = {off, off};
    const Tensor got = apply_augmentation(img, p).pixels();
    CHECK(max_abs_diff(got, upscale_then_crop(src, p.upscale_size, off, off)) <= 1e-5);
  }
}

TEST_CASE("horizontal flip is an involution") {
  Rng rng(4);
  const Tensor src = random_image(rng, {3, 24, 24});
  AugmentParams p = AugmentParams::identity(24);
  p.hflip = true;
  const ImageTensor once = apply_augmentation(ImageTensor(src), p);
  CHECK(once.pixels().at(0, 3, 0) == src.at(0, 3, 23));
  CHECK(max_abs_diff(apply_augmentation(once, p).pixels(), src) <= 1e-5);
}

TEST_CASE("constant images stay constant under any augmentation") {
  Rng rng(5);
  const ImageTensor img(Tensor({3, 32, 32}, 0.37f));
  for (int i = 0; i < 20; ++i) {
    const Tensor out = apply_augmentation(img, sample_augmentation(rng, 32)).pixels();
    for (float v : out.values()) CHECK(std::fabs(v - 0.37f) < 1e-6);
  }
}

TEST_CASE("augmentation preserves the value range") {
  Rng rng(6);
  const ImageTensor img(random_image(rng, {3, 32, 32}));
  for (int i = 0; i < 20; ++i) {
    const Tensor out = apply_augmentation(img, sample_augmentation(rng, 32)).pixels();
    CHECK(out.all_finite());
    CHECK(out.max_abs() <= 1.0f);
  }
}

TEST_CASE("make_batch builds n distinct views of one source") {
  const DomainDataset ds = random_dataset(5, 32, 9);
  Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const AugmentedBatch batch = make_batch(ds, 3, 7, rng);
    CHECK(batch.source_id == 3);
    REQUIRE(batch.views.size() == 7);
    CHECK(batch.params.size() == 7);
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = i + 1; j < 7; ++j) CHECK_FALSE(batch.views[i] == batch.views[j]);
    CHECK(batch.to_tensor().shape() == Shape{7, 3, 32, 32});
  }
  const AugmentedBatch pair = make_batch(ds, 0, 2, rng);
  CHECK(pair.params[0].rotation_deg != pair.params[1].rotation_deg);
  CHECK_THROWS_AS(make_batch(ds, 5, 7, rng), std::out_of_range);
  CHECK_THROWS_AS(make_batch(ds, 0, 1, rng), std::invalid_argument);
}

TEST_CASE("batch construction is reproducible under a fixed seed") {
  const DomainDataset ds = random_dataset(4, 16, 11);
  Rng a(12), b(12);
  CHECK(make_batch(ds, 1, 7, a).to_tensor() == make_batch(ds, 1, 7, b).to_tensor());
  CHECK(sample_real_batch(ds, 3, a) == sample_real_batch(ds, 3, b));
  CHECK(ds.shuffled_order(a) == ds.shuffled_order(b));
}

TEST_CASE("image validation rejects bad tensors") {
  CHECK_THROWS_AS(ImageTensor(Tensor({3, 4, 5})), ShapeError);
  CHECK_THROWS_AS(ImageTensor(Tensor({1, 4, 4})), ShapeError);
  CHECK_THROWS_AS(ImageTensor(Tensor({3, 4, 4}, 1.5f)), std::invalid_argument);
}

TEST_CASE("png round trip quantizes to 8 bits") {
  const auto dir = temp_dir("png");
  std::filesystem::create_directories(dir);
  Rng rng(13);
  const Tensor src = random_image(rng, {3, 8, 8});
  io::write_png(dir / "a.png", src);
  const Tensor back = io::read_image(dir / "a.png");
  CHECK(back.shape() == src.shape());
  CHECK(max_abs_diff(back, src) <= 0.5 / 127.5 + 1e-6);
  std::filesystem::remove_all(dir);
}

TEST_CASE("toy dataset is deterministic, split and loadable") {
  const auto a = temp_dir("toy_a"), b = temp_dir("toy_b"), c = temp_dir("toy_c");
  toy::make_toy_dataset(a, 1, {20, 12}, 32);
  toy::make_toy_dataset(b, 1, {20, 12}, 32);
  toy::make_toy_dataset(c, 2, {20, 12}, 32);

  const DomainDataset xa = DomainDataset::load(a, Domain::X, Split::Train, 32);
  const DomainDataset xt = DomainDataset::load(a, Domain::X, Split::Test, 32);
  const DomainDataset ya = DomainDataset::load(a, Domain::Y, Split::Train, 32);
  CHECK(xa.size() == 18);
  CHECK(xt.size() == 2);
  CHECK(ya.size() == 11);

  bool any_differs = false;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a);
    CHECK(file_bytes(entry.path()) == file_bytes(b / rel));
    any_differs = any_differs || file_bytes(entry.path()) != file_bytes(c / rel);
  }
  CHECK(any_differs);
  for (const auto& root : {a, b, c}) std::filesystem::remove_all(root);
}

TEST_CASE("toy domains differ in appearance") {
  Rng rng(14);
  double mean_x = 0, mean_y = 0;
  for (int i = 0; i < 20; ++i) {
    const Tensor x = toy::render(toy::sample_scene(Domain::X, rng), 32);
    const Tensor y = toy::render(toy::sample_scene(Domain::Y, rng), 32);
    for (float v : x.values()) mean_x += v;
    for (float v : y.values()) mean_y += v;
  }
  CHECK(mean_x > mean_y);
  const toy::Scene s = toy::sample_scene(Domain::Y, rng);
  CHECK_FALSE(toy::render(s, 32) == toy::render(toy::moved(s, 0.05, 0.0, 0.0), 32));
  CHECK(toy::render(s, 32) == toy::render(toy::moved(s, 0.0, 0.0, 0.0), 32));
}
