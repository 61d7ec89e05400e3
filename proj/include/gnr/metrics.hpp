#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "gnr/data.hpp"
#include "gnr/nets.hpp"
#include "gnr/rng.hpp"
#include "gnr/tensor.hpp"

namespace gnr::metrics {

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// N feature vectors of dimension d, stored row-major in double precision.
struct FeatureSet {
  int n = 0;
  int d = 0;
  std::vector<double> vectors;
  std::string extractor_id;

  FeatureSet() = default;
  FeatureSet(int n, int d, std::vector<double> vectors, std::string extractor_id);
  const double* row(int i) const { return vectors.data() + static_cast<std::size_t>(i) * d; }
  FeatureSet subset(const std::vector<int>& rows) const;

  /// Header (uint64 N, uint64 d, uint64 id length, id bytes) followed by
  /// row-major little-endian float32.
  void save(const std::filesystem::path& path) const;
  static FeatureSet load(const std::filesystem::path& path);
};

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).
/// Throws MetricError when either set has fewer than d + 1 rows, contains a
/// non-finite value, or the eigenvalues clamped to zero carry more than 1e-3
/// of the spectrum's absolute mass.
double frechet_distance(const FeatureSet& a, const FeatureSet& b);

struct FidInfOptions {
  std::vector<int> batch_sizes;  // empty: 8 log-spaced sizes from N/8 to N
  int resamples = 5;
  std::uint64_t seed = 0;
};

/// Intercept at 1/N = 0 of a least-squares line through mean FID(subset of
/// gen of size N, real) against 1/N.
double fid_inf(const FeatureSet& gen, const FeatureSet& real, const FidInfOptions& options = {});
std::vector<int> default_batch_sizes(int n);

/// Maps images (B, 3, R, R) to B feature vectors.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string id() const = 0;
  virtual int dim() const = 0;
  virtual FeatureSet extract(const Tensor& images) const = 0;
};

/// Random untrained convolutional network with global average pooling.
/// Weights come from a fixed seed, so features are reproducible everywhere.
class RandomConvExtractor : public FeatureExtractor {
 public:
  explicit RandomConvExtractor(int dim = 64, std::uint64_t seed = 0x5eed);
  std::string id() const override;
  int dim() const override { return dim_; }
  FeatureSet extract(const Tensor& images) const override;

 private:
  int dim_;
  std::vector<Tensor> weights_;
};

/// Known ids: "random-conv-64". Throws MetricError otherwise.
std::unique_ptr<FeatureExtractor> make_extractor(const std::string& id);
std::vector<std::string> extractor_ids();

/// Images in chunks, concatenated.
FeatureSet extract_features(const FeatureExtractor& extractor, const std::vector<data::ImageTensor>& images);

/// Translates a batch of images (B, 3, R, R) under latent codes (B, style_dim).
struct Translator {
  int style_dim = 8;
  std::function<Tensor(const Tensor& images, const Tensor& z)> apply;
};

/// Holds a reference to `gen`, which must outlive the translator.
Translator generator_translator(const nets::Generator& gen, int style_dim);

struct DfidOptions {
  int m = 1000;  // augmentations per test image
  int n = 100;   // test images
  int chunk = 50;
  data::AugmentRanges ranges;
};

/// Mean over the first n test images of FID between the translations of m
/// augmentations of that image, each under its own z, and `real`.
double dfid(const Translator& translator, const std::vector<data::ImageTensor>& test_images, const FeatureExtractor& extractor,
            const FeatureSet& real, Rng& rng, const DfidOptions& options = {});

using Distance = std::function<double(const Tensor& a, const Tensor& b)>;

/// Root mean squared pixel difference.
double rms_distance(const Tensor& a, const Tensor& b);
/// Euclidean distance between extractor features, a stand-in for a learned
/// perceptual metric.
Distance feature_distance(const FeatureExtractor& extractor);

/// For each of the first n test images, k translations with independent z;
/// mean distance over all k(k-1)/2 pairs, averaged over images.
double pairwise_diversity(const Translator& translator, const std::vector<data::ImageTensor>& test_images, int k,
                          const Distance& distance, Rng& rng, int n = 100);

struct MetricReport {
  std::string metric_name;
  double value = 0.0;
  std::vector<int> population_sizes;
  std::string extractor_id;
  std::string config;
};

void write_reports_csv(const std::filesystem::path& path, const std::vector<MetricReport>& reports);
void write_reports_json(const std::filesystem::path& path, const std::vector<MetricReport>& reports);

}  // namespace gnr::metrics
