#include "gnr/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include "json.hpp"
#include <numeric>
#include <set>

#include "gnr/kernels.hpp"

namespace gnr::metrics {
namespace {

using MatrixXd = Eigen::MatrixXd;
using VectorXd = Eigen::VectorXd;

static_assert(std::endian::native == std::endian::little, "feature cache IO assumes a little-endian host");

void check_population(const FeatureSet& f, const char* which) {
  if (f.n < f.d + 1)
    throw MetricError(std::string(which) + ": " + std::to_string(f.n) + " samples is too few for dimension " +
                      std::to_string(f.d) + " (need at least d + 1)");
  for (double v : f.vectors)
    if (!std::isfinite(v)) throw MetricError(std::string(which) + ": non-finite feature value");
}

void moments(const FeatureSet& f, VectorXd& mean, MatrixXd& cov) {
  mean.resize(f.d);
  cov.resize(f.d, f.d);
  // Symmetric, so the row-major kernel output reads the same column-major.
  kernels::mean_covariance(f.vectors, f.n, f.d, {mean.data(), static_cast<std::size_t>(f.d)},
                           {cov.data(), static_cast<std::size_t>(f.d) * f.d});
}

MatrixXd psd_sqrt(const MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s);
  const VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

FeatureSet::FeatureSet(int n_, int d_, std::vector<double> vectors_, std::string extractor_id_)
    : n(n_), d(d_), vectors(std::move(vectors_)), extractor_id(std::move(extractor_id_)) {
  if (n < 0 || d <= 0 || vectors.size() != static_cast<std::size_t>(n) * d)
    throw std::invalid_argument("FeatureSet: " + std::to_string(vectors.size()) + " values do not form " +
                                std::to_string(n) + " x " + std::to_string(d));
}

FeatureSet FeatureSet::subset(const std::vector<int>& rows) const {
  std::vector<double> out;
  out.reserve(rows.size() * d);
  for (int r : rows) {
    if (r < 0 || r >= n) throw std::out_of_range("FeatureSet::subset: row " + std::to_string(r));
    out.insert(out.end(), row(r), row(r) + d);
  }
  return {static_cast<int>(rows.size()), d, std::move(out), extractor_id};
}

void FeatureSet::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MetricError("cannot open " + path.string() + " for writing");
  const std::uint64_t header[3] = {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(d), extractor_id.size()};
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  out.write(extractor_id.data(), static_cast<std::streamsize>(extractor_id.size()));
  std::vector<float> values(vectors.begin(), vectors.end());
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!out) throw MetricError("write failed for " + path.string());
}

FeatureSet FeatureSet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MetricError("cannot open feature cache " + path.string());
  std::uint64_t header[3];
  if (!in.read(reinterpret_cast<char*>(header), sizeof header)) throw MetricError("truncated feature cache " + path.string());
  if (header[1] == 0 || header[1] > (1u << 20) || header[2] > 4096 || header[0] > (1ull << 32))
    throw MetricError("bad feature cache header in " + path.string());
  std::string id(header[2], '\0');
  std::vector<float> values(header[0] * header[1]);
  in.read(id.data(), static_cast<std::streamsize>(id.size()));
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!in) throw MetricError("truncated feature cache " + path.string());
  if (in.peek() != std::char_traits<char>::eof()) throw MetricError("trailing bytes in feature cache " + path.string());
  return {static_cast<int>(header[0]), static_cast<int>(header[1]), std::vector<double>(values.begin(), values.end()),
          std::move(id)};
}

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
  if (a.d != b.d)
    throw MetricError("frechet_distance: dimension mismatch " + std::to_string(a.d) + " vs " + std::to_string(b.d));
  check_population(a, "frechet_distance (first set)");
  check_population(b, "frechet_distance (second set)");

  VectorXd mu_a, mu_b;
  MatrixXd s_a, s_b;
  moments(a, mu_a, s_a);
  moments(b, mu_b, s_b);

  // (S_a S_b)^(1/2) shares its trace with (R S_b R)^(1/2), R = S_a^(1/2),
  // and the latter is symmetric.
  const MatrixXd r = psd_sqrt(s_a);
  MatrixXd m = r * s_b * r;
  m = 0.5 * (m + m.transpose());
  const VectorXd lambda = Eigen::SelfAdjointEigenSolver<MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues();

  double clamped = 0.0, total = 0.0, trace_sqrt = 0.0;
  for (double l : lambda) {
    total += std::abs(l);
    if (l < 0.0)
      clamped -= l;
    else
      trace_sqrt += std::sqrt(l);
  }
  if (total > 0.0 && clamped > 1e-3 * total)
    throw MetricError("frechet_distance: covariance product is not positive semidefinite (clamped mass " +
                      std::to_string(clamped / total) + ")");

  const double fd = (mu_a - mu_b).squaredNorm() + s_a.trace() + s_b.trace() - 2.0 * trace_sqrt;
  return std::max(fd, 0.0);
}

std::vector<int> default_batch_sizes(int n) {
  std::set<int> sizes;
  const double lo = std::log(n / 8.0), hi = std::log(static_cast<double>(n));
  for (int i = 0; i < 8; ++i) sizes.insert(static_cast<int>(std::lround(std::exp(lo + (hi - lo) * i / 7.0))));
  return {sizes.begin(), sizes.end()};
}

double fid_inf(const FeatureSet& gen, const FeatureSet& real, const FidInfOptions& options) {
  std::vector<int> sizes = options.batch_sizes.empty() ? default_batch_sizes(gen.n) : options.batch_sizes;
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  if (sizes.size() < 3) throw MetricError("fid_inf: need at least 3 distinct batch sizes, got " + std::to_string(sizes.size()));
  if (sizes.back() > gen.n)
    throw MetricError("fid_inf: batch size " + std::to_string(sizes.back()) + " exceeds " + std::to_string(gen.n) +
                      " generated samples");
  if (options.resamples < 1) throw std::invalid_argument("fid_inf: resamples must be >= 1");

  // Rows in lexicographic order, so subsets do not depend on how gen was ordered.
  std::vector<int> order(gen.n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return std::lexicographical_compare(gen.row(i), gen.row(i) + gen.d, gen.row(j), gen.row(j) + gen.d);
  });

  std::vector<double> xs, ys;
  for (int size : sizes) {
    Rng rng(options.seed, static_cast<std::uint64_t>(size));
    double acc = 0.0;
    std::vector<int> pick = order;
    for (int k = 0; k < options.resamples; ++k) {
      // Partial Fisher-Yates: the first `size` entries are a uniform subset.
      for (int i = 0; i < size; ++i) std::swap(pick[i], pick[i + rng.index(pick.size() - i)]);
      acc += frechet_distance(gen.subset({pick.begin(), pick.begin() + size}), real);
    }
    xs.push_back(1.0 / size);
    ys.push_back(acc / options.resamples);
  }

  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return my - (sxy / sxx) * mx;
}

RandomConvExtractor::RandomConvExtractor(int dim, std::uint64_t seed) : dim_(dim) {
  if (dim < 1) throw std::invalid_argument("RandomConvExtractor: dim must be positive");
  const int widths[4] = {3, 16, 32, dim};
  Rng rng(seed);
  for (int l = 0; l < 3; ++l) {
    Tensor w({widths[l + 1], widths[l], 3, 3});
    const float s = 1.0f / std::sqrt(static_cast<float>(widths[l] * 9));
    for (float& v : w.values()) v = static_cast<float>(rng.normal()) * s;
    weights_.push_back(std::move(w));
  }
}

std::string RandomConvExtractor::id() const { return "random-conv-" + std::to_string(dim_); }

FeatureSet RandomConvExtractor::extract(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != 3)
    throw ShapeError("extract: expected (B, 3, H, W), got " + shape_str(images.shape()));
  if (images.dim(2) % 4 != 0 || images.dim(3) % 4 != 0)
    throw ShapeError("extract: spatial size must be a multiple of 4, got " + shape_str(images.shape()));
  const auto act = [](float v) { return v > 0.0f ? v : 0.2f * v; };
  Tensor h = images;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = kernels::map(kernels::conv2d(h, weights_[l], 1), act);
    if (l + 1 < weights_.size()) h = kernels::avg_pool2(h);
  }
  const int b = h.dim(0), c = h.dim(1), hw = h.dim(2) * h.dim(3);
  std::vector<double> out(static_cast<std::size_t>(b) * c);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < c; ++j) {
      const float* p = h.data() + (static_cast<std::size_t>(i) * c + j) * hw;
      double s = 0.0;
      for (int k = 0; k < hw; ++k) s += p[k];
      out[static_cast<std::size_t>(i) * c + j] = s / hw;
    }
  return {b, c, std::move(out), id()};
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& id) {
  if (id == "random-conv-64") return std::make_unique<RandomConvExtractor>(64);
  throw MetricError("unknown feature extractor '" + id + "'");
}

std::vector<std::string> extractor_ids() { return {"random-conv-64"}; }

namespace {

FeatureSet extract_all(const FeatureExtractor& extractor, const Tensor& images, int chunk) {
  const int n = images.dim(0);
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(n) * extractor.dim());
  for (int s = 0; s < n; s += chunk) {
    const FeatureSet part = extractor.extract(images.slice_rows(s, std::min(n, s + chunk)));
    values.insert(values.end(), part.vectors.begin(), part.vectors.end());
  }
  return {n, extractor.dim(), std::move(values), extractor.id()};
}

}  // namespace

FeatureSet extract_features(const FeatureExtractor& extractor, const std::vector<data::ImageTensor>& images) {
  if (images.empty()) return {0, extractor.dim(), {}, extractor.id()};
  return extract_all(extractor, data::stack_images(images), 64);
}

Translator generator_translator(const nets::Generator& gen, int style_dim) {
  return {style_dim, [&gen](const Tensor& images, const Tensor& z) { return gen.translate(images, z); }};
}

double dfid(const Translator& translator, const std::vector<data::ImageTensor>& test_images,
            const FeatureExtractor& extractor, const FeatureSet& real, Rng& rng, const DfidOptions& options) {
  if (options.m < extractor.dim() + 1)
    throw MetricError("dfid: M = " + std::to_string(options.m) + " is below extractor dimension + 1 = " +
                      std::to_string(extractor.dim() + 1));
  if (options.n < 1 || options.n > static_cast<int>(test_images.size()))
    throw MetricError("dfid: N = " + std::to_string(options.n) + " but only " + std::to_string(test_images.size()) +
                      " test images");
  const std::uint64_t base = rng.next_u64();
  double total = 0.0;
  for (int i = 0; i < options.n; ++i) {
    Rng task(base, static_cast<std::uint64_t>(i));
    const data::ImageTensor& src = test_images[i];
    std::vector<double> feats;
    feats.reserve(static_cast<std::size_t>(options.m) * extractor.dim());
    for (int s = 0; s < options.m; s += options.chunk) {
      const int len = std::min(options.chunk, options.m - s);
      std::vector<data::ImageTensor> views;
      views.reserve(len);
      for (int j = 0; j < len; ++j)
        views.push_back(data::apply_augmentation(
            src, data::sample_augmentation(task, src.resolution(), options.ranges), options.ranges));
      const Tensor z = nets::sample_styles(task, len, translator.style_dim);
      const FeatureSet f = extractor.extract(translator.apply(data::stack_images(views), z));
      feats.insert(feats.end(), f.vectors.begin(), f.vectors.end());
    }
    total += frechet_distance({options.m, extractor.dim(), std::move(feats), extractor.id()}, real);
  }
  return total / options.n;
}

double rms_distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("rms_distance: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(a.numel()));
}

Distance feature_distance(const FeatureExtractor& extractor) {
  return [&extractor](const Tensor& a, const Tensor& b) {
    const Tensor items[2] = {a, b};
    const FeatureSet f = extractor.extract(concat_rows(items));
    double s = 0.0;
    for (int j = 0; j < f.d; ++j) s += (f.row(0)[j] - f.row(1)[j]) * (f.row(0)[j] - f.row(1)[j]);
    return std::sqrt(s);
  };
}

double pairwise_diversity(const Translator& translator, const std::vector<data::ImageTensor>& test_images, int k,
                          const Distance& distance, Rng& rng, int n) {
  if (k < 2) throw std::invalid_argument("pairwise_diversity: k must be >= 2, got " + std::to_string(k));
  if (test_images.empty()) throw MetricError("pairwise_diversity: empty test set");
  if (n < 1) throw std::invalid_argument("pairwise_diversity: n must be >= 1");
  n = std::min<int>(n, static_cast<int>(test_images.size()));
  const std::uint64_t base = rng.next_u64();
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    Rng task(base, static_cast<std::uint64_t>(i));
    const std::vector<data::ImageTensor> copies(static_cast<std::size_t>(k), test_images[i]);
    const Tensor out = translator.apply(data::stack_images(copies), nets::sample_styles(task, k, translator.style_dim));
    double acc = 0.0;
    for (int a = 0; a < k; ++a)
      for (int b = a + 1; b < k; ++b) acc += distance(out.slice_rows(a, a + 1), out.slice_rows(b, b + 1));
    total += acc / (k * (k - 1) / 2);
  }
  return total / n;
}

void write_reports_csv(const std::filesystem::path& path, const std::vector<MetricReport>& reports) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw MetricError("cannot open " + path.string() + " for writing");
  out << "metric,value,population_sizes,extractor_id,config\n";
  for (const auto& r : reports) {
    std::string sizes;
    for (std::size_t i = 0; i < r.population_sizes.size(); ++i)
      sizes += (i ? ";" : "") + std::to_string(r.population_sizes[i]);
    std::string cfg;
    for (char c : r.config) {
      if (c == '"') cfg += '"';
      cfg += c;
    }
    char value[32];
    std::snprintf(value, sizeof value, "%.17g", r.value);
    out << r.metric_name << ',' << value << ',' << sizes << ',' << r.extractor_id << ",\"" << cfg << "\"\n";
  }
}

void write_reports_json(const std::filesystem::path& path, const std::vector<MetricReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports)
    arr.push_back({{"metric", r.metric_name},
                   {"value", r.value},
                   {"population_sizes", r.population_sizes},
                   {"extractor_id", r.extractor_id},
                   {"config", r.config}});
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw MetricError("cannot open " + path.string() + " for writing");
  out << nlohmann::json{{"metrics", arr}}.dump(2) << '\n';
}

}  // namespace gnr::metrics
