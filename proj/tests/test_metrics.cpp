#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "gnr/metrics.hpp"
#include "json.hpp"
#include "metric_oracles.hpp"
#include "test_util.hpp"

using namespace gnr;
using namespace gnr::testing;
using metrics::FeatureSet;

namespace {

FeatureSet random_features(Rng& rng, int n, int d) {
  return gaussian_features(rng, n, std::vector<double>(d, 0.0), std::vector<double>(d, 1.0));
}

// Correlated features: x = A g with a random mixing matrix.
FeatureSet mixed_features(Rng& rng, int n, int d, double shift) {
  std::vector<double> a(d * d);
  for (double& v : a) v = rng.normal() * 0.7;
  std::vector<double> out(static_cast<std::size_t>(n) * d);
  std::vector<double> g(d);
  for (int i = 0; i < n; ++i) {
    for (double& v : g) v = rng.normal();
    for (int r = 0; r < d; ++r) {
      double s = shift;
      for (int c = 0; c < d; ++c) s += a[r * d + c] * g[c];
      out[static_cast<std::size_t>(i) * d + r] = s;
    }
  }
  return {n, d, std::move(out), "mixed"};
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("gnr_test_metrics_" + name);
}

}  // namespace

TEST_CASE("frechet distance of a set with itself is zero") {
  Rng rng(1);
  const FeatureSet a = mixed_features(rng, 500, 8, 0.3);
  CHECK(metrics::frechet_distance(a, a) < 1e-6);
  const FeatureSet b = random_features(rng, 300, 64);
  CHECK(metrics::frechet_distance(b, b) < 1e-6);
}

TEST_CASE("frechet distance recovers a Gaussian mean shift") {
  for (std::uint64_t seed : {2u, 3u, 4u}) {
    Rng rng(seed);
    const int d = 8;
    std::vector<double> mu(d), zero(d, 0.0), one(d, 1.0);
    for (double& m : mu) m = rng.uniform(-1.0, 1.0);
    double shift = 0.0;
    for (double m : mu) shift += m * m;
    const FeatureSet a = gaussian_features(rng, 10000, zero, one);
    const FeatureSet b = gaussian_features(rng, 10000, mu, one);
    const double fd = metrics::frechet_distance(a, b);
    CAPTURE(seed);
    CAPTURE(shift);
    CAPTURE(fd);
    CHECK(std::fabs(fd - shift) < 0.05 * shift);
  }
}

TEST_CASE("frechet distance is symmetric") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const FeatureSet a = mixed_features(rng, 200, 8, 0.0);
    const FeatureSet b = mixed_features(rng, 300, 8, 0.5);
    CHECK(std::fabs(metrics::frechet_distance(a, b) - metrics::frechet_distance(b, a)) <= 1e-8);
  }
}

TEST_CASE("frechet distance agrees with a brute-force square root") {
  Rng rng(6);
  for (int d : {1, 2, 3, 5, 8}) {
    for (int trial = 0; trial < 5; ++trial) {
      const FeatureSet a = mixed_features(rng, 50 + 30 * trial, d, 0.0);
      const FeatureSet b = mixed_features(rng, 80, d, 0.2 * trial);
      const double fast = metrics::frechet_distance(a, b);
      const double slow = brute_force_frechet(a, b);
      CAPTURE(d);
      CAPTURE(fast);
      CAPTURE(slow);
      CHECK(std::fabs(fast - slow) <= 1e-6);
    }
  }
}

TEST_CASE("frechet distance rejects bad populations") {
  Rng rng(7);
  const FeatureSet a = random_features(rng, 8, 8);
  const FeatureSet b = random_features(rng, 9, 8);
  CHECK_THROWS_AS(metrics::frechet_distance(a, b), metrics::MetricError);
  CHECK_NOTHROW(metrics::frechet_distance(b, b));
  CHECK_THROWS_AS(metrics::frechet_distance(b, random_features(rng, 20, 4)), metrics::MetricError);
  FeatureSet bad = random_features(rng, 20, 4);
  bad.vectors[3] = std::nan("");
  CHECK_THROWS_AS(metrics::frechet_distance(bad, random_features(rng, 20, 4)), metrics::MetricError);
}

TEST_CASE("frechet distance is nonnegative on degenerate covariances") {
  Rng rng(8);
  // Rank-one features: every row is a multiple of one direction.
  std::vector<double> v(100 * 4);
  for (int i = 0; i < 100; ++i) {
    const double t = rng.normal();
    for (int j = 0; j < 4; ++j) v[i * 4 + j] = t * (j + 1);
  }
  const FeatureSet a(100, 4, v, "rank1");
  const FeatureSet b = random_features(rng, 100, 4);
  CHECK(metrics::frechet_distance(a, b) >= 0.0);
  CHECK(metrics::frechet_distance(a, a) < 1e-6);
}

TEST_CASE("default batch sizes are log-spaced from N/8 to N") {
  const auto sizes = metrics::default_batch_sizes(2000);
  REQUIRE(sizes.size() == 8);
  CHECK(sizes.front() == 250);
  CHECK(sizes.back() == 2000);
  for (std::size_t i = 1; i < sizes.size(); ++i) CHECK(sizes[i] / static_cast<double>(sizes[i - 1]) == doctest::Approx(std::pow(8.0, 1.0 / 7.0)).epsilon(0.01));
}

TEST_CASE("fid_inf of a set against itself is near zero") {
  Rng rng(9);
  const FeatureSet a = random_features(rng, 1000, 8);
  CHECK(std::fabs(metrics::fid_inf(a, a)) < 0.5);
}

TEST_CASE("fid_inf ignores batch size order and row order") {
  Rng rng(10);
  const FeatureSet gen = mixed_features(rng, 400, 4, 0.3);
  const FeatureSet real = mixed_features(rng, 600, 4, 0.0);
  metrics::FidInfOptions a, b;
  a.batch_sizes = {50, 100, 200, 400};
  b.batch_sizes = {400, 50, 200, 100, 50};
  const double base = metrics::fid_inf(gen, real, a);
  CHECK(metrics::fid_inf(gen, real, b) == base);

  std::vector<int> perm(gen.n);
  for (int i = 0; i < gen.n; ++i) perm[i] = gen.n - 1 - i;
  std::swap(perm[3], perm[200]);
  CHECK(metrics::fid_inf(gen.subset(perm), real, a) == base);
}

TEST_CASE("fid_inf validates its schedule") {
  Rng rng(11);
  const FeatureSet gen = random_features(rng, 200, 4);
  metrics::FidInfOptions opt;
  opt.batch_sizes = {50, 100, 100, 50};
  CHECK_THROWS_AS(metrics::fid_inf(gen, gen, opt), metrics::MetricError);
  opt.batch_sizes = {50, 100, 300};
  CHECK_THROWS_AS(metrics::fid_inf(gen, gen, opt), metrics::MetricError);
}

TEST_CASE("fid_inf is closer to the true distance than small-sample FID") {
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const BiasTrial t = fid_bias_trial(seed);
    CAPTURE(seed);
    CAPTURE(t.truth);
    CAPTURE(t.fid_inf);
    CAPTURE(t.fid_small);
    improved += t.improved();
  }
  CHECK(improved >= 4);
}

TEST_CASE("random conv extractor is deterministic and 64-dimensional") {
  auto ex = metrics::make_extractor("random-conv-64");
  CHECK(ex->id() == "random-conv-64");
  Rng rng(12);
  const Tensor imgs = random_image(rng, {3, 3, 64, 64});
  const FeatureSet a = ex->extract(imgs);
  const FeatureSet b = metrics::make_extractor("random-conv-64")->extract(imgs);
  CHECK(a.n == 3);
  CHECK(a.d == 64);
  CHECK(a.vectors == b.vectors);
  CHECK_THROWS_AS(metrics::make_extractor("inception"), metrics::MetricError);
}

TEST_CASE("random conv extractor separates distinct images") {
  const SyntheticDomains dom = synthetic_domains(13, 100, 100, 32);
  auto ex = metrics::make_extractor("random-conv-64");
  std::vector<data::ImageTensor> all = dom.x;
  all.insert(all.end(), dom.y.begin(), dom.y.end());
  const FeatureSet f = metrics::extract_features(*ex, all);
  std::set<std::vector<double>> rows;
  for (int i = 0; i < f.n; ++i) rows.insert(std::vector<double>(f.row(i), f.row(i) + f.d));
  CHECK(rows.size() == all.size());
}

TEST_CASE("feature sets round-trip through the cache format") {
  Rng rng(14);
  FeatureSet f = random_features(rng, 30, 5);
  for (double& v : f.vectors) v = static_cast<float>(v);
  f.extractor_id = "random-conv-64";
  const auto path = temp_path("cache.bin");
  f.save(path);
  CHECK(std::filesystem::file_size(path) == 3 * 8 + f.extractor_id.size() + 30 * 5 * 4);
  const FeatureSet g = FeatureSet::load(path);
  CHECK(g.n == 30);
  CHECK(g.d == 5);
  CHECK(g.extractor_id == f.extractor_id);
  CHECK(g.vectors == f.vectors);

  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  CHECK_THROWS_AS(FeatureSet::load(path), metrics::MetricError);
  CHECK_THROWS_AS(FeatureSet::load(temp_path("missing.bin")), metrics::MetricError);
}

TEST_CASE("dfid separates a perfect sampler from a style-ignoring translator") {
  const SyntheticDomains dom = synthetic_domains(15, 20, 400, 32);
  auto ex = metrics::make_extractor("random-conv-64");
  const FeatureSet real = metrics::extract_features(*ex, dom.y);
  metrics::DfidOptions opt;
  opt.m = 100;
  opt.n = 5;
  Rng r1(1), r2(1);
  const double perfect = metrics::dfid(perfect_sampler(dom.y, 3), dom.x, *ex, real, r1, opt);
  const double ignoring = metrics::dfid(style_ignoring(), dom.x, *ex, real, r2, opt);
  const double floor = fid_noise_floor(real, opt.m, 20, 4);
  CAPTURE(perfect);
  CAPTURE(ignoring);
  CAPTURE(floor);
  CHECK(perfect < 2.0 * floor);
  CHECK(ignoring - perfect >= 2.0 * floor);
}

TEST_CASE("dfid validates M and N") {
  const SyntheticDomains dom = synthetic_domains(16, 3, 100, 32);
  auto ex = metrics::make_extractor("random-conv-64");
  const FeatureSet real = metrics::extract_features(*ex, dom.y);
  Rng rng(1);
  metrics::DfidOptions opt;
  opt.m = 64;
  opt.n = 1;
  CHECK_THROWS_AS(metrics::dfid(style_ignoring(), dom.x, *ex, real, rng, opt), metrics::MetricError);
  opt.m = 65;
  opt.n = 4;
  CHECK_THROWS_AS(metrics::dfid(style_ignoring(), dom.x, *ex, real, rng, opt), metrics::MetricError);
}

TEST_CASE("pairwise diversity is zero for a translator that ignores z") {
  const SyntheticDomains dom = synthetic_domains(17, 5, 50, 32);
  Rng rng(1);
  CHECK(metrics::pairwise_diversity(style_ignoring(), dom.x, 10, metrics::rms_distance, rng, 5) == 0.0);
  auto ex = metrics::make_extractor("random-conv-64");
  CHECK(metrics::pairwise_diversity(style_ignoring(), dom.x, 4, metrics::feature_distance(*ex), rng, 5) == 0.0);
  CHECK(metrics::pairwise_diversity(perfect_sampler(dom.y, 2), dom.x, 10, metrics::rms_distance, rng, 5) > 0.1);
  CHECK_THROWS_AS(metrics::pairwise_diversity(style_ignoring(), dom.x, 1, metrics::rms_distance, rng), std::invalid_argument);
  CHECK_THROWS_AS(metrics::pairwise_diversity(style_ignoring(), {}, 10, metrics::rms_distance, rng), metrics::MetricError);
}

TEST_CASE("pairwise diversity does not depend on pair order for a symmetric distance") {
  const SyntheticDomains dom = synthetic_domains(18, 3, 50, 32);
  Rng r1(5), r2(5);
  const metrics::Distance swapped = [](const Tensor& a, const Tensor& b) { return metrics::rms_distance(b, a); };
  CHECK(metrics::pairwise_diversity(perfect_sampler(dom.y, 9), dom.x, 6, metrics::rms_distance, r1, 3) ==
        metrics::pairwise_diversity(perfect_sampler(dom.y, 9), dom.x, 6, swapped, r2, 3));
}

TEST_CASE("metric reports are written as CSV and JSON") {
  std::vector<metrics::MetricReport> reports{{"fid", 12.5, {1000, 2000}, "random-conv-64", "seed = 1"},
                                             {"dfid", 3.25, {100}, "random-conv-64", "say \"hi\""}};
  const auto csv = temp_path("report.csv");
  const auto json = temp_path("report.json");
  metrics::write_reports_csv(csv, reports);
  metrics::write_reports_json(json, reports);
  std::ifstream c(csv);
  std::string header, line1, line2;
  std::getline(c, header);
  std::getline(c, line1);
  std::getline(c, line2);
  CHECK(header == "metric,value,population_sizes,extractor_id,config");
  CHECK(line1 == "fid,12.5,1000;2000,random-conv-64,\"seed = 1\"");
  CHECK(line2 == "dfid,3.25,100,random-conv-64,\"say \"\"hi\"\"\"");
  std::ifstream j(json);
  const auto parsed = nlohmann::json::parse(j);
  CHECK(parsed["metrics"].size() == 2);
  CHECK(parsed["metrics"][1]["value"].get<double>() == 3.25);
  CHECK(parsed["metrics"][0]["population_sizes"][1].get<int>() == 2000);
}
