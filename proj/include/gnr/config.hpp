#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "gnr/trainer.hpp"

namespace gnr::cli {

/// Bad input from the user: unparseable text, unknown keys, out-of-range
/// values, missing paths. Commands map it to exit status 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct MetricSettings {
  int m = 200;  // augmentations per image for DFID
  int n = 20;   // test images for DFID and diversity
  int k = 10;   // outputs per image for diversity
  int fid_samples = 1000;
  std::string extractor_id = "random-conv-64";
  std::vector<int> batch_sizes;  // FID-infinity schedule; empty means the default
  std::uint64_t seed = 0;

  friend bool operator==(const MetricSettings&, const MetricSettings&) = default;
};

/// Everything a command needs. Text form:
///
///   [train]
///   batch_size = 7
///   ...
///   [data]
///   root = data/toy
///
/// Sections: train, net, loss, ablation, data, metrics, output.
struct RunConfig {
  train::TrainConfig train;
  std::filesystem::path data_root;
  MetricSettings metrics;
  std::filesystem::path output_dir = "runs";

  /// Throws ConfigError naming the line for syntax errors and unknown keys.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  /// Every key, in a fixed order; parse(to_text()) reproduces the config.
  std::string to_text() const;
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace gnr::cli
