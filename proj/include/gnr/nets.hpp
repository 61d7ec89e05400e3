#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gnr/autograd.hpp"
#include "gnr/rng.hpp"
#include "gnr/tensor.hpp"

namespace gnr::nets {

struct NetConfig {
  int resolution = 64;
  int base_channels = 32;
  int max_channels = 256;
  int depth = 2;  // encoder downsamplings; content grid is resolution / 2^depth
  int style_dim = 8;
  int disc_features = 128;
  /// Replace leaky ReLU by the smooth 0.2x + 0.8 softplus(x). Used by finite
  /// difference checks, where kinks make numeric gradients unreliable.
  bool smooth_activation = false;

  int channels(int level) const;
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

using NamedParams = std::vector<std::pair<std::string, ag::Var>>;

/// Convolution with equalized learning rate: weights are stored as N(0, 1)
/// and scaled by 1/sqrt(fan_in) on every forward pass.
struct Conv {
  ag::Var w, b;
  int pad = 0;
  float gain = 1.0f;
  Conv() = default;
  Conv(int cin, int cout, int k, Rng& rng);
  ag::Var operator()(const ag::Var& x) const;
};

struct Dense {
  ag::Var w, b;  // w: (out, in)
  float gain = 1.0f;
  Dense() = default;
  Dense(int in, int out, Rng& rng, float bias_init = 0.0f);
  ag::Var operator()(const ag::Var& x) const;  // (B, in) -> (B, out)
};

/// Style-modulated convolution. The style code is mapped by a per-layer
/// affine map to one scale per input channel; output channels are
/// demodulated to unit expected variance unless disabled.
struct ModConv {
  Conv conv;
  Dense affine;
  bool demodulate = true;
  ModConv() = default;
  ModConv(int cin, int cout, int k, int style_dim, bool demodulate, Rng& rng);
  ag::Var operator()(const ag::Var& x, const ag::Var& style) const;
  /// Effective (cin, style_dim) modulation matrix.
  Tensor modulation_matrix() const;
};

struct Encoding {
  ag::Var content;  // (B, C, R/2^d, R/2^d)
  ag::Var style;    // (B, style_dim)
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(const NetConfig& cfg, Rng& rng);
  Encoding operator()(const ag::Var& images) const;
  NamedParams params() const;
  int content_channels() const { return content_channels_; }

 private:
  Conv stem_;
  std::vector<Conv> down_;
  Conv content_head_, style_conv_;
  Dense style_out_;
  int content_channels_ = 0;
  bool smooth_ = false;
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(const NetConfig& cfg, Rng& rng);
  ag::Var operator()(const ag::Var& content, const ag::Var& style) const;
  NamedParams params() const;
  /// Modulation matrices of every layer, input to output.
  std::vector<Tensor> modulation_matrices() const;

 private:
  std::vector<ModConv> layers_;
  std::vector<bool> upsample_before_;
  ModConv to_rgb_;
  bool smooth_ = false;
};

struct Generator {
  Encoder encoder;
  Decoder decoder;
  Generator() = default;
  Generator(const NetConfig& cfg, Rng& rng) : encoder(cfg, rng), decoder(cfg, rng) {}
  NamedParams params() const;
  /// Inference without graph recording: content of each image, decoded with
  /// the matching row of `styles`.
  Tensor translate(const Tensor& images, const Tensor& styles) const;
  /// Encoded style codes, (B, style_dim).
  Tensor styles_of(const Tensor& images) const;
};

/// n rows drawn from N(0, I), (n, dim).
Tensor sample_styles(Rng& rng, int n, int dim);

struct DiscOutput {
  ag::Var sample_logits;  // (B, 1)
  ag::Var batch_logit;    // (1, 1); undefined when the stddev branch is off
};

/// sqrt(mean_i (f_ij - mean_i f_ij)^2 + eps) per feature j, as a (1, F) row.
ag::Var minibatch_stddev(const ag::Var& feats, float eps = 1e-8f);

class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const NetConfig& cfg, Rng& rng);
  /// Penultimate per-sample features, (B, disc_features).
  ag::Var features(const ag::Var& images) const;
  DiscOutput operator()(const ag::Var& images, bool stddev_branch = true) const;
  NamedParams params() const;

 private:
  Conv from_rgb_;
  std::vector<Conv> blocks_;
  Dense fc_, sample_head_, stddev_head_;
  bool smooth_ = false;
};

/// Per-row global average over the spatial dimensions, (B, C, H, W) -> (B, C).
ag::Var global_avg_pool(const ag::Var& x);

}  // namespace gnr::nets
