#include "gnr/nets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gnr::nets {
namespace {

constexpr float kSlope = 0.2f;

Tensor standard_normal(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.normal());
  return t;
}

void append(NamedParams& out, const std::string& prefix, const Conv& c) {
  out.emplace_back(prefix + ".w", c.w);
  out.emplace_back(prefix + ".b", c.b);
}

void append(NamedParams& out, const std::string& prefix, const Dense& d) {
  out.emplace_back(prefix + ".w", d.w);
  out.emplace_back(prefix + ".b", d.b);
}

void append(NamedParams& out, const std::string& prefix, const ModConv& m) {
  append(out, prefix + ".conv", m.conv);
  append(out, prefix + ".affine", m.affine);
}

// Leaky ReLU with gain sqrt(2) so activations keep roughly unit variance.
ag::Var activate(const ag::Var& x, bool smooth) {
  const ag::Var y = smooth ? x * kSlope + ag::softplus(x) * (1.0f - kSlope) : ag::leaky_relu(x, kSlope);
  return y * std::numbers::sqrt2_v<float>;
}

ag::Var as_nchw_bias(const ag::Var& b) { return ag::reshape(b, {1, b.shape()[0], 1, 1}); }

}  // namespace

int NetConfig::channels(int level) const { return std::min(base_channels << level, max_channels); }

void NetConfig::validate() const {
  auto require = [](bool ok, const char* field) {
    if (!ok) throw std::invalid_argument(std::string("invalid network config field: ") + field);
  };
  require(base_channels >= 1, "base_channels");
  require(max_channels >= base_channels, "max_channels");
  require(depth >= 1, "depth");
  require(style_dim >= 1, "style_dim");
  require(disc_features >= 1, "disc_features");
  require(resolution >= 8 && (resolution & (resolution - 1)) == 0, "resolution");
  require((resolution >> depth) >= 2, "depth");
}

Conv::Conv(int cin, int cout, int k, Rng& rng)
    : w(ag::Var::parameter(standard_normal(rng, {cout, cin, k, k}))),
      b(ag::Var::parameter(Tensor({cout}))),
      pad(k / 2),
      gain(1.0f / std::sqrt(static_cast<float>(cin * k * k))) {}

ag::Var Conv::operator()(const ag::Var& x) const {
  return ag::conv2d(x, w * gain, pad) + as_nchw_bias(b);
}

Dense::Dense(int in, int out, Rng& rng, float bias_init)
    : w(ag::Var::parameter(standard_normal(rng, {out, in}))),
      b(ag::Var::parameter(Tensor({out}, bias_init))),
      gain(1.0f / std::sqrt(static_cast<float>(in))) {}

ag::Var Dense::operator()(const ag::Var& x) const {
  return ag::matmul(x, w * gain, false, true) + ag::reshape(b, {1, b.shape()[0]});
}

ModConv::ModConv(int cin, int cout, int k, int style_dim, bool demod, Rng& rng)
    : conv(cin, cout, k, rng), affine(style_dim, cin, rng, 1.0f), demodulate(demod) {}

ag::Var ModConv::operator()(const ag::Var& x, const ag::Var& style) const {
  const int B = x.shape()[0], cin = x.shape()[1];
  const int cout = conv.w.shape()[0];
  const ag::Var s = affine(style);  // (B, cin)
  const ag::Var weight = conv.w * conv.gain;
  ag::Var y = ag::conv2d(x * ag::reshape(s, {B, cin, 1, 1}), weight, conv.pad);
  if (demodulate) {
    // Expected output variance per (sample, out channel) for unit-variance input.
    const ag::Var wsq = ag::reshape(ag::sum_to(ag::square(weight), {cout, cin, 1, 1}), {cout, cin});
    const ag::Var var = ag::matmul(ag::square(s), wsq, false, true);  // (B, cout)
    y = y * ag::reshape(ag::pow(ag::add_scalar(var, 1e-8f), -0.5f), {B, cout, 1, 1});
  }
  return y + as_nchw_bias(conv.b);
}

Tensor ModConv::modulation_matrix() const {
  Tensor m = affine.w.value();
  for (float& v : m.values()) v *= affine.gain;
  return m;
}

ag::Var global_avg_pool(const ag::Var& x) {
  const Shape& s = x.shape();
  return ag::reshape(ag::sum_to(x, {s[0], s[1], 1, 1}), {s[0], s[1]}) * (1.0f / static_cast<float>(s[2] * s[3]));
}

Encoder::Encoder(const NetConfig& cfg, Rng& rng) {
  cfg.validate();
  smooth_ = cfg.smooth_activation;
  stem_ = Conv(3, cfg.channels(0), 3, rng);
  for (int i = 0; i < cfg.depth; ++i) down_.emplace_back(cfg.channels(i), cfg.channels(i + 1), 3, rng);
  content_channels_ = cfg.channels(cfg.depth);
  content_head_ = Conv(content_channels_, content_channels_, 3, rng);
  style_conv_ = Conv(content_channels_, content_channels_, 3, rng);
  style_out_ = Dense(content_channels_, cfg.style_dim, rng);
}

Encoding Encoder::operator()(const ag::Var& images) const {
  if (images.shape().size() != 4 || images.shape()[1] != 3)
    throw ShapeError("encoder expects (B, 3, R, R), got " + shape_str(images.shape()));
  ag::Var h = activate(stem_(images), smooth_);
  for (const Conv& c : down_) h = activate(c(ag::avg_pool2(h)), smooth_);
  Encoding out;
  out.content = content_head_(h);
  out.style = style_out_(global_avg_pool(activate(style_conv_(h), smooth_)));
  if (!out.content.value().all_finite() || !out.style.value().all_finite())
    throw std::runtime_error("encoder produced non-finite activations");
  return out;
}

NamedParams Encoder::params() const {
  NamedParams out;
  append(out, "stem", stem_);
  for (std::size_t i = 0; i < down_.size(); ++i) append(out, "down" + std::to_string(i), down_[i]);
  append(out, "content", content_head_);
  append(out, "style_conv", style_conv_);
  append(out, "style_out", style_out_);
  return out;
}

Decoder::Decoder(const NetConfig& cfg, Rng& rng) {
  cfg.validate();
  smooth_ = cfg.smooth_activation;
  const int top = cfg.channels(cfg.depth);
  layers_.emplace_back(top, top, 3, cfg.style_dim, true, rng);
  upsample_before_.push_back(false);
  for (int level = cfg.depth - 1; level >= 0; --level) {
    layers_.emplace_back(cfg.channels(level + 1), cfg.channels(level), 3, cfg.style_dim, true, rng);
    upsample_before_.push_back(true);
    layers_.emplace_back(cfg.channels(level), cfg.channels(level), 3, cfg.style_dim, true, rng);
    upsample_before_.push_back(false);
  }
  to_rgb_ = ModConv(cfg.channels(0), 3, 1, cfg.style_dim, false, rng);
}

ag::Var Decoder::operator()(const ag::Var& content, const ag::Var& style) const {
  const int expected = layers_.front().conv.w.shape()[1];
  if (content.shape().size() != 4 || content.shape()[1] != expected)
    throw ShapeError("decoder content code has shape " + shape_str(content.shape()) + ", expected channels " +
                     std::to_string(expected));
  if (style.shape().size() != 2 || style.shape()[0] != content.shape()[0] ||
      style.shape()[1] != layers_.front().affine.w.shape()[1])
    throw ShapeError("decoder style code has shape " + shape_str(style.shape()));
  ag::Var h = content;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (upsample_before_[i]) h = ag::upsample2(h);
    h = activate(layers_[i](h, style), smooth_);
  }
  return ag::tanh(to_rgb_(h, style));
}

NamedParams Decoder::params() const {
  NamedParams out;
  for (std::size_t i = 0; i < layers_.size(); ++i) append(out, "mod" + std::to_string(i), layers_[i]);
  append(out, "to_rgb", to_rgb_);
  return out;
}

std::vector<Tensor> Decoder::modulation_matrices() const {
  std::vector<Tensor> out;
  for (const ModConv& m : layers_) out.push_back(m.modulation_matrix());
  out.push_back(to_rgb_.modulation_matrix());
  return out;
}

NamedParams Generator::params() const {
  NamedParams out;
  for (auto& [name, v] : encoder.params()) out.emplace_back("enc." + name, v);
  for (auto& [name, v] : decoder.params()) out.emplace_back("dec." + name, v);
  return out;
}

Tensor Generator::translate(const Tensor& images, const Tensor& styles) const {
  const ag::NoGradGuard no_grad;
  return decoder(encoder(ag::constant(images)).content, ag::constant(styles)).value();
}

Tensor Generator::styles_of(const Tensor& images) const {
  const ag::NoGradGuard no_grad;
  return encoder(ag::constant(images)).style.value();
}

Tensor sample_styles(Rng& rng, int n, int dim) { return standard_normal(rng, {n, dim}); }

ag::Var minibatch_stddev(const ag::Var& feats, float eps) {
  const Shape& s = feats.shape();
  if (s.size() != 2) throw ShapeError("minibatch_stddev expects (B, F), got " + shape_str(s));
  if (s[0] < 2) throw std::invalid_argument("minibatch_stddev needs a batch of at least 2");
  const float inv_b = 1.0f / static_cast<float>(s[0]);
  const ag::Var mu = ag::sum_to(feats, {1, s[1]}) * inv_b;
  const ag::Var var = ag::sum_to(ag::square(feats - mu), {1, s[1]}) * inv_b;
  return ag::sqrt(ag::add_scalar(var, eps));
}

Discriminator::Discriminator(const NetConfig& cfg, Rng& rng) {
  cfg.validate();
  smooth_ = cfg.smooth_activation;
  from_rgb_ = Conv(3, cfg.channels(0), 1, rng);
  int level = 0;
  for (int res = cfg.resolution; res > 4; res /= 2, ++level)
    blocks_.emplace_back(cfg.channels(level), cfg.channels(level + 1), 3, rng);
  fc_ = Dense(cfg.channels(level) * 16, cfg.disc_features, rng);
  sample_head_ = Dense(cfg.disc_features, 1, rng);
  stddev_head_ = Dense(cfg.disc_features, 1, rng);
}

ag::Var Discriminator::features(const ag::Var& images) const {
  if (images.shape().size() != 4 || images.shape()[1] != 3)
    throw ShapeError("discriminator expects (B, 3, R, R), got " + shape_str(images.shape()));
  ag::Var h = activate(from_rgb_(images), smooth_);
  for (const Conv& c : blocks_) h = ag::avg_pool2(activate(c(h), smooth_));
  const int B = images.shape()[0];
  const int flat = static_cast<int>(h.value().numel()) / B;
  return activate(fc_(ag::reshape(h, {B, flat})), smooth_);
}

DiscOutput Discriminator::operator()(const ag::Var& images, bool stddev_branch) const {
  if (stddev_branch && images.shape()[0] < 2)
    throw std::invalid_argument("discriminator stddev branch needs a batch of at least 2");
  const ag::Var f = features(images);
  DiscOutput out;
  out.sample_logits = sample_head_(f);
  if (stddev_branch) out.batch_logit = stddev_head_(minibatch_stddev(f));
  return out;
}

NamedParams Discriminator::params() const {
  NamedParams out;
  append(out, "from_rgb", from_rgb_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) append(out, "block" + std::to_string(i), blocks_[i]);
  append(out, "fc", fc_);
  append(out, "sample_head", sample_head_);
  append(out, "stddev_head", stddev_head_);
  return out;
}

}  // namespace gnr::nets
