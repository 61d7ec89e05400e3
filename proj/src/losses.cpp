#include "gnr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gnr::losses {

const std::vector<std::string>& LossReport::field_names() {
  static const std::vector<std::string> names = {"scon", "cyc_l2", "cyc_perceptual", "adv_g", "adv_d", "r1", "total"};
  return names;
}

std::vector<double> LossReport::fields() const { return {scon, cyc_l2, cyc_perceptual, adv_g, adv_d, r1, total}; }

bool LossReport::all_finite() const {
  for (double v : fields())
    if (!std::isfinite(v)) return false;
  return true;
}

double total_loss(const LossReport& r, const LossWeights& w) {
  return w.adv * r.adv_g + w.scon * r.scon + w.cyc * (r.cyc_l2 + r.cyc_perceptual);
}

ag::Var total_loss(const ag::Var& adv, const ag::Var& scon, const ag::Var& cyc, const LossWeights& w) {
  return adv * static_cast<float>(w.adv) + scon * static_cast<float>(w.scon) + cyc * static_cast<float>(w.cyc);
}

ag::Var style_consistency(const ag::Var& styles) {
  const Shape& s = styles.shape();
  if (s.size() != 2) throw ShapeError("style_consistency expects (B, S), got " + shape_str(s));
  if (s[0] < 2) throw std::invalid_argument("style_consistency needs at least 2 styles");
  const float inv_b = 1.0f / static_cast<float>(s[0]);
  const ag::Var mu = ag::sum_to(styles, {1, s[1]}) * inv_b;
  return ag::mean(ag::square(styles - mu));
}

std::vector<int> derangement(int n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("derangement needs n >= 2");
  std::vector<int> p(static_cast<std::size_t>(n));
  for (;;) {
    std::iota(p.begin(), p.end(), 0);
    for (std::size_t i = p.size(); i > 1; --i) std::swap(p[i - 1], p[rng.index(i)]);
    bool fixed = false;
    for (int i = 0; i < n && !fixed; ++i) fixed = p[static_cast<std::size_t>(i)] == i;
    if (!fixed) return p;
  }
}

ag::Var shuffle_styles(const ag::Var& styles, Rng& rng, std::vector<int>* perm) {
  std::vector<int> p = derangement(styles.shape()[0], rng);
  if (perm) *perm = p;
  return ag::gather_rows(styles, std::move(p));
}

ag::Var rms_distance(const ag::Var& a, const ag::Var& b) {
  const Shape& s = a.shape();
  if (s != b.shape()) throw ShapeError("rms_distance shapes differ: " + shape_str(s) + " vs " + shape_str(b.shape()));
  const int B = s[0];
  const int per_image = static_cast<int>(a.value().numel() / static_cast<std::size_t>(B));
  const ag::Var sq = ag::reshape(ag::square(a - b), {B, per_image});
  const ag::Var msq = ag::reshape(ag::sum_to(sq, {B, 1}), {B}) * (1.0f / static_cast<float>(per_image));
  // The tiny offset keeps the gradient finite at exact reconstruction.
  return ag::mean(ag::sqrt(ag::add_scalar(msq, 1e-16f)));
}

ag::Var pyramid_down(const ag::Var& images) {
  const Shape& s = images.shape();
  static const float taps[5] = {1, 4, 6, 4, 1};
  Tensor kernel({1, 1, 5, 5});
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) kernel[static_cast<std::size_t>(i * 5 + j)] = taps[i] * taps[j] / 256.0f;
  const ag::Var flat = ag::reshape(images, {s[0] * s[1], 1, s[2], s[3]});
  const ag::Var blurred = ag::avg_pool2(ag::conv2d(flat, ag::constant(kernel), 2));
  return ag::reshape(blurred, {s[0], s[1], s[2] / 2, s[3] / 2});
}

ag::Var PyramidPerceptual::operator()(const ag::Var& a, const ag::Var& b) const {
  ag::Var pa = a, pb = b;
  ag::Var acc;
  int used = 0;
  for (int level = 1; level <= levels_ && pa.shape()[2] >= 4; ++level) {
    pa = pyramid_down(pa);
    pb = pyramid_down(pb);
    const ag::Var d = rms_distance(pa, pb);
    acc = used == 0 ? d : acc + d;
    ++used;
  }
  if (used == 0) return rms_distance(a, b);
  return acc * (1.0f / static_cast<float>(used));
}

CycleTerms cycle_terms(const ag::Var& x, const ag::Var& x_hat, const PerceptualMetric& perceptual) {
  return {rms_distance(x_hat, x), perceptual(x_hat, x)};
}

CycleTerms cycle_loss(const nets::Generator& gen_xy, const nets::Generator& gen_yx, const ag::Var& x,
                      const ag::Var& z, Rng& rng, const PerceptualMetric& perceptual) {
  const nets::Encoding ex = gen_xy.encoder(x);
  const ag::Var y_hat = gen_xy.decoder(ex.content, z);
  const nets::Encoding ey = gen_yx.encoder(y_hat);
  const ag::Var x_hat = gen_yx.decoder(ey.content, shuffle_styles(ex.style, rng));
  return cycle_terms(x, x_hat, perceptual);
}

ag::Var adv_g(const nets::DiscOutput& fake) {
  ag::Var loss = ag::mean(ag::softplus(-fake.sample_logits));
  if (fake.batch_logit.defined()) loss = loss + ag::mean(ag::softplus(-fake.batch_logit));
  return loss;
}

ag::Var adv_d(const nets::DiscOutput& real, const nets::DiscOutput& fake) {
  ag::Var loss = ag::mean(ag::softplus(-real.sample_logits)) + ag::mean(ag::softplus(fake.sample_logits));
  if (real.batch_logit.defined() != fake.batch_logit.defined())
    throw std::invalid_argument("adv_d: real and fake outputs disagree on the stddev branch");
  if (real.batch_logit.defined())
    loss = loss + ag::mean(ag::softplus(-real.batch_logit)) + ag::mean(ag::softplus(fake.batch_logit));
  return loss;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

namespace {

double mean_softplus(const ag::Var& logits, double sign) {
  double acc = 0;
  for (float v : logits.value().storage()) acc += softplus(sign * v);
  return acc / static_cast<double>(logits.value().numel());
}

}  // namespace

double adv_g_value(const nets::DiscOutput& fake) {
  double loss = mean_softplus(fake.sample_logits, -1);
  if (fake.batch_logit.defined()) loss += mean_softplus(fake.batch_logit, -1);
  return loss;
}

double adv_d_value(const nets::DiscOutput& real, const nets::DiscOutput& fake) {
  double loss = mean_softplus(real.sample_logits, -1) + mean_softplus(fake.sample_logits, 1);
  if (real.batch_logit.defined() && fake.batch_logit.defined())
    loss += mean_softplus(real.batch_logit, -1) + mean_softplus(fake.batch_logit, 1);
  return loss;
}

ag::Var r1_penalty(const std::function<ag::Var(const ag::Var&)>& sample_logits, const Tensor& real, float gamma) {
  const ag::Var x = ag::Var::parameter(real);
  const ag::Var logits = sample_logits(x);
  const std::vector<ag::Var> g = ag::grad(ag::sum(logits), std::span<const ag::Var>(&x, 1), true);
  const float inv_b = 1.0f / static_cast<float>(real.dim(0));
  return ag::sum(ag::square(g[0])) * (0.5f * gamma * inv_b);
}

ag::Var r1_penalty(const nets::Discriminator& disc, const Tensor& real, float gamma) {
  return r1_penalty([&](const ag::Var& x) { return disc(x, false).sample_logits; }, real, gamma);
}

}  // namespace gnr::losses
