#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gnr/autograd.hpp"
#include "gnr/nets.hpp"
#include "gnr/rng.hpp"

namespace gnr::losses {

struct LossWeights {
  double adv = 1.0;
  double scon = 10.0;
  double cyc = 20.0;
};

/// Scalar values of one training step, summed over both translation
/// directions. `total` is the generator objective; adv_d and r1 belong to
/// the discriminator step and are not part of it.
struct LossReport {
  double scon = 0, cyc_l2 = 0, cyc_perceptual = 0, adv_g = 0, adv_d = 0, r1 = 0, total = 0;

  static const std::vector<std::string>& field_names();
  std::vector<double> fields() const;
  bool all_finite() const;
};

double total_loss(const LossReport& r, const LossWeights& w = {});
ag::Var total_loss(const ag::Var& adv, const ag::Var& scon, const ag::Var& cyc, const LossWeights& w = {});

/// Mean over style dimensions of the population variance across the batch.
/// styles: (B, S), B >= 2.
ag::Var style_consistency(const ag::Var& styles);

/// Uniformly random permutation of 0..n-1 with no fixed points, n >= 2.
std::vector<int> derangement(int n, Rng& rng);

/// Rows of `styles` reordered by a fresh derangement; the permutation used is
/// written to `perm` when given.
ag::Var shuffle_styles(const ag::Var& styles, Rng& rng, std::vector<int>* perm = nullptr);

/// Batch mean of the per-image root-mean-square pixel difference.
ag::Var rms_distance(const ag::Var& a, const ag::Var& b);

/// Pluggable perceptual distance between two image batches, returning the
/// batch mean as a scalar.
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual ag::Var operator()(const ag::Var& a, const ag::Var& b) const = 0;
  virtual std::string id() const = 0;
};

/// Mean of per-level RMS differences over Gaussian-pyramid levels 1..levels
/// (level 0, the image itself, is covered by the L2 term).
class PyramidPerceptual : public PerceptualMetric {
 public:
  explicit PyramidPerceptual(int levels = 3) : levels_(levels) {}
  ag::Var operator()(const ag::Var& a, const ag::Var& b) const override;
  std::string id() const override { return "pyramid-" + std::to_string(levels_); }

 private:
  int levels_;
};

/// One 5-tap binomial blur followed by 2x average pooling, per channel.
ag::Var pyramid_down(const ag::Var& images);

struct CycleTerms {
  ag::Var l2;
  ag::Var perceptual;
};

CycleTerms cycle_terms(const ag::Var& x, const ag::Var& x_hat, const PerceptualMetric& perceptual);

/// Full cycle path for one direction: y_hat = F_xy(c(x), z), then
/// x_hat = F_yx(c(y_hat), s(x) shuffled by a derangement).
CycleTerms cycle_loss(const nets::Generator& gen_xy, const nets::Generator& gen_yx, const ag::Var& x,
                      const ag::Var& z, Rng& rng, const PerceptualMetric& perceptual);

/// Non-saturating generator loss: mean softplus(-sample logits) plus
/// softplus(-batch logit) when that branch is present.
ag::Var adv_g(const nets::DiscOutput& fake);

/// Discriminator loss over both branches: softplus(-real) + softplus(fake).
ag::Var adv_d(const nets::DiscOutput& real, const nets::DiscOutput& fake);

/// Numerically stable log(1 + e^x) in double precision.
double softplus(double x);
/// The two adversarial losses re-evaluated in double precision from the
/// logits, for reporting.
double adv_g_value(const nets::DiscOutput& fake);
double adv_d_value(const nets::DiscOutput& real, const nets::DiscOutput& fake);

/// (gamma / 2) * batch mean of ||d logit_i / d x_i||^2, differentiable with
/// respect to the parameters used inside `sample_logits`.
ag::Var r1_penalty(const std::function<ag::Var(const ag::Var&)>& sample_logits, const Tensor& real, float gamma);
ag::Var r1_penalty(const nets::Discriminator& disc, const Tensor& real, float gamma);

}  // namespace gnr::losses
