#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"
#include "gnr/losses.hpp"
#include "test_util.hpp"

using namespace gnr;
using gnr::testing::grad_check;
using gnr::testing::random_image;
using gnr::testing::random_tensor;

namespace {

const double kLn2 = std::numbers::ln2;

nets::NetConfig tiny_config() {
  nets::NetConfig cfg;
  cfg.resolution = 8;
  cfg.base_channels = 2;
  cfg.max_channels = 4;
  cfg.disc_features = 4;
  cfg.smooth_activation = true;
  return cfg;
}

nets::DiscOutput logits(std::vector<float> sample, float batch) {
  const int n = static_cast<int>(sample.size());
  return {ag::constant(Tensor({n, 1}, std::move(sample))), ag::constant(Tensor({1, 1}, batch))};
}

std::vector<ag::Var> vars_of(const nets::NamedParams& ps) {
  std::vector<ag::Var> out;
  for (const auto& [name, v] : ps) out.push_back(v);
  return out;
}

// Two-layer smooth probe: logits = tanh(x W1^T) w2^T.
struct Probe {
  ag::Var w1, w2;
  ag::Var operator()(const ag::Var& x) const {
    const int B = x.shape()[0];
    const int d = static_cast<int>(x.value().numel()) / B;
    return ag::matmul(ag::tanh(ag::matmul(ag::reshape(x, {B, d}), w1, false, true)), w2, false, true);
  }
};

}  // namespace

TEST_CASE("style consistency is the mean per-dimension population variance") {
  Rng rng(1);
  const Tensor row = random_tensor(rng, {1, 8});
  const std::vector<Tensor> rows(7, row);
  CHECK(losses::style_consistency(ag::constant(concat_rows(rows))).item() < 1e-12);
  CHECK(losses::style_consistency(ag::constant(Tensor({2, 1}, std::vector<float>{0, 2}))).item() == doctest::Approx(1.0));

  const Tensor s = random_tensor(rng, {7, 8});
  const double v = losses::style_consistency(ag::constant(s)).item();
  CHECK(v > 0);
  std::vector<Tensor> shuffled;
  for (int i : {6, 5, 4, 3, 2, 1, 0}) shuffled.push_back(s.slice_rows(i, i + 1));
  CHECK(losses::style_consistency(ag::constant(concat_rows(shuffled))).item() == doctest::Approx(v).epsilon(1e-6));
  CHECK_THROWS_AS(losses::style_consistency(ag::constant(Tensor({1, 8}))), std::invalid_argument);
}

TEST_CASE("style shuffling is a derangement") {
  Rng rng(2);
  CHECK(losses::derangement(2, rng) == std::vector<int>{1, 0});
  for (int run = 0; run < 10000; ++run) {
    const std::vector<int> p = losses::derangement(7, rng);
    const std::set<int> values(p.begin(), p.end());
    REQUIRE(values.size() == 7);
    for (int i = 0; i < 7; ++i) REQUIRE(p[static_cast<std::size_t>(i)] != i);
  }
  const Tensor s = random_tensor(rng, {5, 8});
  std::vector<int> perm;
  const Tensor out = losses::shuffle_styles(ag::constant(s), rng, &perm).value();
  for (int i = 0; i < 5; ++i) CHECK(out.slice_rows(i, i + 1) == s.slice_rows(perm[i], perm[i] + 1));
  CHECK_THROWS_AS(losses::derangement(1, rng), std::invalid_argument);
}

TEST_CASE("cycle terms vanish at perfect reconstruction and use the RMS convention") {
  Rng rng(3);
  const Tensor x = random_image(rng, {2, 3, 64, 64});
  const losses::PyramidPerceptual perceptual;
  const losses::CycleTerms zero = losses::cycle_terms(ag::constant(x), ag::constant(x), perceptual);
  CHECK(zero.l2.item() < 1e-6);
  CHECK(zero.perceptual.item() < 1e-6);

  Tensor shifted = x;
  for (float& v : shifted.values()) v += 0.1f;
  CHECK(losses::rms_distance(ag::constant(shifted), ag::constant(x)).item() == doctest::Approx(0.1).epsilon(1e-5));

  Tensor target = random_image(rng, {1, 3, 16, 16}), start = random_image(rng, {1, 3, 16, 16});
  double prev = 1e9;
  for (int step = 0; step <= 10; ++step) {
    Tensor mid = start;
    for (std::size_t i = 0; i < mid.numel(); ++i) mid[i] = start[i] + (target[i] - start[i]) * step / 10.0f;
    const losses::CycleTerms t = losses::cycle_terms(ag::constant(target), ag::constant(mid), perceptual);
    CHECK(t.l2.item() < prev);
    prev = t.l2.item();
  }
}

TEST_CASE("adversarial losses have the softplus closed forms") {
  CHECK(std::fabs(losses::softplus(0.0) - kLn2) <= 1e-9);
  CHECK(std::fabs(losses::adv_g_value(logits({0}, 0)) - 2 * kLn2) <= 1e-9);
  CHECK(std::fabs(losses::adv_g_value(logits({0, 0}, 0)) - 2 * kLn2) <= 1e-9);
  CHECK(std::fabs(losses::adv_d_value(logits({0, 0}, 0), logits({0, 0}, 0)) - 4 * kLn2) <= 1e-9);
  CHECK(losses::adv_g(logits({0, 0}, 0)).item() == doctest::Approx(2 * kLn2).epsilon(1e-6));
  CHECK(losses::adv_d(logits({0, 0}, 0), logits({0, 0}, 0)).item() == doctest::Approx(4 * kLn2).epsilon(1e-6));

  CHECK(losses::adv_g_value(logits({60, 60}, 60)) < 1e-20);
  CHECK(losses::adv_d_value(logits({60, 60}, 60), logits({-60, -60}, -60)) < 1e-20);

  double prev_g = 1e9, prev_d = 1e9;
  for (float t = -5; t <= 5; t += 0.5f) {
    const double g = losses::adv_g_value(logits({t, t}, t));
    const double d = losses::adv_d_value(logits({t, t}, t), logits({-t, -t}, -t));
    CHECK(g < prev_g);
    CHECK(d < prev_d);
    prev_g = g;
    prev_d = d;
  }

  nets::DiscOutput no_batch = logits({0, 0}, 0);
  no_batch.batch_logit = {};
  CHECK(std::fabs(losses::adv_g_value(no_batch) - kLn2) <= 1e-9);
}

TEST_CASE("total loss weights the components") {
  losses::LossReport r;
  CHECK(losses::total_loss(r) == 0.0);
  r.adv_g = 1;
  r.scon = 1;
  r.cyc_l2 = 1;
  CHECK(losses::total_loss(r) == 31.0);
  const losses::LossWeights w;
  CHECK(w.adv == 1.0);
  CHECK(w.scon == 10.0);
  CHECK(w.cyc == 20.0);
  const ag::Var one = ag::constant(Tensor::scalar(1));
  CHECK(losses::total_loss(one, one, one).item() == 31.0f);
}

TEST_CASE("R1 on a linear probe equals gamma/2 times the squared weight norm") {
  Rng rng(4);
  const Tensor w = random_tensor(rng, {1, 3 * 4 * 4});
  const Tensor real = random_image(rng, {3, 3, 4, 4});
  const auto probe = [&](const ag::Var& x) {
    return ag::matmul(ag::reshape(x, {x.shape()[0], 48}), ag::constant(w), false, true);
  };
  double wsq = 0;
  for (float v : w.storage()) wsq += static_cast<double>(v) * v;
  const double got = losses::r1_penalty(probe, real, 10.0f).item();
  CHECK(std::fabs(got - 5.0 * wsq) / (5.0 * wsq) < 1e-3);

  const auto constant = [&](const ag::Var& x) {
    return ag::matmul(ag::reshape(x, {x.shape()[0], 48}), ag::constant(Tensor({1, 48})), false, true);
  };
  CHECK(losses::r1_penalty(constant, real, 10.0f).item() == 0.0f);
}

TEST_CASE("R1 agrees with a central-difference input gradient") {
  Rng rng(5);
  const Probe probe{ag::Var::parameter(random_tensor(rng, {6, 12}, 0.5)),
                    ag::Var::parameter(random_tensor(rng, {1, 6}, 0.5))};
  Tensor real = random_image(rng, {4, 3, 2, 2});
  const double got = losses::r1_penalty(probe, real, 10.0f).item();

  const double h = 1e-3;
  double sq = 0;
  for (std::size_t i = 0; i < real.numel(); ++i) {
    const float orig = real[i];
    real[i] = static_cast<float>(orig + h);
    const double fp = ag::sum(probe(ag::constant(real))).item();
    real[i] = static_cast<float>(orig - h);
    const double fm = ag::sum(probe(ag::constant(real))).item();
    real[i] = orig;
    const double g = (fp - fm) / (2 * h);
    sq += g * g;
  }
  const double want = 5.0 * sq / 4;
  CHECK(std::fabs(got - want) / want < 1e-3);

  const auto check = grad_check([&] { return losses::r1_penalty(probe, real, 10.0f); }, {probe.w1, probe.w2}, 1e-3);
  CHECK(check.rel_error() < 1e-2);
}

TEST_CASE("loss gradients match finite differences on tiny networks") {
  Rng rng(6);
  const nets::NetConfig cfg = tiny_config();
  const nets::Generator gxy(cfg, rng), gyx(cfg, rng);
  const nets::Discriminator disc(cfg, rng);
  const Tensor x = random_image(rng, {3, 3, 8, 8});
  const Tensor y = random_image(rng, {3, 3, 8, 8});
  const Tensor z = random_tensor(rng, {3, 8});
  const losses::PyramidPerceptual perceptual(1);
  const double h = 1e-3;

  SUBCASE("style consistency") {
    const auto check = grad_check([&] { return losses::style_consistency(gxy.encoder(ag::constant(x)).style); },
                                  vars_of(gxy.encoder.params()), h, 4);
    CHECK(check.rel_error() < 1e-2);
  }
  SUBCASE("cycle") {
    const auto f = [&] {
      Rng shuffle(9);
      const losses::CycleTerms t = losses::cycle_loss(gxy, gyx, ag::constant(x), ag::constant(z), shuffle, perceptual);
      return t.l2 + t.perceptual;
    };
    std::vector<ag::Var> ps = vars_of(gxy.params());
    for (const ag::Var& v : vars_of(gyx.decoder.params())) ps.push_back(v);
    const auto check = grad_check(f, ps, h, 3);
    CHECK(check.rel_error() < 1e-2);
  }
  SUBCASE("generator adversarial") {
    const auto f = [&] {
      const nets::Encoding e = gxy.encoder(ag::constant(x));
      return losses::adv_g(disc(gxy.decoder(e.content, ag::constant(z))));
    };
    const auto check = grad_check(f, vars_of(gxy.decoder.params()), h, 4);
    CHECK(check.rel_error() < 1e-2);
  }
  SUBCASE("discriminator adversarial") {
    const auto f = [&] { return losses::adv_d(disc(ag::constant(y)), disc(ag::constant(x))); };
    const auto check = grad_check(f, vars_of(disc.params()), h, 4);
    CHECK(check.rel_error() < 1e-2);
  }
  SUBCASE("R1 through the discriminator") {
    const auto f = [&] { return losses::r1_penalty(disc, y, 10.0f); };
    const auto check = grad_check(f, vars_of(disc.params()), h, 4);
    CHECK(check.rel_error() < 1e-2);
  }
}
