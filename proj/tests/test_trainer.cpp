#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>

#include "doctest.h"
#include "gnr/checkpoint.hpp"
#include "gnr/toy_data.hpp"
#include "gnr/trainer.hpp"
#include "test_util.hpp"

using namespace gnr;
namespace fs = std::filesystem;

namespace {

train::TrainConfig tiny_config(std::uint64_t seed = 1) {
  train::TrainConfig cfg;
  cfg.net.resolution = 16;
  cfg.net.base_channels = 4;
  cfg.net.max_channels = 16;
  cfg.net.disc_features = 8;
  cfg.batch_size = 4;
  cfg.seed = seed;
  cfg.total_iterations = 6;
  cfg.checkpoint_every = 3;
  cfg.sample_every = 3;
  return cfg;
}

struct ToyData {
  data::DomainDataset x, y;
};

const ToyData& toy_data(int resolution = 16) {
  static std::map<int, ToyData> cache;
  auto it = cache.find(resolution);
  if (it == cache.end()) {
    const fs::path root = fs::temp_directory_path() / ("gnr_test_trainer_toy_" + std::to_string(resolution));
    fs::remove_all(root);
    toy::make_toy_dataset(root, 3, {30, 30}, resolution);
    it = cache
             .emplace(resolution,
                      ToyData{data::DomainDataset::load(root, data::Domain::X, data::Split::Train, resolution),
                              data::DomainDataset::load(root, data::Domain::Y, data::Split::Train, resolution)})
             .first;
  }
  return it->second;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gnr_test_trainer_" + name);
  fs::remove_all(p);
  return p;
}

train::RunOptions opts(const fs::path& out) {
  train::RunOptions o;
  o.out_dir = out;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint64_t params_hash(const nets::NamedParams& ps) {
  std::uint64_t h = ckpt::fnv1a("");
  for (const auto& [name, v] : ps) {
    const Tensor& t = v.value();
    h = ckpt::fnv1a(std::string_view(reinterpret_cast<const char*>(t.data()), t.numel() * sizeof(float)), h);
  }
  return h;
}

nets::NamedParams disc_params(const train::TrainState& s) {
  nets::NamedParams out = s.disc_x.params();
  for (const auto& p : s.disc_y.params()) out.push_back(p);
  return out;
}

nets::NamedParams gen_params(const train::TrainState& s) {
  nets::NamedParams out = s.gen_xy.params();
  for (const auto& p : s.gen_yx.params()) out.push_back(p);
  return out;
}

}  // namespace

TEST_CASE("training configs are validated") {
  train::TrainConfig cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.batch_size = 1;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("batch_size"), std::invalid_argument);
  cfg = tiny_config();
  cfg.weights.scon = -1;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("lambda_scon"), std::invalid_argument);
  cfg = tiny_config();
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(train::TrainState{cfg}, std::invalid_argument);
  const train::TrainConfig defaults;
  CHECK(defaults.batch_size == 7);
  CHECK(defaults.learning_rate == 0.002);
  CHECK(defaults.beta1 == 0.0);
  CHECK(defaults.beta2 == 0.99);
  CHECK(defaults.r1_gamma == 10.0);
  CHECK(defaults.net.style_dim == 8);
}

TEST_CASE("mode seeking penalty") {
  Rng rng(1);
  const Tensor img = testing::random_image(rng, {2, 3, 4, 4});
  const Tensor za({2, 8}, 0.0f), zb({1, 8}, std::vector<float>{1, 1, 0, 0, 0, 0, 0, 0});
  const Tensor za1({1, 8}, 0.0f);
  CHECK(train::mode_seeking_penalty(ag::constant(img), ag::constant(img), za1, zb).item() == 0.0f);

  Tensor shifted = img;
  for (float& v : shifted.values()) v += 1.0f;
  CHECK(train::mode_seeking_penalty(ag::constant(shifted), ag::constant(img), za1, zb).item() ==
        doctest::Approx(-0.5).epsilon(1e-6));

  double prev = 1;
  for (float d : {0.1f, 0.2f, 0.4f, 0.8f}) {
    Tensor moved = img;
    for (float& v : moved.values()) v += d;
    const double p = train::mode_seeking_penalty(ag::constant(moved), ag::constant(img), za1, zb).item();
    CHECK(p < prev);
    prev = p;
  }
  CHECK_THROWS_AS(train::mode_seeking_penalty(ag::constant(img), ag::constant(img), za, za), std::invalid_argument);
}

TEST_CASE("identical seeds give bit-identical loss sequences") {
  const ToyData& d = toy_data();
  train::TrainState a(tiny_config()), b(tiny_config());
  for (int i = 0; i < 3; ++i) {
    const losses::LossReport ra = train::train_step(a, train::draw_batch(a, d.x, d.y));
    const losses::LossReport rb = train::train_step(b, train::draw_batch(b, d.x, d.y));
    CHECK(ra.fields() == rb.fields());
    CHECK(ra.all_finite());
    CHECK(ra.total == losses::total_loss(ra));
  }
  train::TrainState c(tiny_config(2));
  const losses::LossReport rc = train::train_step(c, train::draw_batch(c, d.x, d.y));
  train::TrainState a2(tiny_config());
  CHECK(rc.fields() != train::train_step(a2, train::draw_batch(a2, d.x, d.y)).fields());
}

TEST_CASE("each half-step leaves the opposing networks untouched") {
  const ToyData& d = toy_data();
  train::TrainState s(tiny_config());
  const train::StepBatch batch = train::draw_batch(s, d.x, d.y);
  const Tensor z1 = nets::sample_styles(s.rng, 4, 8), z2 = nets::sample_styles(s.rng, 4, 8);
  losses::LossReport r;

  const std::uint64_t g0 = params_hash(gen_params(s)), d0 = params_hash(disc_params(s));
  train::discriminator_step(s, batch, z1, z2, r);
  CHECK(params_hash(gen_params(s)) == g0);
  const std::uint64_t d1 = params_hash(disc_params(s));
  CHECK(d1 != d0);
  train::generator_step(s, batch, z1, z2, r);
  CHECK(params_hash(disc_params(s)) == d1);
  CHECK(params_hash(gen_params(s)) != g0);
}

TEST_CASE("the no-stddev ablation removes the batch-statistic head from training") {
  const ToyData& d = toy_data();
  auto head_after_steps = [&](bool ablate) {
    train::TrainConfig cfg = tiny_config();
    cfg.ablations.no_stddev_branch = ablate;
    train::TrainState s(cfg);
    const Tensor before = s.disc_y.params().back().second.value();
    for (int i = 0; i < 2; ++i) train::train_step(s, train::draw_batch(s, d.x, d.y));
    CHECK(s.disc_y.params().back().first == "stddev_head.b");
    return testing::max_abs_diff(before, s.disc_y.params().back().second.value());
  };
  CHECK(head_after_steps(true) == 0.0);
  CHECK(head_after_steps(false) > 0.0);
}

TEST_CASE("the mode-seeking ablation trains and stays finite") {
  const ToyData& d = toy_data();
  train::TrainConfig cfg = tiny_config();
  cfg.ablations.mode_seeking = true;
  train::TrainState s(cfg);
  for (int i = 0; i < 2; ++i) CHECK(train::train_step(s, train::draw_batch(s, d.x, d.y)).all_finite());
}

TEST_CASE("non-finite values abort training with a diagnostic") {
  const ToyData& d = toy_data();
  train::TrainState s(tiny_config());
  s.disc_y.params().front().second.mutable_value()[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_WITH_AS(train::train_step(s, train::draw_batch(s, d.x, d.y)), doctest::Contains("adv_d="),
                       train::TrainingDiverged);
}

TEST_CASE("checkpoints round-trip bit-exactly and continue identically") {
  const ToyData& d = toy_data();
  const fs::path dir = fresh_dir("ckpt");
  train::TrainState s(tiny_config());
  for (int i = 0; i < 2; ++i) train::train_step(s, train::draw_batch(s, d.x, d.y));
  s.save(dir / "a.gnr");

  train::TrainState loaded = train::TrainState::load(dir / "a.gnr", tiny_config());
  CHECK(loaded.iteration == 2);
  CHECK(loaded.rng == s.rng);
  CHECK(loaded.running.fields() == s.running.fields());
  CHECK(params_hash(gen_params(loaded)) == params_hash(gen_params(s)));
  CHECK(params_hash(disc_params(loaded)) == params_hash(disc_params(s)));
  loaded.save(dir / "b.gnr");
  CHECK(slurp(dir / "a.gnr") == slurp(dir / "b.gnr"));

  const train::TrainState from_file_config = train::TrainState::load(dir / "a.gnr");
  CHECK(from_file_config.config.hash() == tiny_config().hash());

  for (int i = 0; i < 5; ++i) {
    const losses::LossReport ra = train::train_step(s, train::draw_batch(s, d.x, d.y));
    const losses::LossReport rb = train::train_step(loaded, train::draw_batch(loaded, d.x, d.y));
    CHECK(ra.fields() == rb.fields());
  }

  train::TrainConfig other = tiny_config();
  other.weights.cyc = 5;
  CHECK_THROWS_AS(train::TrainState::load(dir / "a.gnr", other), ckpt::CheckpointError);

  std::string bytes = slurp(dir / "a.gnr");
  bytes[bytes.size() / 2] ^= 0x5a;
  std::ofstream(dir / "bad.gnr", std::ios::binary) << bytes;
  CHECK_THROWS_AS(train::TrainState::load(dir / "bad.gnr"), ckpt::CheckpointError);
  CHECK_THROWS_AS(train::TrainState::load(dir / "missing.gnr"), ckpt::CheckpointError);
}

TEST_CASE("run_training writes logs, grids and checkpoints, and resumes exactly") {
  const ToyData& d = toy_data();
  const fs::path full = fresh_dir("run_full"), split = fresh_dir("run_split");
  const train::TrainConfig cfg = tiny_config();

  const train::RunResult a = train::run_training(cfg, d.x, d.y, opts(full));
  CHECK(fs::exists(a.final_checkpoint));
  CHECK(fs::exists(full / "checkpoints" / "ckpt_000003.gnr"));
  CHECK(fs::exists(full / "samples" / "xy_000006.png"));
  CHECK(fs::exists(full / "samples" / "yx_000003.png"));
  CHECK(a.history.size() == 6);

  train::TrainConfig first = cfg;
  first.total_iterations = 4;
  train::run_training(first, d.x, d.y, opts(split));
  train::RunOptions resume = opts(split);
  resume.resume_from = split / "checkpoints" / "ckpt_000003.gnr";
  const train::RunResult b = train::run_training(cfg, d.x, d.y, resume);
  CHECK(b.history.size() == 3);
  CHECK(b.history.front().fields() == a.history[3].fields());
  CHECK(slurp(full / "loss_log.csv") == slurp(split / "loss_log.csv"));
  CHECK(slurp(full / "samples" / "xy_000006.png") == slurp(split / "samples" / "xy_000006.png"));

  const std::string log = slurp(full / "loss_log.csv");
  CHECK(log.rfind("iteration,scon,cyc_l2,cyc_perceptual,adv_g,adv_d,r1,total\n", 0) == 0);
  CHECK(std::count(log.begin(), log.end(), '\n') == 7);

  train::TrainConfig wrong = cfg;
  wrong.net.resolution = 32;
  CHECK_THROWS_AS(train::run_training(wrong, d.x, d.y, opts(fresh_dir("run_wrong"))), std::invalid_argument);
}

TEST_CASE("cycle loss drops over a short smoke run (median of 3 seeds)") {
  const ToyData& d = toy_data();
  std::vector<double> first, last;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    train::TrainConfig cfg = tiny_config(seed);
    train::TrainState s(cfg);
    std::vector<double> cyc;
    for (int i = 0; i < 150; ++i) {
      const losses::LossReport r = train::train_step(s, train::draw_batch(s, d.x, d.y));
      REQUIRE(r.all_finite());
      cyc.push_back(r.cyc_l2 + r.cyc_perceptual);
    }
    for (const nets::NamedParams& ps : {gen_params(s), disc_params(s)})
      for (const auto& [name, v] : ps) CHECK(v.value().all_finite());
    first.push_back(std::accumulate(cyc.begin(), cyc.begin() + 20, 0.0) / 20);
    last.push_back(std::accumulate(cyc.end() - 20, cyc.end(), 0.0) / 20);
  }
  std::sort(first.begin(), first.end());
  std::sort(last.begin(), last.end());
  MESSAGE("median cycle loss over the first 20 steps: " << first[1] << ", last 20: " << last[1]);
  CHECK(last[1] < first[1]);
}
