#include "gnr/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>

#include "gnr/checkpoint.hpp"
#include "gnr/image_io.hpp"

namespace gnr::train {
namespace {

namespace fs = std::filesystem;

constexpr double kRunningDecay = 0.99;

nets::NamedParams prefixed(const std::string& prefix, const nets::NamedParams& ps) {
  nets::NamedParams out;
  for (const auto& [name, v] : ps) out.emplace_back(prefix + name, v);
  return out;
}

nets::NamedParams concat(nets::NamedParams a, const nets::NamedParams& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

nets::NamedParams generator_params(const TrainState& s) {
  return concat(prefixed("gen_xy.", s.gen_xy.params()), prefixed("gen_yx.", s.gen_yx.params()));
}

nets::NamedParams discriminator_params(const TrainState& s) {
  return concat(prefixed("disc_x.", s.disc_x.params()), prefixed("disc_y.", s.disc_y.params()));
}

losses::LossReport from_fields(const std::vector<double>& f) {
  losses::LossReport r;
  r.scon = f[0];
  r.cyc_l2 = f[1];
  r.cyc_perceptual = f[2];
  r.adv_g = f[3];
  r.adv_d = f[4];
  r.r1 = f[5];
  r.total = f[6];
  return r;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string describe(const losses::LossReport& r) {
  std::ostringstream os;
  const auto& names = losses::LossReport::field_names();
  const auto vals = r.fields();
  for (std::size_t i = 0; i < names.size(); ++i) os << (i ? " " : "") << names[i] << '=' << vals[i];
  return os.str();
}

void require_finite_params(const nets::NamedParams& ps, std::int64_t iteration, const losses::LossReport& r) {
  for (const auto& [name, v] : ps)
    if (!v.value().all_finite())
      throw TrainingDiverged("parameter " + name + " became non-finite at iteration " + std::to_string(iteration) +
                                 " (" + describe(r) + ")",
                             r);
}

// Discriminator terms for one domain. Per-sample logits depend only on their
// own image, so the R1 gradient is taken from the same forward pass that
// feeds the adversarial loss.
struct DiscTerms {
  ag::Var adv, r1;
  double adv_value = 0;
};

DiscTerms disc_terms(const nets::Discriminator& disc, const Tensor& real, const Tensor& fake, bool stddev,
                     float gamma) {
  const ag::Var x = ag::Var::parameter(real);
  const nets::DiscOutput real_out = disc(x, stddev);
  const nets::DiscOutput fake_out = disc(ag::constant(fake), stddev);
  const std::vector<ag::Var> g = ag::grad(ag::sum(real_out.sample_logits), std::span<const ag::Var>(&x, 1), true);
  DiscTerms t;
  t.adv = losses::adv_d(real_out, fake_out);
  t.adv_value = losses::adv_d_value(real_out, fake_out);
  t.r1 = ag::sum(ag::square(g[0])) * (0.5f * gamma / static_cast<float>(real.dim(0)));
  return t;
}

// Generator terms for the direction a -> b.
struct GenTerms {
  ag::Var adv, scon, cyc_l2, cyc_perc, mode_seeking;
  double adv_value = 0;
};

GenTerms gen_terms(const nets::Generator& g_ab, const nets::Generator& g_ba, const nets::Discriminator& disc_b,
                   const Tensor& views, const Tensor& z, const TrainConfig& cfg, const losses::PerceptualMetric& perc,
                   Rng& rng) {
  const bool stddev = !cfg.ablations.no_stddev_branch;
  const nets::Encoding e = g_ab.encoder(ag::constant(views));
  const ag::Var zv = ag::constant(z);
  const ag::Var fake = g_ab.decoder(e.content, zv);
  const nets::DiscOutput d = disc_b(fake, stddev);

  GenTerms t;
  t.adv = losses::adv_g(d);
  t.adv_value = losses::adv_g_value(d);
  t.scon = losses::style_consistency(e.style);
  const nets::Encoding back = g_ba.encoder(fake);
  const ag::Var recon = g_ba.decoder(back.content, losses::shuffle_styles(e.style, rng));
  const losses::CycleTerms c = losses::cycle_terms(ag::constant(views), recon, perc);
  t.cyc_l2 = c.l2;
  t.cyc_perc = c.perceptual;
  if (cfg.ablations.mode_seeking) {
    // Same content under a second style; rolling z by one row keeps both
    // codes from the same N(0, I) draw.
    const int B = z.dim(0);
    std::vector<int> roll(static_cast<std::size_t>(B));
    for (int i = 0; i < B; ++i) roll[static_cast<std::size_t>(i)] = (i + 1) % B;
    const ag::Var z_alt = ag::gather_rows(zv, roll);
    const ag::Var fake_alt = g_ab.decoder(e.content, z_alt);
    t.mode_seeking = mode_seeking_penalty(fake, fake_alt, z, z_alt.value());
  }
  return t;
}

void write_log_header(std::ostream& out) {
  out << "iteration";
  for (const auto& n : losses::LossReport::field_names()) out << ',' << n;
  out << '\n';
}

void write_log_row(std::ostream& out, std::int64_t iteration, const losses::LossReport& r) {
  out << iteration;
  for (double v : r.fields()) out << ',' << format_double(v);
  out << '\n';
}

// Keeps the header and rows up to `iteration`, so a resumed run produces the
// same file as an uninterrupted one.
void truncate_log(const fs::path& path, std::int64_t iteration) {
  std::ifstream in(path);
  if (!in) return;
  std::vector<std::string> kept;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      kept.push_back(line);
      header = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoll(line.substr(0, line.find(','))) <= iteration) kept.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : kept) out << l << '\n';
}

std::string step_name(std::int64_t it) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06lld", static_cast<long long>(it));
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* field) {
    if (!ok) throw std::invalid_argument(std::string("invalid training config field: ") + field);
  };
  require(batch_size >= 2, "batch_size");
  require(weights.adv >= 0 && std::isfinite(weights.adv), "lambda_adv");
  require(weights.scon >= 0 && std::isfinite(weights.scon), "lambda_scon");
  require(weights.cyc >= 0 && std::isfinite(weights.cyc), "lambda_cyc");
  require(learning_rate > 0 && std::isfinite(learning_rate), "learning_rate");
  require(beta1 >= 0 && beta1 < 1, "beta1");
  require(beta2 >= 0 && beta2 < 1, "beta2");
  require(total_iterations >= 1, "total_iterations");
  require(r1_gamma >= 0 && std::isfinite(r1_gamma), "r1_gamma");
  require(mode_seeking_weight >= 0, "mode_seeking_weight");
  require(perceptual_levels >= 0, "perceptual_levels");
  require(checkpoint_every >= 1, "checkpoint_every");
  require(sample_every >= 1, "sample_every");
  net.validate();
}

std::string TrainConfig::canonical() const {
  std::ostringstream os;
  os << "batch_size=" << batch_size << '\n'
     << "resolution=" << net.resolution << '\n'
     << "base_channels=" << net.base_channels << '\n'
     << "max_channels=" << net.max_channels << '\n'
     << "depth=" << net.depth << '\n'
     << "style_dim=" << net.style_dim << '\n'
     << "disc_features=" << net.disc_features << '\n'
     << "smooth_activation=" << net.smooth_activation << '\n'
     << "lambda_adv=" << format_double(weights.adv) << '\n'
     << "lambda_scon=" << format_double(weights.scon) << '\n'
     << "lambda_cyc=" << format_double(weights.cyc) << '\n'
     << "learning_rate=" << format_double(learning_rate) << '\n'
     << "beta1=" << format_double(beta1) << '\n'
     << "beta2=" << format_double(beta2) << '\n'
     << "r1_gamma=" << format_double(r1_gamma) << '\n'
     << "seed=" << seed << '\n'
     << "no_stddev_branch=" << ablations.no_stddev_branch << '\n'
     << "mode_seeking=" << ablations.mode_seeking << '\n'
     << "mode_seeking_weight=" << format_double(mode_seeking_weight) << '\n'
     << "perceptual_levels=" << perceptual_levels << '\n';
  return os.str();
}

std::uint64_t TrainConfig::hash() const { return ckpt::fnv1a(canonical()); }

TrainState::TrainState(const TrainConfig& cfg) : config(cfg), rng(cfg.seed, 2) {
  cfg.validate();
  Rng init(cfg.seed, 1);
  gen_xy = nets::Generator(cfg.net, init);
  gen_yx = nets::Generator(cfg.net, init);
  disc_x = nets::Discriminator(cfg.net, init);
  disc_y = nets::Discriminator(cfg.net, init);
  const optim::AdamConfig adam{cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8};
  opt_g = optim::Adam(generator_params(*this), adam);
  opt_d = optim::Adam(discriminator_params(*this), adam);
}

void TrainState::save(const fs::path& path) const {
  ckpt::Archive a;
  a.config_hash = config.hash();
  a.iteration = iteration;
  for (const auto& [name, v] : concat(generator_params(*this), discriminator_params(*this))) a.tensors[name] = v.value();
  for (auto& [name, t] : opt_g.state("opt_g.")) a.tensors[name] = std::move(t);
  for (auto& [name, t] : opt_d.state("opt_d.")) a.tensors[name] = std::move(t);
  a.strings["config"] = config.canonical();
  a.strings["rng"] = rng.state();
  a.strings["opt_g.steps"] = std::to_string(opt_g.steps());
  a.strings["opt_d.steps"] = std::to_string(opt_d.steps());
  const auto names = losses::LossReport::field_names();
  const auto vals = running.fields();
  for (std::size_t i = 0; i < names.size(); ++i) {
    double v = vals[i];
    std::string bits(sizeof v, '\0');
    std::memcpy(bits.data(), &v, sizeof v);
    a.strings["running." + names[i]] = bits;
  }
  ckpt::save(path, a);
}

TrainState TrainState::load(const fs::path& path, const TrainConfig& cfg) {
  const ckpt::Archive a = ckpt::load(path);
  if (a.config_hash != cfg.hash())
    throw ckpt::CheckpointError("checkpoint " + path.string() + " was written under a different training config");
  TrainState s(cfg);
  s.iteration = a.iteration;
  for (auto& [name, v] : concat(generator_params(s), discriminator_params(s))) {
    const Tensor& t = a.tensor(name);
    if (t.shape() != v.shape()) throw ckpt::CheckpointError("checkpoint tensor " + name + " has the wrong shape");
    v.mutable_value() = t;
  }
  std::vector<std::pair<std::string, Tensor>> entries(a.tensors.begin(), a.tensors.end());
  s.opt_g.load_state("opt_g.", entries, std::stoll(a.string("opt_g.steps")));
  s.opt_d.load_state("opt_d.", entries, std::stoll(a.string("opt_d.steps")));
  s.rng.set_state(a.string("rng"));
  std::vector<double> vals;
  for (const auto& n : losses::LossReport::field_names()) {
    const std::string& bits = a.string("running." + n);
    if (bits.size() != sizeof(double)) throw ckpt::CheckpointError("corrupt running average " + n);
    double v;
    std::memcpy(&v, bits.data(), sizeof v);
    vals.push_back(v);
  }
  s.running = from_fields(vals);
  return s;
}

TrainState TrainState::load(const fs::path& path) {
  const ckpt::Archive a = ckpt::load(path);
  TrainConfig cfg;
  std::istringstream in(a.string("config"));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "batch_size") cfg.batch_size = std::stoi(v);
    else if (k == "resolution") cfg.net.resolution = std::stoi(v);
    else if (k == "base_channels") cfg.net.base_channels = std::stoi(v);
    else if (k == "max_channels") cfg.net.max_channels = std::stoi(v);
    else if (k == "depth") cfg.net.depth = std::stoi(v);
    else if (k == "style_dim") cfg.net.style_dim = std::stoi(v);
    else if (k == "disc_features") cfg.net.disc_features = std::stoi(v);
    else if (k == "smooth_activation") cfg.net.smooth_activation = v == "1";
    else if (k == "lambda_adv") cfg.weights.adv = std::stod(v);
    else if (k == "lambda_scon") cfg.weights.scon = std::stod(v);
    else if (k == "lambda_cyc") cfg.weights.cyc = std::stod(v);
    else if (k == "learning_rate") cfg.learning_rate = std::stod(v);
    else if (k == "beta1") cfg.beta1 = std::stod(v);
    else if (k == "beta2") cfg.beta2 = std::stod(v);
    else if (k == "r1_gamma") cfg.r1_gamma = std::stod(v);
    else if (k == "seed") cfg.seed = std::stoull(v);
    else if (k == "no_stddev_branch") cfg.ablations.no_stddev_branch = v == "1";
    else if (k == "mode_seeking") cfg.ablations.mode_seeking = v == "1";
    else if (k == "mode_seeking_weight") cfg.mode_seeking_weight = std::stod(v);
    else if (k == "perceptual_levels") cfg.perceptual_levels = std::stoi(v);
  }
  return load(path, cfg);
}

StepBatch draw_batch(TrainState& state, const data::DomainDataset& x, const data::DomainDataset& y) {
  if (x.size() == 0 || y.size() == 0) throw std::invalid_argument("training needs non-empty datasets");
  const int n = state.config.batch_size;
  StepBatch b;
  b.x_views = data::make_batch(x, state.rng.index(x.size()), n, state.rng).to_tensor();
  b.y_views = data::make_batch(y, state.rng.index(y.size()), n, state.rng).to_tensor();
  b.x_real = data::sample_real_batch(x, n, state.rng);
  b.y_real = data::sample_real_batch(y, n, state.rng);
  return b;
}

ag::Var mode_seeking_penalty(const ag::Var& img_a, const ag::Var& img_b, const Tensor& z_a, const Tensor& z_b) {
  if (z_a.shape() != z_b.shape()) throw ShapeError("mode_seeking_penalty: style shapes differ");
  double dz = 0;
  for (std::size_t i = 0; i < z_a.numel(); ++i) dz += std::fabs(static_cast<double>(z_a[i]) - z_b[i]);
  if (dz == 0) throw std::invalid_argument("mode_seeking_penalty needs distinct style codes");
  return ag::mean(ag::abs(img_a - img_b)) * static_cast<float>(-1.0 / dz);
}

void discriminator_step(TrainState& s, const StepBatch& batch, const Tensor& z_xy, const Tensor& z_yx,
                        losses::LossReport& r) {
  const TrainConfig& cfg = s.config;
  const bool stddev = !cfg.ablations.no_stddev_branch;
  const Tensor fake_y = s.gen_xy.translate(batch.x_views, z_xy);
  const Tensor fake_x = s.gen_yx.translate(batch.y_views, z_yx);
  const float gamma = static_cast<float>(cfg.r1_gamma);
  const DiscTerms dy = disc_terms(s.disc_y, batch.y_real, fake_y, stddev, gamma);
  const DiscTerms dx = disc_terms(s.disc_x, batch.x_real, fake_x, stddev, gamma);
  r.adv_d = dx.adv_value + dy.adv_value;
  r.r1 = static_cast<double>(dx.r1.item()) + dy.r1.item();
  if (!std::isfinite(r.adv_d) || !std::isfinite(r.r1))
    throw TrainingDiverged("non-finite discriminator loss at iteration " + std::to_string(s.iteration + 1) + " (" +
                               describe(r) + ")",
                           r);
  const ag::Var loss = dx.adv + dy.adv + dx.r1 + dy.r1;
  const std::vector<ag::Var> params = s.opt_d.vars();
  s.opt_d.step(ag::grad(loss, params));
}

void generator_step(TrainState& s, const StepBatch& batch, const Tensor& z_xy, const Tensor& z_yx,
                    losses::LossReport& r) {
  const TrainConfig& cfg = s.config;
  const losses::PyramidPerceptual perc(cfg.perceptual_levels);
  const GenTerms xy = gen_terms(s.gen_xy, s.gen_yx, s.disc_y, batch.x_views, z_xy, cfg, perc, s.rng);
  const GenTerms yx = gen_terms(s.gen_yx, s.gen_xy, s.disc_x, batch.y_views, z_yx, cfg, perc, s.rng);
  r.adv_g = xy.adv_value + yx.adv_value;
  r.scon = static_cast<double>(xy.scon.item()) + yx.scon.item();
  r.cyc_l2 = static_cast<double>(xy.cyc_l2.item()) + yx.cyc_l2.item();
  r.cyc_perceptual = static_cast<double>(xy.cyc_perc.item()) + yx.cyc_perc.item();
  r.total = losses::total_loss(r, cfg.weights);
  if (!r.all_finite())
    throw TrainingDiverged("non-finite generator loss at iteration " + std::to_string(s.iteration + 1) + " (" +
                               describe(r) + ")",
                           r);
  ag::Var loss = losses::total_loss(xy.adv + yx.adv, xy.scon + yx.scon,
                                    xy.cyc_l2 + yx.cyc_l2 + xy.cyc_perc + yx.cyc_perc, cfg.weights);
  if (cfg.ablations.mode_seeking)
    loss = loss + (xy.mode_seeking + yx.mode_seeking) * static_cast<float>(cfg.mode_seeking_weight);
  const std::vector<ag::Var> params = s.opt_g.vars();
  s.opt_g.step(ag::grad(loss, params));
}

losses::LossReport train_step(TrainState& s, const StepBatch& batch) {
  const int B = s.config.batch_size;
  if (batch.x_views.dim(0) != B || batch.y_views.dim(0) != B || batch.x_real.dim(0) != B || batch.y_real.dim(0) != B)
    throw ShapeError("train_step: every batch must hold batch_size images");
  const int S = s.config.net.style_dim;
  const Tensor z_xy = nets::sample_styles(s.rng, B, S);
  const Tensor z_yx = nets::sample_styles(s.rng, B, S);
  losses::LossReport r;
  discriminator_step(s, batch, z_xy, z_yx, r);
  generator_step(s, batch, z_xy, z_yx, r);

  ++s.iteration;
  require_finite_params(s.opt_d.params(), s.iteration, r);
  require_finite_params(s.opt_g.params(), s.iteration, r);
  if (s.iteration == 1) {
    s.running = r;
  } else {
    std::vector<double> avg = s.running.fields();
    const std::vector<double> now = r.fields();
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] = kRunningDecay * avg[i] + (1 - kRunningDecay) * now[i];
    s.running = from_fields(avg);
  }
  return r;
}

Tensor sample_grid(const nets::Generator& gen, const data::DomainDataset& sources, const Tensor& styles, int rows) {
  rows = std::min<int>(rows, static_cast<int>(sources.size()));
  const int cols = styles.dim(0);
  std::vector<std::vector<Tensor>> cells(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    const Tensor& src = sources[static_cast<std::size_t>(r)].pixels();
    cells[static_cast<std::size_t>(r)].push_back(src);
    std::vector<Tensor> repeated(static_cast<std::size_t>(cols), src);
    const Tensor out = gen.translate(stack(repeated), styles);
    for (int c = 0; c < cols; ++c) cells[static_cast<std::size_t>(r)].push_back(out.slice_rows(c, c + 1).reshaped(src.shape()));
  }
  return io::make_grid(cells);
}

RunResult run_training(const TrainConfig& cfg, const data::DomainDataset& x, const data::DomainDataset& y,
                       const RunOptions& options) {
  cfg.validate();
  if (x.size() == 0 || y.size() == 0) throw std::invalid_argument("training needs non-empty datasets");
  if (x.resolution() != cfg.net.resolution || y.resolution() != cfg.net.resolution)
    throw std::invalid_argument("dataset resolution does not match the training config");
  const fs::path ckpt_dir = options.out_dir / "checkpoints";
  const fs::path sample_dir = options.out_dir / "samples";
  fs::create_directories(ckpt_dir);
  fs::create_directories(sample_dir);

  RunResult result;
  result.log_path = options.out_dir / "loss_log.csv";
  TrainState state = options.resume_from.empty() ? TrainState(cfg) : TrainState::load(options.resume_from, cfg);

  if (options.resume_from.empty()) {
    std::ofstream log(result.log_path, std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write " + result.log_path.string());
    write_log_header(log);
  } else {
    truncate_log(result.log_path, state.iteration);
    if (!fs::exists(result.log_path)) {
      std::ofstream log(result.log_path);
      write_log_header(log);
    }
  }
  std::ofstream log(result.log_path, std::ios::app);
  if (!log) throw std::runtime_error("cannot append to " + result.log_path.string());

  // Fixed style codes for the sample grids, independent of the training stream.
  Rng grid_rng(cfg.seed, 3);
  const Tensor grid_styles = nets::sample_styles(grid_rng, 6, cfg.net.style_dim);
  auto emit_samples = [&] {
    const std::string step = step_name(state.iteration);
    io::write_png(sample_dir / ("xy_" + step + ".png"), sample_grid(state.gen_xy, x, grid_styles, 4));
    io::write_png(sample_dir / ("yx_" + step + ".png"), sample_grid(state.gen_yx, y, grid_styles, 4));
  };

  while (state.iteration < cfg.total_iterations) {
    const StepBatch batch = draw_batch(state, x, y);
    const losses::LossReport r = train_step(state, batch);
    result.history.push_back(r);
    write_log_row(log, state.iteration, r);
    if (!log) throw std::runtime_error("write failed for " + result.log_path.string());
    if (state.iteration % cfg.checkpoint_every == 0) {
      log.flush();
      state.save(ckpt_dir / ("ckpt_" + step_name(state.iteration) + ".gnr"));
    }
    if (state.iteration % cfg.sample_every == 0) emit_samples();
    if (options.progress && state.iteration % options.progress_every == 0)
      *options.progress << "iter " << state.iteration << ' ' << describe(state.running) << std::endl;
  }
  log.flush();
  if (state.iteration % cfg.sample_every != 0) emit_samples();
  result.final_checkpoint = ckpt_dir / "final.gnr";
  state.save(result.final_checkpoint);
  return result;
}

}  // namespace gnr::train
