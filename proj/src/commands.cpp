#include "gnr/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "gnr/checkpoint.hpp"
#include "gnr/config.hpp"
#include "gnr/data.hpp"
#include "gnr/explore.hpp"
#include "gnr/image_io.hpp"
#include "gnr/metrics.hpp"
#include "gnr/toy_data.hpp"
#include "gnr/trainer.hpp"
#include "json.hpp"

#ifndef GNR_VERSION
#define GNR_VERSION "0.0.0"
#endif

namespace gnr::cli {
namespace fs = std::filesystem;
namespace {

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_manifest(const fs::path& run_dir, const std::string& command, std::uint64_t config_hash, std::uint64_t seed,
                    const std::vector<std::string>& args) {
  const nlohmann::json m = {{"command", command},
                            {"version", version()},
                            {"config_hash", hex(config_hash)},
                            {"seed", seed},
                            {"arguments", args}};
  write_text(run_dir / "manifest.json", m.dump(2) + "\n");
}

void require_dir(const fs::path& p, const std::string& what) {
  if (!fs::is_directory(p)) throw ConfigError(what + " does not exist: " + p.string());
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw ConfigError(what + " does not exist: " + p.string());
}

const nets::Generator& pick(const train::TrainState& s, const std::string& direction, bool forward) {
  const bool xy = direction == "xy";
  return (xy == forward) ? s.gen_xy : s.gen_yx;
}

std::vector<Tensor> load_inputs(const std::vector<std::string>& items, int resolution) {
  std::vector<fs::path> files;
  for (const auto& item : items) {
    const fs::path p(item);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        const auto ext = e.path().extension();
        if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      require_file(p, "input image");
      files.push_back(p);
    }
  }
  if (files.empty()) throw ConfigError("no input images");
  std::vector<Tensor> out;
  for (const auto& f : files) out.push_back(io::to_square(io::read_image(f), resolution));
  return out;
}

std::vector<std::string> arguments(int argc, const char* const* argv) { return {argv + 1, argv + argc}; }

int cmd_train(const std::string& config_path, const std::string& resume, const std::vector<std::string>& args,
              std::ostream& out) {
  require_file(config_path, "config file");
  const RunConfig cfg = RunConfig::load(config_path);
  cfg.validate();
  for (const char* domain : {"domainA", "domainB"}) require_dir(cfg.data_root / domain / "train", "dataset path");
  if (!resume.empty()) require_file(resume, "checkpoint");
  const auto x = data::DomainDataset::load(cfg.data_root, data::Domain::X, data::Split::Train, cfg.train.net.resolution);
  const auto y = data::DomainDataset::load(cfg.data_root, data::Domain::Y, data::Split::Train, cfg.train.net.resolution);

  const fs::path run_dir = make_run_dir(cfg.output_dir, "train");
  write_text(run_dir / "config.conf", cfg.to_text());
  write_manifest(run_dir, "train", cfg.train.hash(), cfg.train.seed, args);
  train::RunOptions opts;
  opts.out_dir = run_dir;
  opts.resume_from = resume;
  opts.progress = &out;
  const auto result = train::run_training(cfg.train, x, y, opts);
  out << "run directory: " << run_dir.string() << "\n"
      << "final checkpoint: " << result.final_checkpoint.string() << "\n";
  return 0;
}

int cmd_translate(const std::string& checkpoint, const std::vector<std::string>& inputs, int num_styles,
                  std::uint64_t seed, const std::string& direction, const std::string& out_root,
                  const std::vector<std::string>& args, std::ostream& out) {
  require_file(checkpoint, "checkpoint");
  if (num_styles < 0) throw ConfigError("invalid argument: num-styles must be >= 0");
  const auto state = train::TrainState::load(checkpoint);
  const auto images = load_inputs(inputs, state.config.net.resolution);
  Rng rng(seed);
  const Tensor styles = num_styles > 0 ? nets::sample_styles(rng, num_styles, state.config.net.style_dim) : Tensor();
  const Tensor grid =
      translation_grid(pick(state, direction, true), pick(state, direction, false), images, styles);
  const fs::path run_dir = make_run_dir(out_root, "translate");
  write_manifest(run_dir, "translate", state.config.hash(), seed, args);
  io::write_png(run_dir / "grid.png", grid);
  out << "run directory: " << run_dir.string() << "\n"
      << "grid: " << (run_dir / "grid.png").string() << "\n";
  return 0;
}

int cmd_video(const std::string& checkpoint, const std::string& frames_dir, const std::string& timeline_file,
              std::uint64_t seed, const std::string& direction, const std::string& out_root,
              const std::vector<std::string>& args, std::ostream& out) {
  require_file(checkpoint, "checkpoint");
  require_dir(frames_dir, "frames directory");
  const explore::StyleTimeline timeline =
      timeline_file.empty() ? explore::StyleTimeline() : explore::StyleTimeline::load(timeline_file);
  const auto state = train::TrainState::load(checkpoint);
  const auto frames = explore::load_frames(frames_dir, state.config.net.resolution);
  if (frames.empty()) throw ConfigError("no PNG frames in " + frames_dir);
  Rng rng(seed);
  const auto video =
      explore::translate_video(pick(state, direction, true), frames, timeline, state.config.net.style_dim, rng);
  const fs::path run_dir = make_run_dir(out_root, "video");
  write_manifest(run_dir, "video", state.config.hash(), seed, args);
  if (!timeline.empty()) write_text(run_dir / "timeline.txt", timeline.to_text());
  explore::save_frames(run_dir / "frames", video);
  out << "run directory: " << run_dir.string() << "\n"
      << "frames: " << video.size() << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& config_path, const std::string& direction,
             const std::vector<std::string>& args, std::ostream& out) {
  require_file(checkpoint, "checkpoint");
  require_file(config_path, "config file");
  const RunConfig cfg = RunConfig::load(config_path);
  cfg.validate();
  const bool xy = direction == "xy";
  const auto src_domain = xy ? data::Domain::X : data::Domain::Y;
  const auto dst_domain = xy ? data::Domain::Y : data::Domain::X;
  for (const char* domain : {"domainA", "domainB"}) require_dir(cfg.data_root / domain / "test", "dataset path");

  const auto state = train::TrainState::load(checkpoint);
  const int res = state.config.net.resolution;
  const auto test = data::DomainDataset::load(cfg.data_root, src_domain, data::Split::Test, res);
  if (static_cast<int>(test.size()) < cfg.metrics.n)
    throw ConfigError("insufficient test images: metrics.n = " + std::to_string(cfg.metrics.n) + " but " +
                      (cfg.data_root / data::domain_dir(src_domain) / "test").string() + " has " +
                      std::to_string(test.size()));
  std::vector<data::ImageTensor> sources;
  for (std::size_t i = 0; i < test.size(); ++i) sources.push_back(test[i]);
  std::vector<data::ImageTensor> targets;
  for (const auto split : {data::Split::Train, data::Split::Test}) {
    const auto d = data::DomainDataset::load(cfg.data_root, dst_domain, split, res);
    for (std::size_t i = 0; i < d.size(); ++i) targets.push_back(d[i]);
  }

  const auto extractor = metrics::make_extractor(cfg.metrics.extractor_id);
  const int need = extractor->dim() + 1;
  if (static_cast<int>(targets.size()) < need)
    throw ConfigError("insufficient target images: " + std::to_string(targets.size()) + " in " +
                      (cfg.data_root / data::domain_dir(dst_domain)).string() + ", need " + std::to_string(need));
  const std::vector<int> schedule =
      cfg.metrics.batch_sizes.empty() ? metrics::default_batch_sizes(cfg.metrics.fid_samples) : cfg.metrics.batch_sizes;
  if (cfg.metrics.fid_samples < need || *std::min_element(schedule.begin(), schedule.end()) < need)
    throw ConfigError("invalid config field: metrics.fid_samples (every FID subset needs at least " +
                      std::to_string(need) + " samples)");
  if (*std::max_element(schedule.begin(), schedule.end()) > cfg.metrics.fid_samples)
    throw ConfigError("invalid config field: metrics.batch_sizes (exceeds metrics.fid_samples)");
  const metrics::FeatureSet real = metrics::extract_features(*extractor, targets);
  const metrics::Translator translator =
      metrics::generator_translator(pick(state, direction, true), state.config.net.style_dim);
  const std::string echo = "M=" + std::to_string(cfg.metrics.m) + " N=" + std::to_string(cfg.metrics.n) +
                           " k=" + std::to_string(cfg.metrics.k) + " direction=" + direction;
  std::vector<metrics::MetricReport> reports;

  Rng dfid_rng(cfg.metrics.seed, 1);
  metrics::DfidOptions dopt;
  dopt.m = cfg.metrics.m;
  dopt.n = cfg.metrics.n;
  reports.push_back({"dfid", metrics::dfid(translator, sources, *extractor, real, dfid_rng, dopt),
                     {cfg.metrics.m, cfg.metrics.n, real.n}, extractor->id(), echo});

  // One z per translation, cycling over the test images.
  Rng fid_rng(cfg.metrics.seed, 2);
  std::vector<double> gen_values;
  for (int s = 0; s < cfg.metrics.fid_samples; s += 50) {
    const int len = std::min(50, cfg.metrics.fid_samples - s);
    std::vector<data::ImageTensor> batch;
    for (int i = 0; i < len; ++i) batch.push_back(sources[static_cast<std::size_t>(s + i) % sources.size()]);
    const Tensor y = translator.apply(data::stack_images(batch), nets::sample_styles(fid_rng, len, translator.style_dim));
    const auto f = extractor->extract(y);
    gen_values.insert(gen_values.end(), f.vectors.begin(), f.vectors.end());
  }
  const metrics::FeatureSet gen(cfg.metrics.fid_samples, extractor->dim(), std::move(gen_values), extractor->id());
  reports.push_back({"fid", metrics::frechet_distance(gen, real), {gen.n, real.n}, extractor->id(), echo});
  metrics::FidInfOptions fopt;
  fopt.batch_sizes = schedule;
  fopt.seed = cfg.metrics.seed;
  reports.push_back({"fid_inf", metrics::fid_inf(gen, real, fopt), fopt.batch_sizes, extractor->id(), echo});

  Rng div_rng(cfg.metrics.seed, 3);
  reports.push_back({"pairwise_diversity",
                     metrics::pairwise_diversity(translator, sources, cfg.metrics.k, metrics::feature_distance(*extractor),
                                                 div_rng, cfg.metrics.n),
                     {cfg.metrics.k, cfg.metrics.n}, extractor->id(), echo});

  const fs::path run_dir = make_run_dir(cfg.output_dir, "eval");
  write_text(run_dir / "config.conf", cfg.to_text());
  write_manifest(run_dir, "eval", state.config.hash(), cfg.metrics.seed, args);
  metrics::write_reports_csv(run_dir / "metrics.csv", reports);
  metrics::write_reports_json(run_dir / "metrics.json", reports);
  out << "run directory: " << run_dir.string() << "\n";
  for (const auto& r : reports) out << r.metric_name << " = " << r.value << "\n";
  return 0;
}

int cmd_sefa(const std::string& checkpoint, int top_k, const std::string& input, double magnitude, std::uint64_t seed,
             const std::string& direction, const std::string& out_root, const std::vector<std::string>& args,
             std::ostream& out) {
  require_file(checkpoint, "checkpoint");
  const auto state = train::TrainState::load(checkpoint);
  const int dim = state.config.net.style_dim;
  if (top_k < 1 || top_k > dim)
    throw ConfigError("invalid argument: top-k must be in [1, " + std::to_string(dim) + "]");
  const nets::Generator& gen = pick(state, direction, true);
  const auto dirs = explore::sefa_directions(gen, top_k);

  const fs::path run_dir = make_run_dir(out_root, "sefa");
  write_manifest(run_dir, "sefa", state.config.hash(), seed, args);
  std::string csv = "rank,eigenvalue";
  for (int i = 0; i < dim; ++i) csv += ",v" + std::to_string(i + 1);
  csv += ",layers\n";
  char buf[32];
  for (std::size_t r = 0; r < dirs.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%.17g", dirs[r].eigenvalue);
    csv += std::to_string(r) + "," + buf;
    for (double v : dirs[r].vector) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      csv += std::string(",") + buf;
    }
    std::string layers;
    for (int l : dirs[r].layer_scope) layers += (layers.empty() ? "" : ";") + std::to_string(l);
    csv += "," + layers + "\n";
  }
  write_text(run_dir / "directions.csv", csv);

  if (!input.empty()) {
    require_file(input, "input image");
    const data::ImageTensor img(io::to_square(io::read_image(input), state.config.net.resolution));
    Rng rng(seed);
    const Tensor z = nets::sample_styles(rng, 1, dim);
    const explore::StyleCode base(z.values().begin(), z.values().end());
    const double steps[5] = {-1.0, -0.5, 0.0, 0.5, 1.0};
    std::vector<std::vector<Tensor>> cells;
    for (const auto& d : dirs) {
      std::vector<Tensor> row{img.pixels()};
      for (double s : steps) row.push_back(explore::translate_frame(gen, img, explore::edit_style(base, d, s * magnitude)).pixels());
      cells.push_back(std::move(row));
    }
    io::write_png(run_dir / "edits.png", io::make_grid(cells));
  }
  out << "run directory: " << run_dir.string() << "\n";
  for (std::size_t r = 0; r < dirs.size(); ++r) out << "direction " << r << ": eigenvalue " << dirs[r].eigenvalue << "\n";
  return 0;
}

int cmd_make_toy_data(const std::string& out_dir, std::uint64_t seed, int count_a, int count_b, int resolution,
                      std::ostream& out) {
  if (count_a < 1 || count_b < 1) throw ConfigError("invalid argument: counts must be >= 1");
  if (resolution < 8) throw ConfigError("invalid argument: resolution must be >= 8");
  toy::make_toy_dataset(out_dir, seed, {count_a, count_b}, resolution);
  out << "dataset root: " << out_dir << "\n";
  return 0;
}

}  // namespace

const char* version() { return GNR_VERSION; }

fs::path make_run_dir(const fs::path& root, const std::string& command) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  fs::create_directories(root);
  fs::path dir = root / (std::string(stamp) + "-" + command);
  for (int i = 2; !fs::create_directory(dir); ++i) dir = root / (std::string(stamp) + "-" + command + "-" + std::to_string(i));
  return dir;
}

Tensor translation_grid(const nets::Generator& forward, const nets::Generator& back, const std::vector<Tensor>& inputs,
                        const Tensor& styles) {
  if (inputs.empty()) throw std::invalid_argument("translation_grid: no inputs");
  const Tensor batch = stack(inputs);
  std::vector<Tensor> columns;
  if (styles.empty()) {
    const int n = batch.dim(0);
    const Tensor own = forward.styles_of(batch);
    const Tensor there = forward.translate(batch, Tensor({n, own.dim(1)}));
    columns.push_back(back.translate(there, own));
  } else {
    for (int j = 0; j < styles.dim(0); ++j) {
      std::vector<Tensor> z(inputs.size(), styles.slice_rows(j, j + 1).reshaped({styles.dim(1)}));
      columns.push_back(forward.translate(batch, stack(z)));
    }
  }
  std::vector<std::vector<Tensor>> cells(inputs.size());
  for (std::size_t r = 0; r < inputs.size(); ++r) {
    cells[r].push_back(inputs[r]);
    for (const Tensor& col : columns)
      cells[r].push_back(col.slice_rows(static_cast<int>(r), static_cast<int>(r) + 1).reshaped(inputs[r].shape()));
  }
  return io::make_grid(cells);
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal unpaired image-to-image translation", "gnr"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version());
  const std::vector<std::string> args = arguments(argc, argv);

  std::string config_path, resume, checkpoint, direction = "xy", out_root = "runs", frames_dir, timeline_file, input,
                                                out_dir = "data/toy";
  std::vector<std::string> inputs;
  int num_styles = 6, top_k = 5, count_a = 500, count_b = 500, resolution = 64;
  std::uint64_t seed = 1;
  double magnitude = 3.0;
  const auto add_direction = [&](CLI::App* c) {
    c->add_option("--direction", direction, "Translation direction")->check(CLI::IsMember({"xy", "yx"}));
  };

  auto* train = app.add_subcommand("train", "Train both translators from a config file");
  train->add_option("--config", config_path, "Run config")->required();
  train->add_option("--resume", resume, "Checkpoint to continue from");

  auto* translate = app.add_subcommand("translate", "Translate inputs under sampled styles into a grid");
  translate->add_option("--checkpoint", checkpoint)->required();
  translate->add_option("--inputs", inputs, "Image files or directories")->required();
  translate->add_option("--num-styles", num_styles, "Style columns; 0 gives a reconstruction column");
  translate->add_option("--seed", seed);
  translate->add_option("--out-dir", out_root, "Root for the run directory");
  add_direction(translate);

  auto* video = app.add_subcommand("video", "Translate a PNG frame sequence along a style timeline");
  video->add_option("--checkpoint", checkpoint)->required();
  video->add_option("--frames-dir", frames_dir)->required();
  video->add_option("--timeline-file", timeline_file, "Keyframe file; without it one sampled style is used");
  video->add_option("--seed", seed);
  video->add_option("--out-dir", out_root, "Root for the run directory");
  add_direction(video);

  auto* eval = app.add_subcommand("eval", "DFID, FID, FID-infinity and pairwise diversity");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--config", config_path, "Run config with data and metric settings")->required();
  add_direction(eval);

  auto* sefa = app.add_subcommand("sefa", "Style directions from the decoder modulation weights");
  sefa->add_option("--checkpoint", checkpoint)->required();
  sefa->add_option("--top-k", top_k);
  sefa->add_option("--input", input, "Image to render edits of");
  sefa->add_option("--magnitude", magnitude, "Largest edit step");
  sefa->add_option("--seed", seed);
  sefa->add_option("--out-dir", out_root, "Root for the run directory");
  add_direction(sefa);

  auto* toy_cmd = app.add_subcommand("make-toy-data", "Render the synthetic two-domain dataset");
  toy_cmd->add_option("--out", out_dir, "Dataset root");
  toy_cmd->add_option("--seed", seed);
  toy_cmd->add_option("--count-a", count_a);
  toy_cmd->add_option("--count-b", count_b);
  toy_cmd->add_option("--resolution", resolution);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << version() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*train) return cmd_train(config_path, resume, args, out);
    if (*translate) return cmd_translate(checkpoint, inputs, num_styles, seed, direction, out_root, args, out);
    if (*video) return cmd_video(checkpoint, frames_dir, timeline_file, seed, direction, out_root, args, out);
    if (*eval) return cmd_eval(checkpoint, config_path, direction, args, out);
    if (*sefa) return cmd_sefa(checkpoint, top_k, input, magnitude, seed, direction, out_root, args, out);
    if (*toy_cmd) return cmd_make_toy_data(out_dir, seed, count_a, count_b, resolution, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace gnr::cli
