#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "gnr/data.hpp"
#include "gnr/losses.hpp"
#include "gnr/nets.hpp"
#include "gnr/optim.hpp"
#include "gnr/rng.hpp"

namespace gnr::train {

struct Ablations {
  bool no_stddev_branch = false;  // drop the batch-statistic head from both adversarial losses
  bool mode_seeking = false;      // add the mode-seeking penalty to the generator objective
};

struct TrainConfig {
  int batch_size = 7;
  nets::NetConfig net;
  losses::LossWeights weights;
  double learning_rate = 0.002;
  double beta1 = 0.0;
  double beta2 = 0.99;
  int total_iterations = 2000;
  double r1_gamma = 10.0;
  std::uint64_t seed = 1;
  Ablations ablations;
  double mode_seeking_weight = 1.0;
  int perceptual_levels = 3;
  int checkpoint_every = 500;
  int sample_every = 500;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  /// Fields that shape the optimization trajectory, one `key=value` per line.
  /// Run-length and output cadence are excluded so a run can be extended.
  std::string canonical() const;
  std::uint64_t hash() const;
};

/// Everything needed to continue training bit-exactly.
class TrainState {
 public:
  explicit TrainState(const TrainConfig& cfg);
  TrainState(TrainState&&) = default;
  TrainState& operator=(TrainState&&) = default;
  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

  TrainConfig config;
  nets::Generator gen_xy, gen_yx;
  nets::Discriminator disc_x, disc_y;  // disc_x judges domain X images
  optim::Adam opt_g, opt_d;
  Rng rng;
  std::int64_t iteration = 0;
  losses::LossReport running;  // exponential moving average, decay 0.99

  void save(const std::filesystem::path& path) const;
  /// Throws ckpt::CheckpointError if the file is unreadable or was written
  /// under a different training configuration.
  static TrainState load(const std::filesystem::path& path, const TrainConfig& cfg);
  /// Config is taken from the checkpoint itself.
  static TrainState load(const std::filesystem::path& path);
};

/// Inputs of one iteration: n augmented views of one image per domain, and
/// n distinct real images per domain for the discriminators.
struct StepBatch {
  Tensor x_views, y_views;
  Tensor x_real, y_real;
};

StepBatch draw_batch(TrainState& state, const data::DomainDataset& x, const data::DomainDataset& y);

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, losses::LossReport report)
      : std::runtime_error(what), report(report) {}
  losses::LossReport report;
};

/// Discriminator update on adv_d + R1 for both domains, then generator
/// update on adv_g + scon + cycle for both directions.
losses::LossReport train_step(TrainState& state, const StepBatch& batch);

/// The two halves of train_step for fixed style draws. Each updates only its
/// own networks and fills its fields of `report`.
void discriminator_step(TrainState& state, const StepBatch& batch, const Tensor& z_xy, const Tensor& z_yx,
                        losses::LossReport& report);
void generator_step(TrainState& state, const StepBatch& batch, const Tensor& z_xy, const Tensor& z_yx,
                    losses::LossReport& report);

/// -mean|img_a - img_b| / ||z_a - z_b||_1 over the whole batch.
ag::Var mode_seeking_penalty(const ag::Var& img_a, const ag::Var& img_b, const Tensor& z_a, const Tensor& z_b);

struct RunOptions {
  std::filesystem::path out_dir;
  std::filesystem::path resume_from;  // empty: start fresh
  std::ostream* progress = nullptr;
  int progress_every = 100;
};

struct RunResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path log_path;
  std::vector<losses::LossReport> history;  // iterations run in this call
};

/// Writes <out>/loss_log.csv, <out>/checkpoints/ckpt_%06d.gnr,
/// <out>/checkpoints/final.gnr and <out>/samples/{xy,yx}_%06d.png.
RunResult run_training(const TrainConfig& cfg, const data::DomainDataset& x, const data::DomainDataset& y,
                       const RunOptions& options);

/// Rows are the first `rows` images of `sources`; column 0 is the source,
/// column j > 0 decodes every row with style j - 1.
Tensor sample_grid(const nets::Generator& gen, const data::DomainDataset& sources, const Tensor& styles, int rows);

}  // namespace gnr::train
