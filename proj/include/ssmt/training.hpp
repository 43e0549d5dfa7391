#pragma once

// Alternating WGAN-GP training loop with the multitask heads, the epoch
// learning-rate schedule, checkpoints and the metrics stream.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "ssmt/config.hpp"
#include "ssmt/container.hpp"
#include "ssmt/losses.hpp"
#include "ssmt/models.hpp"
#include "ssmt/random.hpp"
#include "ssmt/synthdata.hpp"

namespace ssmt::train {

enum class Mode { SemiSupervised, Supervised };
Mode parse_mode(const std::string& text);

struct TrainingConfig {
  int batch_size = 115;
  double lr0 = 0.01;
  double lr_decay = 0.98;
  int lr_drop_epoch = 25;
  double lr_drop_factor = 5.0;
  double weight_decay = 0.00004;
  int critic_steps = 5;
  double alpha = 1.0;
  double lambda = 10.0;
  int epochs = 30;
  int steps_per_epoch = 0;
  std::uint64_t seed = 1;
  double beta1 = 0.0;
  double beta2 = 0.9;
  double adam_eps = 1e-8;
  Mode mode = Mode::SemiSupervised;
  bool use_unlabeled = true;
  bool use_fake = true;
  int val_examples = 512;
  int keep_checkpoints = 0;

  static TrainingConfig from(const config::RunConfig& cfg);
  void validate() const;
};

/// lr0 * decay^epoch, further divided by the drop factor once epoch exceeds
/// the drop epoch.
double lr_at(int epoch, const TrainingConfig& config);

/// Adam with decoupled weight decay; the state is plain tensors so it can
/// be checkpointed.
class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, torch::Tensor>> params, double beta1, double beta2, double eps,
        double weight_decay);

  void zero_grad();
  void step(double lr);
  std::int64_t steps() const noexcept { return steps_; }

  void save(const std::string& prefix, io::Container& out) const;
  void load(const std::string& prefix, const io::Container& in);

 private:
  std::vector<std::pair<std::string, torch::Tensor>> params_;
  std::vector<torch::Tensor> m_, v_;
  double beta1_, beta2_, eps_, weight_decay_;
  std::int64_t steps_ = 0;
};

struct MetricsRow {
  int epoch = 0;
  std::int64_t step = 0;  // discriminator updates so far
  double lr = 0.0;
  nn::LossBreakdown ld;
  nn::LossBreakdown lg;
  std::map<std::string, double> train_accuracy;
  std::map<std::string, double> val_accuracy;
  double wall_seconds = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "epoch,step,lr,ld_total,ld_wgan,ld_multitask,lg_total,lg_wgan,lg_multitask,task,split,accuracy";

/// Long-format lines (one per task and split) without trailing header.
std::string format_metrics(const MetricsRow& row, const std::vector<std::string>& tasks);

class Trainer {
 public:
  /// Takes the dataset by value; its tile buffer moves into a tensor.
  Trainer(synth::Dataset dataset, const config::RunConfig& cfg);

  nn::Generator& generator() { return models_.generator; }
  nn::Discriminator& discriminator() { return models_.discriminator; }
  const TrainingConfig& config() const noexcept { return tc_; }
  const std::vector<nn::TaskWeight>& task_weights() const noexcept { return task_weights_; }
  std::vector<std::string> task_names() const;

  /// Prepares the per-epoch random stream and batch pools.
  void begin_epoch(int epoch);
  /// One discriminator update on a fresh bundle.
  nn::LossBreakdown d_step();
  /// One generator update on fresh noise.
  nn::LossBreakdown g_step();
  bool generator_active() const noexcept;

  struct StepRecord {
    std::vector<nn::LossBreakdown> ld;
    nn::LossBreakdown lg;
  };
  /// critic_steps discriminator updates followed by one generator update.
  StepRecord train_step();

  /// Runs one full epoch and returns its metrics.
  MetricsRow run_epoch(int epoch);

  std::map<std::string, double> accuracy(synth::Split split, std::size_t limit);

  std::int64_t d_updates() const noexcept { return d_updates_; }
  std::int64_t g_updates() const noexcept { return g_updates_; }
  int epochs_done() const noexcept { return epochs_done_; }

  io::Container checkpoint() const;
  void save_checkpoint(const std::filesystem::path& path) const;
  /// Restores weights, optimizer state and counters. Throws ResumeMismatch
  /// when the checkpoint's configuration differs in anything but epochs.
  void restore(const io::Container& checkpoint);

  /// Images NCHW for dataset rows.
  torch::Tensor images(const std::vector<std::int64_t>& rows) const;

 private:
  torch::Tensor noise(std::int64_t n);
  nn::BatchBundle make_bundle();
  std::vector<std::int64_t> draw(std::vector<std::int64_t>& pool, std::size_t& cursor, std::size_t n);

  config::RunConfig cfg_;
  TrainingConfig tc_;
  synth::Dataset meta_;  // tiles moved out
  torch::Tensor tiles_;  // N, C, H, W
  std::string primary_;
  nn::GeneratorSpec gspec_;
  nn::DiscriminatorSpec dspec_;
  nn::ModelPair models_;
  std::optional<AdamW> opt_d_;
  std::optional<AdamW> opt_g_;
  std::vector<nn::TaskWeight> task_weights_;
  std::map<std::string, torch::Tensor> labels_;   // per task, per row (-1 when unlabeled)
  std::map<std::string, torch::Tensor> weights_;  // per task, per row class weight

  std::vector<std::int64_t> train_rows_;
  std::map<std::string, std::vector<std::int64_t>> labeled_rows_;

  // Per-epoch state.
  int epoch_ = 0;
  std::optional<Rng> rng_;
  std::vector<std::int64_t> real_pool_;
  std::size_t real_cursor_ = 0;
  std::map<std::string, std::vector<std::int64_t>> labeled_pool_;
  std::map<std::string, std::size_t> labeled_cursor_;
  std::map<std::string, std::int64_t> correct_, seen_;

  std::int64_t d_updates_ = 0;
  std::int64_t g_updates_ = 0;
  int epochs_done_ = 0;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics;
  std::vector<MetricsRow> rows;
};

/// Full run into `out_dir`: checkpoints/epoch_NNNN.ckpt, final.ckpt,
/// metrics.csv, timing.csv and config.snapshot. A non-finite loss writes
/// diagnostic.ckpt and throws NonFiniteLoss.
TrainResult train(const config::RunConfig& cfg, const std::filesystem::path& data_dir,
                  const std::filesystem::path& out_dir, const std::optional<std::filesystem::path>& resume = {});

}  // namespace ssmt::train
