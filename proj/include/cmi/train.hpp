#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cmi/data_model.hpp"
#include "cmi/model.hpp"
#include "cmi/objective.hpp"

namespace cmi {

struct TrainConfig {
  ModelConfig model;
  int64_t epochs = 100;
  double lr = 5e-5;
  int64_t decay_step = 80;
  double decay_rate = 0.1;
  int64_t batch_size = 5;
  std::string optimizer = "adam";
  std::string checkpoint_dir;
  Variant ablation = Variant::kFull;
  // Stop after this many optimisation steps in total; 0 means no limit.
  int64_t max_steps = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
// Flat key/value object: TrainConfig keys plus the ModelConfig keys ("seed"
// feeds model.seed). Unknown keys are a config error.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);

// Step decay: lr * decay_rate^(floor(epoch / decay_step)), epochs counted from 0.
double learning_rate_at(const TrainConfig& cfg, int64_t epoch);

struct StepRecord {
  int64_t epoch = 0;
  int64_t step = 0;  // global, 1-based
  double lr = 0;
  LossBreakdown loss;
};

struct EpochRecord {
  int64_t epoch = 0;
  double lr = 0;
  int64_t steps = 0;
  LossBreakdown mean_loss;
  std::optional<double> cosine_diag;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

nlohmann::json to_json(const StepRecord& r);
nlohmann::json to_json(const EpochRecord& r);

// Loads every manifest entry with ground truth at the model input size.
std::vector<RgbdSample> load_training_set(const DatasetManifest& manifest,
                                          std::array<int64_t, 2> input_size);

// Single-writer training loop over an in-memory dataset.
//
// Each epoch visits the data in a seeded shuffled order; the permutation
// depends only on (seed, epoch), so a run resumed from an epoch-boundary
// checkpoint replays the uninterrupted run exactly.
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<RgbdSample> data);

  // Runs until cfg.epochs (or `until_epoch`, exclusive) or cfg.max_steps.
  // Writes checkpoint.pt and loss_log.jsonl under checkpoint_dir when set.
  // Throws kNumeric on a non-finite loss, leaving the last epoch's checkpoint in place.
  void run(std::optional<int64_t> until_epoch = std::nullopt);

  void save_checkpoint(const std::filesystem::path& path) const;
  // Restores parameters, optimiser state and counters from a checkpoint
  // written by a trainer with the same configuration.
  void load_checkpoint(const std::filesystem::path& path);

  const TrainLog& log() const { return log_; }
  CascadedSaliencyNet& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }
  int64_t epoch() const { return epoch_; }
  int64_t step() const { return step_; }

  // Called after every optimisation step.
  std::function<void(const StepRecord&)> on_step;

 private:
  void run_epoch();
  void append_log(const nlohmann::json& line) const;

  TrainConfig cfg_;
  std::vector<RgbdSample> data_;
  CascadedSaliencyNet model_{nullptr};
  std::unique_ptr<torch::optim::Adam> optimizer_;
  LossWeights weights_;
  int64_t epoch_ = 0;
  int64_t step_ = 0;
  TrainLog log_;
};

struct TrainResult {
  TrainLog log;
  std::filesystem::path checkpoint;
};

// Loads the manifest, trains, and writes out_dir/checkpoint.pt and
// out_dir/loss_log.jsonl. With `resume_from`, continues from that checkpoint.
TrainResult train(TrainConfig cfg, const DatasetManifest& manifest,
                  const std::filesystem::path& out_dir,
                  const std::optional<std::filesystem::path>& resume_from = std::nullopt);

}  // namespace cmi
