#pragma once

#include <torch/torch.h>

#include <filesystem>

#include "cmi/model.hpp"
#include "cmi/train.hpp"

namespace cmi {

// Bumped whenever the archive layout changes; readers reject other versions.
inline constexpr int64_t kCheckpointFormatVersion = 1;

struct CheckpointInfo {
  TrainConfig config;
  int64_t epoch = 0;  // next epoch to run
  int64_t step = 0;   // optimisation steps taken
};

// Single torch archive holding format_version, the config as JSON, counters,
// model parameters/buffers and (optionally) the optimiser state. Written to a
// temporary file and renamed into place.
void write_checkpoint(const std::filesystem::path& path, const CheckpointInfo& info,
                      const CascadedSaliencyNet& model, const torch::optim::Optimizer* optimizer);

// Throws kVersion on a missing/unknown format version, kData if unreadable.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

// Rebuilds the network described by the checkpoint and loads its weights.
CascadedSaliencyNet load_model(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

// Restores optimiser state into an optimiser built over the same parameters.
void load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer);

}  // namespace cmi
