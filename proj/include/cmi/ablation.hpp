#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cmi/evaluate.hpp"
#include "cmi/train.hpp"

namespace cmi {

struct AblationVariant {
  std::string name;  // full, W0, W1, K3, K32, base, ss
  TrainConfig config;
};

// The comparison grid derived from `base`: same data, same seed, one knob
// changed per row.
std::vector<AblationVariant> ablation_variants(const TrainConfig& base);

struct AblationRow {
  std::string name;
  Variant variant = Variant::kFull;
  double mi_weight = 0;
  int64_t embed_dim = 0;
  EvalReport train_report;  // metrics on the training set after training
};

// Trains every variant on the manifest; per-variant checkpoints and loss logs
// go to work_dir/<name>/ when work_dir is non-empty.
std::vector<AblationRow> run_ablation_suite(const TrainConfig& base, const DatasetManifest& manifest,
                                            const std::filesystem::path& work_dir = {});

nlohmann::json to_json(const std::vector<AblationRow>& rows);

}  // namespace cmi
