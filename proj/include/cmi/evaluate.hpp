#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cmi/data_model.hpp"
#include "cmi/model.hpp"
#include "json.hpp"

namespace cmi {

struct ImageRecord {
  std::string id;
  std::optional<double> mae;
  std::optional<double> mean_f;  // nullopt with skipped_reason when gt has no foreground
  std::optional<double> mean_e;
  std::optional<double> s_measure;
  std::optional<std::string> skipped_reason;
  std::optional<std::string> error;  // set when the image could not be scored

  bool ok() const { return !error.has_value(); }
};

struct EvalReport {
  std::vector<ImageRecord> per_image;  // sorted by id
  double mae = 0;
  std::optional<double> mean_f;
  double mean_e = 0;
  double s_measure = 0;
  std::optional<double> cosine_diag;  // model evaluations only
  std::size_t scored = 0;
  std::size_t failed = 0;

  bool partial() const { return failed > 0; }
};

// Scores a single (prediction, gt) pair given as [1,H,W] or [H,W] tensors.
ImageRecord score_image(const std::string& id, const torch::Tensor& pred, const torch::Tensor& gt);

// Sorts records by id and fills the aggregate means over the scored images.
EvalReport aggregate(std::vector<ImageRecord> records);

// Predictions are read from pred_dir/<id>.png (8-bit, /255) and compared with
// the manifest GT at the GT's native resolution; a prediction of another size
// is resized bilinearly first. Missing or unreadable files become error entries.
EvalReport evaluate_predictions(const DatasetManifest& manifest,
                                const std::filesystem::path& pred_dir);

// Runs the model on every entry and scores its final map; also reports the
// stage-4 embedding cosine diagnostic when the variant has embeddings.
EvalReport evaluate_model(CascadedSaliencyNet& model, const DatasetManifest& manifest);
EvalReport evaluate_model(CascadedSaliencyNet& model, const std::vector<RgbdSample>& samples);

// Model forward on one sample; returns the final probability map [1,H,W] at
// the sample's source resolution (logits resized, then squashed).
torch::Tensor predict_sample(CascadedSaliencyNet& model, const RgbdSample& sample);

// Writes out_dir/<id>.png = round(255 * P) for every entry; returns the paths.
std::vector<std::filesystem::path> predict(const std::filesystem::path& checkpoint,
                                           const DatasetManifest& manifest,
                                           const std::filesystem::path& out_dir);

nlohmann::json to_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& path);

}  // namespace cmi
