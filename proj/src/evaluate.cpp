#include "cmi/evaluate.hpp"

#include <algorithm>
#include <fstream>

#include "cmi/checkpoint.hpp"
#include "cmi/error.hpp"
#include "cmi/metrics.hpp"

namespace cmi {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;
using nlohmann::json;

namespace {

torch::Tensor as_map(const torch::Tensor& t) {
  auto m = t.dim() == 3 ? t.squeeze(0) : t;
  return m.to(torch::kFloat64).contiguous();
}

torch::Tensor resize_bilinear(const torch::Tensor& map, int64_t h, int64_t w) {
  auto m = map.dim() == 2 ? map.unsqueeze(0) : map;
  if (m.size(1) == h && m.size(2) == w) return m;
  return F::interpolate(m.unsqueeze(0).to(torch::kFloat32),
                        F::InterpolateFuncOptions()
                            .size(std::vector<int64_t>{h, w})
                            .mode(torch::kBilinear)
                            .align_corners(false))
      .squeeze(0)
      .clamp(0.0, 1.0);
}

torch::Tensor read_gt(const fs::path& path) { return (read_gray(path) >= 0.5).to(torch::kFloat32); }

std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

ImageRecord score_image(const std::string& id, const torch::Tensor& pred, const torch::Tensor& gt) {
  auto p = as_map(pred);
  auto g = as_map(gt);
  require(p.sizes() == g.sizes(), ErrorKind::kContract, "prediction and gt sizes differ for " + id);
  const auto rows = static_cast<std::size_t>(p.size(0));
  const auto cols = static_cast<std::size_t>(p.size(1));
  metrics::MapView<double> pv({p.data_ptr<double>(), rows * cols}, rows, cols);
  metrics::MapView<double> gv({g.data_ptr<double>(), rows * cols}, rows, cols);

  ImageRecord r;
  r.id = id;
  r.mae = metrics::mae(pv, gv);
  r.mean_f = metrics::mean_f_measure(pv, gv);
  if (!r.mean_f) r.skipped_reason = "mean_f undefined: ground truth has no foreground";
  r.mean_e = metrics::mean_e_measure(pv, gv);
  r.s_measure = metrics::s_measure(pv, gv);
  return r;
}

EvalReport aggregate(std::vector<ImageRecord> records) {
  std::sort(records.begin(), records.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.id < b.id; });
  EvalReport report;
  std::vector<double> mae, f, e, s;
  for (const auto& r : records) {
    if (!r.ok()) {
      ++report.failed;
      continue;
    }
    ++report.scored;
    mae.push_back(*r.mae);
    e.push_back(*r.mean_e);
    s.push_back(*r.s_measure);
    if (r.mean_f) f.push_back(*r.mean_f);
  }
  report.mae = mean_of(mae).value_or(0.0);
  report.mean_f = mean_of(f);
  report.mean_e = mean_of(e).value_or(0.0);
  report.s_measure = mean_of(s).value_or(0.0);
  report.per_image = std::move(records);
  return report;
}

EvalReport evaluate_predictions(const DatasetManifest& manifest, const fs::path& pred_dir) {
  std::vector<ImageRecord> records;
  for (const auto& entry : manifest.entries) {
    try {
      if (!entry.gt_path) fail(ErrorKind::kData, "entry has no gt");
      auto gt = read_gt(*entry.gt_path);
      const fs::path pred_path = pred_dir / (entry.id + ".png");
      auto pred = resize_bilinear(read_gray(pred_path), gt.size(1), gt.size(2));
      records.push_back(score_image(entry.id, pred, gt));
    } catch (const Error& e) {
      ImageRecord r;
      r.id = entry.id;
      r.error = e.what();
      records.push_back(std::move(r));
    }
  }
  return aggregate(std::move(records));
}

torch::Tensor predict_sample(CascadedSaliencyNet& model, const RgbdSample& sample) {
  torch::NoGradGuard guard;
  model->eval();
  auto out = model->forward(sample.rgb.unsqueeze(0), sample.depth.unsqueeze(0));
  auto logits = upsample_logits(model->final_logits(out.preds), sample.source_size);
  return PredictionSet::probability(logits).squeeze(0);
}

namespace {

// Scores each sample's final map at its GT resolution and appends the
// stage-4 embeddings for the cosine diagnostic.
EvalReport score_samples(CascadedSaliencyNet& model, const std::vector<RgbdSample>& samples,
                         std::vector<ImageRecord> records) {
  torch::NoGradGuard guard;
  model->eval();
  std::vector<double> za, zg;
  for (const auto& s : samples) {
    if (!s.has_gt()) {
      ImageRecord r;
      r.id = s.id;
      r.error = "entry has no gt";
      records.push_back(std::move(r));
      continue;
    }
    auto out = model->forward(s.rgb.unsqueeze(0), s.depth.unsqueeze(0));
    auto logits = upsample_logits(model->final_logits(out.preds), {s.gt.size(1), s.gt.size(2)});
    records.push_back(score_image(s.id, PredictionSet::probability(logits).squeeze(0), s.gt));
    if (!out.embeddings.empty()) {
      auto a = out.embeddings[3].appearance.raw.to(torch::kFloat64).contiguous();
      auto g = out.embeddings[3].geometric.raw.to(torch::kFloat64).contiguous();
      za.insert(za.end(), a.data_ptr<double>(), a.data_ptr<double>() + a.numel());
      zg.insert(zg.end(), g.data_ptr<double>(), g.data_ptr<double>() + g.numel());
    }
  }
  auto report = aggregate(std::move(records));
  if (!za.empty()) {
    report.cosine_diag =
        metrics::cosine_diag<double>(za, zg, static_cast<std::size_t>(model->config().embed_dim)).value;
  }
  return report;
}

}  // namespace

EvalReport evaluate_model(CascadedSaliencyNet& model, const std::vector<RgbdSample>& samples) {
  return score_samples(model, samples, {});
}

EvalReport evaluate_model(CascadedSaliencyNet& model, const DatasetManifest& manifest) {
  std::vector<RgbdSample> samples;
  std::vector<ImageRecord> failures;
  for (const auto& entry : manifest.entries) {
    try {
      auto s = load_sample(entry, model->config().input_size, true);
      s.gt = read_gt(*entry.gt_path);
      samples.push_back(std::move(s));
    } catch (const Error& e) {
      ImageRecord r;
      r.id = entry.id;
      r.error = e.what();
      failures.push_back(std::move(r));
    }
  }
  return score_samples(model, samples, std::move(failures));
}

std::vector<fs::path> predict(const fs::path& checkpoint, const DatasetManifest& manifest,
                              const fs::path& out_dir) {
  CheckpointInfo info;
  auto model = load_model(checkpoint, &info);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + out_dir.string());
  std::vector<fs::path> written;
  for (const auto& entry : manifest.entries) {
    auto sample = load_sample(entry, info.config.model.input_size, false);
    auto path = out_dir / (entry.id + ".png");
    write_gray8(predict_sample(model, sample), path);
    written.push_back(path);
  }
  return written;
}

json to_json(const EvalReport& report) {
  json per_image = json::array();
  for (const auto& r : report.per_image) {
    json j{{"id", r.id}};
    if (r.error) {
      j["error"] = *r.error;
    } else {
      j["mae"] = opt(r.mae);
      j["mean_f"] = opt(r.mean_f);
      j["mean_e"] = opt(r.mean_e);
      j["s_measure"] = opt(r.s_measure);
      if (r.skipped_reason) j["skipped_reason"] = *r.skipped_reason;
    }
    per_image.push_back(std::move(j));
  }
  return json{{"mae", report.mae},
              {"mean_f", opt(report.mean_f)},
              {"mean_e", report.mean_e},
              {"s_measure", report.s_measure},
              {"cosine_diag", opt(report.cosine_diag)},
              {"scored", report.scored},
              {"failed", report.failed},
              {"per_image", per_image}};
}

void write_report(const EvalReport& report, const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write report " + path.string());
  out << to_json(report).dump(2) << '\n';
}

}  // namespace cmi
