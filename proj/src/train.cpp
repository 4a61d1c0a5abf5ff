#include "cmi/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "cmi/checkpoint.hpp"
#include "cmi/error.hpp"
#include "cmi/metrics.hpp"

namespace cmi {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
  model.validate();
  auto cfg_error = [](const std::string& m) { fail(ErrorKind::kConfig, m); };
  if (epochs < 1) cfg_error("epochs must be >= 1");
  if (!(lr > 0.0)) cfg_error("lr must be positive");
  if (decay_step < 1) cfg_error("decay_step must be >= 1");
  if (!(decay_rate > 0.0)) cfg_error("decay_rate must be positive");
  if (batch_size < 1) cfg_error("batch_size must be >= 1");
  if (optimizer != "adam") cfg_error("optimizer must be 'adam'");
  if (max_steps < 0) cfg_error("max_steps must be >= 0");
}

json to_json(const TrainConfig& cfg) {
  json j = to_json(cfg.model);
  j["epochs"] = cfg.epochs;
  j["lr"] = cfg.lr;
  j["decay_step"] = cfg.decay_step;
  j["decay_rate"] = cfg.decay_rate;
  j["batch_size"] = cfg.batch_size;
  j["optimizer"] = cfg.optimizer;
  j["checkpoint_dir"] = cfg.checkpoint_dir;
  j["ablation"] = to_string(cfg.ablation);
  j["max_steps"] = cfg.max_steps;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorKind::kConfig, "config must be a flat key/value object");
  static const std::vector<std::string> known{
      "backbone", "stage_channels", "stem_channels", "reduced_channels", "embed_dim",
      "input_size", "loss_weights", "mi_weight", "seed", "fusion_level", "aspp_dilations",
      "aspp_branch_channels", "aspp_out_channels", "aspp_dense", "attention_max_positions",
      "attention_scale_init", "pretrained_path", "epochs", "lr", "decay_step", "decay_rate",
      "batch_size", "optimizer", "checkpoint_dir", "ablation", "max_steps"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      fail(ErrorKind::kConfig, "unknown config key '" + key + "'");
    }
    if (value.is_object()) fail(ErrorKind::kConfig, "config key '" + key + "' must not be nested");
  }
  TrainConfig cfg;
  merge_json(j, cfg.model);
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    get("epochs", cfg.epochs);
    get("lr", cfg.lr);
    get("decay_step", cfg.decay_step);
    get("decay_rate", cfg.decay_rate);
    get("batch_size", cfg.batch_size);
    get("optimizer", cfg.optimizer);
    get("checkpoint_dir", cfg.checkpoint_dir);
    get("max_steps", cfg.max_steps);
    if (j.contains("ablation")) cfg.ablation = variant_from_string(j["ablation"].get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, std::string("bad config value: ") + e.what());
  }
  return cfg;
}

TrainConfig load_train_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kConfig, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kConfig, "cannot parse config " + path.string() + ": " + e.what());
  }
  return train_config_from_json(j);
}

double learning_rate_at(const TrainConfig& cfg, int64_t epoch) {
  return cfg.lr * std::pow(cfg.decay_rate, static_cast<double>(epoch / cfg.decay_step));
}

json to_json(const StepRecord& r) {
  return json{{"type", "step"},
              {"epoch", r.epoch},
              {"step", r.step},
              {"lr", r.lr},
              {"ce_final", r.loss.ce_final},
              {"ce_fused", r.loss.ce_fused},
              {"ce_rgb", r.loss.ce_rgb},
              {"ce_depth", r.loss.ce_depth},
              {"mi_total", r.loss.mi_total},
              {"total", r.loss.total}};
}

json to_json(const EpochRecord& r) {
  json j{{"type", "epoch"},
         {"epoch", r.epoch},
         {"lr", r.lr},
         {"steps", r.steps},
         {"ce_final", r.mean_loss.ce_final},
         {"ce_fused", r.mean_loss.ce_fused},
         {"ce_rgb", r.mean_loss.ce_rgb},
         {"ce_depth", r.mean_loss.ce_depth},
         {"mi_total", r.mean_loss.mi_total},
         {"total", r.mean_loss.total}};
  j["cosine_diag"] = r.cosine_diag ? json(*r.cosine_diag) : json(nullptr);
  return j;
}

std::vector<RgbdSample> load_training_set(const DatasetManifest& manifest,
                                          std::array<int64_t, 2> input_size) {
  std::vector<RgbdSample> data;
  data.reserve(manifest.size());
  for (const auto& e : manifest.entries) data.push_back(load_sample(e, input_size, true));
  return data;
}

Trainer::Trainer(TrainConfig cfg, std::vector<RgbdSample> data)
    : cfg_(std::move(cfg)), data_(std::move(data)) {
  cfg_.validate();
  require(!data_.empty(), ErrorKind::kData, "training set is empty");
  for (const auto& s : data_) {
    require(s.has_gt(), ErrorKind::kData, "training sample '" + s.id + "' has no ground truth");
    require(s.rgb.size(1) == cfg_.model.input_size[0] && s.rgb.size(2) == cfg_.model.input_size[1],
            ErrorKind::kData, "training sample '" + s.id + "' is not at the model input size");
  }
  model_ = CascadedSaliencyNet(cfg_.model, cfg_.ablation);
  optimizer_ = std::make_unique<torch::optim::Adam>(
      model_->parameters(), torch::optim::AdamOptions(learning_rate_at(cfg_, 0)));
  weights_ = LossWeights::from(cfg_.model);
  if (is_single_stream(cfg_.ablation)) {
    // One prediction path: only ce(P) contributes.
    weights_.fused = weights_.rgb = weights_.depth = 0.0;
  }
  if (!has_embeddings(cfg_.ablation)) weights_.mi = 0.0;
}

void Trainer::append_log(const json& line) const {
  if (cfg_.checkpoint_dir.empty()) return;
  std::ofstream out(fs::path(cfg_.checkpoint_dir) / "loss_log.jsonl", std::ios::app);
  out << line.dump() << '\n';
}

void Trainer::run_epoch() {
  const double lr = learning_rate_at(cfg_, epoch_);
  for (auto& group : optimizer_->param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }

  std::vector<std::size_t> order(data_.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(sub_seed(cfg_.model.seed, 0xE90C0000ULL + static_cast<uint64_t>(epoch_)));
  std::shuffle(order.begin(), order.end(), rng);

  model_->train();
  EpochRecord summary;
  summary.epoch = epoch_;
  summary.lr = lr;
  std::vector<double> za, zg;

  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg_.batch_size)) {
    if (cfg_.max_steps > 0 && step_ >= cfg_.max_steps) break;
    const auto end = std::min(order.size(), start + static_cast<std::size_t>(cfg_.batch_size));
    std::vector<torch::Tensor> rgb, depth, gt;
    for (auto i = start; i < end; ++i) {
      rgb.push_back(data_[order[i]].rgb);
      depth.push_back(data_[order[i]].depth);
      gt.push_back(data_[order[i]].gt);
    }
    auto out = model_->forward(torch::stack(rgb), torch::stack(depth));
    LossTerms terms;
    try {
      terms = total_loss(out.preds, torch::stack(gt), out.embeddings, weights_);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNumeric) throw;
      fail(ErrorKind::kNumeric, "epoch " + std::to_string(epoch_) + ", step " +
                                    std::to_string(step_ + 1) + ": " + e.what() +
                                    "; last good checkpoint kept");
    }
    optimizer_->zero_grad();
    terms.total.backward();
    optimizer_->step();
    ++step_;

    StepRecord rec{epoch_, step_, lr, terms.values()};
    if (!std::isfinite(rec.loss.total)) {
      fail(ErrorKind::kNumeric, "epoch " + std::to_string(epoch_) + ", step " +
                                    std::to_string(step_) + ": non-finite total loss");
    }
    log_.steps.push_back(rec);
    append_log(to_json(rec));
    if (on_step) on_step(rec);

    auto& m = summary.mean_loss;
    m.ce_final += rec.loss.ce_final;
    m.ce_fused += rec.loss.ce_fused;
    m.ce_rgb += rec.loss.ce_rgb;
    m.ce_depth += rec.loss.ce_depth;
    m.mi_total += rec.loss.mi_total;
    m.total += rec.loss.total;
    ++summary.steps;

    if (!out.embeddings.empty()) {
      auto a = out.embeddings[3].appearance.raw.detach().to(torch::kFloat64).contiguous();
      auto g = out.embeddings[3].geometric.raw.detach().to(torch::kFloat64).contiguous();
      za.insert(za.end(), a.data_ptr<double>(), a.data_ptr<double>() + a.numel());
      zg.insert(zg.end(), g.data_ptr<double>(), g.data_ptr<double>() + g.numel());
    }
  }

  if (summary.steps > 0) {
    auto& m = summary.mean_loss;
    const double n = static_cast<double>(summary.steps);
    m.ce_final /= n;
    m.ce_fused /= n;
    m.ce_rgb /= n;
    m.ce_depth /= n;
    m.mi_total /= n;
    m.total /= n;
    if (!za.empty()) {
      summary.cosine_diag = metrics::cosine_diag<double>(za, zg, static_cast<std::size_t>(cfg_.model.embed_dim)).value;
    }
    log_.epochs.push_back(summary);
    append_log(to_json(summary));
  }
  ++epoch_;
}

void Trainer::run(std::optional<int64_t> until_epoch) {
  const int64_t stop = std::min(cfg_.epochs, until_epoch.value_or(cfg_.epochs));
  if (!cfg_.checkpoint_dir.empty()) fs::create_directories(cfg_.checkpoint_dir);
  while (epoch_ < stop) {
    if (cfg_.max_steps > 0 && step_ >= cfg_.max_steps) break;
    run_epoch();
    if (!cfg_.checkpoint_dir.empty()) {
      save_checkpoint(fs::path(cfg_.checkpoint_dir) / "checkpoint.pt");
    }
  }
}

void Trainer::save_checkpoint(const fs::path& path) const {
  write_checkpoint(path, CheckpointInfo{cfg_, epoch_, step_}, model_, optimizer_.get());
}

void Trainer::load_checkpoint(const fs::path& path) {
  CheckpointInfo info;
  auto loaded = load_model(path, &info);
  if (to_json(info.config.model) != to_json(cfg_.model) || info.config.ablation != cfg_.ablation) {
    fail(ErrorKind::kVersion, "checkpoint " + path.string() +
                                  " was trained with a different model configuration");
  }
  torch::NoGradGuard guard;
  auto dst = model_->named_parameters();
  for (const auto& p : loaded->named_parameters()) dst[p.key()].copy_(p.value());
  auto dst_buf = model_->named_buffers();
  for (const auto& b : loaded->named_buffers()) dst_buf[b.key()].copy_(b.value());
  load_optimizer_state(path, *optimizer_);
  epoch_ = info.epoch;
  step_ = info.step;
}

TrainResult train(TrainConfig cfg, const DatasetManifest& manifest, const fs::path& out_dir,
                  const std::optional<fs::path>& resume_from) {
  cfg.validate();
  cfg.checkpoint_dir = out_dir.string();
  fs::create_directories(out_dir);
  Trainer trainer(cfg, load_training_set(manifest, cfg.model.input_size));
  if (resume_from) {
    trainer.load_checkpoint(*resume_from);
  } else {
    std::ofstream(out_dir / "loss_log.jsonl", std::ios::trunc);
  }
  trainer.run();
  return {trainer.log(), out_dir / "checkpoint.pt"};
}

}  // namespace cmi
