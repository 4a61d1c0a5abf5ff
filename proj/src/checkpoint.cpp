#include "cmi/checkpoint.hpp"

#include "cmi/error.hpp"

namespace cmi {

namespace fs = std::filesystem;
using torch::serialize::InputArchive;
using torch::serialize::OutputArchive;

void write_checkpoint(const fs::path& path, const CheckpointInfo& info,
                      const CascadedSaliencyNet& model, const torch::optim::Optimizer* optimizer) {
  OutputArchive archive;
  archive.write("format_version", torch::tensor({kCheckpointFormatVersion}, torch::kInt64));
  archive.write("config", c10::IValue(to_json(info.config).dump()));
  archive.write("epoch", torch::tensor({info.epoch}, torch::kInt64));
  archive.write("step", torch::tensor({info.step}, torch::kInt64));

  OutputArchive model_archive;
  model->save(model_archive);
  archive.write("model", model_archive);
  if (optimizer != nullptr) {
    OutputArchive optim_archive;
    optimizer->save(optim_archive);
    archive.write("optimizer", optim_archive);
  }

  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  const fs::path tmp = path.string() + ".tmp";
  try {
    archive.save_to(tmp.string());
  } catch (const c10::Error& e) {
    fail(ErrorKind::kIo, "cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::kIo, "cannot move checkpoint into place at " + path.string());
}

namespace {

InputArchive open_archive(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorKind::kData, "checkpoint not found: " + path.string());
  InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    fail(ErrorKind::kData, "cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  torch::Tensor version;
  if (!archive.try_read("format_version", version)) {
    fail(ErrorKind::kVersion, path.string() + " has no format_version; not a checkpoint of this tool");
  }
  const auto v = version.item<int64_t>();
  if (v != kCheckpointFormatVersion) {
    fail(ErrorKind::kVersion, path.string() + " has checkpoint format " + std::to_string(v) +
                                  ", this build reads format " +
                                  std::to_string(kCheckpointFormatVersion));
  }
  return archive;
}

CheckpointInfo read_info(InputArchive& archive) {
  CheckpointInfo info;
  c10::IValue cfg;
  archive.read("config", cfg);
  info.config = train_config_from_json(nlohmann::json::parse(cfg.toStringRef()));
  torch::Tensor t;
  archive.read("epoch", t);
  info.epoch = t.item<int64_t>();
  archive.read("step", t);
  info.step = t.item<int64_t>();
  return info;
}

}  // namespace

CheckpointInfo read_checkpoint_info(const fs::path& path) {
  auto archive = open_archive(path);
  return read_info(archive);
}

CascadedSaliencyNet load_model(const fs::path& path, CheckpointInfo* info_out) {
  auto archive = open_archive(path);
  auto info = read_info(archive);
  // Weights come from the archive; the file path is only needed at training start.
  info.config.model.pretrained_path.clear();
  CascadedSaliencyNet model(info.config.model, info.config.ablation);
  InputArchive model_archive;
  archive.read("model", model_archive);
  try {
    model->load(model_archive);
  } catch (const c10::Error& e) {
    fail(ErrorKind::kVersion, "checkpoint parameters do not match its configuration: " +
                                  std::string(e.what_without_backtrace()));
  }
  model->eval();
  if (info_out != nullptr) *info_out = info;
  return model;
}

void load_optimizer_state(const fs::path& path, torch::optim::Optimizer& optimizer) {
  auto archive = open_archive(path);
  InputArchive optim_archive;
  if (!archive.try_read("optimizer", optim_archive)) {
    fail(ErrorKind::kData, path.string() + " carries no optimiser state");
  }
  optimizer.load(optim_archive);
}

}  // namespace cmi
