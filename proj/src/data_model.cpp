#include "cmi/data_model.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "cmi/error.hpp"

namespace cmi {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Backbone b) {
  return b == Backbone::kTiny ? "tiny" : "resnet50";
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kBase: return "base";
    case Variant::kSs: return "ss";
    case Variant::kRgbOnly: return "rgb_only";
    case Variant::kEarlyFusion: return "early_fusion";
    case Variant::kPfOnly: return "pf_only";
  }
  return "full";
}

Backbone backbone_from_string(const std::string& s) {
  if (s == "tiny") return Backbone::kTiny;
  if (s == "resnet50" || s == "resnet50-shaped") return Backbone::kResNet50;
  fail(ErrorKind::kConfig, "unknown backbone '" + s + "' (expected tiny or resnet50)");
}

Variant variant_from_string(const std::string& s) {
  for (auto v : {Variant::kFull, Variant::kBase, Variant::kSs, Variant::kRgbOnly,
                 Variant::kEarlyFusion, Variant::kPfOnly}) {
    if (to_string(v) == s) return v;
  }
  fail(ErrorKind::kConfig, "unknown ablation '" + s + "'");
}

bool has_embeddings(Variant v) {
  return v == Variant::kFull || v == Variant::kSs || v == Variant::kPfOnly;
}

bool is_single_stream(Variant v) {
  return v == Variant::kRgbOnly || v == Variant::kEarlyFusion;
}

void ModelConfig::validate() const {
  auto cfg_error = [](const std::string& m) { fail(ErrorKind::kConfig, m); };
  for (auto w : stage_channels) {
    if (w <= 0) cfg_error("stage_channels must be positive");
  }
  if (backbone == Backbone::kResNet50 &&
      stage_channels != std::array<int64_t, 4>{256, 512, 1024, 2048}) {
    cfg_error("resnet50 backbone requires stage_channels (256, 512, 1024, 2048)");
  }
  if (stem_channels <= 0) cfg_error("stem_channels must be positive");
  if (reduced_channels <= 0) cfg_error("reduced_channels must be positive");
  if (embed_dim < 2) cfg_error("embed_dim must be >= 2");
  for (auto s : input_size) {
    if (s <= 0 || s % 32 != 0) {
      cfg_error("input_size dimensions must be positive multiples of 32, got " +
                std::to_string(input_size[0]) + "x" + std::to_string(input_size[1]));
    }
  }
  for (auto w : loss_weights) {
    if (!(w >= 0.0)) cfg_error("loss_weights must be non-negative");
  }
  if (!(mi_weight >= 0.0)) cfg_error("mi_weight must be non-negative");
  if (fusion_level < 1 || fusion_level > 4) cfg_error("fusion_level must be in 1..4");
  if (aspp_dilations.empty()) cfg_error("aspp_dilations must not be empty");
  for (auto d : aspp_dilations) {
    if (d <= 0) cfg_error("aspp_dilations must be positive");
  }
  if (aspp_branch_channels <= 0 || aspp_out_channels <= 0) {
    cfg_error("aspp channel widths must be positive");
  }
  if (attention_max_positions <= 0) cfg_error("attention_max_positions must be positive");
}

int64_t ModelConfig::refined_channels(Variant v) const {
  const int64_t raw = 4 * reduced_channels;
  return has_embeddings(v) ? raw + embed_dim : raw;
}

json to_json(const ModelConfig& cfg) {
  return json{
      {"backbone", to_string(cfg.backbone)},
      {"stage_channels", cfg.stage_channels},
      {"stem_channels", cfg.stem_channels},
      {"reduced_channels", cfg.reduced_channels},
      {"embed_dim", cfg.embed_dim},
      {"input_size", cfg.input_size},
      {"loss_weights", cfg.loss_weights},
      {"mi_weight", cfg.mi_weight},
      {"seed", cfg.seed},
      {"fusion_level", cfg.fusion_level},
      {"aspp_dilations", cfg.aspp_dilations},
      {"aspp_branch_channels", cfg.aspp_branch_channels},
      {"aspp_out_channels", cfg.aspp_out_channels},
      {"aspp_dense", cfg.aspp_dense},
      {"attention_max_positions", cfg.attention_max_positions},
      {"attention_scale_init", cfg.attention_scale_init},
      {"pretrained_path", cfg.pretrained_path},
  };
}

void merge_json(const json& j, ModelConfig& cfg) {
  try {
    if (j.contains("backbone")) cfg.backbone = backbone_from_string(j["backbone"].get<std::string>());
    if (j.contains("stage_channels")) {
      cfg.stage_channels = j["stage_channels"].get<std::array<int64_t, 4>>();
    } else if (j.contains("backbone") && cfg.backbone == Backbone::kTiny &&
               cfg.stage_channels == std::array<int64_t, 4>{256, 512, 1024, 2048}) {
      cfg.stage_channels = {16, 32, 48, 64};
    }
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    get("stem_channels", cfg.stem_channels);
    get("reduced_channels", cfg.reduced_channels);
    get("embed_dim", cfg.embed_dim);
    get("input_size", cfg.input_size);
    get("loss_weights", cfg.loss_weights);
    get("mi_weight", cfg.mi_weight);
    get("seed", cfg.seed);
    get("fusion_level", cfg.fusion_level);
    get("aspp_dilations", cfg.aspp_dilations);
    get("aspp_branch_channels", cfg.aspp_branch_channels);
    get("aspp_out_channels", cfg.aspp_out_channels);
    get("aspp_dense", cfg.aspp_dense);
    get("attention_max_positions", cfg.attention_max_positions);
    get("attention_scale_init", cfg.attention_scale_init);
    get("pretrained_path", cfg.pretrained_path);
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, std::string("bad model config value: ") + e.what());
  }
}

DatasetManifest parse_manifest(const fs::path& path, bool check_files) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kData, "cannot open manifest " + path.string());
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");

  auto resolve = [&](const std::string& p) {
    fs::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };

  DatasetManifest manifest;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::kData, where + ": malformed record: " + e.what());
    }
    if (!rec.is_object()) fail(ErrorKind::kData, where + ": record is not an object");
    auto field = [&](const char* key) -> std::string {
      if (!rec.contains(key) || !rec[key].is_string()) {
        fail(ErrorKind::kData, where + ": missing field '" + key + "'");
      }
      return rec[key].get<std::string>();
    };
    ManifestEntry entry;
    entry.rgb_path = resolve(field("rgb"));
    entry.depth_path = resolve(field("depth"));
    entry.id = field("id");
    if (rec.contains("gt") && !rec["gt"].is_null()) entry.gt_path = resolve(field("gt"));
    if (!seen.insert(entry.id).second) {
      fail(ErrorKind::kData, where + ": duplicate id '" + entry.id + "'");
    }
    if (check_files) {
      for (const auto* p : {&entry.rgb_path, &entry.depth_path}) {
        if (!fs::exists(*p)) fail(ErrorKind::kData, where + ": file not found: " + p->string());
      }
      if (entry.gt_path && !fs::exists(*entry.gt_path)) {
        fail(ErrorKind::kData, where + ": file not found: " + entry.gt_path->string());
      }
    }
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write manifest " + path.string());
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  auto rel = [&](const fs::path& p) { return p.lexically_relative(base).generic_string(); };
  for (const auto& e : manifest.entries) {
    json rec{{"id", e.id}, {"rgb", rel(e.rgb_path)}, {"depth", rel(e.depth_path)}};
    if (e.gt_path) rec["gt"] = rel(*e.gt_path);
    out << rec.dump() << '\n';
  }
  if (!out) fail(ErrorKind::kIo, "failed writing manifest " + path.string());
}

}  // namespace cmi
