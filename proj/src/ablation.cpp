#include "cmi/ablation.hpp"

namespace cmi {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<AblationVariant> ablation_variants(const TrainConfig& base) {
  auto with = [&](std::string name, auto edit) {
    AblationVariant v{std::move(name), base};
    v.config.ablation = Variant::kFull;
    edit(v.config);
    return v;
  };
  return {
      with("full", [](TrainConfig&) {}),
      with("W0", [](TrainConfig& c) { c.model.mi_weight = 0.0; }),
      with("W1", [](TrainConfig& c) { c.model.mi_weight = 1.0; }),
      with("K3", [](TrainConfig& c) { c.model.embed_dim = 3; }),
      with("K32", [](TrainConfig& c) { c.model.embed_dim = 32; }),
      with("base", [](TrainConfig& c) { c.ablation = Variant::kBase; }),
      with("ss", [](TrainConfig& c) { c.ablation = Variant::kSs; }),
  };
}

std::vector<AblationRow> run_ablation_suite(const TrainConfig& base, const DatasetManifest& manifest,
                                            const fs::path& work_dir) {
  base.validate();
  auto data = load_training_set(manifest, base.model.input_size);
  std::vector<AblationRow> rows;
  for (auto& v : ablation_variants(base)) {
    v.config.checkpoint_dir = work_dir.empty() ? std::string() : (work_dir / v.name).string();
    Trainer trainer(v.config, data);
    trainer.run();
    AblationRow row;
    row.name = v.name;
    row.variant = v.config.ablation;
    row.mi_weight = has_embeddings(v.config.ablation) ? v.config.model.mi_weight : 0.0;
    row.embed_dim = v.config.model.embed_dim;
    row.train_report = evaluate_model(trainer.model(), data);
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const std::vector<AblationRow>& rows) {
  json table = json::array();
  for (const auto& r : rows) {
    const auto& rep = r.train_report;
    table.push_back(json{
        {"variant", r.name},
        {"ablation", to_string(r.variant)},
        {"lambda", r.mi_weight},
        {"K", r.embed_dim},
        {"mae", rep.mae},
        {"mean_f", rep.mean_f ? json(*rep.mean_f) : json(nullptr)},
        {"mean_e", rep.mean_e},
        {"s_measure", rep.s_measure},
        {"cosine_diag", rep.cosine_diag ? json(*rep.cosine_diag) : json(nullptr)},
    });
  }
  return json{{"variants", table}};
}

}  // namespace cmi
