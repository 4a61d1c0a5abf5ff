// cmi: synthetic data, training, prediction, evaluation and ablation runs for
// the cascaded mutual-information RGB-D saliency model.

#include <torch/torch.h>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <regex>
#include <string>

#include "CLI11.hpp"
#include "cmi/ablation.hpp"
#include "cmi/checkpoint.hpp"
#include "cmi/error.hpp"
#include "cmi/evaluate.hpp"
#include "cmi/synth.hpp"
#include "cmi/train.hpp"

namespace fs = std::filesystem;
using cmi::ErrorKind;

namespace {

enum ExitCode : int {
  kOk = 0,
  kOther = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericError = 4,
  kPartialEval = 5,
  kVersionError = 6,
  kResourceError = 7,
};

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kContract: return kConfigError;
    case ErrorKind::kData:
    case ErrorKind::kIo: return kDataError;
    case ErrorKind::kNumeric: return kNumericError;
    case ErrorKind::kVersion: return kVersionError;
    case ErrorKind::kResource: return kResourceError;
  }
  return kOther;
}

std::array<int64_t, 2> parse_size(const std::string& s) {
  static const std::regex pattern(R"((\d+)(?:[xX,](\d+))?)");
  std::smatch m;
  if (!std::regex_match(s, m, pattern)) {
    cmi::fail(ErrorKind::kConfig, "size must look like 64 or 64x48, got '" + s + "'");
  }
  const int64_t h = std::stoll(m[1]);
  const int64_t w = m[2].matched ? std::stoll(m[2]) : h;
  return {h, w};
}

void print_summary(const cmi::EvalReport& r) {
  std::cout << "scored " << r.scored << ", failed " << r.failed << "\n"
            << std::fixed << std::setprecision(3) << "  S " << r.s_measure << "  F "
            << (r.mean_f ? std::to_string(*r.mean_f) : std::string("n/a")) << "  E "
            << r.mean_e << "  MAE " << r.mae;
  if (r.cosine_diag) std::cout << "  cos " << *r.cosine_diag;
  std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascaded mutual-information RGB-D saliency toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic RGB-D saliency dataset");
  int64_t synth_n = 8;
  std::string synth_size = "64";
  int64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--n", synth_n, "Number of scenes")->check(CLI::PositiveNumber);
  synth->add_option("--size", synth_size, "Scene size, H or HxW");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a model");
  std::string train_config, train_manifest, train_out, train_resume, train_ablation;
  std::optional<int64_t> train_epochs, train_max_steps, train_seed;
  std::optional<double> train_lambda, train_l1, train_l2, train_l3;
  train->add_option("--config", train_config, "Flat JSON config (TrainConfig keys)")->required();
  train->add_option("--manifest", train_manifest, "Training manifest (JSON lines)")->required();
  train->add_option("--out", train_out, "Output directory for checkpoint and loss log")->required();
  train->add_option("--resume", train_resume, "Continue from this checkpoint");
  train->add_option("--ablation", train_ablation, "full|base|ss|rgb_only|early_fusion|pf_only");
  train->add_option("--epochs", train_epochs);
  train->add_option("--max-steps", train_max_steps);
  train->add_option("--seed", train_seed);
  train->add_option("--lambda", train_lambda, "MI regularizer weight");
  train->add_option("--lambda1", train_l1, "Weight of the fused-branch loss");
  train->add_option("--lambda2", train_l2, "Weight of the RGB-branch loss");
  train->add_option("--lambda3", train_l3, "Weight of the depth-branch loss");

  // predict
  auto* pred = app.add_subcommand("predict", "Write saliency maps for a manifest");
  std::string pred_ckpt, pred_manifest, pred_out;
  pred->add_option("--ckpt", pred_ckpt)->required();
  pred->add_option("--manifest", pred_manifest)->required();
  pred->add_option("--out", pred_out)->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Score predictions or a checkpoint");
  std::string eval_manifest, eval_pred_dir, eval_ckpt, eval_report;
  eval->add_option("--manifest", eval_manifest)->required();
  auto* pd = eval->add_option("--pred-dir", eval_pred_dir, "Directory of <id>.png predictions");
  auto* ck = eval->add_option("--ckpt", eval_ckpt, "Checkpoint to run");
  pd->excludes(ck);
  eval->add_option("--report", eval_report, "Output JSON report")->required();

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train the ablation grid and compare");
  std::string ablate_config, ablate_manifest, ablate_report, ablate_work;
  ablate->add_option("--config", ablate_config)->required();
  ablate->add_option("--manifest", ablate_manifest)->required();
  ablate->add_option("--report", ablate_report)->required();
  ablate->add_option("--work-dir", ablate_work, "Keep per-variant checkpoints here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*synth) {
      auto manifest = cmi::synth_generate(synth_n, parse_size(synth_size), synth_seed, synth_out);
      std::cout << "wrote " << manifest.size() << " scenes to " << synth_out << "/manifest.jsonl\n";
      return kOk;
    }

    if (*train) {
      auto cfg = cmi::load_train_config(train_config);
      if (!train_ablation.empty()) cfg.ablation = cmi::variant_from_string(train_ablation);
      if (train_epochs) cfg.epochs = *train_epochs;
      if (train_max_steps) cfg.max_steps = *train_max_steps;
      if (train_seed) cfg.model.seed = *train_seed;
      if (train_lambda) cfg.model.mi_weight = *train_lambda;
      if (train_l1) cfg.model.loss_weights[0] = *train_l1;
      if (train_l2) cfg.model.loss_weights[1] = *train_l2;
      if (train_l3) cfg.model.loss_weights[2] = *train_l3;
      auto manifest = cmi::parse_manifest(train_manifest);
      std::optional<fs::path> resume;
      if (!train_resume.empty()) resume = train_resume;
      auto result = cmi::train(cfg, manifest, train_out, resume);
      for (const auto& e : result.log.epochs) {
        std::cout << "epoch " << e.epoch << " lr " << e.lr << " loss " << e.mean_loss.total
                  << " mi " << e.mean_loss.mi_total;
        if (e.cosine_diag) std::cout << " cos " << *e.cosine_diag;
        std::cout << "\n";
      }
      std::cout << "checkpoint: " << result.checkpoint.string() << "\n";
      return kOk;
    }

    if (*pred) {
      auto manifest = cmi::parse_manifest(pred_manifest);
      auto files = cmi::predict(pred_ckpt, manifest, pred_out);
      std::cout << "wrote " << files.size() << " maps to " << pred_out << "\n";
      return kOk;
    }

    if (*eval) {
      if (eval_pred_dir.empty() == eval_ckpt.empty()) {
        cmi::fail(ErrorKind::kConfig, "eval needs exactly one of --pred-dir or --ckpt");
      }
      // Prediction files are checked per image, not up front.
      auto manifest = cmi::parse_manifest(eval_manifest, !eval_ckpt.empty());
      cmi::EvalReport report;
      if (!eval_pred_dir.empty()) {
        report = cmi::evaluate_predictions(manifest, eval_pred_dir);
      } else {
        auto model = cmi::load_model(eval_ckpt);
        report = cmi::evaluate_model(model, manifest);
      }
      cmi::write_report(report, eval_report);
      print_summary(report);
      return report.partial() ? kPartialEval : kOk;
    }

    if (*ablate) {
      auto cfg = cmi::load_train_config(ablate_config);
      auto manifest = cmi::parse_manifest(ablate_manifest);
      auto rows = cmi::run_ablation_suite(cfg, manifest, ablate_work);
      std::ofstream out(ablate_report);
      if (!out) cmi::fail(ErrorKind::kIo, "cannot write " + ablate_report);
      out << cmi::to_json(rows).dump(2) << "\n";
      for (const auto& r : rows) {
        std::cout << std::left << std::setw(6) << r.name << " ";
        print_summary(r.train_report);
      }
      return kOk;
    }
  } catch (const cmi::Error& e) {
    std::cerr << "error (" << cmi::to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const c10::Error& e) {
    std::cerr << "error (torch): " << e.what_without_backtrace() << "\n";
    return kOther;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
  return kOther;
}
