// Command-line driver: corpus generation, training, evaluation, ablation
// sweeps, embedding export, and parameter accounting.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "wavesp/checkpoint.hpp"
#include "wavesp/config.hpp"
#include "wavesp/data.hpp"
#include "wavesp/model.hpp"
#include "wavesp/trainer.hpp"

namespace fs = std::filesystem;
using namespace wavesp;

namespace {

ExperimentConfig load_with_overrides(const std::string& config_path, bool have_seed,
                                     uint64_t seed) {
  ExperimentConfig cfg = load_config(config_path);
  if (have_seed) cfg.seed = seed;
  return cfg;
}

void print_report(const std::string& name, const EvalReport& r) {
  std::cout << format_report_table(name, r) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wavesp: wavelet-sparse prompt tuning for speech deepfake detection"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  uint64_t seed_override = 0;
  bool have_seed = false;
  auto add_common = [&](CLI::App* cmd, bool need_config = true) {
    auto* opt = cmd->add_option("--config", config_path, "experiment config file");
    if (need_config) opt->required();
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed_override, "override [run] seed")
        ->each([&](const std::string&) { have_seed = true; });
  };

  auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic corpus");
  add_common(gen);

  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_common(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ckpt_path, split = "eval";
  eval_cmd->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  eval_cmd->add_option("--split", split, "dev or eval split");
  add_common(eval_cmd, /*need_config=*/false);

  auto* ablate_cmd = app.add_subcommand("ablate", "run one ablation axis");
  std::string axis;
  std::string values_csv;
  ablate_cmd->add_option("--axis", axis, "component | filters | rho | m")->required();
  ablate_cmd->add_option("--values", values_csv, "comma-separated axis values")
      ->required();
  add_common(ablate_cmd);

  auto* emb_cmd = app.add_subcommand("export-emb", "export pooled embeddings");
  std::string emb_ckpt, emb_split = "eval";
  emb_cmd->add_option("--ckpt", emb_ckpt, "checkpoint file")->required();
  emb_cmd->add_option("--split", emb_split, "dev or eval split");
  add_common(emb_cmd, /*need_config=*/false);

  auto* params_cmd = app.add_subcommand("params", "report parameter counts");
  add_common(params_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      ExperimentConfig cfg = load_with_overrides(config_path, have_seed, seed_override);
      const auto manifest = synth_corpus(cfg.corpus, out_dir);
      std::cout << "wrote " << manifest.size() << " utterances under " << out_dir
                << " (manifest.txt)\n";
    } else if (train_cmd->parsed()) {
      ExperimentConfig cfg = load_with_overrides(config_path, have_seed, seed_override);
      TrainResult tr = train(cfg, out_dir);
      const ParamCount pc = count_params(cfg);
      std::cout << "trainable params: " << pc.trainable << " / " << pc.total << "  "
                << format_param_count(pc) << "\n";
      std::cout << "stopped after epoch " << tr.stopped_epoch << "; best dev EER "
                << tr.best.best_dev_eer << " at epoch " << tr.best.best_epoch << "\n";
      std::cout << "checkpoint: " << (fs::path(out_dir) / "checkpoint.bin").string()
                << "\n";
      WaveSPNet net = restore_model(tr.best);
      Dataset ds = load_dataset(cfg);
      EvalOutput dev = evaluate(net, ds, "dev", out_dir);
      print_report("dev", dev.report);
      if (!ds.eval.empty()) {
        EvalOutput ev = evaluate(net, ds, "eval", out_dir);
        print_report("eval", ev.report);
      }
    } else if (eval_cmd->parsed()) {
      Checkpoint ck = Checkpoint::load(ckpt_path);
      WaveSPNet net = restore_model(ck);
      if (!config_path.empty()) net.cfg.data = load_config(config_path).data;
      Dataset ds = load_dataset(net.cfg);
      EvalOutput out = evaluate(net, ds, split, out_dir);
      print_report(split, out.report);
    } else if (ablate_cmd->parsed()) {
      ExperimentConfig cfg = load_with_overrides(config_path, have_seed, seed_override);
      std::vector<std::string> values;
      std::istringstream is(values_csv);
      std::string tok;
      while (std::getline(is, tok, ','))
        if (!tok.empty()) values.push_back(tok);
      const auto runs = ablate(cfg, axis, values, out_dir);
      for (const AblationRun& r : runs) print_report(axis + "=" + r.value, r.report);
    } else if (emb_cmd->parsed()) {
      Checkpoint ck = Checkpoint::load(emb_ckpt);
      WaveSPNet net = restore_model(ck);
      if (!config_path.empty()) net.cfg.data = load_config(config_path).data;
      Dataset ds = load_dataset(net.cfg);
      fs::create_directories(out_dir);
      const std::string path =
          (fs::path(out_dir) / ("embeddings_" + emb_split + ".txt")).string();
      export_embeddings(net, ds, emb_split, path);
      std::cout << "wrote " << path << "\n";
    } else if (params_cmd->parsed()) {
      ExperimentConfig cfg = load_with_overrides(config_path, have_seed, seed_override);
      const ParamCount pc = count_params(cfg);
      std::printf("trainable %lld\n", pc.trainable);
      std::printf("total     %lld\n", pc.total);
      std::printf("report    %s\n", format_param_count(pc).c_str());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
