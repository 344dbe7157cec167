#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "wavesp/checkpoint.hpp"
#include "wavesp/config.hpp"
#include "wavesp/data.hpp"
#include "wavesp/metrics.hpp"
#include "wavesp/model.hpp"
#include "wavesp/optimizer.hpp"

namespace wavesp {

// Stops after `patience` consecutive epochs without a dev-loss improvement
// of more than min_delta.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience, double min_delta = 1e-6)
      : patience_(patience), min_delta_(min_delta) {}

  // Feed one epoch's dev loss; returns true when training should stop.
  bool update(double dev_loss) {
    if (dev_loss < best_ - min_delta_) {
      best_ = dev_loss;
      streak_ = 0;
      return false;
    }
    return ++streak_ >= patience_;
  }

  double best() const { return best_; }
  int streak() const { return streak_; }

 private:
  int patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  int streak_ = 0;
};

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

struct LoadedUtterance {
  std::string id;
  Label label = Label::kBonafide;
  std::vector<Tensor> chunks;  // frozen feature matrices, one per audio chunk
};

struct Dataset {
  std::vector<LoadedUtterance> train, dev, eval;

  const std::vector<LoadedUtterance>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "dev") return dev;
    if (name == "eval") return eval;
    throw std::invalid_argument("unknown split '" + name + "'");
  }
};

// Reads the manifest, chunks every waveform, and caches frontend features.
// Utterances are ordered by id within each split.
inline Dataset load_dataset(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  if (cfg.data.manifest.empty() || !fs::exists(cfg.data.manifest))
    throw std::runtime_error("corpus manifest not found: '" + cfg.data.manifest + "'");
  const fs::path base = fs::path(cfg.data.manifest).parent_path();
  FrontEnd frontend(cfg.encoder.d, cfg.data.frontend_seed);
  Dataset ds;
  for (const ManifestEntry& e : read_manifest(cfg.data.manifest)) {
    LoadedUtterance u;
    u.id = e.utt_id;
    u.label = e.label;
    const Waveform w = read_wav((base / e.wav_path).string());
    for (const Waveform& chunk : chunk_audio(w, cfg.data.chunk_seconds))
      u.chunks.push_back(frontend.features(chunk));
    std::vector<LoadedUtterance>* split = nullptr;
    if (e.split == "train") split = &ds.train;
    else if (e.split == "dev") split = &ds.dev;
    else if (e.split == "eval") split = &ds.eval;
    else throw std::runtime_error("manifest: unknown split '" + e.split + "'");
    split->push_back(std::move(u));
  }
  auto by_id = [](const LoadedUtterance& a, const LoadedUtterance& b) {
    return a.id < b.id;
  };
  std::sort(ds.train.begin(), ds.train.end(), by_id);
  std::sort(ds.dev.begin(), ds.dev.end(), by_id);
  std::sort(ds.eval.begin(), ds.eval.end(), by_id);
  return ds;
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

// Eval-mode utterance scores: each utterance's score is the mean of its
// chunk scores; order follows the (id-sorted) split.
inline ScoreSet score_split(const WaveSPNet& net,
                            const std::vector<LoadedUtterance>& utts,
                            RngContext& rng) {
  NoGradGuard ng;
  ScoreSet scores;
  for (const LoadedUtterance& u : utts) {
    double sum = 0.0;
    for (const Tensor& chunk : u.chunks)
      sum += net.forward(chunk, Mode::kEval, rng).score;
    scores.entries.push_back(
        {u.id, sum / static_cast<double>(u.chunks.size()), u.label});
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_eer = 0.0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> log;
  int stopped_epoch = 0;
};

namespace detail {

inline std::string format_log_line(const EpochLog& l) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "epoch %d train_loss %.17g dev_loss %.17g dev_eer %.17g",
                l.epoch, l.train_loss, l.dev_loss, l.dev_eer);
  return buf;
}

}  // namespace detail

// Cross-entropy (+ optional PR penalty) training with Adam over the
// trainable set only, per-epoch dev evaluation, early stopping on dev loss,
// and best checkpoint selected by lowest dev EER.
inline TrainResult train(const ExperimentConfig& cfg, const std::string& out_dir = "",
                         const Dataset* preloaded = nullptr) {
  cfg.validate();
  Dataset local;
  if (!preloaded) {
    local = load_dataset(cfg);
    preloaded = &local;
  }
  const Dataset& ds = *preloaded;
  check_arg(!ds.train.empty() && !ds.dev.empty(),
            "train: corpus must provide train and dev splits");

  WaveSPNet net = WaveSPNet::build(cfg);
  Adam adam(trainable_parameters(net), cfg.lr);
  RngContext rng(cfg.seed);
  RngStream& shuffle_rng = rng.stream("shuffle");

  std::vector<std::pair<int, int>> items;  // (utterance, chunk)
  for (size_t ui = 0; ui < ds.train.size(); ++ui)
    for (size_t ci = 0; ci < ds.train[ui].chunks.size(); ++ci)
      items.emplace_back(static_cast<int>(ui), static_cast<int>(ci));

  TrainResult result;
  result.best.best_dev_eer = std::numeric_limits<double>::infinity();
  EarlyStopping stopper(cfg.patience);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    // Fisher-Yates with the dedicated shuffle stream.
    for (size_t i = items.size(); i > 1; --i)
      std::swap(items[i - 1],
                items[static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i) - 1))]);

    double epoch_loss_sum = 0.0;
    size_t epoch_chunks = 0;
    for (size_t start = 0; start < items.size(); start += static_cast<size_t>(cfg.batch)) {
      const size_t end = std::min(items.size(), start + static_cast<size_t>(cfg.batch));
      adam.zero_grad();
      Tensor batch_loss;
      for (size_t i = start; i < end; ++i) {
        const LoadedUtterance& u = ds.train[static_cast<size_t>(items[i].first)];
        ForwardResult fwd =
            net.forward(u.chunks[static_cast<size_t>(items[i].second)], Mode::kTrain, rng);
        Tensor ce = cross_entropy_logits(fwd.logits,
                                         u.label == Label::kBonafide ? 0 : 1);
        batch_loss = batch_loss.defined() ? add(batch_loss, ce) : ce;
      }
      batch_loss = scale(batch_loss, 1.0 / static_cast<double>(end - start));
      if (cfg.lambda_pr > 0.0)
        batch_loss = add(batch_loss, scale(pr_penalty(net.bank), cfg.lambda_pr));
      if (!batch_loss.all_finite())
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                           ", batch starting at item " + std::to_string(start) +
                           "; first non-finite op: '" + first_nonfinite_op(batch_loss) +
                           "'");
      batch_loss.backward();
      adam.step();
      epoch_loss_sum += batch_loss.item() * static_cast<double>(end - start);
      epoch_chunks += end - start;
    }

    // Dev pass: loss over chunks, EER over utterance-level scores.
    double dev_loss_sum = 0.0;
    size_t dev_chunks = 0;
    {
      NoGradGuard ng;
      for (const LoadedUtterance& u : ds.dev) {
        for (const Tensor& chunk : u.chunks) {
          ForwardResult fwd = net.forward(chunk, Mode::kEval, rng);
          dev_loss_sum += cross_entropy_logits(fwd.logits,
                                               u.label == Label::kBonafide ? 0 : 1)
                              .item();
          ++dev_chunks;
        }
      }
    }
    ScoreSet dev_scores = score_split(net, ds.dev, rng);
    const double dev_eer = eer(dev_scores).first;

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss_sum / static_cast<double>(epoch_chunks);
    log.dev_loss = dev_loss_sum / static_cast<double>(dev_chunks);
    log.dev_eer = dev_eer;
    result.log.push_back(log);
    result.stopped_epoch = epoch;

    if (dev_eer < result.best.best_dev_eer) {
      result.best = make_checkpoint(net, &adam, dev_eer, epoch);
    }
    if (stopper.update(log.dev_loss)) break;
  }

  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    result.best.save((fs::path(out_dir) / "checkpoint.bin").string());
    std::ofstream logf((fs::path(out_dir) / "training_log.txt").string(),
                       std::ios::binary);
    for (const EpochLog& l : result.log) logf << detail::format_log_line(l) << '\n';
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalOutput {
  EvalReport report;
  ScoreSet scores;
};

inline std::string format_report_kv(const EvalReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "# wavesp evaluation report (f1 positive class: bonafide)\n"
                "eer = %.6f\n"
                "eer_ci95 = %.6f\n"
                "threshold = %.6f\n"
                "acc = %.6f\n"
                "f1 = %.6f\n"
                "auc = %.6f\n"
                "n_bonafide = %d\n"
                "n_spoof = %d\n",
                r.eer, r.eer_ci_halfwidth, r.threshold, r.acc, r.f1, r.auc, r.n_real,
                r.n_fake);
  return buf;
}

inline std::string format_report_table(const std::string& name, const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%-18s | EER %6.2f%% (+-%5.2f) | ACC %6.2f%% | F1 %6.2f%% | AUC %6.2f%%",
                name.c_str(), 100.0 * r.eer, 100.0 * r.eer_ci_halfwidth, 100.0 * r.acc,
                100.0 * r.f1, 100.0 * r.auc);
  return buf;
}

// Eval-mode scoring of one split; writes the score file and key-value report
// when out_dir is given.
inline EvalOutput evaluate(const WaveSPNet& net, const Dataset& ds,
                           const std::string& split, const std::string& out_dir = "") {
  const auto& utts = ds.split(split);
  if (utts.empty())
    throw std::runtime_error("split '" + split + "' is empty or absent from manifest");
  RngContext rng(net.cfg.seed);
  EvalOutput out;
  out.scores = score_split(net, utts, rng);
  out.report = evaluate_scores(out.scores);
  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    write_scores(out.scores, (fs::path(out_dir) / ("scores_" + split + ".txt")).string());
    std::ofstream rep((fs::path(out_dir) / ("report_" + split + ".txt")).string(),
                      std::ios::binary);
    rep << format_report_kv(out.report);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding export
// ---------------------------------------------------------------------------

// Pooled penultimate representation per utterance (mean over its chunks),
// one line per utterance: "utt_id label v_1 ... v_d".
inline void export_embeddings(const WaveSPNet& net, const Dataset& ds,
                              const std::string& split, const std::string& path) {
  const auto& utts = ds.split(split);
  if (utts.empty())
    throw std::runtime_error("split '" + split + "' is empty or absent from manifest");
  RngContext rng(net.cfg.seed);
  NoGradGuard ng;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open embedding file for writing: " + path);
  char buf[32];
  for (const LoadedUtterance& u : utts) {
    const int d = net.classifier.d_model;
    std::vector<double> pooled(static_cast<size_t>(d), 0.0);
    for (const Tensor& chunk : u.chunks) {
      ForwardResult fwd = net.forward(chunk, Mode::kEval, rng);
      for (int j = 0; j < d; ++j) pooled[static_cast<size_t>(j)] += fwd.pooled.at(j);
    }
    f << u.id << ' ' << label_name(u.label);
    for (int j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof(buf), "%.9e",
                    pooled[static_cast<size_t>(j)] / static_cast<double>(u.chunks.size()));
      f << ' ' << buf;
    }
    f << '\n';
  }
}

// ---------------------------------------------------------------------------
// Ablation sweeps
// ---------------------------------------------------------------------------

struct AblationRun {
  std::string value;
  EvalReport report;
  Checkpoint checkpoint;
};

// Applies one axis value to a base config. The m axis promotes the variant
// to WSPT when m reaches p (all tokens enhanced).
inline ExperimentConfig apply_ablation_value(const ExperimentConfig& base,
                                             const std::string& axis,
                                             const std::string& value) {
  ExperimentConfig cfg = base;
  if (axis == "component") {
    cfg.ablation = ablation_from_name(value);
  } else if (axis == "filters") {
    if (value == "fixed") cfg.filter_learnable = false;
    else if (value == "learnable") cfg.filter_learnable = true;
    else throw std::invalid_argument("ablate: filters value must be fixed|learnable");
  } else if (axis == "rho") {
    const double rho = detail::parse_double("rho", value);
    check_arg(rho > 0.0 && rho <= 1.0, "ablate: rho must lie in (0,1]");
    cfg.rho = rho;
  } else if (axis == "m") {
    const int m = static_cast<int>(detail::parse_int("m", value));
    check_arg(m >= 2 && m <= cfg.p, "ablate: m must lie in {2,...,p}");
    cfg.m = m;
    if (cfg.variant == Variant::kPartialWSPT || cfg.variant == Variant::kWSPT)
      cfg.variant = (m == cfg.p) ? Variant::kWSPT : Variant::kPartialWSPT;
  } else {
    throw std::invalid_argument("ablate: unknown axis '" + axis + "'");
  }
  return cfg;
}

// One full training per value, shared seed and corpus, evaluated on the eval
// split. Writes per-run artifacts plus a comparison table when out_dir given.
inline std::vector<AblationRun> ablate(const ExperimentConfig& base,
                                       const std::string& axis,
                                       const std::vector<std::string>& values,
                                       const std::string& out_dir = "") {
  check_arg(!values.empty(), "ablate: no axis values given");
  const Dataset ds = load_dataset(base);
  std::vector<AblationRun> runs;
  for (const std::string& value : values) {
    ExperimentConfig cfg = apply_ablation_value(base, axis, value);
    std::string run_dir;
    if (!out_dir.empty()) {
      namespace fs = std::filesystem;
      run_dir = (fs::path(out_dir) / (axis + "_" + value)).string();
    }
    TrainResult tr = train(cfg, run_dir, &ds);
    WaveSPNet net = restore_model(tr.best);
    EvalOutput ev = evaluate(net, ds, "eval", run_dir);
    runs.push_back({value, ev.report, std::move(tr.best)});
  }
  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    std::ofstream table((fs::path(out_dir) / ("ablation_" + axis + ".txt")).string(),
                        std::ios::binary);
    table << "# axis: " << axis << " (seed " << base.seed << ")\n";
    for (const AblationRun& r : runs)
      table << format_report_table(axis + "=" + r.value, r.report) << '\n';
  }
  return runs;
}

}  // namespace wavesp
