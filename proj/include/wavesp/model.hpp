#pragma once

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "wavesp/backbone.hpp"
#include "wavesp/config.hpp"
#include "wavesp/data.hpp"
#include "wavesp/ssm.hpp"
#include "wavesp/wavelet.hpp"

namespace wavesp {

enum class Mode { kTrain, kEval };

struct ForwardResult {
  Tensor logits;  // (1, 2)
  Tensor pooled;  // (1, d_model)
  double score;   // bonafide minus spoof logit
};

// The assembled detector: frozen encoder, learnable prompts and filter bank,
// selective-SSM classification head.
struct WaveSPNet {
  ExperimentConfig cfg;
  EncoderState encoder;
  PromptSet prompts;
  FilterBank bank;
  SparsifyConfig sparsify;
  Classifier classifier;

  static WaveSPNet build(const ExperimentConfig& cfg) {
    cfg.validate();
    WaveSPNet net;
    net.cfg = cfg;
    net.encoder = EncoderState::init(cfg.encoder);
    RngStream prompt_rng(cfg.seed, "prompts");
    net.prompts = PromptSet::init(cfg.encoder.layers, cfg.p, cfg.m, cfg.encoder.d,
                                  cfg.variant, prompt_rng);
    // Variants that never touch the wavelet path keep the bank frozen so the
    // trainable set holds only parameters the forward pass can reach.
    net.bank = FilterBank::init(cfg.filter_family,
                                cfg.filter_learnable && variant_uses_wavelet(cfg.variant));
    net.sparsify.rho = cfg.rho;
    net.sparsify.enabled = true;
    RngStream cls_rng(cfg.seed, "classifier");
    net.classifier = Classifier::init(cfg.classifier, cfg.encoder.d, cls_rng);
    return net;
  }

  ForwardResult forward(const Tensor& features, Mode mode, RngContext& rng) const {
    const bool train = mode == Mode::kTrain;
    Tensor encoded =
        encode_with_prompts(features, encoder, prompts, bank, sparsify, train, rng,
                            cfg.dropout, cfg.ablation);
    ClassifierOutput out =
        classify(encoded, classifier, cfg.dropout, &rng.stream("dropout"), train);
    return {out.logits, out.pooled, detection_score(out.logits)};
  }
};

// Exactly the prompt tokens, the filter coefficients when learnable, and the
// classifier parameters. Never anything from the encoder. Order is fixed and
// shared with the checkpoint layout.
inline std::vector<std::pair<std::string, Tensor>> named_trainable(
    const WaveSPNet& net) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (size_t k = 0; k < net.prompts.layers.size(); ++k)
    out.emplace_back("prompt." + std::to_string(k), net.prompts.layers[k]);
  if (net.bank.learnable) {
    out.emplace_back("bank.f0", net.bank.f0);
    out.emplace_back("bank.f1", net.bank.f1);
    out.emplace_back("bank.h0", net.bank.h0);
    out.emplace_back("bank.h1", net.bank.h1);
  }
  const Classifier& c = net.classifier;
  if (c.has_proj()) {
    out.emplace_back("cls.proj.w", c.in_w);
    out.emplace_back("cls.proj.b", c.in_b);
  }
  for (size_t b = 0; b < c.blocks.size(); ++b) {
    const std::string base = "cls.block." + std::to_string(b) + ".";
    const BidirBlock& blk = c.blocks[b];
    out.emplace_back(base + "ln.g", blk.ln_g);
    out.emplace_back(base + "ln.b", blk.ln_b);
    const char* dirs[2] = {"fwd.", "bwd."};
    const SSMBlockParams* ps[2] = {&blk.fwd, &blk.bwd};
    for (int dgi = 0; dgi < 2; ++dgi) {
      const SSMBlockParams& p = *ps[dgi];
      const std::string d = base + dirs[dgi];
      out.emplace_back(d + "A", p.A);
      out.emplace_back(d + "w_b", p.w_b);
      out.emplace_back(d + "w_c", p.w_c);
      out.emplace_back(d + "w_delta", p.w_delta);
      out.emplace_back(d + "b_delta", p.b_delta);
      out.emplace_back(d + "d_skip", p.d_skip);
      out.emplace_back(d + "w_in", p.w_in);
      out.emplace_back(d + "b_in", p.b_in);
      out.emplace_back(d + "w_out", p.w_out);
      out.emplace_back(d + "b_out", p.b_out);
    }
  }
  out.emplace_back("cls.lnf.g", c.lnf_g);
  out.emplace_back("cls.lnf.b", c.lnf_b);
  out.emplace_back("cls.head.w", c.head_w);
  out.emplace_back("cls.head.b", c.head_b);
  return out;
}

inline std::vector<Tensor> trainable_parameters(const WaveSPNet& net) {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_trainable(net)) out.push_back(t);
  return out;
}

// ---------------------------------------------------------------------------
// Parameter accounting
// ---------------------------------------------------------------------------

struct ParamCount {
  long long trainable = 0;
  long long total = 0;
  double percent = 0.0;  // 100 * trainable / total
};

inline long long encoder_param_count(const EncoderConfig& e) {
  const long long d = e.d, ff = e.ff;
  const long long per_layer = 4 * d * d + 4 * d  // attention weights + biases
                              + 2 * 2 * d        // two layer norms
                              + d * ff + ff + ff * d + d;
  return per_layer * e.layers;
}

inline long long classifier_param_count(const ClassifierConfig& c, int d_in) {
  const long long dm = c.d_model > 0 ? c.d_model : d_in;
  const long long n = c.d_state;
  long long count = 0;
  if (dm != d_in) count += static_cast<long long>(d_in) * dm + dm;  // projection
  const long long per_dir = dm * n      // A
                            + 2 * dm * n  // w_b, w_c
                            + dm * dm + dm  // w_delta, b_delta
                            + dm            // d_skip
                            + 2 * (dm * dm + dm);  // in/out mixes
  count += c.blocks * (2 * dm + 2 * per_dir);  // block norm + both directions
  count += 2 * dm;                             // final norm
  count += dm * c.classes + c.classes;         // head
  return count;
}

// Analytic count from the config alone; lets the full-scale nominal config be
// reported without allocating a 300M-parameter model.
inline ParamCount count_params(const ExperimentConfig& cfg) {
  ParamCount pc;
  pc.trainable = static_cast<long long>(cfg.encoder.layers) * cfg.p * cfg.encoder.d;
  if (cfg.filter_learnable)
    pc.trainable += 4 * (cfg.filter_family == FilterFamily::kHaar ? 2LL : 4LL);
  pc.trainable += classifier_param_count(cfg.classifier, cfg.encoder.d);
  long long frozen = encoder_param_count(cfg.encoder);
  frozen += static_cast<long long>(kFrontendBins) * cfg.encoder.d;  // extractor
  pc.total = pc.trainable + frozen;
  pc.percent = 100.0 * static_cast<double>(pc.trainable) /
               static_cast<double>(pc.total);
  return pc;
}

// Count by summing the actually allocated tensors.
inline ParamCount count_params(const WaveSPNet& net, const FrontEnd& frontend) {
  ParamCount pc;
  for (const Tensor& t : trainable_parameters(net))
    pc.trainable += static_cast<long long>(t.size());
  long long frozen = 0;
  for (const Tensor& t : net.encoder.all_params())
    frozen += static_cast<long long>(t.size());
  frozen += static_cast<long long>(frontend.projection().size());
  pc.total = pc.trainable + frozen;
  pc.percent = 100.0 * static_cast<double>(pc.trainable) /
               static_cast<double>(pc.total);
  return pc;
}

// Table-style rendering, e.g. "4.146M (1.298%)".
inline std::string format_param_count(const ParamCount& pc) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3fM (%.3f%%)",
                static_cast<double>(pc.trainable) / 1e6, pc.percent);
  return buf;
}

}  // namespace wavesp
