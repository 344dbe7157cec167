#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wavesp/tensor.hpp"
#include "wavesp/wavelet.hpp"

namespace wavesp {

struct EncoderConfig {
  int layers = 4;
  int d = 64;
  int heads = 4;
  int ff = 128;
  uint64_t seed = 1;

  void validate() const {
    check_arg(layers >= 1, "encoder: layers must be >= 1");
    check_arg(d >= 2 && d % 2 == 0, "encoder: d must be even and >= 2");
    check_arg(heads >= 1 && d % heads == 0, "encoder: d must be divisible by heads");
    check_arg(ff >= 1, "encoder: ff must be >= 1");
  }
};

struct EncoderLayer {
  Tensor ln1_g, ln1_b;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_g, ln2_b;
  Tensor w1, b1, w2, b2;
};

// Frozen stand-in for the XLSR encoder: a pre-norm transformer whose
// parameters are drawn once from the config seed and never require grad.
struct EncoderState {
  EncoderConfig cfg;
  std::vector<EncoderLayer> layers;

  static EncoderState init(const EncoderConfig& cfg) {
    cfg.validate();
    EncoderState enc;
    enc.cfg = cfg;
    RngStream rng(cfg.seed, "backbone");
    auto weight = [&rng](int rows, int cols) {
      double std = std::sqrt(2.0 / (rows + cols));
      return Tensor::randn({rows, cols}, rng, std, false);
    };
    for (int k = 0; k < cfg.layers; ++k) {
      EncoderLayer l;
      l.ln1_g = Tensor::full({cfg.d}, 1.0);
      l.ln1_b = Tensor::zeros({cfg.d});
      l.wq = weight(cfg.d, cfg.d);
      l.bq = Tensor::zeros({cfg.d});
      l.wk = weight(cfg.d, cfg.d);
      l.bk = Tensor::zeros({cfg.d});
      l.wv = weight(cfg.d, cfg.d);
      l.bv = Tensor::zeros({cfg.d});
      l.wo = weight(cfg.d, cfg.d);
      l.bo = Tensor::zeros({cfg.d});
      l.ln2_g = Tensor::full({cfg.d}, 1.0);
      l.ln2_b = Tensor::zeros({cfg.d});
      l.w1 = weight(cfg.d, cfg.ff);
      l.b1 = Tensor::zeros({cfg.ff});
      l.w2 = weight(cfg.ff, cfg.d);
      l.b2 = Tensor::zeros({cfg.d});
      enc.layers.push_back(std::move(l));
    }
    return enc;
  }

  std::vector<Tensor> all_params() const {
    std::vector<Tensor> out;
    for (const EncoderLayer& l : layers) {
      for (const Tensor& t : {l.ln1_g, l.ln1_b, l.wq, l.bq, l.wk, l.bk, l.wv,
                              l.bv, l.wo, l.bo, l.ln2_g, l.ln2_b, l.w1, l.b1,
                              l.w2, l.b2})
        out.push_back(t);
    }
    return out;
  }
};

// Sinusoidal position encoding rows for a length-T feature sequence. Prompt
// rows are virtual inputs and get no positions.
inline Tensor sinusoidal_positions(int T, int d) {
  Tensor pe = Tensor::zeros({T, d});
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < d / 2; ++j) {
      double freq = std::pow(10000.0, -2.0 * j / d);
      pe.set(t, 2 * j, std::sin(t * freq));
      pe.set(t, 2 * j + 1, std::cos(t * freq));
    }
  return pe;
}

namespace detail {

inline Tensor attention(const Tensor& x, const EncoderLayer& l, int heads) {
  const int d = x.dim(1);
  const int dh = d / heads;
  Tensor q = linear(x, l.wq, l.bq);
  Tensor k = linear(x, l.wk, l.bk);
  Tensor v = linear(x, l.wv, l.bv);
  std::vector<Tensor> head_out;
  head_out.reserve(static_cast<size_t>(heads));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice(q, 1, h * dh, (h + 1) * dh);
    Tensor kh = slice(k, 1, h * dh, (h + 1) * dh);
    Tensor vh = slice(v, 1, h * dh, (h + 1) * dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    head_out.push_back(matmul(softmax_rows(scores), vh));
  }
  Tensor merged = heads == 1 ? head_out[0] : concat(1, head_out);
  return linear(merged, l.wo, l.bo);
}

inline Tensor transformer_layer(const Tensor& x, const EncoderLayer& l, int heads,
                                double dropout_p, bool train, RngStream& drop_rng) {
  Tensor h = layer_norm_rows(x, l.ln1_g, l.ln1_b);
  Tensor a = dropout(attention(h, l, heads), dropout_p, drop_rng, train);
  Tensor y = add(x, a);
  Tensor h2 = layer_norm_rows(y, l.ln2_g, l.ln2_b);
  Tensor f = linear(silu(linear(h2, l.w1, l.b1)), l.w2, l.b2);
  return add(y, dropout(f, dropout_p, drop_rng, train));
}

}  // namespace detail

// Per-layer intermediates for inspection; values are detached copies.
struct EncodeTrace {
  std::vector<Tensor> z;  // prompt-slot outputs per layer
  std::vector<Tensor> e;  // sequence embeddings per layer
};

// Deep prompt injection: at every layer the prompt slots are replaced by a
// fresh variant-dependent prompt, the previous layer's sequence embedding is
// carried forward, and only the last layer's prompt outputs survive.
// Returns the (p+T, d) matrix [Z_l, E_l].
inline Tensor encode_with_prompts(const Tensor& features, const EncoderState& enc,
                                  const PromptSet& prompts, const FilterBank& bank,
                                  const SparsifyConfig& sparsify, bool train,
                                  RngContext& rng, double dropout_p = 0.0,
                                  AblationMode ablation = AblationMode::kFull,
                                  EncodeTrace* trace = nullptr) {
  const EncoderConfig& cfg = enc.cfg;
  check_arg(features.ndim() == 2 && features.dim(1) == cfg.d,
            "encode: features must be (T, " + std::to_string(cfg.d) + "), got " +
                shape_str(features.shape()));
  check_arg(static_cast<int>(prompts.layers.size()) == cfg.layers,
            "encode: prompt set has " + std::to_string(prompts.layers.size()) +
                " layers, encoder has " + std::to_string(cfg.layers));
  prompts.validate();
  for (const Tensor& pk : prompts.layers)
    check_arg(pk.dim(1) == cfg.d, "encode: prompt dim " + std::to_string(pk.dim(1)) +
                                      " does not match encoder dim " +
                                      std::to_string(cfg.d));
  const int T = features.dim(0);
  const int p = prompts.p;
  RngStream& drop_rng = rng.stream("dropout");
  RngStream& wds_rng = rng.stream(sparsify.rng_stream);

  Tensor e = add(features, sinusoidal_positions(T, cfg.d));
  Tensor out;
  for (int k = 0; k < cfg.layers; ++k) {
    const Tensor& pk = prompts.layers[static_cast<size_t>(k)];
    Tensor ptilde;
    switch (prompts.variant) {
      case Variant::kPT:
        ptilde = pk;
        break;
      case Variant::kFourierPT:
        ptilde = fourier_prompt(pk);
        break;
      case Variant::kWPT: {
        auto [ca, cd] = lwd(pk, bank);
        ptilde = lwr(ca, cd, bank);
        break;
      }
      case Variant::kWSPT:
        ptilde = wavelet_sparse_prompt(pk, bank, sparsify, train, wds_rng, ablation);
        break;
      case Variant::kPartialWSPT: {
        Tensor tail = slice(pk, 0, p - prompts.m, p);
        Tensor wsp = wavelet_sparse_prompt(tail, bank, sparsify, train, wds_rng, ablation);
        ptilde = assemble_prompt(pk, wsp);
        break;
      }
    }
    Tensor input = concat(0, {ptilde, e});
    out = detail::transformer_layer(input, enc.layers[static_cast<size_t>(k)],
                                    cfg.heads, dropout_p, train, drop_rng);
    e = slice(out, 0, p, p + T);
    if (trace) {
      trace->z.push_back(slice(out, 0, 0, p).detach());
      trace->e.push_back(e.detach());
    }
  }
  return out;
}

}  // namespace wavesp
