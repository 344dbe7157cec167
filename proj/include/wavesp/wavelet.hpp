#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "wavesp/tensor.hpp"

namespace wavesp {

// Prompt-enhancement variants. PT is plain prompt tuning; FourierPT replaces
// prompts with their Fourier image; WPT/WSPT/PartialWSPT run the wavelet
// round-trip on all or the last m prompt tokens.
enum class Variant { kPT, kFourierPT, kWPT, kWSPT, kPartialWSPT };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kPT: return "PT";
    case Variant::kFourierPT: return "FourierPT";
    case Variant::kWPT: return "WPT";
    case Variant::kWSPT: return "WSPT";
    case Variant::kPartialWSPT: return "PartialWSPT";
  }
  return "?";
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "PT") return Variant::kPT;
  if (s == "FourierPT") return Variant::kFourierPT;
  if (s == "WPT") return Variant::kWPT;
  if (s == "WSPT") return Variant::kWSPT;
  if (s == "PartialWSPT") return Variant::kPartialWSPT;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

inline bool variant_uses_wavelet(Variant v) {
  return v == Variant::kWPT || v == Variant::kWSPT || v == Variant::kPartialWSPT;
}

// Component switches for the ablation axes: each drops one stage of the
// decompose / sparsify / reconstruct pipeline.
enum class AblationMode { kFull, kNoLwd, kNoWds, kNoLwr };

inline const char* ablation_name(AblationMode a) {
  switch (a) {
    case AblationMode::kFull: return "full";
    case AblationMode::kNoLwd: return "no_lwd";
    case AblationMode::kNoWds: return "no_wds";
    case AblationMode::kNoLwr: return "no_lwr";
  }
  return "?";
}

inline AblationMode ablation_from_name(const std::string& s) {
  if (s == "full") return AblationMode::kFull;
  if (s == "no_lwd") return AblationMode::kNoLwd;
  if (s == "no_wds") return AblationMode::kNoWds;
  if (s == "no_lwr") return AblationMode::kNoLwr;
  throw std::invalid_argument("unknown ablation component '" + s + "'");
}

enum class FilterFamily { kHaar, kDb2 };

inline const char* family_name(FilterFamily f) {
  return f == FilterFamily::kHaar ? "haar" : "db2";
}

inline FilterFamily family_from_name(const std::string& s) {
  if (s == "haar") return FilterFamily::kHaar;
  if (s == "db2") return FilterFamily::kDb2;
  throw std::invalid_argument("unknown filter family '" + s + "'");
}

// Analysis pair (f0 low, f1 high) and synthesis pair (h0, h1), all length L.
// When learnable is false the coefficients stay out of the optimizer and are
// bitwise constant for the life of the model.
struct FilterBank {
  Tensor f0, f1, h0, h1;
  bool learnable = true;

  int length() const { return f0.dim(0); }

  static FilterBank init(FilterFamily family, bool learnable) {
    std::vector<double> lo;
    if (family == FilterFamily::kHaar) {
      const double r = 1.0 / std::sqrt(2.0);
      lo = {r, r};
    } else {
      const double s3 = std::sqrt(3.0), den = 4.0 * std::sqrt(2.0);
      lo = {(1.0 + s3) / den, (3.0 + s3) / den, (3.0 - s3) / den, (1.0 - s3) / den};
    }
    const int L = static_cast<int>(lo.size());
    std::vector<double> hi(lo.size());
    for (int t = 0; t < L; ++t)
      hi[static_cast<size_t>(t)] = (t % 2 == 0 ? 1.0 : -1.0) * lo[static_cast<size_t>(L - 1 - t)];
    FilterBank bank;
    bank.learnable = learnable;
    bank.f0 = Tensor::from({L}, lo, learnable);
    bank.f1 = Tensor::from({L}, hi, learnable);
    bank.h0 = Tensor::from({L}, lo, learnable);
    bank.h1 = Tensor::from({L}, hi, learnable);
    return bank;
  }
};

// Bernoulli gradient-gating of the stacked wavelet coefficients. rho is the
// keep fraction; the stream name selects the RNG stream used at train time.
struct SparsifyConfig {
  double rho = 0.1;
  bool enabled = true;
  std::string rng_stream = "wds";
};

// Per-layer learnable prompt tokens plus the variant tag. m of the p tokens
// per layer go through the wavelet path (for the partial variant).
struct PromptSet {
  std::vector<Tensor> layers;  // each (p, d)
  int p = 10;
  int m = 4;
  Variant variant = Variant::kPartialWSPT;

  void validate() const {
    check_arg(p >= 1, "prompt set: p must be >= 1");
    check_arg(m >= 0 && m <= p, "prompt set: m must satisfy 0 <= m <= p");
    if (variant == Variant::kPartialWSPT)
      check_arg(m > 0 && m < p, "PartialWSPT requires 0 < m < p");
    if (variant == Variant::kWPT || variant == Variant::kWSPT)
      check_arg(m == p, "WPT/WSPT require m == p");
    for (const Tensor& t : layers)
      check_arg(t.ndim() == 2 && t.dim(0) == p,
                "prompt set: layer prompt must be (p, d)");
  }

  static PromptSet init(int num_layers, int p, int m, int d, Variant variant,
                        RngStream& rng) {
    PromptSet ps;
    ps.p = p;
    ps.m = (variant == Variant::kWPT || variant == Variant::kWSPT) ? p : m;
    ps.variant = variant;
    ps.layers.reserve(static_cast<size_t>(num_layers));
    for (int k = 0; k < num_layers; ++k)
      ps.layers.push_back(Tensor::randn({p, d}, rng, 0.02, true));
    ps.validate();
    return ps;
  }
};

// ---------------------------------------------------------------------------
// LWD / WDS / LWR
// ---------------------------------------------------------------------------

// Learnable wavelet decomposition: single-level DWT along the hidden axis of
// each token row, periodic boundary. Returns approximation and detail
// coefficients, each (m, d/2).
inline std::pair<Tensor, Tensor> lwd(const Tensor& tokens, const FilterBank& bank) {
  check_arg(tokens.ndim() == 2, "lwd: tokens must be rank-2, got " +
                                    shape_str(tokens.shape()));
  check_arg(tokens.dim(1) % 2 == 0,
            "lwd: hidden dimension must be even, got " + std::to_string(tokens.dim(1)));
  Tensor ca = conv1d_periodic(tokens, bank.f0, 2);
  Tensor cd = conv1d_periodic(tokens, bank.f1, 2);
  return {ca, cd};
}

struct WdsResult {
  Tensor ca, cd;
  std::vector<double> mask;  // stacked positions, cA block then cD block
};

// Wavelet-domain sparsification: forward values pass through untouched; in
// train mode a fresh Bernoulli(rho) mask over the stacked coefficient
// positions gates which positions stay on the gradient tape.
inline WdsResult wds(const Tensor& ca, const Tensor& cd, const SparsifyConfig& cfg,
                     bool train, RngStream& rng) {
  check_arg(cfg.rho >= 0.0 && cfg.rho <= 1.0,
            "wds: rho must lie in [0,1], got " + std::to_string(cfg.rho));
  check_same_shape(ca, cd, "wds");
  const size_t half = ca.size();
  if (!train || !cfg.enabled) {
    return {ca, cd, std::vector<double>(2 * half, 1.0)};
  }
  std::vector<double> mask(2 * half);
  for (double& mv : mask) mv = rng.bernoulli(cfg.rho) ? 1.0 : 0.0;
  std::vector<double> mask_a(mask.begin(), mask.begin() + static_cast<long>(half));
  std::vector<double> mask_d(mask.begin() + static_cast<long>(half), mask.end());
  return {grad_gate(ca, mask_a), grad_gate(cd, mask_d), std::move(mask)};
}

// Learnable wavelet reconstruction: upsample-by-2 then periodic convolution
// with the synthesis pair, summed over bands. Inverse of lwd for orthonormal
// banks.
inline Tensor lwr(const Tensor& ca, const Tensor& cd, const FilterBank& bank) {
  check_arg(ca.ndim() == 2 && cd.ndim() == 2, "lwr: coefficients must be rank-2");
  check_arg(ca.shape() == cd.shape(), "lwr: cA/cD shape mismatch " +
                                          shape_str(ca.shape()) + " vs " +
                                          shape_str(cd.shape()));
  Tensor lo = upconv1d_periodic(ca, bank.h0, 2);
  Tensor hi = upconv1d_periodic(cd, bank.h1, 2);
  return add(lo, hi);
}

// Full decompose -> sparsify -> reconstruct pipeline on a token slice, with
// the ablation switches of the component axis.
inline Tensor wavelet_sparse_prompt(const Tensor& tokens, const FilterBank& bank,
                                    const SparsifyConfig& cfg, bool train,
                                    RngStream& rng,
                                    AblationMode ablation = AblationMode::kFull) {
  Tensor ca, cd;
  if (ablation == AblationMode::kNoLwd) {
    // Degenerate single-band path: the raw token halves stand in for the
    // coefficient bands.
    const int d = tokens.dim(1);
    check_arg(d % 2 == 0, "wavelet_sparse_prompt: hidden dimension must be even");
    ca = slice(tokens, 1, 0, d / 2);
    cd = slice(tokens, 1, d / 2, d);
  } else {
    std::tie(ca, cd) = lwd(tokens, bank);
  }
  if (ablation != AblationMode::kNoWds) {
    WdsResult r = wds(ca, cd, cfg, train, rng);
    ca = r.ca;
    cd = r.cd;
  }
  if (ablation == AblationMode::kNoLwr) {
    // Fixed orthonormal re-stacking of the two bands into token shape.
    return concat(1, {ca, cd});
  }
  return lwr(ca, cd, bank);
}

// Eq-style prompt assembly: keep the first p-m rows of the raw prompt and
// replace the last m rows with the enhanced tokens.
inline Tensor assemble_prompt(const Tensor& prompt, const Tensor& enhanced) {
  check_arg(prompt.ndim() == 2 && enhanced.ndim() == 2,
            "assemble_prompt: expects rank-2 inputs");
  const int p = prompt.dim(0), m = enhanced.dim(0);
  check_arg(m <= p, "assemble_prompt: enhanced row count " + std::to_string(m) +
                        " exceeds prompt rows " + std::to_string(p));
  check_arg(m == 0 || enhanced.dim(1) == prompt.dim(1),
            "assemble_prompt: column mismatch " + shape_str(prompt.shape()) +
                " vs " + shape_str(enhanced.shape()));
  if (m == 0) return prompt;
  if (m == p) return enhanced;
  return concat(0, {slice(prompt, 0, 0, p - m), enhanced});
}

// ---------------------------------------------------------------------------
// Fourier prompt
// ---------------------------------------------------------------------------

// Real part of the unnormalized 2-D DFT of the prompt matrix (token axis
// first, then hidden axis).
inline Tensor fourier_prompt(const Tensor& prompt) {
  check_arg(prompt.ndim() == 2, "fourier_prompt: expects rank-2, got " +
                                    shape_str(prompt.shape()));
  Tensor r1 = dft_re(prompt, 0);
  Tensor i1 = dft_im(prompt, 0);
  return dft_re(r1, i1, 1);
}

// Both components of the 2-D DFT; the energy/Parseval checks run on this.
inline std::pair<Tensor, Tensor> fourier_full(const Tensor& prompt) {
  Tensor r1 = dft_re(prompt, 0);
  Tensor i1 = dft_im(prompt, 0);
  return {dft_re(r1, i1, 1), dft_im(r1, i1, 1)};
}

// ---------------------------------------------------------------------------
// Perfect-reconstruction penalty
// ---------------------------------------------------------------------------

// Sum of squared round-trip residuals over the canonical basis of a probe
// space. Zero iff analysis followed by synthesis is the identity there.
inline Tensor pr_penalty(const FilterBank& bank, int probe_len = 8) {
  check_arg(probe_len >= bank.length() && probe_len % 2 == 0,
            "pr_penalty: probe length must be even and >= filter length");
  Tensor probe = Tensor::zeros({probe_len, probe_len});
  for (int i = 0; i < probe_len; ++i) probe.set(i, i, 1.0);
  auto [ca, cd] = lwd(probe, bank);
  Tensor rec = lwr(ca, cd, bank);
  Tensor diff = sub(rec, probe);
  return sum_all(mul(diff, diff));
}

}  // namespace wavesp
