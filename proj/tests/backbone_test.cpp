#include "wavesp/backbone.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "wavesp/model.hpp"
#include "wavesp/optimizer.hpp"

using namespace wavesp;

namespace {

Tensor random_features(int T, int d, uint64_t seed) {
  RngStream rng(seed, "features");
  Tensor t = Tensor::zeros({T, d});
  for (size_t i = 0; i < t.size(); ++i) t.value()[i] = rng.uniform(-1.0, 1.0);
  return t;
}

EncoderConfig small_config(int layers = 2, int d = 8, int heads = 2, int ff = 12) {
  EncoderConfig cfg;
  cfg.layers = layers;
  cfg.d = d;
  cfg.heads = heads;
  cfg.ff = ff;
  cfg.seed = 5;
  return cfg;
}

Tensor run_encoder(const EncoderState& enc, const PromptSet& prompts,
                   const Tensor& features, EncodeTrace* trace = nullptr) {
  FilterBank bank = FilterBank::init(FilterFamily::kHaar, true);
  SparsifyConfig sparsify;
  RngContext rng(3);
  return encode_with_prompts(features, enc, prompts, bank, sparsify,
                             /*train=*/false, rng, 0.0, AblationMode::kFull, trace);
}

}  // namespace

TEST(EncoderConfig, ValidationCatchesBadShapes) {
  EncoderConfig cfg = small_config();
  cfg.d = 7;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.heads = 3;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.layers = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Encoder, OutputRowCountIsPromptPlusSequence) {
  // Paper-scale check: p=10 prompts, T=201 frames -> 211 rows.
  EncoderConfig cfg = small_config(1, 8, 2, 12);
  EncoderState enc = EncoderState::init(cfg);
  RngStream rng(1, "prompts");
  PromptSet prompts = PromptSet::init(1, 10, 4, 8, Variant::kPartialWSPT, rng);
  Tensor out = run_encoder(enc, prompts, random_features(201, 8, 2));
  EXPECT_EQ(out.dim(0), 211);
  EXPECT_EQ(out.dim(1), 8);
}

TEST(Encoder, ShapeContractAcrossRandomConfigs) {
  RngStream meta(99, "meta");
  for (int trial = 0; trial < 8; ++trial) {
    const int p = meta.uniform_int(1, 12);
    const int m = meta.uniform_int(1, std::max(1, p - 1));
    const int T = meta.uniform_int(1, 40);
    EncoderConfig cfg = small_config(meta.uniform_int(1, 3), 8, 2, 10);
    EncoderState enc = EncoderState::init(cfg);
    RngStream rng(static_cast<uint64_t>(trial), "prompts");
    const Variant variant = p > m ? Variant::kPartialWSPT : Variant::kWSPT;
    PromptSet prompts = PromptSet::init(cfg.layers, p, m, 8, variant, rng);
    Tensor out = run_encoder(enc, prompts, random_features(T, 8, 100 + trial));
    EXPECT_EQ(out.dim(0), p + T);
    EXPECT_EQ(out.dim(1), 8);
  }
}

TEST(Encoder, ZeroPromptsMakeVariantsIndistinguishable) {
  // Zero tokens are a fixed point of the wavelet round-trip, so PT and
  // PartialWSPT with all-zero prompts agree exactly.
  EncoderConfig cfg = small_config();
  EncoderState enc = EncoderState::init(cfg);
  Tensor features = random_features(6, 8, 3);

  PromptSet pt;
  pt.p = 4;
  pt.m = 0;
  pt.variant = Variant::kPT;
  PromptSet partial;
  partial.p = 4;
  partial.m = 2;
  partial.variant = Variant::kPartialWSPT;
  for (int k = 0; k < cfg.layers; ++k) {
    pt.layers.push_back(Tensor::zeros({4, 8}, true));
    partial.layers.push_back(Tensor::zeros({4, 8}, true));
  }
  Tensor a = run_encoder(enc, pt, features);
  Tensor b = run_encoder(enc, partial, features);
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.value()[i], b.value()[i]);
}

TEST(Encoder, SingleLayerMatchesHandRolledOracle) {
  EncoderConfig cfg = small_config(1, 4, 2, 6);
  EncoderState enc = EncoderState::init(cfg);
  const int T = 5, p = 2, d = 4;
  RngStream prng(8, "prompts");
  PromptSet prompts = PromptSet::init(1, p, 0, d, Variant::kPT, prng);
  Tensor features = random_features(T, d, 9);
  Tensor got = run_encoder(enc, prompts, features);

  // Oracle: position-encode features, prepend the prompt, then run one
  // pre-norm layer with explicit loops.
  const int rows = p + T;
  std::vector<double> x(static_cast<size_t>(rows) * d);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < d; ++j) x[static_cast<size_t>(i) * d + j] = prompts.layers[0].at(i, j);
  Tensor pe = sinusoidal_positions(T, d);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < d; ++j)
      x[static_cast<size_t>(p + t) * d + j] = features.at(t, j) + pe.at(t, j);

  const EncoderLayer& l = enc.layers[0];
  const auto h = oracle::layer_norm(x, rows, d, l.ln1_g.value(), l.ln1_b.value());
  const auto q = oracle::linear(h, rows, d, d, l.wq.value(), l.bq.value());
  const auto k = oracle::linear(h, rows, d, d, l.wk.value(), l.bk.value());
  const auto v = oracle::linear(h, rows, d, d, l.wv.value(), l.bv.value());
  const int heads = cfg.heads, dh = d / heads;
  std::vector<double> merged(static_cast<size_t>(rows) * d, 0.0);
  for (int hh = 0; hh < heads; ++hh) {
    for (int i = 0; i < rows; ++i) {
      std::vector<double> scores(static_cast<size_t>(rows));
      double mx = -1e300;
      for (int j = 0; j < rows; ++j) {
        double s = 0.0;
        for (int c = 0; c < dh; ++c)
          s += q[static_cast<size_t>(i) * d + hh * dh + c] *
               k[static_cast<size_t>(j) * d + hh * dh + c];
        scores[static_cast<size_t>(j)] = s / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, scores[static_cast<size_t>(j)]);
      }
      double denom = 0.0;
      for (double& s : scores) denom += (s = std::exp(s - mx));
      for (int j = 0; j < rows; ++j)
        for (int c = 0; c < dh; ++c)
          merged[static_cast<size_t>(i) * d + hh * dh + c] +=
              scores[static_cast<size_t>(j)] / denom *
              v[static_cast<size_t>(j) * d + hh * dh + c];
    }
  }
  auto attn = oracle::linear(merged, rows, d, d, l.wo.value(), l.bo.value());
  for (size_t i = 0; i < x.size(); ++i) attn[i] += x[i];  // residual
  const auto h2 = oracle::layer_norm(attn, rows, d, l.ln2_g.value(), l.ln2_b.value());
  auto ff1 = oracle::linear(h2, rows, d, cfg.ff, l.w1.value(), l.b1.value());
  for (double& s : ff1) s = s / (1.0 + std::exp(-s));  // silu
  auto ff2 = oracle::linear(ff1, rows, cfg.ff, d, l.w2.value(), l.b2.value());
  for (size_t i = 0; i < attn.size(); ++i) ff2[i] += attn[i];

  for (size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.value()[i], ff2[i], 1e-10);
}

TEST(Encoder, DimensionMismatchThrows) {
  EncoderConfig cfg = small_config();
  EncoderState enc = EncoderState::init(cfg);
  RngStream rng(1, "prompts");
  PromptSet bad = PromptSet::init(cfg.layers, 3, 0, 6, Variant::kPT, rng);  // d=6 != 8
  EXPECT_THROW(run_encoder(enc, bad, random_features(4, 8, 1)), std::invalid_argument);
  PromptSet ok = PromptSet::init(cfg.layers, 3, 0, 8, Variant::kPT, rng);
  EXPECT_THROW(run_encoder(enc, ok, random_features(4, 6, 1)), std::invalid_argument);
}

TEST(Encoder, DeepPromptPerturbationOnlyAffectsLaterLayers) {
  EncoderConfig cfg = small_config(3, 8, 2, 10);
  EncoderState enc = EncoderState::init(cfg);
  Tensor features = random_features(5, 8, 12);
  RngStream rng(2, "prompts");
  PromptSet prompts = PromptSet::init(3, 4, 2, 8, Variant::kPartialWSPT, rng);

  EncodeTrace base;
  run_encoder(enc, prompts, features, &base);

  const int j = 1;  // perturb layer 1's prompt
  Tensor pj = prompts.layers[static_cast<size_t>(j)];
  pj.value()[3] += 0.5;
  EncodeTrace pert;
  run_encoder(enc, prompts, features, &pert);

  for (int k = 0; k < 3; ++k) {
    double dz = 0.0, de = 0.0;
    for (size_t i = 0; i < base.z[static_cast<size_t>(k)].size(); ++i)
      dz = std::max(dz, std::abs(base.z[static_cast<size_t>(k)].value()[i] -
                                 pert.z[static_cast<size_t>(k)].value()[i]));
    for (size_t i = 0; i < base.e[static_cast<size_t>(k)].size(); ++i)
      de = std::max(de, std::abs(base.e[static_cast<size_t>(k)].value()[i] -
                                 pert.e[static_cast<size_t>(k)].value()[i]));
    if (k < j) {
      EXPECT_EQ(dz, 0.0) << "layer " << k;
      EXPECT_EQ(de, 0.0) << "layer " << k;
    } else {
      EXPECT_GT(dz, 0.0) << "layer " << k;
      EXPECT_GT(de, 0.0) << "layer " << k;
    }
  }
}

TEST(Encoder, EvalModeIsBitwiseDeterministic) {
  EncoderConfig cfg = small_config();
  auto run = [&cfg] {
    EncoderState enc = EncoderState::init(cfg);
    RngStream rng(6, "prompts");
    PromptSet prompts = PromptSet::init(cfg.layers, 4, 2, 8, Variant::kPartialWSPT, rng);
    return run_encoder(enc, prompts, random_features(7, 8, 44));
  };
  Tensor a = run();
  Tensor b = run();
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.value()[i], b.value()[i]);
}

TEST(Encoder, BackboneIsFrozen) {
  EncoderConfig cfg = small_config();
  EncoderState enc = EncoderState::init(cfg);
  for (const Tensor& t : enc.all_params()) EXPECT_FALSE(t.requires_grad());
}

TEST(TrainableParameters, PtVariantListsPromptsAndClassifierOnly) {
  ExperimentConfig cfg;
  cfg.variant = Variant::kPT;
  cfg.p = 3;
  cfg.m = 0;
  cfg.encoder = small_config();
  cfg.classifier.blocks = 1;
  cfg.classifier.d_state = 2;
  WaveSPNet net = WaveSPNet::build(cfg);
  const auto named = named_trainable(net);
  size_t prompt_count = 0;
  for (const auto& [name, t] : named) {
    EXPECT_EQ(name.find("bank."), std::string::npos) << name;
    prompt_count += name.rfind("prompt.", 0) == 0;
  }
  EXPECT_EQ(prompt_count, static_cast<size_t>(cfg.encoder.layers));
  EXPECT_EQ(named.size(),
            static_cast<size_t>(cfg.encoder.layers) + net.classifier.params().size());
}

TEST(TrainableParameters, FixedBankContributesNoFilterTensors) {
  ExperimentConfig cfg;
  cfg.variant = Variant::kPartialWSPT;
  cfg.encoder = small_config();
  cfg.classifier.blocks = 1;
  cfg.classifier.d_state = 2;
  cfg.filter_learnable = false;
  WaveSPNet net = WaveSPNet::build(cfg);
  for (const auto& [name, t] : named_trainable(net))
    EXPECT_EQ(name.find("bank."), std::string::npos) << name;
  EXPECT_FALSE(net.bank.f0.requires_grad());
}

TEST(TrainableParameters, CountMatchesClosedForm) {
  ExperimentConfig cfg;
  cfg.variant = Variant::kPartialWSPT;
  cfg.p = 10;
  cfg.m = 4;
  cfg.encoder = small_config(2, 8, 2, 12);
  cfg.classifier.blocks = 2;
  cfg.classifier.d_state = 3;
  WaveSPNet net = WaveSPNet::build(cfg);
  long long total = 0;
  for (const Tensor& t : trainable_parameters(net)) total += static_cast<long long>(t.size());

  // Independent hand count: l*p*d + 4L + classifier.
  const long long d = 8, n = 3, L = 2;
  const long long prompts = 2 * 10 * d;
  const long long per_dir = d * n * 3 + d * d + d + d + 2 * (d * d + d);
  const long long classifier = 2 * (2 * d + 2 * per_dir) + 2 * d + (d * 2 + 2);
  EXPECT_EQ(total, prompts + 4 * L + classifier);
}

TEST(FrozenBackbone, BitwiseStableAfterOptimizerSteps) {
  ExperimentConfig cfg;
  cfg.variant = Variant::kPartialWSPT;
  cfg.p = 4;
  cfg.m = 2;
  cfg.encoder = small_config();
  cfg.classifier.blocks = 1;
  cfg.classifier.d_state = 2;
  WaveSPNet net = WaveSPNet::build(cfg);
  Adam adam(trainable_parameters(net), 1e-2);
  RngContext rng(cfg.seed);
  Tensor features = random_features(5, 8, 77);
  for (int step = 0; step < 5; ++step) {
    adam.zero_grad();
    ForwardResult out = net.forward(features, Mode::kTrain, rng);
    cross_entropy_logits(out.logits, step % 2).backward();
    adam.step();
  }
  const EncoderState fresh = EncoderState::init(cfg.encoder);
  const auto now = net.encoder.all_params();
  const auto init = fresh.all_params();
  ASSERT_EQ(now.size(), init.size());
  for (size_t i = 0; i < now.size(); ++i)
    for (size_t j = 0; j < now[i].size(); ++j)
      ASSERT_EQ(now[i].value()[j], init[i].value()[j]);
}
