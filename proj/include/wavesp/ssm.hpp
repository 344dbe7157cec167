#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "wavesp/tensor.hpp"

namespace wavesp {

// Flop counter for the scan recurrence, used to assert linear-time scaling.
inline uint64_t& scan_flop_counter() {
  thread_local uint64_t count = 0;
  return count;
}
inline void reset_scan_flops() { scan_flop_counter() = 0; }

// Fused diagonal selective-scan recurrence (zero-order hold):
//   h_t[c,s] = exp(delta[t,c] * A[c,s]) * h_{t-1}[c,s] + delta[t,c] * B[t,s] * u[t,c]
//   y[t,c]   = sum_s C[t,s] * h_t[c,s] + D[c] * u[t,c]
// u, delta: (T,d); B, C: (T,n); A: (d,n); D: (d). One tape node; the hidden
// states are saved for backprop through time.
inline Tensor selective_scan_op(const Tensor& u, const Tensor& delta, const Tensor& B,
                                const Tensor& C, const Tensor& A, const Tensor& D) {
  check_arg(u.ndim() == 2 && u.dim(0) >= 1,
            "selective_scan: sequence must be non-empty, got " + shape_str(u.shape()));
  const int T = u.dim(0), d = u.dim(1);
  check_same_shape(u, delta, "selective_scan(delta)");
  check_arg(B.ndim() == 2 && B.dim(0) == T, "selective_scan: B must be (T, n)");
  const int n = B.dim(1);
  check_arg(C.shape() == B.shape(), "selective_scan: C must match B");
  check_arg(A.ndim() == 2 && A.dim(0) == d && A.dim(1) == n,
            "selective_scan: A must be (d, n)");
  check_arg(D.ndim() == 1 && D.dim(0) == d, "selective_scan: D must be (d)");

  scan_flop_counter() += 8ull * T * d * n;

  std::vector<double> h(static_cast<size_t>(T + 1) * d * n, 0.0);  // h[0] = 0
  std::vector<double> y(static_cast<size_t>(T) * d, 0.0);
  for (int t = 0; t < T; ++t) {
    const double* ut = u.value().data() + static_cast<size_t>(t) * d;
    const double* dt = delta.value().data() + static_cast<size_t>(t) * d;
    const double* bt = B.value().data() + static_cast<size_t>(t) * n;
    const double* ct = C.value().data() + static_cast<size_t>(t) * n;
    const double* hprev = h.data() + static_cast<size_t>(t) * d * n;
    double* hcur = h.data() + static_cast<size_t>(t + 1) * d * n;
    for (int c = 0; c < d; ++c) {
      const double* arow = A.value().data() + static_cast<size_t>(c) * n;
      const double* hp = hprev + static_cast<size_t>(c) * n;
      double* hc = hcur + static_cast<size_t>(c) * n;
      double acc = 0.0;
      for (int s = 0; s < n; ++s) {
        hc[s] = std::exp(dt[c] * arow[s]) * hp[s] + dt[c] * bt[s] * ut[c];
        acc += ct[s] * hc[s];
      }
      y[static_cast<size_t>(t) * d + c] = acc + D.at(c) * ut[c];
    }
  }

  auto pu = u.node(), pd = delta.node(), pb = B.node(), pc = C.node(),
       pa = A.node(), pD = D.node();
  return detail::make_op(
      "selective_scan", {T, d}, std::move(y), {u, delta, B, C, A, D},
      [pu, pd, pb, pc, pa, pD, h, T, d, n](detail::Node& nd) {
        auto want = [](const std::shared_ptr<detail::Node>& p) {
          if (p->requires_grad) p->ensure_grad();
          return p->requires_grad;
        };
        const bool gu = want(pu), gd = want(pd), gb = want(pb), gc = want(pc),
                   ga = want(pa), gD = want(pD);
        // G holds dL/dh_t for the step being processed.
        std::vector<double> G(static_cast<size_t>(d) * n, 0.0);
        for (int t = T - 1; t >= 0; --t) {
          const double* gy = nd.grad.data() + static_cast<size_t>(t) * d;
          const double* ut = pu->value.data() + static_cast<size_t>(t) * d;
          const double* dt = pd->value.data() + static_cast<size_t>(t) * d;
          const double* bt = pb->value.data() + static_cast<size_t>(t) * n;
          const double* ct = pc->value.data() + static_cast<size_t>(t) * n;
          const double* hcur = h.data() + static_cast<size_t>(t + 1) * d * n;
          const double* hprev = h.data() + static_cast<size_t>(t) * d * n;
          for (int c = 0; c < d; ++c) {
            const double* arow = pa->value.data() + static_cast<size_t>(c) * n;
            const double* hc = hcur + static_cast<size_t>(c) * n;
            const double* hp = hprev + static_cast<size_t>(c) * n;
            double* Gc = G.data() + static_cast<size_t>(c) * n;
            const double g = gy[c];
            // y_t contributions
            if (gD) pD->grad[static_cast<size_t>(c)] += g * ut[c];
            if (gu) pu->grad[static_cast<size_t>(t) * d + c] += g * pD->value[static_cast<size_t>(c)];
            double ddelta = 0.0, du_scan = 0.0;
            for (int s = 0; s < n; ++s) {
              if (gc) pc->grad[static_cast<size_t>(t) * n + s] += g * hc[s];
              double Gts = Gc[s] + g * ct[s];  // total dL/dh_t[c,s]
              const double a = std::exp(dt[c] * arow[s]);
              if (ga)
                pa->grad[static_cast<size_t>(c) * n + s] += Gts * hp[s] * dt[c] * a;
              ddelta += Gts * (hp[s] * arow[s] * a + bt[s] * ut[c]);
              if (gb) pb->grad[static_cast<size_t>(t) * n + s] += Gts * dt[c] * ut[c];
              du_scan += Gts * bt[s];
              Gc[s] = Gts * a;  // flows to h_{t-1}
            }
            if (gd) pd->grad[static_cast<size_t>(t) * d + c] += ddelta;
            if (gu) pu->grad[static_cast<size_t>(t) * d + c] += du_scan * dt[c];
          }
        }
      });
}

// Parameters of one scan direction. A starts strictly negative (decaying
// dynamics); delta biases are drawn so the initial step sizes land in
// [1e-3, 1e-1] as is customary for selective SSMs.
struct SSMBlockParams {
  Tensor A;                // (d, n)
  Tensor w_b, w_c;         // (d, n)
  Tensor w_delta, b_delta; // (d, d), (d)
  Tensor d_skip;           // (d)
  Tensor w_in, b_in;       // (d, d), (d)
  Tensor w_out, b_out;     // (d, d), (d)

  static SSMBlockParams init(int d, int n, RngStream& rng) {
    SSMBlockParams p;
    p.A = Tensor::zeros({d, n}, true);
    for (int c = 0; c < d; ++c)
      for (int s = 0; s < n; ++s) p.A.set(c * n + s, -1.0 - s);
    auto weight = [&rng](int rows, int cols) {
      double std = std::sqrt(2.0 / (rows + cols));
      return Tensor::randn({rows, cols}, rng, std, true);
    };
    p.w_b = weight(d, n);
    p.w_c = weight(d, n);
    p.w_delta = weight(d, d);
    p.b_delta = Tensor::zeros({d}, true);
    for (int c = 0; c < d; ++c) {
      double dt = rng.uniform(1e-3, 1e-1);
      p.b_delta.set(c, std::log(std::exp(dt) - 1.0));  // softplus inverse
    }
    p.d_skip = Tensor::full({d}, 1.0, true);
    p.w_in = weight(d, d);
    p.b_in = Tensor::zeros({d}, true);
    p.w_out = weight(d, d);
    p.b_out = Tensor::zeros({d}, true);
    return p;
  }

  std::vector<Tensor> params() const {
    return {A, w_b, w_c, w_delta, b_delta, d_skip, w_in, b_in, w_out, b_out};
  }
};

// Input-dependent scan: delta, B, C are projections of the input sequence.
inline Tensor selective_scan(const Tensor& u, const SSMBlockParams& p) {
  Tensor delta = softplus(linear(u, p.w_delta, p.b_delta));
  Tensor B = matmul(u, p.w_b);
  Tensor C = matmul(u, p.w_c);
  return selective_scan_op(u, delta, B, C, p.A, p.d_skip);
}

struct BidirBlock {
  Tensor ln_g, ln_b;
  SSMBlockParams fwd, bwd;

  static BidirBlock init(int d, int n, RngStream& rng) {
    BidirBlock b;
    b.ln_g = Tensor::full({d}, 1.0, true);
    b.ln_b = Tensor::zeros({d}, true);
    b.fwd = SSMBlockParams::init(d, n, rng);
    b.bwd = SSMBlockParams::init(d, n, rng);
    return b;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out = {ln_g, ln_b};
    for (const Tensor& t : fwd.params()) out.push_back(t);
    for (const Tensor& t : bwd.params()) out.push_back(t);
    return out;
  }
};

// Pre-norm residual block scanning both directions with independent
// parameters; each direction is gated and channel-mixed before the sum
// rejoins the residual stream.
inline Tensor bidirectional_block(const Tensor& x, const BidirBlock& blk,
                                  double dropout_p = 0.0, RngStream* drop_rng = nullptr,
                                  bool train = false) {
  Tensor h = layer_norm_rows(x, blk.ln_g, blk.ln_b);
  Tensor uf = linear(h, blk.fwd.w_in, blk.fwd.b_in);
  Tensor yf = linear(silu(selective_scan(uf, blk.fwd)), blk.fwd.w_out, blk.fwd.b_out);
  Tensor ub = linear(h, blk.bwd.w_in, blk.bwd.b_in);
  Tensor sb = reverse_rows(selective_scan(reverse_rows(ub), blk.bwd));
  Tensor yb = linear(silu(sb), blk.bwd.w_out, blk.bwd.b_out);
  Tensor delta = add(yf, yb);
  if (train && drop_rng && dropout_p > 0.0)
    delta = dropout(delta, dropout_p, *drop_rng, true);
  return add(x, delta);
}

struct ClassifierConfig {
  int blocks = 4;
  int d_state = 8;
  int d_model = 0;  // 0: match the encoder hidden dim
  int classes = 2;

  void validate() const {
    check_arg(blocks >= 1, "classifier: blocks must be >= 1");
    check_arg(d_state >= 1, "classifier: d_state must be >= 1");
    check_arg(classes == 2, "classifier: binary head expected");
  }
};

// Bidirectional selective-SSM classification head: optional input projection,
// a stack of scan blocks, final norm, mean pooling, and a linear head.
// Class 0 is bonafide.
struct Classifier {
  ClassifierConfig cfg;
  int d_in = 0, d_model = 0;
  Tensor in_w, in_b;  // present iff d_in != d_model
  std::vector<BidirBlock> blocks;
  Tensor lnf_g, lnf_b;
  Tensor head_w, head_b;

  bool has_proj() const { return d_in != d_model; }

  static Classifier init(const ClassifierConfig& cfg, int d_in, RngStream& rng) {
    cfg.validate();
    Classifier c;
    c.cfg = cfg;
    c.d_in = d_in;
    c.d_model = cfg.d_model > 0 ? cfg.d_model : d_in;
    if (c.has_proj()) {
      double std = std::sqrt(2.0 / (d_in + c.d_model));
      c.in_w = Tensor::randn({d_in, c.d_model}, rng, std, true);
      c.in_b = Tensor::zeros({c.d_model}, true);
    }
    for (int b = 0; b < cfg.blocks; ++b)
      c.blocks.push_back(BidirBlock::init(c.d_model, cfg.d_state, rng));
    c.lnf_g = Tensor::full({c.d_model}, 1.0, true);
    c.lnf_b = Tensor::zeros({c.d_model}, true);
    double std = std::sqrt(2.0 / (c.d_model + cfg.classes));
    c.head_w = Tensor::randn({c.d_model, cfg.classes}, rng, std, true);
    c.head_b = Tensor::zeros({cfg.classes}, true);
    return c;
  }

  std::vector<Tensor> params() const {
    std::vector<Tensor> out;
    if (has_proj()) {
      out.push_back(in_w);
      out.push_back(in_b);
    }
    for (const BidirBlock& b : blocks)
      for (const Tensor& t : b.params()) out.push_back(t);
    out.push_back(lnf_g);
    out.push_back(lnf_b);
    out.push_back(head_w);
    out.push_back(head_b);
    return out;
  }
};

struct ClassifierOutput {
  Tensor logits;  // (1, 2)
  Tensor pooled;  // (1, d_model), penultimate representation
};

inline ClassifierOutput classify(const Tensor& input, const Classifier& cls,
                                 double dropout_p = 0.0, RngStream* drop_rng = nullptr,
                                 bool train = false) {
  check_arg(input.ndim() == 2 && input.dim(0) >= 1,
            "classify: input must be a non-empty (rows, d) matrix");
  check_arg(input.dim(1) == cls.d_in,
            "classify: input dim " + std::to_string(input.dim(1)) +
                " does not match classifier dim " + std::to_string(cls.d_in));
  Tensor x = cls.has_proj() ? linear(input, cls.in_w, cls.in_b) : input;
  for (const BidirBlock& b : cls.blocks)
    x = bidirectional_block(x, b, dropout_p, drop_rng, train);
  x = layer_norm_rows(x, cls.lnf_g, cls.lnf_b);
  Tensor pooled = mean_axis0(x);
  Tensor pre_head = pooled;
  if (train && drop_rng && dropout_p > 0.0)
    pre_head = dropout(pooled, dropout_p, *drop_rng, true);
  return {linear(pre_head, cls.head_w, cls.head_b), pooled};
}

// Detection score used for EER: bonafide logit minus spoof logit.
inline double detection_score(const Tensor& logits) {
  return logits.at(0) - logits.at(1);
}

}  // namespace wavesp
