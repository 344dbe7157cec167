#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "wavesp/tensor.hpp"

namespace wavesp {

// Adam over an explicit parameter list. Moments exist only for the tensors
// handed in, so frozen parameters never acquire optimizer state.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, double lr = 5e-4, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const Tensor& p : params_) {
      check_arg(p.requires_grad(), "adam: all parameters must require grad");
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  void zero_grad() { zero_grads(params_); }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = params_[i];
      if (!p.has_grad()) continue;
      const std::vector<double>& g = p.grad();
      std::vector<double>& m = m_[i];
      std::vector<double>& v = v_[i];
      for (size_t j = 0; j < g.size(); ++j) {
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        p.value()[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  size_t slot_count() const { return params_.size(); }
  size_t moment_entries() const {
    size_t n = 0;
    for (const auto& m : m_) n += m.size();
    return n;
  }
  int64_t step_count() const { return t_; }
  double lr() const { return lr_; }

  // Checkpoint access.
  std::vector<std::vector<double>>& moments_m() { return m_; }
  std::vector<std::vector<double>>& moments_v() { return v_; }
  const std::vector<std::vector<double>>& moments_m() const { return m_; }
  const std::vector<std::vector<double>>& moments_v() const { return v_; }
  void set_step_count(int64_t t) { t_ = t; }

 private:
  std::vector<Tensor> params_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace wavesp
