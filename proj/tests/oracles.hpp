// Independent reference implementations used to pin expected values.
// Everything here is written as plainly as possible and must stay decoupled
// from the library code paths it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <set>
#include <vector>

#include "wavesp/metrics.hpp"

namespace oracle {

// Periodic sliding-window correlation with downsampling:
// y[j] = sum_t x[(stride*j + t) mod n] * f[t]
inline std::vector<double> conv_downsample(const std::vector<double>& x,
                                           const std::vector<double>& f, int stride) {
  const int n = static_cast<int>(x.size());
  const int out_n = n / stride;
  std::vector<double> y(static_cast<size_t>(out_n), 0.0);
  for (int j = 0; j < out_n; ++j)
    for (int t = 0; t < static_cast<int>(f.size()); ++t)
      y[static_cast<size_t>(j)] +=
          x[static_cast<size_t>((stride * j + t) % n)] * f[static_cast<size_t>(t)];
  return y;
}

// Adjoint: upsample then periodic convolution.
inline std::vector<double> upsample_conv(const std::vector<double>& c,
                                         const std::vector<double>& f, int stride) {
  const int n = static_cast<int>(c.size()) * stride;
  std::vector<double> y(static_cast<size_t>(n), 0.0);
  for (int j = 0; j < static_cast<int>(c.size()); ++j)
    for (int t = 0; t < static_cast<int>(f.size()); ++t)
      y[static_cast<size_t>((stride * j + t) % n)] +=
          c[static_cast<size_t>(j)] * f[static_cast<size_t>(t)];
  return y;
}

// Unnormalized 2-D DFT by direct O(n^2) summation.
inline std::vector<std::complex<double>> dft2(const std::vector<double>& x, int rows,
                                              int cols) {
  std::vector<std::complex<double>> out(static_cast<size_t>(rows) * cols);
  const double two_pi = 2.0 * 3.141592653589793238462643383279502884;
  for (int u = 0; u < rows; ++u)
    for (int v = 0; v < cols; ++v) {
      std::complex<double> acc(0.0, 0.0);
      for (int j = 0; j < rows; ++j)
        for (int k = 0; k < cols; ++k) {
          const double ang = two_pi * (static_cast<double>(u) * j / rows +
                                       static_cast<double>(v) * k / cols);
          acc += x[static_cast<size_t>(j) * cols + k] *
                 std::complex<double>(std::cos(ang), -std::sin(ang));
        }
      out[static_cast<size_t>(u) * cols + v] = acc;
    }
  return out;
}

// Explicit per-step selective-scan recurrence.
inline std::vector<double> selective_scan(const std::vector<double>& u,
                                          const std::vector<double>& delta,
                                          const std::vector<double>& B,
                                          const std::vector<double>& C,
                                          const std::vector<double>& A,
                                          const std::vector<double>& D, int T, int d,
                                          int n) {
  std::vector<double> h(static_cast<size_t>(d) * n, 0.0);
  std::vector<double> y(static_cast<size_t>(T) * d, 0.0);
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < d; ++c) {
      double acc = 0.0;
      for (int s = 0; s < n; ++s) {
        const double a = std::exp(delta[static_cast<size_t>(t) * d + c] *
                                  A[static_cast<size_t>(c) * n + s]);
        h[static_cast<size_t>(c) * n + s] =
            a * h[static_cast<size_t>(c) * n + s] +
            delta[static_cast<size_t>(t) * d + c] * B[static_cast<size_t>(t) * n + s] *
                u[static_cast<size_t>(t) * d + c];
        acc += C[static_cast<size_t>(t) * n + s] * h[static_cast<size_t>(c) * n + s];
      }
      y[static_cast<size_t>(t) * d + c] =
          acc + D[static_cast<size_t>(c)] * u[static_cast<size_t>(t) * d + c];
    }
  }
  return y;
}

// Row-wise layer norm on plain doubles (eps matches the library default).
inline std::vector<double> layer_norm(const std::vector<double>& x, int rows, int cols,
                                      const std::vector<double>& g,
                                      const std::vector<double>& b) {
  std::vector<double> y(x.size());
  for (int i = 0; i < rows; ++i) {
    double mean = 0.0, var = 0.0;
    for (int j = 0; j < cols; ++j) mean += x[static_cast<size_t>(i) * cols + j];
    mean /= cols;
    for (int j = 0; j < cols; ++j) {
      const double d = x[static_cast<size_t>(i) * cols + j] - mean;
      var += d * d;
    }
    var /= cols;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (int j = 0; j < cols; ++j)
      y[static_cast<size_t>(i) * cols + j] =
          (x[static_cast<size_t>(i) * cols + j] - mean) * inv * g[static_cast<size_t>(j)] +
          b[static_cast<size_t>(j)];
  }
  return y;
}

inline std::vector<double> linear(const std::vector<double>& x, int rows, int in,
                                  int out, const std::vector<double>& w,
                                  const std::vector<double>& b) {
  std::vector<double> y(static_cast<size_t>(rows) * out, 0.0);
  for (int i = 0; i < rows; ++i) {
    for (int k = 0; k < in; ++k)
      for (int j = 0; j < out; ++j)
        y[static_cast<size_t>(i) * out + j] +=
            x[static_cast<size_t>(i) * in + k] * w[static_cast<size_t>(k) * out + j];
    for (int j = 0; j < out; ++j) y[static_cast<size_t>(i) * out + j] += b[static_cast<size_t>(j)];
  }
  return y;
}

// Operating point of the detection task at one threshold.
struct OperatingPoint {
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
  double max_rate() const { return std::max(far, frr); }
};

// Exhaustive threshold sweep over all distinct scores plus an all-reject
// sentinel.
inline std::vector<OperatingPoint> sweep(const wavesp::ScoreSet& s) {
  std::set<double> uniq;
  double mx = -1e300;
  for (const auto& e : s.entries) {
    uniq.insert(e.score);
    mx = std::max(mx, e.score);
  }
  std::vector<double> thresholds(uniq.begin(), uniq.end());
  thresholds.push_back(mx + 1.0);
  std::vector<OperatingPoint> points;
  for (double thr : thresholds) {
    int fa = 0, fr = 0, nr = 0, nf = 0;
    for (const auto& e : s.entries) {
      if (e.label == wavesp::Label::kSpoof) {
        ++nf;
        fa += e.score >= thr;
      } else {
        ++nr;
        fr += e.score < thr;
      }
    }
    points.push_back({thr, static_cast<double>(fa) / nf, static_cast<double>(fr) / nr});
  }
  return points;
}

// Brute-force EER estimate: min over operating points of max(FAR, FRR).
inline double eer_bruteforce(const wavesp::ScoreSet& s) {
  double best = 1.0;
  for (const OperatingPoint& p : sweep(s)) best = std::min(best, p.max_rate());
  return best;
}

// The two adjacent operating points bracketing the FAR-FRR sign change.
inline std::pair<OperatingPoint, OperatingPoint> eer_bracket(const wavesp::ScoreSet& s) {
  const auto points = sweep(s);
  for (size_t i = 0; i + 1 < points.size(); ++i) {
    const double d0 = points[i].far - points[i].frr;
    const double d1 = points[i + 1].far - points[i + 1].frr;
    if (d0 == 0.0) return {points[i], points[i]};
    if (d0 > 0.0 && d1 <= 0.0) return {points[i], points[i + 1]};
  }
  return {points.back(), points.back()};
}

// AUC by O(n^2) pairwise comparison, ties counting one half.
inline double auc_paircount(const wavesp::ScoreSet& s) {
  double wins = 0.0;
  long long pairs = 0;
  for (const auto& b : s.entries) {
    if (b.label != wavesp::Label::kBonafide) continue;
    for (const auto& f : s.entries) {
      if (f.label != wavesp::Label::kSpoof) continue;
      ++pairs;
      if (b.score > f.score) wins += 1.0;
      else if (b.score == f.score) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace oracle
