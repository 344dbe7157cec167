#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "wavesp/tensor.hpp"

namespace wavesp {

enum class Label { kBonafide, kSpoof };

inline const char* label_name(Label l) {
  return l == Label::kBonafide ? "bonafide" : "spoof";
}

inline Label label_from_name(const std::string& s) {
  if (s == "bonafide") return Label::kBonafide;
  if (s == "spoof") return Label::kSpoof;
  throw std::invalid_argument("unknown label '" + s + "'");
}

struct ScoreEntry {
  std::string utt_id;
  double score = 0.0;  // higher means more bonafide
  Label label = Label::kBonafide;
};

struct ScoreSet {
  std::vector<ScoreEntry> entries;

  int n_real() const {
    int n = 0;
    for (const auto& e : entries) n += e.label == Label::kBonafide;
    return n;
  }
  int n_fake() const { return static_cast<int>(entries.size()) - n_real(); }
};

struct EvalReport {
  double eer = 0.0;
  double eer_ci_halfwidth = 0.0;
  double threshold = 0.0;
  double acc = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
  int n_real = 0;
  int n_fake = 0;
};

namespace detail {

// FAR = fraction of spoof with score >= thr, FRR = fraction of bonafide with
// score < thr.
inline std::pair<double, double> far_frr(const ScoreSet& s, double thr) {
  int fa = 0, fr = 0, nr = 0, nf = 0;
  for (const auto& e : s.entries) {
    if (e.label == Label::kSpoof) {
      ++nf;
      fa += e.score >= thr;
    } else {
      ++nr;
      fr += e.score < thr;
    }
  }
  return {static_cast<double>(fa) / nf, static_cast<double>(fr) / nr};
}

}  // namespace detail

// Equal error rate with the crossing point resolved by linear interpolation
// between the two adjacent operating points where FAR-FRR changes sign.
// Returns (eer, interpolated threshold).
inline std::pair<double, double> eer(const ScoreSet& scores) {
  check_arg(scores.n_real() >= 1 && scores.n_fake() >= 1,
            "eer: both classes must be present");
  std::set<double> uniq;
  double mx = -1e300;
  for (const auto& e : scores.entries) {
    uniq.insert(e.score);
    mx = std::max(mx, e.score);
  }
  std::vector<double> thresholds(uniq.begin(), uniq.end());
  thresholds.push_back(mx + 1.0);  // all-reject sentinel: FAR 0, FRR 1

  double prev_thr = thresholds[0];
  auto [prev_far, prev_frr] = detail::far_frr(scores, prev_thr);
  if (prev_far - prev_frr == 0.0) return {prev_far, prev_thr};
  for (size_t i = 1; i < thresholds.size(); ++i) {
    const double thr = thresholds[i];
    auto [far, frr] = detail::far_frr(scores, thr);
    const double d_prev = prev_far - prev_frr;
    const double d_cur = far - frr;
    if (d_cur == 0.0) return {far, thr};  // exact crossing, lowest such threshold
    if (d_prev > 0.0 && d_cur < 0.0) {
      const double t = d_prev / (d_prev - d_cur);
      return {prev_far + t * (far - prev_far), prev_thr + t * (thr - prev_thr)};
    }
    prev_thr = thr;
    prev_far = far;
    prev_frr = frr;
  }
  // FAR-FRR never reached zero; the closest operating point is the last one.
  return {0.5 * (prev_far + prev_frr), prev_thr};
}

// 95% parametric confidence-interval half-width for an EER estimate:
// 1.96 * 0.5 * sqrt(eer*(1-eer)*(n_r+n_f)/(n_r*n_f)).
inline double eer_ci(double eer_value, int n_real, int n_fake) {
  check_arg(eer_value >= 0.0 && eer_value <= 1.0, "eer_ci: eer must be in [0,1]");
  check_arg(n_real >= 1 && n_fake >= 1, "eer_ci: counts must be >= 1");
  const double sigma =
      0.5 * std::sqrt(eer_value * (1.0 - eer_value) *
                      (static_cast<double>(n_real) + n_fake) /
                      (static_cast<double>(n_real) * n_fake));
  return 1.96 * sigma;
}

// AUC via the Mann-Whitney rank statistic (midranks, so cross-class ties
// count one half), plus accuracy and F1 (bonafide positive) at `threshold`.
inline void auc_f1_acc(const ScoreSet& scores, double threshold, double* auc,
                       double* f1, double* acc) {
  const int nr = scores.n_real(), nf = scores.n_fake();
  check_arg(nr >= 1 && nf >= 1, "auc_f1_acc: both classes must be present");

  std::vector<const ScoreEntry*> sorted;
  sorted.reserve(scores.entries.size());
  for (const auto& e : scores.entries) sorted.push_back(&e);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoreEntry* a, const ScoreEntry* b) {
                     return a->score < b->score;
                   });
  // Midrank sum over the bonafide class.
  double rank_sum = 0.0;
  size_t i = 0;
  while (i < sorted.size()) {
    size_t j = i;
    while (j < sorted.size() && sorted[j]->score == sorted[i]->score) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k = i; k < j; ++k)
      if (sorted[k]->label == Label::kBonafide) rank_sum += midrank;
    i = j;
  }
  if (auc)
    *auc = (rank_sum - 0.5 * nr * (nr + 1.0)) / (static_cast<double>(nr) * nf);

  int tp = 0, tn = 0, fp = 0, fn = 0;
  for (const auto& e : scores.entries) {
    const bool pred_bona = e.score >= threshold;
    if (e.label == Label::kBonafide)
      pred_bona ? ++tp : ++fn;
    else
      pred_bona ? ++fp : ++tn;
  }
  if (acc) *acc = static_cast<double>(tp + tn) / scores.entries.size();
  if (f1) {
    const double denom = 2.0 * tp + fp + fn;
    *f1 = denom > 0.0 ? 2.0 * tp / denom : 0.0;
  }
}

// Full evaluation at the EER operating point.
inline EvalReport evaluate_scores(const ScoreSet& scores) {
  EvalReport r;
  auto [e, thr] = eer(scores);
  r.eer = e;
  r.threshold = thr;
  r.n_real = scores.n_real();
  r.n_fake = scores.n_fake();
  r.eer_ci_halfwidth = eer_ci(e, r.n_real, r.n_fake);
  auc_f1_acc(scores, thr, &r.auc, &r.f1, &r.acc);
  return r;
}

// ---------------------------------------------------------------------------
// Score file format: one ASCII line per trial, "utt_id score label",
// scores with 6 decimals, LF endings.
// ---------------------------------------------------------------------------

inline void write_scores(const ScoreSet& scores, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open score file for writing: " + path);
  char buf[64];
  for (const auto& e : scores.entries) {
    std::snprintf(buf, sizeof(buf), "%.6f", e.score);
    out << e.utt_id << ' ' << buf << ' ' << label_name(e.label) << '\n';
  }
}

inline ScoreSet read_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open score file: " + path);
  ScoreSet s;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    ScoreEntry e;
    std::string label;
    if (!(is >> e.utt_id >> e.score >> label))
      throw std::runtime_error("malformed score line: " + line);
    e.label = label_from_name(label);
    s.entries.push_back(std::move(e));
  }
  return s;
}

}  // namespace wavesp
