#include "wavesp/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "wavesp/rng.hpp"

using namespace wavesp;

namespace {

ScoreSet make_scores(const std::vector<double>& bona, const std::vector<double>& spoof) {
  ScoreSet s;
  int i = 0;
  for (double v : bona) s.entries.push_back({"b" + std::to_string(i++), v, Label::kBonafide});
  i = 0;
  for (double v : spoof) s.entries.push_back({"s" + std::to_string(i++), v, Label::kSpoof});
  return s;
}

ScoreSet random_scores(RngStream& rng, int max_size = 50) {
  ScoreSet s;
  const int nb = rng.uniform_int(1, max_size / 2);
  const int nf = rng.uniform_int(1, max_size / 2);
  const double sep = rng.uniform(-0.5, 1.0);  // class separation, sometimes negative
  for (int i = 0; i < nb; ++i)
    s.entries.push_back({"b" + std::to_string(i), rng.normal() + sep, Label::kBonafide});
  for (int i = 0; i < nf; ++i)
    s.entries.push_back({"s" + std::to_string(i), rng.normal(), Label::kSpoof});
  return s;
}

}  // namespace

TEST(Eer, PerfectSeparationIsZero) {
  auto [e, thr] = eer(make_scores({0.9, 0.8, 0.7}, {0.3, 0.2, 0.1}));
  EXPECT_DOUBLE_EQ(e, 0.0);
  EXPECT_GT(thr, 0.3);
  EXPECT_LE(thr, 0.7);
}

TEST(Eer, AllTiedScoresGiveChance) {
  auto [e, thr] = eer(make_scores({0.5, 0.5}, {0.5, 0.5, 0.5}));
  EXPECT_DOUBLE_EQ(e, 0.5);
}

TEST(Eer, SpecExampleMatchesBruteForce) {
  const ScoreSet s = make_scores({0.9, 0.8, 0.4}, {0.7, 0.3, 0.2});
  auto [e, thr] = eer(s);
  EXPECT_NEAR(e, 1.0 / 3.0, 1e-12);  // frozen from the exhaustive sweep
  EXPECT_NEAR(e, oracle::eer_bruteforce(s), 1e-12);
}

TEST(Eer, SingleClassThrows) {
  EXPECT_THROW(eer(make_scores({0.5}, {})), std::invalid_argument);
  EXPECT_THROW(eer(make_scores({}, {0.5})), std::invalid_argument);
}

TEST(Eer, InterpolationStaysWithinAdjacentOperatingPoints) {
  RngStream rng(31, "eer");
  for (int trial = 0; trial < 200; ++trial) {
    const ScoreSet s = random_scores(rng);
    const double e = eer(s).first;
    const auto [a, b] = oracle::eer_bracket(s);
    const double lo = std::min(a.max_rate(), b.max_rate());
    const double hi = std::max(a.max_rate(), b.max_rate());
    EXPECT_GE(e, lo - 1e-12) << "trial " << trial;
    EXPECT_LE(e, hi + 1e-12) << "trial " << trial;
  }
}

TEST(Eer, MonotoneTransformInvariance) {
  RngStream rng(37, "mono");
  for (int trial = 0; trial < 50; ++trial) {
    ScoreSet s = random_scores(rng);
    const double e0 = eer(s).first;
    const double a0 = [&] {
      double auc;
      auc_f1_acc(s, 0.0, &auc, nullptr, nullptr);
      return auc;
    }();
    // Random strictly increasing map: scaled tanh plus an affine ramp.
    const double c1 = rng.uniform(0.5, 3.0), c2 = rng.uniform(0.1, 2.0);
    for (auto& entry : s.entries)
      entry.score = c1 * std::tanh(entry.score) + c2 * entry.score + 1.7;
    EXPECT_NEAR(eer(s).first, e0, 1e-12);
    double a1;
    auc_f1_acc(s, 0.0, &a1, nullptr, nullptr);
    EXPECT_NEAR(a1, a0, 1e-12);
  }
}

TEST(EerCi, ZeroEerGivesZeroWidth) { EXPECT_DOUBLE_EQ(eer_ci(0.0, 10, 10), 0.0); }

TEST(EerCi, ReferenceValue) {
  // 1.96 * 0.5 * sqrt(0.1*0.9*200/10000)
  EXPECT_NEAR(eer_ci(0.10, 100, 100), 0.0415779, 1e-6);
}

TEST(EerCi, SymmetricInClassCounts) {
  EXPECT_DOUBLE_EQ(eer_ci(0.2, 30, 70), eer_ci(0.2, 70, 30));
}

TEST(EerCi, InvalidInputsThrow) {
  EXPECT_THROW(eer_ci(1.5, 10, 10), std::invalid_argument);
  EXPECT_THROW(eer_ci(0.1, 0, 10), std::invalid_argument);
}

TEST(Auc, PerfectSeparationScoresOne) {
  const ScoreSet s = make_scores({0.9, 0.8}, {0.2, 0.1});
  auto [e, thr] = eer(s);
  double auc, f1, acc;
  auc_f1_acc(s, thr, &auc, &f1, &acc);
  EXPECT_DOUBLE_EQ(auc, 1.0);
  EXPECT_DOUBLE_EQ(f1, 1.0);
  EXPECT_DOUBLE_EQ(acc, 1.0);
}

TEST(Auc, AllTiesGiveHalf) {
  double auc;
  auc_f1_acc(make_scores({1.0, 1.0}, {1.0, 1.0, 1.0}), 0.5, &auc, nullptr, nullptr);
  EXPECT_DOUBLE_EQ(auc, 0.5);
}

TEST(Auc, MatchesPairCountOracleExactly) {
  RngStream rng(41, "auc");
  for (int trial = 0; trial < 100; ++trial) {
    ScoreSet s = random_scores(rng, 20);
    // Quantize to force ties in some trials.
    if (trial % 3 == 0)
      for (auto& entry : s.entries) entry.score = std::round(entry.score * 4.0) / 4.0;
    double auc;
    auc_f1_acc(s, 0.0, &auc, nullptr, nullptr);
    EXPECT_NEAR(auc, oracle::auc_paircount(s), 1e-12) << "trial " << trial;
  }
}

TEST(Auc, EerZeroIffAucOne) {
  RngStream rng(43, "iff");
  for (int trial = 0; trial < 100; ++trial) {
    const ScoreSet s = random_scores(rng, 16);
    const double e = eer(s).first;
    double auc;
    auc_f1_acc(s, 0.0, &auc, nullptr, nullptr);
    // With continuous scores cross-class ties have probability zero.
    EXPECT_EQ(e == 0.0, auc == 1.0) << "trial " << trial;
  }
}

TEST(Report, CiFieldConsistentWithFormula) {
  RngStream rng(47, "rep");
  const ScoreSet s = random_scores(rng);
  const EvalReport r = evaluate_scores(s);
  EXPECT_DOUBLE_EQ(r.eer_ci_halfwidth, eer_ci(r.eer, r.n_real, r.n_fake));
  EXPECT_EQ(r.n_real + r.n_fake, static_cast<int>(s.entries.size()));
}

TEST(ScoreFile, RoundTripAndFormat) {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "wavesp_scores.txt").string();
  ScoreSet s = make_scores({0.123456789, -1.5}, {0.75});
  write_scores(s, path);

  std::ifstream f(path, std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(f)),
                      std::istreambuf_iterator<char>());
  EXPECT_EQ(content, "b0 0.123457 bonafide\nb1 -1.500000 bonafide\ns0 0.750000 spoof\n");

  const ScoreSet back = read_scores(path);
  ASSERT_EQ(back.entries.size(), 3u);
  EXPECT_EQ(back.entries[0].utt_id, "b0");
  EXPECT_NEAR(back.entries[0].score, 0.123457, 1e-9);
  EXPECT_EQ(back.entries[2].label, Label::kSpoof);
  fs::remove(path);
}
