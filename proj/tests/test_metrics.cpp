#include "vitforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "vitforge/errors.hpp"
#include "vitforge/rng.hpp"

namespace vitforge {
namespace {

ConfusionMatrix paper_matrix() {
  return ConfusionMatrix::from_counts({{149, 10}, {10, 241}}, {"fire", "nofire"});
}

// ---------------------------------------------------------------------------
// confusion matrix
// ---------------------------------------------------------------------------

TEST(Confusion, AllCorrectIsDiagonal) {
  const std::vector<int> t = {0, 1, 1, 0, 1};
  ConfusionMatrix cm = confusion_matrix(t, t, 2, {"fire", "nofire"});
  EXPECT_EQ(cm.counts[0][0], 2);
  EXPECT_EQ(cm.counts[1][1], 3);
  EXPECT_EQ(cm.counts[0][1], 0);
  EXPECT_EQ(cm.counts[1][0], 0);
  EXPECT_DOUBLE_EQ(cm.accuracy(), 1.0);
}

TEST(Confusion, SingleWrongSample) {
  const std::vector<int> t = {0};
  const std::vector<int> p = {1};
  ConfusionMatrix cm = confusion_matrix(t, p, 2);
  EXPECT_EQ(cm.counts[0][1], 1);
  EXPECT_DOUBLE_EQ(cm.accuracy(), 0.0);
}

TEST(Confusion, LengthMismatchRejected) {
  const std::vector<int> t = {0, 1};
  const std::vector<int> p = {0};
  EXPECT_THROW(confusion_matrix(t, p, 2), DimensionError);
}

TEST(Confusion, PaperCountsTotalAndAccuracy) {
  ConfusionMatrix cm = paper_matrix();
  EXPECT_EQ(cm.total(), 410);
  EXPECT_NEAR(cm.accuracy(), 0.951220, 1e-6);
}

// ---------------------------------------------------------------------------
// classification report
// ---------------------------------------------------------------------------

TEST(Report, PaperMatrixHandArithmetic) {
  const ClassificationReport r = classification_report(paper_matrix());
  EXPECT_NEAR(r.accuracy, 0.951220, 1e-6);
  EXPECT_NEAR(r.classes[0].precision, 0.937107, 1e-6);
  EXPECT_NEAR(r.classes[0].recall, 0.937107, 1e-6);
  EXPECT_NEAR(r.classes[1].recall, 0.960159, 1e-6);
  EXPECT_EQ(r.classes[0].support, 159);
  EXPECT_EQ(r.classes[1].support, 251);

  // the paper's own printed rates (0.96 fire recall, 0.97 accuracy) disagree
  // with its printed counts; the counts are authoritative here
  EXPECT_GT(std::abs(r.classes[0].recall - 0.96), 0.01);
  EXPECT_GT(std::abs(r.accuracy - 0.97), 0.01);
}

TEST(Report, PerfectDiagonalGivesOnes) {
  ConfusionMatrix cm = ConfusionMatrix::from_counts({{5, 0}, {0, 7}}, {"a", "b"});
  const ClassificationReport r = classification_report(cm);
  for (const auto& c : r.classes) {
    EXPECT_DOUBLE_EQ(c.precision, 1.0);
    EXPECT_DOUBLE_EQ(c.recall, 1.0);
    EXPECT_DOUBLE_EQ(c.f1, 1.0);
    EXPECT_FALSE(c.degenerate);
  }
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
}

TEST(Report, ZeroPredictionsFlaggedDegenerate) {
  // class b never predicted -> precision 0 with the degenerate flag
  ConfusionMatrix cm = ConfusionMatrix::from_counts({{4, 0}, {3, 0}}, {"a", "b"});
  const ClassificationReport r = classification_report(cm);
  EXPECT_DOUBLE_EQ(r.classes[1].precision, 0.0);
  EXPECT_TRUE(r.classes[1].degenerate);
}

TEST(Report, WeightedRecallEqualsAccuracyExactly) {
  Xoshiro256ss rng(80);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 20 + static_cast<int>(rng.next_below(100));
    std::vector<int> t, p;
    for (int i = 0; i < n; ++i) {
      t.push_back(static_cast<int>(rng.next_below(3)));
      p.push_back(static_cast<int>(rng.next_below(3)));
    }
    ConfusionMatrix cm = confusion_matrix(t, p, 3);
    const ClassificationReport r = classification_report(cm);
    EXPECT_NEAR(r.weighted_avg.recall, r.accuracy, 1e-12);
    EXPECT_NEAR(r.accuracy,
                static_cast<double>(cm.trace()) / static_cast<double>(cm.total()),
                0.0);
  }
}

TEST(Report, OrderIndependent) {
  Xoshiro256ss rng(81);
  std::vector<int> t, p;
  for (int i = 0; i < 200; ++i) {
    t.push_back(static_cast<int>(rng.next_below(2)));
    p.push_back(static_cast<int>(rng.next_below(2)));
  }
  ConfusionMatrix a = confusion_matrix(t, p, 2);
  // permute sample order
  std::vector<std::size_t> order(t.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  fisher_yates(order, rng);
  std::vector<int> t2, p2;
  for (const std::size_t i : order) {
    t2.push_back(t[i]);
    p2.push_back(p[i]);
  }
  ConfusionMatrix b = confusion_matrix(t2, p2, 2);
  EXPECT_EQ(a.counts, b.counts);
}

// ---------------------------------------------------------------------------
// roc auc
// ---------------------------------------------------------------------------

double brute_force_auc(const std::vector<ScoredPrediction>& s, int positive) {
  double wins = 0;
  long long pairs = 0;
  for (const auto& a : s) {
    if (a.truth != positive) continue;
    for (const auto& b : s) {
      if (b.truth == positive) continue;
      ++pairs;
      if (a.positive_prob > b.positive_prob) {
        wins += 1.0;
      } else if (a.positive_prob == b.positive_prob) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<double>(pairs);
}

TEST(RocAuc, PerfectSeparationIsOne) {
  std::vector<ScoredPrediction> s = {
      {0, 0, 0.9f}, {0, 0, 0.8f}, {1, 1, 0.2f}, {1, 1, 0.1f}};
  EXPECT_DOUBLE_EQ(roc_auc(s, 0), 1.0);
}

TEST(RocAuc, AllTiedIsHalf) {
  std::vector<ScoredPrediction> s = {{0, 0, 0.5f}, {0, 0, 0.5f}, {1, 0, 0.5f}};
  EXPECT_DOUBLE_EQ(roc_auc(s, 0), 0.5);
}

TEST(RocAuc, HandPairExample) {
  // pos {0.9, 0.4}, neg {0.6, 0.1} -> 3 of 4 pairs won -> 0.75
  std::vector<ScoredPrediction> s = {
      {0, 0, 0.9f}, {0, 0, 0.4f}, {1, 0, 0.6f}, {1, 1, 0.1f}};
  EXPECT_DOUBLE_EQ(roc_auc(s, 0), 0.75);
}

TEST(RocAuc, SingleClassUndefined) {
  std::vector<ScoredPrediction> s = {{0, 0, 0.9f}, {0, 0, 0.1f}};
  EXPECT_THROW(roc_auc(s, 0), UndefinedMetricError);
}

TEST(RocAuc, RankFormEqualsBruteForceExactly) {
  Xoshiro256ss rng(82);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_below(199));
    std::vector<ScoredPrediction> s;
    bool has_pos = false, has_neg = false;
    for (int i = 0; i < n; ++i) {
      ScoredPrediction sp;
      sp.truth = static_cast<int>(rng.next_below(2));
      // quantized scores force ties
      sp.positive_prob = static_cast<float>(rng.next_below(16)) / 15.0f;
      has_pos |= sp.truth == 0;
      has_neg |= sp.truth == 1;
      s.push_back(sp);
    }
    if (!has_pos || !has_neg) continue;
    EXPECT_EQ(roc_auc(s, 0), brute_force_auc(s, 0)) << "trial " << trial;
  }
}

TEST(RocAuc, MonotoneTransformInvariance) {
  Xoshiro256ss rng(83);
  std::vector<ScoredPrediction> s;
  for (int i = 0; i < 120; ++i) {
    s.push_back({static_cast<int>(rng.next_below(2)), 0,
                 static_cast<float>(rng.next_double())});
  }
  const double base = roc_auc(s, 0);
  std::vector<ScoredPrediction> exp_scores = s, affine = s;
  for (auto& e : exp_scores) e.positive_prob = std::exp(e.positive_prob);
  for (auto& e : affine) e.positive_prob = 3.0f * e.positive_prob + 11.0f;
  EXPECT_NEAR(roc_auc(exp_scores, 0), base, 1e-12);
  EXPECT_NEAR(roc_auc(affine, 0), base, 1e-12);
}

TEST(RocAuc, ComplementSymmetry) {
  Xoshiro256ss rng(84);
  std::vector<ScoredPrediction> s;
  for (int i = 0; i < 150; ++i) {
    s.push_back({static_cast<int>(rng.next_below(2)), 0,
                 static_cast<float>(rng.next_below(32)) / 31.0f});
  }
  const double base = roc_auc(s, 0);
  // complemented scores for the same positive class: auc' = 1 - auc
  std::vector<ScoredPrediction> complemented = s;
  for (auto& e : complemented) e.positive_prob = 1.0f - e.positive_prob;
  EXPECT_NEAR(base + roc_auc(complemented, 0), 1.0, 1e-12);
  // flipping which class is positive (same scores) is the same identity
  EXPECT_NEAR(base + roc_auc(s, 1), 1.0, 1e-12);
  // doing both flips restores the original value
  EXPECT_NEAR(roc_auc(complemented, 1), base, 1e-12);
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

TEST(Render, PaperReportLayoutGolden) {
  // the paper's own printed values rendered in the pinned report grammar
  ClassificationReport r;
  r.classes = {{"fire", 0.96, 0.96, 0.96, 159, false},
               {"nofire", 0.97, 0.98, 0.97, 251, false}};
  r.accuracy = 0.97;
  r.macro_avg = {0.97, 0.97, 0.97};
  r.weighted_avg = {0.97, 0.97, 0.97};
  r.total_support = 410;

  const std::string expected =
      "              precision    recall  f1-score   support\n"
      "\n"
      "        fire       0.96      0.96      0.96       159\n"
      "      nofire       0.97      0.98      0.97       251\n"
      "\n"
      "    accuracy                           0.97       410\n"
      "   macro avg       0.97      0.97      0.97       410\n"
      "weighted avg       0.97      0.97      0.97       410\n";
  EXPECT_EQ(render_report_text(r), expected);
}

TEST(Render, TwoDecimalRounding) {
  ClassificationReport r;
  r.classes = {{"fire", 0.951220, 0.5, 0.5, 1, false}};
  r.accuracy = 0.951220;
  r.total_support = 1;
  const std::string text = render_report_text(r);
  EXPECT_NE(text.find("0.95"), std::string::npos);
  EXPECT_EQ(text.find("0.9512"), std::string::npos);
}

TEST(Render, TestLineGolden) {
  EXPECT_EQ(format_test_line(0.1237, 96.10),
            "Test Loss: 0.1237, Test Accuracy: 96.10%");
}

TEST(Render, ConfusionTextContainsCounts) {
  const std::string text = render_confusion_text(paper_matrix());
  EXPECT_NE(text.find("149"), std::string::npos);
  EXPECT_NE(text.find("241"), std::string::npos);
  EXPECT_NE(text.find("fire"), std::string::npos);
}

TEST(Render, JsonTwinRoundTrips) {
  const ClassificationReport r = classification_report(paper_matrix());
  const nlohmann::json j = report_to_json(r);
  const ClassificationReport back = report_from_json(j);
  EXPECT_EQ(back.classes.size(), r.classes.size());
  EXPECT_DOUBLE_EQ(back.accuracy, r.accuracy);
  for (std::size_t i = 0; i < r.classes.size(); ++i) {
    EXPECT_EQ(back.classes[i].name, r.classes[i].name);
    EXPECT_DOUBLE_EQ(back.classes[i].precision, r.classes[i].precision);
    EXPECT_DOUBLE_EQ(back.classes[i].recall, r.classes[i].recall);
    EXPECT_DOUBLE_EQ(back.classes[i].f1, r.classes[i].f1);
    EXPECT_EQ(back.classes[i].support, r.classes[i].support);
  }
  EXPECT_DOUBLE_EQ(back.weighted_avg.f1, r.weighted_avg.f1);
}

}  // namespace
}  // namespace vitforge
