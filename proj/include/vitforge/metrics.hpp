#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vitforge/errors.hpp"

namespace vitforge {

// Counts of true class (rows) vs predicted class (columns).
struct ConfusionMatrix {
  std::vector<std::string> class_names;
  std::vector<std::vector<long long>> counts;

  int num_classes() const { return static_cast<int>(counts.size()); }

  long long total() const {
    long long n = 0;
    for (const auto& row : counts) {
      for (const long long c : row) n += c;
    }
    return n;
  }

  long long trace() const {
    long long n = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) n += counts[i][i];
    return n;
  }

  double accuracy() const {
    return static_cast<double>(trace()) / static_cast<double>(total());
  }

  long long row_sum(int r) const {
    return std::accumulate(counts[static_cast<std::size_t>(r)].begin(),
                           counts[static_cast<std::size_t>(r)].end(), 0LL);
  }

  long long col_sum(int c) const {
    long long n = 0;
    for (const auto& row : counts) n += row[static_cast<std::size_t>(c)];
    return n;
  }

  static ConfusionMatrix from_counts(std::vector<std::vector<long long>> counts,
                                     std::vector<std::string> names) {
    ConfusionMatrix cm;
    cm.counts = std::move(counts);
    cm.class_names = std::move(names);
    return cm;
  }
};

inline ConfusionMatrix confusion_matrix(std::span<const int> truth,
                                        std::span<const int> predicted,
                                        int num_classes,
                                        std::vector<std::string> class_names = {}) {
  if (truth.size() != predicted.size()) {
    throw DimensionError("confusion_matrix: truth length " +
                         std::to_string(truth.size()) +
                         " does not match predictions length " +
                         std::to_string(predicted.size()));
  }
  if (truth.empty()) throw DataError("confusion_matrix: no samples");
  ConfusionMatrix cm;
  cm.counts.assign(static_cast<std::size_t>(num_classes),
                   std::vector<long long>(static_cast<std::size_t>(num_classes), 0));
  if (class_names.empty()) {
    for (int c = 0; c < num_classes; ++c) class_names.push_back(std::to_string(c));
  }
  cm.class_names = std::move(class_names);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
      throw DataError("confusion_matrix: label out of range at sample " +
                      std::to_string(i));
    }
    cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)]++;
  }
  return cm;
}

struct ClassMetrics {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long long support = 0;
  bool degenerate = false;  // some denominator was zero; the rate was set to 0
};

struct AverageMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ClassificationReport {
  std::vector<ClassMetrics> classes;
  double accuracy = 0.0;
  AverageMetrics macro_avg;
  AverageMetrics weighted_avg;
  long long total_support = 0;
};

// Per-class precision/recall/F1 with macro and support-weighted averages.
// Zero-denominator rates are reported as 0.0 with the degenerate flag set
// instead of propagating NaN.
inline ClassificationReport classification_report(const ConfusionMatrix& cm) {
  const long long total = cm.total();
  if (total <= 0) throw DataError("classification_report: empty confusion matrix");
  ClassificationReport report;
  report.total_support = total;
  report.accuracy = cm.accuracy();

  const int n = cm.num_classes();
  for (int c = 0; c < n; ++c) {
    ClassMetrics m;
    m.name = cm.class_names[static_cast<std::size_t>(c)];
    m.support = cm.row_sum(c);
    const long long tp = cm.counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
    const long long pred = cm.col_sum(c);
    if (pred > 0) {
      m.precision = static_cast<double>(tp) / static_cast<double>(pred);
    } else {
      m.degenerate = true;
    }
    if (m.support > 0) {
      m.recall = static_cast<double>(tp) / static_cast<double>(m.support);
    } else {
      m.degenerate = true;
    }
    if (m.precision + m.recall > 0.0) {
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    } else {
      m.degenerate = true;
    }
    report.classes.push_back(std::move(m));
  }

  for (const auto& m : report.classes) {
    report.macro_avg.precision += m.precision / n;
    report.macro_avg.recall += m.recall / n;
    report.macro_avg.f1 += m.f1 / n;
    const double w = static_cast<double>(m.support) / static_cast<double>(total);
    report.weighted_avg.precision += w * m.precision;
    report.weighted_avg.recall += w * m.recall;
    report.weighted_avg.f1 += w * m.f1;
  }
  return report;
}

// One evaluated sample: truth, argmax prediction, and the softmax probability
// of the positive class.
struct ScoredPrediction {
  int truth = 0;
  int predicted = 0;
  float positive_prob = 0.0f;
};

// ROC-AUC in the Mann-Whitney formulation: the probability that a uniformly
// random positive outscores a uniformly random negative, ties counted 1/2.
// Computed from average ranks, which equals the trapezoidal area under the
// ROC curve over all distinct thresholds.
inline double roc_auc(std::span<const ScoredPrediction> samples, int positive_class) {
  std::vector<std::pair<double, bool>> scored;  // (score, is_positive)
  scored.reserve(samples.size());
  long long positives = 0, negatives = 0;
  for (const auto& s : samples) {
    const bool pos = s.truth == positive_class;
    scored.emplace_back(static_cast<double>(s.positive_prob), pos);
    (pos ? positives : negatives)++;
  }
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetricError("roc_auc undefined: need at least one positive and "
                               "one negative sample");
  }
  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // average ranks over tied groups; rank sums of halves stay exact in double
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < scored.size()) {
    std::size_t j = i;
    while (j + 1 < scored.size() && scored[j + 1].first == scored[i].first) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (scored[k].second) positive_rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double u = positive_rank_sum -
                   static_cast<double>(positives) * (static_cast<double>(positives) + 1.0) / 2.0;
  return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

namespace detail {

inline std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

inline std::string format_rate(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace detail

// Plain-text classification report: right-aligned name column sized to the
// longest class name (at least the "weighted avg" row), four 9-wide columns,
// two-decimal rates, integer support, with the accuracy row carrying only
// the f1-score and support cells.
inline std::string render_report_text(const ClassificationReport& report) {
  std::size_t width = std::string("weighted avg").size();
  for (const auto& m : report.classes) width = std::max(width, m.name.size());

  const auto row = [&](const std::string& name, const std::string& a,
                       const std::string& b, const std::string& c,
                       const std::string& d) {
    return detail::pad_left(name, width) + "  " + detail::pad_left(a, 9) + " " +
           detail::pad_left(b, 9) + " " + detail::pad_left(c, 9) + " " +
           detail::pad_left(d, 9) + "\n";
  };

  std::string out = row("", "precision", "recall", "f1-score", "support");
  out += "\n";
  for (const auto& m : report.classes) {
    out += row(m.name, detail::format_rate(m.precision), detail::format_rate(m.recall),
               detail::format_rate(m.f1), std::to_string(m.support));
  }
  out += "\n";
  out += row("accuracy", "", "", detail::format_rate(report.accuracy),
             std::to_string(report.total_support));
  out += row("macro avg", detail::format_rate(report.macro_avg.precision),
             detail::format_rate(report.macro_avg.recall),
             detail::format_rate(report.macro_avg.f1),
             std::to_string(report.total_support));
  out += row("weighted avg", detail::format_rate(report.weighted_avg.precision),
             detail::format_rate(report.weighted_avg.recall),
             detail::format_rate(report.weighted_avg.f1),
             std::to_string(report.total_support));
  return out;
}

// Text rendering of the confusion matrix, rows = true class.
inline std::string render_confusion_text(const ConfusionMatrix& cm) {
  std::size_t width = 6;
  for (const auto& name : cm.class_names) width = std::max(width, name.size());
  std::string out = detail::pad_left("", width + 2);
  for (const auto& name : cm.class_names) {
    out += " " + detail::pad_left(name, width);
  }
  out += "\n";
  for (int r = 0; r < cm.num_classes(); ++r) {
    out += detail::pad_left(cm.class_names[static_cast<std::size_t>(r)], width + 2);
    for (int c = 0; c < cm.num_classes(); ++c) {
      out += " " + detail::pad_left(
                       std::to_string(cm.counts[static_cast<std::size_t>(r)]
                                               [static_cast<std::size_t>(c)]),
                       width);
    }
    out += "\n";
  }
  return out;
}

// Evaluation summary line in the fixed grammar.
inline std::string format_test_line(double loss, double accuracy_pct) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "Test Loss: %.4f, Test Accuracy: %.2f%%", loss,
                accuracy_pct);
  return buf;
}

// Machine-readable twin of the text report, full precision.
inline nlohmann::json report_to_json(const ClassificationReport& report) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& m : report.classes) {
    classes.push_back({{"name", m.name},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support},
                       {"degenerate", m.degenerate}});
  }
  return {{"accuracy", report.accuracy},
          {"classes", classes},
          {"macro_avg",
           {{"precision", report.macro_avg.precision},
            {"recall", report.macro_avg.recall},
            {"f1", report.macro_avg.f1}}},
          {"weighted_avg",
           {{"precision", report.weighted_avg.precision},
            {"recall", report.weighted_avg.recall},
            {"f1", report.weighted_avg.f1}}},
          {"total_support", report.total_support}};
}

inline ClassificationReport report_from_json(const nlohmann::json& j) {
  ClassificationReport report;
  try {
    report.accuracy = j.at("accuracy").get<double>();
    report.total_support = j.at("total_support").get<long long>();
    for (const auto& c : j.at("classes")) {
      ClassMetrics m;
      m.name = c.at("name").get<std::string>();
      m.precision = c.at("precision").get<double>();
      m.recall = c.at("recall").get<double>();
      m.f1 = c.at("f1").get<double>();
      m.support = c.at("support").get<long long>();
      m.degenerate = c.at("degenerate").get<bool>();
      report.classes.push_back(std::move(m));
    }
    report.macro_avg = {j.at("macro_avg").at("precision").get<double>(),
                        j.at("macro_avg").at("recall").get<double>(),
                        j.at("macro_avg").at("f1").get<double>()};
    report.weighted_avg = {j.at("weighted_avg").at("precision").get<double>(),
                           j.at("weighted_avg").at("recall").get<double>(),
                           j.at("weighted_avg").at("f1").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("classification report JSON: ") + e.what());
  }
  return report;
}

}  // namespace vitforge
