#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace gendetect::eval {

// Labels: 1 = positive (misclassified or OOD), 0 = negative.

// Mann-Whitney statistic with average ranks for tied scores.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Threshold t is the largest value for which the fraction of positives with
// score >= t is at least `tpr`; returns the fraction of negatives scoring
// strictly below t.
double tnr_at_tpr(std::span<const double> scores, std::span<const int> labels, double tpr = 0.95);

struct RocPoint {
  double fpr = 0, tpr = 0;
  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

// ROC polyline from (0,0) to (1,1), one vertex per distinct score.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);
double trapezoid_area(std::span<const RocPoint> points);

struct Split {
  std::vector<std::size_t> train, val, test;
};

// Stratified 80/10/10 split: within each label the samples are shuffled by the
// seed, and position j of n goes to train if (j+0.5)/n < 0.8, to val if below
// 0.9, else to test. Index lists are returned in ascending order.
Split split_indices(std::span<const int> labels, std::uint64_t seed);

}  // namespace gendetect::eval
