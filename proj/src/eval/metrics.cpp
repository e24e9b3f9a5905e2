#include "eval/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "common/error.hpp"
#include "common/rng.hpp"

namespace gendetect::eval {

namespace {

std::pair<std::size_t, std::size_t> count_classes(std::span<const double> scores,
                                                  std::span<const int> labels) {
  require(scores.size() == labels.size(), ErrorCode::invalid_argument,
          "scores and labels differ in length");
  std::size_t pos = 0;
  for (const int l : labels) {
    require(l == 0 || l == 1, ErrorCode::invalid_argument, "labels must be 0 or 1");
    pos += static_cast<std::size_t>(l);
  }
  const std::size_t neg = labels.size() - pos;
  require(pos > 0 && neg > 0, ErrorCode::invalid_argument,
          "metric needs both classes (positives " + std::to_string(pos) + ", negatives " +
              std::to_string(neg) + ")");
  return {pos, neg};
}

std::vector<std::size_t> order_by_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return order;
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  const auto [pos, neg] = count_classes(scores, labels);
  const auto order = order_by_score(scores);
  // Sum of doubled average ranks of positives; stays integral and exact.
  double rank_sum2 = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double doubled_rank = static_cast<double>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) rank_sum2 += doubled_rank;
    i = j;
  }
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (rank_sum2 - p * (p + 1.0)) / (2.0 * p * n);
}

double tnr_at_tpr(std::span<const double> scores, std::span<const int> labels, double tpr) {
  const auto [pos, neg] = count_classes(scores, labels);
  std::vector<double> positives;
  positives.reserve(pos);
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (labels[i] == 1) positives.push_back(scores[i]);
  std::sort(positives.begin(), positives.end(), std::greater<>());
  std::size_t k = 1;
  while (k < pos && static_cast<double>(k) / static_cast<double>(pos) < tpr) ++k;
  const double threshold = positives[k - 1];
  std::size_t below = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (labels[i] == 0 && scores[i] < threshold) ++below;
  return static_cast<double>(below) / static_cast<double>(neg);
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  const auto [pos, neg] = count_classes(scores, labels);
  auto order = order_by_score(scores);
  std::reverse(order.begin(), order.end());
  std::vector<RocPoint> pts{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    pts.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                   static_cast<double>(tp) / static_cast<double>(pos)});
    i = j;
  }
  return pts;
}

double trapezoid_area(std::span<const RocPoint> points) {
  double area = 0;
  for (std::size_t i = 1; i < points.size(); ++i)
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  return area;
}

Split split_indices(std::span<const int> labels, std::uint64_t seed) {
  Split split;
  for (const int cls : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) members.push_back(i);
    require(!members.empty(), ErrorCode::invalid_argument,
            "split needs samples of both labels, none with label " + std::to_string(cls));
    Rng rng = make_rng(seed, "split", static_cast<std::uint64_t>(cls));
    std::shuffle(members.begin(), members.end(), rng);
    const double n = static_cast<double>(members.size());
    std::size_t counts[3] = {0, 0, 0};
    for (std::size_t j = 0; j < members.size(); ++j) {
      const double q = (static_cast<double>(j) + 0.5) / n;
      const int part = q < 0.8 ? 0 : (q < 0.9 ? 1 : 2);
      (part == 0 ? split.train : part == 1 ? split.val : split.test).push_back(members[j]);
      ++counts[part];
    }
    require(counts[0] > 0 && counts[1] > 0 && counts[2] > 0, ErrorCode::invalid_argument,
            "split would leave a part without label " + std::to_string(cls) + " samples (" +
                std::to_string(members.size()) + " available)");
  }
  for (auto* part : {&split.train, &split.val, &split.test}) std::sort(part->begin(), part->end());
  return split;
}

}  // namespace gendetect::eval
