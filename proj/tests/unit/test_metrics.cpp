#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "eval/experiment.hpp"
#include "eval/metrics.hpp"
#include "support/oracles.hpp"

using namespace gendetect;
using namespace gendetect::eval;

namespace {

struct Instance {
  std::vector<double> scores;
  std::vector<int> labels;
};

// Random scores on a coarse, exactly representable grid so ties are frequent.
Instance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(2, 1000), grid(0, 40), coin(0, 1);
  Instance in;
  const int n = size(rng);
  for (int i = 0; i < n; ++i) {
    in.labels.push_back(coin(rng));
    in.scores.push_back((grid(rng) + 4 * in.labels.back()) * 0.03125);
  }
  in.labels[0] = 0;
  in.labels[1] = 1;
  return in;
}

}  // namespace

TEST(Metrics, AurocExamples) {
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{0.5, 0.5, 0.5}, std::vector<int>{0, 1, 1}), 0.5);
  EXPECT_DOUBLE_EQ(auroc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}), 0.75);
}

TEST(Metrics, AurocSingleClassRejected) {
  EXPECT_THROW(auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), Error);
}

TEST(Metrics, AurocMatchesConcordantPairs) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 30; ++k) {
    const auto in = random_instance(rng);
    EXPECT_NEAR(auroc(in.scores, in.labels), oracle::concordant_auroc(in.scores, in.labels), 1e-12);
  }
}

TEST(Metrics, AurocProperties) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 10; ++k) {
    auto in = random_instance(rng);
    const double a = auroc(in.scores, in.labels);
    std::vector<double> mono;
    for (const double s : in.scores) mono.push_back(std::exp(3 * s) - 7);
    EXPECT_NEAR(auroc(mono, in.labels), a, 1e-12);
    std::vector<int> flipped;
    for (const int l : in.labels) flipped.push_back(1 - l);
    EXPECT_NEAR(a + auroc(in.scores, flipped), 1.0, 1e-12);
    const auto roc = roc_curve(in.scores, in.labels);
    EXPECT_NEAR(trapezoid_area(roc), a, 1e-12);
    for (std::size_t i = 1; i < roc.size(); ++i) EXPECT_GE(roc[i].fpr, roc[i - 1].fpr);
  }
}

TEST(Metrics, TnrExamples) {
  EXPECT_DOUBLE_EQ(tnr_at_tpr(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(tnr_at_tpr(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<int>{0, 0, 1, 1}), 0.0);
  std::vector<double> s{0.1, 0.2, 0.3, 0.9, 0.4};
  std::vector<int> l{0, 0, 0, 0, 1};
  for (int i = 0; i < 20; ++i) {
    s.push_back(0.5 + 0.01 * i);
    l.push_back(1);
  }
  EXPECT_DOUBLE_EQ(tnr_at_tpr(s, l, 0.95), oracle::brute_tnr(s, l, 0.95));
  EXPECT_DOUBLE_EQ(tnr_at_tpr(s, l, 0.95), 0.75);
}

TEST(Metrics, TnrMatchesBruteForce) {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 30; ++k) {
    const auto in = random_instance(rng);
    EXPECT_EQ(tnr_at_tpr(in.scores, in.labels, 0.95), oracle::brute_tnr(in.scores, in.labels, 0.95));
  }
}

TEST(Split, ProportionsAndDeterminism) {
  std::vector<int> labels(100);
  for (int i = 0; i < 100; ++i) labels[i] = i % 2;
  const auto a = split_indices(labels, 9);
  EXPECT_EQ(a.train.size(), 80u);
  EXPECT_EQ(a.val.size(), 10u);
  EXPECT_EQ(a.test.size(), 10u);
  const auto b = split_indices(labels, 9);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  std::vector<int> seen(100, 0);
  for (const auto* part : {&a.train, &a.val, &a.test})
    for (const auto i : *part) ++seen[i];
  for (const int s : seen) EXPECT_EQ(s, 1);
}

TEST(Split, StratifiedWithinOneSample) {
  std::vector<int> labels(173);
  for (int i = 0; i < 173; ++i) labels[i] = i % 3 == 0;
  const auto s = split_indices(labels, 1);
  const double ratio = std::count(labels.begin(), labels.end(), 1) / 173.0;
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    double pos = 0;
    for (const auto i : *part) pos += labels[i];
    EXPECT_LE(std::abs(pos - ratio * part->size()), 1.0);
  }
}

TEST(Split, TooFewSamplesRejected) {
  EXPECT_THROW(split_indices(std::vector<int>{0, 0, 0, 0, 1, 1}, 0), Error);
}

TEST(Report, EmptyReportWritesHeaderOnly) {
  const auto dir = std::filesystem::temp_directory_path() / "gd_test_empty_report";
  std::filesystem::remove_all(dir);
  emit_report(EvalReport{}, dir);
  EXPECT_TRUE(parse_summary(dir / "summary.csv").empty());
  std::filesystem::remove_all(dir);
}

TEST(Report, RoundTrip) {
  std::mt19937_64 rng(2);
  EvalReport r;
  r.seed = 4;
  for (const char* d : {"git", "git/median", "gradnorm"}) {
    const auto in = random_instance(rng);
    add_row(r, "fgsm", d, in.scores, in.labels, true);
    add_row(r, "ood", d, in.scores, in.labels, false);
  }
  const auto dir = std::filesystem::temp_directory_path() / "gd_test_report";
  std::filesystem::remove_all(dir);
  emit_report(r, dir);
  const auto rows = parse_summary(dir / "summary.csv");
  ASSERT_EQ(rows.size(), r.rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].setup, r.rows[i].setup);
    EXPECT_EQ(rows[i].detector, r.rows[i].detector);
    EXPECT_EQ(rows[i].auroc, r.rows[i].auroc);
    EXPECT_EQ(rows[i].tnr95, r.rows[i].tnr95);
    EXPECT_EQ(rows[i].n, r.rows[i].n);
    EXPECT_EQ(rows[i].seen, r.rows[i].seen);
    const auto roc = parse_roc(dir / "roc" / roc_filename(rows[i].setup, rows[i].detector));
    EXPECT_NEAR(trapezoid_area(roc), rows[i].auroc, 1e-6);
  }
  save_report_json(r, dir / "report.json");
  const auto back = load_report_json(dir / "report.json");
  ASSERT_EQ(back.rows.size(), r.rows.size());
  EXPECT_EQ(back.rows[3].roc, r.rows[3].roc);
  EXPECT_EQ(back.seed, 4u);
  std::filesystem::remove_all(dir);
}
