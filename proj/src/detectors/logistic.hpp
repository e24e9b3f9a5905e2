#pragma once

#include <span>
#include <vector>

#include "gradfeat/gradfeat.hpp"

namespace gendetect::detectors {

using Matrix = gradfeat::FeatureMatrix;

Matrix make_matrix(std::size_t rows, std::size_t cols);
Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows);
// Concatenates the columns of equally tall matrices.
Matrix hstack(std::span<const Matrix> parts);

struct HeadOptions {
  double learning_rate = 0.1;
  double l2 = 1e-4;
  std::size_t iterations = 500;
};

// Logistic regression over z-scored features. p = sigmoid(w . z + b) where
// z = (x - mean) / std.
struct LogisticHead {
  std::vector<double> mean, stddev, weight;
  double bias = 0;
  std::size_t trained_on = 0;

  std::size_t dim() const { return weight.size(); }
  double logit(std::span<const double> x) const;
  double predict(std::span<const double> x) const;
  std::vector<double> predict_all(const Matrix& x) const;
};

// Standard deviations are floored at 1e-8. Full-batch gradient descent on
// mean logistic loss + l2/2 * |w|^2 (bias unregularized), from zero weights.
LogisticHead train_logistic_head(const Matrix& x, std::span<const int> labels,
                                 const HeadOptions& opts = {});

}  // namespace gendetect::detectors
