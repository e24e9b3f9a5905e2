#include "detectors/logistic.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace gendetect::detectors {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Matrix make_matrix(std::size_t rows, std::size_t cols) {
  return {rows, cols, std::vector<double>(rows * cols, 0.0)};
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out = make_matrix(rows.size(), m.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < m.rows, ErrorCode::invalid_argument, "row index out of range");
    const auto r = m.row(rows[i]);
    std::copy(r.begin(), r.end(), out.values.begin() + i * m.cols);
  }
  return out;
}

Matrix hstack(std::span<const Matrix> parts) {
  require(!parts.empty(), ErrorCode::invalid_argument, "hstack needs at least one matrix");
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require(p.rows == parts[0].rows, ErrorCode::shape, "hstack row count mismatch");
    cols += p.cols;
  }
  Matrix out = make_matrix(parts[0].rows, cols);
  for (std::size_t i = 0; i < out.rows; ++i) {
    std::size_t c = 0;
    for (const auto& p : parts)
      for (const double v : p.row(i)) out.values[i * cols + c++] = v;
  }
  return out;
}

double LogisticHead::logit(std::span<const double> x) const {
  require(x.size() == dim(), ErrorCode::shape,
          "head expects " + std::to_string(dim()) + " features, got " + std::to_string(x.size()));
  double z = bias;
  for (std::size_t j = 0; j < x.size(); ++j) z += weight[j] * (x[j] - mean[j]) / stddev[j];
  return z;
}

double LogisticHead::predict(std::span<const double> x) const { return sigmoid(logit(x)); }

std::vector<double> LogisticHead::predict_all(const Matrix& x) const {
  std::vector<double> p(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) p[i] = predict(x.row(i));
  return p;
}

LogisticHead train_logistic_head(const Matrix& x, std::span<const int> labels,
                                 const HeadOptions& opts) {
  require(x.rows == labels.size(), ErrorCode::invalid_argument,
          "feature rows and labels differ in count");
  require(x.cols > 0, ErrorCode::invalid_argument, "head needs at least one feature");
  std::size_t pos = 0;
  for (const int l : labels) {
    require(l == 0 || l == 1, ErrorCode::invalid_argument, "head labels must be 0 or 1");
    pos += static_cast<std::size_t>(l);
  }
  require(pos > 0 && pos < labels.size(), ErrorCode::invalid_argument,
          "head training needs both labels present");

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMat> raw(x.values.data(), static_cast<Eigen::Index>(x.rows),
                                     static_cast<Eigen::Index>(x.cols));
  const double n = static_cast<double>(x.rows);
  const Eigen::RowVectorXd mean = raw.colwise().mean();
  const RowMat centered = raw.rowwise() - mean;
  Eigen::RowVectorXd sd = (centered.array().square().colwise().sum() / n).sqrt();
  sd = sd.cwiseMax(1e-8);
  const RowMat z = centered.array().rowwise() / sd.array();
  Eigen::VectorXd y(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) y[static_cast<Eigen::Index>(i)] = labels[i];

  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(x.cols));
  double b = 0;
  Eigen::VectorXd p(x.rows);
  for (std::size_t it = 0; it < opts.iterations; ++it) {
    const Eigen::VectorXd s = (z * w).array() + b;
    for (Eigen::Index i = 0; i < s.size(); ++i) p[i] = sigmoid(s[i]);
    const Eigen::VectorXd r = p - y;
    const Eigen::VectorXd gw = z.transpose() * r / n + opts.l2 * w;
    const double gb = r.sum() / n;
    w -= opts.learning_rate * gw;
    b -= opts.learning_rate * gb;
  }
  require(w.allFinite() && std::isfinite(b), ErrorCode::numeric, "head training diverged");

  LogisticHead h;
  h.mean.assign(mean.data(), mean.data() + mean.size());
  h.stddev.assign(sd.data(), sd.data() + sd.size());
  h.weight.assign(w.data(), w.data() + w.size());
  h.bias = b;
  h.trained_on = x.rows;
  return h;
}

}  // namespace gendetect::detectors
